"""Fixed points of ``T(u) = -A^{-1} F(u)``.

The primary scheme is damped Picard iteration ``u <- (1 - theta) u + theta T(u)``
with optional Anderson mixing.  Newton's method on ``R(u) = A u + F(u)``
serves as an independent cross-check when ``F`` has no jumps.

Non-convergence is reported through :attr:`SolveReport.status`, never raised.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .elliptic import ShiftedLaplacian
from .grid import GridField

__all__ = [
    "SolverOptions",
    "SolveReport",
    "apply_T",
    "picard_solve",
    "newton_solve",
    "residual",
    "write_residual_history",
]

log = logging.getLogger(__name__)

THETA_FLOOR = 1.0 / 64.0

InitialGuess = Union[None, float, np.ndarray, GridField]


@dataclass(frozen=True)
class SolverOptions:
    theta: float = 0.5
    anderson_depth: int = 0
    tol_update: float = 1e-10
    tol_residual: float = 1e-10
    max_iter: int = 500
    initial_guess: InitialGuess = field(default=None, compare=False)
    linear_solver: str = "auto"

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")
        if self.anderson_depth < 0:
            raise ValueError("anderson_depth must be >= 0")
        if not (self.tol_update > 0 and self.tol_residual > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def start(self, A: ShiftedLaplacian) -> np.ndarray:
        g = self.initial_guess
        if g is None:
            return np.zeros(A.size)
        if isinstance(g, GridField):
            if g.domain != A.domain:
                raise ValueError("initial guess lives on a different domain")
            return g.values.copy()
        if np.ndim(g) == 0:
            return np.full(A.size, float(g))
        arr = np.asarray(g, dtype=float).ravel()
        if arr.shape != (A.size,):
            raise ValueError("initial guess has the wrong length")
        return arr.copy()

    def to_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "initial_guess"}
        g = self.initial_guess
        d["initial_guess"] = "zero" if g is None else (float(g) if np.ndim(g) == 0 else "field")
        return d


@dataclass
class SolveReport:
    method: str
    status: str
    iterations: int
    residual_history: list[float]
    update_history: list[float]
    theta_trace: list[float]
    final_update: float
    final_residual: float
    mu: Optional[float]

    @property
    def converged(self) -> bool:
        return self.status == "converged"

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "status": self.status,
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "final_update": self.final_update,
            "mu": self.mu,
            "residual_history": list(self.residual_history),
            "update_history": list(self.update_history),
            "theta_trace": list(self.theta_trace),
        }


def residual(A: ShiftedLaplacian, F, u: np.ndarray) -> np.ndarray:
    return A.matvec(u) + F(u)


def apply_T(A: ShiftedLaplacian, F, u: GridField, method: str = "auto") -> GridField:
    """``T(u) = -A^{-1} F(u)``; the discrete Green operator applied to ``-F(u)``."""
    if u.domain != A.domain:
        raise ValueError("field and operator live on different domains")
    return GridField(u.domain, -A.solve(F(u.values), method))


def _anderson_step(g_hist, f_hist):
    """Type-II Anderson mixing over the stored window.

    ``g_hist`` holds damped-map outputs and ``f_hist`` the corresponding
    fixed-point residuals ``g(u) - u``, oldest first.
    """
    dF = np.diff(np.array(f_hist), axis=0).T
    dG = np.diff(np.array(g_hist), axis=0).T
    gamma = np.linalg.lstsq(dF, f_hist[-1], rcond=None)[0]
    return g_hist[-1] - dG @ gamma


def picard_solve(A: ShiftedLaplacian, F, opts: Optional[SolverOptions] = None):
    """Damped Picard iteration for ``u = T(u)``.

    Parameters
    ----------
    A : ShiftedLaplacian
    F : callable
        Vectorised nonlinearity, usually a ``TruncatedNonlinearity``.  Any
        callable works; a raw unbounded ``f`` is allowed.
    opts : SolverOptions, optional

    Returns
    -------
    (GridField, SolveReport)
        The last iterate and an honest status: ``converged`` once both the
        sup-norm update and the sup-norm residual ``|A u + F(u)|`` are under
        tolerance, ``max_iter_reached``, or ``diverged`` on a non-finite
        iterate.

    Notes
    -----
    Whenever the residual grows, ``theta`` is halved (not below 1/64) and the
    Anderson window is cleared.
    """
    opts = opts or SolverOptions()
    u = opts.start(A)
    theta = opts.theta
    res_hist, upd_hist, thetas = [], [], []
    g_hist, f_hist = [], []
    last_update = math.inf
    prev_res = math.inf
    status = "max_iter_reached"
    it = 0

    while True:
        if not np.all(np.isfinite(u)):
            status = "diverged"
            break
        Fu = F(u)
        if not np.all(np.isfinite(Fu)):
            status = "diverged"
            break
        res = float(np.max(np.abs(A.matvec(u) + Fu), initial=0.0))
        res_hist.append(res)
        if res <= opts.tol_residual and last_update <= opts.tol_update:
            status = "converged"
            break
        if it >= opts.max_iter:
            break
        if res > prev_res and theta > THETA_FLOOR:
            theta = max(theta / 2.0, THETA_FLOOR)
            g_hist.clear()
            f_hist.clear()
        prev_res = res

        Tu = -A.solve(Fu, opts.linear_solver)
        g = (1.0 - theta) * u + theta * Tu
        if opts.anderson_depth > 0:
            g_hist.append(g)
            f_hist.append(g - u)
            if len(g_hist) > opts.anderson_depth + 1:
                g_hist.pop(0)
                f_hist.pop(0)
            new = _anderson_step(g_hist, f_hist) if len(g_hist) > 1 else g
        else:
            new = g
        last_update = float(np.max(np.abs(new - u), initial=0.0))
        upd_hist.append(last_update)
        thetas.append(theta)
        u = new
        it += 1

    log.debug("picard %s after %d iterations, residual %.3e", status, it, res_hist[-1] if res_hist else math.nan)
    report = SolveReport(
        method="picard",
        status=status,
        iterations=it,
        residual_history=res_hist,
        update_history=upd_hist,
        theta_trace=thetas,
        final_update=last_update,
        final_residual=res_hist[-1] if res_hist else math.inf,
        mu=getattr(F, "mu", None),
    )
    return GridField(A.domain, u), report


def _derivative(F, u: np.ndarray) -> np.ndarray:
    dF = getattr(F, "derivative", None)
    if dF is not None:
        return np.asarray(dF(u), dtype=float)
    eps = 1e-7 * np.maximum(1.0, np.abs(u))
    return (F(u + eps) - F(u - eps)) / (2.0 * eps)


def newton_solve(A: ShiftedLaplacian, F, opts: Optional[SolverOptions] = None):
    """Newton's method with backtracking on ``R(u) = A u + F(u)``.

    Same stopping rule and report as :func:`picard_solve`.  ``F`` must carry
    no declared discontinuities.
    """
    if not getattr(F, "is_smooth", True):
        raise NotImplementedError("newton_solve needs a nonlinearity without declared jumps")
    opts = opts or SolverOptions()
    u = opts.start(A)
    res_hist, upd_hist = [], []
    last_update = math.inf
    status = "max_iter_reached"
    it = 0

    while True:
        if not np.all(np.isfinite(u)):
            status = "diverged"
            break
        R = A.matvec(u) + F(u)
        res = float(np.max(np.abs(R), initial=0.0))
        res_hist.append(res)
        if not math.isfinite(res):
            status = "diverged"
            break
        if res <= opts.tol_residual and last_update <= opts.tol_update:
            status = "converged"
            break
        if it >= opts.max_iter:
            break

        J = (A.matrix + sp.diags(_derivative(F, u))).tocsc()
        with np.errstate(all="ignore"):
            delta = spsolve(J, -R)
        if not np.all(np.isfinite(delta)):
            status = "diverged"
            break

        r0 = float(np.linalg.norm(R))
        t, best_t, best = 1.0, 1.0, math.inf
        for _ in range(11):
            trial = u + t * delta
            rt = float(np.linalg.norm(A.matvec(trial) + F(trial)))
            if rt < best:
                best_t, best = t, rt
            if rt <= (1.0 - 1e-4 * t) * r0:
                best_t = t
                break
            t *= 0.5
        step = best_t * delta
        last_update = float(np.max(np.abs(step), initial=0.0))
        upd_hist.append(last_update)
        u = u + step
        it += 1

    report = SolveReport(
        method="newton",
        status=status,
        iterations=it,
        residual_history=res_hist,
        update_history=upd_hist,
        theta_trace=[],
        final_update=last_update,
        final_residual=res_hist[-1] if res_hist else math.inf,
        mu=getattr(F, "mu", None),
    )
    return GridField(A.domain, u), report


def write_residual_history(report: SolveReport, path) -> Path:
    """Two-column CSV ``iteration,residual``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "residual"])
        for i, r in enumerate(report.residual_history):
            w.writerow([i, repr(float(r))])
    return path
