"""Scalar nonlinearities f, their truncation F at +/-a, and assumption checks.

A :class:`Nonlinearity` is vectorised: calling it on an ndarray evaluates
elementwise.  At a declared jump point the value is the midpoint of the two
one-sided limits, which makes the map total.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

__all__ = [
    "Discontinuity",
    "Nonlinearity",
    "TruncatedNonlinearity",
    "SignReport",
    "ContinuityReport",
    "evaluate",
    "check_sign_condition",
    "check_continuity",
    "truncate",
    "sup_bound",
    "piecewise",
    "builtin_catalog",
    "get_builtin",
    "with_threshold",
]

DEFAULT_SUP_SAMPLES = 100_000


@dataclass(frozen=True)
class Discontinuity:
    point: float
    left_limit: float
    right_limit: float

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.left_limit + self.right_limit)


@dataclass(frozen=True)
class Nonlinearity:
    """The map ``f`` with its threshold ``a`` and declared jump points.

    Parameters
    ----------
    threshold_a : float
        Nonnegative level beyond which ``u f(u) >= 0`` is required.
    rule : callable
        Vectorised ``ndarray -> ndarray`` implementation of ``f``.
    discontinuities : sequence of Discontinuity
        Jump points ``u_j`` with ``|u_j| <= a``; kept sorted.
    label : str
        Short name used in reports.
    derivative : callable, optional
        Vectorised ``f'``.  Only meaningful away from jump points; when
        absent, consumers fall back to finite differences.
    """

    threshold_a: float
    rule: Callable[[np.ndarray], np.ndarray] = field(compare=False)
    discontinuities: tuple[Discontinuity, ...] = ()
    label: str = "custom"
    derivative: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)

    def __post_init__(self):
        a = float(self.threshold_a)
        if not math.isfinite(a) or a < 0:
            raise ValueError(f"threshold a must be finite and >= 0, got {self.threshold_a}")
        object.__setattr__(self, "threshold_a", a)
        discs = tuple(sorted(self.discontinuities, key=lambda d: d.point))
        for d in discs:
            if not (math.isfinite(d.left_limit) and math.isfinite(d.right_limit)):
                raise ValueError(f"one-sided limits at u={d.point} must be finite")
            if abs(d.point) > a:
                raise ValueError(
                    f"discontinuity at u={d.point} lies outside [-a, a] = [{-a}, {a}]"
                )
        points = [d.point for d in discs]
        if len(set(points)) != len(points):
            raise ValueError("duplicate discontinuity points")
        object.__setattr__(self, "discontinuities", discs)

    @property
    def is_smooth(self) -> bool:
        return not self.discontinuities

    def __call__(self, u):
        return evaluate(self, u)


def evaluate(f: Nonlinearity, u):
    """Evaluate ``f`` at a scalar or array, midpoint convention at jumps.

    Raises ``ValueError`` for non-finite input.
    """
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("nonlinearity evaluated at a non-finite argument")
    with np.errstate(over="ignore"):
        out = np.asarray(f.rule(arr), dtype=float)
    out = np.broadcast_to(out, arr.shape).copy()
    for d in f.discontinuities:
        out[arr == d.point] = d.midpoint
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class SignReport:
    passed: bool
    u_max: float
    n_samples: int
    witness: Optional[float] = None
    witness_product: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "u_max": self.u_max,
            "n_samples": self.n_samples,
            "witness": self.witness,
            "witness_product": self.witness_product,
        }


def check_sign_condition(f: Nonlinearity, u_max: float, n_samples: int = 10_000) -> SignReport:
    """Sample ``u f(u) >= 0`` on ``[-u_max, -a] U [a, u_max]``.

    On failure the witness is the sample with the most negative product.
    Only the sampled window is attested; ``f`` may be unbounded beyond it.
    """
    a = f.threshold_a
    if not u_max > a:
        raise ValueError(f"u_max={u_max} must exceed the threshold a={a}")
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    half = n_samples // 2
    u = np.concatenate(
        [np.linspace(-u_max, -a, n_samples - half), np.linspace(a, u_max, half)]
    )
    with np.errstate(over="ignore", invalid="ignore"):
        prod = u * evaluate(f, u)
    # nan counts as a violation: the sign is undefined there
    bad = np.isnan(prod) | (prod < 0)
    if not bad.any():
        return SignReport(True, float(u_max), int(n_samples))
    scored = np.where(np.isnan(prod), -np.inf, prod)
    i = int(np.argmin(scored))
    return SignReport(False, float(u_max), int(n_samples), float(u[i]), float(prod[i]))


@dataclass(frozen=True)
class ContinuityReport:
    passed: bool
    coarse_jump: float
    fine_jump: float


def check_continuity(f: Nonlinearity, u_max: float, n_samples: int = 20_000) -> ContinuityReport:
    """Heuristic continuity test of ``f`` on ``|u| >= a``.

    Compares the largest scaled jump between adjacent samples at spacing
    ``h`` and ``h/2``.  For a continuous ``f`` the largest jump must shrink
    with the spacing; a hidden jump keeps it roughly constant.
    """
    a = f.threshold_a
    if not u_max > a:
        raise ValueError(f"u_max={u_max} must exceed the threshold a={a}")

    def max_jump(n):
        worst = 0.0
        for lo, hi in ((-u_max, -a), (a, u_max)):
            u = np.linspace(lo, hi, n)
            with np.errstate(over="ignore", invalid="ignore"):
                v = evaluate(f, u)
            scale = max(1.0, float(np.nanmax(np.abs(v))))
            worst = max(worst, float(np.nanmax(np.abs(np.diff(v)))) / scale)
        return worst

    coarse = max_jump(n_samples)
    fine = max_jump(2 * n_samples - 1)
    passed = fine <= 1e-12 or fine <= 0.75 * coarse
    return ContinuityReport(passed, coarse, fine)


@dataclass(frozen=True)
class TruncatedNonlinearity:
    """``F(u) = f(clamp(u, -a, a))``, bounded by ``mu``."""

    base: Nonlinearity
    a: float
    f_at_plus_a: float
    f_at_minus_a: float
    mu: float

    @property
    def label(self) -> str:
        return self.base.label

    @property
    def is_smooth(self) -> bool:
        return self.base.is_smooth

    def __call__(self, u):
        arr = np.asarray(u, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise ValueError("nonlinearity evaluated at a non-finite argument")
        return evaluate(self.base, np.clip(arr, -self.a, self.a))

    @property
    def threshold_a(self) -> float:
        return self.a

    def as_nonlinearity(self) -> Nonlinearity:
        """``F`` viewed as a plain :class:`Nonlinearity` with the same threshold."""
        base, a = self.base, self.a
        return Nonlinearity(
            a,
            lambda u: evaluate(base, np.clip(u, -a, a)),
            base.discontinuities,
            f"{base.label}_truncated",
        )

    @property
    def derivative(self):
        if self.base.derivative is None:
            return None
        a, df = self.a, self.base.derivative

        def dF(u):
            u = np.asarray(u, dtype=float)
            return np.where(np.abs(u) < a, df(np.clip(u, -a, a)), 0.0)

        return dF


def _sup_abs(f: Nonlinearity, a: float, n_samples: int) -> float:
    if a == 0.0:
        return abs(evaluate(f, 0.0))
    # dyadic node count so that finer requests sample a superset
    m = max(1, math.ceil(math.log2(max(n_samples - 1, 1))))
    u = np.linspace(-a, a, 2**m + 1)
    vals = np.abs(evaluate(f, u))
    best = float(vals.max())
    for d in f.discontinuities:
        best = max(best, abs(d.left_limit), abs(d.right_limit))

    i = int(np.argmax(vals))
    lo, hi = u[max(i - 1, 0)], u[min(i + 1, len(u) - 1)]
    if hi > lo:
        res = minimize_scalar(
            lambda x: -abs(evaluate(f, x)),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-12 * max(1.0, a)},
        )
        best = max(best, float(-res.fun))
    return best


def sup_bound(F: TruncatedNonlinearity, n_samples: int = DEFAULT_SUP_SAMPLES) -> float:
    """Sampled ``sup |F|`` over the real line.

    ``F`` is constant outside ``[-a, a]``, so the search covers that interval,
    its endpoints, and the one-sided limits at each jump, then refines once
    around the sampled maximiser.
    """
    if n_samples < 1000:
        raise ValueError("n_samples must be at least 1000")
    return _sup_abs(F.base, F.a, n_samples)


def truncate(f: Nonlinearity, n_samples: int = DEFAULT_SUP_SAMPLES) -> TruncatedNonlinearity:
    a = f.threshold_a
    return TruncatedNonlinearity(
        base=f,
        a=a,
        f_at_plus_a=evaluate(f, a),
        f_at_minus_a=evaluate(f, -a),
        mu=_sup_abs(f, a, n_samples),
    )


def piecewise(
    table: Sequence[Sequence[float]],
    a: float,
    discontinuities: Sequence[Discontinuity] = (),
    label: str = "piecewise",
) -> Nonlinearity:
    """Piecewise-linear ``f`` through breakpoints ``(u, f(u))``.

    Each declared jump splits the table: on either side the interpolant runs
    through the breakpoints on that side and ends at the corresponding
    one-sided limit.  Beyond the outermost breakpoints the end segments are
    extended linearly.
    """
    tab = np.asarray(table, dtype=float)
    if tab.ndim != 2 or tab.shape[1] != 2 or len(tab) < 2:
        raise ValueError("piecewise table needs at least two rows of (u, f(u))")
    if not np.all(np.isfinite(tab)):
        raise ValueError("piecewise table contains non-finite entries")
    us, fs = tab[:, 0], tab[:, 1]
    if np.any(np.diff(us) <= 0):
        raise ValueError("piecewise table u values must be strictly increasing")
    discs = tuple(sorted(discontinuities, key=lambda d: d.point))
    for d in discs:
        if np.any(us == d.point):
            raise ValueError(f"table row at jump point u={d.point}; give limits in the jump record")

    # segment s spans (cuts[s], cuts[s+1]); endpoints carry one-sided limits
    cuts = [-np.inf] + [d.point for d in discs] + [np.inf]
    segments = []
    for s in range(len(cuts) - 1):
        lo, hi = cuts[s], cuts[s + 1]
        inside = (us > lo) & (us < hi)
        su, sf = list(us[inside]), list(fs[inside])
        if s > 0:
            su.insert(0, lo)
            sf.insert(0, discs[s - 1].right_limit)
        if s < len(discs):
            su.append(hi)
            sf.append(discs[s].left_limit)
        if len(su) < 2:
            raise ValueError(f"segment ({lo}, {hi}) of the piecewise table needs two nodes")
        segments.append((lo, hi, np.array(su), np.array(sf)))

    def rule(u):
        u = np.asarray(u, dtype=float)
        out = np.empty_like(u)
        for lo, hi, su, sf in segments:
            mask = (u > lo) & (u < hi) if np.isfinite(lo) else (u < hi)
            if not mask.any():
                continue
            x = u[mask]
            y = np.interp(x, su, sf)
            left = x < su[0]
            y[left] = sf[0] + (x[left] - su[0]) * (sf[1] - sf[0]) / (su[1] - su[0])
            right = x > su[-1]
            y[right] = sf[-1] + (x[right] - su[-1]) * (sf[-1] - sf[-2]) / (su[-1] - su[-2])
            out[mask] = y
        for d in discs:
            out[u == d.point] = d.midpoint
        return out

    return Nonlinearity(a, rule, discs, label)


def _cubic_step_rule(u):
    return u**3 - 1.0 + 0.25 * np.sign(u - 0.25)


def builtin_catalog() -> list[Nonlinearity]:
    """Reference nonlinearities satisfying the sign condition beyond ``a``."""
    jump = 0.25
    base = jump**3 - 1.0
    return [
        Nonlinearity(1.0, lambda u: u**3 - 1.0, (), "cubic_shift", lambda u: 3.0 * u**2),
        Nonlinearity(0.0, np.sinh, (), "sinh", np.cosh),
        Nonlinearity(math.log(2.0), lambda u: np.exp(u) - 2.0, (), "exp_shift", np.exp),
        Nonlinearity(
            1.0,
            _cubic_step_rule,
            (Discontinuity(jump, base - 0.25, base + 0.25),),
            "cubic_step",
            lambda u: 3.0 * u**2,
        ),
    ]


def get_builtin(label: str) -> Nonlinearity:
    for f in builtin_catalog():
        if f.label == label:
            return f
    names = ", ".join(f.label for f in builtin_catalog())
    raise KeyError(f"unknown builtin nonlinearity {label!r} (known: {names})")


def with_threshold(f: Nonlinearity, a: float) -> Nonlinearity:
    """Copy of ``f`` with a different threshold (re-validated)."""
    return replace(f, threshold_a=a)
