"""Run orchestration: solve and certify, convergence studies, kernel checks.

Each entry point writes a machine-readable JSON report in every outcome and
carries an exit code: 0 success, 1 validation error, 2 non-convergence,
3 certificate failure.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .certificates import CertificateReport, certify
from .config import RunConfig
from .elliptic import (
    KernelReport,
    assemble,
    green_kernel_column,
    kernel_profile,
    random_sources,
    verify_kernel_bound,
    yukawa_mass,
)
from .fixed_point import SolveReport, picard_solve, write_residual_history
from .grid import BoxDomain, GridField, common_sup_difference, sup_norm, write_csv
from .nonlinearity import SignReport, check_sign_condition, truncate

__all__ = [
    "EXIT_OK",
    "EXIT_INVALID",
    "EXIT_NOT_CONVERGED",
    "EXIT_CERTIFICATE",
    "RunReport",
    "StudyReport",
    "KernelCheckReport",
    "run_solve",
    "run_convergence_study",
    "run_kernel_check",
]

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NOT_CONVERGED = 2
EXIT_CERTIFICATE = 3

YUKAWA_MASS_RTOL = 1e-3


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj)!r}")


def _clean(obj):
    """Replace non-finite floats so the JSON stays strict."""
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _write_json(data: dict, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_clean(data), fh, indent=2, default=_json_default, allow_nan=False)
        fh.write("\n")
    return path


def _run_hash(config: dict, solve: Optional[dict], certificates: Optional[dict], u: Optional[GridField]) -> str:
    h = hashlib.sha256()
    h.update(__version__.encode())
    payload = {"config": config, "solve": solve, "certificates": certificates}
    h.update(json.dumps(_clean(payload), sort_keys=True, default=_json_default).encode())
    if u is not None:
        h.update(np.ascontiguousarray(u.values).tobytes())
    return h.hexdigest()


@dataclass
class RunReport:
    config: RunConfig
    sign_condition: Optional[SignReport]
    solve: Optional[SolveReport]
    certificates: Optional[CertificateReport]
    solution: Optional[GridField] = field(default=None, repr=False)
    timings: dict = field(default_factory=dict)
    exit_code: int = EXIT_OK
    message: str = ""
    run_hash: str = ""
    artifacts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "version": __version__,
            "config": self.config.to_dict(),
            "sign_condition": self.sign_condition.to_dict() if self.sign_condition else None,
            "solve": self.solve.to_dict() if self.solve else None,
            "certificates": self.certificates.to_dict() if self.certificates else None,
            "timings": self.timings,
            "exit_code": self.exit_code,
            "message": self.message,
            "artifacts": self.artifacts,
            "hash": self.run_hash,
        }


def _solve_and_certify(config: RunConfig):
    """Truncate, sign-check, assemble, solve, certify.  No file output."""
    timings = {}
    t0 = time.perf_counter()
    f = config.nonlinearity.build()
    sign = check_sign_condition(f, config.nonlinearity.u_max(f.threshold_a))
    F = truncate(f)
    timings["setup"] = time.perf_counter() - t0
    if not sign.passed:
        return f, F, sign, None, None, None, timings

    t0 = time.perf_counter()
    A = assemble(config.domain, config.k)
    u, solve = picard_solve(A, F, config.solver)
    timings["solve"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    cs = config.certificates
    cert = certify(A, F, u, cs.residual_tol, cs.apriori_tol, cs.tol_amp, cs.energy_tol)
    timings["certify"] = time.perf_counter() - t0
    return f, F, sign, u, solve, cert, timings


def run_solve(config: RunConfig, write: bool = True) -> RunReport:
    """Solve, certify and persist one configured run.

    Writes ``solution.csv``, ``residuals.csv``, ``report.json`` and (if
    enabled) figures into ``config.output.directory``.  The report is
    written even when the sign condition fails or the solve does not
    converge.
    """
    f, F, sign, u, solve, cert, timings = _solve_and_certify(config)
    report = RunReport(config, sign, solve, cert, u, timings)

    if not sign.passed:
        report.exit_code = EXIT_INVALID
        report.message = (
            f"sign condition u*f(u) >= 0 fails for |u| >= a: witness u={sign.witness:g}, "
            f"u*f(u)={sign.witness_product:g}"
        )
    elif not solve.converged:
        report.exit_code = EXIT_NOT_CONVERGED
        report.message = f"fixed-point iteration {solve.status} after {solve.iterations} iterations"
    elif not cert.passed:
        report.exit_code = EXIT_CERTIFICATE
        report.message = "certificate failure"
    else:
        report.message = "converged; all certificates pass"

    report.run_hash = _run_hash(
        config.to_dict(),
        solve.to_dict() if solve else None,
        cert.to_dict() if cert else None,
        u,
    )

    if write:
        out = config.output
        if u is not None:
            report.artifacts["solution_csv"] = str(write_csv(u, out.solution_csv))
            report.artifacts["residual_csv"] = str(write_residual_history(solve, out.residual_csv))
            if out.figures:
                from .plotting import plot_residual_history, plot_solution

                report.artifacts["solution_png"] = str(
                    plot_solution(u, out.path / "solution.png", F.a, f.label)
                )
                report.artifacts["residual_png"] = str(
                    plot_residual_history(solve.residual_history, out.path / "residuals.png", config.solver.tol_residual)
                )
        report.artifacts["report_json"] = str(out.report_json)
        _write_json(report.to_dict(), out.report_json)
    log.info("%s (exit %d)", report.message, report.exit_code)
    return report


@dataclass
class StudyReport:
    cells: list[tuple[int, ...]]
    h: list[float]
    statuses: list[str]
    sup_u: list[float]
    overshoot: list[float]
    tol_amp: list[float]
    differences: list[float]
    orders: list[float]
    complete: bool
    message: str = ""

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.complete else EXIT_NOT_CONVERGED

    def to_dict(self) -> dict:
        return {
            "complete": self.complete,
            "message": self.message,
            "levels": [
                {"cells": list(c), "h": h, "status": s, "sup_u": m, "overshoot": o, "tol_amp": t}
                for c, h, s, m, o, t in zip(self.cells, self.h, self.statuses, self.sup_u, self.overshoot, self.tol_amp)
            ],
            "differences": self.differences,
            "observed_orders": self.orders,
        }


def run_convergence_study(config: RunConfig, levels: int = 4, write: bool = True) -> StudyReport:
    """Self-convergence study over ``levels`` grids, each doubling the cells.

    ``differences[j]`` is the sup difference between levels ``j`` and
    ``j + 1`` on the coarse nodes; ``orders[j] = log2(d_j / d_{j+1})``.
    Also tracks the amplitude overshoot ``max(0, sup|u| - a)`` per level.
    """
    if levels < 3:
        raise ValueError(f"a convergence study needs at least 3 levels, got {levels}")
    f = config.nonlinearity.build()
    sign = check_sign_condition(f, config.nonlinearity.u_max(f.threshold_a))
    if not sign.passed:
        raise ValueError(f"sign condition fails at u={sign.witness:g}")
    F = truncate(f)

    domain = config.domain
    fields, cells, hs, statuses, sups, overs, tols = [], [], [], [], [], [], []
    for _ in range(levels):
        A = assemble(domain, config.k)
        u, rep = picard_solve(A, F, config.solver)
        fields.append(u)
        cells.append(domain.cells)
        hs.append(domain.h_max)
        statuses.append(rep.status)
        s = sup_norm(u)
        sups.append(s)
        overs.append(max(0.0, s - F.a))
        tols.append(max(10.0 * domain.h_max**2, 1e-10))
        domain = domain.refine(2)

    complete = all(s == "converged" for s in statuses)
    diffs = [common_sup_difference(fields[j], fields[j + 1]) for j in range(levels - 1)]
    orders = [
        math.log2(diffs[j] / diffs[j + 1]) if diffs[j] > 0 and diffs[j + 1] > 0 else math.nan
        for j in range(levels - 2)
    ]
    msg = "all levels converged" if complete else "incomplete: some levels did not converge"
    study = StudyReport(cells, hs, statuses, sups, overs, tols, diffs, orders, complete, msg)

    if write:
        out = config.output.path
        _write_json({"config": config.to_dict(), "study": study.to_dict()}, out / "study.json")
        with open(out / "study.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "h", "sup_u", "overshoot", "difference_to_next"])
            for j in range(levels):
                w.writerow([j, repr(hs[j]), repr(sups[j]), repr(overs[j]), repr(diffs[j]) if j < len(diffs) else ""])
        if config.output.figures:
            from .plotting import plot_convergence

            plot_convergence(hs[:-1], diffs, out / "convergence.png")
    return study


@dataclass
class KernelCheckReport:
    k: float
    cells: tuple[int, ...]
    sources: list[KernelReport]
    yukawa_mass: float
    yukawa_mass_expected: float

    @property
    def yukawa_mass_ok(self) -> bool:
        return abs(self.yukawa_mass - self.yukawa_mass_expected) <= YUKAWA_MASS_RTOL * self.yukawa_mass_expected

    @property
    def passed(self) -> bool:
        return self.yukawa_mass_ok and all(s.passed for s in self.sources)

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.passed else EXIT_CERTIFICATE

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "k": self.k,
            "cells": list(self.cells),
            "sources": [s.to_dict() for s in self.sources],
            "yukawa_mass": {
                "pass": self.yukawa_mass_ok,
                "value": self.yukawa_mass,
                "expected": self.yukawa_mass_expected,
                "rtol": YUKAWA_MASS_RTOL,
            },
        }


def run_kernel_check(
    domain: BoxDomain,
    k: float,
    sources: int | Sequence[int] = 5,
    slack: float = 0.05,
    seed: int = 0,
    output_dir=None,
    figures: bool = True,
) -> KernelCheckReport:
    """Kernel domination at several sources plus the ``1/k^2`` mass check.

    ``sources`` is either a count (drawn with ``seed``) or explicit interior
    node indices.
    """
    if domain.dim != 3:
        raise NotImplementedError("kernel-check needs a three-dimensional domain")
    A = assemble(domain, k)
    idx = random_sources(domain, sources, seed) if isinstance(sources, int) else [int(s) for s in sources]
    reports = [verify_kernel_bound(A, s, slack) for s in idx]
    report = KernelCheckReport(k, domain.cells, reports, yukawa_mass(k), 1.0 / k**2)
    if output_dir is not None:
        out = Path(output_dir)
        _write_json(report.to_dict(), out / "kernel_report.json")
        if figures and idx:
            from .plotting import plot_kernel_profile

            col = green_kernel_column(A, idx[0])
            r, g = kernel_profile(A, idx[0], col)
            plot_kernel_profile(r, g, k, out / "kernel_profile.png", 2.0 * domain.h_max)
    return report
