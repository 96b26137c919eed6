"""TOML run configuration: parsing, validation and writing.

Schema (all sections optional except ``[domain]``, ``[equation]`` and
``[nonlinearity]``)::

    [domain]
    dim = 1                      # 1, 2 or 3
    cells = [128]                # or a single integer for every axis
    lengths = [1.0]              # default 1.0 per axis

    [equation]
    k = 1.0

    [nonlinearity]
    builtin = "cubic_shift"      # or give a + table (+ discontinuities)
    # a = 1.0
    # table = [[-2.0, -9.0], [2.0, 7.0]]
    # discontinuities = [{u = 0.25, left = -1.23, right = -0.73}]
    # label = "mine"
    # sign_check_u_max = 100.0

    [solver]
    theta = 0.5
    anderson_depth = 0
    tol_update = 1e-10
    tol_residual = 1e-10
    max_iter = 500
    initial_guess = "zero"       # or a number
    linear_solver = "auto"       # auto | direct | cg

    [output]
    directory = "out"
    figures = true

    [certificates]
    residual_tol = 1e-8
    apriori_tol = 1e-10
    energy_tol = 1e-10
    # tol_amp = 1e-3             # default max(10 h^2, 1e-10)

    [kernel]
    sources = 5
    seed = 0
    slack = 0.05
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional

import tomli_w

from .fixed_point import SolverOptions
from .grid import BoxDomain
from .nonlinearity import Discontinuity, Nonlinearity, builtin_catalog, get_builtin, piecewise, with_threshold

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "NonlinearitySpec",
    "OutputSpec",
    "CertificateSpec",
    "KernelSpec",
    "RunConfig",
    "parse_config",
    "config_from_dict",
    "write_config",
]


class ConfigError(ValueError):
    """Every validation problem found in a config, not just the first."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class NonlinearitySpec:
    builtin: Optional[str] = None
    a: Optional[float] = None
    table: Optional[tuple[tuple[float, float], ...]] = None
    discontinuities: tuple[Discontinuity, ...] = ()
    label: Optional[str] = None
    sign_check_u_max: Optional[float] = None

    def build(self) -> Nonlinearity:
        if self.builtin is not None:
            f = get_builtin(self.builtin)
            return f if self.a is None else with_threshold(f, self.a)
        return piecewise(self.table, self.a, self.discontinuities, self.label or "piecewise")

    def u_max(self, a: float) -> float:
        if self.sign_check_u_max is not None:
            return self.sign_check_u_max
        return max(100.0, 10.0 * a)

    def to_dict(self) -> dict:
        d: dict[str, Any] = {}
        if self.builtin is not None:
            d["builtin"] = self.builtin
        if self.a is not None:
            d["a"] = self.a
        if self.table is not None:
            d["table"] = [list(r) for r in self.table]
        if self.discontinuities:
            d["discontinuities"] = [
                {"u": x.point, "left": x.left_limit, "right": x.right_limit}
                for x in self.discontinuities
            ]
        if self.label is not None:
            d["label"] = self.label
        if self.sign_check_u_max is not None:
            d["sign_check_u_max"] = self.sign_check_u_max
        return d


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "out"
    figures: bool = True

    @property
    def path(self) -> Path:
        return Path(self.directory)

    @property
    def solution_csv(self) -> Path:
        return self.path / "solution.csv"

    @property
    def report_json(self) -> Path:
        return self.path / "report.json"

    @property
    def residual_csv(self) -> Path:
        return self.path / "residuals.csv"

    def to_dict(self) -> dict:
        return {"directory": self.directory, "figures": self.figures}


@dataclass(frozen=True)
class CertificateSpec:
    residual_tol: float = 1e-8
    apriori_tol: float = 1e-10
    energy_tol: float = 1e-10
    tol_amp: Optional[float] = None

    def to_dict(self) -> dict:
        d = {"residual_tol": self.residual_tol, "apriori_tol": self.apriori_tol, "energy_tol": self.energy_tol}
        if self.tol_amp is not None:
            d["tol_amp"] = self.tol_amp
        return d


@dataclass(frozen=True)
class KernelSpec:
    sources: int = 5
    seed: int = 0
    slack: float = 0.05

    def to_dict(self) -> dict:
        return {"sources": self.sources, "seed": self.seed, "slack": self.slack}


@dataclass(frozen=True)
class RunConfig:
    domain: BoxDomain
    k: float
    nonlinearity: NonlinearitySpec
    solver: SolverOptions = field(default_factory=SolverOptions)
    output: OutputSpec = field(default_factory=OutputSpec)
    certificates: CertificateSpec = field(default_factory=CertificateSpec)
    kernel: KernelSpec = field(default_factory=KernelSpec)

    def to_dict(self) -> dict:
        solver = self.solver.to_dict()
        return {
            "domain": self.domain.to_dict(),
            "equation": {"k": self.k},
            "nonlinearity": self.nonlinearity.to_dict(),
            "solver": solver,
            "output": self.output.to_dict(),
            "certificates": self.certificates.to_dict(),
            "kernel": self.kernel.to_dict(),
        }

    def with_cells(self, cells) -> "RunConfig":
        return replace(self, domain=BoxDomain(self.domain.lengths, tuple(cells)))


_SECTION_KEYS = {
    "domain": {"dim", "cells", "lengths"},
    "equation": {"k"},
    "nonlinearity": {"builtin", "a", "table", "discontinuities", "label", "sign_check_u_max"},
    "solver": {"theta", "anderson_depth", "tol_update", "tol_residual", "max_iter", "initial_guess", "linear_solver"},
    "output": {"directory", "figures"},
    "certificates": {"residual_tol", "apriori_tol", "energy_tol", "tol_amp"},
    "kernel": {"sources", "seed", "slack"},
}
_REQUIRED = ("domain", "equation", "nonlinearity")


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _domain(sec: dict, errors: list[str]) -> Optional[BoxDomain]:
    dim = sec.get("dim")
    if dim not in (1, 2, 3) or not _is_int(dim):
        errors.append(f"domain.dim must be 1, 2 or 3, got {dim!r}")
        return None
    cells = sec.get("cells")
    if _is_int(cells):
        cells = [cells] * dim
    if not (isinstance(cells, list) and len(cells) == dim and all(_is_int(c) for c in cells)):
        errors.append(f"domain.cells must be an integer or a list of {dim} integers")
        return None
    if any(c < 2 for c in cells):
        errors.append("domain.cells must be >= 2 on every axis")
        return None
    lengths = sec.get("lengths", [1.0] * dim)
    if _is_num(lengths):
        lengths = [lengths] * dim
    if not (isinstance(lengths, list) and len(lengths) == dim and all(_is_num(x) and x > 0 for x in lengths)):
        errors.append(f"domain.lengths must be a positive number or a list of {dim} positive numbers")
        return None
    return BoxDomain(tuple(float(x) for x in lengths), tuple(cells))


def _nonlinearity(sec: dict, errors: list[str]) -> Optional[NonlinearitySpec]:
    n0 = len(errors)
    builtin = sec.get("builtin")
    a = sec.get("a")
    table = sec.get("table")
    if a is not None and not _is_num(a):
        errors.append("nonlinearity.a must be a finite number")
        a = None
    elif a is not None and a < 0:
        errors.append(f"nonlinearity.a must be >= 0, got {a}")
    if builtin is not None:
        known = [f.label for f in builtin_catalog()]
        if builtin not in known:
            errors.append(f"unknown builtin nonlinearity {builtin!r} (known: {', '.join(known)})")
        if table is not None:
            errors.append("nonlinearity: give either builtin or table, not both")
    else:
        if table is None:
            errors.append("nonlinearity: need builtin = <label> or a piecewise table")
        if a is None:
            errors.append("nonlinearity.a is required for a piecewise table")
    if table is not None:
        ok = (
            isinstance(table, list)
            and len(table) >= 2
            and all(isinstance(r, list) and len(r) == 2 and all(_is_num(v) for v in r) for r in table)
        )
        if not ok:
            errors.append("nonlinearity.table must be a list of at least two [u, f(u)] pairs")
            table = None
        elif any(t1[0] >= t2[0] for t1, t2 in zip(table, table[1:])):
            errors.append("nonlinearity.table u values must be strictly increasing")

    discs = []
    for i, rec in enumerate(sec.get("discontinuities", [])):
        if not (isinstance(rec, dict) and set(rec) == {"u", "left", "right"} and all(_is_num(v) for v in rec.values())):
            errors.append(f"nonlinearity.discontinuities[{i}] must be {{u, left, right}} finite numbers")
            continue
        if a is not None and _is_num(a) and abs(rec["u"]) > a:
            errors.append(
                f"nonlinearity.discontinuities[{i}]: u_j = {rec['u']} lies outside [-a, a] with a = {a}"
            )
        discs.append(Discontinuity(float(rec["u"]), float(rec["left"]), float(rec["right"])))
    if discs and builtin is not None:
        errors.append("nonlinearity.discontinuities only apply to piecewise tables")
    u_max = sec.get("sign_check_u_max")
    if u_max is not None and not (_is_num(u_max) and u_max > 0):
        errors.append("nonlinearity.sign_check_u_max must be a positive number")
    label = sec.get("label")
    if label is not None and not isinstance(label, str):
        errors.append("nonlinearity.label must be a string")
    if len(errors) > n0:
        return None

    spec = NonlinearitySpec(
        builtin=builtin,
        a=None if a is None else float(a),
        table=None if table is None else tuple((float(u), float(v)) for u, v in table),
        discontinuities=tuple(discs),
        label=label,
        sign_check_u_max=None if u_max is None else float(u_max),
    )
    try:
        f = spec.build()
    except ValueError as exc:
        errors.append(f"nonlinearity: {exc}")
        return None
    if spec.u_max(f.threshold_a) <= f.threshold_a:
        errors.append("nonlinearity.sign_check_u_max must exceed a")
    return spec


def _solver(sec: dict, errors: list[str]) -> Optional[SolverOptions]:
    kw = {}
    n0 = len(errors)
    for key in ("theta", "tol_update", "tol_residual"):
        if key in sec:
            if not _is_num(sec[key]):
                errors.append(f"solver.{key} must be a number")
            else:
                kw[key] = float(sec[key])
    for key in ("anderson_depth", "max_iter"):
        if key in sec:
            if not _is_int(sec[key]):
                errors.append(f"solver.{key} must be an integer")
            else:
                kw[key] = sec[key]
    if "initial_guess" in sec:
        g = sec["initial_guess"]
        if g == "zero":
            kw["initial_guess"] = None
        elif _is_num(g):
            kw["initial_guess"] = float(g)
        else:
            errors.append('solver.initial_guess must be "zero" or a number')
    if "linear_solver" in sec:
        if sec["linear_solver"] not in ("auto", "direct", "cg"):
            errors.append("solver.linear_solver must be auto, direct or cg")
        else:
            kw["linear_solver"] = sec["linear_solver"]
    if len(errors) > n0:
        return None
    try:
        return SolverOptions(**kw)
    except ValueError as exc:
        errors.append(f"solver: {exc}")
        return None


def config_from_dict(data: dict) -> RunConfig:
    """Validate a parsed config mapping; raises :class:`ConfigError`."""
    errors: list[str] = []
    for name in data:
        if name not in _SECTION_KEYS:
            errors.append(f"unknown section [{name}]")
    for name in _REQUIRED:
        if name not in data:
            errors.append(f"missing section [{name}]")
    for name, keys in _SECTION_KEYS.items():
        sec = data.get(name, {})
        if not isinstance(sec, dict):
            errors.append(f"[{name}] must be a table")
            continue
        for key in sec:
            if key not in keys:
                errors.append(f"unknown key {name}.{key}")

    def section(name):
        sec = data.get(name, {})
        return sec if isinstance(sec, dict) else {}

    domain = _domain(section("domain"), errors) if "domain" in data else None

    k = section("equation").get("k")
    if "equation" in data:
        if not _is_num(k):
            errors.append("equation.k must be a number")
        elif k <= 0:
            errors.append("k must be positive")

    nl = _nonlinearity(section("nonlinearity"), errors) if "nonlinearity" in data else None
    solver = _solver(section("solver"), errors)

    out = section("output")
    if not isinstance(out.get("directory", "out"), str):
        errors.append("output.directory must be a string")
    if not isinstance(out.get("figures", True), bool):
        errors.append("output.figures must be true or false")

    cert = section("certificates")
    for key in ("residual_tol", "apriori_tol", "energy_tol", "tol_amp"):
        if key in cert and not (_is_num(cert[key]) and cert[key] >= 0):
            errors.append(f"certificates.{key} must be a nonnegative number")

    kern = section("kernel")
    if "sources" in kern and not (_is_int(kern["sources"]) and kern["sources"] >= 1):
        errors.append("kernel.sources must be a positive integer")
    if "seed" in kern and not _is_int(kern["seed"]):
        errors.append("kernel.seed must be an integer")
    if "slack" in kern and not (_is_num(kern["slack"]) and kern["slack"] >= 0):
        errors.append("kernel.slack must be a nonnegative number")

    if errors:
        raise ConfigError(errors)

    return RunConfig(
        domain=domain,
        k=float(k),
        nonlinearity=nl,
        solver=solver,
        output=OutputSpec(**out),
        certificates=CertificateSpec(**{k_: float(v) for k_, v in cert.items()}),
        kernel=KernelSpec(**kern),
    )


def parse_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    return config_from_dict(data)


def write_config(config: RunConfig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        tomli_w.dump(config.to_dict(), fh)
    return path
