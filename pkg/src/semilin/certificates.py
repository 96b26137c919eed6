"""Post-hoc checks of a computed field against the proven bounds.

Every check here recomputes what it needs from ``(A, F, u)`` and never
trusts solver bookkeeping.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .elliptic import ShiftedLaplacian
from .grid import GridField, positive_part, sup_norm

__all__ = [
    "Check",
    "EnergyTerms",
    "ProbeRecord",
    "CertificateReport",
    "default_tol_amp",
    "check_residual",
    "check_apriori_sup",
    "check_amplitude_bound",
    "energy_identity_check",
    "maximum_principle_probe",
    "certify",
]


@dataclass(frozen=True)
class Check:
    """A pass/fail record; ``passed`` is derived from ``margin``."""

    name: str
    margin: float
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.margin >= 0)

    def to_dict(self) -> dict:
        return {"pass": self.passed, "margin": self.margin, "details": self.details}


def default_tol_amp(u: GridField) -> float:
    """Discretisation slack ``max(10 h^2, 1e-10)`` for the amplitude bound."""
    return max(10.0 * u.domain.h_max**2, 1e-10)


def check_residual(A: ShiftedLaplacian, F, u: GridField, tol: float = 1e-8) -> Check:
    r = float(np.max(np.abs(A.matvec(u.values) + F(u.values)), initial=0.0))
    return Check("residual", tol - r, {"residual_sup": r, "tol": tol})


def check_apriori_sup(u: GridField, mu: float, k: float, tol: float = 0.0) -> Check:
    """``sup|u| <= mu / k^2 (+ tol)``."""
    if mu < 0 or k <= 0:
        raise ValueError("need mu >= 0 and k > 0")
    bound = mu / k**2
    s = sup_norm(u)
    return Check("apriori_sup", bound + tol - s, {"sup_u": s, "bound": bound, "tol": tol})


def check_amplitude_bound(u: GridField, a: float, tol_amp: Optional[float] = None) -> Check:
    """``sup|u| <= a + tol_amp``."""
    if a < 0:
        raise ValueError("a must be nonnegative")
    if tol_amp is None:
        tol_amp = default_tol_amp(u)
    s = sup_norm(u)
    return Check("amplitude", a + tol_amp - s, {"sup_u": s, "a": a, "tol_amp": tol_amp})


@dataclass(frozen=True)
class EnergyTerms:
    """Discrete terms of the energy identity tested against ``(v - a)_+``.

    ``upper`` uses ``v = u``; ``lower`` uses ``v = -u`` (equivalently the
    upper identity for the reflected problem), so every term is nonnegative
    at an exact discrete solution.  Each triple is
    ``(gradient, mass, nonlinearity)``.
    """

    upper: tuple[float, float, float]
    lower: tuple[float, float, float]

    def values(self) -> list[float]:
        return [*self.upper, *self.lower]

    def max_abs(self) -> float:
        return max(abs(v) for v in self.values())

    def to_dict(self) -> dict:
        keys = ("gradient", "mass", "nonlinearity")
        return {
            "upper": dict(zip(keys, self.upper)),
            "lower": dict(zip(keys, self.lower)),
        }


def _edge_gradient_pairing(u: GridField, w: GridField) -> float:
    """Sum over all grid edges of ``D+u * D+w * cell volume``.

    Uses full arrays so edges touching the zero boundary are included; this
    makes the sum equal ``sum((-Lap_h u) * w) * volume`` exactly in exact
    arithmetic.
    """
    d = u.domain
    U, W = u.full(), w.full()
    total = 0.0
    for axis, h in enumerate(d.spacing):
        total += float(np.sum(np.diff(U, axis=axis) * np.diff(W, axis=axis))) / h**2
    return total * d.cell_volume


def _terms(A: ShiftedLaplacian, Fv: np.ndarray, v: GridField, a: float):
    w = positive_part(v, a)
    vol = v.domain.cell_volume
    grad = _edge_gradient_pairing(v, w)
    mass = float(A.k**2 * np.dot(v.values, w.values)) * vol
    nonlin = float(np.dot(Fv, w.values)) * vol
    return (grad, mass, nonlin)


def energy_identity_check(A: ShiftedLaplacian, F, u: GridField, a: float) -> EnergyTerms:
    if u.domain != A.domain:
        raise ValueError("field and operator live on different domains")
    Fu = F(u.values)
    upper = _terms(A, Fu, u, a)
    lower = _terms(A, -Fu, -u, a)
    return EnergyTerms(upper, lower)


@dataclass(frozen=True)
class ProbeRecord:
    """Equation terms at an extremum lying outside ``[-a, a]``.

    For the maximum, ``minus_laplacian``, ``mass`` and ``nonlinearity`` are
    the terms of ``-Lap_h u + k^2 u + f(u)`` at that node.  For the minimum
    they are negated so that, in both cases, a positive ``total`` shows
    the equation cannot hold there.
    """

    kind: str
    node: int
    u_value: float
    minus_laplacian: float
    mass: float
    nonlinearity: float

    @property
    def total(self) -> float:
        return self.minus_laplacian + self.mass + self.nonlinearity

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "node": self.node,
            "u": self.u_value,
            "minus_laplacian": self.minus_laplacian,
            "k2u": self.mass,
            "f_u": self.nonlinearity,
            "total": self.total,
        }


def maximum_principle_probe(A: ShiftedLaplacian, f, u: GridField, a: float) -> list[ProbeRecord]:
    """Inspect the extrema of ``u`` that escape ``[-a, a]``.

    ``f`` is the raw nonlinearity.  Returns an empty list when
    ``|u| <= a`` everywhere.
    """
    vals = u.values
    out = []
    if vals.size == 0:
        return out
    Au = A.matvec(vals)
    k2 = A.k**2
    i = int(np.argmax(vals))
    if vals[i] > a:
        out.append(ProbeRecord("max", i, float(vals[i]), float(Au[i] - k2 * vals[i]),
                               float(k2 * vals[i]), float(f(vals[i]))))
    j = int(np.argmin(vals))
    if vals[j] < -a:
        out.append(ProbeRecord("min", j, float(vals[j]), float(-(Au[j] - k2 * vals[j])),
                               float(-k2 * vals[j]), float(-f(vals[j]))))
    return out


@dataclass
class CertificateReport:
    residual: Check
    apriori_sup: Check
    amplitude: Check
    energy: EnergyTerms
    energy_tol: float
    probe: list[ProbeRecord]

    @property
    def energy_ok(self) -> bool:
        return self.energy.max_abs() <= self.energy_tol

    @property
    def passed(self) -> bool:
        return (
            self.residual.passed
            and self.apriori_sup.passed
            and self.amplitude.passed
            and self.energy_ok
        )

    def to_dict(self) -> dict:
        return {
            "pass": self.passed,
            "residual": self.residual.to_dict(),
            "apriori_sup": self.apriori_sup.to_dict(),
            "amplitude": self.amplitude.to_dict(),
            "energy": {
                "pass": self.energy_ok,
                "margin": self.energy_tol - self.energy.max_abs(),
                "details": self.energy.to_dict(),
            },
            "max_principle": {
                "pass": not self.probe,
                "margin": None,
                "details": [p.to_dict() for p in self.probe],
            },
        }


def certify(
    A: ShiftedLaplacian,
    F,
    u: GridField,
    residual_tol: float = 1e-8,
    apriori_tol: float = 1e-10,
    tol_amp: Optional[float] = None,
    energy_tol: float = 1e-10,
) -> CertificateReport:
    """Run every check on ``u`` for the truncated nonlinearity ``F``."""
    return CertificateReport(
        residual=check_residual(A, F, u, residual_tol),
        apriori_sup=check_apriori_sup(u, F.mu, A.k, apriori_tol),
        amplitude=check_amplitude_bound(u, F.a, tol_amp),
        energy=energy_identity_check(A, F, u, F.a),
        energy_tol=energy_tol,
        probe=maximum_principle_probe(A, F.base, u, F.a),
    )
