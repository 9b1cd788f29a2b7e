"""Boost-invariant measure on the mass shell ``E = sqrt(k^2 + m^2)`` (units hbar = c = 1).

The invariant weight is ``dk / E`` in one spatial dimension and ``d^3k / E`` in
three. Every integral is evaluated twice: by adaptive Gauss-Kronrod quadrature
and by its closed-form antiderivative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import quad


@dataclass(frozen=True)
class MassShellSlice:
    mass: float
    k_lo: float
    k_hi: float
    spatial_dim: int = 1

    def __post_init__(self):
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise ValueError(f"mass must be positive and finite, got {self.mass!r}")
        if self.spatial_dim not in (1, 3):
            raise ValueError("spatial_dim must be 1 or 3")
        if not self.k_lo <= self.k_hi:
            raise ValueError(f"need k_lo <= k_hi, got [{self.k_lo}, {self.k_hi}]")
        if self.spatial_dim == 3 and self.k_lo < 0:
            raise ValueError("3D slices are radial shells; k_lo must be >= 0")


@dataclass(frozen=True)
class BoostParameter:
    rapidity: float

    def __post_init__(self):
        if not math.isfinite(self.rapidity):
            raise ValueError("rapidity must be finite")


def energy(k, mass: float):
    return np.hypot(k, mass)


def closed_form_measure(s: MassShellSlice) -> float:
    m = s.mass
    if s.spatial_dim == 1:
        return math.asinh(s.k_hi / m) - math.asinh(s.k_lo / m)

    def prim(k):  # 4*pi * integral of k^2 / sqrt(k^2 + m^2)
        return 2 * math.pi * (k * math.hypot(k, m) - m * m * math.asinh(k / m))

    return prim(s.k_hi) - prim(s.k_lo)


def quadrature_measure(s: MassShellSlice, epsrel: float = 1e-13) -> float:
    if s.k_lo == s.k_hi:
        return 0.0
    m = s.mass
    if s.spatial_dim == 1:
        f = lambda k: 1.0 / math.hypot(k, m)
        scale = 1.0
    else:
        f = lambda k: k * k / math.hypot(k, m)
        scale = 4 * math.pi
    # split at the mass scale so the peak near k = 0 is resolved
    pts = [p for p in (-m, 0.0, m) if s.k_lo < p < s.k_hi]
    val, _ = quad(f, s.k_lo, s.k_hi, points=pts or None, epsabs=0.0, epsrel=epsrel, limit=200)
    return scale * val


def invariant_measure(s: MassShellSlice, check: bool = True, rtol: float = 1e-9) -> float:
    """Quadrature value, cross-checked against the closed form when ``check`` is set."""
    val = quadrature_measure(s)
    if check:
        ref = closed_form_measure(s)
        if abs(val - ref) > rtol * max(abs(ref), 1e-300):
            raise ArithmeticError(f"quadrature {val!r} disagrees with closed form {ref!r}")
    return val


def naive_measure(s: MassShellSlice) -> float:
    """Lebesgue measure of the momentum region; not boost invariant (negative control)."""
    if s.spatial_dim == 1:
        return s.k_hi - s.k_lo
    return 4 * math.pi / 3 * (s.k_hi**3 - s.k_lo**3)


def boost_momentum(k, mass: float, rapidity: float):
    return k * math.cosh(rapidity) + energy(k, mass) * math.sinh(rapidity)


def boost_slice(s: MassShellSlice, boost: BoostParameter | float) -> MassShellSlice:
    if s.spatial_dim != 1:
        raise NotImplementedError("boosts are only supported for 1D slices (3D boosts break radial symmetry)")
    eta = boost.rapidity if isinstance(boost, BoostParameter) else float(boost)
    # the boost is monotone in k, so the interval maps to an interval
    return replace(s, k_lo=float(boost_momentum(s.k_lo, s.mass, eta)), k_hi=float(boost_momentum(s.k_hi, s.mass, eta)))


def divergence_scan(mass: float, spatial_dim: int, cutoffs) -> list[tuple[float, float]]:
    """``(K, omega)`` for the region ``|k| <= K`` at each cutoff."""
    cutoffs = [float(k) for k in cutoffs]
    if any(b <= a for a, b in zip(cutoffs, cutoffs[1:])):
        raise ValueError("cutoffs must be strictly increasing")
    out = []
    for K in cutoffs:
        lo = -K if spatial_dim == 1 else 0.0
        out.append((K, invariant_measure(MassShellSlice(mass, lo, K, spatial_dim))))
    return out


def asymptotic_form(mass: float, spatial_dim: int, K: float) -> float:
    """Leading large-``K`` behaviour: ``2 ln(2K/m)`` in 1D, ``2 pi K^2`` in 3D."""
    if spatial_dim == 1:
        return 2 * math.log(2 * K / mass)
    return 2 * math.pi * K * K


def scan_rows(mass: float, spatial_dim: int, cutoffs) -> list[dict]:
    """Rows for the CSV report: cutoff, quadrature, closed form, relative error."""
    rows = []
    for K, w in divergence_scan(mass, spatial_dim, cutoffs):
        lo = -K if spatial_dim == 1 else 0.0
        ref = closed_form_measure(MassShellSlice(mass, lo, K, spatial_dim))
        rows.append({"cutoff": K, "omega": w, "omega_closed_form": ref, "relative_error": abs(w - ref) / ref})
    return rows
