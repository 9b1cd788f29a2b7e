"""Weighted Kraus families as completely positive trace-preserving maps.

A family is a finite list of ``(weight, K)`` pairs with
``sum_i weight_i K_i^dag K_i = 1``. Weights stand in for a discretized
measure over branch labels; most code works with the *effective* operators
``sqrt(weight) * K``, exposed as :attr:`KrausFamily.effective`.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .linops import (
    DensityOperator,
    DimensionError,
    as_density,
    as_matrix,
    check_dim,
    purity,
)

COMPLETENESS_TOL = 1e-10


class IncompleteFamilyError(ValueError):
    """A Kraus family failed the completeness check."""

    def __init__(self, residual: float, label: str = ""):
        self.residual = residual
        super().__init__(f"Kraus family {label!r} is incomplete: residual {residual:.3e} > {COMPLETENESS_TOL:.0e}")


@dataclass(frozen=True)
class ChannelReport:
    completeness_residual: float
    branch_count: int
    is_unitary_family: bool
    tolerance: float = COMPLETENESS_TOL

    @property
    def passes(self) -> bool:
        return self.completeness_residual <= self.tolerance


@dataclass(frozen=True, eq=False)
class KrausFamily:
    """Immutable weighted Kraus family.

    Construction checks completeness unless ``check=False``; an unchecked
    family can still be inspected with :func:`verify_completeness` but is
    refused by :func:`apply_channel`.
    """

    branches: tuple
    label: str = ""
    check: bool = True
    tolerance: float = COMPLETENESS_TOL
    residual: float = field(init=False)
    effective: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.branches) == 0:
            raise ValueError("Kraus family must have at least one branch")
        cleaned = []
        dim = None
        for w, op in self.branches:
            w = float(w)
            if not (w > 0 and np.isfinite(w)):
                raise ValueError(f"branch weight must be positive and finite, got {w!r}")
            m = as_matrix(op)
            if m.shape[0] != m.shape[1]:
                raise DimensionError(f"Kraus operator must be square, got {m.shape}")
            if dim is None:
                dim = m.shape[0]
                check_dim(dim)
            elif m.shape[0] != dim:
                raise DimensionError(f"mixed operator sizes {dim} and {m.shape[0]}")
            m = np.array(m, copy=True)
            m.setflags(write=False)
            cleaned.append((w, m))
        eff = np.stack([np.sqrt(w) * m for w, m in cleaned])
        eff.setflags(write=False)
        s = np.einsum("kji,kjl->il", eff.conj(), eff)
        residual = float(np.linalg.norm(s - np.eye(dim)))
        object.__setattr__(self, "branches", tuple(cleaned))
        object.__setattr__(self, "effective", eff)
        object.__setattr__(self, "residual", residual)
        if self.check and residual > self.tolerance:
            raise IncompleteFamilyError(residual, self.label)

    @classmethod
    def from_operators(cls, ops: Iterable, label: str = "", **kw) -> "KrausFamily":
        return cls(tuple((1.0, op) for op in ops), label=label, **kw)

    @property
    def dim(self) -> int:
        return self.effective.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return np.array([w for w, _ in self.branches])

    @property
    def operators(self) -> list[np.ndarray]:
        return [op for _, op in self.branches]

    def __len__(self) -> int:
        return len(self.branches)

    # -- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "label": self.label,
            "branches": [
                {"weight": w, "re": op.real.tolist(), "im": op.imag.tolist()} for w, op in self.branches
            ],
        }

    @classmethod
    def from_dict(cls, data: dict, check: bool = True) -> "KrausFamily":
        branches = []
        for b in data["branches"]:
            op = np.array(b["re"], dtype=float) + 1j * np.array(b["im"], dtype=float)
            branches.append((b["weight"], op))
        fam = cls(tuple(branches), label=data.get("label", ""), check=check)
        if fam.dim != data["dim"]:
            raise DimensionError(f"declared dim {data['dim']} but operators are {fam.dim}x{fam.dim}")
        return fam

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str, check: bool = True) -> "KrausFamily":
        return cls.from_dict(json.loads(text), check=check)


def verify_completeness(f: KrausFamily) -> ChannelReport:
    eff = f.effective
    d = f.dim
    unitary = len(f) == 1 and np.allclose(eff[0].conj().T @ eff[0], np.eye(d), atol=f.tolerance)
    return ChannelReport(f.residual, len(f), bool(unitary), f.tolerance)


def _require_complete(f: KrausFamily) -> None:
    if f.residual > f.tolerance:
        raise IncompleteFamilyError(f.residual, f.label)


def apply_channel(f: KrausFamily, rho) -> DensityOperator:
    _require_complete(f)
    m = as_density(rho).matrix
    if m.shape[0] != f.dim:
        raise DimensionError(f"family acts on dim {f.dim}, state has dim {m.shape[0]}")
    eff = f.effective
    out = np.einsum("kij,jl,kml->im", eff, m, eff.conj())
    return DensityOperator(0.5 * (out + out.conj().T))


def ensemble_map(f: KrausFamily, rho_pure) -> DensityOperator:
    """Mean post-collapse state: the probability-weighted average over branches."""
    return apply_channel(f, rho_pure)


def compose(f: KrausFamily, g: KrausFamily) -> KrausFamily:
    """Family for "apply ``g`` first, then ``f``": branches are all ``K_f K_g``.

    Branch ``(i, j)`` lands at index ``i * len(g) + j``.
    """
    if f.dim != g.dim:
        raise DimensionError(f"cannot compose families of dims {f.dim} and {g.dim}")
    branches = tuple(
        (wf * wg, kf @ kg) for (wf, kf), (wg, kg) in itertools.product(f.branches, g.branches)
    )
    label = f"{f.label}*{g.label}" if f.label or g.label else ""
    return KrausFamily(branches, label=label, tolerance=max(f.tolerance, g.tolerance, 1e-9))


def choi_matrix(f: KrausFamily) -> np.ndarray:
    vecs = f.effective.transpose(0, 2, 1).reshape(len(f), -1)  # column-stacked vec(K)
    return vecs.T @ vecs.conj()


def compress(f: KrausFamily, cutoff: float = 1e-14) -> KrausFamily:
    """Canonical (minimal) Kraus form from the eigenvectors of the Choi matrix."""
    d = f.dim
    vals, vecs = np.linalg.eigh(choi_matrix(f))
    keep = vals > cutoff * max(vals.max(), 1.0)
    ops = [np.sqrt(v) * vec.reshape(d, d).T for v, vec in zip(vals[keep][::-1], vecs[:, keep].T[::-1])]
    return KrausFamily.from_operators(ops, label=f.label, tolerance=max(f.tolerance, 1e-9))


def power(f: KrausFamily, n: int, compress_each: bool = True) -> KrausFamily:
    """``n``-fold composition, compressed after every product to stay at <= d^2 branches."""
    if n < 1:
        raise ValueError("power requires n >= 1")
    result = None
    base = f
    while n:
        if n & 1:
            result = base if result is None else compose(base, result)
            if compress_each:
                result = compress(result)
        n >>= 1
        if n:
            base = compose(base, base)
            if compress_each:
                base = compress(base)
    return result


def channels_agree(f: KrausFamily, g: KrausFamily) -> float:
    """Max entrywise difference of the two Choi matrices (zero iff the maps are equal)."""
    if f.dim != g.dim:
        raise DimensionError("dimension mismatch")
    return float(np.max(np.abs(choi_matrix(f) - choi_matrix(g))))


def trotter_family(hamiltonian, lindblad_ops: Sequence = (), dt: float = 0.01, label: str = "trotter") -> KrausFamily:
    h = as_matrix(hamiltonian)
    d = h.shape[0]
    if np.max(np.abs(h - h.conj().T)) > 1e-12:
        raise ValueError("Hamiltonian must be Hermitian")
    if not dt > 0:
        raise ValueError("dt must be positive")
    ls = [as_matrix(l) for l in lindblad_ops]
    jump_sum = sum((l.conj().T @ l for l in ls), np.zeros((d, d), dtype=np.complex128)) * dt
    k0 = np.eye(d) - 1j * h * dt - 0.5 * jump_sum
    # exact completion: keep the polar unitary of K0, replace its modulus
    target = np.eye(d) - jump_sum
    target = 0.5 * (target + target.conj().T)
    lo = np.linalg.eigvalsh(target)[0]
    if lo < 0:
        raise ValueError(f"dt={dt} too large: 1 - dt*sum(L^dag L) has eigenvalue {lo:.3e}")
    u, _ = scipy.linalg.polar(k0)
    vals, vecs = np.linalg.eigh(target)
    k0 = u @ (vecs * np.sqrt(vals)) @ vecs.conj().T
    ops = [k0] + [np.sqrt(dt) * l for l in ls]
    return KrausFamily.from_operators(ops, label=label)


def ensemble_purity(f: KrausFamily, rho_pure) -> float:
    return purity(ensemble_map(f, rho_pure))
