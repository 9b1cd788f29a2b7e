"""Dense complex linear algebra on small Hilbert spaces.

Matrices are plain ``numpy`` arrays of dtype ``complex128``. Pure and mixed
states are wrapped in :class:`StateVector` and :class:`DensityOperator`, which
validate on construction and hold read-only arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

MAX_DIM = 4096


@dataclass(frozen=True)
class Tolerances:
    hermitian: float = 1e-12
    trace: float = 1e-12
    psd_floor: float = -1e-10
    norm: float = 1e-12


TOL = Tolerances()


class DimensionError(ValueError):
    """Raised when operand shapes are incompatible or exceed ``MAX_DIM``."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.complex128, copy=True)
    a.setflags(write=False)
    return a


def as_matrix(a) -> np.ndarray:
    """Coerce to a finite 2-D complex array."""
    if isinstance(a, DensityOperator):
        return a.matrix
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] == 0 or m.shape[1] == 0:
        raise DimensionError(f"expected a non-empty 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def check_dim(dim: int, max_dim: int | None = None) -> None:
    limit = MAX_DIM if max_dim is None else max_dim
    if dim > limit:
        raise DimensionError(f"dimension {dim} exceeds the configured maximum {limit}")


@dataclass(frozen=True, eq=False)
class StateVector:
    amplitudes: np.ndarray

    def __post_init__(self):
        amp = np.asarray(self.amplitudes, dtype=np.complex128)
        if amp.ndim != 1 or amp.size == 0:
            raise DimensionError(f"state must be a non-empty 1-D array, got shape {amp.shape}")
        if not np.all(np.isfinite(amp)):
            raise ValueError("state has non-finite amplitudes")
        check_dim(amp.size)
        norm = np.linalg.norm(amp)
        if abs(norm - 1.0) > TOL.norm * 10:
            raise ValueError(f"state is not normalized (norm={norm!r}); use StateVector.normalized")
        object.__setattr__(self, "amplitudes", _frozen(amp))

    @classmethod
    def normalized(cls, amplitudes) -> "StateVector":
        amp = np.asarray(amplitudes, dtype=np.complex128)
        norm = np.linalg.norm(amp)
        if norm == 0 or not np.isfinite(norm):
            raise ValueError("cannot normalize a zero or non-finite vector")
        return cls(amp / norm)

    @classmethod
    def basis(cls, dim: int, index: int) -> "StateVector":
        amp = np.zeros(dim, dtype=np.complex128)
        amp[index] = 1.0
        return cls(amp)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def projector(self) -> "DensityOperator":
        return DensityOperator(np.outer(self.amplitudes, self.amplitudes.conj()))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)


@dataclass(frozen=True, eq=False)
class DensityOperator:
    matrix: np.ndarray

    def __post_init__(self):
        m = as_matrix(self.matrix)
        if m.shape[0] != m.shape[1]:
            raise DimensionError(f"density operator must be square, got {m.shape}")
        check_dim(m.shape[0])
        herm = np.max(np.abs(m - m.conj().T))
        if herm > TOL.hermitian:
            raise ValueError(f"density operator not Hermitian (max deviation {herm:.3e})")
        tr = np.trace(m)
        if abs(tr - 1.0) > TOL.trace:
            raise ValueError(f"density operator trace {tr.real!r} differs from 1")
        # symmetrize so eigvalsh sees an exactly Hermitian input
        m = 0.5 * (m + m.conj().T)
        lo = np.linalg.eigvalsh(m)[0]
        if lo < TOL.psd_floor:
            raise ValueError(f"density operator has negative eigenvalue {lo:.3e}")
        object.__setattr__(self, "matrix", _frozen(m))

    @classmethod
    def maximally_mixed(cls, dim: int) -> "DensityOperator":
        return cls(np.eye(dim, dtype=np.complex128) / dim)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def expectation(self, observable) -> float:
        return float(np.real(np.trace(as_matrix(observable) @ self.matrix)))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)


def as_density(rho) -> DensityOperator:
    if isinstance(rho, DensityOperator):
        return rho
    if isinstance(rho, StateVector):
        return rho.projector()
    return DensityOperator(rho)


def as_state(psi) -> StateVector:
    if isinstance(psi, StateVector):
        return psi
    return StateVector(psi)


# Pauli matrices and friends used throughout the package and tests.
I2 = _frozen(np.eye(2))
X = _frozen([[0, 1], [1, 0]])
Y = _frozen([[0, -1j], [1j, 0]])
Z = _frozen([[1, 0], [0, -1]])
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}


def tensor_product(a, b, max_dim: int | None = None) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    rows, cols = a.shape[0] * b.shape[0], a.shape[1] * b.shape[1]
    check_dim(max(rows, cols), max_dim)
    return np.kron(a, b)


def kron_all(factors: Iterable, max_dim: int | None = None) -> np.ndarray:
    return reduce(lambda x, y: tensor_product(x, y, max_dim), factors)


def embed(op, site: int | Sequence[int], n_sites: int, site_dim: int = 2) -> np.ndarray:
    """Embed an operator acting on ``site`` (or contiguous ``sites``) into the full chain.

    Multi-site supports must be listed in increasing cyclic order starting at
    the first site, e.g. ``(3, 0)`` on a 4-site ring is rejected; use a
    permutation-free contiguous block instead.
    """
    sites = (site,) if np.isscalar(site) else tuple(site)
    op = as_matrix(op)
    k = len(sites)
    if op.shape != (site_dim**k, site_dim**k):
        raise DimensionError(f"operator shape {op.shape} does not match {k} site(s) of dim {site_dim}")
    if list(sites) != list(range(sites[0], sites[0] + k)) or sites[-1] >= n_sites:
        raise ValueError(f"support {sites} must be contiguous and within {n_sites} sites")
    left = np.eye(site_dim ** sites[0], dtype=np.complex128)
    right = np.eye(site_dim ** (n_sites - sites[-1] - 1), dtype=np.complex128)
    return kron_all([left, op, right])


def apply_local(op, vec: np.ndarray, sites: Sequence[int], n_sites: int, site_dim: int = 2) -> np.ndarray:
    """Apply a contiguous-support operator to a full state vector without embedding it."""
    k = len(sites)
    lead = site_dim ** sites[0]
    tail = site_dim ** (n_sites - sites[0] - k)
    t = np.asarray(vec).reshape(lead, site_dim**k, tail)
    out = np.einsum("ij,ajb->aib", as_matrix(op), t)
    return out.reshape(-1)


def partial_trace(rho, factor_dims: Sequence[int], traced_factors: Iterable[int]) -> DensityOperator:
    m = as_density(rho).matrix
    dims = [int(d) for d in factor_dims]
    if any(d <= 0 for d in dims) or int(np.prod(dims)) != m.shape[0]:
        raise DimensionError(f"factor dims {dims} do not multiply to {m.shape[0]}")
    traced = sorted(set(traced_factors))
    if any(t < 0 or t >= len(dims) for t in traced):
        raise ValueError(f"traced factor indices {traced} out of range for {len(dims)} factors")
    n = len(dims)
    t = m.reshape(dims + dims)
    # trace highest index first so remaining axis numbers stay valid
    for i, f in enumerate(sorted(traced, reverse=True)):
        remaining = n - i
        t = np.trace(t, axis1=f, axis2=f + remaining)
    keep = int(np.prod([d for j, d in enumerate(dims) if j not in traced])) if len(traced) < n else 1
    return DensityOperator(t.reshape(keep, keep))


def purity(rho) -> float:
    m = as_density(rho).matrix
    # Tr(rho^2) = sum |rho_ij|^2 for Hermitian rho
    return float(np.sum(np.abs(m) ** 2))


def trace_distance(a, b) -> float:
    ma, mb = as_density(a).matrix, as_density(b).matrix
    if ma.shape != mb.shape:
        raise DimensionError(f"dimension mismatch {ma.shape} vs {mb.shape}")
    diff = ma - mb
    diff = 0.5 * (diff + diff.conj().T)
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(diff))))


def commutator_norm(a, b) -> float:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[0] != a.shape[1] or a.shape != b.shape:
        raise DimensionError(f"need square matrices of equal size, got {a.shape} and {b.shape}")
    return float(np.linalg.norm(a @ b - b @ a))


def bell_state(kind: str = "phi+") -> StateVector:
    s = 1 / np.sqrt(2)
    vecs = {
        "phi+": [s, 0, 0, s],
        "phi-": [s, 0, 0, -s],
        "psi+": [0, s, s, 0],
        "psi-": [0, s, -s, 0],
    }
    return StateVector(np.array(vecs[kind], dtype=np.complex128))


def ghz_state(n: int) -> StateVector:
    amp = np.zeros(2**n, dtype=np.complex128)
    amp[0] = amp[-1] = 1 / np.sqrt(2)
    return StateVector(amp)


def random_state(dim: int, rng: np.random.Generator) -> StateVector:
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return StateVector.normalized(v)


def random_density(dim: int, rng: np.random.Generator, rank: int | None = None) -> DensityOperator:
    r = dim if rank is None else rank
    g = rng.normal(size=(dim, r)) + 1j * rng.normal(size=(dim, r))
    m = g @ g.conj().T
    m = m / np.trace(m)
    return DensityOperator(0.5 * (m + m.conj().T))


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))
