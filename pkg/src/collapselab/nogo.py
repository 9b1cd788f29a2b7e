"""Finite-dimensional certification of "stable vacuum + local commutation => deterministic".

The ambient space is ``C^d1 (x) C^d2``. A *local algebra* is generated by
operators on the first factor; collapse operators are required to commute
with it, i.e. to live on the second factor. When the vacuum vector is cyclic
for the local algebra (full Schmidt rank on the second factor), any operator
in the commutant that annihilates the vacuum vanishes identically. Hence if
the vacuum's ensemble state stays pure, every pair of branches differs by a
scalar and the evolution is deterministic on all states.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .linops import (
    DensityOperator,
    StateVector,
    X,
    Z,
    as_matrix,
    as_state,
    embed,
    partial_trace,
    purity,
    random_unitary,
)
from .semigroup import KrausFamily, apply_channel, ensemble_map

PURITY_THRESHOLD = 1 - 1e-10
PROPORTIONALITY_THRESHOLD = 1e-8
COMMUTATION_TOL = 1e-10
CONTRAPOSITIVE_RESIDUAL = 1e-6
CONTRAPOSITIVE_PURITY_GAP = 1e-6
CYCLIC_TOL = 1e-10

DETERMINISTIC = "deterministic"
VIOLATES_PURITY = "stochastic-violates-purity"
VIOLATES_COMMUTATION = "stochastic-violates-commutation"
# pure vacuum ensemble yet non-proportional branches; possible only when the vacuum is not cyclic
NONCYCLIC_COUNTEREXAMPLE = "pure-nonproportional-noncyclic"


class PreconditionError(ValueError):
    def __init__(self, message: str, residual: float | None = None):
        self.residual = residual
        super().__init__(message)


# -- algebras -----------------------------------------------------------------

def clock_shift(d: int) -> tuple[np.ndarray, np.ndarray]:
    """Generalized Pauli pair; together they generate the full d x d matrix algebra."""
    shift = np.roll(np.eye(d, dtype=np.complex128), 1, axis=0)
    clock = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    if d == 2:
        return X.copy(), Z.copy()
    return shift, clock


@dataclass(frozen=True, eq=False)
class LocalAlgebra:
    """Unital algebra generated by ``generators``; ``basis`` is Frobenius-orthonormal."""

    generators: tuple
    ambient_dim: int = field(init=False)
    basis: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        gens = tuple(as_matrix(g) for g in self.generators)
        if not gens:
            raise ValueError("need at least one generator")
        d = gens[0].shape[0]
        if any(g.shape != (d, d) for g in gens):
            raise ValueError("generators must be square and of equal size")
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "ambient_dim", d)
        object.__setattr__(self, "basis", _close_algebra(gens, d))

    @classmethod
    def on_factor(cls, dims: Sequence[int], factor: int = 0) -> "LocalAlgebra":
        """Full matrix algebra on one tensor factor, identity elsewhere."""
        dims = list(dims)
        gens = []
        for g in clock_shift(dims[factor]):
            ops = [np.eye(n) for n in dims]
            ops[factor] = g
            m = ops[0]
            for o in ops[1:]:
                m = np.kron(m, o)
            gens.append(m)
        return cls(tuple(gens))

    @property
    def dimension(self) -> int:
        return self.basis.shape[0]

    def commutation_residual(self, a) -> float:
        a = as_matrix(a)
        return max(float(np.linalg.norm(a @ g - g @ a)) for g in self.generators)

    def commutant_basis(self, tol: float = 1e-10) -> np.ndarray:
        """Orthonormal basis (as ``(k, d, d)``) of all operators commuting with every generator."""
        d = self.ambient_dim
        eye = np.eye(d)
        # row-major vec: vec(gA - Ag) = (g (x) 1 - 1 (x) g^T) vec(A)
        rows = np.vstack([np.kron(g, eye) - np.kron(eye, g.T) for g in self.generators])
        return _nullspace(rows, tol).T.reshape(-1, d, d)


def _nullspace(m: np.ndarray, tol: float) -> np.ndarray:
    _, s, vh = np.linalg.svd(m)
    rank = int(np.sum(s > tol * max(1.0, s[0] if s.size else 1.0)))
    return vh[rank:].conj().T


def _close_algebra(gens: tuple, d: int, tol: float = 1e-10) -> np.ndarray:
    basis: list[np.ndarray] = []

    def add(m: np.ndarray) -> bool:
        v = m.reshape(-1).copy()
        for _ in range(2):  # re-orthogonalize once for stability
            for b in basis:
                v -= np.vdot(b, v) * b
        n = np.linalg.norm(v)
        if n > tol * max(1.0, np.linalg.norm(m)):
            basis.append(v / n)
            return True
        return False

    add(np.eye(d, dtype=np.complex128))
    frontier = []
    for g in gens:
        if add(g):
            frontier.append(basis[-1].reshape(d, d))
    while frontier and len(basis) < d * d:
        new = []
        for b in frontier:
            for g in gens:
                if add(g @ b):
                    new.append(basis[-1].reshape(d, d))
        frontier = new
    return np.array([b.reshape(d, d) for b in basis])


# -- cyclicity and the annihilation corollary ------------------------------------

def cyclic_check(omega, algebra: LocalAlgebra, tol: float = CYCLIC_TOL) -> tuple[bool, int]:
    """Rank of ``span{B omega}`` over the algebra; cyclic iff it equals the ambient dimension."""
    w = as_state(omega).amplitudes
    if w.size != algebra.ambient_dim:
        raise ValueError(f"vector dim {w.size} does not match algebra dim {algebra.ambient_dim}")
    vecs = algebra.basis @ w  # (k, d)
    gram = vecs.conj() @ vecs.T
    s = np.linalg.svd(gram, compute_uv=False)
    rank = int(np.sum(s > tol))
    return rank == algebra.ambient_dim, rank


def commuting_annihilators(omega, algebra: LocalAlgebra, tol: float = 1e-10) -> np.ndarray:
    """Basis of ``{A : [A, g] = 0 for all generators g, A omega = 0}``, shape ``(k, d, d)``."""
    w = as_state(omega).amplitudes
    comm = algebra.commutant_basis(tol)
    if comm.size == 0:
        return comm
    images = np.array([c @ w for c in comm]).T  # columns: C_j omega
    coeffs = _nullspace(images, tol)
    return np.einsum("jk,jab->kab", coeffs, comm)


def corollary_check(a, omega, algebra: LocalAlgebra, annihilation_tol: float = 1e-12) -> float:
    """Max ``||A B omega||`` over the algebra basis for a commuting ``A`` with ``A omega = 0``."""
    a = as_matrix(a)
    w = as_state(omega).amplitudes
    res = algebra.commutation_residual(a)
    if res > COMMUTATION_TOL:
        raise PreconditionError(f"operator does not commute with the algebra (residual {res:.3e})", res)
    cyclic, rank = cyclic_check(omega, algebra)
    if not cyclic:
        raise PreconditionError(f"vector is not cyclic for the algebra (rank {rank} < {algebra.ambient_dim})")
    if np.linalg.norm(a @ w) > annihilation_tol:
        raise PreconditionError(f"operator does not annihilate the vector (|A omega| = {np.linalg.norm(a @ w):.3e})")
    return float(max(np.linalg.norm(a @ (b @ w)) for b in algebra.basis))


# -- certification ------------------------------------------------------------------

@dataclass(frozen=True)
class CertificationReport:
    vacuum_purity: float
    is_cyclic: bool
    commutation_residual: float
    proportionality_residuals: tuple
    verdict: str
    reference_branch: int = -1
    coefficients: tuple = ()

    @property
    def max_residual(self) -> float:
        return max(self.proportionality_residuals, default=0.0)

    def to_dict(self, instance_seed: int | None = None) -> dict:
        return {
            "instance_seed": instance_seed,
            "purity": self.vacuum_purity,
            "residuals": list(self.proportionality_residuals),
            "verdict": self.verdict,
        }


def proportionality_residuals(f: KrausFamily, omega) -> tuple[int, np.ndarray, np.ndarray]:
    """Reference branch (largest ``||K omega||``), coefficients ``c`` and ``||K_g - c_g K_ref||_F``."""
    w = as_state(omega).amplitudes
    eff = f.effective
    images = eff @ w
    norms = np.sum(np.abs(images) ** 2, axis=1)
    ref = int(np.argmax(norms))
    c = images.conj() @ images[ref]
    c = np.conj(c) / norms[ref]  # c_g = <K_ref w | K_g w> / |K_ref w|^2
    res = np.linalg.norm(eff - c[:, None, None] * eff[ref], axis=(1, 2))
    return ref, c, res


def determinism_certify(f: KrausFamily, omega, algebra: LocalAlgebra, require_cyclic: bool = True) -> CertificationReport:
    w = as_state(omega)
    if w.dim != f.dim or f.dim != algebra.ambient_dim:
        raise ValueError("family, vacuum and algebra dimensions must agree")
    cyclic, rank = cyclic_check(w, algebra)
    if require_cyclic and not cyclic:
        raise PreconditionError(f"vacuum is not cyclic for the algebra (rank {rank} < {algebra.ambient_dim})")
    comm = max(algebra.commutation_residual(k) for k in f.effective)
    rho_bar = ensemble_map(f, w.projector())
    pur = purity(rho_bar)
    if comm > COMMUTATION_TOL:
        return CertificationReport(pur, cyclic, comm, (), VIOLATES_COMMUTATION)
    if pur < PURITY_THRESHOLD:
        return CertificationReport(pur, cyclic, comm, (), VIOLATES_PURITY)
    ref, c, res = proportionality_residuals(f, w)
    verdict = DETERMINISTIC if np.all(res <= PROPORTIONALITY_THRESHOLD) else NONCYCLIC_COUNTEREXAMPLE
    if verdict == NONCYCLIC_COUNTEREXAMPLE and cyclic:
        # would contradict the theorem; surface loudly rather than mislabel
        verdict = "theorem-violation"
    return CertificationReport(pur, cyclic, comm, tuple(float(r) for r in res), verdict, ref,
                               tuple(complex(x) for x in c))


# -- random sweep ---------------------------------------------------------------------

def default_factor_dims(ambient_dim: int) -> tuple[int, int]:
    """``(d1, d2)`` with ``d1 >= d2`` as balanced as possible; the algebra acts on ``d1``."""
    best = None
    for d2 in range(2, ambient_dim):
        if ambient_dim % d2 == 0 and ambient_dim // d2 >= d2:
            best = (ambient_dim // d2, d2)
    if best is None:
        raise ValueError(f"ambient_dim {ambient_dim} is not a product of two factors >= 2")
    return best


def maximally_entangled(dims: tuple[int, int]) -> StateVector:
    d1, d2 = dims
    psi = np.zeros((d1, d2), dtype=np.complex128)
    for i in range(min(d1, d2)):
        psi[i, i] = 1.0
    return StateVector.normalized(psi.reshape(-1))


def product_vacuum(dims: tuple[int, int]) -> StateVector:
    return StateVector.basis(dims[0] * dims[1], 0)


def _reduced_support(omega: StateVector, dims: tuple[int, int], tol: float = 1e-12) -> np.ndarray:
    rho2 = partial_trace(omega.projector(), dims, [0]).matrix
    vals, vecs = np.linalg.eigh(rho2)
    sup = vecs[:, vals > tol]
    return sup @ sup.conj().T


def _random_coeffs(n: int, rng: np.random.Generator) -> np.ndarray:
    c = rng.normal(size=n) + 1j * rng.normal(size=n)
    return c / np.linalg.norm(c)


def _complete_on(g: np.ndarray, proj: np.ndarray) -> np.ndarray:
    """Right-normalize operators ``g`` (k, d, d) so that ``sum g^dag g = proj``."""
    s = np.einsum("kji,kjl->il", g.conj(), g)
    s = proj @ s @ proj
    vals, vecs = np.linalg.eigh(0.5 * (s + s.conj().T))
    keep = vals > 1e-12
    inv = (vecs[:, keep] / np.sqrt(vals[keep])) @ vecs[:, keep].conj().T
    return g @ inv


def random_commutant_family(kind: str, dims: tuple[int, int], omega: StateVector, n_branches: int,
                            rng: np.random.Generator) -> KrausFamily:
    """Random family with branches ``1 (x) B_i``.

    ``kind``:
      * ``generic``: Gaussian ``B_i`` completed by ``S^{-1/2}``.
      * ``proportional``: ``B_i = c_i W`` for a random unitary ``W``.
      * ``sector``: ``B_i = W (c_i P0 + M_i)`` where ``P0`` projects on the support of
        the vacuum's reduced state and ``M_i`` acts on its complement. Collapses to
        ``proportional`` when that complement is empty (cyclic vacuum).
    """
    d1, d2 = dims
    one = np.eye(d1)
    if kind == "generic":
        g = rng.normal(size=(n_branches, d2, d2)) + 1j * rng.normal(size=(n_branches, d2, d2))
        bs = _complete_on(g, np.eye(d2))
    elif kind in ("proportional", "sector"):
        w = random_unitary(d2, rng)
        c = _random_coeffs(n_branches, rng)
        p0 = _reduced_support(omega, dims) if kind == "sector" else np.eye(d2)
        p1 = np.eye(d2) - p0
        if np.linalg.norm(p1) > 1e-9:
            g = rng.normal(size=(n_branches, d2, d2)) + 1j * rng.normal(size=(n_branches, d2, d2))
            m = _complete_on(p1 @ g @ p1, p1)
        else:
            m = np.zeros((n_branches, d2, d2))
        bs = np.array([w @ (c[i] * p0 + m[i]) for i in range(n_branches)])
    else:
        raise ValueError(f"unknown family kind {kind!r}")
    return KrausFamily.from_operators([np.kron(one, b) for b in bs], label=f"commutant-{kind}")


SWEEP_KINDS = ("generic", "proportional", "sector")


@dataclass
class SweepSummary:
    ambient_dim: int
    factor_dims: tuple
    vacuum: str
    n_instances: int
    n_pure: int = 0
    max_pure_residual: float = 0.0
    counterexamples: int = 0
    theorem_violations: int = 0
    contrapositive_failures: int = 0
    verdict_counts: dict = field(default_factory=dict)
    records: list = field(default_factory=list, repr=False)

    @property
    def pure_fraction(self) -> float:
        return self.n_pure / self.n_instances

    def summary_row(self) -> dict:
        row = {k: v for k, v in asdict(self).items() if k not in ("records", "verdict_counts", "factor_dims")}
        row["factor_dims"] = "x".join(map(str, self.factor_dims))
        row["pure_fraction"] = self.pure_fraction
        for v in (DETERMINISTIC, VIOLATES_PURITY, VIOLATES_COMMUTATION, NONCYCLIC_COUNTEREXAMPLE):
            row[v] = self.verdict_counts.get(v, 0)
        return row

    def to_csv(self) -> str:
        buf = io.StringIO()
        row = self.summary_row()
        writer = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        writer.writeheader()
        writer.writerow(row)
        return buf.getvalue()

    def records_jsonl(self) -> str:
        return "".join(json.dumps(r) + "\n" for r in self.records)


def instance_seeds(seed: int, n: int) -> np.ndarray:
    return kernels.trajectory_seeds(seed, np.arange(n, dtype=np.uint64))


def certify_instance(instance_seed: int, index: int, dims: tuple[int, int], omega: StateVector,
                     algebra: LocalAlgebra, n_branches: int, kinds: Sequence[str] = SWEEP_KINDS) -> dict:
    rng = np.random.default_rng(int(instance_seed))
    kind = kinds[index % len(kinds)]
    f = random_commutant_family(kind, dims, omega, n_branches, rng)
    rep = determinism_certify(f, omega, algebra, require_cyclic=False)
    rec = rep.to_dict(int(instance_seed))
    rec["kind"] = kind
    # residuals for every instance, so the contrapositive can be checked on impure ones too
    rec["max_residual"] = float(np.max(proportionality_residuals(f, omega)[2]))
    return rec


def random_nogo_sweep(n_instances: int, ambient_dim: int, seed: int, vacuum: str | StateVector = "entangled",
                      n_branches: int = 2, factor_dims: tuple[int, int] | None = None,
                      kinds: Sequence[str] = SWEEP_KINDS) -> SweepSummary:
    """Certify ``n_instances`` random commutant-supported families against one vacuum."""
    if n_instances < 1:
        raise ValueError("n_instances must be >= 1")
    dims = tuple(factor_dims) if factor_dims else default_factor_dims(ambient_dim)
    if dims[0] * dims[1] != ambient_dim:
        raise ValueError(f"factor dims {dims} do not multiply to {ambient_dim}")
    if isinstance(vacuum, StateVector):
        omega, vac_name = vacuum, "custom"
    elif vacuum == "entangled":
        omega, vac_name = maximally_entangled(dims), vacuum
    elif vacuum == "product":
        omega, vac_name = product_vacuum(dims), vacuum
    else:
        raise ValueError(f"unknown vacuum {vacuum!r}")
    algebra = LocalAlgebra.on_factor(dims, 0)
    records = [certify_instance(int(s), i, dims, omega, algebra, n_branches, kinds)
               for i, s in enumerate(instance_seeds(seed, n_instances))]
    return summarize(records, ambient_dim, dims, vac_name)


def summarize(records: list, ambient_dim: int, dims: tuple, vacuum: str) -> SweepSummary:
    summary = SweepSummary(ambient_dim, tuple(dims), vacuum, len(records), records=list(records))
    for rec in records:
        summary.verdict_counts[rec["verdict"]] = summary.verdict_counts.get(rec["verdict"], 0) + 1
        pure = rec["purity"] >= PURITY_THRESHOLD and rec["verdict"] != VIOLATES_COMMUTATION
        if pure:
            summary.n_pure += 1
            summary.max_pure_residual = max(summary.max_pure_residual, rec["max_residual"])
            if rec["max_residual"] > PROPORTIONALITY_THRESHOLD:
                summary.counterexamples += 1
            if rec["verdict"] == "theorem-violation":
                summary.theorem_violations += 1
        if rec["max_residual"] > CONTRAPOSITIVE_RESIDUAL and rec["purity"] >= 1 - CONTRAPOSITIVE_PURITY_GAP:
            summary.contrapositive_failures += 1
    return summary


# -- vacuum model and energy production --------------------------------------------

def tfim_hamiltonian(n_sites: int, coupling: float = 1.0, field: float = 1.0, periodic: bool = True) -> np.ndarray:
    """``H = -J sum X_i X_{i+1} - g sum Z_i`` on a qubit chain."""
    d = 2**n_sites
    h = np.zeros((d, d), dtype=np.complex128)
    bonds = n_sites if periodic and n_sites > 2 else n_sites - 1
    for i in range(bonds):
        j = (i + 1) % n_sites
        xx = embed(X, i, n_sites) @ embed(X, j, n_sites)
        h -= coupling * xx
    for i in range(n_sites):
        h -= field * embed(Z, i, n_sites)
    return h


@dataclass(frozen=True, eq=False)
class VacuumModel:
    """Hamiltonian shifted so the (unique) ground energy is 0, with its ground state."""

    hamiltonian: np.ndarray
    vacuum: StateVector
    ground_energy: float
    gap: float

    @classmethod
    def from_hamiltonian(cls, h, degeneracy_tol: float = 1e-9) -> "VacuumModel":
        h = as_matrix(h)
        if np.max(np.abs(h - h.conj().T)) > 1e-12:
            raise ValueError("Hamiltonian must be Hermitian")
        vals, vecs = np.linalg.eigh(h)
        gap = float(vals[1] - vals[0]) if vals.size > 1 else float("inf")
        if gap < degeneracy_tol:
            raise ValueError(f"ground state is degenerate (gap {gap:.3e}); vacuum must be unique")
        shifted = h - vals[0] * np.eye(h.shape[0])
        return cls(shifted, StateVector.normalized(vecs[:, 0]), 0.0, gap)

    @classmethod
    def tfim(cls, n_sites: int = 4, coupling: float = 1.0, field: float = 1.0) -> "VacuumModel":
        return cls.from_hamiltonian(tfim_hamiltonian(n_sites, coupling, field))

    def residual(self) -> float:
        return float(np.linalg.norm(self.hamiltonian @ self.vacuum.amplitudes))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.hamiltonian)[0])


def energy_production_rate(model: VacuumModel, f: KrausFamily, n_steps: int = 1) -> float:
    """Mean energy gained per step by the vacuum ensemble after ``n_steps`` exact steps."""
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    if f.dim != model.hamiltonian.shape[0]:
        raise ValueError("family and Hamiltonian dimensions differ")
    rho: DensityOperator = model.vacuum.projector()
    for _ in range(n_steps):
        rho = apply_channel(f, rho)
    return float(np.real(np.trace(model.hamiltonian @ rho.matrix))) / n_steps


def spectral_projector_family(h, tol: float = 1e-9) -> KrausFamily:
    """Branches are the eigenprojectors of ``h`` (degenerate levels grouped); commutes with ``h``."""
    vals, vecs = np.linalg.eigh(as_matrix(h))
    groups, start = [], 0
    for i in range(1, vals.size + 1):
        if i == vals.size or vals[i] - vals[start] > tol:
            v = vecs[:, start:i]
            groups.append(v @ v.conj().T)
            start = i
    return KrausFamily.from_operators(groups, label="spectral-projectors")
