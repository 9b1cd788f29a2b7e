"""Stochastic evolution on a 1+1 dimensional lattice spacetime.

Space is a periodic ring of ``n_sites`` sites of local dimension ``site_dim``.
A Cauchy surface is a time function ``times[x]`` with nearest-neighbour slope
at most one. The cells between two nested surfaces form a region; every cell
carries a Kraus family and advancing the surface over a cell applies one
sampled branch of it.

Cells ``(x, t)`` and ``(y, s)`` are spacelike iff ``ring_distance(x, y) > |t - s|``.

Evolution is recorded as a set of events ``cell -> branch`` applied to the
starting vector in canonical (time, site) order. For admissible single-site
assignments the branch operators of distinct sites commute, so the canonical
materialization is the state; it also makes the result independent of the
order in which regions were evolved, down to the last bit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .families import family_from_label
from .linops import (
    StateVector,
    apply_local,
    as_matrix,
    as_state,
    commutator_norm,
    embed,
)
from .semigroup import KrausFamily
from .unravel import PROBABILITY_TOL, ZERO_BRANCH_EPSILON, InconsistencyError, Step, TrajectoryRecord

Cell = tuple  # (site, time)


class CausalityError(ValueError):
    """Raised for surfaces, regions or observables that violate the lattice causal structure."""


@dataclass(frozen=True)
class LatticeSpacetime:
    n_sites: int
    site_dim: int = 2
    horizon: int = 64

    def __post_init__(self):
        if self.n_sites < 1 or self.site_dim < 2:
            raise ValueError("need n_sites >= 1 and site_dim >= 2")
        if self.site_dim**self.n_sites > 4096:
            raise ValueError(f"total dimension {self.site_dim}**{self.n_sites} exceeds 4096")

    @property
    def dim(self) -> int:
        return self.site_dim**self.n_sites

    def distance(self, x: int, y: int) -> int:
        d = abs(x - y) % self.n_sites
        return min(d, self.n_sites - d)

    def spacelike(self, a: Cell, b: Cell) -> bool:
        return self.distance(a[0], b[0]) > abs(a[1] - b[1])

    def flat(self, t: int = 0) -> "CauchySurface":
        return CauchySurface((t,) * self.n_sites)

    def product_state(self, local_states: Sequence) -> StateVector:
        vec = np.array([1.0 + 0j])
        for s in local_states:
            vec = np.kron(vec, np.asarray(s, dtype=np.complex128))
        return StateVector.normalized(vec)


def slope_violation(times: Sequence[int]) -> int | None:
    """First site ``x`` with ``|times[x+1] - times[x]| > 1`` (cyclically), or ``None``."""
    n = len(times)
    if n == 1:
        return None
    for x in range(n):
        if abs(times[(x + 1) % n] - times[x]) > 1:
            return x
    return None


@dataclass(frozen=True)
class CauchySurface:
    times: tuple

    def __post_init__(self):
        t = tuple(int(v) for v in self.times)
        if not t:
            raise CausalityError("surface needs at least one site")
        bad = slope_violation(t)
        if bad is not None:
            raise CausalityError(
                f"surface violates the light-cone slope bound between sites {bad} and {(bad + 1) % len(t)}: {t}"
            )
        object.__setattr__(self, "times", t)

    def bump(self, site: int, by: int = 1) -> "CauchySurface":
        t = list(self.times)
        t[site] += by
        return CauchySurface(tuple(t))

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class CellRegion:
    cells: frozenset

    def __iter__(self):
        return iter(canonical_order(self.cells))

    def __len__(self):
        return len(self.cells)

    def __or__(self, other: "CellRegion") -> "CellRegion":
        return CellRegion(self.cells | other.cells)


def canonical_order(cells: Iterable[Cell]) -> list:
    return sorted(cells, key=lambda c: (c[1], c[0]))


def surface_diff(sigma0: CauchySurface, sigma1: CauchySurface) -> CellRegion:
    if len(sigma0) != len(sigma1):
        raise ValueError("surfaces have different numbers of sites")
    cells = set()
    for x, (a, b) in enumerate(zip(sigma0.times, sigma1.times)):
        if b < a:
            raise CausalityError(f"later surface dips below the earlier one at site {x}")
        cells.update((x, t) for t in range(a, b))
    return CellRegion(frozenset(cells))


@dataclass(frozen=True)
class LocalKrausAssignment:
    """Kraus families for lattice cells.

    ``site_families`` gives the family used at every time on a site; entries of
    ``cell_families`` override it for individual cells. An entry is either a
    single-site family or ``(support, family)`` with a contiguous multi-site
    support starting at the cell's site (only for violation fixtures).
    """

    lattice: LatticeSpacetime
    site_families: Mapping = field(default_factory=dict)
    cell_families: Mapping = field(default_factory=dict)

    def entry(self, cell: Cell) -> tuple:
        raw = self.cell_families.get(tuple(cell), self.site_families.get(cell[0]))
        if raw is None:
            raise KeyError(f"no Kraus family assigned to cell {tuple(cell)}")
        if isinstance(raw, KrausFamily):
            support, fam = (cell[0],), raw
        else:
            support, fam = tuple(raw[0]), raw[1]
        if fam.dim != self.lattice.site_dim ** len(support):
            raise ValueError(f"family {fam.label!r} has dim {fam.dim}, support {support} needs "
                             f"{self.lattice.site_dim ** len(support)}")
        return support, fam

    def support(self, cell: Cell) -> tuple:
        return self.entry(cell)[0]

    def is_admissible(self, cells: Iterable[Cell] | None = None) -> bool:
        if cells is None:
            keys = [(s, 0) for s in self.site_families] + list(self.cell_families)
        else:
            keys = cells
        return all(len(self.support(c)) == 1 for c in keys)

    def embedded_branches(self, cell: Cell) -> list[np.ndarray]:
        support, fam = self.entry(cell)
        return [embed(op, support, self.lattice.n_sites, self.lattice.site_dim) for op in fam.effective]


def cell_draw(seed: int, cell: Cell) -> float:
    """Uniform draw keyed by ``(seed, site, time)``; independent of evaluation order."""
    site, time = int(cell[0]), int(cell[1])
    key = ((time & 0xFFFFFFFF) << 32) | (site & 0xFFFFFFFF)
    z = kernels.mix64(np.array([key], dtype=np.uint64))[0]
    return float(kernels.to_unit(kernels.mix64(np.array([int(seed) & 0xFFFFFFFFFFFFFFFF ^ int(z)], dtype=np.uint64)))[0])


def _sample(branch_vecs: np.ndarray, draw: float, eps: float):
    """Inverse-CDF choice over unnormalized candidate vectors (rows)."""
    probs = np.sum(branch_vecs.real**2 + branch_vecs.imag**2, axis=1)
    eligible = probs >= eps * probs.sum()
    total = probs[eligible].sum()
    u = draw * total
    cum = 0.0
    idx = -1
    for i in np.flatnonzero(eligible):
        cum += probs[i]
        idx = int(i)
        if u <= cum:
            break
    return idx, probs, total


def advance_cell(state, cell: Cell, assignment: LocalKrausAssignment, draw: float,
                 eps: float = ZERO_BRANCH_EPSILON):
    """Sample one branch of the cell's family and apply it. Returns ``(state, branch, probability)``."""
    psi = as_state(state)
    lat = assignment.lattice
    support, fam = assignment.entry(cell)
    cand = np.stack([apply_local(op, psi.amplitudes, support, lat.n_sites, lat.site_dim) for op in fam.effective])
    idx, probs, total = _sample(cand, draw, eps)
    if idx < 0:
        raise InconsistencyError(f"no branch eligible at cell {cell}")
    if abs(total - 1.0) > PROBABILITY_TOL:
        raise InconsistencyError(f"branch probabilities at cell {cell} sum to {total!r}")
    return StateVector.normalized(cand[idx]), idx, float(probs[idx])


@dataclass(frozen=True)
class LatticeState:
    """Start vector plus realized events; ``psi`` is the canonical materialization."""

    lattice: LatticeSpacetime
    initial: StateVector
    events: tuple = ()  # ((site, time), support, branch_index, operator)
    _raw: np.ndarray = field(default=None, repr=False, compare=False)

    @classmethod
    def start(cls, lattice: LatticeSpacetime, psi) -> "LatticeState":
        psi = as_state(psi)
        if psi.dim != lattice.dim:
            raise ValueError(f"state dim {psi.dim} does not match lattice dim {lattice.dim}")
        return cls(lattice, psi, (), psi.amplitudes)

    @property
    def raw(self) -> np.ndarray:
        """Unnormalized canonical product of event operators applied to the start vector."""
        if self._raw is None:
            v = self.initial.amplitudes
            for ev in sorted(self.events, key=lambda e: (e[0][1], e[0][0])):
                v = _apply_event(self.lattice, v, ev)
            object.__setattr__(self, "_raw", v)
        return self._raw

    @property
    def psi(self) -> StateVector:
        return StateVector.normalized(self.raw) if self.events else self.initial

    @property
    def realized(self) -> dict:
        return {ev[0]: ev[2] for ev in self.events}

    def with_event(self, ev: tuple) -> "LatticeState":
        events = self.events + (ev,)
        key = lambda e: (e[0][1], e[0][0])
        if not self.events or key(ev) > max(key(e) for e in self.events):
            raw = _apply_event(self.lattice, self.raw, ev)
        else:
            raw = None
        return LatticeState(self.lattice, self.initial, events, raw)


def _apply_event(lat: LatticeSpacetime, v: np.ndarray, ev: tuple) -> np.ndarray:
    out = apply_local(ev[3], v, ev[1], lat.n_sites, lat.site_dim)
    # exact power-of-two rescale keeps long histories away from underflow
    _, e = np.frexp(np.linalg.norm(out))
    return out * (2.0 ** -int(e))


def evolve_between(state, sigma0: CauchySurface, sigma1: CauchySurface, assignment: LocalKrausAssignment,
                   seed: int, eps: float = ZERO_BRANCH_EPSILON):
    """Advance every cell between the surfaces in canonical order with per-cell draws.

    ``state`` may be a :class:`LatticeState` (to continue a history) or a plain
    state vector. Returns ``(LatticeState, TrajectoryRecord)``.
    """
    lat = assignment.lattice
    if not isinstance(state, LatticeState):
        state = LatticeState.start(lat, state)
    region = surface_diff(sigma0, sigma1)
    taken = set(state.realized) & region.cells
    if taken:
        raise CausalityError(f"cells {sorted(taken)} were already evolved")
    steps = []
    for cell in region:
        support, fam = assignment.entry(cell)
        base = state.raw
        cand = np.stack([apply_local(op, base, support, lat.n_sites, lat.site_dim) for op in fam.effective])
        idx, probs, total = _sample(cand, cell_draw(seed, cell), eps)
        norm2 = float(np.vdot(base, base).real)
        if idx < 0 or abs(total / norm2 - 1.0) > PROBABILITY_TOL:
            raise InconsistencyError(f"branch probabilities at cell {cell} sum to {total / norm2!r}")
        state = state.with_event((cell, support, idx, fam.effective[idx]))
        steps.append(Step(idx, float(probs[idx] / norm2), state.psi))
    return state, TrajectoryRecord(int(seed), tuple(steps), as_state(state.initial))


def exact_region_ensemble(rho: np.ndarray, region: Iterable[Cell], assignment: LocalKrausAssignment) -> np.ndarray:
    """Apply every cell's channel (canonical order) to a full density matrix."""
    lat = assignment.lattice
    n, d = lat.n_sites, lat.site_dim
    m = np.asarray(rho, dtype=np.complex128)
    for cell in canonical_order(region):
        support, fam = assignment.entry(cell)
        k = len(support)
        lead, mid = d ** support[0], d**k
        tail = d ** (n - support[0] - k)
        t = m.reshape(lead, mid, tail, lead, mid, tail)
        m = np.einsum("bij,xjyukv,blk->xiyulv", fam.effective, t, fam.effective.conj()).reshape(m.shape)
    return m


def _check_spacelike(lat: LatticeSpacetime, r1: Iterable[Cell], r2: Iterable[Cell]) -> None:
    r1, r2 = set(r1), set(r2)
    if r1 & r2:
        raise CausalityError(f"regions overlap at {sorted(r1 & r2)}")
    for a in r1:
        for b in r2:
            if not lat.spacelike(a, b):
                raise CausalityError(f"cells {a} and {b} are not spacelike separated")


def check_spacelike_commutation(assignment: LocalKrausAssignment, region1, region2) -> float:
    """Largest Frobenius commutator norm between branch operators of the two regions."""
    c1 = region1.cells if isinstance(region1, CellRegion) else set(region1)
    c2 = region2.cells if isinstance(region2, CellRegion) else set(region2)
    _check_spacelike(assignment.lattice, c1, c2)
    ops1 = [op for c in canonical_order(c1) for op in assignment.embedded_branches(c)]
    ops2 = [op for c in canonical_order(c2) for op in assignment.embedded_branches(c)]
    return max((commutator_norm(a, b) for a in ops1 for b in ops2), default=0.0)


def check_no_signaling(assignment: LocalKrausAssignment, region, observable, psi,
                       observable_sites: Sequence[int], observable_time: int | None = None) -> float:
    """``|<O>_rho - <O>_rhobar|`` for an observable spacelike to every cell of the region."""
    lat = assignment.lattice
    cells = region.cells if isinstance(region, CellRegion) else set(region)
    sites = tuple(observable_sites)
    t_obs = min((c[1] for c in cells), default=0) if observable_time is None else observable_time
    for c in cells:
        shadow = set(assignment.support(c))
        if shadow & set(sites):
            raise CausalityError(f"observable sites {sites} overlap the support {sorted(shadow)} of cell {c}")
        for y in sites:
            if not lat.spacelike(c, (y, t_obs)):
                raise CausalityError(f"observable at site {y} lies in the light cone of cell {c}")
    psi = as_state(psi)
    o = embed(as_matrix(observable), sites, lat.n_sites, lat.site_dim)
    rho = np.outer(psi.amplitudes, psi.amplitudes.conj())
    rho_bar = exact_region_ensemble(rho, cells, assignment)
    before = np.trace(o @ rho)
    after = np.trace(o @ rho_bar)
    return float(abs(before - after))


# -- scenario files ---------------------------------------------------------

@dataclass(frozen=True)
class Scenario:
    lattice: LatticeSpacetime
    surfaces: tuple
    assignment: LocalKrausAssignment
    observables: tuple  # (sites, matrix, label)


def load_scenario(data: dict | str) -> Scenario:
    """Parse ``{n_sites, site_dim, surfaces, families, observables}``.

    ``families`` maps a site index (string or int) to a bundled family label.
    Each observable is ``{"site": int, "pauli": "Z"}`` or ``{"sites": [..], "paulis": "ZZ"}``.
    """
    from .linops import PAULIS, kron_all

    if isinstance(data, str):
        data = json.loads(data)
    lat = LatticeSpacetime(int(data["n_sites"]), int(data.get("site_dim", 2)))
    surfaces = tuple(CauchySurface(tuple(s)) for s in data["surfaces"])
    for s in surfaces:
        if len(s) != lat.n_sites:
            raise ValueError(f"surface {s.times} has {len(s)} entries, expected {lat.n_sites}")
    fams = {int(k): family_from_label(v) for k, v in data.get("families", {}).items()}
    obs = []
    for o in data.get("observables", []):
        if "site" in o:
            sites, paulis = (int(o["site"]),), o.get("pauli", "Z")
        else:
            sites, paulis = tuple(int(s) for s in o["sites"]), o["paulis"]
        mat = kron_all([PAULIS[p] for p in paulis])
        obs.append((sites, mat, f"{paulis}@{','.join(map(str, sites))}"))
    return Scenario(lat, surfaces, LocalKrausAssignment(lat, fams), tuple(obs))
