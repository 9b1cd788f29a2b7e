"""Concrete Kraus families bundled with the package.

These are ordinary noise and localization channels used as test beds. Each can
be requested by a short label such as ``"dephasing:0.25"`` (see
:func:`family_from_label`), which is how scenario and config files name them.
"""
from __future__ import annotations

import numpy as np

from .linops import I2, X, Y, Z, as_matrix, embed, random_unitary
from .semigroup import KrausFamily, compose


def identity_family(dim: int = 2) -> KrausFamily:
    return KrausFamily(((1.0, np.eye(dim)),), label="identity")


def unitary_family(u, label: str = "unitary") -> KrausFamily:
    return KrausFamily(((1.0, as_matrix(u)),), label=label)


def dephasing(p: float) -> KrausFamily:
    """Qubit phase flip with probability ``p``: branches sqrt(1-p) I and sqrt(p) Z."""
    _check_prob(p, "p")
    if p == 0:
        return KrausFamily(((1.0, I2),), label="dephasing:0")
    if p == 1:
        return KrausFamily(((1.0, Z),), label="dephasing:1")
    return KrausFamily(((1.0, np.sqrt(1 - p) * I2), (1.0, np.sqrt(p) * Z)), label=f"dephasing:{p!r}")


def depolarizing(p: float) -> KrausFamily:
    _check_prob(p, "p")
    ops = [np.sqrt(1 - 3 * p / 4) * I2] + [np.sqrt(p / 4) * P for P in (X, Y, Z)]
    return KrausFamily.from_operators([o for o in ops if np.any(o)], label=f"depolarizing:{p!r}")


def amplitude_damping(gamma: float) -> KrausFamily:
    _check_prob(gamma, "gamma")
    k0 = np.array([[1, 0], [0, np.sqrt(1 - gamma)]], dtype=np.complex128)
    k1 = np.array([[0, np.sqrt(gamma)], [0, 0]], dtype=np.complex128)
    ops = [k0] + ([k1] if gamma > 0 else [])
    return KrausFamily.from_operators(ops, label=f"amplitude_damping:{gamma!r}")


def gaussian_localization(n_positions: int, width: float, rate: float) -> KrausFamily:
    """GRW-style hit on a periodic ring of positions.

    With probability ``rate`` a localization occurs; the centre ``c`` is
    chosen with Born weight and the operator is a Gaussian profile around ``c``.
    Profiles are normalized so that ``sum_c G_c^2 = 1`` holds exactly on the ring.
    """
    _check_prob(rate, "rate")
    if width <= 0:
        raise ValueError("width must be positive")
    q = np.arange(n_positions)
    dist = np.minimum((q[:, None] - q[None, :]) % n_positions, (q[None, :] - q[:, None]) % n_positions)
    prof = np.exp(-(dist**2) / (4 * width**2))
    prof /= np.sqrt(np.sum(prof**2, axis=1, keepdims=True))
    branches = []
    if rate < 1:
        branches.append((1 - rate, np.eye(n_positions)))
    branches += [(rate, np.diag(prof[c])) for c in range(n_positions)]
    return KrausFamily(tuple(branches), label=f"gaussian_localization:{n_positions}:{width!r}:{rate!r}")


def phase_pair(u, theta: float) -> KrausFamily:
    """Branches ``U`` and ``e^{i theta} U``, each with probability 1/2; a unitary in disguise."""
    u = as_matrix(u)
    return KrausFamily(((0.5, u), (0.5, np.exp(1j * theta) * u)), label=f"phase_pair:{theta!r}")


def local_family(f: KrausFamily, site: int, n_sites: int, site_dim: int = 2) -> KrausFamily:
    """Embed a single-site family into an ``n_sites`` chain."""
    return KrausFamily(
        tuple((w, embed(op, site, n_sites, site_dim)) for w, op in f.branches), label=f"{f.label}@{site}"
    )


def site_dephasing(n_sites: int, p: float) -> KrausFamily:
    """Independent dephasing on every site of an ``n_sites`` qubit chain (2**n_sites branches)."""
    fam = local_family(dephasing(p), 0, n_sites)
    for s in range(1, n_sites):
        fam = compose(local_family(dephasing(p), s, n_sites), fam)
    return fam


def random_family(dim: int, n_branches: int, rng: np.random.Generator, label: str = "random") -> KrausFamily:
    """Random complete family: Gaussian operators right-multiplied by ``S^{-1/2}``."""
    g = rng.normal(size=(n_branches, dim, dim)) + 1j * rng.normal(size=(n_branches, dim, dim))
    s = np.einsum("kji,kjl->il", g.conj(), g)
    vals, vecs = np.linalg.eigh(s)
    inv_sqrt = (vecs / np.sqrt(vals)) @ vecs.conj().T
    return KrausFamily.from_operators([k @ inv_sqrt for k in g], label=label)


def random_unitary_mixture(dim: int, n_branches: int, rng: np.random.Generator) -> KrausFamily:
    p = rng.dirichlet(np.ones(n_branches))
    return KrausFamily(tuple((pi, random_unitary(dim, rng)) for pi in p), label="unitary_mixture")


_REGISTRY = {
    "identity": lambda *a: identity_family(int(a[0]) if a else 2),
    "dephasing": lambda p: dephasing(float(p)),
    "depolarizing": lambda p: depolarizing(float(p)),
    "amplitude_damping": lambda g: amplitude_damping(float(g)),
    "gaussian_localization": lambda n, w, r: gaussian_localization(int(n), float(w), float(r)),
    "site_dephasing": lambda n, p: site_dephasing(int(n), float(p)),
    "hadamard": lambda: unitary_family(np.array([[1, 1], [1, -1]]) / np.sqrt(2), label="hadamard"),
    "cnot": lambda: unitary_family(
        np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]]), label="cnot"
    ),
}


def family_from_label(label: str) -> KrausFamily:
    """Build a bundled family from ``name[:arg[:arg...]]``."""
    name, *args = label.split(":")
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown family {name!r}; known: {sorted(_REGISTRY)}") from None
    try:
        return factory(*args)
    except TypeError:
        raise ValueError(f"wrong number of parameters in family label {label!r}") from None


def bundled_families() -> list[KrausFamily]:
    return [
        identity_family(2),
        identity_family(4),
        dephasing(0.25),
        dephasing(0.5),
        depolarizing(0.3),
        amplitude_damping(0.2),
        gaussian_localization(8, 1.0, 0.3),
        phase_pair(np.kron(I2, X), 0.7),
        site_dephasing(3, 0.1),
        family_from_label("hadamard"),
        family_from_label("cnot"),
    ]


def _check_prob(p: float, name: str) -> None:
    if not 0 <= p <= 1:
        raise ValueError(f"{name} must lie in [0, 1], got {p!r}")
