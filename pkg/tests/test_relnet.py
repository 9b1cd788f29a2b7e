import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from collapselab.families import dephasing, depolarizing, family_from_label, gaussian_localization
from collapselab.linops import X, Z, StateVector, ghz_state, random_state
from collapselab.semigroup import KrausFamily
from collapselab.relnet import (
    CausalityError,
    CauchySurface,
    LatticeSpacetime,
    LatticeState,
    LocalKrausAssignment,
    canonical_order,
    cell_draw,
    check_no_signaling,
    check_spacelike_commutation,
    evolve_between,
    exact_region_ensemble,
    load_scenario,
    slope_violation,
    surface_diff,
)


def cnot_commutator_oracle(n_bits=3):
    """Frobenius norm of [CNOT(0->1), CNOT(1->2)] from the underlying bit permutations.

    Both gates permute basis states, so PQ - QP has a +1 and a -1 in every column
    where the two products disagree; the squared norm is twice that count.
    """

    def cnot(c, t):
        def act(x):
            bc = (x >> (n_bits - 1 - c)) & 1
            return x ^ (bc << (n_bits - 1 - t))

        return act

    p, q = cnot(0, 1), cnot(1, 2)
    count = sum(p(q(x)) != q(p(x)) for x in range(2**n_bits))
    return np.sqrt(2 * count)


def test_spacelike_relation():
    lat = LatticeSpacetime(6)
    assert lat.distance(0, 5) == 1
    assert lat.distance(1, 4) == 3
    assert lat.spacelike((0, 0), (1, 0))
    assert not lat.spacelike((0, 0), (1, 1))
    assert lat.spacelike((0, 0), (3, 2))
    assert not lat.spacelike((0, 0), (0, 5))
    assert not lat.spacelike((0, 0), (5, 1))


def test_lattice_limits():
    with pytest.raises(ValueError):
        LatticeSpacetime(13)
    assert LatticeSpacetime(12).dim == 4096


def test_slope_bound():
    assert slope_violation([0, 1, 2, 1]) is None
    assert slope_violation([0, 0, 2, 1]) == 1
    with pytest.raises(CausalityError, match="sites 1 and 2"):
        CauchySurface((0, 0, 2, 1))
    # periodic wrap-around counts too
    assert slope_violation([0, 1, 2, 2, 2]) == 4


def test_surface_diff_cells():
    a = CauchySurface((0, 0, 0, 0))
    b = CauchySurface((1, 2, 1, 0))
    r = surface_diff(a, b)
    assert r.cells == {(0, 0), (1, 0), (1, 1), (2, 0)}
    assert list(r) == [(0, 0), (1, 0), (2, 0), (1, 1)]
    with pytest.raises(CausalityError):
        surface_diff(b, a)


def test_admissibility():
    lat = LatticeSpacetime(3)
    good = LocalKrausAssignment(lat, {s: dephasing(0.3) for s in range(3)})
    assert good.is_admissible()
    bad = LocalKrausAssignment(lat, {}, {(0, 0): ((0, 1), family_from_label("cnot"))})
    assert not bad.is_admissible()
    with pytest.raises(ValueError):
        LocalKrausAssignment(lat, {0: family_from_label("cnot")}).entry((0, 0))
    with pytest.raises(KeyError):
        LocalKrausAssignment(lat, {}).entry((0, 0))


def test_spacelike_commutators_exactly_zero():
    lat = LatticeSpacetime(4)
    fams = [dephasing(0.3), depolarizing(0.2), gaussian_localization(2, 0.7, 0.5), family_from_label("hadamard")]
    asg = LocalKrausAssignment(lat, {s: fams[s] for s in range(4)})
    for r1, r2 in [([(0, 0)], [(1, 0)]), ([(0, 0), (1, 0)], [(2, 0), (3, 0)]), ([(0, 0)], [(2, 1)])]:
        assert check_spacelike_commutation(asg, r1, r2) == 0.0
    with pytest.raises(CausalityError):
        check_spacelike_commutation(asg, [(0, 0)], [(0, 1)])
    with pytest.raises(CausalityError):
        check_spacelike_commutation(asg, [(0, 0)], [(0, 0)])


def test_cnot_fixture_detects_violation():
    lat = LatticeSpacetime(3)
    cnot = family_from_label("cnot")
    asg = LocalKrausAssignment(lat, {}, {(0, 0): ((0, 1), cnot), (1, 0): ((1, 2), cnot)})
    norm = check_spacelike_commutation(asg, [(0, 0)], [(1, 0)])
    assert norm == pytest.approx(cnot_commutator_oracle(), abs=1e-14)
    assert norm == pytest.approx(2 * np.sqrt(2), abs=1e-14)
    assert norm > 0.1


def no_signaling_cases():
    """(n_sites, families, region, observable, obs_sites, state)."""
    rng = np.random.default_rng(77)
    fam_sets = [
        lambda: dephasing(0.4),
        lambda: depolarizing(0.3),
        lambda: gaussian_localization(2, 0.5, 0.7),
        lambda: family_from_label("amplitude_damping:0.35"),
    ]
    states = {
        "ghz4": ghz_state(4),
        "rand4": random_state(16, rng),
        "bell_pairs": StateVector.normalized(np.kron([1, 0, 0, 1], [1, 0, 0, 1])),
        "rand4b": random_state(16, rng),
        "product": StateVector.normalized(np.kron(np.kron([1, 1], [1, 1j]), np.kron([1, 0], [2, 1]))),
    }
    cases = []
    for name, psi in states.items():
        for k, mk in enumerate(fam_sets):
            cases.append((4, mk, [(0, 0)], Z, (2,), psi, f"{name}-{k}-Z"))
        cases.append((4, fam_sets[0], [(0, 0), (1, 0)], X, (3,), psi, f"{name}-pair-X"))
    return cases


CASES = no_signaling_cases()


def test_enough_no_signaling_scenarios():
    assert len(CASES) >= 20
    assert sum("product" not in c[-1] for c in CASES) >= 16


@pytest.mark.parametrize("case", CASES, ids=[c[-1] for c in CASES])
def test_no_signaling(case):
    n, mk, region, obs, sites, psi, _ = case
    lat = LatticeSpacetime(n)
    asg = LocalKrausAssignment(lat, {s: mk() for s in range(n)})
    assert check_no_signaling(asg, region, obs, psi, sites) <= 1e-12


def test_no_signaling_detects_local_observable():
    """Sanity control: an observable on the evolved site does change."""
    lat = LatticeSpacetime(2)
    asg = LocalKrausAssignment(lat, {0: dephasing(0.5), 1: dephasing(0.5)})
    rho = np.outer(ghz_state(2).amplitudes, ghz_state(2).amplitudes.conj())
    out = exact_region_ensemble(rho, [(0, 0)], asg)
    xx = np.kron(X, X)
    assert abs(np.trace(xx @ rho) - np.trace(xx @ out)) == pytest.approx(1.0)
    with pytest.raises(CausalityError):
        check_no_signaling(asg, [(0, 0)], Z, ghz_state(2), (0,))
    with pytest.raises(CausalityError):
        check_no_signaling(LocalKrausAssignment(LatticeSpacetime(4), {s: dephasing(0.5) for s in range(4)}),
                           [(0, 0)], Z, ghz_state(4), (1,), observable_time=1)


def order_swap_setup():
    lat = LatticeSpacetime(4)
    asg = LocalKrausAssignment(lat, {s: gaussian_localization(2, 0.6, 0.8) for s in range(4)})
    s0 = CauchySurface((0, 0, 0, 0))
    sa = CauchySurface((1, 0, 0, 0))
    sb = CauchySurface((0, 0, 1, 0))
    s1 = CauchySurface((1, 0, 1, 0))
    return lat, asg, s0, sa, sb, s1


@pytest.mark.parametrize("seed", [0, 1, 2, 12345, 2**63 + 5])
def test_order_swap_bit_exact(seed):
    lat, asg, s0, sa, sb, s1 = order_swap_setup()
    rng = np.random.default_rng(seed % 2**32)
    psi = lat.product_state([random_state(2, rng).amplitudes for _ in range(4)])
    a1, _ = evolve_between(psi, s0, sa, asg, seed)
    a2, _ = evolve_between(a1, sa, s1, asg, seed)
    b1, _ = evolve_between(psi, s0, sb, asg, seed)
    b2, _ = evolve_between(b1, sb, s1, asg, seed)
    assert a2.realized == b2.realized
    assert np.array_equal(a2.psi.amplitudes, b2.psi.amplitudes)
    direct, _ = evolve_between(psi, s0, s1, asg, seed)
    assert np.array_equal(direct.psi.amplitudes, a2.psi.amplitudes)


def test_order_swap_entangled_distribution():
    """With correlated inputs the joint outcome law is order independent."""
    lat, asg, s0, sa, sb, s1 = order_swap_setup()
    psi = StateVector.normalized(np.kron([1, 0, 0, 1], [1, 1, 1, -1]))
    n = 3000
    counts = {"ab": {}, "ba": {}}
    for seed in range(n):
        for tag, mid in (("ab", sa), ("ba", sb)):
            st1, _ = evolve_between(psi, s0, mid, asg, seed)
            st2, _ = evolve_between(st1, mid, s1, asg, seed)
            key = (st2.realized[(0, 0)], st2.realized[(2, 0)])
            counts[tag][key] = counts[tag].get(key, 0) + 1
    # exact joint law from the Kraus branches
    base = psi.amplitudes
    for (i, j) in set(counts["ab"]) | set(counts["ba"]):
        v = asg.embedded_branches((2, 0))[j] @ (asg.embedded_branches((0, 0))[i] @ base)
        p = float(np.vdot(v, v).real)
        for tag in counts:
            freq = counts[tag].get((i, j), 0) / n
            assert abs(freq - p) < 5 * np.sqrt(p * (1 - p) / n) + 1e-9


def test_rejects_reevolving_cells():
    lat, asg, s0, sa, _, _ = order_swap_setup()
    st1, _ = evolve_between(lat.product_state([[1, 0]] * 4), s0, sa, asg, 1)
    with pytest.raises(CausalityError):
        evolve_between(st1, s0, sa, asg, 1)


def test_trajectory_record_from_lattice():
    lat, asg, s0, _, _, s1 = order_swap_setup()
    st, rec = evolve_between(lat.product_state([[1, 1]] * 4), s0, s1, asg, 8)
    assert len(rec.steps) == 2
    assert rec.branch_indices == [st.realized[(0, 0)], st.realized[(2, 0)]]
    assert np.array_equal(rec.final_state.amplitudes, st.psi.amplitudes)


def test_lattice_state_incremental_matches_canonical():
    lat, asg, *_ = order_swap_setup()
    psi = lat.product_state([[1, 1]] * 4)
    st = LatticeState.start(lat, psi)
    ev_late = ((1, 1), (1,), 0, asg.entry((1, 1))[1].effective[0])
    ev_early = ((3, 0), (3,), 1, asg.entry((3, 0))[1].effective[1])
    a = st.with_event(ev_early).with_event(ev_late)
    b = st.with_event(ev_late).with_event(ev_early)
    assert np.array_equal(a.raw, b.raw)


def test_cell_draw_keyed_by_cell():
    assert cell_draw(5, (1, 2)) == cell_draw(5, (1, 2))
    assert cell_draw(5, (1, 2)) != cell_draw(5, (2, 1))
    assert cell_draw(5, (1, 2)) != cell_draw(6, (1, 2))


def test_load_scenario():
    sc = load_scenario(
        {
            "n_sites": 3,
            "surfaces": [[0, 0, 0], [1, 0, 0], [1, 1, 1]],
            "families": {"0": "dephasing:0.3", "1": "dephasing:0.3", "2": "depolarizing:0.1"},
            "observables": [{"site": 2, "pauli": "Z"}, {"sites": [1, 2], "paulis": "XX"}],
        }
    )
    assert sc.lattice.n_sites == 3
    assert len(sc.surfaces) == 3
    assert sc.observables[1][1].shape == (4, 4)
    with pytest.raises(CausalityError, match="sites 0 and 1"):
        load_scenario({"n_sites": 3, "surfaces": [[0, 2, 1]], "families": {}})


@given(st.lists(st.sampled_from([-1, 0, 1]), min_size=3, max_size=6), st.integers(0, 5), st.integers(0, 5))
@settings(max_examples=80, deadline=None)
def test_region_cells_between_surfaces(steps, x, k):
    times = [int(v) for v in np.cumsum([0] + steps[:-1])]
    if slope_violation(times) is not None:
        return
    a = CauchySurface(tuple(times))
    try:
        b = a.bump(x % len(times), k)
    except CausalityError:
        return
    r = surface_diff(a, b)
    assert len(r) == k
    assert canonical_order(r.cells) == list(r)


@given(st.integers(0, 7), st.integers(0, 7), st.integers(0, 5), st.integers(0, 5))
@settings(max_examples=100, deadline=None)
def test_spacelike_symmetric(x, y, t, s):
    lat = LatticeSpacetime(8)
    assert lat.spacelike((x, t), (y, s)) == lat.spacelike((y, s), (x, t))
    if lat.spacelike((x, t), (y, s)):
        assert x != y


def test_advance_cell_examples():
    from collapselab.families import identity_family
    from collapselab.relnet import advance_cell

    lat = LatticeSpacetime(4)
    plus4 = lat.product_state([[1, 1]] * 4)
    asg = LocalKrausAssignment(lat, {s: (dephasing(0.25) if s == 1 else identity_family(2)) for s in range(4)})
    st, idx, p = advance_cell(plus4, (1, 0), asg, 0.9)
    assert (idx, p) == (1, pytest.approx(0.25))
    # oracle: Z on site 1 of |+>^4, built from the full 16 x 16 operator
    z1 = np.kron(np.kron(np.eye(2), Z), np.eye(4))
    assert np.allclose(st.amplitudes, z1 @ plus4.amplitudes, atol=1e-15)
    _, idx, p = advance_cell(plus4, (1, 0), asg, 0.2)
    assert (idx, p) == (0, pytest.approx(0.75))
    st, idx, p = advance_cell(plus4, (2, 3), asg, 0.6)
    assert (idx, p) == (0, pytest.approx(1.0))
    assert np.allclose(st.amplitudes, plus4.amplitudes)
    # diagonal projective family on a basis state: all probability on one branch
    proj = KrausFamily.from_operators([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])])
    basis = StateVector.basis(16, 0b0101)
    st, idx, p = advance_cell(basis, (1, 0), LocalKrausAssignment(lat, {1: proj}), 0.01)
    assert (idx, p) == (1, 1.0)
    assert np.array_equal(st.amplitudes, basis.amplitudes)
    with pytest.raises(KeyError):
        advance_cell(plus4, (0, 0), LocalKrausAssignment(lat, {}), 0.5)


def test_evolve_trivial_cases():
    from collapselab.families import identity_family

    lat = LatticeSpacetime(4)
    psi = random_state(16, np.random.default_rng(2))
    asg = LocalKrausAssignment(lat, {s: identity_family(2) for s in range(4)})
    flat = lat.flat(0)
    st, rec = evolve_between(psi, flat, flat, asg, 1)
    assert rec.steps == () and np.array_equal(st.psi.amplitudes, psi.amplitudes)
    st, rec = evolve_between(psi, flat, lat.flat(1), asg, 1)
    assert rec.branch_indices == [0, 0, 0, 0]
    assert np.allclose(st.psi.amplitudes, psi.amplitudes, atol=1e-15)


def test_distant_sites_commute_exactly():
    lat = LatticeSpacetime(4)
    asg = LocalKrausAssignment(lat, {0: depolarizing(0.3), 2: gaussian_localization(2, 0.4, 0.9)})
    assert check_spacelike_commutation(asg, [(0, 0)], [(2, 0)]) == 0.0
