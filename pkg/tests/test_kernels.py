import numpy as np
import pytest

from collapselab import _kernels_py, kernels
from collapselab.families import depolarizing, gaussian_localization, random_family, site_dephasing
from collapselab.linops import random_state

GOLDEN = 0x9E3779B97F4A7C15
MASK = (1 << 64) - 1


def splitmix_oracle(z):
    z &= MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def test_mix64_reference_values():
    # first SplitMix64 outputs for state 0 (the generator adds GOLDEN before mixing)
    assert int(_kernels_py.mix64(GOLDEN)[0]) == 0xE220A8397B1DCDAF
    assert int(_kernels_py.mix64((2 * GOLDEN) & MASK)[0]) == 0x6E789E6AA1B965F4


def test_rng_matches_integer_oracle(backend):
    zs = [0, 1, GOLDEN, MASK, 123456789]
    assert [int(v) for v in backend.mix64(zs)] == [splitmix_oracle(z) for z in zs]
    seeds = backend.trajectory_seeds(42, np.arange(4, dtype=np.uint64))
    assert [int(s) for s in seeds] == [42 ^ splitmix_oracle((i + 1) * GOLDEN) for i in range(4)]
    s = int(seeds[2])
    draws = backend.stream_draws(np.array([s], dtype=np.uint64), 5)[0]
    expect = [(splitmix_oracle(s + (k + 1) * GOLDEN) >> 11) * 2.0**-53 for k in range(5)]
    assert draws.tolist() == expect


def test_draws_in_unit_interval(backend):
    d = backend.stream_draws(backend.trajectory_seeds(7, np.arange(1000, dtype=np.uint64)), 50)
    assert d.min() >= 0.0 and d.max() < 1.0
    assert abs(d.mean() - 0.5) < 0.01


def test_sample_branch_inverse_cdf(backend):
    f = site_dephasing(2, 0.5)  # 4 branches of probability 1/4 on |+->
    psi = np.full(4, 0.5, dtype=complex)
    for draw, want in [(0.0, 0), (0.24, 0), (0.26, 1), (0.51, 2), (0.999, 3)]:
        idx, p, total, post = backend.sample_branch(f.effective, psi, draw, 1e-14)
        assert idx == want
        assert p == pytest.approx(0.25)
        assert total == pytest.approx(1.0)
        assert np.linalg.norm(post) == pytest.approx(1.0)


def test_sample_branch_skips_zero_branches(backend):
    f = depolarizing(0.0)  # single branch; add a zero branch by hand
    eff = np.stack([f.effective[0], np.zeros((2, 2), complex)])
    idx, *_ = backend.sample_branch(eff, np.array([1, 0], complex), 0.9999, 1e-14)
    assert idx == 0
    idx, _, total, _ = backend.sample_branch(np.zeros((1, 2, 2), complex), np.array([1, 0], complex), 0.5, 1e-14)
    assert idx == -1 and total == 0.0


def test_backends_agree():
    found = kernels.backends()
    if "cython" not in found:
        pytest.skip("compiled extension not built")
    py, cy = found["python"], found["cython"]
    rng = np.random.default_rng(5)
    for f in (random_family(4, 3, rng), gaussian_localization(6, 1.0, 0.5)):
        psi0 = random_state(f.dim, rng).amplitudes
        seeds = py.trajectory_seeds(99, np.arange(300, dtype=np.uint64))
        a = py.run_batch(f.effective, psi0, seeds, 25, 1e-14)
        b = cy.run_batch(f.effective, psi0, seeds, 25, 1e-14)
        assert np.array_equal(a[1], b[1])
        assert np.allclose(a[0], b[0], atol=1e-12)
        assert np.allclose(a[2], b[2], atol=1e-12)
        assert a[4] == b[4] == 0


def test_selected_backend_reported():
    assert kernels.BACKEND in kernels.backends()


def test_benchmark_quick(capsys):
    import importlib.util
    from pathlib import Path

    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    spec = importlib.util.spec_from_file_location("bench_kernels", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    rows = mod.main(["--quick", "--repeat", "1"])
    assert len(rows) == len(mod.WORKLOADS)
    assert "speedup" in capsys.readouterr().out or "cython" not in kernels.backends()


def test_pure_python_switch():
    import os
    import subprocess
    import sys

    env = dict(os.environ, COLLAPSELAB_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from collapselab import kernels; print(kernels.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"


def test_tie_break_lower_index(backend):
    from collapselab.families import dephasing

    plus = np.array([1, 1], complex) / np.sqrt(2)
    eff = dephasing(0.5).effective
    assert backend.sample_branch(eff, plus, 0.5, 1e-14)[0] == 0
    seeds = np.zeros(1, np.uint64)
    assert backend.run_batch(eff, plus, seeds, 3, 1e-14)[4] == 0
