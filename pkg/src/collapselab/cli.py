"""Command line experiment runner.

    collapselab run <config.json>
    collapselab verify <config.json>

A config is a JSON object::

    {"experiment": "massshell", "seed": 0, "output_dir": "out/ms",
     "workers": 1, "parameters": {...}}

Exit codes: 0 success, 1 validation failure, 2 internal inconsistency.
``COLLAPSELAB_OUTPUT_ROOT`` (if set) is prefixed to relative ``output_dir`` values.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, kernels, massshell, nogo, relnet
from .families import family_from_label
from .linops import StateVector, bell_state, ghz_state, trace_distance
from .semigroup import IncompleteFamilyError, KrausFamily
from .unravel import (
    InconsistencyError,
    SamplerConfig,
    exact_ensemble,
    run_ensemble,
    _mean_projector,
)

EXPERIMENTS = ("unravel", "relnet", "massshell", "nogo-sweep", "vacuum-energy")
TOP_KEYS = {"experiment", "seed", "output_dir", "workers", "parameters"}


class ConfigError(ValueError):
    """Validation failure; the message names the offending field."""


# -- parameter schemas ------------------------------------------------------------

def _positive_int(name):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ConfigError(f"{name}: must be a positive integer, got {v!r}")
        return v
    return check


def _nonneg_int(name):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            raise ConfigError(f"{name}: must be a non-negative integer, got {v!r}")
        return v
    return check


def _positive_float(name):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not (v > 0 and math.isfinite(v)):
            raise ConfigError(f"{name}: must be a positive number, got {v!r}")
        return float(v)
    return check


def _probability(name):
    def check(v):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 <= v <= 1:
            raise ConfigError(f"{name}: must be a number in [0, 1], got {v!r}")
        return float(v)
    return check


def _choice(name, options):
    def check(v):
        if v not in options:
            raise ConfigError(f"{name}: must be one of {list(options)}, got {v!r}")
        return v
    return check


def _family(name):
    def check(v):
        try:
            if isinstance(v, str):
                family_from_label(v)
            elif isinstance(v, dict):
                KrausFamily.from_dict(v)
            else:
                raise ValueError("expected a family label or a serialized family object")
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{name}: {exc}") from None
        return v
    return check


def _state_spec(name):
    def check(v):
        try:
            _build_state(v)
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{name}: {exc}") from None
        return v
    return check


def _cutoffs(name):
    def check(v):
        if not isinstance(v, list) or not v or not all(isinstance(x, (int, float)) and x > 0 for x in v):
            raise ConfigError(f"{name}: must be a non-empty list of positive numbers")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise ConfigError(f"{name}: must be strictly increasing")
        return [float(x) for x in v]
    return check


def _float_list(name):
    def check(v):
        if not isinstance(v, list) or not all(isinstance(x, (int, float)) and math.isfinite(x) for x in v):
            raise ConfigError(f"{name}: must be a list of finite numbers")
        return [float(x) for x in v]
    return check


def _int_list(name):
    def check(v):
        if not isinstance(v, list) or not v or not all(isinstance(x, int) and x >= 1 for x in v):
            raise ConfigError(f"{name}: must be a non-empty list of positive integers")
        return v
    return check


def _scenario(name):
    def check(v):
        if not isinstance(v, dict):
            raise ConfigError(f"{name}: must be a scenario object")
        allowed = {"n_sites", "site_dim", "surfaces", "families", "observables", "initial_state"}
        extra = set(v) - allowed
        if extra:
            raise ConfigError(f"{name}: unknown key(s) {sorted(extra)}")
        for key in ("n_sites", "surfaces"):
            if key not in v:
                raise ConfigError(f"{name}.{key}: missing")
        for i, s in enumerate(v["surfaces"]):
            bad = relnet.slope_violation(s)
            if bad is not None:
                raise ConfigError(
                    f"{name}.surfaces[{i}]: light-cone slope violated at site index {bad} "
                    f"(|t[{(bad + 1) % len(s)}] - t[{bad}]| > 1)"
                )
            if len(s) != v["n_sites"]:
                raise ConfigError(f"{name}.surfaces[{i}]: has {len(s)} entries, expected n_sites={v['n_sites']}")
        for i, (a, b) in enumerate(zip(v["surfaces"], v["surfaces"][1:])):
            for x, (ta, tb) in enumerate(zip(a, b)):
                if tb < ta:
                    raise ConfigError(f"{name}.surfaces[{i + 1}]: dips below the previous surface at site index {x}")
        try:
            sc = relnet.load_scenario({k: v[k] for k in v if k != "initial_state"})
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{name}: {exc}") from None
        for site in sc.assignment.site_families:
            if not 0 <= site < sc.lattice.n_sites:
                raise ConfigError(f"{name}.families: site index {site} out of range")
        for r in _regions(sc):
            for c in r:
                if c[0] not in sc.assignment.site_families:
                    raise ConfigError(f"{name}.families: no family for site index {c[0]} (needed by cell {c})")
        return v
    return check


SCHEMAS = {
    "unravel": {
        "family": ("dephasing:0.5", _family("parameters.family")),
        "initial_state": ("plus", _state_spec("parameters.initial_state")),
        "n_steps": (1, _nonneg_int("parameters.n_steps")),
        "n_trajectories": (10000, _positive_int("parameters.n_trajectories")),
        "zero_branch_epsilon": (1e-14, _positive_float("parameters.zero_branch_epsilon")),
        "log_trajectories": (1000, _nonneg_int("parameters.log_trajectories")),
    },
    "relnet": {
        "scenario": (None, _scenario("parameters.scenario")),
        "n_trajectories": (10, _positive_int("parameters.n_trajectories")),
    },
    "massshell": {
        "mass": (1.0, _positive_float("parameters.mass")),
        "spatial_dim": (1, _choice("parameters.spatial_dim", (1, 3))),
        "cutoffs": ([10.0, 100.0, 1000.0], _cutoffs("parameters.cutoffs")),
        "rapidities": ([0.5, 1.0, 2.0], _float_list("parameters.rapidities")),
        "interval": ([-1.0, 1.0], _float_list("parameters.interval")),
    },
    "nogo-sweep": {
        "n_instances": (1000, _positive_int("parameters.n_instances")),
        "ambient_dim": (4, _positive_int("parameters.ambient_dim")),
        "vacuum": ("entangled", _choice("parameters.vacuum", ("entangled", "product"))),
        "n_branches": (2, _positive_int("parameters.n_branches")),
    },
    "vacuum-energy": {
        "n_sites": (4, _positive_int("parameters.n_sites")),
        "coupling": (1.0, _positive_float("parameters.coupling")),
        "field": (1.0, _positive_float("parameters.field")),
        "dephasing": (0.1, _probability("parameters.dephasing")),
        "n_steps": ([1, 2, 5, 10], _int_list("parameters.n_steps")),
    },
}


def validate(raw) -> dict:
    """Return the fully resolved config or raise :class:`ConfigError`."""
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be a JSON object")
    extra = set(raw) - TOP_KEYS
    if extra:
        raise ConfigError(f"config: unknown key(s) {sorted(extra)}")
    if "experiment" not in raw:
        raise ConfigError("experiment: missing (one of " + ", ".join(EXPERIMENTS) + ")")
    exp = _choice("experiment", EXPERIMENTS)(raw["experiment"])
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed: must be an integer in [0, 2**64), got {seed!r}")
    workers = _positive_int("workers")(raw.get("workers", 1))
    out = raw.get("output_dir", f"out/{exp}")
    if not isinstance(out, str) or not out:
        raise ConfigError("output_dir: must be a non-empty string")
    params = raw.get("parameters", {})
    if not isinstance(params, dict):
        raise ConfigError("parameters: must be an object")
    schema = SCHEMAS[exp]
    extra = set(params) - set(schema)
    if extra:
        raise ConfigError(f"parameters: unknown key(s) {sorted(extra)} for experiment {exp!r}")
    resolved = {}
    for key, (default, check) in schema.items():
        if key in params:
            resolved[key] = check(params[key])
        elif default is None:
            raise ConfigError(f"parameters.{key}: missing")
        else:
            resolved[key] = default
    if exp == "nogo-sweep":
        try:
            nogo.default_factor_dims(resolved["ambient_dim"])
        except ValueError as exc:
            raise ConfigError(f"parameters.ambient_dim: {exc}") from None
    if exp == "massshell":
        if len(resolved["interval"]) != 2 or resolved["interval"][0] >= resolved["interval"][1]:
            raise ConfigError("parameters.interval: must be [k_lo, k_hi] with k_lo < k_hi")
    if exp == "vacuum-energy" and resolved["n_sites"] > 10:
        raise ConfigError("parameters.n_sites: at most 10 sites supported")
    return {"experiment": exp, "seed": seed, "workers": workers, "output_dir": out, "parameters": resolved}


# -- helpers -----------------------------------------------------------------------

def _build_state(spec) -> StateVector:
    if isinstance(spec, dict):
        if set(spec) - {"re", "im"}:
            raise ValueError("state object takes only 're' and 'im'")
        re = np.asarray(spec["re"], dtype=float)
        im = np.asarray(spec.get("im", np.zeros_like(re)), dtype=float)
        return StateVector.normalized(re + 1j * im)
    if not isinstance(spec, str):
        raise ValueError("state must be a name or {'re': [...], 'im': [...]}")
    name, *args = spec.split(":")
    n = int(args[0]) if args else 1
    if name == "plus":
        v = np.ones(2**n) / np.sqrt(2**n)
        return StateVector.normalized(v)
    if name == "zero":
        return StateVector.basis(2**n, 0)
    if name == "bell":
        return bell_state()
    if name == "ghz":
        return ghz_state(n)
    raise ValueError(f"unknown state name {name!r} (plus[:n], zero[:n], bell, ghz:n)")


def _build_family(spec) -> KrausFamily:
    return family_from_label(spec) if isinstance(spec, str) else KrausFamily.from_dict(spec)


def _regions(sc: relnet.Scenario):
    return [relnet.surface_diff(a, b) for a, b in zip(sc.surfaces, sc.surfaces[1:])]


def _fmt(x) -> str:
    return repr(float(x))


def _csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (_fmt(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def _matrix_json(m) -> dict:
    m = np.asarray(m)
    return {"re": m.real.tolist(), "im": m.imag.tolist()}


# -- experiments ---------------------------------------------------------------------
# each returns (files: {name: text}, columns: {file: {column: description}}, summary lines)

def _exp_unravel(cfg):
    p = cfg["parameters"]
    f = _build_family(p["family"])
    psi0 = _build_state(p["initial_state"])
    if psi0.dim != f.dim:
        raise ConfigError(f"parameters.initial_state: dimension {psi0.dim} does not match family dimension {f.dim}")
    sc = SamplerConfig(cfg["seed"], p["n_trajectories"], p["zero_branch_epsilon"], cfg["workers"])
    seeds, finals, branches = run_ensemble(f, psi0, p["n_steps"], sc)
    est = _mean_projector(finals)
    est = 0.5 * (est + est.conj().T)
    est /= np.trace(est).real
    exact = exact_ensemble(f, psi0, p["n_steps"]).matrix
    td = trace_distance(est, exact)
    lines = []
    for i in range(min(p["log_trajectories"], len(seeds))):
        lines.append(json.dumps({
            "seed": int(seeds[i]),
            "branch_indices": branches[i].tolist(),
            "final_state": {"re": finals[i].real.tolist(), "im": finals[i].imag.tolist()},
        }))
    ensemble = {"estimate": _matrix_json(est), "exact": _matrix_json(exact), "trace_distance": td,
                "n_trajectories": p["n_trajectories"], "bound_5_over_sqrt_n": 5 / math.sqrt(p["n_trajectories"])}
    files = {
        "trajectories.jsonl": "".join(l + "\n" for l in lines),
        "ensemble.json": json.dumps(ensemble, indent=1) + "\n",
    }
    cols = {
        "trajectories.jsonl": {"seed": "per-trajectory 64-bit seed", "branch_indices": "realized branch per step",
                               "final_state": "final state amplitudes"},
        "ensemble.json": {"trace_distance": "Monte Carlo vs exact ensemble trace distance",
                          "estimate": "mean of final projectors", "exact": "iterated channel"},
    }
    return files, cols, [f"trace distance (MC vs exact): {td:.6g} with N={p['n_trajectories']}"]


def _exp_relnet(cfg):
    p = cfg["parameters"]
    raw = p["scenario"]
    sc = relnet.load_scenario({k: raw[k] for k in raw if k != "initial_state"})
    lat = sc.lattice
    psi0 = _build_state(raw.get("initial_state", f"plus:{lat.n_sites}"))
    if psi0.dim != lat.dim:
        raise ConfigError(f"parameters.scenario.initial_state: dimension {psi0.dim} != lattice dimension {lat.dim}")
    regions = _regions(sc)
    rows = []
    for ri, region in enumerate(regions):
        for sites, mat, label in sc.observables:
            try:
                dev = relnet.check_no_signaling(sc.assignment, region, mat, psi0, sites)
                status = "ok" if dev <= 1e-12 else "violated"
            except relnet.CausalityError:
                dev, status = float("nan"), "not-spacelike"
            rows.append({"region": ri, "observable": label, "deviation": dev, "status": status})
    # pairwise commutation between spacelike cells across all regions
    cells = sorted(set().union(*[r.cells for r in regions]), key=lambda c: (c[1], c[0])) if regions else []
    comm = 0.0
    for i, a in enumerate(cells):
        for b in cells[i + 1:]:
            if lat.spacelike(a, b):
                comm = max(comm, relnet.check_spacelike_commutation(sc.assignment, [a], [b]))
    traj = []
    for t, s in enumerate(kernels.trajectory_seeds(cfg["seed"], np.arange(p["n_trajectories"], dtype=np.uint64))):
        state = relnet.LatticeState.start(lat, psi0)
        branch_seq = []
        for a, b in zip(sc.surfaces, sc.surfaces[1:]):
            state, rec = relnet.evolve_between(state, a, b, sc.assignment, int(s))
            branch_seq += rec.branch_indices
        psi = state.psi.amplitudes
        traj.append(json.dumps({"seed": int(s), "branch_indices": branch_seq,
                                "final_state": {"re": psi.real.tolist(), "im": psi.imag.tolist()}}))
    files = {
        "no_signaling.csv": _csv(rows) if rows else "region,observable,deviation,status\n",
        "commutation.json": json.dumps({"max_spacelike_commutator_norm": comm, "n_cells": len(cells)}) + "\n",
        "trajectories.jsonl": "".join(l + "\n" for l in traj),
    }
    cols = {
        "no_signaling.csv": {"region": "index of surface pair", "observable": "Pauli string @ sites",
                             "deviation": "|<O>_before - <O>_ensemble after|", "status": "ok/violated/not-spacelike"},
        "commutation.json": {"max_spacelike_commutator_norm": "max Frobenius norm over spacelike cell pairs"},
        "trajectories.jsonl": {"branch_indices": "branches in canonical cell order per region"},
    }
    worst = max((r["deviation"] for r in rows if r["status"] != "not-spacelike"), default=0.0)
    return files, cols, [f"max no-signaling deviation: {worst:.3e}", f"max spacelike commutator norm: {comm:.3e}"]


def _exp_massshell(cfg):
    p = cfg["parameters"]
    m, dim = p["mass"], p["spatial_dim"]
    rows = massshell.scan_rows(m, dim, p["cutoffs"])
    for r in rows:
        r["asymptotic"] = massshell.asymptotic_form(m, dim, r["cutoff"])
    files = {"scan.csv": _csv(rows)}
    cols = {"scan.csv": {"cutoff": "K; region |k| <= K", "omega": "adaptive quadrature",
                         "omega_closed_form": "antiderivative", "relative_error": "|omega - closed| / closed",
                         "asymptotic": "2 ln(2K/m) (1D) or 2 pi K^2 (3D)"}}
    lines = [f"max relative error: {max(r['relative_error'] for r in rows):.3e}"]
    if dim == 1 and p["rapidities"]:
        base = massshell.MassShellSlice(m, *p["interval"])
        w0 = massshell.invariant_measure(base)
        brows = []
        for eta in p["rapidities"]:
            b = massshell.boost_slice(base, eta)
            w = massshell.invariant_measure(b)
            brows.append({"rapidity": eta, "k_lo": b.k_lo, "k_hi": b.k_hi, "omega": w,
                          "relative_change": abs(w - w0) / w0,
                          "naive_relative_change": abs(massshell.naive_measure(b) - massshell.naive_measure(base))
                          / massshell.naive_measure(base)})
        files["boost.csv"] = _csv(brows)
        cols["boost.csv"] = {"relative_change": "invariant measure change under boost",
                             "naive_relative_change": "change of plain dk measure (control)"}
        lines.append(f"max boost relative change: {max(r['relative_change'] for r in brows):.3e}")
    return files, cols, lines


def _sweep_chunk(args):
    seeds, start, dims, vacuum, n_branches = args
    omega = nogo.maximally_entangled(dims) if vacuum == "entangled" else nogo.product_vacuum(dims)
    alg = nogo.LocalAlgebra.on_factor(dims, 0)
    return [nogo.certify_instance(int(s), start + i, dims, omega, alg, n_branches) for i, s in enumerate(seeds)]


def _exp_nogo(cfg):
    p = cfg["parameters"]
    dims = nogo.default_factor_dims(p["ambient_dim"])
    if cfg["workers"] > 1:
        seeds = nogo.instance_seeds(cfg["seed"], p["n_instances"])
        step = math.ceil(len(seeds) / cfg["workers"])
        jobs = [(seeds[i:i + step], i, dims, p["vacuum"], p["n_branches"]) for i in range(0, len(seeds), step)]
        with ProcessPoolExecutor(cfg["workers"]) as pool:
            records = [r for part in pool.map(_sweep_chunk, jobs) for r in part]
        summary = nogo.summarize(records, p["ambient_dim"], dims, p["vacuum"])
    else:
        summary = nogo.random_nogo_sweep(p["n_instances"], p["ambient_dim"], cfg["seed"], p["vacuum"], p["n_branches"])
    files = {"instances.jsonl": summary.records_jsonl(), "summary.csv": summary.to_csv()}
    cols = {"instances.jsonl": {"instance_seed": "per-instance seed", "purity": "vacuum ensemble purity",
                                "residuals": "|K_g - c_g K_ref|_F (pure instances)", "verdict": "certification verdict"},
            "summary.csv": {"counterexamples": "pure, commuting, non-proportional instances",
                            "max_pure_residual": "max residual over pure instances"}}
    return files, cols, [f"counterexamples: {summary.counterexamples}", f"pure instances: {summary.n_pure}"]


def _exp_vacuum(cfg):
    from .families import site_dephasing

    p = cfg["parameters"]
    model = nogo.VacuumModel.tfim(p["n_sites"], p["coupling"], p["field"])
    deph = site_dephasing(p["n_sites"], p["dephasing"])
    ctrl = nogo.spectral_projector_family(model.hamiltonian)
    rows = []
    for n in p["n_steps"]:
        rows.append({"n_steps": n, "rate_site_dephasing": nogo.energy_production_rate(model, deph, n),
                     "rate_spectral_control": nogo.energy_production_rate(model, ctrl, n)})
    files = {"energy.csv": _csv(rows)}
    cols = {"energy.csv": {"rate_site_dephasing": "Tr(H rho_n)/n with site dephasing",
                           "rate_spectral_control": "same for H's eigenprojector family"}}
    return files, cols, [f"gap {model.gap:.6g}; rate after {rows[0]['n_steps']} step(s): {rows[0]['rate_site_dephasing']:.6g}"]


RUNNERS = {
    "unravel": _exp_unravel,
    "relnet": _exp_relnet,
    "massshell": _exp_massshell,
    "nogo-sweep": _exp_nogo,
    "vacuum-energy": _exp_vacuum,
}


def resolve_output_dir(out: str) -> Path:
    root = os.environ.get("COLLAPSELAB_OUTPUT_ROOT")
    path = Path(out)
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from None


def run(config: dict, stream=None) -> int:
    stream = stream or sys.stdout
    try:
        cfg = validate(config)
        files, cols, lines = RUNNERS[cfg["experiment"]](cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InconsistencyError, IncompleteFamilyError, ArithmeticError) as exc:
        print(f"internal inconsistency: {exc}", file=sys.stderr)
        return 2
    out = resolve_output_dir(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (out / name).write_text(text)
    summary = [f"experiment: {cfg['experiment']}", f"seed: {cfg['seed']}", f"kernel backend: {kernels.BACKEND}"] + lines
    (out / "summary.txt").write_text("\n".join(summary) + "\n")
    manifest = {
        "config": cfg,
        "version": __version__,
        "kernel_backend": kernels.BACKEND,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "files": {name: cols.get(name, {}) for name in sorted(files)},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    for line in summary:
        print(line, file=stream)
    print(f"wrote {out}", file=stream)
    return 0


def verify(config: dict, stream=None) -> int:
    stream = stream or sys.stdout
    try:
        cfg = validate(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"ok: {cfg['experiment']} config is valid", file=stream)
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="collapselab", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "verify"):
        sp = sub.add_parser(name)
        sp.add_argument("config")
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return run(config) if args.command == "run" else verify(config)


if __name__ == "__main__":
    sys.exit(main())
