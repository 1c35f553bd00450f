"""Command-line entry point: ``hrsim <command> [--config PATH] [--out DIR] ...``.

Exit codes: 0 success, 2 validation error, 3 resource cap, 4 non-convergence.
Errors are printed to stderr as a one-line JSON object.
"""
from __future__ import annotations

import argparse
import json
import shutil
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import config as C
from .errors import HrsimError, ValidationError
from .evolve import (AdiabaticPath, adiabatic_prepare_vacuum, double_commutator_norm,
                     model_field_pi_commutator)
from .fitting import loglog_fit
from .io import Manifest, write_csv, write_json, write_statevector
from .lattice import FieldDigitization, LatticeGeometry, LatticeModel, TheorySpec
from .lcu import (apply_creation_exact, band_overlap, build_ledger, direct_creation_operator,
                  prepare_two_wavepackets, sample_postselection, simulate_circuit)
from .reference import format_table, reference_scalings
from .spectral import InsufficientSpectrumError, ground_state, mass_gap_report, model_spectrum
from .truncation import (quartic_onsite, eps_trunc, phi_cl_closed_form, recommend_phi_max,
                         solve_single_site_ground)
from .wavepacket import (DiscreteAmplitudeTable, MomentumProfile, SmearingWindow,
                         WavepacketGrid, choose_grid, discretization_error_estimate, eval_psi,
                         shift_term_residual)

COMMANDS = ("spectrum", "wavepacket", "lcu-sim", "two-packet", "adiabatic", "truncation",
            "sweep", "reference-scalings")
ANALYSIS_DIM_MAX = 1024


def _build(fn, **kw):
    try:
        return fn(**kw)
    except HrsimError:
        raise
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{fn.__name__}: {exc}") from exc


def build_model(cfg) -> LatticeModel:
    geom = _build(LatticeGeometry, **cfg["geometry"])
    digit = _build(FieldDigitization, **cfg["digitization"])
    spec = _build(TheorySpec, **cfg["theory"])
    return _build(LatticeModel, geom=geom, digit=digit, spec=spec,
                  scheme=cfg["hamiltonian"]["scheme"], cap_dim=int(cfg["cap_dim"]))


def _analysis_spectrum(model, cfg, n_min=0):
    V = model.n_sites
    n = max(n_min, 4 * V + 8)
    return model_spectrum(model, min(n, model.dim), seed=int(cfg["seed"]))


def _mass_info(data):
    try:
        rep = mass_gap_report(data)
        return rep, None
    except InsufficientSpectrumError as exc:
        return None, str(exc)


# ---------------------------------------------------------------- spectrum

def cmd_spectrum(cfg, out: Path):
    model = build_model(cfg)
    V = model.n_sites
    n_out = cfg["spectrum"]["n_states"] or V + 1
    n_out = min(int(n_out), model.dim)
    data = _analysis_spectrum(model, cfg, n_out)
    rows = [(i, data.eigenvalues[i], data.gaps[i], data.momentum[i], int(data.parity[i]),
             bool(data.ambiguous[i])) for i in range(n_out)]
    files = [write_csv(out / "spectrum.csv", ["index", "energy", "gap", "q", "parity", "ambiguous"],
                       rows, {"energy": "1/a", "gap": "1/a", "q": "1/a"})]
    files.append(write_csv(out / "dispersion.csv", ["q", "gap"],
                           [(data.momentum[i], data.gaps[i]) for i in range(len(data))]))
    rep, err = _mass_info(data)
    summary = {"n_states": n_out, "vacuum_energy": data.eigenvalues[0], "dim": model.dim,
               "gap_m": rep.m if rep else None, "m_b": rep.m_b if rep else None,
               "two_particle_threshold": rep.two_particle_threshold if rep else None,
               "mass_gap_error": err}
    if model.dim <= ANALYSIS_DIM_MAX:
        fp = model_field_pi_commutator(model)
        dc = double_commutator_norm(model.hamiltonian, model, 0)
        summary.update({
            "field_pi_commutator_norm": fp.direct_norm,
            "field_pi_commutator_analytic_norm": fp.analytic_norm,
            "field_pi_canonical_error": fp.canonical_error,
            "double_commutator_direct_norm": dc.direct_norm,
            "double_commutator_analytic_norm": dc.analytic_norm,
        })
    files.append(write_json(out / "spectrum.json", summary))
    return files, summary


# ---------------------------------------------------------------- wavepacket

def _profile(cfg, override=None):
    p = dict(cfg["wavepacket"]["profile"])
    if override:
        p.update({k: v for k, v in override.items() if v is not None})
    return _build(MomentumProfile, **p)


def _window(cfg, data):
    w = dict(cfg["wavepacket"]["window"])
    mass = w.pop("mass")
    kind = cfg["wavepacket"]["kind"]
    rep, err = _mass_info(data)
    upper = 4.0
    if kind == "bound":
        if rep is None or rep.m_b is None:
            raise ValidationError("no bound state below the two-particle threshold" + (f": {err}" if err else ""))
        mass = rep.m_b if mass is None else mass
        upper = (2 * rep.m / mass) ** 2
    elif mass is None:
        if rep is None:
            raise ValidationError(f"cannot measure the mass gap: {err}")
        mass = rep.m
    return _build(SmearingWindow, mass_sq_target=float(mass) ** 2, upper_limit=upper, **w)


def _grid(cfg, model, profile, window, sites_override=None):
    g = cfg["wavepacket"]["grid"]
    sites = sites_override if sites_override is not None else g["sites"]
    if g["policy"] == "auto":
        grid = choose_grid(profile, window, model.geom, float(g["tail_tolerance"]), g["dt"],
                           n_quad=int(cfg["wavepacket"]["n_quad"]))
        if sites is not None:
            grid = WavepacketGrid(grid.t_list, sites, model.geom)
        return grid
    if g["policy"] != "explicit":
        raise ValidationError(f"unknown grid policy {g['policy']!r}")
    if sites is None:
        sites = list(range(model.n_sites))
    return _build(WavepacketGrid.midpoint, t_lo=float(g["t_lo"]), t_hi=float(g["t_hi"]),
                  n_t=int(g["n_t"]), sites=sites, geom=model.geom)


def _table(cfg, model, data, profile=None, sites=None) -> DiscreteAmplitudeTable:
    profile = profile or _profile(cfg)
    window = _window(cfg, data)
    grid = _grid(cfg, model, profile, window, sites)
    table = eval_psi(grid, profile, window, n_quad=int(cfg["wavepacket"]["n_quad"]))
    table.meta.update({"profile": profile.__dict__, "window": window.__dict__})
    return table


def _table_rows(table):
    g = table.grid
    pos = g.geom.positions()
    rows = []
    for i, t in enumerate(g.t_list):
        for j, s in enumerate(g.site_list):
            rows.append((t, int(s)) + tuple(pos[s]) + (table.values[i, j].real, table.values[i, j].imag))
    xs = ["x"] if g.d == 1 else [f"x{i}" for i in range(g.d)]
    cols = ["t", "site"] + xs + ["re", "im"]
    return cols, rows


def cmd_wavepacket(cfg, out: Path):
    model = build_model(cfg)
    data = _analysis_spectrum(model, cfg)
    table = _table(cfg, model, data)
    cols, rows = _table_rows(table)
    files = [write_csv(out / "table.csv", cols, rows)]
    kind = cfg["wavepacket"]["kind"]
    summary = {
        "kind": kind, "N": table.grid.N, "S": table.grid.S, "dt": table.grid.dt,
        "t_range": table.grid.t_range, "sites": table.grid.site_list,
        "l1_mass": table.l1_mass, "shift_residual": shift_term_residual(table),
        "relative_shift_residual": shift_term_residual(table) / table.l1_mass,
        "n_quad": table.meta["n_quad"], "E_bar": table.meta["E_bar"],
        "delta_E": table.meta["delta_E"], "profile": table.meta["profile"],
        "window": table.meta["window"],
    }
    if model.dim <= ANALYSIS_DIM_MAX and kind == "elementary":
        phis = {int(s): model.field_op(int(s)) for s in table.grid.site_list}
        est = discretization_error_estimate(table, model.hamiltonian, phis)
        summary.update({"discretization_error_bound": est.bound, "discretization_terms": est.terms,
                        "dominant_term": est.dominant})
        if cfg["wavepacket"]["refine_check"]:
            fine = eval_psi(table.grid.refined(4), _profile(cfg), _window(cfg, data),
                            n_quad=int(cfg["wavepacket"]["n_quad"]))
            A = direct_creation_operator(model, table)
            B = direct_creation_operator(model, fine)
            summary["ledger_discrepancy"] = float(np.linalg.norm(A - B, 2))
    files.append(write_json(out / "wavepacket.json", summary))
    return files, summary


# ---------------------------------------------------------------- lcu

def _backend_args(cfg):
    ev = cfg["evolution"]
    return ev["backend"], int(ev["n_steps"])


def _band(data, model, kind):
    if kind == "elementary":
        return data.eigenvectors[:, data.single_particle_band(model.n_sites)]
    rep, _ = _mass_info(data)
    if rep is None:
        return None
    idx = [j for j in data.select(parity=1) if rep.m < data.gaps[j] < rep.two_particle_threshold]
    return data.eigenvectors[:, idx] if idx else None


def cmd_lcu_sim(cfg, out: Path):
    model = build_model(cfg)
    data = _analysis_spectrum(model, cfg)
    vac = data.vacuum
    kind = cfg["wavepacket"]["kind"]
    table = _table(cfg, model, data)
    ledger = build_ledger(table, model.digit, kind)
    backend, n_steps = _backend_args(cfg)
    res = simulate_circuit(model, ledger, vac, backend, n_steps=n_steps)
    oracle = apply_creation_exact(model.hamiltonian, table, kind, vac, model)
    norm = float(np.linalg.norm(oracle))
    band = _band(data, model, kind)
    parity = float(np.vdot(res.postselected_state, model.parity @ res.postselected_state).real)
    summary = {
        "kind": kind, "alpha": ledger.alpha, "n_terms": ledger.n_terms, "n_ancilla": res.n_ancilla,
        "norm_applied": res.norm_applied, "oracle_norm": norm,
        "rho_formula": (norm / ledger.alpha) ** 2, "rho_measured": res.rho_measured,
        "fidelity_vs_oracle": float(abs(np.vdot(oracle / norm, res.postselected_state))),
        "band_overlap": band_overlap(res.postselected_state, band) if band is not None else None,
        "parity": parity, "backend": backend, "n_steps": n_steps, "dt": table.grid.dt,
        "N": table.grid.N, "S": table.grid.S,
    }
    if int(cfg["lcu"]["shots"]) > 0:
        summary["rho_sampled"] = sample_postselection(res.rho_measured, int(cfg["lcu"]["shots"]),
                                                      int(cfg["seed"]))
    files = [write_json(out / "lcu.json", summary)]
    if cfg["lcu"]["dump_state"]:
        layout = {"register": "system", "sites": model.n_sites, "qubits_per_site": model.digit.k,
                  "order": "site 0 most significant; within a site, level index l = sum 2^i b_i",
                  "normalized": True}
        files.append(write_statevector(out / "state.bin", res.postselected_state, layout))
    return files, summary


def cmd_two_packet(cfg, out: Path):
    model = build_model(cfg)
    data = _analysis_spectrum(model, cfg)
    vac = data.vacuum
    V, L = model.n_sites, model.geom.sites_per_dim
    w2 = cfg["wavepacket2"]
    s1 = cfg["wavepacket"]["grid"]["sites"]
    if s1 is None:
        s1 = list(range(V // 2)) or [0]
    s2 = w2["sites"] if w2["sites"] is not None else [s for s in range(V) if s not in s1]
    p1 = _profile(cfg)
    xc2 = w2["x_center"] if w2["x_center"] is not None else L * model.geom.a / 2
    pb2 = w2["p_bar"] if w2["p_bar"] is not None else -np.asarray(p1.p_bar, float)
    p2 = _profile(cfg, {"x_center": xc2, "p_bar": pb2})
    t1 = _table(cfg, model, data, p1, s1)
    t2 = _table(cfg, model, data, p2, s2)
    kind = cfg["wavepacket"]["kind"]
    l1, l2 = build_ledger(t1, model.digit, kind), build_ledger(t2, model.digit, kind)
    backend, n_steps = _backend_args(cfg)
    res = prepare_two_wavepackets(model, l1, l2, vac, backend, n_steps=n_steps)
    o1 = apply_creation_exact(model.hamiltonian, t1, kind, vac, model)
    o2 = apply_creation_exact(model.hamiltonian, t2, kind, vac, model)
    o12 = apply_creation_exact(model.hamiltonian, t2, kind, o1, model)
    rho1 = (np.linalg.norm(o1) / l1.alpha) ** 2
    rho2 = (np.linalg.norm(o2) / l2.alpha) ** 2
    summary = {
        "rho_total": res.rho_measured, "rho1": rho1, "rho2": rho2,
        "factorization_ratio": res.rho_measured / (rho1 * rho2),
        "fidelity_vs_oracle": float(abs(np.vdot(o12 / np.linalg.norm(o12), res.postselected_state))),
        "parity": float(np.vdot(res.postselected_state, model.parity @ res.postselected_state).real),
        "n_ancilla": res.n_ancilla, "sites1": s1, "sites2": s2,
    }
    return [write_json(out / "two_packet.json", summary)], summary


# ---------------------------------------------------------------- adiabatic

def cmd_adiabatic(cfg, out: Path):
    model = build_model(cfg)
    target = model.spec
    free = model.with_spec(target.free())
    _, v0 = ground_state(free.hamiltonian, seed=int(cfg["seed"]))
    _, vt = ground_state(model.hamiltonian, seed=int(cfg["seed"]))
    ad = cfg["adiabatic"]
    rows = []
    for tau in ad["tau_values"]:
        path = _build(AdiabaticPath, start=target.free(), target=target, total_time=float(tau),
                      dt=float(ad["dt"]), schedule=ad["schedule"], backend=cfg["evolution"]["backend"])
        _, infid = adiabatic_prepare_vacuum(path, v0, model, vt)
        rows.append((float(tau), infid))
    files = [write_csv(out / "adiabatic.csv", ["tau", "infidelity"], rows)]
    summary = {"tau": [r[0] for r in rows], "infidelity": [r[1] for r in rows]}
    try:
        summary["fit"] = loglog_fit(*zip(*rows)).as_dict()
    except ValueError:
        summary["fit"] = None
    files.append(write_json(out / "adiabatic.json", summary))
    return files, summary


# ---------------------------------------------------------------- truncation

def cmd_truncation(cfg, out: Path):
    tr = cfg["truncation"]
    geom = _build(LatticeGeometry, **cfg["geometry"])
    V = int(tr["volume_sites"] or geom.n_sites)
    phi_cl = phi_cl_closed_form(float(tr["m0_sq"]), float(tr["lambda0"]), float(tr["E"]),
                                geom.a, geom.d, V)
    v = quartic_onsite(float(tr["m0_sq"]), float(tr["lambda0"]), geom.a, geom.d)
    ground = solve_single_site_ground(v, phi_cl, n_points=int(tr["n_points"]))
    rep = recommend_phi_max(ground, V, float(tr["eps_target"]), E=float(tr["E"]))
    phis = np.linspace(0, 4 * phi_cl, int(tr["n_table"]))
    rows = [(p, eps_trunc(ground, p, V)) for p in phis]
    files = [write_csv(out / "truncation.csv", ["phi_max", "eps_trunc"], rows)]
    summary = rep.as_dict()
    summary.update({"volume_sites": V, "sigma0": ground.sigma0, "single_site_energy": ground.energy})
    files.append(write_json(out / "truncation.json", summary))
    return files, summary


# ---------------------------------------------------------------- reference

def cmd_reference(cfg, out: Path):
    print(format_table())
    data = reference_scalings()
    files = [write_json(out / "reference_scalings.json", data)]
    return files, {"rows": len(data["weak_coupling"]) + len(data["strong_coupling"])}


HANDLERS = {
    "spectrum": cmd_spectrum,
    "wavepacket": cmd_wavepacket,
    "lcu-sim": cmd_lcu_sim,
    "two-packet": cmd_two_packet,
    "adiabatic": cmd_adiabatic,
    "truncation": cmd_truncation,
    "reference-scalings": cmd_reference,
}


def run_command(command: str, cfg: dict, out_dir, workers: int = 1) -> dict:
    """Run one command; outputs appear in ``out_dir`` only if it succeeds."""
    if command not in COMMANDS:
        raise ValidationError(f"unknown command {command!r}")
    out_dir = Path(out_dir)
    if command == "sweep":
        return run_sweep(cfg, out_dir, workers)
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        files, summary = HANDLERS[command](cfg, tmp)
        out_dir.mkdir(parents=True, exist_ok=True)
        for f in sorted(tmp.iterdir()):
            shutil.copy2(f, out_dir / f.name)
    man = Manifest(out_dir, command, C.config_hash(cfg), int(cfg["seed"]), t0)
    for f in files:
        man.add(out_dir / Path(f).name)
    data = man.write()
    data["summary"] = summary
    return data


def _sub_run(args):
    command, cfg, out_dir = args
    res = run_command(command, cfg, out_dir)
    return res["summary"]


def run_sweep(cfg, out_dir: Path, workers: int = 1) -> dict:
    sw = cfg["sweep"]
    command, axis, values = sw["command"], sw["axis"], list(sw["values"])
    if command in ("sweep",) or command not in HANDLERS:
        raise ValidationError(f"cannot sweep command {command!r}")
    C.get_dotted(cfg, axis)
    if not values:
        raise ValidationError("sweep needs at least one value")
    jobs = []
    for i, val in enumerate(values):
        sub = C.merge(cfg, {axis: val})
        jobs.append((command, sub, str(out_dir / f"run_{i:03d}")))
    out_dir.mkdir(parents=True, exist_ok=True)
    man = Manifest(out_dir, "sweep", C.config_hash(cfg), int(cfg["seed"]))
    summaries = []
    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                for s in ex.map(_sub_run, jobs):
                    summaries.append(s)
        else:
            for job in jobs:
                summaries.append(_sub_run(job))
    except HrsimError:
        for i in range(len(summaries)):
            man.add(Path(jobs[i][2]) / "manifest.json")
        man.write()
        raise
    for job in jobs:
        man.add(Path(job[2]) / "manifest.json")
    metric, xkey = sw["metric"], sw["x"]
    rows = []
    for val, s in zip(values, summaries):
        if metric not in s:
            raise ValidationError(f"metric {metric!r} not produced by {command}")
        x = s[xkey] if xkey else val
        rows.append((val if not isinstance(val, (list, dict)) else json.dumps(val), x, s[metric]))
    man.add(write_csv(out_dir / "sweep.csv", ["value", "x", metric], rows))
    fit = None
    try:
        xs = [float(r[1]) for r in rows]
        ys = [float(r[2]) for r in rows]
        if len(rows) >= 2:
            fit = loglog_fit(xs, ys).as_dict()
    except (TypeError, ValueError):
        fit = None
    summary = {"axis": axis, "values": values, "metric": metric, "x": [r[1] for r in rows],
               "y": [r[2] for r in rows], "fit": fit}
    man.add(write_json(out_dir / "sweep.json", summary))
    data = man.write()
    data["summary"] = summary
    return data


def build_parser():
    p = argparse.ArgumentParser(prog="hrsim", description="Haag-Ruelle wavepacket preparation simulator")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", type=Path, default=None, help="YAML config file")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("--cap-dim", type=int, default=None, help="Hilbert-space size limit")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        extra = {}
        if args.seed is not None:
            extra["seed"] = args.seed
        if args.cap_dim is not None:
            extra["cap_dim"] = args.cap_dim
        if args.out is not None:
            extra["output.dir"] = str(args.out)
        cfg = C.load_config(args.config, extra=extra)
        res = run_command(args.command, cfg, cfg["output"]["dir"], workers=args.workers)
    except HrsimError as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "exit_code": exc.exit_code}
        print(json.dumps(err), file=sys.stderr)
        return exc.exit_code
    if args.command != "reference-scalings":
        print(json.dumps({"command": args.command, "out": str(cfg["output"]["dir"]),
                          "files": len(res["files"])}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
