"""One runner per method. Each takes a validated flat config and an output directory and
returns the artifact paths it wrote (all inside that directory)."""
from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from qglass import rng
from qglass.config import n_steps
from qglass.crab import CrabConfig, crab_optimize, write_restart_csv
from qglass.grape import GrapeConfig, ensemble_ascend
from qglass.grape import write_trace_csv as write_grape_trace
from qglass.landscape import (cluster_attractors, exhaustive_dos, major_clusters, order_parameter,
                              profile_overlap, write_dos)
from qglass.problem import make_problem
from qglass.protocols import TimeGrid, write_protocol
from qglass.quantum import SpinChain
from qglass.results import best_of, write_csv
from qglass.rl import ActionSet, RLConfig, TrainingSchedule, train_post_selected, write_episode_csv
from qglass.scaling import SweepSpec, run_q_scan, write_rows
from qglass.sd import SDConfig, ensemble_descend, mean_evals_per_bin, write_summary_csv
from qglass.sd import write_trace_csv as write_sd_trace
from qglass.variational import scan_critical_points, write_scan_csv

log = logging.getLogger("qglass")


def problem_of(cfg):
    return make_problem(cfg["system.L"], cfg["system.h_z"], cfg["fields.initial"], cfg["fields.target"])


def grid_of(cfg, T: float | None = None) -> TimeGrid:
    T = cfg["grid.T"] if T is None else float(T)
    return TimeGrid(T, n_steps(cfg, T))


def _json(path: Path, doc) -> Path:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _protocol(out: Path, name: str, result) -> list[Path]:
    return list(write_protocol(result.protocol, out / name))


def _sd_config(cfg):
    return SDConfig(cfg["sd.max_evals"], cfg["sd.flip_order"], cfg["sd.restarts"], cfg["sd.symmetric"])


def _rl_setup(cfg):
    actions = ActionSet.bang_bang() if cfg["rl.actions"] == "bang_bang" else ActionSet.quasi_continuous()
    schedule = TrainingSchedule(cfg["rl.episodes"], cfg["rl.phase_length"], cfg["rl.beta_start"], cfg["rl.beta_end"])
    config = RLConfig(alpha=cfg["rl.alpha"], trace_decay=cfg["rl.trace_decay"], n_tilings=cfg["rl.n_tilings"],
                      n_tiles=cfg["rl.n_tiles"], seeds=cfg["rl.seeds"])
    return actions, schedule, config


def _grape_config(cfg, restarts=None):
    return GrapeConfig(max_iters=cfg["grape.max_iters"], eps0=cfg["grape.eps0"], tolerance=cfg["grape.tolerance"],
                       restarts=cfg["grape.restarts"] if restarts is None else restarts)


def _crab_config(cfg):
    return CrabConfig(N_c=cfg["crab.N_c"], restarts=cfg["crab.restarts"],
                      optimize_frequencies=cfg["crab.optimize_frequencies"])


def run_sd(cfg, out: Path):
    grid = grid_of(cfg)
    results = ensemble_descend(problem_of(cfg), grid, _sd_config(cfg), cfg["seed"], cfg["workers"])
    best = best_of(results)
    summary = {"best_fidelity": best.fidelity, "mean_evals_per_bin": mean_evals_per_bin(results),
               "q": order_parameter(results) if len(results) > 1 else None}
    return [write_sd_trace(results, out / "sd_trace.csv"), write_summary_csv(results, out / "sd_summary.csv"),
            *_protocol(out, "best_protocol", best), _json(out / "summary.json", summary)]


def run_rl(cfg, out: Path):
    actions, schedule, config = _rl_setup(cfg)
    best, results = train_post_selected(problem_of(cfg), grid_of(cfg), actions, schedule, cfg["seed"], config,
                                        cfg["workers"])
    paths = [write_episode_csv(r, out / f"rl_episodes_agent{r.info['seed_index']}.csv") for r in results]
    summary = {"best_fidelity": best.fidelity, "best_agent": best.info["seed_index"],
               "agent_fidelities": [r.fidelity for r in results]}
    return paths + [*_protocol(out, "best_protocol", best), _json(out / "summary.json", summary)]


def run_grape(cfg, out: Path):
    results = ensemble_ascend(problem_of(cfg), grid_of(cfg), _grape_config(cfg), cfg["seed"], cfg["workers"])
    best = best_of(results)
    summary = {"best_fidelity": best.fidelity, "stop_reasons": [r.info["stop"] for r in results]}
    return [write_grape_trace(results, out / "grape_trace.csv"), *_protocol(out, "best_protocol", best),
            _json(out / "summary.json", summary)]


def run_crab(cfg, out: Path):
    grid = grid_of(cfg)
    res = crab_optimize(problem_of(cfg), grid, cfg["crab.N_c"], cfg["crab.restarts"], cfg["seed"], _crab_config(cfg))
    summary = {"best_fidelity": res.fidelity, "best_restart": res.info["best_restart"],
               "cost": res.info["cost"], "penalty": res.info["penalty"]}
    return [write_restart_csv(res, out / "crab_restarts.csv"), *_protocol(out, "best_protocol", res),
            _json(out / "summary.json", summary)]


def run_variational(cfg, out: Path):
    lo, hi, step = cfg["variational.T_min"], cfg["variational.T_max"], cfg["variational.T_step"]
    T = np.round(lo + step * np.arange(int(np.floor((hi - lo) / step + 1e-9)) + 1), 12)
    scan = scan_critical_points(SpinChain(cfg["system.L"], cfg["system.h_z"]), T,
                                cfg["variational.tau_resolution"], cfg["variational.dims"],
                                kink_on="tau1" if cfg["variational.dims"] == 1 else "both")
    return [write_scan_csv(scan, out / "variational_scan.csv"),
            _json(out / "summary.json", {"kinks": scan.kinks, "dims": scan.dims})]


def run_dos(cfg, out: Path):
    dos = exhaustive_dos(problem_of(cfg), grid_of(cfg), tuple(cfg["dos.k_flips"]), cfg["dos.bin_width"],
                         cap=cfg["dos.cap"])
    return list(write_dos(dos, out / "dos_histogram.csv", out / "dos.json"))


def sweep_of(cfg) -> SweepSpec:
    fixed = {"L": cfg["system.L"], "h_z": cfg["system.h_z"], "T": cfg["grid.T"], "dt": cfg["grid.dt"]}
    if cfg["grid.N_T"] is not None:
        fixed["N_T"] = cfg["grid.N_T"]
        del fixed["dt"]
    return SweepSpec(cfg["qscan.axis"], tuple(cfg["qscan.values"]), fixed, cfg["qscan.ensemble"],
                     cfg["qscan.symmetric"], cfg["sd.max_evals"])


def run_qscan(cfg, out: Path):
    spec = sweep_of(cfg)
    rows, reps = run_q_scan(spec, cfg["seed"])
    doc = {"spec": spec.to_dict(), "spec_sha256": spec.digest(),
           "entropy_column": "max over the time trace of the half-chain entanglement entropy (nats)"}
    return [write_rows(rows, out / "qscan_summary.csv"), write_rows(reps, out / "qscan_replicates.csv"),
            _json(out / "qscan.json", doc)]


def _cluster_files(out, prefix, clusters):
    table = [(i, c.members.size, c.population, c.fidelity_mean, c.fidelity_std, c.fidelity_max, c.spread)
             for i, c in enumerate(clusters)]
    prof = [(i, n, h) for i, c in enumerate(clusters) for n, h in enumerate(c.mean_profile)]
    return [write_csv(out / f"{prefix}_clusters.csv",
                      ["cluster_id", "size", "population", "fidelity_mean", "fidelity_std", "fidelity_max",
                       "spread"], table),
            write_csv(out / f"{prefix}_profiles.csv", ["cluster_id", "bin_index", "mean_h"], prof)]


def run_attractors(cfg, out: Path):
    problem, grid = problem_of(cfg), grid_of(cfg)
    sd_cfg = SDConfig(cfg["sd.max_evals"], cfg["sd.flip_order"], cfg["attractors.restarts"], cfg["sd.symmetric"])
    results = ensemble_descend(problem, grid, sd_cfg, cfg["seed"], cfg["workers"])
    clusters = cluster_attractors(results, cfg["attractors.threshold"])
    major = major_clusters(clusters, cfg["attractors.min_population"])
    paths = _cluster_files(out, "sd", clusters)
    summary = {"n_clusters": len(clusters), "n_major": len(major), "q": order_parameter(results)}
    if cfg["attractors.grape_restarts"] > 0:
        g = ensemble_ascend(problem, grid, _grape_config(cfg, cfg["attractors.grape_restarts"]),
                            rng.derive_seed(cfg["seed"], "attractors-grape"), cfg["workers"])
        gcl = cluster_attractors(g, cfg["attractors.threshold"])
        paths += _cluster_files(out, "grape", gcl)
        summary["grape_n_major"] = len(major_clusters(gcl, cfg["attractors.min_population"]))
        summary["grape_to_sd_overlap"] = [[profile_overlap(a.mean_profile, b.mean_profile) for b in major]
                                          for a in major_clusters(gcl, cfg["attractors.min_population"])]
    return paths + [_json(out / "summary.json", summary)]


def run_compare(cfg, out: Path):
    problem = problem_of(cfg)
    actions, schedule, rl_cfg = _rl_setup(cfg)
    rows = []
    for T in cfg["compare.T_values"]:
        grid = grid_of(cfg, T)
        log.info("compare: T=%g", grid.T)
        seeds = {m: rng.derive_seed(cfg["seed"], "compare", repr(float(T)), m) for m in ("rl", "sd", "grape", "crab")}
        sd = best_of(ensemble_descend(problem, grid, _sd_config(cfg), seeds["sd"], cfg["workers"]))
        gr = best_of(ensemble_ascend(problem, grid, _grape_config(cfg), seeds["grape"], cfg["workers"]))
        rl, _ = train_post_selected(problem, grid, actions, schedule, seeds["rl"], rl_cfg, cfg["workers"])
        cr = crab_optimize(problem, grid, cfg["crab.N_c"], cfg["crab.restarts"], seeds["crab"], _crab_config(cfg))
        for name, r in (("rl", rl), ("sd", sd), ("grape", gr), ("crab", cr)):
            rows.append((grid.T, name, r.fidelity, r.n_evals))
    return [write_csv(out / "compare.csv", ["T", "method", "best_fidelity", "n_evals"], rows)]


RUNNERS = {
    "sd": run_sd, "rl": run_rl, "grape": run_grape, "crab": run_crab, "variational": run_variational,
    "dos": run_dos, "qscan": run_qscan, "attractors": run_attractors, "compare": run_compare,
}
