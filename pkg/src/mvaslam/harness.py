"""Monte Carlo experiment harness.

Runs repeated scenario realizations through the filter and persists
everything downstream consumers need as plain CSV/JSON files:

    out_dir/
      scenario.json         echo of the scenario config (with overrides)
      hyper.json            echo of the hyperparameters (with overrides)
      run_0000.csv           per-step truth, estimate, errors, OSPA
      run_0000_map.json      final map estimate + run metadata
      ...
      summary.json           aggregate MOSPA / RMSE / divergence

Per-run worlds depend only on (base_seed, run_id), never on the sampler
mode, so bootstrap and robust runs with the same seed see identical
trajectories and measurements.  ``summarize`` recomputes the aggregate
purely from the persisted per-run files and is idempotent.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .inference import Hyperparams
from .metrics import (DIVERGENCE_THRESHOLD, is_converged, mospa, ospa,
                      position_errors, rmse_over_runs)
from .scenario import ScenarioConfig, generate_measurements, generate_trajectory
from .slam import MvaSlamFilter

CSV_COLUMNS = ["time", "truth_x", "truth_y", "truth_vx", "truth_vy",
               "est_x", "est_y", "est_vx", "est_vy", "pos_error", "ospa",
               "n_declared"]

SUMMARY_SCHEMA_VERSION = 1


@dataclass
class RunResult:
    run_id: int
    world_seed: int
    mode: str
    truth: np.ndarray
    estimate: np.ndarray
    pos_error: np.ndarray
    ospa: np.ndarray
    n_declared: np.ndarray
    converged: bool
    filter_diverged: bool
    wall_time_s: float
    map_labels: list
    map_points: np.ndarray
    truth_mvas: np.ndarray


def world_seed(base_seed: int, run_id: int) -> int:
    """Deterministic per-run scenario seed, independent of sampler mode."""
    ss = np.random.SeedSequence((int(base_seed), int(run_id)))
    return int(ss.generate_state(1, np.uint64)[0])


def execute_run(scenario: ScenarioConfig, hyper: Hyperparams, mode: str,
                base_seed: int, run_id: int) -> RunResult:
    """Simulate one world and filter it with the requested sampler mode."""
    t0 = time.perf_counter()
    cfg = scenario.with_seed(world_seed(base_seed, run_id))
    truth_states = generate_trajectory(cfg)
    truth = np.stack([s.as_vector() for s in truth_states])
    batches = [generate_measurements(cfg, truth_states[n], n)
               for n in range(cfg.n_steps)]

    filt = MvaSlamFilter(
        anchors=cfg.anchors, sigma_range=cfg.sigma_range,
        p_detect=hyper.p_detect, mu_clutter=cfg.mu_clutter,
        clutter_range_max=cfg.clutter_range_max, include_los=cfg.include_los,
        dt=cfg.dt, sigma_drive=cfg.sigma_drive,
        n_particles=hyper.n_particles, i_prime=hyper.i_prime,
        p_survival=hyper.p_survival, p_declare=hyper.p_declare,
        p_prune=hyper.p_prune, mu_birth=hyper.mu_birth,
        prior_region=hyper.prior_region, n1=hyper.n1, n2=hyper.n2,
        n_max=hyper.n_max, sigma_reg=hyper.sigma_reg, sampler_mode=mode,
        resample_threshold=hyper.resample_threshold,
        message_samples=hyper.message_samples,
        init_state=truth[0], random_state=(int(base_seed), int(run_id)))
    filt.fit(batches)

    truth_mvas = cfg.mva_positions()
    ospa_series = np.array([ospa(h["points"], truth_mvas)
                            for h in filt.declared_history_])
    n_declared = np.array([len(h["labels"]) for h in filt.declared_history_])
    err = position_errors(filt.agent_track_, truth)
    converged = is_converged(filt.agent_track_, truth)
    return RunResult(run_id=run_id, world_seed=cfg.rng_seed, mode=mode,
                     truth=truth, estimate=filt.agent_track_, pos_error=err,
                     ospa=ospa_series, n_declared=n_declared,
                     converged=converged, filter_diverged=filt.diverged_,
                     wall_time_s=time.perf_counter() - t0,
                     map_labels=filt.map_labels_,
                     map_points=filt.map_estimates_, truth_mvas=truth_mvas)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_run_files(out_dir: Path, result: RunResult) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    csv_path = out_dir / f"run_{result.run_id:04d}.csv"
    with open(csv_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for n in range(len(result.truth)):
            writer.writerow([
                str(n),
                _fmt(result.truth[n, 0]), _fmt(result.truth[n, 1]),
                _fmt(result.truth[n, 2]), _fmt(result.truth[n, 3]),
                _fmt(result.estimate[n, 0]), _fmt(result.estimate[n, 1]),
                _fmt(result.estimate[n, 2]), _fmt(result.estimate[n, 3]),
                _fmt(result.pos_error[n]), _fmt(result.ospa[n]),
                str(int(result.n_declared[n])),
            ])
    map_path = out_dir / f"run_{result.run_id:04d}_map.json"
    payload = {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "run_id": result.run_id,
        "world_seed": result.world_seed,
        "mode": result.mode,
        "converged": bool(result.converged),
        "filter_diverged": bool(result.filter_diverged),
        "wall_time_s": result.wall_time_s,
        "truth_mvas": result.truth_mvas.tolist(),
        "declared_labels": [int(l) for l in result.map_labels],
        "declared_points": np.asarray(result.map_points).tolist(),
    }
    with open(map_path, "w") as f:
        json.dump(payload, f, indent=2)
        f.write("\n")
    return csv_path, map_path


def run_experiment(scenario_file, hyperparams_file, n_runs: int,
                   base_seed: int, mode: str, out_dir,
                   particles: int | None = None, workers: int = 1,
                   progress=None) -> dict:
    """Run the full Monte Carlo experiment and persist all artifacts.

    ``mode`` overrides the hyperparameter file's sampler_mode; ``particles``
    (when given) overrides n_particles.  Returns the summary dict.
    """
    scenario = ScenarioConfig.from_json(scenario_file)
    hyper = Hyperparams.from_json(hyperparams_file)
    overrides = {"sampler_mode": mode}
    if particles is not None:
        overrides["n_particles"] = int(particles)
    hyper = Hyperparams.from_dict({**hyper.to_dict(), **overrides})
    if n_runs < 1:
        raise ConfigError("n_runs must be >= 1")

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenario.to_json(out / "scenario.json")
    hyper.to_json(out / "hyper.json")

    run_ids = list(range(n_runs))
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_execute_run_star,
                                    [(scenario, hyper, mode, base_seed, r)
                                     for r in run_ids]))
    else:
        results = []
        for r in run_ids:
            results.append(execute_run(scenario, hyper, mode, base_seed, r))
            if progress is not None:
                progress(results[-1])
    for res in results:
        write_run_files(out, res)
    return summarize(out)


def _execute_run_star(args):
    return execute_run(*args)


def summarize(run_dir) -> dict:
    """Aggregate the per-run files in ``run_dir`` into summary.json.

    Pure function of the persisted files: convergence is recomputed from the
    CSV tracks, so re-summarizing an existing directory is idempotent.
    """
    run_dir = Path(run_dir)
    csv_paths = sorted(run_dir.glob("run_[0-9][0-9][0-9][0-9].csv"))
    if not csv_paths:
        raise ConfigError(f"no run CSVs found in {run_dir}")

    per_run = []
    ospa_rows = []
    est_tracks = []
    truth_tracks = []
    converged_flags = []
    for path in csv_paths:
        run_id = int(path.stem.split("_")[1])
        data = np.genfromtxt(path, delimiter=",", names=True)
        data = np.atleast_1d(data)
        truth = np.column_stack([data["truth_x"], data["truth_y"],
                                 data["truth_vx"], data["truth_vy"]])
        est = np.column_stack([data["est_x"], data["est_y"],
                               data["est_vx"], data["est_vy"]])
        ospa_rows.append(np.asarray(data["ospa"], dtype=float))
        est_tracks.append(est)
        truth_tracks.append(truth)
        conv = is_converged(est, truth, DIVERGENCE_THRESHOLD)
        converged_flags.append(conv)
        map_path = run_dir / f"run_{run_id:04d}_map.json"
        meta = {}
        if map_path.exists():
            with open(map_path) as f:
                meta = json.load(f)
        per_run.append({
            "run_id": run_id,
            "world_seed": meta.get("world_seed"),
            "converged": bool(conv),
            "diverged": not bool(conv),
            "filter_diverged": meta.get("filter_diverged"),
            "wall_time_s": meta.get("wall_time_s"),
            "csv": path.name,
            "map_json": map_path.name if map_path.exists() else None,
        })

    n_steps = {len(o) for o in ospa_rows}
    if len(n_steps) != 1:
        raise ConfigError("runs disagree on n_steps")
    mask = np.asarray(converged_flags, dtype=bool)
    rmse = rmse_over_runs(np.stack(est_tracks), np.stack(truth_tracks),
                          mask if mask.any() else None)
    modes = {p.get("mode") for p in
             (json.load(open(run_dir / r["map_json"])) for r in per_run
              if r["map_json"])}
    summary = {
        "schema_version": SUMMARY_SCHEMA_VERSION,
        "mode": modes.pop() if len(modes) == 1 else sorted(modes),
        "n_runs": len(per_run),
        "n_steps": n_steps.pop(),
        "divergence_threshold": DIVERGENCE_THRESHOLD,
        "diverged_fraction": float(1.0 - mask.mean()),
        "mospa": mospa(np.stack(ospa_rows)).tolist(),
        "rmse": [None if not np.isfinite(v) else float(v) for v in rmse],
        "rmse_converged_only": bool(mask.any()),
        "per_run": per_run,
    }
    with open(run_dir / "summary.json", "w") as f:
        json.dump(summary, f, indent=2)
        f.write("\n")
    return summary
