"""Command-line entry point: binds JSON experiment configs to engine runs.

Exit codes: 0 success, 1 config or I/O problem, 2 verification failure.
Config parsing is strict; any unrecognized key aborts before computation.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np

from . import analysis, nn, verify
from .analysis import TrainSettings
from .csvio import write_csv_atomic, write_json_atomic
from .datasets import DomainSuite, rotated_moons_suite
from .meta import WeightScheme
from .nn import NetworkSpec
from .quadratic import QuadraticTask, centroid_distance, fixed_point


class ConfigError(Exception):
    pass


SUITE_DEFAULTS = {
    "source_angles": [0.0, 30.0, 60.0],
    "target_angles": [90.0],
    "n_per_domain": 300,
    "noise_sd": 0.1,
    "val_fraction": 0.2,
    "seed": 0,
}

ENGINE_DEFAULTS = {
    "net_hidden": [32],
    "iterations": 300,
    "inner_lr": 0.3,
    "outer": "adam",
    "outer_lr": 0.02,
    "batch_size": 32,
    "k": 1,
    "swa_burn_in": 0.5,
}

DEFAULTS = {
    "bench": {
        "suite": SUITE_DEFAULTS,
        **ENGINE_DEFAULTS,
        "methods": ["erm", "fish", "arith", "arith_swa"],
        "seeds": list(range(10)),
    },
    "plane": {
        "suite": SUITE_DEFAULTS,
        **ENGINE_DEFAULTS,
        "burn_in_iterations": 60,
        "anchor_steps": 30,
        "anchor_lr": None,  # defaults to inner_lr
        "resolution": 41,
        "margin": 0.3,
        "seed": 0,
    },
    "adamtrace": {
        "n_domains": 3,
        "steps": 50,
        "beta1": 0.9,
        "source": "unit",  # "unit" | "training"
        "dim": 8,
        "seed": 0,
        "suite": SUITE_DEFAULTS,
        "net_hidden": [32],
        "inner_lr": 0.01,
        "batch_size": 32,
    },
    "quadratic": {
        "tasks": ["pair1d", "simplex3"],
        "lrs": [0.5, 1.0],
        "schemes": ["arith", "fish"],
        "arith_eps": 1.0,
        "iters": 10000,
    },
    "sweep": {
        "suite": SUITE_DEFAULTS,
        **ENGINE_DEFAULTS,
        "k_values": [1, 2, 3, 5],
        "seeds": [0, 1, 2],
    },
    "ablation": {
        "suite": SUITE_DEFAULTS,
        **ENGINE_DEFAULTS,
        "seeds": [0, 1],
        "schemes": ["fish", "arith"],
        "scaled": [False, True],
        "outer_modes": ["direct", "adam"],
        "momentum_in_inner": [False, True],
        "domain_specific_sampling": [True, False],
    },
}


def _strict_merge(defaults: dict, given: dict, context: str) -> dict:
    merged = copy.deepcopy(defaults)
    for key, value in given.items():
        if key not in defaults:
            raise ConfigError(f"unknown config key '{context}{key}'")
        if isinstance(defaults[key], dict) and isinstance(value, dict):
            merged[key] = _strict_merge(defaults[key], value, f"{context}{key}.")
        else:
            merged[key] = value
    return merged


def load_config(command: str, path: str | None) -> dict:
    given = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            given = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {p} is not valid JSON: {exc}") from exc
        if not isinstance(given, dict):
            raise ConfigError(f"config file {p} must hold a JSON object")
    return _strict_merge(DEFAULTS[command], given, "")


def _build_suite(cfg: dict) -> DomainSuite:
    return rotated_moons_suite(
        source_angles=tuple(cfg["source_angles"]),
        target_angles=tuple(cfg["target_angles"]),
        n_per_domain=cfg["n_per_domain"],
        noise_sd=cfg["noise_sd"],
        val_fraction=cfg["val_fraction"],
        seed=cfg["seed"],
    )


def _build_net(cfg: dict) -> NetworkSpec:
    return NetworkSpec((2, *cfg["net_hidden"], 2))


def _settings(cfg: dict) -> TrainSettings:
    return TrainSettings(
        net=_build_net(cfg),
        iterations=cfg["iterations"],
        inner_lr=cfg["inner_lr"],
        outer=cfg["outer"],
        outer_lr=cfg["outer_lr"],
        batch_size=cfg["batch_size"],
        k=cfg["k"],
        swa_burn_in=cfg["swa_burn_in"],
    )


def run_bench(cfg: dict, out_dir: Path, verbose: bool = False) -> int:
    suite = _build_suite(cfg["suite"])
    rows = analysis.bench_table(
        suite, _settings(cfg), methods=tuple(cfg["methods"]), seeds=tuple(cfg["seeds"])
    )
    analysis.write_rows_csv(rows, out_dir / "bench.csv", sidecar=cfg)
    if verbose:
        for row in rows:
            print("  " + ", ".join(f"{k}={v}" for k, v in row.items()))
    print(f"wrote {out_dir / 'bench.csv'}")
    return 0


def run_verify(suite_names=None) -> int:
    results = verify.run_suites(suite_names)
    failed = []
    for name, (passed, msgs) in results.items():
        print(f"{name:10s} {'PASS' if passed else 'FAIL'}")
        for msg in msgs:
            print(f"           {msg}")
        if not passed:
            failed.append(name)
    if failed:
        print(f"failed suites: {', '.join(failed)}")
        return 2
    return 0


def run_plane(cfg: dict, out_dir: Path, verbose: bool = False) -> int:
    suite = _build_suite(cfg["suite"])
    net = _build_net(cfg)
    settings = _settings(cfg)
    seed = cfg["seed"]

    # common starting model: a short training run, then per-domain refinement
    from .meta import MetaConfig, arith_scheme, train

    warm = train(
        MetaConfig(
            net=net,
            scheme=arith_scheme(suite.n_sources),
            iterations=cfg["burn_in_iterations"],
            inner_lr=settings.inner_lr,
            k=settings.k,
            batch_size=settings.batch_size,
            outer=settings.outer,
            outer_lr=settings.outer_lr,
            seed=seed,
        ),
        suite,
    )
    anchor_lr = cfg["anchor_lr"] if cfg["anchor_lr"] is not None else settings.inner_lr
    anchors = analysis.plane_anchor_models(
        net, warm.final_params, suite,
        steps=cfg["anchor_steps"], lr=anchor_lr, batch_size=settings.batch_size, seed=seed,
    )
    basis = analysis.plane_basis(*anchors)
    a_range, b_range = analysis.default_ranges(basis, margin=cfg["margin"])
    grid = analysis.eval_plane(
        basis,
        analysis.domain_loss_fns(net, suite),
        a_range,
        b_range,
        cfg["resolution"],
        snap_to=basis.anchor_coords,
    )
    centroid = basis.anchor_coords.mean(axis=0)
    sidecar = {
        "config": cfg,
        "anchors": basis.anchor_coords.tolist(),
        "centroid": centroid.tolist(),
        "domains": grid.domain_ids,
    }
    analysis.write_plane_csv(grid, out_dir / "plane.csv", sidecar=sidecar)
    print(f"wrote {out_dir / 'plane.csv'}")
    return 0


def run_adamtrace(cfg: dict, out_dir: Path, verbose: bool = False) -> int:
    if cfg["source"] == "unit":
        stream = analysis.unit_gradient_stream(cfg["n_domains"], cfg["steps"], cfg["dim"])
        n_domains = cfg["n_domains"]
    elif cfg["source"] == "training":
        suite = _build_suite(cfg["suite"])
        stream = analysis.training_gradient_stream(
            _build_net(cfg), suite, cfg["steps"],
            inner_lr=cfg["inner_lr"], batch_size=cfg["batch_size"], seed=cfg["seed"],
        )
        n_domains = suite.n_sources
    else:
        raise ConfigError(f"unknown adamtrace source {cfg['source']!r}")
    rows = analysis.momentum_fraction_trace(n_domains, stream, beta1=cfg["beta1"])
    analysis.write_adamtrace_csv(rows, out_dir / "adamtrace.csv", sidecar=cfg)
    print(f"wrote {out_dir / 'adamtrace.csv'}")
    return 0


_QUADRATIC_TASKS = {
    "pair1d": [[1.0], [-1.0]],
    "simplex3": [[1.0, 0.0], [-0.5, np.sqrt(3.0) / 2.0], [-0.5, -np.sqrt(3.0) / 2.0]],
}


def run_quadratic(cfg: dict, out_dir: Path, verbose: bool = False) -> int:
    rows = []
    for task_name in cfg["tasks"]:
        if task_name not in _QUADRATIC_TASKS:
            raise ConfigError(f"unknown quadratic task {task_name!r}")
        task = QuadraticTask.from_points(_QUADRATIC_TASKS[task_name])
        order = list(range(task.n))
        for scheme_name in cfg["schemes"]:
            if scheme_name == "arith":
                scheme = WeightScheme.arithmetic(cfg["arith_eps"])
            elif scheme_name == "fish":
                scheme = WeightScheme.constant(1.0)
            else:
                raise ConfigError(f"unknown quadratic scheme {scheme_name!r}")
            for lr in cfg["lrs"]:
                res = fixed_point(task, scheme, lr, order, iters=cfg["iters"])
                dist, per_domain = centroid_distance(res.theta, task)
                rows.append([
                    scheme_name,
                    float(lr),
                    task.n,
                    dist,
                    float(per_domain.max() - per_domain.min()),
                    res.iterations,
                ])
    header = ["scheme", "lr", "n", "centroid_dist", "spread", "iters_to_converge"]
    write_csv_atomic(out_dir / "quadratic.csv", header, rows)
    write_json_atomic(out_dir / "quadratic.json", cfg)
    print(f"wrote {out_dir / 'quadratic.csv'}")
    return 0


def run_sweep(cfg: dict, out_dir: Path, verbose: bool = False) -> int:
    suite = _build_suite(cfg["suite"])
    rows = analysis.sweep_steps(
        suite, _settings(cfg), k_values=cfg["k_values"], seeds=tuple(cfg["seeds"])
    )
    analysis.write_rows_csv(rows, out_dir / "sweep.csv", sidecar=cfg)
    print(f"wrote {out_dir / 'sweep.csv'}")
    return 0


def run_ablation(cfg: dict, out_dir: Path, verbose: bool = False) -> int:
    suite = _build_suite(cfg["suite"])
    rows = analysis.ablation_grid(
        suite,
        _settings(cfg),
        seeds=tuple(cfg["seeds"]),
        schemes=tuple(cfg["schemes"]),
        scaled=tuple(cfg["scaled"]),
        outer=tuple(cfg["outer_modes"]),
        momentum_in_inner=tuple(cfg["momentum_in_inner"]),
        domain_specific_sampling=tuple(cfg["domain_specific_sampling"]),
    )
    analysis.write_rows_csv(rows, out_dir / "ablation.csv", sidecar=cfg)
    print(f"wrote {out_dir / 'ablation.csv'}")
    return 0


_RUNNERS = {
    "bench": run_bench,
    "plane": run_plane,
    "adamtrace": run_adamtrace,
    "quadratic": run_quadratic,
    "sweep": run_sweep,
    "ablation": run_ablation,
}


def _apply_seed_override(command: str, cfg: dict, seed: int | None) -> dict:
    if seed is None:
        return cfg
    cfg = copy.deepcopy(cfg)
    if command in ("bench", "sweep", "ablation"):
        cfg["seeds"] = [seed]
    else:
        cfg["seed"] = seed
    if "suite" in cfg:
        cfg["suite"]["seed"] = seed
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="arithmeta",
        description="Multi-domain meta-training engine, oracles, and figure/table exports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (*_RUNNERS, "verify"):
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file (strict keys)")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, help="seed override")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "verify":
            p.add_argument("--suite", action="append",
                           help="run only the named verification suite (repeatable)")
    args = parser.parse_args(argv)

    try:
        if args.command == "verify":
            return run_verify(args.suite)
        cfg = load_config(args.command, args.config)
        cfg = _apply_seed_override(args.command, cfg, args.seed)
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        return _RUNNERS[args.command](cfg, out_dir, verbose=args.verbose)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
