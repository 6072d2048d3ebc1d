"""Table and grid exports: loss planes, momentum-fraction traces, sweeps.

Everything here evaluates pure functions on grids or runs independent
training jobs, so cells and runs can be fanned out over a bounded worker
pool (capped by the ARITH_THREADS environment variable).  Output rows are
ordered by index, never by completion time, so exports are byte-stable.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import nn
from .csvio import write_csv_atomic, write_json_atomic
from .datasets import DomainSuite, SamplerState, sample_batch
from .meta import (
    ErmConfig,
    MetaConfig,
    RunResult,
    arith_scheme,
    evaluate_accuracy,
    fish_scheme,
    train,
    train_erm,
)
from .nn import NetworkSpec
from .optim import AdamState, MomentumLedger, adam_step, ledger_fractions, ledger_update, sgd_step, SgdConfig


def worker_count() -> int:
    env = os.environ.get("ARITH_THREADS")
    if env is not None:
        count = int(env)
        if count < 1:
            raise ValueError("ARITH_THREADS must be at least 1")
        return count
    return min(4, os.cpu_count() or 1)


def _run_indexed(fn, items):
    """Map fn over items on the worker pool, preserving input order."""
    items = list(items)
    if len(items) <= 1 or worker_count() == 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# loss planes


@dataclass(frozen=True)
class PlaneBasis:
    """Orthonormal 2-D slice of parameter space through three models."""

    origin: np.ndarray
    u: np.ndarray
    v: np.ndarray
    anchor_coords: np.ndarray  # (3, 2): each anchor in (u, v) coordinates

    def point(self, a: float, b: float) -> np.ndarray:
        return self.origin + a * self.u + b * self.v


def plane_basis(theta_a: np.ndarray, theta_b: np.ndarray, theta_c: np.ndarray) -> PlaneBasis:
    """Gram-Schmidt basis for the plane through three affinely independent models."""
    theta_a = np.asarray(theta_a, dtype=np.float64)
    d_b = np.asarray(theta_b, dtype=np.float64) - theta_a
    d_c = np.asarray(theta_c, dtype=np.float64) - theta_a
    norm_b = float(np.linalg.norm(d_b))
    if norm_b < 1e-10:
        raise ValueError("first two anchor models coincide")
    u = d_b / norm_b
    proj = float(d_c @ u)
    w = d_c - proj * u
    norm_w = float(np.linalg.norm(w))
    if norm_w < 1e-10:
        raise ValueError("anchor models are collinear; no plane is defined")
    v = w / norm_w
    coords = np.array([[0.0, 0.0], [norm_b, 0.0], [proj, norm_w]])
    return PlaneBasis(theta_a.copy(), u, v, coords)


def default_ranges(basis: PlaneBasis, margin: float = 0.3) -> tuple[tuple[float, float], tuple[float, float]]:
    """Anchor bounding box expanded by `margin` of its span on each side."""
    lo = basis.anchor_coords.min(axis=0)
    hi = basis.anchor_coords.max(axis=0)
    pad = margin * (hi - lo)
    return (lo[0] - pad[0], hi[0] + pad[0]), (lo[1] - pad[1], hi[1] + pad[1])


@dataclass
class LossGrid:
    a_values: np.ndarray
    b_values: np.ndarray
    values: np.ndarray  # (len(a_values), len(b_values), n_domains)
    domain_ids: list[int]


def _snap_axis(values: np.ndarray, coords) -> np.ndarray:
    """Move the node nearest each coordinate onto it exactly.

    Keeps the axis strictly increasing; used so anchor models are exact grid
    cells rather than falling between nodes.
    """
    values = values.copy()
    used: set[int] = set()
    for c in sorted({float(c) for c in coords}):
        if not values[0] <= c <= values[-1]:
            continue
        for i in np.argsort(np.abs(values - c)):
            if int(i) not in used:
                values[int(i)] = c
                used.add(int(i))
                break
    values = np.sort(values)
    if not np.all(np.diff(values) > 0):
        raise ValueError("axis snapping produced a degenerate grid")
    return values


def eval_plane(basis: PlaneBasis, loss_fns, a_range, b_range, resolution, snap_to=None) -> LossGrid:
    """Evaluate per-domain losses over the (a, b) grid; cells are independent.

    snap_to: optional (m, 2) coordinates to pin onto grid nodes exactly.
    """
    if isinstance(resolution, int):
        resolution = (resolution, resolution)
    if min(resolution) < 2:
        raise ValueError("resolution must be at least 2 per axis")
    loss_fns = dict(loss_fns)
    a_values = np.linspace(a_range[0], a_range[1], resolution[0])
    b_values = np.linspace(b_range[0], b_range[1], resolution[1])
    if snap_to is not None:
        snap_to = np.atleast_2d(np.asarray(snap_to, dtype=np.float64))
        a_values = _snap_axis(a_values, snap_to[:, 0])
        b_values = _snap_axis(b_values, snap_to[:, 1])
    ids = list(loss_fns)

    def row(i: int) -> np.ndarray:
        out = np.empty((b_values.size, len(ids)))
        for j, b in enumerate(b_values):
            point = basis.point(a_values[i], b)
            for d, key in enumerate(ids):
                out[j, d] = loss_fns[key](point)
        return out

    stacked = np.stack(_run_indexed(row, range(a_values.size)))
    if not np.all(np.isfinite(stacked)):
        raise ValueError("loss grid contains non-finite values")
    return LossGrid(a_values, b_values, stacked, ids)


def domain_loss_fns(net: NetworkSpec, suite: DomainSuite) -> dict[int, callable]:
    """Full-validation-set loss per source domain plus full-set loss per target."""
    from .datasets import full_batch

    fns = {}
    for d in suite.val_sets:
        batch = full_batch(d)
        fns[d.domain_id] = lambda p, b=batch: nn.forward_loss(net, p, b)
    for d in suite.targets:
        batch = full_batch(d)
        fns[d.domain_id] = lambda p, b=batch: nn.forward_loss(net, p, b)
    return fns


def plane_anchor_models(
    net: NetworkSpec,
    theta: np.ndarray,
    suite: DomainSuite,
    steps: int = 30,
    lr: float = 0.3,
    batch_size: int = 32,
    seed: int = 0,
) -> list[np.ndarray]:
    """One anchor per source domain: `steps` SGD updates on that domain alone."""
    if suite.n_sources < 3:
        raise ValueError("plane anchors need at least three source domains")
    cfg = SgdConfig(lr)
    anchors = []
    for idx in range(3):
        params = np.asarray(theta, dtype=np.float64).copy()
        sampler = SamplerState(np.random.default_rng([seed, 40, idx]).integers(2**63))
        for _ in range(steps):
            batch = sample_batch(sampler, suite.train_sets[idx], batch_size)
            params = sgd_step(params, nn.backward(net, params, batch), cfg)
        anchors.append(params)
    return anchors


def write_plane_csv(grid: LossGrid, path, sidecar: dict | None = None) -> None:
    header = ["a", "b"] + [f"loss_domain{d}" for d in grid.domain_ids]
    rows = []
    for i, a in enumerate(grid.a_values):
        for j, b in enumerate(grid.b_values):
            rows.append([float(a), float(b)] + [float(x) for x in grid.values[i, j]])
    write_csv_atomic(path, header, rows)
    if sidecar is not None:
        write_json_atomic(str(path) + ".json" if not str(path).endswith(".csv") else str(path)[:-4] + ".json", sidecar)


# ---------------------------------------------------------------------------
# momentum-fraction traces


def unit_gradient_stream(n_domains: int, steps: int, dim: int = 8):
    """Domains take turns issuing the same unit-L1 gradient; the analytic case."""
    g = np.ones(dim) / dim
    for t in range(steps):
        yield t % n_domains, g


def training_gradient_stream(
    net: NetworkSpec,
    suite: DomainSuite,
    steps: int,
    inner_lr: float = 0.01,
    batch_size: int = 32,
    seed: int = 0,
):
    """Real gradients from momentum-in-the-loop training, domains cycling."""
    theta = nn.init_params(net, seed)
    sampler = SamplerState(np.random.default_rng([seed, 3]).integers(2**63))
    state = AdamState.zeros(net.param_count, learning_rate=inner_lr)
    for t in range(steps):
        dom = t % suite.n_sources
        batch = sample_batch(sampler, suite.train_sets[dom], batch_size)
        grad = nn.backward(net, theta, batch)
        theta, state = adam_step(theta, grad, state)
        yield dom, grad


def momentum_fraction_trace(n_domains: int, stream, beta1: float = 0.9) -> list[dict]:
    """Per-step L1 share of each domain in the accumulated first moment."""
    rows = []
    ledger: MomentumLedger | None = None
    step = 0
    for domain_id, grad in stream:
        if ledger is None:
            ledger = MomentumLedger.zeros(range(n_domains), np.asarray(grad).size)
        ledger = ledger_update(ledger, grad, domain_id, beta1)
        step += 1
        fractions = ledger_fractions(ledger)
        rows.append({"step": step, **{f"domain_{d}": fractions[d] for d in range(n_domains)}})
    return rows


def write_adamtrace_csv(rows: list[dict], path, sidecar: dict | None = None) -> None:
    if not rows:
        raise ValueError("no trace rows to write")
    n_domains = len(rows[0]) - 1
    header = ["step"] + [f"domain_{d}" for d in range(n_domains)]
    write_csv_atomic(path, header, [[row[h] for h in header] for row in rows])
    if sidecar is not None:
        write_json_atomic(str(path)[:-4] + ".json", sidecar)


# ---------------------------------------------------------------------------
# training-run tables


@dataclass(frozen=True)
class TrainSettings:
    """Shared engine settings for benches, sweeps, and ablations."""

    net: NetworkSpec
    iterations: int = 300
    inner_lr: float = 0.3
    outer: str = "adam"
    outer_lr: float = 0.02
    batch_size: int = 32
    k: int = 1
    swa_burn_in: float = 0.5


def _meta_config(settings: TrainSettings, suite: DomainSuite, scheme_name: str,
                 seed: int, swa: bool, scaled: bool = False,
                 inner_momentum: bool = False, uniform_sampling: bool = False) -> MetaConfig:
    n = suite.n_sources
    scheme = arith_scheme(n, scaled) if scheme_name == "arith" else fish_scheme(n, scaled)
    return MetaConfig(
        net=settings.net,
        scheme=scheme,
        iterations=settings.iterations,
        inner_lr=settings.inner_lr,
        k=settings.k,
        batch_size=settings.batch_size,
        outer=settings.outer,
        outer_lr=settings.outer_lr,
        seed=seed,
        swa_burn_in=settings.swa_burn_in if swa else None,
        inner_momentum=inner_momentum,
        uniform_sampling=uniform_sampling,
    )


def _selected_model(result: RunResult, swa: bool) -> tuple[np.ndarray, float]:
    """The delivered model and its source-val accuracy, under val selection."""
    if swa:
        return result.swa_best_params, result.swa_best_val
    return result.best_params, float(result.val_acc[result.best_iteration])


BENCH_METHODS = ("erm", "fish", "arith", "erm_swa", "fish_swa", "arith_swa")


def _bench_run(settings: TrainSettings, suite: DomainSuite, method: str, seed: int):
    base, _, suffix = method.partition("_")
    swa = suffix == "swa"
    if base == "erm":
        cfg = ErmConfig(
            net=settings.net,
            iterations=settings.iterations,
            lr=settings.outer_lr,
            batch_size=settings.batch_size,
            seed=seed,
            swa_burn_in=settings.swa_burn_in if swa else None,
        )
        result = train_erm(cfg, suite)
    else:
        result = train(_meta_config(settings, suite, base, seed, swa), suite)
    model, val_acc = _selected_model(result, swa)
    target_accs = [evaluate_accuracy(settings.net, model, t) for t in suite.targets]
    return val_acc, target_accs


def bench_table(
    suite: DomainSuite,
    settings: TrainSettings,
    methods=("erm", "fish", "arith", "arith_swa"),
    seeds=(0,),
) -> list[dict]:
    """Mean +- sd of source-val and per-target accuracy for each method."""
    for m in methods:
        if m not in BENCH_METHODS:
            raise ValueError(f"unknown bench method {m!r}")
    jobs = [(m, s) for m in methods for s in seeds]
    outs = _run_indexed(lambda job: _bench_run(settings, suite, *job), jobs)
    rows = []
    for mi, method in enumerate(methods):
        chunk = outs[mi * len(seeds) : (mi + 1) * len(seeds)]
        vals = np.array([c[0] for c in chunk])
        targets = np.array([c[1] for c in chunk])  # (n_seeds, n_targets)
        row = {"method": method, "val_mean": vals.mean(), "val_sd": vals.std()}
        for ti, target in enumerate(suite.targets):
            row[f"target{target.domain_id}_mean"] = targets[:, ti].mean()
            row[f"target{target.domain_id}_sd"] = targets[:, ti].std()
        rows.append(row)
    return rows


def sweep_steps(
    suite: DomainSuite,
    settings: TrainSettings,
    k_values,
    seeds,
    schemes=("fish", "arith"),
) -> list[dict]:
    """Target accuracy of each scheme as the per-domain step count grows."""
    if not list(k_values) or not list(seeds):
        raise ValueError("k_values and seeds must be non-empty")
    jobs = [(scheme, k, seed) for scheme in schemes for k in k_values for seed in seeds]

    def one(job):
        scheme, k, seed = job
        cfg = _meta_config(replace(settings, k=k), suite, scheme, seed, swa=False)
        result = train(cfg, suite)
        model, val_acc = _selected_model(result, swa=False)
        return val_acc, evaluate_accuracy(settings.net, model, suite.targets)

    outs = _run_indexed(one, jobs)
    rows = []
    idx = 0
    for scheme in schemes:
        for k in k_values:
            chunk = outs[idx : idx + len(seeds)]
            idx += len(seeds)
            vals = np.array([c[0] for c in chunk])
            tgts = np.array([c[1] for c in chunk])
            rows.append({
                "scheme": scheme,
                "k": k,
                "n_seeds": len(seeds),
                "val_mean": vals.mean(),
                "val_sd": vals.std(),
                "target_mean": tgts.mean(),
                "target_sd": tgts.std(),
            })
    return rows


def ablation_grid(
    suite: DomainSuite,
    settings: TrainSettings,
    seeds,
    schemes=("fish", "arith"),
    scaled=(False, True),
    outer=("direct", "adam"),
    momentum_in_inner=(False, True),
    domain_specific_sampling=(True, False),
) -> list[dict]:
    """Cartesian product of the ablation axes, one aggregated row per cell."""
    cells = [
        (sch, sc, out, mom, ds)
        for sch in schemes
        for sc in scaled
        for out in outer
        for mom in momentum_in_inner
        for ds in domain_specific_sampling
    ]
    jobs = [(cell, seed) for cell in cells for seed in seeds]

    def one(job):
        (sch, sc, out, mom, ds), seed = job
        cfg = _meta_config(
            replace(settings, outer=out), suite, sch, seed,
            swa=False, scaled=sc, inner_momentum=mom, uniform_sampling=not ds,
        )
        result = train(cfg, suite)
        model, val_acc = _selected_model(result, swa=False)
        return val_acc, evaluate_accuracy(settings.net, model, suite.targets)

    outs = _run_indexed(one, jobs)
    rows = []
    for ci, (sch, sc, out, mom, ds) in enumerate(cells):
        chunk = outs[ci * len(seeds) : (ci + 1) * len(seeds)]
        vals = np.array([c[0] for c in chunk])
        tgts = np.array([c[1] for c in chunk])
        rows.append({
            "scheme": sch,
            "scaled": sc,
            "outer": out,
            "momentum_in_inner": mom,
            "domain_specific_sampling": ds,
            "val_mean": vals.mean(),
            "val_sd": vals.std(),
            "target_mean": tgts.mean(),
            "target_sd": tgts.std(),
        })
    return rows


def write_rows_csv(rows: list[dict], path, sidecar: dict | None = None) -> None:
    if not rows:
        raise ValueError("no rows to write")
    header = list(rows[0])
    write_csv_atomic(path, header, [[row[h] for h in header] for row in rows])
    if sidecar is not None:
        write_json_atomic(str(path)[:-4] + ".json", sidecar)
