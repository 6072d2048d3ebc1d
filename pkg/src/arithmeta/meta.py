"""The inner/outer-loop training engine.

One meta-iteration runs a few momentum-free SGD steps on each source domain
in turn, records the per-domain displacement gradients g_i = theta_i -
theta_{i+1}, and then updates the base parameters with a weighted sum of
those gradients.  Constant weights reproduce interpolation toward the final
inner model; arithmetically decreasing weights reproduce averaging of all
intermediate inner models, which drags the base model toward the centroid
of the per-domain solutions instead of the most recent one.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .csvio import write_csv_atomic, write_json_atomic
from .datasets import (
    DomainDataset,
    DomainSuite,
    SamplerState,
    full_batch,
    sample_batch,
    sample_mixture_batch,
)
from .nn import Batch, NetworkSpec
from .optim import AdamState, SgdConfig, adam_step, sgd_step

# ---------------------------------------------------------------------------
# gradient weighting


@dataclass(frozen=True)
class WeightScheme:
    """Rule producing the per-gradient outer-loop coefficients.

    kinds:
      constant(eps)    -> [eps] * n
      arithmetic(eps)  -> [(n + 1 - i) / (n + eps) for i = 1..n], decreasing
      explicit(values) -> the given list, whose length must equal n at use time
    """

    kind: str
    eps: float = 0.0
    values: tuple[float, ...] | None = None

    @classmethod
    def constant(cls, eps: float) -> "WeightScheme":
        if eps <= 0:
            raise ValueError("constant scheme needs eps > 0")
        return cls("constant", eps=float(eps))

    @classmethod
    def arithmetic(cls, eps: float) -> "WeightScheme":
        return cls("arithmetic", eps=float(eps))

    @classmethod
    def explicit(cls, values) -> "WeightScheme":
        vals = tuple(float(v) for v in values)
        if not vals or not np.all(np.isfinite(vals)):
            raise ValueError("explicit scheme needs a non-empty finite weight list")
        return cls("explicit", values=vals)


def weights(scheme: WeightScheme, n: int) -> np.ndarray:
    """Materialize the outer-loop coefficient for each of n inner gradients."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if scheme.kind == "constant":
        return np.full(n, scheme.eps)
    if scheme.kind == "arithmetic":
        if n + scheme.eps <= 0:
            raise ValueError(f"arithmetic scheme degenerate: n + eps = {n + scheme.eps}")
        return np.arange(n, 0, -1, dtype=np.float64) / (n + scheme.eps)
    if scheme.kind == "explicit":
        if len(scheme.values) != n:
            raise ValueError(f"explicit scheme has {len(scheme.values)} weights, needs {n}")
        return np.array(scheme.values)
    raise ValueError(f"unknown scheme kind {scheme.kind!r}")


def fish_scheme(n: int, scaled: bool = False) -> WeightScheme:
    """Constant weights summing to 1 (or 1.5 when scaled)."""
    total = 1.5 if scaled else 1.0
    return WeightScheme.constant(total / n)


def arith_scheme(n: int, scaled: bool = False) -> WeightScheme:
    """Arithmetic weights summing to 1 (or 1.5 when scaled).

    The weight sum is n(n+1)/(2(n+eps)), so eps = n(n+1)/(2*total) - n.
    """
    total = 1.5 if scaled else 1.0
    return WeightScheme.arithmetic(n * (n + 1) / (2.0 * total) - n)


# ---------------------------------------------------------------------------
# inner loop


@dataclass
class InnerTrace:
    """Record of one inner pass: n+1 parameter snapshots and n displacement gradients."""

    thetas: list[np.ndarray]
    grads: list[np.ndarray]
    losses: list[float]
    domain_order: np.ndarray
    k: int

    @property
    def n(self) -> int:
        return len(self.grads)


def iteration_order(rng: np.random.Generator, n_sources: int, shuffle: bool) -> np.ndarray:
    return rng.permutation(n_sources) if shuffle else np.arange(n_sources)


def inner_loop(
    net: NetworkSpec,
    theta: np.ndarray,
    suite: DomainSuite,
    order,
    k: int,
    inner_lr: float,
    sampler: SamplerState,
    batch_size: int,
    inner_adam: AdamState | None = None,
    uniform_sampling: bool = False,
) -> tuple[InnerTrace, AdamState | None]:
    """Run k fresh-batch steps per source domain, in the given order.

    The default step is momentum-free SGD so each g_i reflects only its own
    domain; passing an Adam state instead (persistent across calls) is the
    momentum-in-the-inner-loop variant.  With uniform_sampling the per-step
    batches are pooled across domains rather than domain-specific.
    """
    order = np.asarray(order, dtype=np.int64)
    if suite.n_sources == 0:
        raise ValueError("suite has no source domains")
    if sorted(order.tolist()) != list(range(suite.n_sources)):
        raise ValueError("order must be a permutation of the source indices")
    if k < 1:
        raise ValueError("k must be at least 1")

    cfg = SgdConfig(inner_lr)
    thetas = [np.array(theta, dtype=np.float64)]
    losses = []
    for idx in order:
        current = thetas[-1]
        first_loss = None
        for _ in range(k):
            if uniform_sampling:
                batch = sample_mixture_batch(sampler, suite.train_sets, batch_size)
            else:
                batch = sample_batch(sampler, suite.train_sets[idx], batch_size)
            if first_loss is None:
                first_loss = nn.forward_loss(net, current, batch)
            grad = nn.backward(net, current, batch)
            if inner_adam is not None:
                current, inner_adam = adam_step(current, grad, inner_adam)
            else:
                current = sgd_step(current, grad, cfg)
        thetas.append(current)
        losses.append(first_loss)
    grads = [thetas[i] - thetas[i + 1] for i in range(len(order))]
    return InnerTrace(thetas, grads, losses, order, k), inner_adam


# ---------------------------------------------------------------------------
# outer updates


def outer_update_gradform(
    theta: np.ndarray, trace: InnerTrace, scheme: WeightScheme
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted-gradient outer update.

    Returns (meta_grad, theta_direct): the weighted gradient sum, and the
    directly updated parameters theta - meta_grad.  Callers using an outer
    optimizer feed meta_grad to it as a pseudo-gradient instead.
    """
    w = weights(scheme, trace.n)
    theta = np.asarray(theta, dtype=np.float64)
    if any(g.shape != theta.shape for g in trace.grads):
        raise ValueError("trace gradient layout does not match theta")
    meta_grad = np.zeros_like(theta)
    for wi, gi in zip(w, trace.grads):
        meta_grad += wi * gi
    return meta_grad, theta - meta_grad


def outer_update_avgform(theta: np.ndarray, trace: InnerTrace, eps: float) -> np.ndarray:
    """Averaging-form outer update: (eps*theta_1 + sum(theta_{i+1})) / (n + eps).

    Algebraically identical to the gradient form with arithmetic(eps) weights.
    """
    n = trace.n
    if n + eps <= 0:
        raise ValueError(f"degenerate denominator: n + eps = {n + eps}")
    theta1 = trace.thetas[0]
    total = eps * theta1 + np.sum(trace.thetas[1:], axis=0)
    return total / (n + eps)


def erm_step(
    net: NetworkSpec,
    theta: np.ndarray,
    suite: DomainSuite,
    sampler: SamplerState,
    batch_size: int,
    opt: AdamState | SgdConfig,
) -> tuple[np.ndarray, AdamState | SgdConfig, float]:
    """One pooled-risk step on a batch mixed uniformly across source domains."""
    batch = sample_mixture_batch(sampler, suite.train_sets, batch_size)
    loss = nn.forward_loss(net, theta, batch)
    grad = nn.backward(net, theta, batch)
    if isinstance(opt, AdamState):
        theta, opt = adam_step(theta, grad, opt)
    else:
        theta = sgd_step(theta, grad, opt)
    return theta, opt, loss


def swa_accumulate(avg: np.ndarray, count: int, theta: np.ndarray) -> tuple[np.ndarray, int]:
    """Fold one checkpoint into a running mean of accepted checkpoints."""
    if count < 0:
        raise ValueError("count must be non-negative")
    theta = np.asarray(theta, dtype=np.float64)
    if count == 0:
        return theta.copy(), 1
    if avg.shape != theta.shape:
        raise ValueError("running average layout does not match theta")
    return (count * avg + theta) / (count + 1), count + 1


# ---------------------------------------------------------------------------
# evaluation


def evaluate_accuracy(net: NetworkSpec, params: np.ndarray, datasets) -> float:
    """Pooled classification accuracy over one or more datasets."""
    if isinstance(datasets, DomainDataset):
        datasets = [datasets]
    correct = total = 0
    for d in datasets:
        pred = nn.predict_classes(net, params, d.inputs)
        correct += int(np.sum(pred == d.labels))
        total += d.n
    return correct / total


def evaluate_loss(net: NetworkSpec, params: np.ndarray, dataset: DomainDataset) -> float:
    return nn.forward_loss(net, params, full_batch(dataset))


# ---------------------------------------------------------------------------
# full runs


@dataclass(frozen=True)
class MetaConfig:
    """Everything a meta-training run depends on (fully determines the run)."""

    net: NetworkSpec
    scheme: WeightScheme
    iterations: int
    inner_lr: float
    k: int = 1
    batch_size: int = 32
    outer: str = "direct"  # "direct" applies theta - sum(w_i g_i); "adam" feeds it to Adam
    outer_lr: float = 1e-2
    shuffle_domains: bool = True
    seed: int = 0
    swa_burn_in: float | None = None
    inner_momentum: bool = False
    uniform_sampling: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.inner_lr <= 0:
            raise ValueError("inner_lr must be positive")
        if self.outer not in ("direct", "adam"):
            raise ValueError(f"unknown outer mode {self.outer!r}")
        if self.swa_burn_in is not None and not 0.0 <= self.swa_burn_in < 1.0:
            raise ValueError("swa_burn_in must lie in [0, 1)")


@dataclass(frozen=True)
class ErmConfig:
    """Pooled-risk baseline: one optimizer step per iteration on mixed batches."""

    net: NetworkSpec
    iterations: int
    lr: float
    batch_size: int = 32
    optimizer: str = "adam"  # "adam" | "sgd"
    seed: int = 0
    swa_burn_in: float | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class RunResult:
    final_params: np.ndarray
    swa_params: np.ndarray | None
    best_params: np.ndarray
    best_iteration: int
    train_loss: np.ndarray
    val_acc: np.ndarray
    target_acc: np.ndarray
    wall_clock_s: float
    config: dict
    # the tail-averaged model is itself a per-iteration artifact, so source-val
    # model selection applies to it the same way it applies to raw checkpoints
    swa_best_params: np.ndarray | None = None
    swa_best_val: float = -1.0


class _RunRecorder:
    """Shared per-iteration bookkeeping: metrics, best-model tracking, SWA."""

    def __init__(self, net, suite, iterations, swa_burn_in):
        self.net = net
        self.suite = suite
        self.train_loss = np.zeros(iterations)
        self.val_acc = np.zeros(iterations)
        self.target_acc = np.zeros(iterations)
        self.best_val = -1.0
        self.best_iteration = -1
        self.best_params = None
        self.swa_params = None
        self.swa_count = 0
        self.swa_best_params = None
        self.swa_best_val = -1.0
        if swa_burn_in is None:
            self.swa_start = None
        else:
            self.swa_start = min(int(round(swa_burn_in * iterations)), iterations - 1)

    def record(self, it: int, theta: np.ndarray, train_loss: float) -> None:
        self.train_loss[it] = train_loss
        self.val_acc[it] = evaluate_accuracy(self.net, theta, self.suite.val_sets)
        if self.suite.targets:
            self.target_acc[it] = evaluate_accuracy(self.net, theta, self.suite.targets)
        if self.val_acc[it] > self.best_val:
            self.best_val = self.val_acc[it]
            self.best_iteration = it
            self.best_params = theta.copy()
        if self.swa_start is not None and it >= self.swa_start:
            self.swa_params, self.swa_count = swa_accumulate(
                self.swa_params if self.swa_params is not None else np.zeros_like(theta),
                self.swa_count,
                theta,
            )
            swa_val = evaluate_accuracy(self.net, self.swa_params, self.suite.val_sets)
            if swa_val > self.swa_best_val:
                self.swa_best_val = swa_val
                self.swa_best_params = self.swa_params.copy()

    def result(self, theta: np.ndarray, started: float, config: dict) -> RunResult:
        return RunResult(
            final_params=theta,
            swa_params=self.swa_params,
            best_params=self.best_params,
            best_iteration=self.best_iteration,
            train_loss=self.train_loss,
            val_acc=self.val_acc,
            target_acc=self.target_acc,
            wall_clock_s=time.perf_counter() - started,
            config=config,
            swa_best_params=self.swa_best_params,
            swa_best_val=self.swa_best_val,
        )


def train(config: MetaConfig, suite: DomainSuite) -> RunResult:
    """Run the full meta-training loop; deterministic for a given (config, suite)."""
    started = time.perf_counter()
    net = config.net
    theta = nn.init_params(net, config.seed)
    order_rng = np.random.default_rng([config.seed, 1])
    sampler = SamplerState(np.random.default_rng([config.seed, 2]).integers(2**63))
    n = suite.n_sources

    outer_adam = (
        AdamState.zeros(net.param_count, learning_rate=config.outer_lr)
        if config.outer == "adam"
        else None
    )
    inner_adam = (
        AdamState.zeros(net.param_count, learning_rate=config.inner_lr)
        if config.inner_momentum
        else None
    )
    recorder = _RunRecorder(net, suite, config.iterations, config.swa_burn_in)

    for it in range(config.iterations):
        order = iteration_order(order_rng, n, config.shuffle_domains)
        trace, inner_adam = inner_loop(
            net,
            theta,
            suite,
            order,
            config.k,
            config.inner_lr,
            sampler,
            config.batch_size,
            inner_adam=inner_adam,
            uniform_sampling=config.uniform_sampling,
        )
        meta_grad, theta_direct = outer_update_gradform(theta, trace, config.scheme)
        if outer_adam is not None:
            theta, outer_adam = adam_step(theta, meta_grad, outer_adam)
        else:
            theta = theta_direct
        recorder.record(it, theta, float(np.mean(trace.losses)))

    return recorder.result(theta, started, _config_echo(config))


def train_erm(config: ErmConfig, suite: DomainSuite) -> RunResult:
    """Train the pooled-risk baseline with per-iteration metrics matching train()."""
    started = time.perf_counter()
    net = config.net
    theta = nn.init_params(net, config.seed)
    sampler = SamplerState(np.random.default_rng([config.seed, 2]).integers(2**63))
    opt = (
        AdamState.zeros(net.param_count, learning_rate=config.lr)
        if config.optimizer == "adam"
        else SgdConfig(config.lr)
    )
    recorder = _RunRecorder(net, suite, config.iterations, config.swa_burn_in)
    for it in range(config.iterations):
        theta, opt, loss = erm_step(net, theta, suite, sampler, config.batch_size, opt)
        recorder.record(it, theta, loss)
    return recorder.result(theta, started, _config_echo(config))


def _config_echo(config) -> dict:
    echo = asdict(config)
    echo["type"] = type(config).__name__
    return echo


def export_run_result(result: RunResult, out_dir, name: str) -> None:
    """JSON summary plus per-iteration metrics CSV (iter,train_loss,val_acc,target_acc)."""
    from pathlib import Path

    out_dir = Path(out_dir)
    summary = {
        "config": result.config,
        "wall_clock_s": result.wall_clock_s,
        "best_iteration": result.best_iteration,
        "best_val_acc": float(result.val_acc[result.best_iteration]),
        "final_val_acc": float(result.val_acc[-1]),
        "final_target_acc": float(result.target_acc[-1]),
        "swa_enabled": result.swa_params is not None,
    }
    write_json_atomic(out_dir / f"{name}.json", summary)
    rows = [
        [it, result.train_loss[it], result.val_acc[it], result.target_acc[it]]
        for it in range(len(result.train_loss))
    ]
    write_csv_atomic(out_dir / f"{name}_metrics.csv", ["iter", "train_loss", "val_acc", "target_acc"], rows)


# ---------------------------------------------------------------------------
# expansion and averaging diagnostics


def taylor_residual(
    net: NetworkSpec,
    theta1: np.ndarray,
    datasets: list[DomainDataset],
    order,
    alpha: float,
    target_step: int,
) -> tuple[float, float]:
    """Gap between the target step's loss and its first-order prediction.

    Runs target_step - 1 full-batch SGD steps through the given domains,
    then compares the target domain's loss at the reached parameters with
    loss(theta_1) - alpha * dot_sum, where dot_sum pairs the target domain's
    initial gradient with each preceding domain's initial gradient.  The
    residual shrinks as alpha^2 for smooth activations.
    """
    if net.activation != "tanh":
        raise ValueError("residual measurement requires the smooth (tanh) activation")
    order = list(order)
    if not 1 <= target_step <= len(order):
        raise ValueError(f"target_step must lie in [1, {len(order)}]")
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    batches = [full_batch(datasets[i]) for i in order]
    theta1 = np.asarray(theta1, dtype=np.float64)

    theta = theta1
    for i in range(target_step - 1):
        theta = theta - alpha * nn.backward(net, theta, batches[i])

    target = batches[target_step - 1]
    loss_reached = nn.forward_loss(net, theta, target)
    loss_start = nn.forward_loss(net, theta1, target)
    target_grad = nn.backward(net, theta1, target)
    dot_sum = sum(
        float(nn.backward(net, theta1, batches[i]) @ target_grad)
        for i in range(target_step - 1)
    )
    residual = loss_reached - (loss_start - alpha * dot_sum)
    return residual, dot_sum


def ensemble_gap(net: NetworkSpec, models: list[np.ndarray], inputs: np.ndarray) -> float:
    """Max |output of averaged model - average of model outputs| over a batch."""
    if len(models) < 2:
        raise ValueError("need at least two models")
    models = [net.check_params(m) for m in models]
    mean_model = np.mean(models, axis=0)
    avg_output = np.mean([nn.forward_outputs(net, m, inputs) for m in models], axis=0)
    merged_output = nn.forward_outputs(net, mean_model, inputs)
    return float(np.max(np.abs(merged_output - avg_output)))
