"""Release-gate checks: the algebraic and geometric identities the engine
rests on, runnable as `arithmeta verify` and importable from tests.

Each check returns (passed, messages); messages record the observed values
for failures so CI logs are actionable.
"""

from __future__ import annotations

import numpy as np

from . import meta, nn, quadratic
from .datasets import DomainDataset, SamplerState, rotated_moons_suite
from .meta import InnerTrace, MetaConfig, WeightScheme
from .nn import NetworkSpec
from .optim import AdamState, MomentumLedger, adam_step, ledger_fractions, ledger_update


def _random_trace(rng, n_steps, dim):
    thetas = [rng.normal(size=dim)]
    for _ in range(n_steps):
        thetas.append(thetas[-1] - rng.normal(scale=0.1, size=dim))
    grads = [thetas[i] - thetas[i + 1] for i in range(n_steps)]
    return InnerTrace(thetas, grads, [0.0] * n_steps, np.arange(n_steps), 1)


def check_gradients(n_instances: int = 100) -> tuple[bool, list[str]]:
    """Analytic gradients against central finite differences."""
    msgs = []
    for trial in range(n_instances):
        rng = np.random.default_rng(5000 + trial)
        activation = "tanh" if trial % 2 == 0 else "relu"
        loss = "softmax_cross_entropy" if trial % 3 != 0 else "squared_error"
        spec = NetworkSpec((3, 6, 4, 2), activation, loss)
        params = nn.init_params(spec, trial) + 0.3 * rng.normal(size=spec.param_count)
        inputs = rng.normal(size=(5, 3))
        if loss == "softmax_cross_entropy":
            targets = rng.integers(0, 2, size=5)
        else:
            targets = rng.normal(size=(5, 2))
        batch = nn.Batch(inputs, targets)
        analytic = nn.backward(spec, params, batch)
        numeric = nn.finite_diff_grad(spec, params, batch, 1e-5)
        err = np.abs(analytic - numeric)
        scale = np.maximum(np.abs(analytic), np.abs(numeric))
        ok = np.all((err <= 1e-8) | (err <= 1e-5 * scale))
        if not ok:
            msgs.append(f"instance {trial} ({activation}/{loss}): max err {err.max():.3e}")
    return not msgs, msgs


def check_averaging_identity() -> tuple[bool, list[str]]:
    """Weighted-gradient outer update against the intermediate-model average."""
    msgs = []
    rng = np.random.default_rng(42)
    for n in (2, 3, 5):
        for eps in (0.5, 1.0, 3.0, 10.0):
            for _ in range(9):
                trace = _random_trace(rng, n, 30)
                _, gradform = meta.outer_update_gradform(
                    trace.thetas[0], trace, WeightScheme.arithmetic(eps)
                )
                avgform = meta.outer_update_avgform(trace.thetas[0], trace, eps)
                diff = float(np.max(np.abs(gradform - avgform)))
                if diff > 1e-12:
                    msgs.append(f"trace n={n} eps={eps}: max abs diff {diff:.3e}")

    # 50-iteration trajectory: gradient-form engine vs averaging-form loop
    suite = rotated_moons_suite(n_per_domain=60, noise_sd=0.15, seed=0)
    net = NetworkSpec((2, 6, 2))
    eps = 3.0
    cfg = MetaConfig(net, WeightScheme.arithmetic(eps), iterations=50, inner_lr=0.1,
                     outer="direct", seed=11)
    engine = meta.train(cfg, suite)
    theta = nn.init_params(net, 11)
    order_rng = np.random.default_rng([11, 1])
    sampler = SamplerState(np.random.default_rng([11, 2]).integers(2**63))
    for _ in range(50):
        order = meta.iteration_order(order_rng, 3, True)
        trace, _ = meta.inner_loop(net, theta, suite, order, 1, 0.1, sampler, 32)
        theta = meta.outer_update_avgform(theta, trace, eps)
    drift = float(np.max(np.abs(theta - engine.final_params)))
    if drift > 1e-10:
        msgs.append(f"trajectory drift over 50 iterations: {drift:.3e}")
    return not msgs, msgs


def taylor_instance(seed: int):
    """A random residual-measurement instance: one nonlinear regression task
    observed through three shifted domains.

    Shifted copies keep per-domain gradients positively correlated, which
    bounds the second-order residual coefficient away from zero; fully
    independent domains occasionally cancel it and mask the order.
    """
    rng = np.random.default_rng(seed)
    net = NetworkSpec((3, 8, 1), "tanh", "squared_error")
    theta = nn.init_params(net, seed) * 2.0
    x = rng.normal(size=(40, 3))
    w = rng.normal(size=3)
    domains = []
    for d in range(3):
        y = np.tanh(x @ w) + 0.3 * d + 0.1 * rng.normal(size=40)
        domains.append(DomainDataset(x, y, d, {"generator": "shifted_tanh"}))
    return net, theta, domains


def check_taylor() -> tuple[bool, list[str]]:
    """Residual of the first-order loss prediction shrinks as alpha^2."""
    msgs = []
    net = NetworkSpec((1, 1), loss_kind="squared_error")
    hand = [
        DomainDataset(np.zeros((1, 1)), np.array([1.0]), 0, {"generator": "hand"}),
        DomainDataset(np.zeros((1, 1)), np.array([-1.0]), 1, {"generator": "hand"}),
    ]
    residual, _ = meta.taylor_residual(net, np.zeros(2), hand, [0, 1], 0.1, 2)
    if abs(residual - 0.005) > 1e-12:
        msgs.append(f"hand residual {residual!r} != 0.005")

    for seed in range(8):
        mlp, theta, domains = taylor_instance(seed)
        r_full, _ = meta.taylor_residual(mlp, theta, domains, [0, 1, 2], 0.1, 3)
        r_half, _ = meta.taylor_residual(mlp, theta, domains, [0, 1, 2], 0.05, 3)
        ratio = abs(r_full) / abs(r_half)
        if not 3.5 <= ratio <= 4.5:
            msgs.append(f"instance {seed}: halving ratio {ratio:.3f} outside [3.5, 4.5]")
    return not msgs, msgs


def check_centroid() -> tuple[bool, list[str]]:
    """Exact-projection fixed points: arithmetic lands on the centroid."""
    msgs = []
    rng = np.random.default_rng(7)
    for n in (2, 3, 5):
        for _ in range(5):
            points = rng.normal(size=(n, 4))
            task = quadratic.QuadraticTask.from_points(points)
            res = quadratic.fixed_point(task, WeightScheme.arithmetic(1.0), 1.0, list(range(n)))
            err = float(np.max(np.abs(res.theta - points.mean(axis=0))))
            if not res.converged or err > 1e-12:
                msgs.append(f"centroid miss n={n}: err {err:.3e} converged={res.converged}")
            fish = quadratic.fixed_point(task, WeightScheme.constant(1.0), 1.0, list(range(n)))
            err_f = float(np.max(np.abs(fish.theta - points[-1])))
            if err_f > 1e-12:
                msgs.append(f"full interpolation n={n}: not at last optimum, err {err_f:.3e}")

    pair = quadratic.QuadraticTask.from_points([[1.0], [-1.0]])
    res_a = quadratic.fixed_point(pair, WeightScheme.arithmetic(1.0), 0.5, [0, 1])
    res_f = quadratic.fixed_point(pair, WeightScheme.constant(1.0), 0.5, [0, 1])
    if abs(res_a.theta[0] - 0.2) > 1e-10:
        msgs.append(f"pair fixed point {res_a.theta[0]!r} != 0.2")
    if abs(res_f.theta[0] + 1.0 / 3.0) > 1e-10:
        msgs.append(f"pair interpolation fixed point {res_f.theta[0]!r} != -1/3")
    return not msgs, msgs


def check_ledger() -> tuple[bool, list[str]]:
    """Per-domain momentum decomposition stays exact and mixes as predicted."""
    msgs = []
    rng = np.random.default_rng(3)
    dim, beta1 = 8, 0.9
    ledger = MomentumLedger.zeros([0, 1, 2], dim)
    state = AdamState.zeros(dim, learning_rate=0.01, beta1=beta1)
    params = np.zeros(dim)
    worst = 0.0
    for _ in range(200):
        g = rng.normal(size=dim)
        dom = int(rng.integers(0, 3))
        ledger = ledger_update(ledger, g, dom, beta1)
        params, state = adam_step(params, g, state)
        worst = max(worst, float(np.max(np.abs(ledger.momentum() - state.m))))
    if worst > 1e-10:
        msgs.append(f"decomposition drift {worst:.3e}")

    ledger = MomentumLedger.zeros([0, 1, 2], 4)
    g = np.full(4, 0.25)
    for t in range(1, 51):
        ledger = ledger_update(ledger, g, (t - 1) % 3, beta1)
    fr = ledger_fractions(ledger)
    denom = 1 + beta1 + beta1**2
    expected = {1: 1 / denom, 0: beta1 / denom, 2: beta1**2 / denom}
    for dom, exp in expected.items():
        if abs(fr[dom] - exp) > 0.02:
            msgs.append(f"steady-state share domain {dom}: {fr[dom]:.4f} vs {exp:.4f}")
    return not msgs, msgs


SUITES = {
    "gradcheck": check_gradients,
    "averaging": check_averaging_identity,
    "taylor": check_taylor,
    "centroid": check_centroid,
    "ledger": check_ledger,
}


def run_suites(names=None) -> dict[str, tuple[bool, list[str]]]:
    if names is None:
        names = list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ValueError(f"unknown verify suite(s): {', '.join(unknown)}")
    return {name: SUITES[name]() for name in names}
