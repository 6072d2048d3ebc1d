"""Optimizers: momentum-free SGD, Adam, and a per-domain momentum ledger.

The ledger splits Adam's first moment into one contribution vector per
domain so the blending caused by momentum can be measured: when domains
take turns supplying gradients, each contribution decays geometrically and
the per-domain shares converge to fixed proportions instead of staying
domain-specific.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class SgdConfig:
    learning_rate: float

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")


def sgd_step(params: np.ndarray, grad: np.ndarray, cfg: SgdConfig) -> np.ndarray:
    """Stateless descent step: params - lr * grad."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape:
        raise ValueError(f"shape mismatch: params {params.shape} vs grad {grad.shape}")
    return params - cfg.learning_rate * grad


@dataclass(frozen=True)
class AdamState:
    """Immutable Adam state; adam_step returns an advanced copy."""

    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    learning_rate: float = 1e-3

    def __post_init__(self):
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")
        if self.eps <= 0 or self.learning_rate <= 0:
            raise ValueError("eps and learning_rate must be positive")

    @classmethod
    def zeros(cls, dim: int, learning_rate: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> "AdamState":
        return cls(np.zeros(dim), np.zeros(dim), 0, beta1, beta2, eps, learning_rate)


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """Standard Adam update with bias-corrected moments."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape or params.shape != state.m.shape:
        raise ValueError("params, grad, and Adam state must share one layout")
    t = state.step_count + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return new_params, replace(state, m=m, v=v, step_count=t)


@dataclass(frozen=True)
class MomentumLedger:
    """Exact decomposition of a first-moment vector by contributing domain.

    Invariant: the sum of all contribution vectors equals the momentum that
    the same gradient stream would produce through m = b1*m + (1-b1)*g.
    """

    contributions: dict[int, np.ndarray]

    @classmethod
    def zeros(cls, domain_ids, dim: int) -> "MomentumLedger":
        ids = list(domain_ids)
        if not ids:
            raise ValueError("ledger needs at least one domain id")
        return cls({int(d): np.zeros(dim) for d in ids})

    def momentum(self) -> np.ndarray:
        return np.sum(list(self.contributions.values()), axis=0)


def ledger_update(
    ledger: MomentumLedger, grad: np.ndarray, domain_id: int, beta1: float
) -> MomentumLedger:
    """Decay every contribution by beta1, then credit (1-beta1)*grad to one domain."""
    if domain_id not in ledger.contributions:
        raise ValueError(f"domain_id {domain_id} not registered in ledger")
    if not 0.0 <= beta1 < 1.0:
        raise ValueError("beta1 must lie in [0, 1)")
    grad = np.asarray(grad, dtype=np.float64)
    new = {d: beta1 * c for d, c in ledger.contributions.items()}
    if grad.shape != new[domain_id].shape:
        raise ValueError("gradient layout does not match ledger")
    new[domain_id] = new[domain_id] + (1.0 - beta1) * grad
    return MomentumLedger(new)


def ledger_fractions(ledger: MomentumLedger) -> dict[int, float]:
    """Per-domain share of the momentum mass, by L1 norm; sums to 1."""
    norms = {d: float(np.abs(c).sum()) for d, c in ledger.contributions.items()}
    total = sum(norms.values())
    if total == 0.0:
        raise ValueError("ledger has no accumulated contributions")
    return {d: n / total for d, n in norms.items()}
