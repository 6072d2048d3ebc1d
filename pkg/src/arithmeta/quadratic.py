"""Closed-form testbed: affine optimal sets, exact projections, fixed points.

Each domain's "optimal parameters" form an affine manifold.  With the
half-squared-distance loss, one SGD step at rate lr lands exactly at
(1-lr)*theta + lr*projection, so the interpolation coefficient is the
learning rate itself and every quantity of interest has a closed form.
This makes the positioning behavior of different outer-update weightings
checkable to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import meta
from .meta import WeightScheme


@dataclass(frozen=True)
class AffineManifold:
    """Either a single point phi, or the solution set {x : A x = b}."""

    point: np.ndarray | None = None
    A: np.ndarray | None = None
    b: np.ndarray | None = None

    @classmethod
    def from_point(cls, phi) -> "AffineManifold":
        return cls(point=np.atleast_1d(np.asarray(phi, dtype=np.float64)))

    @classmethod
    def from_equations(cls, A, b) -> "AffineManifold":
        A = np.atleast_2d(np.asarray(A, dtype=np.float64))
        b = np.atleast_1d(np.asarray(b, dtype=np.float64))
        if A.shape[0] != b.size:
            raise ValueError("A and b row counts differ")
        if np.linalg.matrix_rank(A) < A.shape[0]:
            raise ValueError("constraint matrix must have full row rank")
        return cls(A=A, b=b)

    @property
    def dim(self) -> int:
        return self.point.size if self.point is not None else self.A.shape[1]


def project(x: np.ndarray, m: AffineManifold) -> np.ndarray:
    """Euclidean projection of x onto the manifold."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (m.dim,):
        raise ValueError(f"point has dimension {x.shape}, manifold expects ({m.dim},)")
    if m.point is not None:
        return m.point.copy()
    residual = m.A @ x - m.b
    correction = m.A.T @ np.linalg.solve(m.A @ m.A.T, residual)
    return x - correction


def dist_loss_grad(x: np.ndarray, m: AffineManifold) -> tuple[float, np.ndarray]:
    """Half squared distance to the manifold and its gradient x - P(x)."""
    p = project(x, m)
    grad = np.asarray(x, dtype=np.float64) - p
    return 0.5 * float(grad @ grad), grad


def inner_step_exact(theta: np.ndarray, m: AffineManifold, lr: float) -> tuple[np.ndarray, float]:
    """One descent step on the half-squared-distance loss: an exact interpolation.

    Returns the new point and the realized interpolation coefficient, which
    for this loss equals the learning rate.
    """
    if not 0.0 < lr <= 1.0:
        raise ValueError("lr must lie in (0, 1]")
    theta = np.asarray(theta, dtype=np.float64)
    return (1.0 - lr) * theta + lr * project(theta, m), lr


def interpolation_expansion(theta1: np.ndarray, etas, projections) -> np.ndarray:
    """Closed-form unrolling of theta_{i+1} = (1-eta_i) theta_i + eta_i phi_i.

    Result: prod(1-eta_j) * theta_1 + sum_j prod_{k>j}(1-eta_k) * eta_j * phi_j.
    Coefficients of later projections shrink less, so recent domains dominate.
    """
    etas = np.asarray(etas, dtype=np.float64)
    projections = [np.asarray(p, dtype=np.float64) for p in projections]
    if etas.size != len(projections):
        raise ValueError("need one projection per eta")
    theta1 = np.asarray(theta1, dtype=np.float64)
    out = np.prod(1.0 - etas) * theta1
    for j in range(etas.size):
        out = out + np.prod(1.0 - etas[j + 1 :]) * etas[j] * projections[j]
    return out


@dataclass(frozen=True)
class QuadraticTask:
    manifolds: tuple[AffineManifold, ...]
    dimension: int

    @classmethod
    def from_points(cls, points) -> "QuadraticTask":
        manifolds = tuple(AffineManifold.from_point(p) for p in points)
        dims = {m.dim for m in manifolds}
        if len(dims) != 1:
            raise ValueError("all manifolds must share one ambient dimension")
        return cls(manifolds, dims.pop())

    @property
    def n(self) -> int:
        return len(self.manifolds)


@dataclass
class FixedPointResult:
    theta: np.ndarray
    converged: bool
    iterations: int
    displacement: float


def fixed_point(
    task: QuadraticTask,
    scheme: WeightScheme,
    lr: float,
    order,
    iters: int = 10_000,
    tol: float = 1e-14,
    theta0: np.ndarray | None = None,
) -> FixedPointResult:
    """Iterate {inner pass in fixed order, weighted outer update} to convergence.

    The inner pass takes one exact interpolation step per manifold; the outer
    update subtracts the weighted displacement sum.  Convergence is declared
    when the outer displacement norm drops below tol; the default is tight
    enough that the remaining geometric tail sits well below 1e-12.
    """
    order = list(order)
    if sorted(order) != list(range(task.n)):
        raise ValueError("order must be a permutation of the manifold indices")
    theta = (
        np.zeros(task.dimension)
        if theta0 is None
        else np.asarray(theta0, dtype=np.float64).copy()
    )
    displacement = np.inf
    for it in range(1, iters + 1):
        thetas = [theta]
        for idx in order:
            nxt, _ = inner_step_exact(thetas[-1], task.manifolds[idx], lr)
            thetas.append(nxt)
        grads = [thetas[i] - thetas[i + 1] for i in range(task.n)]
        w = meta.weights(scheme, task.n)
        new_theta = theta - sum(wi * gi for wi, gi in zip(w, grads))
        displacement = float(np.linalg.norm(new_theta - theta))
        theta = new_theta
        if displacement < tol:
            return FixedPointResult(theta, True, it, displacement)
    return FixedPointResult(theta, False, iters, displacement)


def centroid_distance(theta: np.ndarray, task: QuadraticTask) -> tuple[float, np.ndarray]:
    """Distance from theta to the mean of its per-domain projections,
    plus the individual distance to each manifold."""
    theta = np.asarray(theta, dtype=np.float64)
    projections = [project(theta, m) for m in task.manifolds]
    centroid = np.mean(projections, axis=0)
    per_domain = np.array([float(np.linalg.norm(theta - p)) for p in projections])
    return float(np.linalg.norm(theta - centroid)), per_domain
