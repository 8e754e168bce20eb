"""Objectives, subgradient oracles and the regularized finite-sum problem.

The global objective is

    p(x) = (1/n) * sum_i f_i(x) + (r/2) * ||x||^2

and the saddle-point functions used by the primal-dual solver are

    F(x) = sum_i f_i(x_i) + (r_x/2) ||x||^2
    G(y, z) = (r_yz/2) ||y + z||^2
    Q(x, y, z) = F(x) - <y, x> - G(y, z)

Stacked quantities ("node stacks") are arrays of shape ``(n, d)`` whose row
``i`` belongs to node ``i``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when a point or node stack has the wrong shape."""


@dataclass(frozen=True)
class SubgradientOracle:
    """A convex function together with a fixed subgradient selection."""

    evaluate: Callable[[np.ndarray], float]
    subgradient: Callable[[np.ndarray], np.ndarray]
    name: str = "f"

    def __call__(self, x):
        return self.evaluate(x)


@dataclass(frozen=True)
class CheckReport:
    """Outcome of a randomized assumption check.

    ``worst_margin`` is the smallest slack observed (negative means a
    violation beyond the tolerance was found); ``offending`` holds the first
    violating sample, if any.
    """

    passed: bool
    worst_margin: float
    margins: np.ndarray
    offending: Optional[tuple] = None
    message: str = ""

    def __bool__(self):
        return self.passed


@dataclass(frozen=True)
class ProblemInstance:
    """n local objectives with oracles plus regularization and constants.

    ``stacked_subgradient`` / ``stacked_values`` are optional vectorized
    evaluators over a node stack. When present they must agree with the
    per-node oracles; they only exist for speed.
    """

    oracles: tuple
    r: float
    M: float
    R: float
    d: int
    known_solution: Optional[np.ndarray] = None
    known_value: Optional[float] = None
    optimal_subgradients: Optional[np.ndarray] = None
    stacked_subgradient: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, repr=False)
    stacked_values: Optional[Callable[[np.ndarray], np.ndarray]] = field(
        default=None, repr=False)
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "oracles", tuple(self.oracles))
        if len(self.oracles) < 1:
            raise ValueError("need at least one node (n >= 1)")
        if self.d < 1:
            raise ValueError(f"dimension must be >= 1, got d={self.d}")
        if not self.M > 0:
            raise ValueError(f"Lipschitz constant must be > 0, got M={self.M}")
        if not self.R > 0:
            raise ValueError(f"solution radius must be > 0, got R={self.R}")
        if not self.r >= 0:
            raise ValueError(f"regularization must be >= 0, got r={self.r}")
        if self.known_solution is not None:
            xs = np.asarray(self.known_solution, dtype=float)
            if xs.shape != (self.d,):
                raise DimensionError(f"known_solution has shape {xs.shape}, expected ({self.d},)")
            # relative slack only absorbs rounding in R = ||x*||
            if np.linalg.norm(xs) > self.R * (1 + 1e-12):
                raise ValueError(f"||x*|| = {np.linalg.norm(xs)} exceeds R = {self.R}")
            object.__setattr__(self, "known_solution", xs)

    @property
    def n(self) -> int:
        return len(self.oracles)

    def with_regularization(self, r: float) -> "ProblemInstance":
        """Same objectives with a different r; drops solution data."""
        return replace(self, r=float(r), known_solution=None, known_value=None,
                       optimal_subgradients=None)

    def check_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.d,):
            raise DimensionError(f"point has shape {x.shape}, expected ({self.d},)")
        return x

    def check_stack(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.shape != (self.n, self.d):
            raise DimensionError(f"node stack has shape {X.shape}, expected ({self.n}, {self.d})")
        return X

    def values(self, X) -> np.ndarray:
        """Per-node values f_i(x_i) for a node stack X."""
        X = self.check_stack(X)
        if self.stacked_values is not None:
            return self.stacked_values(X)
        return np.array([o.evaluate(X[i]) for i, o in enumerate(self.oracles)])

    def subgradients(self, X) -> np.ndarray:
        """Stacked oracle outputs (g_1(x_1), ..., g_n(x_n))."""
        X = self.check_stack(X)
        if self.stacked_subgradient is not None:
            return self.stacked_subgradient(X)
        G = np.empty_like(X)
        for i, o in enumerate(self.oracles):
            G[i] = o.subgradient(X[i])
        return G


def eval_p(instance: ProblemInstance, x) -> float:
    """Global objective (1/n) sum_i f_i(x) + (r/2)||x||^2."""
    x = instance.check_point(x)
    X = np.broadcast_to(x, (instance.n, instance.d))
    vals = instance.values(X)
    total = 0.0
    for v in vals:  # ascending node order
        total += float(v)
    return total / instance.n + 0.5 * instance.r * float(x @ x)


def eval_fbar(instance: ProblemInstance, x) -> float:
    """Unregularized average (1/n) sum_i f_i(x)."""
    return eval_p(instance.with_regularization(0.0), x)


def eval_F(instance: ProblemInstance, X, r_x: float) -> float:
    """F(x) = sum_i f_i(x_i) + (r_x/2)||x||^2 over a node stack."""
    X = instance.check_stack(X)
    total = 0.0
    for v in instance.values(X):
        total += float(v)
    return total + 0.5 * r_x * float(np.sum(X * X))


def eval_G(Y, Z, r_yz: float) -> float:
    S = np.asarray(Y, dtype=float) + np.asarray(Z, dtype=float)
    return 0.5 * r_yz * float(np.sum(S * S))


def eval_Q(instance: ProblemInstance, X, Y, Z, r_x: float, r_yz: float) -> float:
    """Saddle function Q(x, y, z) = F(x) - <y, x> - G(y, z)."""
    X = instance.check_stack(X)
    Y = instance.check_stack(Y)
    Z = instance.check_stack(Z)
    return eval_F(instance, X, r_x) - float(np.sum(Y * X)) - eval_G(Y, Z, r_yz)


def check_oracle_validity(oracle: SubgradientOracle, pairs: Sequence, tol: float = 1e-9) -> CheckReport:
    """Check f(x') >= f(x) + <g(x), x' - x> - tol on every pair (x, x')."""
    margins = []
    offending = None
    for x, xp in pairs:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        xp = np.atleast_1d(np.asarray(xp, dtype=float))
        g = np.atleast_1d(oracle.subgradient(x))
        m = oracle.evaluate(xp) - oracle.evaluate(x) - float(g @ (xp - x))
        margins.append(m)
        if m < -tol and offending is None:
            offending = (x, xp)
    margins = np.array(margins)
    worst = float(margins.min()) if margins.size else np.inf
    passed = offending is None
    msg = "" if passed else (
        f"{oracle.name}: subgradient inequality violated at x={offending[0]}, "
        f"x'={offending[1]} (margin {worst:.3e})")
    return CheckReport(passed, worst, margins, offending, msg)


def check_lipschitz(oracle: SubgradientOracle, M: float, pairs: Sequence, tol: float = 1e-9) -> CheckReport:
    """Check |f(x) - f(x')| <= M||x - x'|| and ||g(x)|| <= M on sample pairs."""
    margins = []
    offending = None
    for x, xp in pairs:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        xp = np.atleast_1d(np.asarray(xp, dtype=float))
        m_val = M * np.linalg.norm(x - xp) - abs(oracle.evaluate(x) - oracle.evaluate(xp))
        m_grad = M - max(np.linalg.norm(oracle.subgradient(x)),
                         np.linalg.norm(oracle.subgradient(xp)))
        m = min(m_val, m_grad)
        margins.append(m)
        if m < -tol and offending is None:
            offending = (x, xp)
    margins = np.array(margins)
    worst = float(margins.min()) if margins.size else np.inf
    passed = offending is None
    msg = "" if passed else (
        f"{oracle.name}: not {M}-Lipschitz at x={offending[0]}, x'={offending[1]}")
    return CheckReport(passed, worst, margins, offending, msg)


def random_pairs(rng: np.random.Generator, d: int, count: int, low=-1.0, high=1.0):
    """Uniform sample pairs in a box, for the randomized checks."""
    return [(rng.uniform(low, high, d), rng.uniform(low, high, d)) for _ in range(count)]


# -- simple objectives used by tests, the convex reduction and custom runs --

def l1_distance_oracle(center) -> SubgradientOracle:
    """f(x) = ||x - c||_1 with subgradient sign(x - c) (0 at ties)."""
    c = np.atleast_1d(np.asarray(center, dtype=float))

    def evaluate(x):
        return float(np.sum(np.abs(np.atleast_1d(x) - c)))

    def subgradient(x):
        return np.sign(np.atleast_1d(x) - c)

    return SubgradientOracle(evaluate, subgradient, name=f"l1[{c.tolist()}]")


def l1_distance_instance(centers, r: float = 0.0, R: Optional[float] = None) -> ProblemInstance:
    """Instance with f_i(x) = ||x - c_i||_1; ``centers`` has shape (n, d).

    M = sqrt(d). When R is omitted it defaults to the largest center norm,
    which bounds the norm of a minimizer (the coordinate-wise median lies in
    the box spanned by the centers).
    """
    C = np.atleast_2d(np.asarray(centers, dtype=float))
    if C.ndim != 2:
        raise DimensionError("centers must be an (n, d) array")
    n, d = C.shape
    if R is None:
        R = max(float(np.max(np.linalg.norm(C, axis=1))), 1.0) * np.sqrt(d)

    def stacked_subgradient(X):
        return np.sign(X - C)

    def stacked_values(X):
        return np.sum(np.abs(X - C), axis=1)

    known = None
    known_value = None
    if np.all(C == 0):
        known = np.zeros(d)
        known_value = 0.0
    return ProblemInstance(
        oracles=[l1_distance_oracle(c) for c in C],
        r=float(r), M=float(np.sqrt(d)), R=float(R), d=d,
        known_solution=known, known_value=known_value,
        optimal_subgradients=np.zeros((n, d)) if known is not None else None,
        stacked_subgradient=stacked_subgradient, stacked_values=stacked_values,
        name="l1",
    )
