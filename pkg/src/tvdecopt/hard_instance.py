"""Lower-bound ("hard") problem instances on the rotating star.

Nodes are split into three equal classes V1, V2, V3. With the chain
functions h_j(x) = |x_{j+1} - x_j| (1-based j), nodes in V1 hold the odd
links plus a linear pull on the first coordinate, nodes in V2 hold the even
links, and nodes in V3 hold nothing. Information about coordinate j+1 can
only be produced by the class owning link j, so progress along the chain
requires shuttling between V1 and V2 through the rotating center.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .network import TimeVaryingNetwork, rotating_star
from .problem import ProblemInstance, SubgradientOracle


class NodeClass(enum.Enum):
    V1 = 1
    V2 = 2
    V3 = 3


def node_class(i: int, n: int) -> NodeClass:
    """Class of the 0-based node ``i``."""
    third = n // 3
    if i < third:
        return NodeClass.V1
    if i < 2 * third:
        return NodeClass.V2
    return NodeClass.V3


def chain_value(j: int, x) -> float:
    """h_j(x) = |x_{j+1} - x_j| for the 1-based link index j."""
    return abs(x[j] - x[j - 1])


def subgrad_h(j: int, x) -> np.ndarray:
    """Canonical subgradient of h_j with the exact-tie branch returning 0."""
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    if not 1 <= j <= d - 1:
        raise ValueError(f"link index must lie in [1, {d - 1}], got {j}")
    g = np.zeros(d)
    if x[j] > x[j - 1]:
        g[j], g[j - 1] = 1.0, -1.0
    elif x[j] < x[j - 1]:
        g[j], g[j - 1] = -1.0, 1.0
    return g


def huber(delta: float, x) -> float:
    """Coordinate-wise Huber sum with width delta."""
    if not delta > 0:
        raise ValueError("delta must be > 0")
    t = np.abs(np.atleast_1d(np.asarray(x, dtype=float)))
    return float(np.sum(np.where(t <= delta, 0.5 * t * t, delta * t - 0.5 * delta * delta)))


def huber_grad(delta: float, x) -> np.ndarray:
    if not delta > 0:
        raise ValueError("delta must be > 0")
    return np.clip(np.atleast_1d(np.asarray(x, dtype=float)), -delta, delta)


def _links(cls: NodeClass, d: int):
    # 1-based link indices owned by a class
    if cls is NodeClass.V1:
        return range(1, d, 2)
    if cls is NodeClass.V2:
        return range(2, d, 2)
    return range(0)


def _chain_oracle(cls: NodeClass, a: float, d: int, huber_weight: float = 0.0,
                  delta: float = 1.0) -> SubgradientOracle:
    links = list(_links(cls, d))
    pull = cls is NodeClass.V1

    def evaluate(x):
        x = np.asarray(x, dtype=float)
        v = 0.0
        for j in links:
            v += chain_value(j, x)
        v *= a
        if pull:
            v -= a * x[0]
        if huber_weight:
            v += huber_weight * huber(delta, x)
        return v

    def subgradient(x):
        x = np.asarray(x, dtype=float)
        g = np.zeros(d)
        for j in links:
            g += subgrad_h(j, x)
        g = a * g
        if pull:
            g[0] -= a
        if huber_weight:
            g = g + huber_weight * huber_grad(delta, x)
        return g

    return SubgradientOracle(evaluate, subgradient, name=f"hard[{cls.name}]")


def _class_masks(n: int, d: int):
    # per-node masks over link positions 0..d-2 (link j sits at position j-1)
    classes = [node_class(i, n) for i in range(n)]
    odd = np.zeros(d - 1, dtype=bool)
    odd[0::2] = True
    mask = np.zeros((n, d - 1))
    pull = np.zeros(n)
    for i, c in enumerate(classes):
        if c is NodeClass.V1:
            mask[i] = odd
            pull[i] = 1.0
        elif c is NodeClass.V2:
            mask[i] = ~odd
    return mask, pull


def _stacked(n: int, d: int, a: float, huber_weight: float = 0.0, delta: float = 1.0):
    mask, pull = _class_masks(n, d)

    def subgradient(X):
        s = np.sign(X[:, 1:] - X[:, :-1]) * mask
        G = np.zeros_like(X)
        G[:, 1:] += s
        G[:, :-1] -= s
        G = a * G
        G[:, 0] -= a * pull
        if huber_weight:
            G = G + huber_weight * np.clip(X, -delta, delta)
        return G

    def values(X):
        v = a * np.sum(np.abs(X[:, 1:] - X[:, :-1]) * mask, axis=1) - a * pull * X[:, 0]
        if huber_weight:
            t = np.abs(X)
            v = v + huber_weight * np.sum(
                np.where(t <= delta, 0.5 * t * t, delta * t - 0.5 * delta * delta), axis=1)
        return v

    return subgradient, values


def _optimal_subgradients(n: int, d: int, a: float) -> np.ndarray:
    """Per-node subgradients at the tie point x* summing to -n r x*.

    Link j gets multiplier s_j = -1 + j/d, which solves the first-order
    conditions of the averaged chain.
    """
    s = -1.0 + np.arange(1, d) / d
    mask, pull = _class_masks(n, d)
    D = np.zeros((n, d))
    D[:, 1:] += s * mask
    D[:, :-1] -= s * mask
    D = a * D
    D[:, 0] -= a * pull
    return D


@dataclass(frozen=True)
class HardInstanceSC:
    """Parameters of the strongly convex hard instance."""

    n: int
    d: int
    a: float
    r: float

    def __post_init__(self):
        if self.n < 3 or self.n % 3:
            raise ValueError(f"n must be a positive multiple of 3, got {self.n}")
        if self.d < 3 or self.d % 2 == 0:
            raise ValueError(f"d must be odd and >= 3, got {self.d}")
        if not (self.a > 0 and self.r > 0):
            raise ValueError("a and r must be positive")

    @property
    def solution(self) -> np.ndarray:
        return np.full(self.d, self.a / (3 * self.r * self.d))

    @property
    def optimal_value(self) -> float:
        return -self.a ** 2 / (18 * self.r * self.d)

    @property
    def gap_floor(self) -> float:
        return self.a ** 2 / (18 * self.r * self.d)

    def problem(self, M: float) -> ProblemInstance:
        n, d, a = self.n, self.d, self.a
        sub, vals = _stacked(n, d, a)
        xs = self.solution
        return ProblemInstance(
            oracles=[_chain_oracle(node_class(i, n), a, d) for i in range(n)],
            r=self.r, M=M, R=float(np.linalg.norm(xs)), d=d,
            known_solution=xs, known_value=self.optimal_value,
            optimal_subgradients=_optimal_subgradients(n, d, a),
            stacked_subgradient=sub, stacked_values=vals, name="hard_sc",
        )


@dataclass(frozen=True)
class HardInstanceCVX:
    """Parameters of the convex (r = 0) hard instance with a Huber term."""

    n: int
    d: int
    a: float
    c: float

    def __post_init__(self):
        if self.n < 3 or self.n % 3:
            raise ValueError(f"n must be a positive multiple of 3, got {self.n}")
        if self.d < 3 or self.d % 2 == 0:
            raise ValueError(f"d must be odd and >= 3, got {self.d}")
        if not (self.a > 0 and self.c > 0):
            raise ValueError("a and c must be positive")

    @property
    def delta(self) -> float:
        return self.a / (3 * self.c * self.d)

    @property
    def solution(self) -> np.ndarray:
        return np.full(self.d, self.delta)

    @property
    def optimal_value(self) -> float:
        return -self.a ** 2 / (18 * self.c * self.d)

    @property
    def gap_floor(self) -> float:
        return self.a ** 2 / (18 * self.c * self.d)

    @property
    def lipschitz(self) -> float:
        return 2 * self.a * math.sqrt(self.d) + self.c * self.delta * math.sqrt(self.d)

    def problem(self, M: float, R: float) -> ProblemInstance:
        n, d, a, c, delta = self.n, self.d, self.a, self.c, self.delta
        sub, vals = _stacked(n, d, a, huber_weight=c, delta=delta)
        xs = self.solution
        # at x* every Huber coordinate sits on the quadratic branch: grad = c x*
        D = _optimal_subgradients(n, d, a) + c * xs
        return ProblemInstance(
            oracles=[_chain_oracle(node_class(i, n), a, d, huber_weight=c, delta=delta)
                     for i in range(n)],
            r=0.0, M=M, R=R, d=d,
            known_solution=xs, known_value=self.optimal_value,
            optimal_subgradients=D,
            stacked_subgradient=sub, stacked_values=vals, name="hard_cvx",
        )


def sc_dimension(M: float, r: float, epsilon: float) -> int:
    return 2 * math.floor(M / (12 * math.sqrt(r * epsilon))) - 1


def cvx_dimension(M: float, R: float, epsilon: float) -> int:
    return 2 * math.floor(M * R / (36 * epsilon)) - 1


def build_sc(M: float, r: float, epsilon: float, chi: float):
    """Strongly convex hard instance and its rotating-star network.

    n = 3 floor(chi/3), d = 2 floor(M / (12 sqrt(r eps))) - 1, a = M/(2 sqrt d).
    """
    if not (M > 0 and r > 0 and epsilon > 0):
        raise ValueError("M, r and epsilon must be positive")
    if chi < 3:
        raise ValueError(f"requires chi >= 3, got chi={chi}")
    if epsilon > M * M / (576 * r):
        raise ValueError(f"requires epsilon <= M^2/(576 r) = {M * M / (576 * r):.6g}, got {epsilon}")
    n = 3 * math.floor(chi / 3)
    d = sc_dimension(M, r, epsilon)
    if d < 3:
        raise ValueError(f"dimension rule gives d={d} < 3; decrease epsilon")
    a = M / (2 * math.sqrt(d))
    params = HardInstanceSC(n=n, d=d, a=a, r=r)
    return params.problem(M), rotating_star(n)


def build_cvx(M: float, R: float, epsilon: float, chi: float):
    """Convex hard instance (Huber-smoothed chain) and its rotating star.

    a = M/(3 sqrt d), c = M/(9 R d), delta = a/(3 c d), d = 2 floor(MR/(36 eps)) - 1.
    """
    if not (M > 0 and R > 0 and epsilon > 0):
        raise ValueError("M, R and epsilon must be positive")
    if chi < 3:
        raise ValueError(f"requires chi >= 3, got chi={chi}")
    if epsilon > M * R / 72:
        raise ValueError(f"requires epsilon <= M R / 72 = {M * R / 72:.6g}, got {epsilon}")
    n = 3 * math.floor(chi / 3)
    d = cvx_dimension(M, R, epsilon)
    if d < 3:
        raise ValueError(f"dimension rule gives d={d} < 3; decrease epsilon")
    a = M / (3 * math.sqrt(d))
    c = M / (9 * R * d)
    params = HardInstanceCVX(n=n, d=d, a=a, c=c)
    return params.problem(M, R), rotating_star(n)


def sc_params(instance: ProblemInstance) -> HardInstanceSC:
    """Recover the hard-instance parameters from a built problem."""
    d = instance.d
    return HardInstanceSC(n=instance.n, d=d, a=instance.M / (2 * math.sqrt(d)), r=instance.r)
