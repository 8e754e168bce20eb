"""Time-varying gossip networks.

A network maps a communication round index ``k`` to an edge set and a
gossip matrix ``W_k`` with ``W_k 1 = W_k^T 1 = 0``. Gossip is applied to a
node stack ``X`` of shape ``(n, d)`` as ``W_k @ X``, which is the action of
``W_k (x) I_d`` on the stacked vector without forming the Kronecker product.

Node labels: matrices and edge sets use 0-based indices. The two
rotating-star helpers :func:`star_laplacian` and :func:`rotating_center`
take and return 1-based node labels, matching the usual numbering of the
lower-bound construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, FrozenSet, Tuple

import numpy as np

Edge = Tuple[int, int]


class CertificationError(RuntimeError):
    """A gossip matrix violates the declared network assumptions."""

    def __init__(self, message, round_index=None):
        super().__init__(message)
        self.round_index = round_index


def laplacian_gossip(n: int, edges) -> np.ndarray:
    """Graph Laplacian of an undirected edge set, scaled by 1/n.

    Off-pattern entries are exactly 0.0.
    """
    W = np.zeros((n, n))
    for i, j in edges:
        if i == j:
            continue
        W[i, j] = -1.0
    np.fill_diagonal(W, -W.sum(axis=1))
    return W / n


def star_edges(n: int, center: int) -> FrozenSet[Edge]:
    """Symmetric star edge set around a 0-based center."""
    return frozenset(e for i in range(n) if i != center for e in ((i, center), (center, i)))


def star_laplacian(n: int, center: int) -> np.ndarray:
    """Star Laplacian scaled by 1/n around the 1-based node ``center``."""
    if n < 2:
        raise ValueError(f"a star needs n >= 2 nodes, got n={n}")
    if not 1 <= center <= n:
        raise ValueError(f"center must lie in [1, {n}], got {center}")
    return laplacian_gossip(n, star_edges(n, center - 1))


def rotating_center(n: int, k: int) -> int:
    """1-based center of the rotating star at communication round ``k``.

    The center cycles through the last third of the nodes:
    ``2n/3 + 1 + (k mod n/3)``.
    """
    if n < 3 or n % 3 != 0:
        raise ValueError(f"rotating star needs n divisible by 3 and n >= 3, got n={n}")
    return 2 * n // 3 + 1 + (k % (n // 3))


def project_consensus_complement(X) -> np.ndarray:
    """Orthogonal projection onto {sum_i x_i = 0}: subtract the node mean."""
    X = np.asarray(X, dtype=float)
    return X - X.mean(axis=0, keepdims=True)


def consensus_violation(X) -> float:
    """Norm of the component of X orthogonal to the consensus space."""
    return float(np.linalg.norm(project_consensus_complement(X)))


def _mean_zero_basis(n: int) -> np.ndarray:
    # orthonormal basis of the complement of span(1), shape (n, n-1)
    Q, _ = np.linalg.qr(np.column_stack([np.ones(n), np.eye(n)[:, : n - 1]]))
    return Q[:, 1:]


def contraction_factor(W: np.ndarray) -> float:
    """Smallest rho with ||W x - x||^2 <= rho ||x||^2 on mean-zero x."""
    n = W.shape[0]
    if n == 1:
        return 0.0
    U = _mean_zero_basis(n)
    s = np.linalg.svd((W - np.eye(n)) @ U, compute_uv=False)
    return float(s[0] ** 2)


def spectral_chi(W: np.ndarray, sym_tol: float = 1e-12) -> float:
    """Condition number certified by one gossip matrix.

    For a symmetric W whose spectrum on the mean-zero subspace lies in
    (0, 1], returns 1 / lambda_min^+(W); every eigenvalue l then satisfies
    (1 - l)^2 <= 1 - l <= 1 - lambda_min^+, so the contraction inequality
    holds with this value. Otherwise falls back to the tight value
    1 / (1 - rho) from :func:`contraction_factor`.
    """
    n = W.shape[0]
    if n == 1:
        return 1.0
    U = _mean_zero_basis(n)
    if np.max(np.abs(W - W.T)) <= sym_tol:
        lam = np.linalg.eigvalsh(U.T @ W @ U)
        if lam[0] > 0 and lam[-1] <= 1 + 1e-12:
            return float(1.0 / lam[0])
    rho = contraction_factor(W)
    if rho >= 1:
        return np.inf
    return float(1.0 / (1.0 - rho))


@dataclass(frozen=True)
class TimeVaryingNetwork:
    """Round-indexed edge sets and gossip matrices with a declared chi."""

    n: int
    edges_fn: Callable[[int], FrozenSet[Edge]] = field(repr=False)
    chi: float
    name: str = "network"
    period: int = 0  # > 0 when the sequence repeats, enables caching

    def topology(self, k: int) -> FrozenSet[Edge]:
        return self.edges_fn(self._key(k))

    def gossip(self, k: int) -> np.ndarray:
        return _cached_gossip(self, self._key(k))

    def _key(self, k: int) -> int:
        return k % self.period if self.period else k

    def apply(self, k: int, X) -> np.ndarray:
        return self.gossip(k) @ X


@lru_cache(maxsize=4096)
def _cached_gossip(network: TimeVaryingNetwork, k: int) -> np.ndarray:
    W = laplacian_gossip(network.n, network.edges_fn(k))
    W.setflags(write=False)
    return W


def rotating_star(n: int) -> TimeVaryingNetwork:
    """Star with a center rotating through the last third of the nodes; chi = n."""
    rotating_center(n, 0)  # validates n

    def edges(k):
        return star_edges(n, rotating_center(n, k) - 1)

    return TimeVaryingNetwork(n, edges, chi=float(n), name="rotating_star", period=n // 3)


def fixed_star(n: int, center: int = 1) -> TimeVaryingNetwork:
    """Static star around the 1-based ``center``; chi = n."""
    star_laplacian(n, center)
    e = star_edges(n, center - 1)
    return TimeVaryingNetwork(n, lambda k: e, chi=float(n), name="star", period=1)


def complete_graph(n: int) -> TimeVaryingNetwork:
    """Complete graph, W = I - 11^T/n; chi = 1."""
    e = frozenset((i, j) for i in range(n) for j in range(n) if i != j)
    return TimeVaryingNetwork(n, lambda k: e, chi=1.0, name="complete", period=1)


def ring(n: int) -> TimeVaryingNetwork:
    """Fixed cycle graph; chi = n / (2 - 2 cos(2 pi / n))."""
    if n < 3:
        raise ValueError(f"ring needs n >= 3, got n={n}")
    e = frozenset(x for i in range(n) for x in ((i, (i + 1) % n), ((i + 1) % n, i)))
    chi = n / (2.0 - 2.0 * np.cos(2 * np.pi / n))
    return TimeVaryingNetwork(n, lambda k: e, chi=float(chi), name="ring", period=1)


def _connected(n: int, edges) -> bool:
    adj = [[] for _ in range(n)]
    for i, j in edges:
        adj[i].append(j)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == n


def random_connected(n: int, p: float = 0.3, seed: int = 0) -> TimeVaryingNetwork:
    """Fresh connected Erdos-Renyi graph every round, reproducible from seed.

    The declared chi is the path-graph bound n / (2 - 2 cos(pi / n)), which
    dominates 1/lambda_min^+ of every connected graph on n nodes.
    """
    if n < 2:
        raise ValueError(f"random graph needs n >= 2, got n={n}")

    @lru_cache(maxsize=4096)
    def edges(k):
        rng = np.random.default_rng([seed, k])
        while True:
            upper = np.triu(rng.random((n, n)) < p, 1)
            pairs = [(int(i), int(j)) for i, j in zip(*np.nonzero(upper))]
            e = frozenset(x for i, j in pairs for x in ((i, j), (j, i)))
            if _connected(n, e):
                return e

    chi = n / (2.0 - 2.0 * np.cos(np.pi / n))
    return TimeVaryingNetwork(n, edges, chi=float(chi), name="random", period=0)


@dataclass(frozen=True)
class ChiReport:
    chi: float
    declared: float
    per_round: np.ndarray
    tight: np.ndarray
    worst_round: int
    passed: bool


def certify_chi(network: TimeVaryingNetwork, rounds: int, trials: int = 100,
                tol: float = 1e-8, seed: int = 0, raise_on_failure: bool = True) -> ChiReport:
    """Certify the declared condition number over the first ``rounds`` rounds.

    Per round, computes :func:`spectral_chi`, the tight contraction value
    1/(1 - rho), checks the gossip kernel conditions, and runs ``trials``
    random mean-zero probes of the contraction inequality with the declared
    chi. Raises :class:`CertificationError` naming the offending round.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    n = network.n
    ones = np.ones(n)
    per_round = np.empty(rounds)
    tight = np.empty(rounds)
    failure = None
    for k in range(rounds):
        W = network.gossip(k)
        per_round[k] = spectral_chi(W)
        rho = contraction_factor(W)
        tight[k] = np.inf if rho >= 1 else 1.0 / (1.0 - rho)
        if failure is None:
            if np.linalg.norm(W @ ones) > 1e-12 or np.linalg.norm(W.T @ ones) > 1e-12:
                failure = (k, f"round {k}: W 1 != 0 or W^T 1 != 0")
            elif per_round[k] > network.chi + tol:
                failure = (k, f"round {k}: certified chi {per_round[k]:.12g} exceeds declared {network.chi:.12g}")
            else:
                X = project_consensus_complement(rng.standard_normal((trials, n)).T).T
                lhs = np.sum((X @ W.T - X) ** 2, axis=1)
                rhs = (1 - 1 / network.chi) * np.sum(X * X, axis=1) + 1e-10
                if np.any(lhs > rhs):
                    failure = (k, f"round {k}: contraction inequality violated")
    worst = int(np.argmax(per_round)) if rounds else -1
    chi = float(per_round.max()) if rounds else 1.0
    report = ChiReport(chi, network.chi, per_round, tight, worst, failure is None)
    if failure is not None and raise_on_failure:
        raise CertificationError(failure[1], round_index=failure[0])
    return report


def make_network(topology: str, n: int, seed: int = 0, p: float = 0.3) -> TimeVaryingNetwork:
    """Build a network from its config name."""
    builders = {
        "rotating_star": lambda: rotating_star(n),
        "star": lambda: fixed_star(n),
        "ring": lambda: ring(n),
        "complete": lambda: complete_graph(n),
        "random": lambda: random_connected(n, p=p, seed=seed),
    }
    if topology not in builders:
        raise ValueError(f"unknown topology {topology!r}; choose from {sorted(builders)}")
    return builders[topology]()
