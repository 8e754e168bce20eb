"""Reference methods: centralized subgradient descent and D-SubGD."""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .network import TimeVaryingNetwork, consensus_violation
from .problem import ProblemInstance, eval_p
from .solver import DivergenceError, RunRecord, reference_value


def step_size(t: int, rule: str, c: float) -> float:
    """c / sqrt(t + 1) for ``"diminishing"``, c for ``"constant"``."""
    if rule == "diminishing":
        return c / math.sqrt(t + 1)
    if rule == "constant":
        return c
    raise ValueError(f"unknown step rule {rule!r}")


def default_step_scale(instance: ProblemInstance) -> float:
    return instance.R / instance.M


def centralized_subgradient(instance: ProblemInstance, steps: int, step_rule: str = "diminishing",
                            c: Optional[float] = None, x0=None):
    """Subgradient descent on p with the averaged oracle.

    Returns the best iterate seen and the objective value of every iterate
    (including the starting point).
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    c = default_step_scale(instance) if c is None else c
    n, d = instance.n, instance.d
    x = np.zeros(d) if x0 is None else instance.check_point(x0).copy()
    values = np.empty(steps + 1)
    values[0] = eval_p(instance, x)
    best_x, best_v = x.copy(), values[0]
    for t in range(steps):
        G = instance.subgradients(np.broadcast_to(x, (n, d)))
        g = G.mean(axis=0) + instance.r * x
        x = x - step_size(t, step_rule, c) * g
        v = eval_p(instance, x)
        values[t + 1] = v
        if v < best_v:
            best_x, best_v = x.copy(), v
    return best_x, values


def mix(network: TimeVaryingNetwork, k: int, X) -> np.ndarray:
    """One consensus step X <- (I - W_k) X; preserves the node average."""
    return X - network.apply(k, X)


def d_subgd(instance: ProblemInstance, network: TimeVaryingNetwork, rounds: int,
            step_rule: str = "diminishing", c: Optional[float] = None,
            tau_com: float = 1.0, tau_sub: float = 1.0, record_every: int = 1, x0=None):
    """Decentralized subgradient method.

    Each round mixes with (I - W_k), which preserves the node average, then
    takes a local step x_i <- x_i - eta_t (g_i(x_i) + r x_i). The output is
    the node average of the final iterates. ``x0`` is a starting point
    shared by all nodes or a full node stack (default: zeros).
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if network.n != instance.n:
        raise ValueError(f"network has {network.n} nodes, instance has {instance.n}")
    c = default_step_scale(instance) if c is None else c
    p_star = reference_value(instance)
    X = np.zeros((instance.n, instance.d))
    if x0 is not None:
        X = X + np.asarray(x0, dtype=float)
        instance.check_stack(X)
    record = RunRecord(meta={"method": "dsubgd", "rounds": rounds, "step_rule": step_rule, "c": c})
    for t in range(rounds):
        X = mix(network, t, X)
        X = X - step_size(t, step_rule, c) * (instance.subgradients(X) + instance.r * X)
        if not np.all(np.isfinite(X)):
            raise DivergenceError(t)
        k = t + 1
        if k % record_every and k != rounds:
            continue
        x_o = X.mean(axis=0)
        gap = eval_p(instance, x_o) - p_star if p_star is not None else math.nan
        record.append(k, k, k, tau_com * k + tau_sub * k, gap, consensus_violation(X))
    return X.mean(axis=0), record
