"""Black-box span automaton for the hard instance on the rotating star.

Every node memory reachable on the hard instance is contained in a
coordinate prefix space K_j = span(e_1, ..., e_j), so a node is summarized
by the single integer j. Local subgradient steps can extend a prefix by at
most one coordinate, and only when the node owns the next chain link;
communication copies prefixes along the current star.

The simulation is greedy: between two communication rounds every node runs
as many subgradient steps as help. This is the most favorable behaviour the
oracle model permits, so the first round at which some node reaches j = d
is a valid witness for the communication lower bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np

from .hard_instance import NodeClass, node_class
from .network import rotating_center


def subgradient_transition(cls: NodeClass, j: int, d: Optional[int] = None) -> int:
    """Prefix index after one subgradient step from K_j, at a generic point."""
    if j < 0 or (d is not None and j > d):
        raise ValueError(f"span index out of range: j={j}")
    if cls is NodeClass.V1:
        # -a e_1 at the origin; odd prefixes unlock link j
        nxt = j + 1 if (j == 0 or j % 2 == 1) else j
    elif cls is NodeClass.V2:
        nxt = j + 1 if (j >= 2 and j % 2 == 0) else j
    else:
        nxt = j
    return nxt if d is None else min(nxt, d)


@dataclass(frozen=True)
class SpanState:
    """Per-node prefix indices after ``k`` communication rounds."""

    n: int
    d: int
    j: tuple
    k: int = 0
    subgradient_steps: int = 0
    tau_com: float = 1.0
    tau_sub: float = 1.0

    @classmethod
    def initial(cls, n: int, d: int, tau_com: float = 1.0, tau_sub: float = 1.0) -> "SpanState":
        if n < 3 or n % 3:
            raise ValueError(f"n must be a positive multiple of 3, got {n}")
        if d < 3 or d % 2 == 0:
            raise ValueError(f"d must be odd and >= 3, got {d}")
        return cls(n, d, (0,) * n, tau_com=tau_com, tau_sub=tau_sub)

    @property
    def clock(self) -> float:
        return self.k * self.tau_com + self.subgradient_steps * self.tau_sub

    def classes(self):
        return [node_class(i, self.n) for i in range(self.n)]


def subgradient_phase(state: SpanState) -> SpanState:
    """Apply subgradient steps at every node until no prefix grows."""
    classes = state.classes()
    j = list(state.j)
    steps = 0
    while True:
        nxt = [subgradient_transition(c, v, state.d) for c, v in zip(classes, j)]
        if nxt == j:
            break
        j = nxt
        steps += 1
    return replace(state, j=tuple(j), subgradient_steps=state.subgradient_steps + steps)


def communication_round(state: SpanState, center: Optional[int] = None) -> SpanState:
    """One exchange over the star of round ``state.k + 1``.

    ``center`` is a 1-based node label; by default the rotating center of
    the round. The center learns the largest prefix in the network, every
    other node learns the center's previous prefix.
    """
    k = state.k + 1
    c = (rotating_center(state.n, k) if center is None else center) - 1
    prev = state.j
    top = max(prev)
    j = tuple(top if i == c else max(v, prev[c]) for i, v in enumerate(prev))
    return replace(state, j=j, k=k)


def envelope(n: int, k: int) -> np.ndarray:
    """Largest prefix index allowed at every node during round k.

    With p = floor(3k/n) and q = k mod n/3: V1 nodes and the V3 nodes already
    visited by the center (0-based index <= 2n/3 + q) are capped at 2p + 2,
    the rest at 2p + 1.
    """
    p, q = (3 * k) // n, k % (n // 3)
    caps = np.empty(n, dtype=int)
    for i in range(n):
        cls = node_class(i, n)
        high = cls is NodeClass.V1 or (cls is NodeClass.V3 and i <= 2 * n // 3 + q)
        caps[i] = 2 * p + 2 if high else 2 * p + 1
    return caps


def communication_floor(n: int, d: int) -> float:
    """n (d - 1) / 6: rounds needed before any node can reach K_d."""
    return n * (d - 1) / 6


@dataclass
class SpanTrace:
    states: List[SpanState] = field(default_factory=list)
    envelope_violations: List[int] = field(default_factory=list)
    reached_at: Optional[int] = None


def simulate(n: int, d: int, rounds: Optional[int] = None, tau_com: float = 1.0,
             tau_sub: float = 1.0) -> SpanTrace:
    """Alternate greedy subgradient phases and communication rounds.

    Stops after ``rounds`` rounds, or once some node reaches K_d when
    ``rounds`` is None. The envelope is checked for every round below the
    communication floor.
    """
    state = subgradient_phase(SpanState.initial(n, d, tau_com, tau_sub))
    trace = SpanTrace()
    floor = communication_floor(n, d)
    limit = rounds if rounds is not None else 10 * n * d + 10
    while True:
        trace.states.append(state)
        if state.k < floor and np.any(np.array(state.j) > envelope(n, state.k)):
            trace.envelope_violations.append(state.k)
        if trace.reached_at is None and max(state.j) >= d:
            trace.reached_at = state.k
            if rounds is None:
                break
        if state.k >= limit:
            break
        state = subgradient_phase(communication_round(state))
    return trace


def rounds_to_reach_last_coordinate(n: int, d: int) -> int:
    """First round index at which some node's memory spans coordinate d."""
    trace = simulate(n, d)
    if trace.reached_at is None:
        raise RuntimeError(f"no node reached coordinate {d}")
    return trace.reached_at
