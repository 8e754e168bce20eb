"""Optimal decentralized primal-dual method for non-smooth problems.

The method works on the saddle reformulation

    min_x max_y max_{z in L^perp}  F(x) - <y, x> - (r_yz/2)||y + z||^2

with r_x = 2r/3 and r_yz = 3/r. Each outer iteration performs one gossip
exchange (the pair (g_z, g_z + m) is sent together over W_k), maintains an
error-feedback memory m that corrects the inexact averaging of the dual
gradient, and approximates the primal resolvent with T implicit subgradient
steps. Outer combinations follow Nesterov-style weights alpha_k = 3/(k+3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .network import (TimeVaryingNetwork, consensus_violation,
                      project_consensus_complement)
from .problem import ProblemInstance, eval_p, eval_Q


class DivergenceError(FloatingPointError):
    """An iterate became non-finite."""

    def __init__(self, k):
        super().__init__(f"non-finite iterate at outer iteration {k}")
        self.k = k


@dataclass(frozen=True)
class Schedule:
    """Step sizes and weights for K outer and T inner iterations.

    Arrays indexed by the outer iteration k = 0..K-1, except ``alpha`` and
    ``eta_z_k`` which also hold the entry k = K, and ``lam`` which holds
    lambda_1..lambda_K at positions 1..K (position 0 is unused and zero).
    """

    r: float
    chi: float
    K: int
    T: int
    r_x: float
    r_yz: float
    tau_x: float
    eta_y: float
    eta_z: float
    alpha: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    sigma: np.ndarray
    tau_x_k: np.ndarray
    eta_x_k: np.ndarray
    eta_y_k: np.ndarray
    eta_z_k: np.ndarray
    theta_z: np.ndarray
    lam: np.ndarray


def make_schedule(r: float, chi: float, K: int, T: int) -> Schedule:
    if not r > 0:
        raise ValueError(f"r must be > 0 (use solve_convex for r = 0), got r={r}")
    if K < 1 or T < 1:
        raise ValueError(f"K and T must be >= 1, got K={K}, T={T}")
    if chi < 1:
        raise ValueError(f"chi must be >= 1, got chi={chi}")
    r_x = 2.0 * r / 3.0
    r_yz = 3.0 / r
    tau_x = r_x / 2.0
    eta_y = 1.0 / (4.0 * r_yz)
    eta_z = 1.0 / (10.0 * r_yz * chi ** 2)

    ks = np.arange(K + 1, dtype=float)
    alpha = 3.0 / (ks + 3.0)
    gamma = (ks[:K] + 2.0) / (ks[:K] + 3.0)
    tau_x_k = tau_x / alpha[:K]
    beta = np.full(K, r_x)
    sigma = tau_x_k / (2.0 * tau_x_k + beta)
    eta_x_k = 1.0 / (tau_x_k * T)
    eta_y_k = eta_y / alpha[:K]
    eta_z_k = eta_z / alpha
    theta_z = np.full(K, 1.0 / (2.0 * r_yz))

    lam = np.zeros(K + 1)
    for k in range(1, K):
        lam[k] = alpha[k - 1] ** -2 + 1.0 / alpha[k] - alpha[k] ** -2
    lam[K] = alpha[K - 1] ** -2
    return Schedule(r=r, chi=chi, K=K, T=T, r_x=r_x, r_yz=r_yz, tau_x=tau_x,
                    eta_y=eta_y, eta_z=eta_z, alpha=alpha, gamma=gamma, beta=beta,
                    sigma=sigma, tau_x_k=tau_x_k, eta_x_k=eta_x_k, eta_y_k=eta_y_k,
                    eta_z_k=eta_z_k, theta_z=theta_z, lam=lam)


def choose_budget(instance: ProblemInstance, chi: float, epsilon: float) -> Tuple[int, int]:
    """K and T that drive the two leading error terms below epsilon/3 each.

    K = ceil(chi M sqrt(636 / (r eps))), T = ceil(216 M^2 / (r eps K)).
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    r, M = instance.r, instance.M
    if not r > 0:
        raise ValueError("choose_budget needs r > 0")
    K = math.ceil(chi * M * math.sqrt(636.0 / (r * epsilon)))
    T = max(1, math.ceil(216.0 * M * M / (r * epsilon * K)))
    return K, T


@dataclass
class SolverState:
    """All per-iteration vectors of the method plus averaging accumulators."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    m: np.ndarray
    x_prev: np.ndarray
    x_tilde: np.ndarray
    x_bar: np.ndarray
    y_bar: np.ndarray
    z_bar: np.ndarray
    acc_x: np.ndarray
    acc_y: np.ndarray
    acc_z: np.ndarray
    acc_lam: float = 0.0
    k: int = 0
    communications: int = 0
    gossip_applications: int = 0
    subgradient_calls: int = 0  # per node
    # last-iteration intermediates, kept for invariant checks
    z_under: Optional[np.ndarray] = field(default=None, repr=False)
    y_under: Optional[np.ndarray] = field(default=None, repr=False)

    @classmethod
    def initial(cls, n: int, d: int) -> "SolverState":
        # zero input; x_bar, x_tilde, x^{-1} seeded from x^0 and y_bar, z_bar from y^0, z^0
        def zeros():
            return np.zeros((n, d))
        return cls(x=zeros(), y=zeros(), z=zeros(), m=zeros(), x_prev=zeros(),
                   x_tilde=zeros(), x_bar=zeros(), y_bar=zeros(), z_bar=zeros(),
                   acc_x=zeros(), acc_y=zeros(), acc_z=zeros())

    def averages(self):
        """Current (x_a, y_a, z_a); zero before the first iteration."""
        if self.acc_lam == 0:
            return self.acc_x.copy(), self.acc_y.copy(), self.acc_z.copy()
        return (self.acc_x / self.acc_lam, self.acc_y / self.acc_lam,
                self.acc_z / self.acc_lam)

    def output(self) -> np.ndarray:
        """Node average of the weighted primal average x_a."""
        return self.averages()[0].mean(axis=0)


def inner_loop(x_k: np.ndarray, y_next: np.ndarray, instance: ProblemInstance,
               eta_x: float, beta: float, tau_x: float, T: int,
               on_step: Optional[Callable] = None):
    """Implicit subgradient steps on the primal resolvent subproblem.

    Each step solves
        x' = x - eta (g(x) + beta x' - y + tau (x' - x_k))
    exactly, a diagonal linear equation in x'. Returns the last iterate and
    the average of x^{k,1..T}. ``on_step(t, x_old, g, x_new)`` is called after
    every step when given.
    """
    denom = 1.0 + eta_x * (beta + tau_x)
    shift = eta_x * y_next + (eta_x * tau_x) * x_k
    xt = x_k
    total = np.zeros_like(x_k)
    for t in range(T):
        g = instance.subgradients(xt)
        x_new = (xt - eta_x * g + shift) / denom
        if on_step is not None:
            on_step(t, xt, g, x_new)
        xt = x_new
        total += xt
    return xt, total / T


def inner_residual(x_old, g, x_new, x_k, y_next, eta_x, beta, tau_x) -> float:
    """Relative residual of the implicit inner equation."""
    res = x_new + eta_x * (g + beta * x_new - y_next + tau_x * (x_new - x_k)) - x_old
    scale = max(1.0, float(np.max(np.abs(x_old))), float(np.max(np.abs(x_new))),
                eta_x * float(np.max(np.abs(g))), eta_x * float(np.max(np.abs(y_next))))
    return float(np.max(np.abs(res))) / scale


def iterate(instance: ProblemInstance, network: TimeVaryingNetwork, schedule: Schedule,
            state: Optional[SolverState] = None,
            on_inner_step: Optional[Callable] = None) -> Iterator[SolverState]:
    """Run the outer loop, yielding the (mutated) state after every iteration."""
    if network.n != instance.n:
        raise ValueError(f"network has {network.n} nodes, instance has {instance.n}")
    if state is None:
        state = SolverState.initial(instance.n, instance.d)
    s = schedule
    T = s.T
    for k in range(state.k, s.K):
        a = s.alpha[k]
        # combine current and averaged dual iterates
        y_u = a * state.y + (1 - a) * state.y_bar
        z_u = a * state.z + (1 - a) * state.z_bar
        # grad_y G = grad_z G = r_yz (y + z)
        g = s.r_yz * (y_u + z_u)
        # one exchange of (g, g + m) over W_k
        W = network.gossip(k)
        g_tilde = W @ g
        g_hat = W @ (g + state.m)
        # extrapolation first, the y-step consumes it
        x_hat = state.x + s.gamma[k] * (state.x_tilde - state.x_prev)
        y_new = state.y - s.eta_y_k[k] * (g + x_hat)
        z_new = state.z - s.eta_z_k[k] * g_hat
        # dual averages and error-feedback memory
        y_bar_new = y_u + a * (y_new - state.y)
        z_bar_new = z_u - s.theta_z[k] * g_tilde
        m_new = (s.eta_z_k[k] / s.eta_z_k[k + 1]) * (state.m + g - g_hat)
        # inexact primal resolvent
        step_hook = None
        if on_inner_step is not None:
            def step_hook(t, x_old, gx, x_new, _k=k, _xk=state.x, _y=y_new):
                on_inner_step(_k, t, x_old, gx, x_new, _xk, _y,
                              s.eta_x_k[_k], s.beta[_k], s.tau_x_k[_k])
        x_T, x_tilde_new = inner_loop(state.x, y_new, instance, s.eta_x_k[k],
                                      s.beta[k], s.tau_x_k[k], T, step_hook)
        # primal combinations
        x_new = s.sigma[k] * x_T + (1 - s.sigma[k]) * x_tilde_new
        x_bar_new = a * x_tilde_new + (1 - a) * state.x_bar

        if not (np.all(np.isfinite(x_new)) and np.all(np.isfinite(y_new))
                and np.all(np.isfinite(z_new)) and np.all(np.isfinite(m_new))):
            raise DivergenceError(k)

        state.x_prev = state.x
        state.x = x_new
        state.x_tilde = x_tilde_new
        state.x_bar = x_bar_new
        state.y, state.z, state.m = y_new, z_new, m_new
        state.y_bar, state.z_bar = y_bar_new, z_bar_new
        state.y_under, state.z_under = y_u, z_u
        # weighted output averages
        lam = s.lam[k + 1]
        state.acc_x = state.acc_x + lam * x_bar_new
        state.acc_y = state.acc_y + lam * y_bar_new
        state.acc_z = state.acc_z + lam * z_bar_new
        state.acc_lam += lam

        state.k = k + 1
        state.communications += 1
        state.gossip_applications += 2
        state.subgradient_calls += T
        yield state


@dataclass
class RunRecord:
    """Per-iteration metrics of one run.

    ``subgrads`` counts subgradient calls per node; ``cert_margin`` is only
    filled on rows where the duality-gap certificate was evaluated (NaN
    elsewhere); ``primal_gap`` is NaN when no reference value is known.
    """

    k: List[int] = field(default_factory=list)
    comms: List[int] = field(default_factory=list)
    subgrads: List[int] = field(default_factory=list)
    model_time: List[float] = field(default_factory=list)
    primal_gap: List[float] = field(default_factory=list)
    consensus: List[float] = field(default_factory=list)
    cert_margin: List[float] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    # run artifacts, not serialized
    state: Optional["SolverState"] = field(default=None, repr=False, compare=False)
    schedule: Optional[Schedule] = field(default=None, repr=False, compare=False)
    certificate: Optional["CertificateReport"] = field(default=None, repr=False, compare=False)

    COLUMNS = ("k", "comms", "subgrads", "model_time", "primal_gap", "consensus", "cert_margin")

    def append(self, k, comms, subgrads, model_time, primal_gap, consensus, cert_margin=math.nan):
        self.k.append(int(k))
        self.comms.append(int(comms))
        self.subgrads.append(int(subgrads))
        self.model_time.append(float(model_time))
        self.primal_gap.append(float(primal_gap))
        self.consensus.append(float(consensus))
        self.cert_margin.append(float(cert_margin))

    def __len__(self):
        return len(self.k)

    @property
    def final_gap(self) -> float:
        return self.primal_gap[-1] if self.primal_gap else math.nan


def reference_value(instance: ProblemInstance) -> Optional[float]:
    if instance.known_value is not None:
        return float(instance.known_value)
    if instance.known_solution is not None:
        return eval_p(instance, instance.known_solution)
    return None


@dataclass(frozen=True)
class CertificateReport:
    gaps: np.ndarray
    bounds: np.ndarray
    margins: np.ndarray  # bound - gap, >= 0 when the certificate holds
    labels: Tuple[str, ...]
    passed: bool
    offending: Optional[str] = None

    @property
    def worst_margin(self) -> float:
        return float(self.margins.min())


def gap_bound(instance: ProblemInstance, schedule: Schedule, X, Y, Z) -> float:
    """Right-hand side of the duality-gap certificate at a probe (x, y, z)."""
    r, K, T, chi = schedule.r, schedule.K, schedule.T, schedule.chi
    nx = float(np.sum(X * X))
    ny = float(np.sum(Y * Y))
    nz = float(np.sum(Z * Z))
    return (2.0 / K ** 2) * (r * nx + (18.0 / r) * ny + (45.0 * chi ** 2 / r) * nz) \
        + 72.0 * instance.n * instance.M ** 2 / (r * K * T)


def saddle_probe(instance: ProblemInstance, schedule: Schedule):
    """(w*, y*, z*) built from x* and optimal per-node subgradients, if known."""
    if instance.known_solution is None or instance.optimal_subgradients is None:
        return None
    w = np.broadcast_to(instance.known_solution, (instance.n, instance.d)).copy()
    D = np.asarray(instance.optimal_subgradients, dtype=float)
    return w, D + schedule.r_x * w, -schedule.r * w - D


def default_probes(instance: ProblemInstance, schedule: Schedule, count: int = 20,
                   seed: int = 0, scale: float = 1.0):
    """Origin, the saddle point when available, and Gaussian probes with z in L^perp."""
    shape = (instance.n, instance.d)
    probes = [("origin", np.zeros(shape), np.zeros(shape), np.zeros(shape))]
    sp = saddle_probe(instance, schedule)
    if sp is not None:
        probes.append(("saddle",) + sp)
    rng = np.random.default_rng(seed)
    for i in range(count):
        X, Y, Z = (scale * rng.standard_normal(shape) for _ in range(3))
        probes.append((f"random{i}", X, Y, project_consensus_complement(Z)))
    return probes


def duality_gap_certificate(state: SolverState, instance: ProblemInstance,
                            schedule: Schedule, probes: Sequence) -> CertificateReport:
    """Check Q(x_a, y, z) - Q(x, y_a, z_a) <= bound at every probe.

    Probes are ``(label, x, y, z)`` or ``(x, y, z)``; z is projected onto
    L^perp before evaluation.
    """
    xa, ya, za = state.averages()
    gaps, bounds, labels = [], [], []
    for i, p in enumerate(probes):
        if len(p) == 4:
            label, X, Y, Z = p
        else:
            label, (X, Y, Z) = f"probe{i}", p
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        Z = project_consensus_complement(Z)
        gap = (eval_Q(instance, xa, Y, Z, schedule.r_x, schedule.r_yz)
               - eval_Q(instance, X, ya, za, schedule.r_x, schedule.r_yz))
        gaps.append(gap)
        bounds.append(gap_bound(instance, schedule, X, Y, Z))
        labels.append(label)
    gaps = np.array(gaps)
    bounds = np.array(bounds)
    margins = bounds - gaps
    bad = np.nonzero(margins < 0)[0]
    offending = labels[bad[0]] if bad.size else None
    return CertificateReport(gaps, bounds, margins, tuple(labels), not bad.size, offending)


def solve_strongly_convex(instance: ProblemInstance, network: TimeVaryingNetwork,
                          K: int, T: int, tau_com: float = 1.0, tau_sub: float = 1.0,
                          chi: Optional[float] = None, record_every: int = 1,
                          probes: Optional[Sequence] = None,
                          reference: Optional[ProblemInstance] = None):
    """Run the method for exactly K outer iterations with T inner steps each.

    Returns ``(x_o, record)``; the final state, schedule and certificate are
    attached to the record. When ``probes`` is given the
    duality-gap certificate is evaluated after the final iteration and its
    worst margin stored on the last record row. ``reference`` is the problem
    on which the primal gap is measured (default: ``instance``).
    """
    if not instance.r > 0:
        raise ValueError("solve_strongly_convex needs r > 0; use solve_convex")
    schedule = make_schedule(instance.r, network.chi if chi is None else chi, K, T)
    reference = instance if reference is None else reference
    p_star = reference_value(reference)
    record = RunRecord(meta={"method": "optimal", "K": K, "T": T, "chi": schedule.chi})
    state = None
    for state in iterate(instance, network, schedule):
        if state.k % record_every and state.k != K:
            continue
        x_o = state.output()
        gap = eval_p(reference, x_o) - p_star if p_star is not None else math.nan
        xa = state.averages()[0]
        record.append(state.k, state.communications, state.subgradient_calls,
                      tau_com * state.communications + tau_sub * state.subgradient_calls,
                      gap, consensus_violation(xa))
    cert = None
    if probes is not None:
        cert = duality_gap_certificate(state, instance, schedule, probes)
        record.cert_margin[-1] = cert.worst_margin
    record.meta["gossip_applications"] = state.gossip_applications
    record.state, record.schedule, record.certificate = state, schedule, cert
    return state.output(), record


def solve_convex(instance: ProblemInstance, network: TimeVaryingNetwork, epsilon: float,
                 **kwargs):
    """Solve an r = 0 problem by regularizing with r = eps / R^2.

    The regularized problem is solved to precision eps/2, which leaves an
    eps-accurate point for the unregularized average. Recorded gaps refer to
    the unregularized problem.
    """
    if not epsilon > 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    if instance.r != 0:
        raise ValueError("solve_convex expects an unregularized instance (r = 0)")
    r = epsilon / instance.R ** 2
    reg = instance.with_regularization(r)
    chi = kwargs.pop("chi", None) or network.chi
    K, T = choose_budget(reg, chi, epsilon / 2)
    kwargs.setdefault("reference", instance)
    x_o, record = solve_strongly_convex(reg, network, K, T, chi=chi, **kwargs)
    record.meta.update({"regularization": r, "epsilon": epsilon})
    return x_o, record
