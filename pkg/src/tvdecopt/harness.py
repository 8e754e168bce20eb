"""Experiment configuration, runs, sweeps and CSV records."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import baselines, hard_instance, network as netmod
from .problem import eval_p, l1_distance_instance
from .solver import (RunRecord, choose_budget, default_probes, make_schedule,
                     solve_convex, solve_strongly_convex)

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class InvariantError(RuntimeError):
    """A certificate or invariant check failed during a run."""


@dataclass
class RunConfig:
    method: str = "optimal"        # optimal | dsubgd | centralized
    instance: str = "hard_sc"      # hard_sc | hard_cvx | custom
    n: int = 6
    d: int = 3
    M: float = 1.0
    R: float = 1.0
    r: float = 0.1
    chi: float = 6.0
    eps: float = 1e-2
    K: int = 0                     # 0: from the budget rule
    T: int = 0
    topology: str = ""             # empty: rotating_star for hard instances, ring for custom
    tau_com: float = 1.0
    tau_sub: float = 1.0
    seed: int = 0
    out: str = ""
    solver_chi: str = "declared"   # declared | tight | <number>
    probes: int = 20
    step_scale: float = 0.0        # baselines; 0: R/M
    reference_steps: int = 20000

    @classmethod
    def from_mapping(cls, mapping) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(known)}")
            typ = known[key].type
            try:
                if typ == "int":
                    kwargs[key] = int(float(raw)) if isinstance(raw, str) else int(raw)
                elif typ == "float":
                    kwargs[key] = float(raw)
                else:
                    kwargs[key] = str(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    def validate(self):
        if self.method not in ("optimal", "dsubgd", "centralized"):
            raise ConfigError(f"unknown method {self.method!r}")
        if self.instance not in ("hard_sc", "hard_cvx", "custom"):
            raise ConfigError(f"unknown instance {self.instance!r}")
        if self.K < 0 or self.T < 0:
            raise ConfigError("K and T must be >= 0")

    def replace(self, **changes) -> "RunConfig":
        merged = dataclasses.asdict(self)
        merged.update(changes)
        return RunConfig.from_mapping(merged)

    def header(self) -> str:
        return " ".join(f"{f.name}={getattr(self, f.name)}" for f in fields(self))


def parse_pairs(items: Iterable[str]) -> dict:
    """Parse ``key=value`` tokens."""
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        key, value = item.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


# -- CSV ---------------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def record_to_csv(record: RunRecord, comment: str = "") -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RunRecord.COLUMNS)
    for row in zip(*(getattr(record, c) for c in RunRecord.COLUMNS)):
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def write_record(record: RunRecord, path, comment: str = "") -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(record_to_csv(record, comment))
    return path


def read_record(path) -> RunRecord:
    lines = Path(path).read_text().splitlines()
    meta = {}
    body = []
    for line in lines:
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
        else:
            body.append(line)
    reader = csv.DictReader(body)
    if tuple(reader.fieldnames or ()) != RunRecord.COLUMNS:
        raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
    rec = RunRecord(meta=meta)
    for row in reader:
        rec.append(int(row["k"]), int(row["comms"]), int(row["subgrads"]),
                   float(row["model_time"]), float(row["primal_gap"]),
                   float(row["consensus"]), float(row["cert_margin"]))
    return rec


def records_equal(a: RunRecord, b: RunRecord) -> bool:
    for c in RunRecord.COLUMNS:
        if not np.array_equal(np.asarray(getattr(a, c)), np.asarray(getattr(b, c)), equal_nan=True):
            return False
    return True


# -- building blocks ---------------------------------------------------------

def build_problem(cfg: RunConfig):
    """Instance and network for a config."""
    if cfg.instance == "hard_sc":
        inst, net = hard_instance.build_sc(cfg.M, cfg.r, cfg.eps, cfg.chi)
    elif cfg.instance == "hard_cvx":
        inst, net = hard_instance.build_cvx(cfg.M, cfg.R, cfg.eps, cfg.chi)
    else:
        rng = np.random.default_rng(cfg.seed)
        centers = rng.uniform(-1.0, 1.0, (cfg.n, cfg.d))
        inst = l1_distance_instance(centers, r=cfg.r, R=math.sqrt(cfg.d))
        net = netmod.make_network(cfg.topology or "ring", cfg.n, seed=cfg.seed)
        return inst, net
    if cfg.topology and cfg.topology != "rotating_star":
        net = netmod.make_network(cfg.topology, inst.n, seed=cfg.seed)
    return inst, net


def solver_chi(cfg: RunConfig, net) -> float:
    if cfg.solver_chi == "declared":
        return net.chi
    if cfg.solver_chi == "tight":
        return float(np.max(netmod.certify_chi(net, rounds=_certify_rounds(net), trials=1,
                                               raise_on_failure=True).tight))
    try:
        return float(cfg.solver_chi)
    except ValueError as exc:
        raise ConfigError(f"solver_chi must be declared, tight or a number, got {cfg.solver_chi!r}") from exc


def _certify_rounds(net) -> int:
    return net.period if net.period else 64


def _reference(inst, cfg: RunConfig):
    """Attach a reference optimum computed by long centralized subgradient runs."""
    if inst.known_value is not None or inst.known_solution is not None:
        return inst
    x_best, values = baselines.centralized_subgradient(inst, cfg.reference_steps)
    log.info("reference value from %d centralized steps: %.12g", cfg.reference_steps, values.min())
    return dataclasses.replace(inst, known_value=float(values.min()))


def run(cfg: RunConfig, write: bool = True) -> RunRecord:
    """Build, solve, record and (optionally) write the CSV for one config."""
    inst, net = build_problem(cfg)
    chi = solver_chi(cfg, net)
    if cfg.instance == "custom":
        inst = _reference(inst, cfg)

    if cfg.method == "optimal":
        if inst.r == 0 and cfg.K and cfg.T:
            # fixed budget on the regularized problem, gap measured on the original
            reg = inst.with_regularization(cfg.eps / inst.R ** 2)
            schedule = make_schedule(reg.r, chi, cfg.K, cfg.T)
            probes = default_probes(reg, schedule, count=cfg.probes, seed=cfg.seed)
            x_o, record = solve_strongly_convex(reg, net, cfg.K, cfg.T, chi=chi, tau_com=cfg.tau_com,
                                                tau_sub=cfg.tau_sub, probes=probes, reference=inst)
        elif inst.r == 0:
            x_o, record = solve_convex(inst, net, cfg.eps, chi=chi, tau_com=cfg.tau_com,
                                       tau_sub=cfg.tau_sub,
                                       probes=_probes_for_convex(inst, net, cfg, chi))
        else:
            K, T = cfg.K, cfg.T
            if not (K and T):
                K0, T0 = choose_budget(inst, chi, cfg.eps)
                K, T = K or K0, T or T0
            schedule = make_schedule(inst.r, chi, K, T)
            probes = default_probes(inst, schedule, count=cfg.probes, seed=cfg.seed)
            x_o, record = solve_strongly_convex(inst, net, K, T, chi=chi, tau_com=cfg.tau_com,
                                                tau_sub=cfg.tau_sub, probes=probes)
        cert = record.certificate
        if cert is not None and not cert.passed:
            raise InvariantError(f"duality-gap certificate violated at probe {cert.offending}")
    elif cfg.method == "dsubgd":
        rounds = cfg.K or _default_rounds(inst, chi, cfg)
        x_o, record = baselines.d_subgd(inst, net, rounds, c=cfg.step_scale or None,
                                        tau_com=cfg.tau_com, tau_sub=cfg.tau_sub)
    else:
        steps = cfg.K or _default_rounds(inst, chi, cfg)
        x_o, values = baselines.centralized_subgradient(inst, steps, c=cfg.step_scale or None)
        record = RunRecord(meta={"method": "centralized"})
        p_star = inst.known_value if inst.known_value is not None else eval_p(inst, inst.known_solution)
        for t in range(1, steps + 1):
            record.append(t, 0, t, cfg.tau_sub * t, values[t] - p_star, 0.0)
    record.meta["x_o"] = x_o
    if write:
        write_record(record, cfg.out or "run.csv", comment=cfg.header())
    return record


def _default_rounds(inst, chi, cfg):
    reg = inst if inst.r > 0 else inst.with_regularization(cfg.eps / inst.R ** 2)
    return choose_budget(reg, chi, cfg.eps if inst.r > 0 else cfg.eps / 2)[0]


def _probes_for_convex(inst, net, cfg, chi):
    reg = inst.with_regularization(cfg.eps / inst.R ** 2)
    K, T = choose_budget(reg, chi, cfg.eps / 2)
    return default_probes(reg, make_schedule(reg.r, chi, K, T), count=cfg.probes, seed=cfg.seed)


def summary_line(cfg: RunConfig, record: RunRecord) -> str:
    return (f"method={cfg.method} instance={cfg.instance} rows={len(record)} "
            f"comms={record.comms[-1]} subgrads={record.subgrads[-1]} "
            f"model_time={record.model_time[-1]:.6g} final_gap={record.final_gap:.6g} "
            f"cert_margin={record.cert_margin[-1]:.6g}")


# -- sweeps ------------------------------------------------------------------

SUMMARY_COLUMNS = ("value", "K", "T", "comms", "subgrads", "final_gap")


def sweep(cfg: RunConfig, vary: str, values: Sequence, out_dir=None):
    """Repeat :func:`run` over ``values`` of one key.

    Writes ``<vary>_<value>.csv`` per run plus ``summary.csv`` into
    ``out_dir`` (default: ``cfg.out`` or ``sweep``). Returns the summary rows.
    """
    out_dir = Path(out_dir or cfg.out or "sweep")
    rows = []
    for value in values:
        sub = cfg.replace(**{vary: value, "out": str(out_dir / f"{vary}_{value}.csv")})
        rec = run(sub)
        rows.append({"value": value, "K": rec.meta.get("K", sub.K), "T": rec.meta.get("T", sub.T),
                     "comms": rec.comms[-1], "subgrads": rec.subgrads[-1],
                     "final_gap": rec.final_gap})
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in rows:
            w.writerow([_fmt(row[c]) if isinstance(row[c], float) else row[c] for c in SUMMARY_COLUMNS])
    return rows


def loglog_slope(xs, ys) -> float:
    """Least-squares slope of log(y) against log(x)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 2:
        return math.nan
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])
