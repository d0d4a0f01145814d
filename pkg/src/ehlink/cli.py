"""Command-line frontend: config parsing, irradiance-trace ingestion,
experiment orchestration, and report emission."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import sys
from datetime import datetime
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from . import heuristics, offline, sim
from .arrivals import (ArrivalProcess, ArrivalTrace, make_bernoulli,
                       make_deterministic, make_empirical,
                       make_truncated_geometric, make_uniform, sample)
from .consumption import (CircuitLinearCost, CircuitLogCost, CostModel,
                          FLOOR_SNAP, LinearCost, LogCost, RewardCurve,
                          build_surrogate)
from .mdp import OnlinePolicy, SystemConfig, policy_iteration

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Bad experiment configuration."""


class TraceParseError(ValueError):
    """Malformed irradiance trace file."""


# ---------------------------------------------------------------------------
# Trace ingestion
# ---------------------------------------------------------------------------

def _parse_timestamp(token: str, line_no: int) -> float:
    try:
        return float(token)
    except ValueError:
        pass
    try:
        return datetime.fromisoformat(token).timestamp()
    except ValueError as exc:
        raise TraceParseError(
            f"line {line_no}: bad timestamp {token!r} (need seconds or ISO-8601)") from exc


def ingest_trace(path: str | Path, slot_seconds: float,
                 panel_area_cm2: float = 1.0,
                 quantum_uw_per_cm2: float = 1.0,
                 label: str = "") -> ArrivalTrace:
    """Read a two-column (timestamp, irradiance in uW/cm^2) file and quantize.

    Samples are averaged per slot and floored to whole quanta; the panel area
    and slot length cancel against the quantum definition, so only the
    irradiance/quantum ratio matters. Slots with no samples read as zero.
    """
    if slot_seconds <= 0 or panel_area_cm2 <= 0 or quantum_uw_per_cm2 <= 0:
        raise ConfigError("slot length, panel area and quantum must be positive")
    times: list[float] = []
    lux: list[float] = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.replace(",", " ").split()
            if len(parts) < 2:
                raise TraceParseError(f"line {line_no}: need two columns, got {text!r}")
            t = _parse_timestamp(parts[0], line_no)
            try:
                value = float(parts[1])
            except ValueError as exc:
                raise TraceParseError(f"line {line_no}: bad irradiance {parts[1]!r}") from exc
            if value < 0:
                raise TraceParseError(f"line {line_no}: negative irradiance {value}")
            if times and t < times[-1]:
                raise TraceParseError(f"line {line_no}: timestamps not monotone")
            times.append(t)
            lux.append(value)
    if not times:
        raise TraceParseError(f"{path}: no samples")
    t0 = times[0]
    slots = [int((t - t0) // slot_seconds) for t in times]
    n_slots = slots[-1] + 1
    sums = np.zeros(n_slots)
    counts = np.zeros(n_slots)
    for s, v in zip(slots, lux):
        sums[s] += v
        counts[s] += 1
    means = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    quanta = np.floor(means / quantum_uw_per_cm2 + FLOOR_SNAP).astype(int)
    return ArrivalTrace(tuple(int(q) for q in quanta), slot_seconds, label)


# ---------------------------------------------------------------------------
# Experiment configuration
# ---------------------------------------------------------------------------

def _build_cost(entry: dict, default_snr: float) -> CostModel:
    kind = entry.get("kind")
    try:
        if kind == "linear":
            return LinearCost(float(entry.get("slope", 1.0)))
        if kind == "log":
            return LogCost(float(entry["coeff"]), float(entry.get("snr_scale", default_snr)))
        if kind == "circuit_linear":
            return CircuitLinearCost(float(entry["fixed_cost"]), float(entry["ramp_end"]))
        if kind == "circuit_log":
            return CircuitLogCost(float(entry["fixed_cost"]), float(entry["ramp_end"]),
                                  float(entry["coeff"]),
                                  float(entry.get("snr_scale", default_snr)))
    except KeyError as exc:
        raise ConfigError(f"cost model {kind!r} is missing field {exc}") from exc
    raise ConfigError(f"unknown cost kind {kind!r}")


def _build_arrivals(entry: dict, exp: "ExperimentConfig", label: str
                    ) -> tuple[ArrivalProcess, ArrivalTrace | None]:
    kind = entry.get("kind")
    try:
        if kind == "deterministic":
            return make_deterministic(int(entry["b"])), None
        if kind == "bernoulli":
            return make_bernoulli(int(entry["b"]), float(entry["p"])), None
        if kind == "uniform":
            return make_uniform(int(entry["b_max"])), None
        if kind == "truncated_geometric":
            return make_truncated_geometric(float(entry["mean"]), int(entry["b_max"])), None
        if kind in ("empirical", "trace"):
            trace = ingest_trace(entry["path"], exp.slot_seconds,
                                 exp.panel_area_cm2, exp.quantum_uw_per_cm2, label)
            if "stride" in entry:
                stride = int(entry["stride"])
                trace = ArrivalTrace(trace.values[::stride], exp.slot_seconds, label)
            if "scale" in entry:
                scaled = [int(v * float(entry["scale"])) for v in trace.values]
                trace = ArrivalTrace(tuple(scaled), exp.slot_seconds, label)
            return make_empirical(trace), trace
    except KeyError as exc:
        raise ConfigError(f"arrivals {kind!r} missing field {exc}") from exc
    raise ConfigError(f"unknown arrivals kind {kind!r}")


@dataclasses.dataclass
class ExperimentConfig:
    """Everything needed to build system configs and offline instances."""

    raw: dict
    snr_scale: float
    efficiency: float
    e_max_tx: int
    e_max_rc: int
    horizon: int
    seed: int
    slot_seconds: float = 1.0
    panel_area_cm2: float = 1.0
    quantum_uw_per_cm2: float = 1.0
    rho_max: float | None = None
    allow_transfer: bool = True

    cost_tx: CostModel = None
    cost_rc: CostModel = None
    arrivals_tx: ArrivalProcess = None
    arrivals_rc: ArrivalProcess = None
    trace_tx: ArrivalTrace | None = None
    trace_rc: ArrivalTrace | None = None

    def system(self) -> SystemConfig:
        return SystemConfig(self.e_max_tx, self.e_max_rc, self.cost_tx, self.cost_rc,
                            self.arrivals_tx, self.arrivals_rc, self.efficiency,
                            RewardCurve(self.snr_scale), rho_max=self.rho_max,
                            allow_transfer=self.allow_transfer)

    def traces(self) -> tuple[ArrivalTrace, ArrivalTrace]:
        """Arrival traces for simulation: file-backed when configured, sampled
        from the arrival statistics otherwise."""
        rng = np.random.default_rng(self.seed)
        tx = self.trace_tx or sample(self.arrivals_tx, self.horizon, rng,
                                     self.slot_seconds, "tx")
        rc = self.trace_rc or sample(self.arrivals_rc, self.horizon, rng,
                                     self.slot_seconds, "rc")
        k = min(len(tx.values), len(rc.values), self.horizon)
        tx = ArrivalTrace(tx.values[:k], tx.slot_seconds, "tx")
        rc = ArrivalTrace(rc.values[:k], rc.slot_seconds, "rc")
        return tx, rc

    def offline_instance(self, caps: tuple[float, float] | None = None
                         ) -> offline.OfflineInstance:
        tx, rc = self.traces()
        k = len(tx.values)
        cap_tx, cap_rc = caps if caps else (math.inf, math.inf)
        return offline.OfflineInstance(
            k, tuple(float(v) for v in tx.values[:k - 1]),
            tuple(float(v) for v in rc.values[:k - 1]),
            self.cost_tx, self.cost_rc, self.efficiency,
            RewardCurve(self.snr_scale), cap_tx=cap_tx, cap_rc=cap_rc)

    def surrogates(self):
        cfg = self.system()
        reward = RewardCurve(self.snr_scale)
        return (build_surrogate(self.cost_tx, reward, cfg.rho_max),
                build_surrogate(self.cost_rc, reward, cfg.rho_max))

    def bound_input(self) -> bounds_mod.BoundInput:
        s_tx, s_rc = self.surrogates()
        mean_tx = self.trace_tx.mean if self.trace_tx else self.arrivals_tx.mean
        mean_rc = self.trace_rc.mean if self.trace_rc else self.arrivals_rc.mean
        return bounds_mod.BoundInput(s_tx, s_rc, mean_tx, mean_rc,
                                     self.efficiency, RewardCurve(self.snr_scale))


def load_config(path: str | Path) -> ExperimentConfig:
    with open(path) as fh:
        raw = json.load(fh)
    return config_from_raw(raw)


def config_from_raw(raw: dict) -> ExperimentConfig:
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version!r}")
    required = ("snr_scale", "efficiency", "e_max_tx", "e_max_rc", "tx", "rc")
    for key in required:
        if key not in raw:
            raise ConfigError(f"config is missing {key!r}")
    exp = ExperimentConfig(
        raw=raw,
        snr_scale=float(raw["snr_scale"]),
        efficiency=float(raw["efficiency"]),
        e_max_tx=int(raw["e_max_tx"]),
        e_max_rc=int(raw["e_max_rc"]),
        horizon=int(raw.get("horizon", 10_000)),
        seed=int(raw.get("seed", 0)),
        slot_seconds=float(raw.get("slot_seconds", 1.0)),
        panel_area_cm2=float(raw.get("panel_area_cm2", 1.0)),
        quantum_uw_per_cm2=float(raw.get("quantum_uw_per_cm2", 1.0)),
        rho_max=raw.get("rho_max"),
    )
    cap_j_tx, cap_j_rc = raw.get("cap_joules_tx"), raw.get("cap_joules_rc")
    if cap_j_tx is not None and cap_j_rc is not None:
        per_quantum_tx = float(cap_j_tx) / exp.e_max_tx
        per_quantum_rc = float(cap_j_rc) / exp.e_max_rc
        if abs(per_quantum_tx - per_quantum_rc) > 1e-9 * max(per_quantum_tx, per_quantum_rc):
            raise ConfigError(
                "Joule caps disagree on the quantum size: "
                f"{per_quantum_tx} J vs {per_quantum_rc} J per quantum")
    exp.cost_tx = _build_cost(raw["tx"]["cost"], exp.snr_scale)
    exp.cost_rc = _build_cost(raw["rc"]["cost"], exp.snr_scale)
    exp.arrivals_tx, exp.trace_tx = _build_arrivals(raw["tx"]["arrivals"], exp, "tx")
    exp.arrivals_rc, exp.trace_rc = _build_arrivals(raw["rc"]["arrivals"], exp, "rc")
    return exp


def _apply_overrides(exp: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    if getattr(args, "beta", None) is not None:
        exp.efficiency = args.beta
    if getattr(args, "snr_scale", None) is not None:
        exp.snr_scale = args.snr_scale
        exp.cost_tx = _build_cost(exp.raw["tx"]["cost"], exp.snr_scale)
        exp.cost_rc = _build_cost(exp.raw["rc"]["cost"], exp.snr_scale)
    if getattr(args, "emax_tx", None) is not None:
        exp.e_max_tx = args.emax_tx
    if getattr(args, "emax_rc", None) is not None:
        exp.e_max_rc = args.emax_rc
    if getattr(args, "horizon", None) is not None:
        exp.horizon = args.horizon
    if getattr(args, "seed", None) is not None:
        exp.seed = args.seed
    if getattr(args, "no_et", False):
        exp.allow_transfer = False
    return exp


# ---------------------------------------------------------------------------
# Policies by name
# ---------------------------------------------------------------------------

def build_policy(name: str, exp: ExperimentConfig) -> OnlinePolicy:
    cfg = exp.system()
    if name == "op-on":
        policy, _ = policy_iteration(cfg)
        return policy
    if name == "gp":
        return heuristics.tabulate(heuristics.greedy_policy, cfg)
    if name == "bp":
        return heuristics.tabulate(heuristics.balanced_policy, cfg)
    if name == "zero":
        return heuristics.tabulate(lambda s, c: heuristics.Action(0.0, 0), cfg)
    if name == "lcp":
        et = bounds_mod.upper_bound_et(exp.bound_input())
        mean_rc = exp.arrivals_rc.mean
        return heuristics.tabulate(
            lambda s, c: heuristics.low_complexity_policy(s, c, et.keep_fraction, mean_rc), cfg)
    if name == "threshold":
        if exp.allow_transfer:
            et = bounds_mod.upper_bound_et(exp.bound_input())
            return heuristics.tabulate(
                lambda s, c: heuristics.threshold_policy_et(s, c, et.keep_fraction), cfg)
        return heuristics.tabulate(heuristics.threshold_policy_no_et, cfg)
    raise ConfigError(f"unknown policy {name!r}")


POLICY_NAMES = ("op-on", "gp", "bp", "lcp", "threshold", "zero")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _write_json(path: str | None, payload: dict) -> None:
    if path:
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_rows(path: str, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _bounds_payload(exp: ExperimentConfig) -> dict:
    inp = exp.bound_input()
    no_et = bounds_mod.upper_bound_no_et(inp)
    et = bounds_mod.upper_bound_et(inp)
    return {"no_et": no_et, "et": et.value, "keep_fraction": et.keep_fraction,
            "usable_tx": et.usable_tx, "usable_rc": et.usable_rc}


def cmd_bounds(args) -> int:
    exp = _apply_overrides(load_config(args.config), args)
    payload = _bounds_payload(exp)
    print(f"no_et_bound {payload['no_et']:.6f}")
    print(f"et_bound {payload['et']:.6f}")
    print(f"keep_fraction {payload['keep_fraction']:.6f}")
    _write_json(args.out, {"schema_version": SCHEMA_VERSION, "bounds": payload})
    return 0


def cmd_solve_online(args) -> int:
    exp = _apply_overrides(load_config(args.config), args)
    policy, evaluation = policy_iteration(exp.system())
    print(f"gain {evaluation.gain:.6f}")
    _write_json(args.out, {
        "schema_version": SCHEMA_VERSION,
        "gain": evaluation.gain,
        "allow_transfer": exp.allow_transfer,
        "policy": {"rho": policy.rho.tolist(), "d": policy.d.tolist()},
    })
    return 0


def cmd_solve_offline(args) -> int:
    exp = _apply_overrides(load_config(args.config), args)
    caps = None if args.infinite else (float(exp.e_max_tx), float(exp.e_max_rc))
    inst = exp.offline_instance(caps)
    if args.infinite:
        plan = offline.solve_offline_infinite(inst, allow_transfer=exp.allow_transfer)
    else:
        plan = offline.solve_offline_finite(inst, allow_transfer=exp.allow_transfer)
    print(f"objective {plan.objective:.6f}")
    print(f"residual {plan.residual:.3e}")
    if args.out:
        _write_rows(args.out, ["slot", "power", "transfer", "e_tx", "e_rc"],
                    offline.plan_rows(plan, inst))
    return 0


def cmd_simulate(args) -> int:
    exp = _apply_overrides(load_config(args.config), args)
    policy = build_policy(args.policy, exp)
    tx, rc = exp.traces()
    result = sim.simulate(policy, tx, rc, exp.system())
    print(f"reward {result.reward:.6f}")
    print(f"outage_tx {result.outage_tx} outage_rc {result.outage_rc}")
    print(f"overflow_tx {result.overflow_tx} overflow_rc {result.overflow_rc}")
    if args.out:
        _write_rows(args.out, ["slot", "e_tx", "e_rc", "rho", "d", "b_tx", "b_rc"],
                    result.rows())
    return 0


def cmd_compare(args) -> int:
    exp = _apply_overrides(load_config(args.config), args)
    names = [n.strip() for n in args.policies.split(",") if n.strip()]
    policies = {name: build_policy(name, exp) for name in names}
    tx, rc = exp.traces()
    payload = _bounds_payload(exp)
    rows = sim.compare(policies, tx, rc, exp.system(),
                       bound_no_et=payload["no_et"], bound_et=payload["et"])
    for row in rows:
        print(f"{row['policy']:<10} reward {row['reward']:.6f} "
              f"ratio {row['ratio_to_best']:.4f}")
    _write_json(args.out, {"schema_version": SCHEMA_VERSION, "bounds": payload,
                           "results": rows})
    return 0


def _sweep_config(exp: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    raw = json.loads(json.dumps(exp.raw))
    if axis == "lambda":
        raw["snr_scale"] = value
        for side in ("tx", "rc"):
            raw[side]["cost"].pop("snr_scale", None)
    elif axis == "zeta":
        for side in ("tx", "rc"):
            if "fixed_cost" not in raw[side]["cost"]:
                raise ConfigError("zeta sweep needs circuitry cost models")
            raw[side]["cost"]["fixed_cost"] = value
    elif axis == "emax-tx":
        raw["e_max_tx"] = int(value)
    else:
        raise ConfigError(f"unknown sweep axis {axis!r}")
    return config_from_raw(raw)


def cmd_report(args) -> int:
    exp = _apply_overrides(load_config(args.config), args)
    names = [n.strip() for n in args.policies.split(",") if n.strip()]
    policies = {name: build_policy(name, exp) for name in names}
    tx, rc = exp.traces()
    bounds_payload = _bounds_payload(exp)
    results = sim.compare(policies, tx, rc, exp.system(),
                          bound_no_et=bounds_payload["no_et"],
                          bound_et=bounds_payload["et"])

    series = []
    if args.sweep:
        values = [float(v) for v in args.sweep_values.split(",")]
        for value in values:
            swept = _apply_overrides(_sweep_config(exp, args.sweep, value), args)
            swept.allow_transfer = True
            _, ev_et = policy_iteration(swept.system())
            swept.allow_transfer = False
            _, ev_no = policy_iteration(swept.system())
            series.append({"axis": args.sweep, "value": value,
                           "gain_et": ev_et.gain, "gain_no_et": ev_no.gain,
                           "improvement": sim.improvement(ev_et.gain, ev_no.gain)})

    payload = {
        "schema_version": SCHEMA_VERSION,
        "config_echo": exp.raw,
        "bounds": bounds_payload,
        "results": results,
        "series": series,
    }
    _write_json(args.out, payload)
    if args.csv_dir:
        out_dir = Path(args.csv_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, policy in policies.items():
            result = sim.simulate(policy, tx, rc, exp.system())
            _write_rows(out_dir / f"{name}.csv",
                        ["slot", "e_tx", "e_rc", "rho", "d", "b_tx", "b_rc"],
                        result.rows())
    print(json.dumps(payload["bounds"]))
    for row in results:
        print(f"{row['policy']:<10} reward {row['reward']:.6f}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="ehlink",
                                     description="Energy-harvesting link policies")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("-c", "--config", required=True, help="experiment JSON")
        p.add_argument("--beta", type=float, help="transfer efficiency override")
        p.add_argument("--lambda", dest="snr_scale", type=float,
                       help="SNR scale override")
        p.add_argument("--emax-tx", type=int)
        p.add_argument("--emax-rc", type=int)
        p.add_argument("--horizon", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--no-et", action="store_true", help="disable energy transfer")
        p.add_argument("--out", help="output file")

    p = sub.add_parser("bounds", help="closed-form reward upper bounds")
    common(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("solve-online", help="optimal online policy via policy iteration")
    common(p)
    p.set_defaults(func=cmd_solve_online)

    p = sub.add_parser("solve-offline", help="optimal offline plan")
    common(p)
    p.add_argument("--infinite", action="store_true", help="unbounded batteries")
    p.set_defaults(func=cmd_solve_offline)

    p = sub.add_parser("simulate", help="trace-driven simulation of one policy")
    common(p)
    p.add_argument("--policy", choices=POLICY_NAMES, default="op-on")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="simulate several policies on shared traces")
    common(p)
    p.add_argument("--policies", default="op-on,gp,bp")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="bounds + comparison + optional sweeps as JSON/CSV")
    common(p)
    p.add_argument("--policies", default="op-on,gp,bp")
    p.add_argument("--sweep", choices=("lambda", "zeta", "emax-tx"))
    p.add_argument("--sweep-values", default="")
    p.add_argument("--csv-dir", help="write per-policy trajectory CSVs here")
    p.set_defaults(func=cmd_report)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, TraceParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # solver/convergence failures
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
