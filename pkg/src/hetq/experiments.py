"""Declarative experiments: spec files in, CSV tables out."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .analytics import DEFAULT_EPS_TOL, policy_performance, service_profile, stationary_distribution
from .errors import InvalidConfig, InvalidPolicy
from .model import PolicySpec, SystemParams, validate_params
from .pareto import INFINITE, frontier_sweep, load_bounds
from .sim import SimConfig, limit_values, simulate, static_config, threshold_config
from .subpolicy import SubPolicy, blocking_bounds, cd_blocking, static_blocking

SCHEMA_VERSION = 1
KINDS = ("scatter", "frontier", "convergence", "static_vs_dynamic")


@dataclass(frozen=True)
class Table:
    columns: tuple[str, ...]
    rows: list[tuple]
    config: dict
    seed: int | None = None

    def config_hash(self) -> str:
        text = json.dumps(self.config, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# config_sha256={self.config_hash()} seed={'none' if self.seed is None else self.seed}\r\n")
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([_fmt(x) for x in row])
        return buf.getvalue()


def _fmt(x: Any) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return repr(x)
    return str(x)


def load_spec(path: str | Path) -> dict:
    """Read a YAML or JSON spec file and check its schema version."""
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise InvalidConfig(f"cannot parse {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidConfig(f"{path}: top level must be a mapping")
    if data.get("schema") != SCHEMA_VERSION:
        raise InvalidConfig(f"{path}: expected 'schema: {SCHEMA_VERSION}', got {data.get('schema')!r}")
    return data


def _require(spec: dict, *keys: str) -> None:
    missing = [k for k in keys if k not in spec]
    if missing:
        raise InvalidConfig(f"spec of kind {spec.get('kind')!r} is missing {missing}")


def _params(spec: dict) -> SystemParams:
    try:
        return validate_params(SystemParams.from_dict(spec["params"]))
    except (KeyError, TypeError) as exc:
        raise InvalidConfig(f"bad params block: {exc!r}") from exc


def _catalog(spec: dict) -> list[SubPolicy]:
    try:
        return [SubPolicy.from_dict(s) for s in spec.get("catalog", [])]
    except (KeyError, TypeError, InvalidPolicy) as exc:
        raise InvalidConfig(f"bad catalog: {exc}") from exc


def _grid(value: Any) -> list[float]:
    """A list of numbers, or ``{start, stop, num}`` for an inclusive linear grid."""
    if isinstance(value, dict):
        return [float(x) for x in np.linspace(float(value["start"]), float(value["stop"]), int(value["num"]))]
    return [float(x) for x in value]


def _level(entry: Any, rho_eps: float) -> float:
    if isinstance(entry, (int, float)):
        return float(entry)
    return static_blocking(SubPolicy.from_dict(entry), rho_eps)


def policy_from_spec(spec: dict, params: SystemParams) -> PolicySpec:
    """Policy block: levels are bare blocking probabilities or sub-policy mappings."""
    try:
        block = spec["policy"]
        prefix = [_level(x, params.rho_eps) for x in block.get("prefix", [])]
        tail = _level(block["tail"], params.rho_eps)
    except (KeyError, TypeError) as exc:
        raise InvalidConfig(f"bad policy block: {exc!r}") from exc
    levels = prefix + [tail]
    d_min = float(block.get("d_min", min(levels)))
    d_max = float(block.get("d_max", max(levels)))
    return PolicySpec.from_levels(prefix, tail, d_min, d_max)


def run_analyze(spec: dict, eps_tol: float = DEFAULT_EPS_TOL) -> Table:
    params = _params(spec)
    policy = policy_from_spec(spec, params)
    profile = service_profile(policy, params)
    dist = stationary_distribution(profile, eps_tol)
    en, pb = policy_performance(policy, params, eps_tol)
    rows = [("expected_n", -1, en), ("blocking", -1, pb), ("tail_mass", -1, dist.tail_mass_bound)]
    for j, pj in enumerate(dist.probs):
        rows.append(("pi", j, float(pj)))
    for j in range(len(dist.probs)):
        rows.append(("d", j, policy.d[j]))
    config = {"params": params.to_dict(), "policy": policy.to_dict(), "eps_tol": eps_tol}
    return Table(("quantity", "state", "value"), rows, config)


def _bounds_from(spec: dict, params: SystemParams) -> tuple[float, float]:
    if "d_min" in spec and "d_max" in spec:
        return float(spec["d_min"]), float(spec["d_max"])
    catalog = _catalog(spec)
    return blocking_bounds(catalog, params.rho_eps)


def run_frontier(spec: dict) -> Table:
    _require(spec, "params", "C_grid")
    params = _params(spec)
    d_min, d_max = _bounds_from(spec, params)
    bounds = load_bounds(d_min, d_max, params)
    points = frontier_sweep(_grid(spec["C_grid"]), bounds, d_min, d_max, params)
    rows = [
        (p.C, "inf" if p.policy.L == INFINITE else int(p.policy.L), p.policy.d, p.expected_n, p.blocking)
        for p in points
    ]
    config = {
        "kind": "frontier",
        "params": params.to_dict(),
        "d_min": d_min,
        "d_max": d_max,
        "C_grid": _grid(spec["C_grid"]),
    }
    return Table(("C", "L", "d", "expected_n", "blocking"), rows, config)


def run_scatter(spec: dict, seed: int | None = None) -> Table:
    _require(spec, "params", "catalog")
    params = _params(spec)
    catalog = _catalog(spec)
    if not catalog:
        raise InvalidConfig("scatter needs a nonempty catalog")
    K = int(spec.get("K", next((s.K for s in catalog if s.kind == "cd"), 5)))
    n = int(spec.get("samples", 1000))
    L_max = int(spec.get("L_max", 20))
    seed = int(spec.get("seed", 0)) if seed is None else seed
    rng = np.random.Generator(np.random.Philox(seed))
    p1 = rng.random(n)
    p2 = rng.random(n)
    L = rng.integers(1, L_max + 1, n)
    rho = params.rho_eps
    rows = []
    for a, b, l in zip(p1, p2, L):
        d1, d2 = cd_blocking(float(a), K, rho), cd_blocking(float(b), K, rho)
        pol = PolicySpec.from_levels([d1] * int(l), d2, min(d1, d2), max(d1, d2))
        try:
            en, pb = policy_performance(pol, params)
        except ValueError:
            en, pb = math.nan, math.nan
        rows.append((float(a), float(b), int(l), en, pb))
    config = {"kind": "scatter", "params": params.to_dict(), "K": K, "samples": n, "L_max": L_max}
    return Table(("p1", "p2", "L", "expected_n", "blocking"), rows, config, seed)


def sim_config_from_spec(spec: dict, seed: int | None = None) -> SimConfig:
    data = dict(spec.get("sim", spec))
    if seed is not None:
        data["base_seed"] = seed
    return SimConfig.from_dict(data)


def run_simulate(spec: dict, seed: int | None = None) -> tuple[Table, str]:
    cfg = sim_config_from_spec(spec, seed)
    rep = simulate(cfg)
    en, pb = limit_values(cfg)
    rows = [
        ("blocking", -1, rep.blocking_est.value, rep.blocking_est.half_width),
        ("expected_n", -1, rep.expected_n_est.value, rep.expected_n_est.half_width),
        ("limit_blocking", -1, pb, 0.0),
        ("limit_expected_n", -1, en, 0.0),
        ("events", -1, rep.events_processed, 0.0),
        ("eps_arrivals", -1, rep.eps_arrivals, 0.0),
        ("dropped", -1, rep.dropped, 0.0),
    ]
    last = int(np.flatnonzero(rep.tau_state_occupancy > 0).max(initial=0))
    for j in range(last + 1):
        rows.append(("occupancy", j, rep.tau_state_occupancy[j], rep.occupancy_half_widths[j]))
    for j in range(last + 1):
        rows.append(("embedded", j, rep.embedded_occupancy[j], rep.embedded_half_widths[j]))
    for j in range(last + 1):
        rows.append(("up", j, int(rep.up_counts[j]), 0.0))
        rows.append(("down", j, int(rep.down_counts[j]), 0.0))
    table = Table(("metric", "state", "value", "half_width"), rows, cfg.to_dict(), cfg.base_seed)
    return table, rep.summary()


def _convergence_templates(spec: dict, seed: int | None) -> list[tuple[Any, SimConfig]]:
    base = sim_config_from_spec(spec, seed)
    thr = spec.get("thresholds")
    if not thr:
        return [("", base)]
    below = SubPolicy.from_dict(thr["below"])
    above = SubPolicy.from_dict(thr["above"])
    out = []
    for L in thr["L"]:
        cfg = replace(base, policy_prefix=(below,) * int(L), policy_tail=above)
        out.append((int(L), cfg))
    return out


def run_convergence(spec: dict, seed: int | None = None) -> Table:
    _require(spec, "sim", "mu_eps")
    mus = _grid(spec["mu_eps"])
    rows = []
    configs = []
    for label, template in _convergence_templates(spec, seed):
        limit_n, limit_b = limit_values(template)
        for mu in mus:
            cfg = template.with_mu_eps(mu)
            rep = simulate(cfg)
            b, e = rep.blocking_est, rep.expected_n_est
            rows.append((
                label, mu, cfg.params.lambda_eps,
                b.value, b.half_width, e.value, e.half_width,
                limit_b, limit_n,
                abs(b.value - limit_b) / limit_b if limit_b else math.nan,
                abs(e.value - limit_n) / limit_n if limit_n else math.nan,
            ))
            configs.append(cfg.to_dict())
    columns = (
        "L", "mu_eps", "lambda_eps", "blocking", "blocking_hw", "expected_n", "expected_n_hw",
        "limit_blocking", "limit_expected_n", "blocking_rel_err", "expected_n_rel_err",
    )
    base_seed = configs[0]["base_seed"] if configs else seed
    return Table(columns, rows, {"kind": "convergence", "runs": configs}, base_seed)


def run_static_vs_dynamic(spec: dict, seed: int | None = None) -> Table:
    """tau-static CD-(p, K) policies against CD-(1,K)/CD-(0,K) thresholds."""
    _require(spec, "sim", "static_p", "dynamic_L")
    base = sim_config_from_spec(spec, seed)
    K = int(spec.get("K", 5))
    runs = [("static", float(p), static_config(base.params, SubPolicy.cd(float(p), K))) for p in spec["static_p"]]
    runs += [
        ("dynamic", int(L), threshold_config(base.params, int(L), SubPolicy.cd(1.0, K), SubPolicy.cd(0.0, K)))
        for L in spec["dynamic_L"]
    ]
    if not any(r[0] == "static" for r in runs) or not any(r[0] == "dynamic" for r in runs):
        raise InvalidConfig("static_vs_dynamic needs at least one static and one dynamic policy")
    rows = []
    configs = []
    shared = {
        k: getattr(base, k)
        for k in (
            "eps_job_dist", "drop_on_tau_transition", "horizon_events", "horizon_time", "warmup_fraction",
            "replications", "base_seed", "batch_count", "direct_K", "max_tracked_state",
        )
    }
    for family, param, cfg in runs:
        cfg = replace(cfg, **shared)
        en, pb = limit_values(cfg)
        rep = simulate(cfg)
        b, e = rep.blocking_est, rep.expected_n_est
        rows.append((
            family, param, en, pb, e.value, e.half_width, b.value, b.half_width,
            abs(e.value - en), abs(b.value - pb),
        ))
        configs.append(cfg.to_dict())
    columns = (
        "family", "param", "limit_expected_n", "limit_blocking", "mc_expected_n", "mc_expected_n_hw",
        "mc_blocking", "mc_blocking_hw", "gap_expected_n", "gap_blocking",
    )
    return Table(columns, rows, {"kind": "static_vs_dynamic", "K": K, "runs": configs}, base.base_seed)


def run_sweep(spec: dict, seed: int | None = None) -> Table:
    kind = spec.get("kind")
    if kind == "scatter":
        return run_scatter(spec, seed)
    if kind == "frontier":
        return run_frontier(spec)
    if kind == "convergence":
        return run_convergence(spec, seed)
    if kind == "static_vs_dynamic":
        return run_static_vs_dynamic(spec, seed)
    raise InvalidConfig(f"unknown experiment kind {kind!r}; expected one of {KINDS}")
