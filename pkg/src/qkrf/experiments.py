"""Batch experiment runner: configs, orchestration, and result emission.

Each experiment is a named, seeded recipe that builds a projective-line
model, exercises one identity or convergence statement, and writes
plain CSV artifacts plus a manifest with pass/fail metrics.  Identical
config and seed reproduce byte-identical CSVs: floats are always
written with 17 significant digits and worker threads only change the
execution order, never the collected values.

The QKRF_THREADS environment variable bounds the thread pool used for
the embarrassingly parallel per-level loops.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .energies import entropy_classical, f_k_na, s_k
from .flows import (
    euler_gap_report,
    flow_vs_krf_gap,
    format_float,
    monotonicity_probe,
    quantized_flow_run,
    slope_identity_check,
)
from .geometry import PotentialField, ProjectiveLineModel, ma_density
from .hermforms import HermForm, random_herm_pd
from .maps import balancing, project
from .nanorms import (
    dh_empirical,
    diagonal_na,
    duality_gap,
    extraction_identity_residual,
    l_na_slope,
    na_norm_value,
    random_na,
    s_k_na,
    trivial_na,
)


class ExperimentError(ValueError):
    """Invalid experiment configuration; the message carries the field path."""


# ---------------------------------------------------------------------------
# named potential families


FAMILIES = {
    "bump": lambda u, a: a * u * (1.0 - u),
    "sine": lambda u, a: a * np.sin(math.pi * u),
}


def family_potential(
    model: ProjectiveLineModel, family: str, amplitude: float
) -> PotentialField:
    """Build a named radial potential and verify it is a Kahler potential."""
    model.require_radial()
    if family not in FAMILIES:
        raise ExperimentError(f"family: unknown name {family!r}")
    phi = PotentialField(model, None, FAMILIES[family](model.u, float(amplitude)))
    ma_density(phi)
    return phi


# ---------------------------------------------------------------------------
# configuration schema


FIELD_SPECS = {
    "k": ("int", 1, 32),
    "k_max": ("int", 1, 64),
    "k_list": ("int_list", 1, 64),
    "radial_nodes": ("int", 16, 1024),
    "angular_nodes": ("int", 8, 4096),
    "family": ("choice", tuple(FAMILIES)),
    "amplitude": ("float", -0.8, 0.8),
    "t_max": ("float", 1e-9, 256.0),
    "dt": ("float", 1e-9, 1.0),
    "refine": ("int", 2, 16),
    "seed": ("int", 0, 2**31 - 1),
    "runs": ("int", 1, 64),
    "spread": ("float", 1e-6, 2.0),
    "panel": ("int", 1, 64),
    "pairs": ("int", 1, 100000),
    "slope_t_max": ("float", 10.0, 10000.0),
    "threshold": ("float", 0.0, 1.0),
    "fine_factor": ("int", 2, 4),
    "output_dir": ("str",),
}


def _validate_field(path: str, key: str, value):
    spec = FIELD_SPECS.get(key)
    if spec is None:
        raise ExperimentError(f"{path}: unknown field")
    kind = spec[0]
    if kind == "str":
        if not isinstance(value, str) or not value:
            raise ExperimentError(f"{path}: expected a nonempty string")
        return value
    if kind == "choice":
        if value not in spec[1]:
            raise ExperimentError(f"{path}: must be one of {sorted(spec[1])}")
        return value
    if kind == "int_list":
        lo, hi = spec[1], spec[2]
        if not isinstance(value, (list, tuple)) or not value:
            raise ExperimentError(f"{path}: expected a nonempty list of integers")
        out = []
        for i, item in enumerate(value):
            if isinstance(item, bool) or not isinstance(item, (int, np.integer)):
                raise ExperimentError(f"{path}[{i}]: expected an integer")
            if not lo <= item <= hi:
                raise ExperimentError(f"{path}[{i}]: {item} outside [{lo}, {hi}]")
            out.append(int(item))
        return out
    lo, hi = spec[1], spec[2]
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
            raise ExperimentError(f"{path}: expected an integer")
        value = int(value)
    else:
        if isinstance(value, bool) or not isinstance(value, (int, float, np.floating)):
            raise ExperimentError(f"{path}: expected a real number")
        value = float(value)
    if not lo <= value <= hi:
        raise ExperimentError(f"{path}: {value} outside [{lo}, {hi}]")
    return value


DEFAULTS = {
    "balanced-fixed-point": {
        "k_max": 6, "radial_nodes": 96, "angular_nodes": 32,
    },
    "euler-gap": {
        "k_list": [2, 4, 8, 16], "radial_nodes": 96, "angular_nodes": 72,
        "family": "bump", "amplitude": 0.3, "t_max": 1.0, "refine": 4,
    },
    "thmA-gap": {
        "k_list": [4, 8, 16, 32], "radial_nodes": 128, "angular_nodes": 136,
        "family": "bump", "amplitude": 0.3, "t_max": 1.0, "refine": 2,
        "fine_factor": 2,
    },
    "thmB-entropy": {
        "k_list": [2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12],
        "radial_nodes": 128, "angular_nodes": 56,
        "family": "bump", "amplitude": 0.5, "threshold": 0.02, "fine_factor": 2,
    },
    "slope-identity": {
        "k": 2, "radial_nodes": 96, "angular_nodes": 16,
        "family": "bump", "amplitude": 0.3, "t_max": 1.0, "dt": 0.05,
    },
    "monotonicity": {
        "k": 2, "radial_nodes": 96, "angular_nodes": 16,
        "runs": 5, "spread": 0.5, "t_max": 2.0, "dt": 0.01,
    },
    "duality": {
        "k_list": [1, 2], "radial_nodes": 96, "angular_nodes": 24,
        "family": "bump", "amplitude": 0.3, "t_max": 12.0,
        "panel": 5, "slope_t_max": 40.0,
    },
    "na-panel": {
        "k_list": [1, 2], "radial_nodes": 96, "angular_nodes": 24,
        "pairs": 1000, "slope_t_max": 40.0,
    },
}

DESCRIPTIONS = {
    "balanced-fixed-point": "round-metric Gram is a balancing fixed point, k = 1..k_max",
    "euler-gap": "Bergman iterates track the integrated flow at rate 1/k",
    "thmA-gap": "quantized potentials track the classical flow at rate 1/k",
    "thmB-entropy": "quantized entropy converges to the classical entropy",
    "slope-identity": "entropy equals minus the slope of L along the flow",
    "monotonicity": "asymptotic entropy monotonicity bound along seeded runs",
    "duality": "flow infimum of the entropy against extracted ultrametric norms",
    "na-panel": "ultrametric axioms, jump-measure moments, and ray slopes",
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    params: dict

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        if not isinstance(payload, dict):
            raise ExperimentError("config: expected a JSON object")
        name = payload.get("experiment")
        if name not in DEFAULTS:
            known = ", ".join(sorted(DEFAULTS))
            raise ExperimentError(f"experiment: must be one of {known}")
        params = dict(DEFAULTS[name])
        params.setdefault("seed", 0)
        params.setdefault("output_dir", str(Path("runs") / name))
        for key, value in payload.items():
            if key == "experiment":
                continue
            if key not in params:
                raise ExperimentError(f"{name}.{key}: unknown field")
            params[key] = _validate_field(f"{name}.{key}", key, value)
        return cls(name, params)

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, **self.params}


# ---------------------------------------------------------------------------
# manifest


@dataclass
class RunManifest:
    experiment: str
    config: dict
    version: str
    wall_clock_seconds: float
    metrics: list
    artifacts: list
    passed: bool

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.__dict__, fh, indent=2)

    @staticmethod
    def from_json(path) -> "RunManifest":
        with open(path) as fh:
            payload = json.load(fh)
        return RunManifest(**payload)

    def summary_lines(self) -> list:
        lines = []
        for m in self.metrics:
            status = "PASS" if m["passed"] else "FAIL"
            lines.append(
                f"{status} {self.experiment}:{m['name']} "
                f"value={m['value']:.6g} {m['op']} {m['threshold']:.6g}"
            )
        return lines


def make_metric(name: str, value: float, threshold: float, op: str) -> dict:
    if op not in ("<=", ">="):
        raise ExperimentError(f"metric {name}: unknown comparison {op!r}")
    value = float(value)
    if math.isnan(value):
        ok = False
    elif op == "<=":
        ok = value <= threshold
    else:
        ok = value >= threshold
    return {
        "name": name,
        "value": value,
        "threshold": float(threshold),
        "op": op,
        "passed": bool(ok),
    }


def metric_passes(m: dict) -> bool:
    value, threshold, op = float(m["value"]), float(m["threshold"]), m["op"]
    if math.isnan(value):
        return False
    return value <= threshold if op == "<=" else value >= threshold


# ---------------------------------------------------------------------------
# shared utilities


def _thread_count() -> int:
    raw = os.environ.get("QKRF_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError as exc:
        raise ExperimentError(f"QKRF_THREADS: not an integer ({raw!r})") from exc


def _parallel_map(fn: Callable, items: Sequence) -> list:
    items = list(items)
    workers = min(_thread_count(), max(1, len(items)))
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def write_table_csv(path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    def cell(x) -> str:
        if isinstance(x, (bool, np.bool_)):
            return "1" if x else "0"
        if isinstance(x, (int, np.integer)):
            return str(int(x))
        if isinstance(x, (float, np.floating)):
            return format_float(x)
        return str(x)

    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(cell(x) for x in row) + "\n")


def fit_decay(k_values: Sequence[int], errors: Sequence[float]) -> tuple:
    """Least-squares slope of log error against log k, with a half-width.

    The half-width is the standard error of the slope estimated from the
    fit residuals; an exact power law returns a slope at round-off level.
    """
    k = np.asarray(k_values, dtype=float)
    err = np.asarray(errors, dtype=float)
    if k.size < 3:
        raise ExperimentError("rate fitting needs at least three points")
    if np.any(err <= 0.0) or not np.all(np.isfinite(err)):
        raise ExperimentError("rate fitting needs positive finite errors")
    x = np.log(k)
    y = np.log(err)
    design = np.column_stack([x, np.ones_like(x)])
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    dof = max(1, k.size - 2)
    sigma2 = float(resid @ resid) / dof
    spread = float(np.sum((x - x.mean()) ** 2))
    half_width = math.sqrt(sigma2 / spread) if spread > 0 else float("inf")
    return float(coef[0]), half_width


def entropy_convergence_report(
    model: ProjectiveLineModel,
    phi0: PotentialField,
    k_list: Sequence[int],
    fine_factor: int = 2,
    decreasing_from: int = 4,
) -> dict:
    """Rows (k, S_k(p_k(phi0)), S(phi0), |difference|) with a refined oracle.

    The classical entropy is taken from a grid ``fine_factor`` times
    finer; the same refinement controls the discretization of each S_k.
    """
    model.require_radial()
    k_values = sorted(set(int(k) for k in k_list))
    fine_model = ProjectiveLineModel(
        k_max=model.k_max,
        radial_nodes=fine_factor * model.radial_count,
        angular_nodes=model.angular_count,
    )
    psi = phi0.require_profile()
    fine_phi = PotentialField(
        fine_model, None, model.interpolate_radial(psi, fine_model.u)
    )
    s_classical = entropy_classical(fine_phi)
    s_coarse = entropy_classical(phi0)

    def one_level(k: int) -> tuple:
        coarse = s_k(model, project(phi0, k))
        fine = s_k(fine_model, project(fine_phi, k))
        return coarse, fine

    pairs = _parallel_map(one_level, k_values)
    s_k_values = [p[0] for p in pairs]
    s_k_fine = [p[1] for p in pairs]
    diffs = [abs(v - s_classical) for v in s_k_values]
    tail = [d for k, d in zip(k_values, diffs) if k >= decreasing_from]
    worst_increase = max(np.diff(tail)) if len(tail) > 1 else 0.0
    return {
        "k_values": k_values,
        "s_k": s_k_values,
        "s_k_fine": s_k_fine,
        "s_classical": s_classical,
        "s_classical_coarse": s_coarse,
        "diffs": diffs,
        "worst_tail_increase": float(worst_increase),
        "final_ratio": float(diffs[-1] / s_classical) if s_classical > 0 else 0.0,
        "resolution_control": float(
            max(abs(a - b) for a, b in zip(s_k_values, s_k_fine))
        ),
    }


# ---------------------------------------------------------------------------
# experiment runners


def _model_from(params: dict, k_top: int) -> ProjectiveLineModel:
    return ProjectiveLineModel(
        k_max=k_top,
        radial_nodes=params["radial_nodes"],
        angular_nodes=params["angular_nodes"],
    )


def _run_balanced_fixed_point(params: dict, out: Path) -> tuple:
    model = _model_from(params, params["k_max"])
    zero = model.zero_potential()

    def one_level(k: int) -> tuple:
        h = project(zero, k)
        b = balancing(model, h)
        residual = float(
            np.linalg.norm(b.entries - h.entries) / np.linalg.norm(h.entries)
        )
        return k, residual, s_k(model, h, balanced=b)

    rows = _parallel_map(one_level, list(model.levels))
    gram = project(zero, 1).diagonal()
    oracle = np.array([1.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0])
    gram_error = float(np.max(np.abs(gram - oracle)))
    write_table_csv(out / "balanced-fixed-point.csv", ["k", "residual", "s_k"], rows)
    metrics = [
        make_metric("fixed_point_residual", max(r[1] for r in rows), 1e-9, "<="),
        make_metric("fixed_point_entropy", max(r[2] for r in rows), 1e-9, "<="),
        make_metric("gram_k1_oracle", gram_error, 1e-10, "<="),
    ]
    return metrics, ["balanced-fixed-point.csv"]


def _run_euler_gap(params: dict, out: Path) -> tuple:
    k_values = sorted(set(params["k_list"]))
    model = _model_from(params, max(k_values))
    phi0 = family_potential(model, params["family"], params["amplitude"])

    def one_level(k: int) -> float:
        report = euler_gap_report(
            model, phi0, params["t_max"], [k], refine=params["refine"]
        )
        return report["errors"][0]

    errors = _parallel_map(one_level, k_values)
    slope, half_width = fit_decay(k_values, errors)
    write_table_csv(
        out / "euler-gap.csv", ["k", "error"], list(zip(k_values, errors))
    )
    write_table_csv(
        out / "euler-gap-fit.csv", ["slope", "half_width"], [[slope, half_width]]
    )
    metrics = [
        make_metric("euler_gap_slope", slope, -0.8, "<="),
    ]
    return metrics, ["euler-gap.csv", "euler-gap-fit.csv"]


def _run_thma_gap(params: dict, out: Path) -> tuple:
    k_values = sorted(set(params["k_list"]))
    model = _model_from(params, max(k_values))
    phi0 = family_potential(model, params["family"], params["amplitude"])
    report = flow_vs_krf_gap(
        model,
        phi0,
        params["t_max"],
        k_values,
        refine=params["refine"],
        resolution_factor=params["fine_factor"],
    )
    write_table_csv(
        out / "thmA-gap.csv",
        ["k", "error"],
        list(zip(report["k_values"], report["errors"])),
    )
    write_table_csv(
        out / "thmA-consistency.csv",
        ["resolution_gap", "slope", "slope_half_width"],
        [[report["resolution_gap"], report["slope"], report["slope_half_width"]]],
    )
    metrics = [
        make_metric("thma_slope", report["slope"], -0.8, "<="),
        make_metric("thma_resolution_gap", report["resolution_gap"], 1e-5, "<="),
    ]
    return metrics, ["thmA-gap.csv", "thmA-consistency.csv"]


def _run_thmb_entropy(params: dict, out: Path) -> tuple:
    k_values = sorted(set(params["k_list"]))
    model = _model_from(params, max(k_values))
    phi0 = family_potential(model, params["family"], params["amplitude"])
    report = entropy_convergence_report(
        model, phi0, k_values, fine_factor=params["fine_factor"]
    )
    rows = [
        (k, sk, report["s_classical"], d, skf)
        for k, sk, d, skf in zip(
            report["k_values"], report["s_k"], report["diffs"], report["s_k_fine"]
        )
    ]
    write_table_csv(
        out / "thmB-entropy.csv", ["k", "S_k", "S", "abs_diff", "S_k_fine"], rows
    )

    zero = model.zero_potential()
    zero_rows = _parallel_map(
        lambda k: (k, s_k(model, project(zero, k))), k_values
    )
    write_table_csv(out / "thmB-zero.csv", ["k", "S_k"], zero_rows)

    metrics = [
        make_metric("thmb_tail_increase", report["worst_tail_increase"], 0.0, "<="),
        make_metric("thmb_final_ratio", report["final_ratio"], params["threshold"], "<="),
        make_metric("thmb_zero_case", max(r[1] for r in zero_rows), 1e-8, "<="),
        make_metric("thmb_resolution_control", report["resolution_control"], 1e-8, "<="),
    ]
    return metrics, ["thmB-entropy.csv", "thmB-zero.csv"]


def _run_slope_identity(params: dict, out: Path) -> tuple:
    k = params["k"]
    model = _model_from(params, k)
    phi0 = family_potential(model, params["family"], params["amplitude"])
    h0 = project(phi0, k)
    artifacts = []
    results = []
    last_trace = None
    for label, dt in (("coarse", params["dt"]), ("fine", params["dt"] / 2.0)):
        last_trace = quantized_flow_run(model, h0, params["t_max"], dt)
        check = slope_identity_check(last_trace)
        prefix = out / f"slope-identity-{label}"
        last_trace.save(str(prefix))
        artifacts += [f"slope-identity-{label}.json", f"slope-identity-{label}.csv"]
        results.append((label, dt, check["max_residual"]))
    ratio = results[0][2] / results[1][2]
    write_table_csv(
        out / "slope-identity.csv", ["grid", "dt", "max_residual"], results
    )
    identity_residual = max(
        extraction_identity_residual(model, last_trace, t)
        for t in last_trace.times[:3]
    )
    metrics = [
        make_metric("slope_identity_ratio_low", ratio, 1.5, ">="),
        make_metric("slope_identity_ratio_high", ratio, 2.5, "<="),
        make_metric("slope_identity_algebra", identity_residual, 1e-9, "<="),
    ]
    return metrics, ["slope-identity.csv"] + artifacts


def _run_monotonicity(params: dict, out: Path) -> tuple:
    k = params["k"]
    model = _model_from(params, k)
    n = model.nk(k)

    def one_run(i: int) -> tuple:
        rng = np.random.default_rng([params["seed"], i])
        h0 = HermForm(k, random_herm_pd(rng, n, spread=params["spread"]))
        trace = quantized_flow_run(model, h0, params["t_max"], params["dt"])
        probe = monotonicity_probe(trace)
        prefix = out / f"monotonicity-run{i}"
        trace.save(str(prefix))
        return i, probe["worst"], probe["slack"], probe["worst"] - probe["slack"]

    rows = _parallel_map(one_run, range(params["runs"]))
    write_table_csv(
        out / "monotonicity.csv", ["run", "worst_margin", "slack", "excess"], rows
    )
    artifacts = ["monotonicity.csv"] + [
        f"monotonicity-run{i}.{ext}" for i, *_ in rows for ext in ("json", "csv")
    ]
    metrics = [
        make_metric("monotonicity_excess", max(r[3] for r in rows), 0.0, "<="),
    ]
    return metrics, artifacts


def _run_duality(params: dict, out: Path) -> tuple:
    k_values = sorted(set(params["k_list"]))
    model = _model_from(params, max(k_values))
    phi0 = family_potential(model, params["family"], params["amplitude"])

    def one_level(k: int) -> dict:
        return duality_gap(
            model,
            k,
            phi0,
            t_max=params["t_max"],
            panel=params["panel"],
            seed=params["seed"] + k,
            slope_t_max=params["slope_t_max"],
        )

    reports = _parallel_map(one_level, k_values)
    metrics = []
    artifacts = []
    for report in reports:
        k = report["k"]
        write_table_csv(
            out / f"duality-extracted-k{k}.csv",
            ["t", "identity_residual", "s_na", "uncertainty", "base_spread"],
            [
                (e["t"], e["identity_residual"], e["s_na"], e["uncertainty"], e["base_spread"])
                for e in report["extracted"]
            ],
        )
        write_table_csv(
            out / f"duality-panel-k{k}.csv",
            ["kind", "s_na", "minus_s_na", "uncertainty", "one_sided_ok"],
            [
                (r["kind"], r["s_na"], r["minus_s_na"], r["uncertainty"], r["one_sided_ok"])
                for r in report["panel"]
            ],
        )
        artifacts += [f"duality-extracted-k{k}.csv", f"duality-panel-k{k}.csv"]
        worst_identity = max(e["identity_residual"] for e in report["extracted"])
        metrics += [
            make_metric(f"duality_min_s_k_k{k}", report["min_s_k"], 0.01, "<="),
            make_metric(
                f"duality_panel_max_k{k}", report["panel_max_minus_s_na"], 0.05, "<="
            ),
            make_metric(
                f"duality_panel_min_k{k}", report["panel_max_minus_s_na"], -0.05, ">="
            ),
            make_metric(
                f"duality_one_sided_k{k}", 1.0 if report["one_sided_all"] else 0.0, 1.0, ">="
            ),
            make_metric(f"duality_identity_k{k}", worst_identity, 1e-9, "<="),
        ]
    return metrics, artifacts


def _run_na_panel(params: dict, out: Path) -> tuple:
    k_values = sorted(set(params["k_list"]))
    model = _model_from(params, max(k_values))
    rng = np.random.default_rng(params["seed"])
    rows = []

    violations = 0
    for k in k_values:
        n = model.nk(k)
        for trial in range(params["pairs"] // len(k_values)):
            nu = random_na(rng, model, k, spread=1.0, diagonal=trial % 2 == 0)
            a = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
            lhs = na_norm_value(nu, a + b)
            rhs = max(na_norm_value(nu, a), na_norm_value(nu, b))
            scale_dev = abs(
                na_norm_value(nu, (2.0 - 1.5j) * a) - na_norm_value(nu, a)
            )
            if lhs > rhs or scale_dev != 0.0:
                violations += 1
    rows.append(("ultrametric_violations", float(violations), 0.0))

    probe = diagonal_na(model, 1, [2.0, 1.0, 0.0])
    dh = dh_empirical(probe)
    dh_dev = max(
        abs(dh.mean - 1.0), abs(dh.second_moment - math.sqrt(2.0 / 3.0))
    )
    rows.append(("dh_moment_deviation", dh_dev, 1e-12))

    f_oracle = -math.log((1.0 + math.exp(-1.0) + math.exp(-2.0)) / 3.0)
    f_dev = abs(f_k_na(diagonal_na(model, 1, [0.0, 1.0, 2.0])) - f_oracle)
    rows.append(("free_energy_oracle", f_dev, 1e-12))

    base = project(model.zero_potential(), 1)
    trivial_slope = l_na_slope(model, trivial_na(model, 1), base, params["slope_t_max"])
    rows.append(("trivial_slope", abs(trivial_slope.value), 1e-9))
    const = diagonal_na(model, 1, [0.7, 0.7, 0.7])
    const_slope = l_na_slope(model, const, base, params["slope_t_max"])
    rows.append(("constant_slope_deviation", abs(const_slope.value - 0.7), 1e-9))

    monomial = diagonal_na(model, 1, [1.0, 0.0, 0.0])
    near = l_na_slope(model, monomial, base, params["slope_t_max"])
    far = l_na_slope(model, monomial, base, 2.0 * params["slope_t_max"])
    stability = abs(near.value - far.value)
    rows.append(("slope_t_stability", stability, max(near.uncertainty, 1e-3)))
    rows.append(("slope_uncertainty", near.uncertainty, 1e-3))

    k_t = max(k_values)
    base_t = project(model.zero_potential(), k_t)
    nu_t = random_na(rng, model, k_t, spread=0.8)
    before = s_k_na(model, nu_t, base_t, t_max=params["slope_t_max"])
    after = s_k_na(model, nu_t.shifted(1.7), base_t, t_max=params["slope_t_max"])
    translation_dev = abs(after.value - before.value)
    translation_tol = before.uncertainty + after.uncertainty + 1e-6
    rows.append(("translation_invariance", translation_dev, translation_tol))

    write_table_csv(out / "na-panel.csv", ["check", "value", "bound"], rows)
    metrics = [
        make_metric(f"na_{name}", value, bound, "<=") for name, value, bound in rows
    ]
    return metrics, ["na-panel.csv"]


RUNNERS = {
    "balanced-fixed-point": _run_balanced_fixed_point,
    "euler-gap": _run_euler_gap,
    "thmA-gap": _run_thma_gap,
    "thmB-entropy": _run_thmb_entropy,
    "slope-identity": _run_slope_identity,
    "monotonicity": _run_monotonicity,
    "duality": _run_duality,
    "na-panel": _run_na_panel,
}


def run_experiment(config, output_dir: Optional[str] = None) -> RunManifest:
    """Execute a named experiment and write its artifacts and manifest."""
    cfg = (
        config
        if isinstance(config, ExperimentConfig)
        else ExperimentConfig.from_dict(config)
    )
    out = Path(output_dir) if output_dir else Path(cfg.params["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    metrics, artifacts = RUNNERS[cfg.experiment](cfg.params, out)
    elapsed = time.perf_counter() - start
    from qkrf import __version__

    manifest = RunManifest(
        experiment=cfg.experiment,
        config=cfg.to_dict(),
        version=__version__,
        wall_clock_seconds=float(elapsed),
        metrics=metrics,
        artifacts=sorted(set(artifacts)),
        passed=bool(all(m["passed"] for m in metrics)),
    )
    manifest.to_json(out / "manifest.json")
    return manifest
