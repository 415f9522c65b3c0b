"""Time evolution engines and their convergence reports.

Three evolutions share the FlowTrace record: the quantized flow, the
matrix ODE dQ/dt = k (log b_k(H) - Q) on Q = log H taken in the fixed
reference basis; the Bergman iteration H -> b_k(H), which coincides with
the quantized flow's Euler step of size 1/k; and the classical radial
flow d psi/dt = -rho(psi) on the projective line, where rho is the log
density of the canonical measure against the normalized volume form.

The report functions at the bottom measure how the discrete evolutions
track their continuum limits: Bergman iterates against the integrated
ODE, the quantized potentials f_k(H_t) against the classical flow, the
entropy-as-slope identity, and the asymptotic entropy monotonicity
bound.  Rates are fitted as log error against log k.

Forms produced along radial runs stay exactly diagonal, so every
spectral operation rides the elementwise paths and the iteration is
immune to the severe ill-scaling of the monomial Gram matrices at
large k.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .energies import e_k, l_functional, log_ricci_profile, ma_energy
from .geometry import (
    KahlerConeError,
    ModelError,
    PolarizedModel,
    PotentialField,
    ProjectiveLineModel,
    radial_canonical_measure,
)
from .hermforms import HermForm, PositivityError, gen_eig, log_gap, matrix_exp, matrix_log
from .maps import QuantizationError, balancing, fubini_study, project

TIME_TOL = 1e-9
SERIES_FIELDS = ("E", "L", "S", "E_k", "D_k", "S_k")
TRACE_KINDS = ("quantized", "bergman", "classical")


class FlowError(RuntimeError):
    """Time stepping failed or a state left the admissible cone."""


def format_float(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class FlowTrace:
    """Immutable record of one run: sampled times, states and functionals.

    ``states`` holds HermForms for the quantized kinds and radial
    PotentialFields for the classical kind.  ``series`` maps functional
    names to per-time arrays; extra diagnostic series besides the CSV
    columns are allowed.
    """

    kind: str
    level: Optional[int]
    times: np.ndarray
    states: list
    series: dict
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in TRACE_KINDS:
            raise FlowError(f"unknown trace kind {self.kind!r}")
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise FlowError("times must be a nonempty 1-D array")
        if times.size > 1 and np.min(np.diff(times)) <= 0.0:
            raise FlowError("times must be strictly increasing")
        if len(self.states) != times.size:
            raise FlowError("states and times differ in length")
        for name, values in self.series.items():
            if len(values) != times.size:
                raise FlowError(f"series {name!r} does not match the time grid")
        self.times = times
        self.series = {k: np.asarray(v, dtype=float) for k, v in self.series.items()}

    @property
    def size(self) -> int:
        return self.times.size

    def index_at(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > TIME_TOL:
            raise FlowError(f"time {t} not sampled (closest is {self.times[idx]})")
        return idx

    def state_at(self, t: float):
        return self.states[self.index_at(t)]

    # -- persistence ------------------------------------------------------

    def save(self, prefix: str) -> tuple[str, str]:
        """Write prefix.json (states) and prefix.csv (series); return paths."""
        json_path = f"{prefix}.json"
        csv_path = f"{prefix}.csv"
        payload = {
            "kind": self.kind,
            "level": self.level,
            "times": [float(t) for t in self.times],
            "states": [_encode_state(s) for s in self.states],
            "series": {k: [float(x) for x in v] for k, v in self.series.items()},
            "meta": self.meta,
        }
        with open(json_path, "w") as fh:
            json.dump(payload, fh)
        write_series_csv(csv_path, self.times, self.level, self.series)
        return json_path, csv_path


def _encode_state(state) -> dict:
    if isinstance(state, HermForm):
        if state.is_diagonal:
            return {"diag": [float(x) for x in state.diagonal()]}
        return {
            "re": np.real(state.entries).tolist(),
            "im": np.imag(state.entries).tolist(),
        }
    if isinstance(state, PotentialField):
        return {"profile": [float(x) for x in state.require_profile()]}
    raise FlowError(f"cannot serialize state of type {type(state).__name__}")


def _decode_state(model: PolarizedModel, kind: str, level: Optional[int], blob: dict):
    if kind == "classical":
        return PotentialField(model, None, np.asarray(blob["profile"], dtype=float))
    if "diag" in blob:
        entries = np.diag(np.asarray(blob["diag"], dtype=float)).astype(complex)
    else:
        entries = np.asarray(blob["re"], dtype=float) + 1j * np.asarray(
            blob["im"], dtype=float
        )
    return HermForm(level, entries)


def load_trace(model: PolarizedModel, json_path: str) -> FlowTrace:
    """Rebuild a trace saved by FlowTrace.save against the same model."""
    with open(json_path) as fh:
        payload = json.load(fh)
    kind = payload["kind"]
    level = payload["level"]
    states = [_decode_state(model, kind, level, blob) for blob in payload["states"]]
    series = {k: np.asarray(v, dtype=float) for k, v in payload["series"].items()}
    return FlowTrace(
        kind, level, np.asarray(payload["times"], dtype=float), states, series,
        payload.get("meta", {}),
    )


def concat_traces(first: FlowTrace, second: FlowTrace) -> FlowTrace:
    """Join a resumed segment onto its predecessor (shared endpoint dropped)."""
    if first.kind != second.kind or first.level != second.level:
        raise FlowError("traces disagree in kind or level")
    if abs(second.times[0] - first.times[-1]) > TIME_TOL:
        raise FlowError("second trace does not start where the first ends")
    keys = set(first.series) & set(second.series)
    series = {k: np.concatenate([first.series[k], second.series[k][1:]]) for k in keys}
    meta = dict(first.meta)
    meta["resumed_at"] = float(second.times[0])
    return FlowTrace(
        first.kind,
        first.level,
        np.concatenate([first.times, second.times[1:]]),
        list(first.states) + list(second.states[1:]),
        series,
        meta,
    )


def write_series_csv(path: str, times: np.ndarray, level: Optional[int], series: dict) -> None:
    """Fixed-order CSV: t,k,E,L,S,E_k,D_k,S_k with 17 significant digits."""
    k_col = int(level) if level else 0
    with open(path, "w") as fh:
        fh.write("t,k,E,L,S,E_k,D_k,S_k\n")
        for i, t in enumerate(np.asarray(times, dtype=float)):
            row = [format_float(t), str(k_col)]
            for name in SERIES_FIELDS:
                values = series.get(name)
                row.append(format_float(values[i]) if values is not None else "nan")
            fh.write(",".join(row) + "\n")


# ---------------------------------------------------------------------------
# quantized flow


def _step_count(t_span: float, dt: float, what: str) -> int:
    if dt <= 0.0:
        raise FlowError(f"{what}: step size must be positive")
    n = int(round(t_span / dt))
    if n < 1 or abs(n * dt - t_span) > TIME_TOL * max(1.0, abs(t_span)):
        raise FlowError(f"{what}: span {t_span} is not a whole number of steps {dt}")
    return n


def _quantized_samples(
    model: PolarizedModel,
    h_ref: HermForm,
    form: HermForm,
    record: dict,
    with_energies: bool,
) -> None:
    if not with_energies:
        return
    b = balancing(model, form)
    norms = gen_eig(b.entries, form.entries)
    n = norms.size
    l_value = l_functional(fubini_study(model, form))
    ek_value = e_k(form, h_ref)
    record["L"].append(l_value)
    record["E_k"].append(ek_value)
    record["D_k"].append(l_value - ek_value)
    record["S_k"].append(float(np.sum(norms * np.log(norms)) / n))
    record["relent_ref"].append(float(-np.sum(np.log(norms))))


def quantized_flow_run(
    model: PolarizedModel,
    h0: HermForm,
    t_max: float,
    dt: float,
    method: str = "rk4",
    sample_every: int = 1,
    h_ref: Optional[HermForm] = None,
    with_energies: bool = True,
    t0: float = 0.0,
) -> FlowTrace:
    """Integrate the quantized flow from h0 over [t0, t0 + t_max].

    The state is Q = log H in the reference basis; one Euler step of
    size 1/k lands exactly on b_k(H).  States are sampled every
    ``sample_every`` steps (the initial state included).  Any stage that
    leaves the positive cone aborts the run with the failure time.
    """
    if method not in ("rk4", "euler"):
        raise FlowError(f"unknown integration method {method!r}")
    if sample_every < 1:
        raise FlowError("sample_every must be at least 1")
    k = h0.level
    model.require_level(k)
    if model.nk(k) != h0.dim:
        raise ModelError("initial form does not match the section space")
    n_steps = _step_count(t_max, dt, "quantized flow")
    if n_steps % sample_every != 0:
        raise FlowError("step count is not a multiple of sample_every")
    reference = h0 if h_ref is None else h_ref

    diagonal = model.supports_radial and h0.is_diagonal

    def to_form(q) -> HermForm:
        if diagonal:
            return HermForm(k, np.diag(np.exp(q)).astype(complex))
        return HermForm(k, matrix_exp(q))

    def vector_field(q, t: float):
        try:
            form = to_form(q)
            b = balancing(model, form)
            if diagonal:
                return k * (np.log(b.diagonal()) - q)
            return k * (matrix_log(b.entries).entries - q)
        except (PositivityError, QuantizationError, KahlerConeError) as exc:
            raise FlowError(
                f"quantized flow left the positive cone near t = {t:.6f}: {exc}"
            ) from exc

    if diagonal:
        q = np.log(h0.diagonal())
    else:
        q = matrix_log(h0.entries).entries

    times = [t0]
    states = [h0]
    record = {name: [] for name in ("L", "E_k", "D_k", "S_k", "relent_ref")}
    _quantized_samples(model, reference, h0, record, with_energies)

    t = t0
    for step in range(1, n_steps + 1):
        if method == "euler":
            q = q + dt * vector_field(q, t)
        else:
            f1 = vector_field(q, t)
            f2 = vector_field(q + 0.5 * dt * f1, t + 0.5 * dt)
            f3 = vector_field(q + 0.5 * dt * f2, t + 0.5 * dt)
            f4 = vector_field(q + dt * f3, t + dt)
            q = q + (dt / 6.0) * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
        t = t0 + step * dt
        if step % sample_every == 0:
            form = to_form(q)
            times.append(t)
            states.append(form)
            _quantized_samples(model, reference, form, record, with_energies)

    series = {name: values for name, values in record.items() if values}
    meta = {
        "method": method,
        "dt": float(dt),
        "sample_dt": float(dt * sample_every),
        "diagonal_path": bool(diagonal),
        "with_energies": bool(with_energies),
    }
    return FlowTrace("quantized", k, np.asarray(times), states, series, meta)


def bergman_iterate(
    model: PolarizedModel,
    h0: HermForm,
    steps: int,
    h_ref: Optional[HermForm] = None,
    with_energies: bool = True,
) -> FlowTrace:
    """Iterate the balancing map; step j sits at time j/k."""
    if steps < 1:
        raise FlowError("need at least one iteration step")
    k = h0.level
    model.require_level(k)
    reference = h0 if h_ref is None else h_ref
    times = [0.0]
    states = [h0]
    record = {name: [] for name in ("L", "E_k", "D_k", "S_k", "relent_ref")}
    _quantized_samples(model, reference, h0, record, with_energies)
    form = h0
    for j in range(1, steps + 1):
        form = balancing(model, form)
        times.append(j / k)
        states.append(form)
        _quantized_samples(model, reference, form, record, with_energies)
    series = {name: values for name, values in record.items() if values}
    meta = {"steps": int(steps), "with_energies": bool(with_energies)}
    return FlowTrace("bergman", k, np.asarray(times), states, series, meta)


# ---------------------------------------------------------------------------
# classical radial flow


def classical_krf_run(
    model: ProjectiveLineModel,
    phi0: PotentialField,
    t_max: float,
    dt: Optional[float] = None,
    sample_dt: Optional[float] = None,
    t0: float = 0.0,
    max_restarts: int = 6,
) -> FlowTrace:
    """Integrate d psi/dt = -rho(psi) on the radial grid with RK4.

    The default step is 1/M^2 for M radial nodes, matching the stiffest
    mode of the weighted Legendre operator that drives the density term;
    the step is then snapped so a whole number of steps fits between
    samples.  If a stage leaves the Kahler cone the whole run restarts
    with the step halved, up to ``max_restarts`` times.
    """
    model.require_radial()
    if phi0.model is not model:
        raise ModelError("initial potential belongs to a different model")
    psi0 = phi0.require_profile()
    if t_max <= 0.0:
        raise FlowError("t_max must be positive")
    m = model.radial_count
    target_dt = (1.0 / (m * m)) if dt is None else float(dt)
    if target_dt <= 0.0:
        raise FlowError("step size must be positive")
    if sample_dt is None:
        n_samples = min(200, max(1, int(round(t_max / target_dt))))
        sample_dt = t_max / n_samples
    else:
        sample_dt = float(sample_dt)
        n_samples = _step_count(t_max, sample_dt, "classical flow sampling")
    steps_per_sample = max(1, int(math.ceil(sample_dt / target_dt - TIME_TOL)))

    def field_at(psi: np.ndarray) -> np.ndarray:
        return -log_ricci_profile(model, psi)

    last_error: Optional[Exception] = None
    for attempt in range(max_restarts + 1):
        h = sample_dt / steps_per_sample
        psi = psi0.copy()
        times = [t0]
        profiles = [psi0.copy()]
        try:
            for i in range(n_samples):
                for j in range(steps_per_sample):
                    f1 = field_at(psi)
                    f2 = field_at(psi + 0.5 * h * f1)
                    f3 = field_at(psi + 0.5 * h * f2)
                    f4 = field_at(psi + h * f3)
                    psi = psi + (h / 6.0) * (f1 + 2.0 * f2 + 2.0 * f3 + f4)
                times.append(t0 + (i + 1) * sample_dt)
                profiles.append(psi.copy())
            break
        except KahlerConeError as exc:
            last_error = exc
            steps_per_sample *= 2
    else:
        raise FlowError(
            f"classical flow kept leaving the Kahler cone after {max_restarts} "
            f"step halvings: {last_error}"
        )

    states = [PotentialField(model, None, p) for p in profiles]
    series = {
        "E": [ma_energy(s) for s in states],
        "L": [l_functional(s) for s in states],
        "S": [],
    }
    for p in profiles:
        rho = log_ricci_profile(model, p)
        series["S"].append(float(np.dot(radial_canonical_measure(model, p), rho)))
    s_values = np.asarray(series["S"])
    meta = {
        "dt": float(sample_dt / steps_per_sample),
        "sample_dt": float(sample_dt),
        "restarts": int(attempt),
        "max_s_increase": float(np.max(np.diff(s_values))) if s_values.size > 1 else 0.0,
    }
    return FlowTrace("classical", None, np.asarray(times), states, series, meta)


# ---------------------------------------------------------------------------
# convergence reports


def _fit(k_values: Sequence[int], errors: Sequence[float]) -> tuple[float, float]:
    if len(k_values) < 3:
        return float("nan"), float("nan")
    from .experiments import fit_decay

    return fit_decay(k_values, errors)


def euler_gap_report(
    model: PolarizedModel,
    phi0: PotentialField,
    t_max: float,
    k_list: Sequence[int],
    refine: int = 4,
) -> dict:
    """Gap between Bergman iterates and the integrated flow, per level.

    For each k the flow is integrated with RK4 at step 1/(refine k) and
    sampled at the iteration times j/k; the report records the largest
    log_gap over j/k <= t_max and the fitted decay slope in k.
    """
    if refine < 2:
        raise FlowError("refine must be at least 2 to separate the two evolutions")
    k_values = sorted(set(int(k) for k in k_list))
    if not k_values or k_values[0] < 1:
        raise FlowError("k_list must contain positive levels")
    errors = []
    gap_tables = {}
    for k in k_values:
        j_max = int(math.floor(t_max * k + TIME_TOL))
        if j_max < 1:
            raise FlowError(f"horizon {t_max} is shorter than one step at level {k}")
        h0 = project(phi0, k)
        truth = quantized_flow_run(
            model, h0, t_max=j_max / k, dt=1.0 / (refine * k),
            sample_every=refine, with_energies=False,
        )
        iterates = bergman_iterate(model, h0, steps=j_max, with_energies=False)
        gaps = [
            log_gap(truth.states[j], iterates.states[j]) for j in range(j_max + 1)
        ]
        gap_tables[k] = np.asarray(gaps)
        errors.append(max(gaps))
    slope, half_width = _fit(k_values, errors)
    return {
        "k_values": k_values,
        "errors": errors,
        "slope": slope,
        "slope_half_width": half_width,
        "t_max": float(t_max),
        "refine": int(refine),
        "gap_tables": gap_tables,
    }


def flow_vs_krf_gap(
    model: ProjectiveLineModel,
    phi0: PotentialField,
    t_max: float,
    k_list: Sequence[int],
    refine: int = 2,
    resolution_factor: int = 2,
) -> dict:
    """Sup-grid gap between f_k along the quantized flow and the classical flow.

    The classical potential one step ahead, psi at (j+1)/k, is compared
    with f_k(H_(j/k)); the first Bergman coefficient supplies that 1/k
    shift.  A run on a grid ``resolution_factor`` times finer reports the
    quadrature self-consistency of the classical trajectory.
    """
    model.require_radial()
    k_values = sorted(set(int(k) for k in k_list))
    if not k_values or k_values[0] < 1:
        raise FlowError("k_list must contain positive levels")
    common = math.lcm(*k_values)
    if abs(round(t_max * common) - t_max * common) > TIME_TOL:
        raise FlowError("t_max must be a multiple of 1/lcm(k_list)")
    sample_dt = 1.0 / common

    classical = classical_krf_run(model, phi0, t_max, sample_dt=sample_dt)

    fine_model = ProjectiveLineModel(
        k_max=1,
        radial_nodes=resolution_factor * model.radial_count,
        angular_nodes=8,
    )
    psi0 = phi0.require_profile()
    fine_phi0 = PotentialField(
        fine_model, None, model.interpolate_radial(psi0, fine_model.u)
    )
    fine = classical_krf_run(fine_model, fine_phi0, t_max, sample_dt=sample_dt)
    resolution_gap = 0.0
    for state, fine_state in zip(classical.states, fine.states):
        back = fine_model.interpolate_radial(fine_state.require_profile(), model.u)
        resolution_gap = max(
            resolution_gap, float(np.max(np.abs(back - state.require_profile())))
        )

    errors = []
    gap_tables = {}
    for k in k_values:
        j_max = int(round(t_max * k)) - 1
        if j_max < 0:
            raise FlowError(f"horizon {t_max} is shorter than one step at level {k}")
        h0 = project(phi0, k)
        run = quantized_flow_run(
            model, h0, t_max=max(j_max, 1) / k, dt=1.0 / (refine * k),
            sample_every=refine, with_energies=False,
        )
        gaps = []
        for j in range(j_max + 1):
            target = classical.state_at((j + 1) / k).require_profile()
            quantized = fubini_study(model, run.states[j]).require_profile()
            gaps.append(float(np.max(np.abs(target - quantized))))
        gap_tables[k] = np.asarray(gaps)
        errors.append(max(gaps))
    slope, half_width = _fit(k_values, errors)
    return {
        "k_values": k_values,
        "errors": errors,
        "slope": slope,
        "slope_half_width": half_width,
        "t_max": float(t_max),
        "refine": int(refine),
        "resolution_gap": resolution_gap,
        "gap_tables": gap_tables,
    }


def slope_identity_check(trace: FlowTrace) -> dict:
    """Residuals of S_k = -d/dt L(f_k(H_t)) by forward differences.

    The residual at a sample is first order in the sampling step, so a
    halved step should roughly halve the maximum residual.
    """
    if trace.kind != "quantized":
        raise FlowError("slope identity needs a quantized trace")
    if "L" not in trace.series or "S_k" not in trace.series:
        raise FlowError("trace was recorded without energies")
    if trace.size < 3:
        raise FlowError("need at least three samples")
    t = trace.times
    l_values = trace.series["L"]
    s_values = trace.series["S_k"]
    dt = np.diff(t)
    residuals = np.abs(s_values[:-1] + np.diff(l_values) / dt)
    return {
        "times": t[:-1],
        "residuals": residuals,
        "max_residual": float(np.max(residuals)),
        "sample_dt": float(np.max(dt)),
    }


def monotonicity_probe(trace: FlowTrace) -> dict:
    """Worst margin of the asymptotic entropy monotonicity bound.

    Checks dS_k/dt <= ((k+1)/N_k) R^2 along the trace, with R the
    trace-convention relative entropy -sum log B_i of H against b_k(H)
    (its normalized cousin is R/N_k; both appear in the report).  The
    finite-difference slack is estimated from the recorded series'
    second differences.
    """
    if trace.kind != "quantized":
        raise FlowError("monotonicity probe needs a quantized trace")
    if "S_k" not in trace.series or "relent_ref" not in trace.series:
        raise FlowError("trace was recorded without energies")
    if trace.size < 3:
        raise FlowError("need at least three samples")
    k = trace.level
    n = trace.states[0].dim
    t = trace.times
    dt = np.diff(t)
    s_values = trace.series["S_k"]
    relent = trace.series["relent_ref"]
    lhs = np.diff(s_values) / dt
    rhs = ((k + 1.0) / n) * relent[:-1] ** 2
    margins = lhs - rhs
    second = np.abs(np.diff(s_values, 2))
    slack = 1e-6 + 0.5 * float(np.max(second)) / float(np.min(dt))
    worst = float(np.max(margins))
    return {
        "times": t[:-1],
        "margins": margins,
        "worst": worst,
        "slack": slack,
        "passed": bool(worst <= slack),
        "normalized_relent": relent / n,
    }
