import numpy as np
import pytest

from qkrf.flows import (
    FlowError,
    bergman_iterate,
    classical_krf_run,
    concat_traces,
    format_float,
    load_trace,
    monotonicity_probe,
    quantized_flow_run,
    slope_identity_check,
    write_series_csv,
)
from qkrf.hermforms import HermForm, log_gap, random_herm_pd
from qkrf.maps import balancing, project


def test_one_euler_step_is_one_balancing(p1, bump):
    """An Euler step of size 1/k lands exactly on b_k(H)."""
    for k in (1, 2):
        h0 = project(bump, k)
        trace = quantized_flow_run(
            p1, h0, t_max=1.0 / k, dt=1.0 / k, method="euler", with_energies=False
        )
        direct = balancing(p1, h0)
        assert np.allclose(trace.states[-1].entries, direct.entries, atol=1e-13)


def test_euler_matches_bergman_iterate(p1, bump):
    h0 = project(bump, 2)
    euler = quantized_flow_run(
        p1, h0, t_max=2.0, dt=0.5, method="euler", with_energies=False
    )
    iterates = bergman_iterate(p1, h0, steps=4, with_energies=False)
    for a, b in zip(euler.states, iterates.states):
        assert log_gap(a, b) <= 1e-12


def test_resume_equals_single_run(p1, bump):
    h0 = project(bump, 2)
    full = quantized_flow_run(p1, h0, t_max=1.0, dt=0.05)
    first = quantized_flow_run(p1, h0, t_max=0.5, dt=0.05)
    second = quantized_flow_run(
        p1, first.states[-1], t_max=0.5, dt=0.05, t0=0.5, h_ref=h0
    )
    joined = concat_traces(first, second)
    assert np.allclose(joined.times, full.times, atol=1e-12)
    for a, b in zip(joined.states, full.states):
        assert np.allclose(a.entries, b.entries, atol=1e-11)
    assert np.allclose(joined.series["S_k"], full.series["S_k"], atol=1e-10)
    assert joined.meta["resumed_at"] == pytest.approx(0.5)


def test_concat_rejects_disjoint_traces(p1, bump):
    h0 = project(bump, 1)
    a = quantized_flow_run(p1, h0, t_max=0.5, dt=0.25, with_energies=False)
    b = quantized_flow_run(p1, h0, t_max=0.5, dt=0.25, t0=2.0, with_energies=False)
    with pytest.raises(FlowError):
        concat_traces(a, b)


def test_trace_save_load_round_trip(p1, bump, tmp_path):
    h0 = project(bump, 2)
    trace = quantized_flow_run(p1, h0, t_max=0.5, dt=0.125)
    json_path, csv_path = trace.save(str(tmp_path / "run"))
    back = load_trace(p1, json_path)
    assert back.kind == trace.kind and back.level == trace.level
    assert np.array_equal(back.times, trace.times)
    for a, b in zip(back.states, trace.states):
        assert np.array_equal(a.entries, b.entries)
    for name in trace.series:
        assert np.array_equal(back.series[name], trace.series[name])
    header = open(csv_path).readline().strip()
    assert header == "t,k,E,L,S,E_k,D_k,S_k"


def test_classical_save_load_round_trip(p1, bump, tmp_path):
    trace = classical_krf_run(p1, bump, t_max=0.1, sample_dt=0.05)
    json_path, _ = trace.save(str(tmp_path / "classical"))
    back = load_trace(p1, json_path)
    for a, b in zip(back.states, trace.states):
        assert np.array_equal(a.require_profile(), b.require_profile())


def test_classical_flow_fixes_round_metric(p1):
    trace = classical_krf_run(p1, p1.zero_potential(), t_max=0.2, sample_dt=0.1)
    drift = max(np.max(np.abs(s.require_profile())) for s in trace.states)
    assert drift <= 1e-12
    assert np.max(np.abs(trace.series["S"])) <= 1e-12


def test_classical_entropy_decreases(p1, bump):
    trace = classical_krf_run(p1, bump, t_max=0.5, sample_dt=0.05)
    assert trace.meta["max_s_increase"] <= 1e-12
    assert trace.series["S"][-1] < trace.series["S"][0]


def test_quantized_flow_converges_to_balanced(p1, bump):
    """S_k decays toward zero along the flow."""
    h0 = project(bump, 2)
    trace = quantized_flow_run(p1, h0, t_max=8.0, dt=0.125)
    s = trace.series["S_k"]
    assert s[-1] < 1e-6
    assert s[-1] < s[0]


def test_flow_step_validation(p1, bump):
    h0 = project(bump, 1)
    with pytest.raises(FlowError):
        quantized_flow_run(p1, h0, t_max=1.0, dt=0.3, with_energies=False)
    with pytest.raises(FlowError):
        quantized_flow_run(p1, h0, t_max=1.0, dt=0.25, sample_every=3)
    with pytest.raises(FlowError):
        quantized_flow_run(p1, h0, t_max=1.0, dt=0.25, method="heun")


def test_state_at_requires_sampled_time(p1, bump):
    h0 = project(bump, 1)
    trace = quantized_flow_run(p1, h0, t_max=1.0, dt=0.5, with_energies=False)
    assert trace.state_at(0.5) is trace.states[1]
    with pytest.raises(FlowError):
        trace.state_at(0.3)


def test_slope_identity_smoke(p1, bump):
    h0 = project(bump, 2)
    trace = quantized_flow_run(p1, h0, t_max=1.0, dt=0.05)
    report = slope_identity_check(trace)
    assert report["max_residual"] < 0.05
    assert report["residuals"].shape == (trace.size - 1,)


def test_monotonicity_probe_on_seeded_run(p1):
    rng = np.random.default_rng(97)
    h0 = HermForm(2, random_herm_pd(rng, 5, spread=0.5))
    trace = quantized_flow_run(p1, h0, t_max=2.0, dt=0.01)
    report = monotonicity_probe(trace)
    assert report["passed"]
    assert report["worst"] <= report["slack"]


def test_format_float_round_trips():
    for x in (0.1, 1.0 / 3.0, 2.0**-40, 123456.789):
        assert float(format_float(x)) == x


def test_write_series_csv_values(tmp_path):
    times = np.array([0.0, 0.5])
    series = {"L": np.array([1.0 / 3.0, 0.25]), "S_k": np.array([0.5, 0.125])}
    path = str(tmp_path / "series.csv")
    write_series_csv(path, times, 2, series)
    lines = open(path).read().splitlines()
    assert lines[0] == "t,k,E,L,S,E_k,D_k,S_k"
    row = lines[1].split(",")
    assert float(row[3]) == 1.0 / 3.0
    assert row[2] == "nan"
    assert row[1] == "2"
