"""Ultrametric norms on section spaces and the entropy duality probes.

A norm is stored as an adapted basis together with descending weights;
the induced filtration assigns a section the norm e^(-lambda) of the
deepest filtration step containing it.  The module provides the
empirical jump measure of the weights, a slope estimator for the
asymptotic growth of L along the geodesic ray a norm generates, the
non-Archimedean entropy built from that slope, and the extraction of a
norm from a quantized-flow state through an orthonormal-orthogonal
frame.

Every ray quantity is evaluated in factored form: the Bergman sums
along the ray are log-sum-exp combinations of per-section amplitudes,
so no ill-conditioned matrix at large ray time is ever assembled.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .energies import canonical_conjugate_weights, conjugate_value, f_k_na
from .flows import FlowTrace, quantized_flow_run
from .geometry import PolarizedModel, PotentialField
from .hermforms import HermForm, _orthonormalize_adapted
from .maps import balancing, orthonormal_orthogonal, project

logger = logging.getLogger(__name__)

SUPPORT_TOL = 1e-12
CONDITION_LIMIT = 1e13


class NANormError(ValueError):
    """Invalid ultrametric data."""


@dataclass(frozen=True)
class NAForm:
    """Ultrametric norm: adapted basis columns s_i with weights lam_i.

    Weights are descending; the norm of a section is e^(-lam_i) for the
    smallest weight whose adapted component is nonzero.
    """

    level: int
    weights: np.ndarray
    adapted_basis: np.ndarray

    def __post_init__(self):
        if self.level < 1:
            raise NANormError("level must be a positive integer")
        weights = np.asarray(self.weights, dtype=float)
        if weights.ndim != 1 or weights.size == 0 or not np.all(np.isfinite(weights)):
            raise NANormError("weights must be a finite 1-D vector")
        if weights.size > 1 and np.any(np.diff(weights) > SUPPORT_TOL):
            raise NANormError("weights must be sorted in descending order")
        basis = np.asarray(self.adapted_basis, dtype=complex)
        if basis.shape != (weights.size, weights.size):
            raise NANormError("adapted basis shape does not match the weights")
        sv = np.linalg.svd(basis, compute_uv=False)
        if sv[-1] <= 0.0 or sv[0] / sv[-1] > CONDITION_LIMIT:
            raise NANormError("adapted basis is numerically singular")
        logger.debug(
            "NAForm level=%d dim=%d basis condition %.3e",
            self.level, weights.size, sv[0] / sv[-1],
        )
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "adapted_basis", basis)

    @property
    def dim(self) -> int:
        return self.weights.size

    def shifted(self, c: float) -> "NAForm":
        return NAForm(self.level, self.weights + float(c), self.adapted_basis)


def trivial_na(model: PolarizedModel, k: int) -> NAForm:
    n = model.nk(k)
    return NAForm(k, np.zeros(n), np.eye(n, dtype=complex))


def diagonal_na(model: PolarizedModel, k: int, weights: Sequence[float]) -> NAForm:
    """Norm adapted to the reference basis, weights given in any order."""
    n = model.nk(k)
    lam = np.asarray(weights, dtype=float)
    if lam.shape != (n,):
        raise NANormError(f"need {n} weights at level {k}")
    order = np.argsort(-lam, kind="stable")
    basis = np.eye(n, dtype=complex)[:, order]
    return NAForm(k, lam[order], basis)


def random_na(
    rng: np.random.Generator,
    model: PolarizedModel,
    k: int,
    spread: float = 1.0,
    diagonal: bool = False,
) -> NAForm:
    """Seeded norm with unitary (or reference-diagonal) adapted basis."""
    n = model.nk(k)
    lam = np.sort(spread * rng.standard_normal(n))[::-1]
    if diagonal:
        return NAForm(k, lam, np.eye(n, dtype=complex))
    x = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    basis = np.linalg.qr(x)[0]
    return NAForm(k, lam, basis)


def na_norm_value(nu: NAForm, coeffs: np.ndarray) -> float:
    """Norm of the section with the given reference-basis coefficients."""
    c = np.asarray(coeffs, dtype=complex)
    if c.shape != (nu.dim,):
        raise NANormError("coefficient vector has the wrong length")
    comps = np.linalg.solve(nu.adapted_basis, c)
    mags = np.abs(comps)
    top = float(mags.max())
    if top == 0.0:
        raise NANormError("the zero section has no norm")
    support = mags > SUPPORT_TOL * top
    return float(np.exp(-np.min(nu.weights[support])))


# ---------------------------------------------------------------------------
# empirical jump measure


@dataclass(frozen=True)
class DHMeasure:
    """Uniform atomic measure on the rescaled weights lam_i / k."""

    atoms: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        masses = np.asarray(self.masses, dtype=float)
        if atoms.shape != masses.shape or atoms.ndim != 1:
            raise NANormError("atoms and masses must be matching 1-D vectors")
        if np.any(masses <= 0.0) or abs(masses.sum() - 1.0) > 1e-12:
            raise NANormError("masses must be positive and sum to one")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "masses", masses)

    @property
    def mean(self) -> float:
        return float(np.dot(self.atoms, self.masses))

    @property
    def second_moment(self) -> float:
        """Square root of the centered second moment."""
        centered = self.atoms - self.mean
        return float(math.sqrt(np.dot(self.masses, centered**2)))


def dh_empirical(nu: NAForm) -> DHMeasure:
    n = nu.dim
    return DHMeasure(nu.weights / nu.level, np.full(n, 1.0 / n))


# ---------------------------------------------------------------------------
# ray slope estimation


@dataclass(frozen=True)
class SlopeEstimate:
    value: float
    uncertainty: float
    converged: bool
    ladder_times: np.ndarray
    ladder_slopes: np.ndarray
    extrapolants: np.ndarray


def _neville_to_zero(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Diagonal of the Neville tableau extrapolating (xs, ys) to x = 0."""
    n = xs.size
    p = list(ys.astype(float))
    out = [p[0]]
    for level in range(1, n):
        nxt = []
        for i in range(n - level):
            num = xs[i + level] * p[i] - xs[i] * p[i + 1]
            nxt.append(num / (xs[i + level] - xs[i]))
        p = nxt
        out.append(p[0])
    return np.asarray(out)


def _ray_log_amplitudes(
    model: PolarizedModel, nu: NAForm, h0: HermForm
) -> np.ndarray:
    """log |s_i|^2 at the nodes for the h0-orthonormalized adapted basis."""
    frame = _orthonormalize_adapted(h0, nu.adapted_basis)
    amplitudes = frame.T @ model.sections(nu.level)
    with np.errstate(divide="ignore"):
        return np.log(np.abs(amplitudes) ** 2)


def ray_l_value(
    model: PolarizedModel, nu: NAForm, h0: HermForm, t: float,
    log_amplitudes: Optional[np.ndarray] = None,
) -> float:
    """L of the Fubini-Study potential at ray time t, fully in log space."""
    if log_amplitudes is None:
        log_amplitudes = _ray_log_amplitudes(model, nu, h0)
    k = nu.level
    log_bergman = logsumexp(nu.weights[:, None] * t + log_amplitudes, axis=0)
    phi_values = (log_bergman - math.log(nu.dim)) / k
    log_mass = logsumexp(np.log(model.mu0_weights) - phi_values)
    return float(math.log(model.volume) - log_mass)


def l_na_slope(
    model: PolarizedModel,
    nu: NAForm,
    h0: HermForm,
    t_max: float = 40.0,
    delta: float = 1.0,
    rungs: int = 4,
    tol: float = 1e-3,
    max_doublings: int = 4,
) -> SlopeEstimate:
    """Asymptotic growth rate of L along the geodesic ray of a norm.

    Finite-difference slopes of L(f_k(H_t)) over [t - delta, t] are taken
    on a ladder of times below t_max and extrapolated to t = infinity by
    Neville's scheme in 1/t.  At a fixed quadrature grid the slopes
    converge exponentially in t, so deeper tableau columns can amplify
    the residual of the lowest rung instead of cancelling it; the
    estimate is therefore the tableau diagonal entry with the smallest
    step from its predecessor, and the uncertainty is that step.

    The convergence rate is set by the smallest active weight gap, so a
    norm with near-degenerate weights may be far from its asymptote at
    t_max.  When the uncertainty exceeds tol the horizon is doubled, up
    to max_doublings times, keeping the estimate honest for such norms.
    """
    if t_max < 10.0:
        raise NANormError("slope estimation needs t_max >= 10")
    if h0.level != nu.level or h0.dim != nu.dim:
        raise NANormError("base form level does not match the norm")
    if rungs < 2:
        raise NANormError("need at least two ladder rungs")
    if delta <= 0.0 or delta >= t_max / (2.0 * rungs):
        raise NANormError("delta must sit well inside the ladder spacing")
    log_amplitudes = _ray_log_amplitudes(model, nu, h0)
    estimate = None
    horizon = float(t_max)
    for _ in range(max_doublings + 1):
        times = horizon * (1.0 - np.arange(rungs) / (2.0 * rungs))
        slopes = []
        for t in times:
            upper = ray_l_value(model, nu, h0, t, log_amplitudes)
            lower = ray_l_value(model, nu, h0, t - delta, log_amplitudes)
            slopes.append((upper - lower) / delta)
        slopes = np.asarray(slopes)
        extrapolants = _neville_to_zero(1.0 / times, slopes)
        steps = np.abs(np.diff(extrapolants))
        best = int(np.argmin(steps)) + 1
        value = float(extrapolants[best])
        uncertainty = float(steps[best - 1])
        estimate = SlopeEstimate(
            value=value,
            uncertainty=uncertainty,
            converged=bool(uncertainty <= tol),
            ladder_times=times,
            ladder_slopes=slopes,
            extrapolants=extrapolants,
        )
        if estimate.converged:
            break
        horizon *= 2.0
    return estimate


@dataclass(frozen=True)
class NAEntropy:
    value: float
    uncertainty: float
    converged: bool
    slope: float
    free_energy: float


def s_k_na(
    model: PolarizedModel,
    nu: NAForm,
    h0: HermForm,
    t_max: float = 40.0,
    tol: float = 1e-3,
) -> NAEntropy:
    """Non-Archimedean entropy: ray slope of L minus the free energy.

    Translation of the weights by a constant moves both terms by c/k, so
    the value is translation invariant up to the estimator uncertainty.
    """
    estimate = l_na_slope(model, nu, h0, t_max=t_max, tol=tol)
    free = f_k_na(nu)
    return NAEntropy(
        value=float(estimate.value - free),
        uncertainty=estimate.uncertainty,
        converged=estimate.converged,
        slope=estimate.value,
        free_energy=free,
    )


# ---------------------------------------------------------------------------
# extraction from the quantized flow and the duality report


def extract_na_from_flow(
    model: PolarizedModel, trace: FlowTrace, t_j: float
) -> NAForm:
    """Norm read off a flow state: orthonormal-orthogonal frame and -k log B_i.

    The adapted basis is H_t-orthonormal and b_k(H_t)-orthogonal; the
    weights are descending because the frame norms come out ascending.
    """
    if trace.kind not in ("quantized", "bergman"):
        raise NANormError("extraction needs a quantized trace")
    h = trace.state_at(t_j)
    frame, norms = orthonormal_orthogonal(h, balancing(model, h))
    lam = -h.level * np.log(norms)
    return NAForm(h.level, lam, frame)


def extraction_identity_residual(
    model: PolarizedModel, trace: FlowTrace, t_j: float
) -> float:
    """|S_k(H_t) - conjugate value at the extracted weights|; pure algebra."""
    h = trace.state_at(t_j)
    _, norms = orthonormal_orthogonal(h, balancing(model, h))
    s_k_value = float(np.sum(norms * np.log(norms)) / norms.size)
    lam = canonical_conjugate_weights(norms, h.level)
    return abs(s_k_value - conjugate_value(norms, h.level, lam))


def duality_gap(
    model: PolarizedModel,
    k: int,
    phi0: PotentialField,
    t_max: float = 12.0,
    dt: Optional[float] = None,
    panel: int = 5,
    seed: int = 0,
    slope_t_max: float = 40.0,
    extract_count: int = 3,
) -> dict:
    """Fixed-k duality probe: flow infimum of S_k against extracted norms.

    Runs the quantized flow toward its balanced limit, extracts norms at
    the last sampled times, and compares min S_k with -S_k^NA for the
    extracted norms and for a seeded panel (the trivial norm included).
    The one-sided inequality -S_k^NA <= min S_k holds for every tested
    norm up to the slope-estimator uncertainty.
    """
    model.require_level(k)
    h0 = project(phi0, k)
    step = (0.25 / k) if dt is None else float(dt)
    trace = quantized_flow_run(model, h0, t_max=t_max, dt=step)
    s_series = trace.series["S_k"]
    min_s_k = float(np.min(s_series))
    near_stationary = bool(s_series[-1] <= max(1e-9, 1e-6 * max(s_series[0], 0.0)))

    base = project(model.zero_potential(), k)
    count = min(extract_count, trace.size)
    extracted = []
    for t_j in trace.times[-count:]:
        nu_j = extract_na_from_flow(model, trace, t_j)
        residual = extraction_identity_residual(model, trace, t_j)
        entropy = s_k_na(model, nu_j, base, t_max=slope_t_max)
        alt = s_k_na(model, nu_j, trace.state_at(t_j), t_max=slope_t_max)
        extracted.append(
            {
                "t": float(t_j),
                "identity_residual": float(residual),
                "s_na": entropy.value,
                "uncertainty": entropy.uncertainty,
                "converged": entropy.converged,
                "base_spread": float(abs(entropy.value - alt.value)),
            }
        )

    rng = np.random.default_rng(seed)
    members = [("trivial", trivial_na(model, k))]
    for i in range(max(0, panel - 1)):
        diagonal = i % 2 == 0
        members.append(
            (
                "random-diagonal" if diagonal else "random-unitary",
                random_na(rng, model, k, spread=0.8, diagonal=diagonal),
            )
        )
    panel_rows = []
    for kind, nu in members:
        entropy = s_k_na(model, nu, base, t_max=slope_t_max)
        tolerance = entropy.uncertainty + 0.05
        panel_rows.append(
            {
                "kind": kind,
                "s_na": entropy.value,
                "minus_s_na": -entropy.value,
                "uncertainty": entropy.uncertainty,
                "converged": entropy.converged,
                "one_sided_ok": bool(-entropy.value <= min_s_k + tolerance),
            }
        )

    minus_values = [row["minus_s_na"] for row in panel_rows]
    gap = float(abs(min_s_k - max(row["minus_s_na"] for row in panel_rows)))
    return {
        "k": int(k),
        "min_s_k": min_s_k,
        "near_stationary": near_stationary,
        "final_s_k": float(s_series[-1]),
        "extracted": extracted,
        "panel": panel_rows,
        "panel_max_minus_s_na": float(max(minus_values)),
        "one_sided_all": bool(all(row["one_sided_ok"] for row in panel_rows)),
        "gap": gap,
        "dt": step,
        "t_max": float(t_max),
    }


# ---------------------------------------------------------------------------
# serialization


def na_form_to_json(nu: NAForm) -> dict:
    basis = [
        [[float(z.real), float(z.imag)] for z in row] for row in nu.adapted_basis
    ]
    return {"k": int(nu.level), "weights": [float(x) for x in nu.weights], "basis": basis}


def na_form_from_json(payload: dict) -> NAForm:
    basis = np.asarray(
        [[complex(re, im) for re, im in row] for row in payload["basis"]]
    )
    return NAForm(int(payload["k"]), np.asarray(payload["weights"], dtype=float), basis)
