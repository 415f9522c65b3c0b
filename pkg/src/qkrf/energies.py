"""Energy and entropy functionals, classical and quantized.

Classical side (radial backend): the Monge-Ampere energy E, the
normalized integral L(phi) = -log((1/V) int e^(-phi) d mu0), the Ricci
density of the canonical probability measure against the normalized
Monge-Ampere measure, and the relative entropy S between the two.

Quantized side at level k: the determinant energy E_k, the scale
invariant D_k = L o fubini_study - E_k, the quantized entropy
S_k(H) = rel_entropy(b_k(H), H) with the 1/N_k normalization, its
Legendre-type variational form, and the free energy F^NA of a
non-Archimedean norm.  All exponential sums go through log-sum-exp so
geodesic rays at large time stay finite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np
from scipy.special import logsumexp

from .geometry import (
    KahlerConeError,
    PolarizedModel,
    PotentialField,
    ProjectiveLineModel,
    radial_canonical_measure,
)
from .hermforms import HermForm, gen_eig
from .maps import balancing, fubini_study

if TYPE_CHECKING:
    from .nanorms import NAForm

ENTROPY_FLOOR = -1e-9


class FunctionalError(ValueError):
    """Invalid input to an energy functional."""


# ---------------------------------------------------------------------------
# classical functionals (radial backend)


def _admissible_laplacian(model: ProjectiveLineModel, psi: np.ndarray) -> np.ndarray:
    lap = model.radial_laplacian(psi)
    margin = 2.0 + lap
    if np.any(margin <= 0.0):
        bad = int(np.argmin(margin))
        raise KahlerConeError(
            f"not a Kahler potential: density margin {margin[bad]:.3e} "
            f"at u={model.u[bad]:.6f}"
        )
    return lap


def ma_energy(phi: PotentialField) -> float:
    """Monge-Ampere energy, the primitive of phi -> (1/V) int . omega_phi^n.

    On the line this is (1/(2V)) (int phi omega_0 + int phi omega_phi).
    Shifts act affinely, E(phi + c) = E(phi) + c.
    """
    model = phi.model
    model.require_radial()
    psi = phi.require_profile()
    lap = _admissible_laplacian(model, psi)
    w = model.radial_weights
    return float(np.dot(w, psi) + 0.25 * np.dot(w, psi * lap))


def l_functional(phi: PotentialField) -> float:
    """L(phi) = -log((1/V) int e^(-phi) d mu0), computed in log space."""
    model = phi.model
    if model.supports_radial and phi.is_radial:
        logint = logsumexp(np.log(model.radial_weights) - phi.radial_profile)
        return float(-logint)
    logint = logsumexp(np.log(model.mu0_weights) - phi.values)
    return float(np.log(model.volume) - logint)


def log_ricci_profile(model: ProjectiveLineModel, psi: np.ndarray) -> np.ndarray:
    """log of d mu_psi / (V^(-1) omega_psi) on the radial grid."""
    lap = _admissible_laplacian(model, psi)
    logz = logsumexp(np.log(model.radial_mu0_weights) - psi)
    return np.log(2.0) - psi - logz - np.log1p(0.5 * lap)


def ricci_density(phi: PotentialField) -> np.ndarray:
    """Density e^rho of the canonical measure against V^(-1) omega_phi^n.

    Its defect e^rho - 1 integrates to zero against the normalized
    Monge-Ampere measure, and rho vanishes identically at phi = 0.
    """
    model = phi.model
    model.require_radial()
    psi = phi.require_profile()
    return model.tile_radial(np.exp(log_ricci_profile(model, psi)))


def entropy_classical(phi: PotentialField) -> float:
    """Relative entropy of d mu_phi against V^(-1) omega_phi^n; nonnegative."""
    model = phi.model
    model.require_radial()
    psi = phi.require_profile()
    rho = log_ricci_profile(model, psi)
    cm = radial_canonical_measure(model, psi)
    return float(np.dot(cm, rho))


# ---------------------------------------------------------------------------
# quantized functionals


def e_k(h: HermForm, h_ref: HermForm) -> float:
    """Determinant energy -(1/(k N_k)) log det(h_ref^(-1) h)."""
    if h.level != h_ref.level:
        raise FunctionalError("determinant energy needs forms at the same level")
    if h.is_diagonal and h_ref.is_diagonal:
        logs = np.log(h.diagonal()) - np.log(h_ref.diagonal())
    else:
        logs = np.log(gen_eig(h.entries, h_ref.entries))
    return float(-np.sum(logs) / (h.level * h.dim))


def d_k(model: PolarizedModel, h: HermForm, h_ref: HermForm) -> float:
    """Scale-invariant energy L(fubini_study(h)) - E_k(h); critical at balance."""
    return l_functional(fubini_study(model, h)) - e_k(h, h_ref)


def balancing_norms(model: PolarizedModel, h: HermForm, balanced: Optional[HermForm] = None) -> np.ndarray:
    """Generalized eigenvalues of (b_k(h), h), ascending; they sum to N_k."""
    b = balancing(model, h) if balanced is None else balanced
    return gen_eig(b.entries, h.entries)


def s_k(model: PolarizedModel, h: HermForm, balanced: Optional[HermForm] = None) -> float:
    """Quantized entropy (1/N_k) sum B_i log B_i with B = gen_eig(b_k(h), h).

    The B_i sum to N_k, so the value is nonnegative and vanishes exactly
    at balanced forms.
    """
    mu = balancing_norms(model, h, balanced)
    return float(np.sum(mu * np.log(mu)) / mu.size)


def canonical_conjugate_weights(b_norms: np.ndarray, k: int) -> np.ndarray:
    """The weight vector lam_i = -k log B_i attaining the entropy supremum."""
    return -k * np.log(np.asarray(b_norms, dtype=float))


def conjugate_value(b_norms: np.ndarray, k: int, lam: np.ndarray) -> float:
    """Pairing -(1/N) sum (lam_i / k) B_i - log((1/N) sum e^(-lam_i / k))."""
    b = np.asarray(b_norms, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if lam.shape != b.shape:
        raise FunctionalError("trial weights and norms differ in length")
    n = b.size
    linear = -float(np.dot(lam / k, b)) / n
    return linear - float(logsumexp(-lam / k) - np.log(n))


def s_k_conjugate(
    model: PolarizedModel, h: HermForm, trials: list[np.ndarray]
) -> float:
    """Best trial value of the variational form of the quantized entropy.

    Every trial is a lower bound for s_k(h); the canonical weights
    -k log B_i attain it.
    """
    if not trials:
        raise FunctionalError("need at least one trial weight vector")
    b = balancing_norms(model, h)
    return max(conjugate_value(b, h.level, lam) for lam in trials)


def f_k_na(nu: "NAForm") -> float:
    """Free energy log N_k - log sum e^(-lam_i / k) of a norm's weights.

    Adding a constant c to every weight adds c/k.
    """
    lam = np.asarray(nu.weights, dtype=float)
    return float(np.log(lam.size) - logsumexp(-lam / nu.level))


# ---------------------------------------------------------------------------
# per-time energy records


def _check_floor(name: str, value: Optional[float]) -> Optional[float]:
    if value is None:
        return None
    v = float(value)
    if np.isfinite(v) and v < ENTROPY_FLOOR:
        raise FunctionalError(f"{name} = {v:.3e} below the entropy floor")
    return v


@dataclass(frozen=True)
class EnergyReport:
    """Snapshot of the functionals along a flow; absent entries are None."""

    E: Optional[float] = None
    L: Optional[float] = None
    S: Optional[float] = None
    E_k: Optional[float] = None
    D_k: Optional[float] = None
    S_k: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "S", _check_floor("S", self.S))
        object.__setattr__(self, "S_k", _check_floor("S_k", self.S_k))

    CSV_FIELDS = ("E", "L", "S", "E_k", "D_k", "S_k")

    def csv_values(self) -> list[float]:
        out = []
        for name in self.CSV_FIELDS:
            v = getattr(self, name)
            out.append(float("nan") if v is None else float(v))
        return out
