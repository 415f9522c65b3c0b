"""Quantization maps between Hermitian forms and potentials.

The three basic maps at level k are

    fubini_study : H     -> (1/k) log( (1/N_k) sum_i |s_i|^2_ref ),
                            with s_i any H-orthonormal frame,
    project      : phi   -> Gram matrix of the reference basis against
                            e^(-k phi) d mu_phi,  where d mu_phi is the
                            probability measure e^(-phi) mu0 / Z,
    balancing    : H     -> project(fubini_study(H)),

together with the Bergman endomorphism beta = fubini_study o project on
potentials.  The Bergman sums are contractions of the inverse form against
the pointwise section kernel, so no explicit orthonormalization is ever
performed.  Rotation-invariant data rides a diagonal fast path: the
reference monomial Gram is exponentially ill scaled in k, and keeping
diagonal forms as diagonals preserves full relative accuracy elementwise
where a dense spectral route would drown the small entries in rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .geometry import (
    ModelError,
    PolarizedModel,
    PotentialField,
    ProjectiveLineModel,
)
from .hermforms import HermForm, HermitianError, PositivityError


class QuantizationError(ValueError):
    """Numerically singular Gram or invalid Bergman data."""


def _check_form(model: PolarizedModel, h: HermForm) -> int:
    model.require_level(h.level)
    n = model.nk(h.level)
    if h.dim != n:
        raise ModelError(f"form dimension {h.dim} does not match N_k = {n}")
    return n


@dataclass(frozen=True)
class BergmanData:
    """Bergman density B_H and the induced potential at the quadrature nodes."""

    level: int
    density: np.ndarray
    potential: PotentialField


def _bergman_sum_dense(model: PolarizedModel, h: HermForm) -> np.ndarray:
    a = model.sections(h.level)
    t = np.linalg.solve(h.entries, a.conj())
    return np.real(np.einsum("ax,ax->x", a, t))


def _bergman_sum_radial(model: ProjectiveLineModel, h: HermForm) -> np.ndarray:
    r2 = model.radial_section_sq(h.level)
    return r2.T @ (1.0 / h.diagonal())


def bergman_data(model: PolarizedModel, h: HermForm) -> BergmanData:
    """Bergman density of a form, B_H = (1/N_k) sum_i |s_i|^2_ref."""
    n = _check_form(model, h)
    k = h.level
    if model.supports_radial and h.is_diagonal:
        rad = _bergman_sum_radial(model, h)
        if np.any(rad <= 0.0) or not np.all(np.isfinite(rad)):
            raise QuantizationError("Bergman sum is not strictly positive")
        profile = (np.log(rad) - np.log(n)) / k
        phi = PotentialField(model, None, profile)
        density = model.tile_radial(rad / n)
    else:
        full = _bergman_sum_dense(model, h)
        if np.any(full <= 0.0) or not np.all(np.isfinite(full)):
            raise QuantizationError("Bergman sum is not strictly positive")
        phi = PotentialField(model, (np.log(full) - np.log(n)) / k, None)
        density = full / n
    return BergmanData(k, density, phi)


def fubini_study(model: PolarizedModel, h: HermForm) -> PotentialField:
    """Fubini-Study potential of a form; scales as f(cH) = f(H) - log(c)/k."""
    return bergman_data(model, h).potential


def project(phi: PotentialField, k: int, normalized: bool = True) -> HermForm:
    """Gram form of the reference basis against e^(-k phi) d mu_phi.

    ``normalized=False`` drops the canonical-measure normalization and
    integrates against the raw e^(-(k+1) phi) mu0 instead; this variant is
    exposed for comparison runs only and no identity in this package
    relies on it.
    """
    model = phi.model
    model.require_level(k)
    n = model.nk(k)
    if model.supports_radial and phi.is_radial:
        psi = phi.radial_profile
        logw = np.log(model.radial_mu0_weights) - (k + 1) * psi
        if normalized:
            logw = logw - logsumexp(np.log(model.radial_mu0_weights) - psi)
        weights = np.exp(logw)
        diag = model.radial_section_sq(k) @ weights
        entries = np.diag(diag).astype(complex)
    else:
        values = phi.values
        logw = np.log(model.mu0_weights) - (k + 1) * values
        if normalized:
            logw = logw - logsumexp(np.log(model.mu0_weights) - values)
        weights = np.exp(logw)
        a = model.sections(k)
        entries = (a.conj() * weights) @ a.T
    try:
        form = HermForm(k, entries)
    except PositivityError as exc:
        eigs = np.linalg.eigvalsh(0.5 * (entries + entries.conj().T))
        cond = float("inf") if eigs[0] <= 0 else float(eigs[-1] / eigs[0])
        raise QuantizationError(
            f"Gram matrix numerically singular at level {k} "
            f"(condition estimate {cond:.3e}); the quadrature grid likely "
            f"cannot resolve N_k = {n} sections"
        ) from exc
    return form


def balancing(model: PolarizedModel, h: HermForm) -> HermForm:
    """One application of the balancing map b_k = project o fubini_study."""
    return project(fubini_study(model, h), h.level)


def beta_map(phi: PotentialField, k: int) -> PotentialField:
    """Bergman approximation beta_k = fubini_study o project at level k."""
    return fubini_study(phi.model, project(phi, k))


def orthonormal_orthogonal(h: HermForm, b: HermForm) -> tuple[np.ndarray, np.ndarray]:
    """Frame that is h-orthonormal and b-orthogonal, with its b-norms.

    Returns (frame, norms): columns satisfy S^H h S = I and
    S^H b S = diag(norms), norms ascending.  The norms are the generalized
    eigenvalues of (b, h).
    """
    if h.dim != b.dim:
        raise HermitianError("forms differ in dimension")
    norms, frame = scipy.linalg.eigh(b.entries, h.entries)
    if norms[0] <= 0.0:
        raise PositivityError("second form is not positive on the frame")
    return frame, norms
