"""Polarized model backends: quadrature grids, section bases, measures.

Two backends are provided.  The projective-line backend carries the full
geometric structure of the anti-canonically polarized Riemann sphere:
a radial coordinate, spectral differentiation, the round reference
measure, and Monge-Ampere densities of radial potentials.  The discrete
backend is a finite atomic measure with prescribed section values; it has
no differential structure but supports every quantization-map operation,
which makes it useful for stress-testing the linear algebra.

Projective-line coordinates: the affine chart variable z is reduced to
u = |z|^2 / (1 + |z|^2) in (0, 1) and an angle theta.  In (u, theta) the
unit-mass Fubini-Study form is uniform, the anti-canonical reference form
has constant density 1/pi with respect to du dtheta, and the total volume
is 2.  Level-k sections are spanned by the monomials z^m, m = 0 .. 2k,
whose pointwise reference amplitudes are

    |z^m|^2_(ref) = u^m (1 - u)^(2k - m).

For a radial potential psi(u) the curvature form of the twisted metric
has density (2 + (u(1-u) psi')') / (2 pi), with the derivative taken by
barycentric spectral differentiation on the Gauss-Legendre nodes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np
from scipy.special import logsumexp

TWO_PI = 2.0 * math.pi

# Guard against accidentally gigantic kernels (N_k^2 times node count).
RESOURCE_LIMIT = 2**31


class ModelError(ValueError):
    """Unsupported level, missing capability, or resource limit."""


class KahlerConeError(ValueError):
    """A potential whose Monge-Ampere density is not strictly positive."""


# ---------------------------------------------------------------------------
# quadrature and barycentric spectral calculus


def gauss_legendre_01(m: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on (0, 1)."""
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (x + 1.0), 0.5 * w


def barycentric_weights(x: np.ndarray) -> np.ndarray:
    """Barycentric weights of the node set x, scaled to unit max magnitude.

    The products are accumulated as log magnitudes so that large node
    counts neither overflow nor underflow; barycentric formulas only use
    ratios of these weights, so the scaling is harmless.
    """
    x = np.asarray(x, dtype=float)
    m = x.size
    logw = np.empty(m)
    sign = np.empty(m)
    for i in range(m):
        d = np.delete(x[i] - x, i)
        logw[i] = -np.sum(np.log(np.abs(d)))
        sign[i] = 1.0 if (np.count_nonzero(d < 0) % 2 == 0) else -1.0
    logw -= logw.max()
    return sign * np.exp(logw)


def diff_matrix(x: np.ndarray, w: Optional[np.ndarray] = None) -> np.ndarray:
    """Spectral differentiation matrix on arbitrary nodes (barycentric form)."""
    x = np.asarray(x, dtype=float)
    if w is None:
        w = barycentric_weights(x)
    dx = x[:, None] - x[None, :]
    np.fill_diagonal(dx, 1.0)
    d = (w[None, :] / w[:, None]) / dx
    np.fill_diagonal(d, 0.0)
    # negative-sum trick: rows annihilate constants exactly
    np.fill_diagonal(d, -d.sum(axis=1))
    return d


def barycentric_interpolate(
    x: np.ndarray, fx: np.ndarray, xq: np.ndarray, w: Optional[np.ndarray] = None
) -> np.ndarray:
    """Evaluate the polynomial interpolant of (x, fx) at query points xq."""
    x = np.asarray(x, dtype=float)
    fx = np.asarray(fx, dtype=float)
    xq = np.atleast_1d(np.asarray(xq, dtype=float))
    if w is None:
        w = barycentric_weights(x)
    out = np.empty(xq.size)
    for j, xv in enumerate(xq):
        d = xv - x
        hit = np.nonzero(d == 0.0)[0]
        if hit.size:
            out[j] = fx[hit[0]]
            continue
        t = w / d
        out[j] = np.dot(t, fx) / np.sum(t)
    return out


@dataclass(frozen=True)
class QuadratureGrid:
    """Node coordinates and positive weights on a coordinate domain.

    The weights must reproduce the analytic volume of the coordinate
    domain; builders state that volume explicitly so the invariant can be
    checked at construction.
    """

    nodes: np.ndarray
    weights: np.ndarray
    domain_volume: float

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if weights.ndim != 1 or nodes.shape[0] != weights.shape[0]:
            raise ModelError("grid nodes and weights must have matching length")
        if np.any(weights <= 0.0):
            raise ModelError("quadrature weights must be strictly positive")
        total = float(weights.sum())
        if not math.isclose(total, self.domain_volume, rel_tol=1e-12, abs_tol=1e-12):
            raise ModelError(
                f"weights sum to {total!r}, expected domain volume {self.domain_volume!r}"
            )
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return self.weights.shape[0]


# ---------------------------------------------------------------------------
# potentials


@dataclass(frozen=True)
class PotentialField:
    """A real potential sampled on a model's quadrature nodes.

    ``radial_profile`` holds the values on the radial grid when the field
    is rotation invariant; the 2-D node values are then tiled on demand.
    When both representations are supplied they must agree.
    """

    model: "PolarizedModel"
    node_values: Optional[np.ndarray] = None
    radial_profile: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.node_values is None and self.radial_profile is None:
            raise ModelError("potential needs node values or a radial profile")
        if self.node_values is not None:
            v = np.asarray(self.node_values, dtype=float)
            if v.shape != (self.model.node_count,):
                raise ModelError(
                    f"potential has {v.shape} values, expected ({self.model.node_count},)"
                )
            if not np.all(np.isfinite(v)):
                raise ModelError("potential values must be finite")
            object.__setattr__(self, "node_values", v)
        if self.radial_profile is not None:
            if not self.model.supports_radial:
                raise ModelError("radial profile on a backend without radial structure")
            p = np.asarray(self.radial_profile, dtype=float)
            if p.shape != (self.model.radial_count,):
                raise ModelError(
                    f"profile has {p.shape} values, expected ({self.model.radial_count},)"
                )
            if not np.all(np.isfinite(p)):
                raise ModelError("potential profile must be finite")
            object.__setattr__(self, "radial_profile", p)
        if self.node_values is not None and self.radial_profile is not None:
            tiled = self.model.tile_radial(self.radial_profile)
            err = float(np.max(np.abs(tiled - self.node_values)))
            scale = 1.0 + float(np.max(np.abs(self.node_values)))
            if err > 1e-10 * scale:
                raise ModelError("radial profile does not reproduce node values")

    @cached_property
    def values(self) -> np.ndarray:
        """Values at every 2-D quadrature node (tiled from the profile if needed)."""
        if self.node_values is not None:
            return self.node_values
        return self.model.tile_radial(self.radial_profile)

    @property
    def is_radial(self) -> bool:
        return self.radial_profile is not None

    def require_profile(self) -> np.ndarray:
        if self.radial_profile is None:
            raise ModelError("operation needs a rotation-invariant potential")
        return self.radial_profile

    def shifted(self, c: float) -> "PotentialField":
        values = None if self.node_values is None else self.node_values + c
        profile = None if self.radial_profile is None else self.radial_profile + c
        return PotentialField(self.model, values, profile)


# ---------------------------------------------------------------------------
# model backends


class PolarizedModel:
    """Common interface of the quantization backends."""

    complex_dim: int
    volume: float
    k_max: int
    supports_radial: bool = False

    # subclasses fill these in
    grid: QuadratureGrid
    mu0_density: np.ndarray

    @property
    def node_count(self) -> int:
        return self.grid.size

    @property
    def node_weights(self) -> np.ndarray:
        return self.grid.weights

    @cached_property
    def mu0_weights(self) -> np.ndarray:
        """Quadrature weights of the reference measure (sums to the volume)."""
        return self.node_weights * self.mu0_density

    @property
    def levels(self) -> range:
        return range(1, self.k_max + 1)

    def require_level(self, k: int) -> None:
        if not isinstance(k, (int, np.integer)) or k < 1 or k > self.k_max:
            raise ModelError(f"level {k} outside the supported range 1..{self.k_max}")

    def nk(self, k: int) -> int:
        raise NotImplementedError

    def sections(self, k: int) -> np.ndarray:
        """Complex amplitude matrix A with A[i, x] the i-th basis section at node x.

        The pointwise reference kernel is K_ij(x) = A[i, x] conj(A[j, x]).
        """
        raise NotImplementedError

    def potential(
        self, values: Optional[np.ndarray] = None, profile: Optional[np.ndarray] = None
    ) -> PotentialField:
        return PotentialField(self, values, profile)

    def zero_potential(self) -> PotentialField:
        if self.supports_radial:
            return PotentialField(self, None, np.zeros(self.radial_count))
        return PotentialField(self, np.zeros(self.node_count), None)

    # radial structure, overridden by the projective-line backend
    radial_count: int = 0

    def tile_radial(self, profile: np.ndarray) -> np.ndarray:
        raise ModelError("backend has no radial structure")

    def require_radial(self) -> None:
        if not self.supports_radial:
            raise ModelError("operation requires the radial (projective line) backend")


class ProjectiveLineModel(PolarizedModel):
    """Anti-canonically polarized projective line with the round reference metric.

    The quadrature grid is the tensor product of ``radial_nodes``
    Gauss-Legendre points in u with ``angular_nodes`` uniform angles; node
    index order is radial-major.  Angular sums annihilate the off-diagonal
    monomial cross terms exactly whenever angular_nodes exceeds the largest
    frequency present, which is why builders should keep
    angular_nodes > 4 k_max.
    """

    complex_dim = 1
    supports_radial = True

    def __init__(self, k_max: int, radial_nodes: int, angular_nodes: int):
        if k_max < 1:
            raise ModelError("k_max must be at least 1")
        if radial_nodes < 16:
            raise ModelError("need at least 16 radial nodes")
        if angular_nodes < 8:
            raise ModelError("need at least 8 angular nodes")
        nk_top = 2 * k_max + 1
        if nk_top * nk_top * radial_nodes * angular_nodes > RESOURCE_LIMIT:
            raise ModelError("kernel storage would exceed the resource limit")
        self.k_max = int(k_max)
        self.volume = 2.0
        self.radial_count = int(radial_nodes)
        self.angular_count = int(angular_nodes)

        self.u, self.radial_weights = gauss_legendre_01(radial_nodes)
        self.theta = TWO_PI * np.arange(angular_nodes) / angular_nodes
        self._bary = barycentric_weights(self.u)
        self.diff = diff_matrix(self.u, self._bary)

        uu, tt = np.meshgrid(self.u, self.theta, indexing="ij")
        nodes = np.column_stack([uu.ravel(), tt.ravel()])
        weights = np.repeat(
            self.radial_weights * (TWO_PI / angular_nodes), angular_nodes
        )
        self.grid = QuadratureGrid(nodes, weights, domain_volume=TWO_PI)
        # round reference: density 1/pi with respect to du dtheta, volume 2
        self.mu0_density = np.full(self.node_count, 1.0 / math.pi)
        self._sections: dict[int, np.ndarray] = {}
        self._radial_sq: dict[int, np.ndarray] = {}

    def nk(self, k: int) -> int:
        self.require_level(k)
        return 2 * k + 1

    @cached_property
    def radial_mu0_weights(self) -> np.ndarray:
        """Radial weights of the reference measure (sums to the volume)."""
        return 2.0 * self.radial_weights

    def radial_section_sq(self, k: int) -> np.ndarray:
        """Squared reference amplitudes u^m (1-u)^(2k-m) on the radial grid.

        Computed through logarithms; entries at high level and extreme
        nodes may be far below unit scale but every term is nonnegative,
        so downstream positive sums lose no relative accuracy.
        """
        self.require_level(k)
        cached = self._radial_sq.get(k)
        if cached is None:
            m = np.arange(2 * k + 1, dtype=float)[:, None]
            logu = np.log(self.u)[None, :]
            log1mu = np.log1p(-self.u)[None, :]
            cached = np.exp(m * logu + (2 * k - m) * log1mu)
            self._radial_sq[k] = cached
        return cached

    def sections(self, k: int) -> np.ndarray:
        self.require_level(k)
        cached = self._sections.get(k)
        if cached is None:
            m = np.arange(2 * k + 1, dtype=float)
            radial = np.sqrt(self.radial_section_sq(k))
            phases = np.exp(1j * np.outer(m, self.theta))
            cached = (radial[:, :, None] * phases[:, None, :]).reshape(
                2 * k + 1, self.node_count
            )
            self._sections[k] = cached
        return cached

    def tile_radial(self, profile: np.ndarray) -> np.ndarray:
        profile = np.asarray(profile, dtype=float)
        if profile.shape != (self.radial_count,):
            raise ModelError("profile length does not match the radial grid")
        return np.repeat(profile, self.angular_count)

    def radialize(self, values: np.ndarray, tol: float = 1e-10) -> np.ndarray:
        """Extract the radial profile of rotation-invariant node values."""
        grid = np.asarray(values, dtype=float).reshape(
            self.radial_count, self.angular_count
        )
        profile = grid[:, 0].copy()
        spread = float(np.max(np.abs(grid - profile[:, None])))
        if spread > tol * (1.0 + float(np.max(np.abs(profile)))):
            raise ModelError("node values are not rotation invariant")
        return profile

    def radial_laplacian(self, profile: np.ndarray) -> np.ndarray:
        """The degenerate radial operator (u(1-u) psi')' on the spectral grid."""
        dpsi = self.diff @ profile
        return self.diff @ (self.u * (1.0 - self.u) * dpsi)

    def ma_profile(self, profile: np.ndarray) -> np.ndarray:
        """Monge-Ampere density of a radial potential, w.r.t. du dtheta."""
        return (2.0 + self.radial_laplacian(profile)) / TWO_PI

    def interpolate_radial(self, profile: np.ndarray, uq: np.ndarray) -> np.ndarray:
        return barycentric_interpolate(self.u, profile, uq, self._bary)


class DiscreteModel(PolarizedModel):
    """Finite atomic backend with prescribed section values.

    The base measure is a probability measure on ``points`` atoms and the
    nominal volume is 1, so the reference functionals normalize the same
    way as on the geometric backend.  Section values are given per level
    as complex arrays of shape (N_k, points) and must have full row rank.
    """

    complex_dim = 0
    supports_radial = False

    def __init__(self, section_values: dict[int, np.ndarray], base_weights: np.ndarray):
        base = np.asarray(base_weights, dtype=float)
        if base.ndim != 1 or base.size < 1:
            raise ModelError("base weights must be a nonempty vector")
        if np.any(base <= 0.0):
            raise ModelError("base weights must be strictly positive")
        total = float(base.sum())
        if not math.isclose(total, 1.0, rel_tol=1e-9, abs_tol=1e-12):
            raise ModelError("base weights must sum to 1")
        if not section_values:
            raise ModelError("need section values for at least one level")
        levels = sorted(int(k) for k in section_values)
        if levels[0] < 1:
            raise ModelError("levels must be positive integers")
        self._values: dict[int, np.ndarray] = {}
        for k in levels:
            arr = np.asarray(section_values[k], dtype=complex)
            if arr.ndim != 2 or arr.shape[1] != base.size:
                raise ModelError(f"level {k}: section values must be (N_k, points)")
            if arr.shape[0] > arr.shape[1]:
                raise ModelError(f"level {k}: more sections than atoms, rank deficient")
            sv = np.linalg.svd(arr, compute_uv=False)
            if sv[-1] <= 1e-13 * sv[0]:
                raise ModelError(f"level {k}: section values are rank deficient")
            self._values[k] = arr
        self._levels = levels
        self.k_max = levels[-1]
        self.volume = 1.0
        m = base.size
        self.grid = QuadratureGrid(
            np.arange(m, dtype=float)[:, None], base, domain_volume=total
        )
        self.mu0_density = np.ones(m)

    @property
    def levels(self) -> list[int]:
        return list(self._levels)

    def require_level(self, k: int) -> None:
        if int(k) not in self._values:
            raise ModelError(f"level {k} not among the supported levels {self._levels}")

    def nk(self, k: int) -> int:
        self.require_level(k)
        return self._values[int(k)].shape[0]

    def sections(self, k: int) -> np.ndarray:
        self.require_level(k)
        return self._values[int(k)]


def build_p1_model(
    k_max: int, radial_nodes: Optional[int] = None, angular_nodes: Optional[int] = None
) -> ProjectiveLineModel:
    """Projective-line backend with grid sizes adequate up to level k_max.

    Defaults keep Gram integrals of every level exact (radial) and keep the
    angular grid above the largest monomial cross frequency (angular).
    """
    if radial_nodes is None:
        radial_nodes = max(64, 2 * k_max + 16)
    if angular_nodes is None:
        angular_nodes = 4 * k_max + 8
    return ProjectiveLineModel(k_max, radial_nodes, angular_nodes)


def build_discrete_model(
    section_values: dict[int, np.ndarray], base_weights: np.ndarray
) -> DiscreteModel:
    return DiscreteModel(section_values, base_weights)


def discrete_model_from_json(source) -> DiscreteModel:
    """Load a discrete model from a JSON file path or parsed document.

    Expected document shape::

        {"points": m, "weights": [...], "levels": {"k": [[[re, im], ...], ...]}}
    """
    if isinstance(source, (str, bytes)):
        with open(source, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    else:
        doc = source
    try:
        m = int(doc["points"])
        weights = np.asarray(doc["weights"], dtype=float)
        levels_doc = doc["levels"]
    except (KeyError, TypeError) as exc:
        raise ModelError(f"malformed discrete model document: {exc}") from exc
    if weights.shape != (m,):
        raise ModelError("weights length does not match the declared point count")
    values: dict[int, np.ndarray] = {}
    for key, rows in levels_doc.items():
        arr = np.asarray(rows, dtype=float)
        if arr.ndim != 3 or arr.shape[2] != 2 or arr.shape[1] != m:
            raise ModelError(f"level {key}: expected (N_k, points, 2) re/im entries")
        values[int(key)] = arr[..., 0] + 1j * arr[..., 1]
    return DiscreteModel(values, weights)


def discrete_model_to_json(model: DiscreteModel) -> dict:
    doc = {
        "points": model.node_count,
        "weights": model.node_weights.tolist(),
        "levels": {},
    }
    for k in model.levels:
        arr = model.sections(k)
        doc["levels"][str(k)] = np.stack([arr.real, arr.imag], axis=-1).tolist()
    return doc


# ---------------------------------------------------------------------------
# measures and integration


def canonical_measure(phi: PotentialField) -> np.ndarray:
    """Quadrature weights of the probability measure e^(-phi) mu0 / Z.

    The normalization is done in log space, so arbitrarily large potential
    swings (geodesic rays at large time) do not overflow.  The returned
    weights sum to 1 exactly up to rounding.
    """
    model = phi.model
    logw = np.log(model.mu0_weights) - phi.values
    return np.exp(logw - logsumexp(logw))


def radial_canonical_measure(model: ProjectiveLineModel, profile: np.ndarray) -> np.ndarray:
    """Radial reduction of ``canonical_measure`` for rotation-invariant data."""
    logw = np.log(model.radial_mu0_weights) - profile
    return np.exp(logw - logsumexp(logw))


def ma_density(phi: PotentialField) -> np.ndarray:
    """Monge-Ampere density of an admissible radial potential at the 2-D nodes.

    The density is taken with respect to the coordinate quadrature, so its
    integral against the node weights is the model volume.  A nonpositive
    value anywhere means phi left the Kahler cone.
    """
    model = phi.model
    model.require_radial()
    profile = phi.require_profile()
    dens = model.ma_profile(profile)
    if np.any(dens <= 0.0):
        bad = int(np.argmin(dens))
        raise KahlerConeError(
            f"not a Kahler potential: density {dens[bad]:.3e} at u={model.u[bad]:.6f}"
        )
    return model.tile_radial(dens)


def integrate(values: np.ndarray, measure_weights: np.ndarray) -> float:
    """Quadrature pairing of node values against measure weights."""
    values = np.asarray(values, dtype=float)
    measure_weights = np.asarray(measure_weights, dtype=float)
    if values.shape != measure_weights.shape:
        raise ModelError("integrand and measure have different lengths")
    return float(np.dot(values, measure_weights))
