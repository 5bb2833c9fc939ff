"""Flat complex tori C^n / (Z^n + i Z^n), their grids and Hermitian metrics.

A scalar field on a grid is a plain ``numpy`` array of shape ``(R,) * 2n``;
the grid is recoverable from the shape (:func:`grid_of`).  Real axis
``2j`` is Re z_j and axis ``2j + 1`` is Im z_j, so ``x1 = Re z_1``.

Forms are written in the basis ``i dz_j ^ dzbar_k``: the standard flat
form ``omega_0 = sum_j i dz_j ^ dzbar_j`` is the identity matrix.
"""
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import _fourier
from .errors import (
    DimensionUnsupported,
    GridTooLarge,
    MetricNotPositive,
    ResolutionInvalid,
)

#: Default cap on R^{2n}; a 2n-dim grid of complex 2x2 matrices at this
#: size already needs ~130 MB.
MAX_POINTS = 2**21

EPS_METRIC = 1e-6

FLAT_KAHLER = "flat_kahler"
CONFORMAL_HERMITIAN = "conformal_hermitian"


@dataclass(frozen=True)
class GridSpec:
    complex_dim: int
    resolution: int

    @property
    def ndim(self):
        return 2 * self.complex_dim

    @property
    def spacing(self):
        return 1.0 / self.resolution

    @property
    def shape(self):
        return (self.resolution,) * self.ndim

    @property
    def npoints(self):
        return self.resolution**self.ndim

    def coords(self, sparse=True):
        """Coordinate arrays ``(j_1/R, ..., j_{2n}/R)``."""
        x = np.arange(self.resolution) / self.resolution
        return np.meshgrid(*([x] * self.ndim), indexing="ij", sparse=sparse)

    def zeros(self):
        return np.zeros(self.shape)


def make_grid(n, resolution, max_points=MAX_POINTS):
    if n not in (1, 2):
        raise DimensionUnsupported(f"complex dimension {n} not in {{1, 2}}")
    if int(resolution) != resolution or resolution < 8 or resolution % 2:
        raise ResolutionInvalid(
            f"resolution must be an even integer >= 8, got {resolution}"
        )
    grid = GridSpec(int(n), int(resolution))
    if grid.npoints > max_points:
        raise GridTooLarge(
            f"{grid.npoints} grid points exceed the budget of {max_points}"
        )
    return grid


def grid_of(u):
    """GridSpec implied by the shape of a scalar field."""
    u = np.asarray(u)
    if u.ndim not in (2, 4) or len(set(u.shape)) != 1:
        raise ValueError(f"not a scalar field on a cubic torus grid: {u.shape}")
    return GridSpec(u.ndim // 2, u.shape[0])


@dataclass(frozen=True)
class MetricFamily:
    """Metric descriptor as read from experiment configs.

    ``psi_coefficients`` is a list of ``(amplitude, wavevector, phase)``
    giving ``psi(x) = sum amplitude * cos(2 pi <wavevector, x> + phase)``.
    """

    family: str = FLAT_KAHLER
    psi_coefficients: tuple = ()

    @classmethod
    def from_dict(cls, d):
        coeffs = []
        for term in d.get("psi_coefficients", []) or []:
            if isinstance(term, dict):
                coeffs.append((float(term["amplitude"]),
                               tuple(int(k) for k in term["wavevector"]),
                               float(term.get("phase", 0.0))))
            else:
                amp, wv, *rest = term
                coeffs.append((float(amp), tuple(int(k) for k in wv),
                               float(rest[0]) if rest else 0.0))
        return cls(d.get("family", FLAT_KAHLER), tuple(coeffs))

    def to_dict(self):
        return {
            "family": self.family,
            "psi_coefficients": [
                {"amplitude": a, "wavevector": list(k), "phase": p}
                for a, k, p in self.psi_coefficients
            ],
        }


def conformal(*terms):
    """Shorthand: ``conformal((0.1, (1, 0, 0, 0)))`` etc."""
    coeffs = tuple((float(t[0]), tuple(t[1]), float(t[2]) if len(t) > 2 else 0.0)
                   for t in terms)
    return MetricFamily(CONFORMAL_HERMITIAN, coeffs)


def trig_polynomial(grid, coefficients):
    """Evaluate ``sum a cos(2 pi <k, x> + phase)`` on the grid."""
    xs = grid.coords()
    out = np.zeros(grid.shape)
    for amp, wv, phase in coefficients:
        if len(wv) != grid.ndim:
            raise ValueError(f"wavevector {wv} does not match 2n = {grid.ndim}")
        arg = sum(2 * np.pi * k * x for k, x in zip(wv, xs)) + phase
        out = out + amp * np.cos(arg)
    return out


@dataclass(frozen=True, eq=False)
class MetricField:
    grid: GridSpec
    entries: np.ndarray
    det_omega: np.ndarray
    family_tag: str
    conformal_exponent: Optional[np.ndarray] = None

    @property
    def n(self):
        return self.grid.complex_dim

    @property
    def volume(self):
        """Quadrature of ``det omega`` (the total volume in our normalization)."""
        return float(self.det_omega.mean())

    def inverse(self):
        return np.linalg.inv(self.entries)

    def max_eigenvalue(self):
        return float(np.linalg.eigvalsh(self.entries).max())


def _check_positive(entries, eps):
    eig = np.linalg.eigvalsh(entries)
    lo, hi = eig[..., 0], eig[..., -1]
    if not np.all(np.isfinite(eig)) or np.any(lo <= 0):
        raise MetricNotPositive("metric has non-positive or non-finite eigenvalues")
    # Scale-free floor: a constant conformal factor never breaks positivity.
    ratio = lo.min() / hi.max()
    if ratio < eps:
        raise MetricNotPositive(
            f"metric eigenvalue ratio {ratio:.3e} below floor {eps:.1e}"
        )


def make_metric(grid, family=None, eps_metric=EPS_METRIC):
    family = family or MetricFamily()
    n = grid.complex_dim
    eye = np.eye(n, dtype=complex)
    if family.family == FLAT_KAHLER:
        entries = np.broadcast_to(eye, grid.shape + (n, n)).copy()
        det = np.ones(grid.shape)
        psi = None
    elif family.family == CONFORMAL_HERMITIAN:
        psi = trig_polynomial(grid, family.psi_coefficients)
        scale = np.exp(psi)
        entries = scale[..., None, None] * eye
        det = np.exp(n * psi)
    else:
        raise ValueError(f"unknown metric family {family.family!r}")
    _check_positive(entries, eps_metric)
    entries.setflags(write=False)
    det.setflags(write=False)
    return MetricField(grid, entries, det, family.family, psi)


@dataclass(frozen=True)
class CurvatureConstants:
    """Torsion constant ``B`` plus lazily filled ``K`` and ``A`` slots."""

    B: float
    K: Optional[float] = None
    A: Optional[float] = None

    def with_K(self, K):
        return replace(self, K=float(K))

    def with_A(self, A):
        return replace(self, A=float(A))


def ddc_omega_ratio(metric):
    """Pointwise ``2n dd^c omega / omega^2`` as a scalar field (n = 2).

    On a complex surface both forms are top-degree, so the bound
    ``-B omega^2 <= 2n dd^c omega <= B omega^2`` is a scalar ratio.  With
    ``Pi = (i dz1^dzbar1)^(i dz2^dzbar2)`` one has ``omega^2 = 2 det(g) Pi``
    and ``dd^c omega = 2 (d1 dbar1 g22 + d2 dbar2 g11 - d1 dbar2 g21
    - d2 dbar1 g12) Pi``.
    """
    g = metric.entries
    d = _fourier.complex_mixed_derivative
    coef = 2.0 * (
        d(g[..., 1, 1], 0, 0) + d(g[..., 0, 0], 1, 1)
        - d(g[..., 1, 0], 0, 1) - d(g[..., 0, 1], 1, 0)
    )
    n = metric.n
    return (2 * n * coef.real) / (2.0 * metric.det_omega)


def curvature_constants(metric):
    """Compute ``B``; ``K`` and ``A`` are left for :mod:`mage.regularization`.

    For n = 1 there are no (2,2)-forms and for n <= 2 the (3,3)-form
    ``dω ∧ d^c ω`` vanishes identically, so only the first bound is live
    and only on surfaces.
    """
    if metric.n == 1:
        return CurvatureConstants(B=0.0)
    ratio = ddc_omega_ratio(metric)
    return CurvatureConstants(B=float(np.abs(ratio).max()))


def d_omega_norm(metric):
    """Sup norm of the (2,1)-part ``d omega`` of the metric (zero iff closed).

    The coefficient of ``dz_1 ^ dz_2 ^ dzbar_k`` in ``d omega`` is
    ``i (d_1 g_{2k} - d_2 g_{1k})``; the (1,2)-part is its conjugate.
    """
    if metric.n == 1:
        return 0.0
    g = metric.entries
    d = _fourier.complex_derivative
    worst = 0.0
    for k in range(2):
        comp = d(g[..., 1, k], 0) - d(g[..., 0, k], 1)
        worst = max(worst, float(np.abs(comp).max()))
    return worst
