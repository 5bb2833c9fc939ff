"""Spectral calculus on periodic grids: dd^c, Monge-Ampere densities,
quadrature, L^p norms, moduli of continuity and log-log fits.

Conventions.  ``dd^c = 2i d dbar`` and forms are expressed in the basis
``i dz_j ^ dzbar_k``, so for ``u = cos(2 pi x1)`` on a curve the single
entry of ``dd^c u`` is ``2 u_{z zbar} = (u_xx + u_yy)/2 = -2 pi^2 cos``.
Volumes are measured by ``det(omega) dx`` with ``dx`` the unit Lebesgue
measure on the torus; top forms ``omega^n`` differ from this by the
dimensional factor ``n!`` which we drop everywhere except in
:func:`laplacian_mass`, where the mixed form is evaluated literally.
"""
import math
import struct
from collections import defaultdict

import numpy as np
from scipy import stats

from . import _fourier
from .errors import (
    DeltaBelowResolution,
    InsufficientSamples,
    NonpositiveSample,
    NotOmegaPsh,
)
from .torus import grid_of

EPS_PSH = 1e-8


def ddc(u):
    """Complex Hessian ``dd^c u`` as a ``(..., n, n)`` Hermitian array."""
    u = np.asarray(u, dtype=float)
    n = u.ndim // 2
    return _fourier.assemble_hessian(_fourier.hessian_parts(u), n)


def omega_u(u, metric):
    """Matrix field of ``omega + dd^c u``."""
    return metric.entries + ddc(u)


def hermitian_det(A):
    n = A.shape[-1]
    if n == 1:
        return A[..., 0, 0].real
    return (A[..., 0, 0].real * A[..., 1, 1].real - np.abs(A[..., 0, 1]) ** 2)


def relative_eigenvalues(A, G):
    """Eigenvalues of ``A`` relative to ``G`` (roots of det(A - t G)).

    Closed form for n <= 2; returns an array ``(..., n)`` sorted ascending.
    """
    n = A.shape[-1]
    if n == 1:
        return (A[..., 0, 0].real / G[..., 0, 0].real)[..., None]
    detA = hermitian_det(A)
    detG = hermitian_det(G)
    b = (A[..., 0, 0].real * G[..., 1, 1].real + A[..., 1, 1].real * G[..., 0, 0].real
         - 2.0 * (A[..., 0, 1] * G[..., 1, 0]).real)
    root = np.sqrt(np.maximum(b * b - 4.0 * detA * detG, 0.0))
    # Pick the cancellation-free root first, recover the other from the product.
    big = np.where(b >= 0, (b + root), (b - root)) / (2.0 * detG)
    with np.errstate(divide="ignore", invalid="ignore"):
        other = np.where(big != 0, detA / (detG * np.where(big != 0, big, 1.0)), 0.0)
    lo = np.minimum(big, other)
    hi = np.maximum(big, other)
    return np.stack([lo, hi], axis=-1)


def min_relative_eigenvalue(u, metric):
    """Smallest eigenvalue of ``omega + dd^c u`` relative to ``omega``, per point."""
    return relative_eigenvalues(omega_u(u, metric), metric.entries)[..., 0]


def check_omega_psh(u, metric, psh_tol=EPS_PSH, A=None):
    if A is None:
        A = omega_u(u, metric)
    lam = relative_eigenvalues(A, metric.entries)[..., 0]
    worst = np.unravel_index(np.argmin(lam), lam.shape)
    if lam[worst] < -psh_tol:
        raise NotOmegaPsh(worst, lam[worst])
    return A


def ma_density(u, metric, psh_tol=EPS_PSH):
    """``det(omega + dd^c u) / det(omega)``, the density of ``omega_u^n``."""
    A = check_omega_psh(u, metric, psh_tol)
    return np.maximum(hermitian_det(A) / metric.det_omega, 0.0)


def integrate(f, metric=None):
    """Equal-weight periodic quadrature of ``f det(omega) dx``."""
    f = np.asarray(f, dtype=float)
    if metric is None:
        return float(f.mean())
    return float((f * metric.det_omega).mean())


def lp_norm(f, p, metric=None):
    """``(int |f|^p omega^n)^{1/p}``; ``p < 1`` gives the quasi-norm."""
    if p <= 0:
        raise ValueError("p must be positive")
    return integrate(np.abs(f) ** p, metric) ** (1.0 / p)


def laplacian_mass(u, metric, psh_tol=EPS_PSH):
    """Quadrature of ``omega_u ^ omega^{n-1}`` in the ``prod i dz ^ dzbar`` basis.

    Pointwise ``omega_u ^ omega^{n-1} = (n-1)! det(g) tr(g^{-1} A)``, so the
    flat surface gives ``int omega^2 = 2``.
    """
    A = check_omega_psh(u, metric, psh_tol)
    n = metric.n
    tr = np.einsum("...ij,...ji->...", np.linalg.inv(metric.entries), A).real
    return math.factorial(n - 1) * integrate(tr, metric)


def mixed_ma_gap(u, v, s, metric, psh_tol=EPS_PSH):
    """Pointwise ``MA(w)^{1/n} - (1-s) MA(u)^{1/n} - s MA(v)^{1/n}`` for
    ``w = (1-s) u + s v``; non-negative by Minkowski's determinant inequality."""
    n = metric.n
    mu = ma_density(u, metric, psh_tol) ** (1.0 / n)
    mv = ma_density(v, metric, psh_tol) ** (1.0 / n)
    mw = ma_density((1 - s) * u + s * v, metric, psh_tol) ** (1.0 / n)
    return mw - (1 - s) * mu - s * mv


def _ball_offsets(ndim, radius):
    """Integer offsets in a closed ball, one from each +/- pair (0 excluded)."""
    r = int(math.floor(radius + 1e-9))
    axes = [np.arange(-r, r + 1)] * ndim
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, ndim)
    norm2 = (grid**2).sum(axis=1)
    keep = (norm2 > 0) & (norm2 <= radius**2 + 1e-9)
    grid, norm2 = grid[keep], norm2[keep]
    # Lexicographically positive half.
    nz = grid != 0
    first = grid[np.arange(len(grid)), nz.argmax(axis=1)]
    half = first > 0
    return grid[half], np.sqrt(norm2[half])


def modulus_profile(u, deltas):
    """``tau(delta)`` for several ``delta`` at once (torus distance).

    ``tau(delta) = sup {|u(x) - u(y)| : |x - y| <= delta}`` over grid pairs,
    computed from shifted differences on a wrap-padded copy.
    """
    u = np.asarray(u, dtype=float)
    grid = grid_of(u)
    h = grid.spacing
    deltas = np.atleast_1d(np.asarray(deltas, dtype=float))
    if np.any(deltas < h - 1e-12):
        raise DeltaBelowResolution(f"delta below grid spacing {h}")
    if np.any(deltas > 0.5 + 1e-12):
        raise ValueError("delta must not exceed half a period")
    rmax = deltas.max() / h
    offsets, radii = _ball_offsets(u.ndim, rmax)
    pad = int(math.floor(rmax + 1e-9))
    padded = np.pad(u, pad, mode="wrap")
    R = grid.resolution
    by_radius = defaultdict(float)
    for off, rad in zip(offsets, radii):
        sl = tuple(slice(pad + o, pad + o + R) for o in off)
        d = float(np.abs(padded[sl] - u).max())
        key = round(float(rad), 9)
        if d > by_radius[key]:
            by_radius[key] = d
    keys = np.array(sorted(by_radius))
    vals = np.maximum.accumulate(np.array([by_radius[k] for k in keys]))
    out = np.zeros(len(deltas))
    for i, dl in enumerate(deltas):
        idx = np.searchsorted(keys, dl / h + 1e-9, side="right") - 1
        out[i] = vals[idx] if idx >= 0 else 0.0
    return out


def modulus_of_continuity(u, delta):
    return float(modulus_profile(u, [delta])[0])


def fit_exponent(samples):
    """OLS of ``log y`` on ``log x``: returns ``(slope, intercept, r_squared)``."""
    samples = list(samples)
    if len(samples) < 3:
        raise InsufficientSamples(f"need at least 3 samples, got {len(samples)}")
    x = np.array([s[0] for s in samples], dtype=float)
    y = np.array([s[1] for s in samples], dtype=float)
    if np.any(x <= 0) or np.any(y <= 0) or not np.all(np.isfinite(x * y)):
        raise NonpositiveSample("fit samples must be finite and strictly positive")
    res = stats.linregress(np.log(x), np.log(y))
    r2 = float(res.rvalue**2) if np.ptp(np.log(y)) > 0 else 1.0
    return float(res.slope), float(res.intercept), r2


def delta_ladder(grid, lo_cells=4, hi=0.25, count=None):
    """Distances ``k h`` for integer ``k`` in ``[lo_cells, hi/h]``, thinned
    geometrically to at most ``count`` rungs."""
    R = grid.resolution
    ks = np.arange(lo_cells, int(math.floor(hi * R + 1e-9)) + 1)
    if count is not None and len(ks) > count:
        idx = np.unique(np.round(np.geomspace(1, len(ks), count)).astype(int) - 1)
        ks = ks[idx]
    return ks / R


# -- binary field format -------------------------------------------------

_MAGIC = b"MAGE"
_VERSION = 1


def save_field(path, u):
    """Write ``u`` as ``MAGE | u32 version | u32 n | u32 R | f64le data``."""
    u = np.asarray(u, dtype="<f8")
    grid = grid_of(u)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<III", _VERSION, grid.complex_dim, grid.resolution))
        fh.write(np.ascontiguousarray(u).tobytes(order="C"))


def load_field(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        version, n, R = struct.unpack("<III", fh.read(12))
        if version != _VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    shape = (R,) * (2 * n)
    if data.size != R ** (2 * n):
        raise ValueError(f"{path}: expected {R ** (2 * n)} values, got {data.size}")
    return data.reshape(shape).astype(float)
