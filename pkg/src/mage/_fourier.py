"""Low-level FFT helpers on the periodic grid [0, 1)^{2n}.

Axis ``2j`` carries Re z_j and axis ``2j + 1`` carries Im z_j.  Pure
second derivatives keep the Nyquist modes (their symbol ``-k^2`` is real);
products of first derivatives along different axes drop them, since an
odd derivative of a Nyquist mode is not representable on the grid.  The
discrete complex Hessian is therefore exactly Hermitian, and the flat
Laplacian has no kernel besides constants.
"""
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

_WORKERS = 1


def set_workers(workers):
    """Number of threads used by the FFT backend (1 = deterministic)."""
    global _WORKERS
    _WORKERS = max(1, int(workers))


def get_workers():
    return _WORKERS


@lru_cache(maxsize=32)
def real_wavenumbers(ndim, R, keep_nyquist=False):
    """Angular wavenumbers broadcastable against ``rfftn`` output."""
    ks = []
    for axis in range(ndim):
        if axis == ndim - 1:
            k = 2 * np.pi * sfft.rfftfreq(R, d=1.0 / R)
            if not keep_nyquist:
                k[-1] = 0.0
        else:
            k = 2 * np.pi * sfft.fftfreq(R, d=1.0 / R)
            if keep_nyquist:
                k[R // 2] = np.pi * R
            else:
                k[R // 2] = 0.0
        shape = [1] * ndim
        shape[axis] = k.size
        ks.append(k.reshape(shape))
    return tuple(ks)


@lru_cache(maxsize=16)
def full_wavenumbers(ndim, R):
    """Angular wavenumbers broadcastable against ``fftn`` output."""
    ks = []
    for axis in range(ndim):
        k = 2 * np.pi * sfft.fftfreq(R, d=1.0 / R)
        k[R // 2] = 0.0
        shape = [1] * ndim
        shape[axis] = R
        ks.append(k.reshape(shape))
    return tuple(ks)


@lru_cache(maxsize=16)
def laplacian_symbol(ndim, R):
    """Symbol of the flat real Laplacian."""
    ks = real_wavenumbers(ndim, R, keep_nyquist=True)
    sym = np.zeros(np.broadcast_shapes(*(k.shape for k in ks)))
    for k in ks:
        sym = sym - k**2
    return sym


def rfft(u):
    return sfft.rfftn(u, workers=_WORKERS)


def irfft(uh, shape):
    return sfft.irfftn(uh, s=shape, workers=_WORKERS)


def hessian_parts(u, uh=None):
    """Real fields making up the complex Hessian ``H = dd^c u``.

    Returns a dict keyed by ``(j, k)`` with ``j <= k``.  Diagonal entries
    are real arrays ``H_jj``; off-diagonal entries are pairs
    ``(Re H_jk, Im H_jk)``.  With ``dd^c = 2i d dbar`` the matrix in the
    basis ``i dz_j ^ dzbar_k`` is ``H_jk = 2 u_{j kbar}``.
    """
    ndim = u.ndim
    n = ndim // 2
    R = u.shape[0]
    if uh is None:
        uh = rfft(u)
    ks = real_wavenumbers(ndim, R)
    ke = real_wavenumbers(ndim, R, keep_nyquist=True)
    out = {}
    for j in range(n):
        kx, ky = ks[2 * j], ks[2 * j + 1]
        ex, ey = ke[2 * j], ke[2 * j + 1]
        out[(j, j)] = irfft(-0.5 * (ex * ex + ey * ey) * uh, u.shape)
        for m in range(j + 1, n):
            lx, ly = ks[2 * m], ks[2 * m + 1]
            re = irfft(-0.5 * (kx * lx + ky * ly) * uh, u.shape)
            im = irfft(-0.5 * (kx * ly - ky * lx) * uh, u.shape)
            out[(j, m)] = (re, im)
    return out


def assemble_hessian(parts, n):
    """Pack :func:`hessian_parts` output into a ``(..., n, n)`` complex array."""
    first = parts[(0, 0)]
    H = np.zeros(first.shape + (n, n), dtype=complex)
    for j in range(n):
        H[..., j, j] = parts[(j, j)]
        for m in range(j + 1, n):
            re, im = parts[(j, m)]
            H[..., j, m] = re + 1j * im
            H[..., m, j] = re - 1j * im
    return H


def trace_product(C, parts, n):
    """``tr(C H)`` for a pointwise Hermitian coefficient field ``C``."""
    total = np.zeros(parts[(0, 0)].shape)
    for j in range(n):
        total += C[..., j, j].real * parts[(j, j)]
        for m in range(j + 1, n):
            re, im = parts[(j, m)]
            c = C[..., m, j]
            total += 2.0 * (c.real * re - c.imag * im)
    return total


def complex_mixed_derivative(F, a, b):
    """``d_a dbar_b F`` for a complex field ``F`` (full FFT)."""
    ndim = F.ndim
    R = F.shape[0]
    ks = full_wavenumbers(ndim, R)
    Fh = sfft.fftn(F, workers=_WORKERS)
    # d_a = (d_x - i d_y)/2, dbar_b = (d_x + i d_y)/2 with d_x -> i k
    da = 0.5 * (1j * ks[2 * a] + ks[2 * a + 1])
    db = 0.5 * (1j * ks[2 * b] - ks[2 * b + 1])
    return sfft.ifftn(da * db * Fh, workers=_WORKERS)


def complex_derivative(F, a):
    """``d_a F = (d_x - i d_y) F / 2`` for a complex field ``F``."""
    ndim = F.ndim
    R = F.shape[0]
    ks = full_wavenumbers(ndim, R)
    Fh = sfft.fftn(F, workers=_WORKERS)
    return sfft.ifftn(0.5 * (1j * ks[2 * a] + ks[2 * a + 1]) * Fh, workers=_WORKERS)
