"""Finite-difference surrogate of the Newton operator, used as a preconditioner.

The spectral linearization ``w -> tr(C dd^c w) - d w`` is dense.  Its
second-order central-difference analogue is sparse and has the same
variable coefficients, so a sparse factorization of it is a much better
right preconditioner than a constant-coefficient FFT inverse when ``C``
or ``d`` vary strongly (penalized obstacle problems at large lambda).
"""
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

#: Largest system factorized exactly; beyond it (four real dimensions at
#: R >= 16) LU fill-in and incomplete factorizations are both too slow and
#: callers fall back to the FFT preconditioner.
EXACT_LU_MAX = 20000


def _shift_index(shape, shifts):
    idx = np.indices(shape)
    flat = np.zeros(shape, dtype=np.int64)
    for axis, s in enumerate(shifts):
        flat = flat * shape[axis] + (idx[axis] + s) % shape[axis]
    return flat.ravel()


def _stencils(ndim):
    """Second-derivative stencils keyed by axis pair, as ``[(shift, weight)]``
    in units of ``1/h^2``."""
    out = {}
    for a in range(ndim):
        e = [0] * ndim
        plus, minus = list(e), list(e)
        plus[a], minus[a] = 1, -1
        out[(a, a)] = [(tuple(plus), 1.0), (tuple(e), -2.0), (tuple(minus), 1.0)]
        for b in range(a + 1, ndim):
            st = []
            for sa, sb, w in ((1, 1, 0.25), (1, -1, -0.25), (-1, 1, -0.25), (-1, -1, 0.25)):
                s = list(e)
                s[a], s[b] = sa, sb
                st.append((tuple(s), w))
            out[(a, b)] = st
    return out


def _axis_coefficients(C, n):
    """Coefficients of ``d_a d_b`` (a <= b, real axes) in ``tr(C dd^c w)``."""
    ndim = 2 * n
    coeffs = {}

    def add(a, b, c):
        key = (min(a, b), max(a, b))
        coeffs[key] = coeffs.get(key, 0.0) + c

    for j in range(n):
        cjj = C[..., j, j].real
        add(2 * j, 2 * j, 0.5 * cjj)
        add(2 * j + 1, 2 * j + 1, 0.5 * cjj)
        for m in range(j + 1, n):
            c = C[..., m, j]
            # 2 (Re c * re - Im c * im), re = (xj xm + yj ym)/2, im = (xj ym - yj xm)/2
            add(2 * j, 2 * m, c.real)
            add(2 * j + 1, 2 * m + 1, c.real)
            add(2 * j, 2 * m + 1, -c.imag)
            add(2 * j + 1, 2 * m, c.imag)
    assert all(0 <= a < ndim for a, _ in coeffs)
    return coeffs


def fd_operator(C, diag, n):
    """Sparse matrix of ``w -> tr(C dd^c w) - diag * w`` (central differences)."""
    shape = diag.shape
    N = diag.size
    R = shape[0]
    h2 = (1.0 / R) ** 2
    rows_all, cols_all, vals_all = [], [], []
    rows = np.arange(N)
    stencils = _stencils(len(shape))
    center = np.zeros(N)
    for key, coef in _axis_coefficients(C, n).items():
        coef = np.broadcast_to(coef, shape).ravel() / h2
        for shift, w in stencils[key]:
            if not any(shift):
                center += w * coef
                continue
            rows_all.append(rows)
            cols_all.append(_shift_index(shape, shift))
            vals_all.append(w * coef)
    rows_all.append(rows)
    cols_all.append(rows)
    vals_all.append(center - np.broadcast_to(diag, shape).ravel())
    return sp.csc_matrix(
        (np.concatenate(vals_all), (np.concatenate(rows_all), np.concatenate(cols_all))),
        shape=(N, N),
    )


def factorize(M):
    """Callable applying the inverse of ``M`` (sparse LU)."""
    return spla.splu(M).solve
