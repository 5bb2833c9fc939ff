"""Regularization of quasi-psh functions on the flat torus.

The mollifier is the compactly supported radial kernel

    rho(s) = eta / (1 - s)^2 * exp(1 / (s - 1))   for 0 <= s < 1,

and ``rho_t(u)(z) = t^{-2n} int u(z + zeta) rho(|zeta|^2 / t^2) dV(zeta)``.
On the torus the exponential map is a translation, so ``rho_t`` is a
periodic convolution.  We sample the kernel on the grid offsets inside the
ball of radius ``t`` and renormalize the discrete weights to sum to one,
which makes constants exactly invariant; ``eta`` therefore only enters
the continuum normalization, and :func:`kernel_eta` computes it for
reference and for moments of the kernel.

The Kiselman-Legendre transform

    U_{delta,c} = inf_{t in (0, delta]} rho_t(u) + K (t^2 - delta^2)
                  + K (t - delta) - c log(t / delta)

is evaluated as a minimum over a geometric ladder of scales ending at
``delta``.
"""
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.fft as sfft

from . import _fourier
from .errors import HypothesisViolated, QuadratureNotConverged, ScaleOutOfRange
from .spectral import (
    EPS_PSH,
    check_omega_psh,
    fit_exponent,
    integrate,
    min_relative_eigenvalue,
    modulus_profile,
)
from .torus import grid_of

QUAD_TOL = 1e-8
MONOTONE_SLACK = 1e-10
#: Above this many (offset x point) products the convolution switches to FFT.
DIRECT_BUDGET = 2 * 10**7


def radial_profile(s):
    """Unnormalized profile ``exp(1/(s-1)) / (1-s)^2`` on ``[0, 1)``, zero beyond."""
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    inside = (s >= 0) & (s < 1)
    one_minus = 1.0 - s[inside]
    out[inside] = np.exp(-1.0 / one_minus) / one_minus**2
    return out


def _radial_integral(n, nodes, weights):
    # int_{C^n} rho(|z|^2) dV = (pi^n / (n-1)!) int_0^1 rho(s) s^{n-1} ds
    vals = radial_profile(nodes) * nodes ** (n - 1)
    return math.pi**n / math.factorial(n - 1) * float(np.dot(weights, vals))


def kernel_eta(n, quad_resolution=64):
    """Normalization ``eta`` with ``int_{C^n} rho(|z|^2) dV = 1``.

    Gauss-Legendre on ``[0, 1]`` in the variable ``s = |z|^2``; the result
    is compared with the rule of twice the size and
    :class:`QuadratureNotConverged` is raised if they differ by more than
    ``1e-8`` relative.
    """
    if n not in (1, 2):
        raise ValueError(f"complex dimension {n} not in {{1, 2}}")
    estimates = []
    for m in (quad_resolution, 2 * quad_resolution):
        x, w = np.polynomial.legendre.leggauss(int(m))
        estimates.append(_radial_integral(n, 0.5 * (x + 1), 0.5 * w))
    lo, hi = estimates
    if abs(hi - lo) > QUAD_TOL * abs(hi):
        raise QuadratureNotConverged(
            f"radial quadrature moved by {abs(hi - lo) / hi:.2e} under doubling "
            f"({quad_resolution} -> {2 * quad_resolution} nodes)"
        )
    return 1.0 / hi


def default_t_grid(grid, t_max=0.25, count=12):
    """Geometric ladder from one grid spacing up to ``t_max``."""
    h = grid.spacing
    return tuple(float(t) for t in np.geomspace(h, t_max, count))


@dataclass(frozen=True)
class MollifierKernel:
    n: int
    eta: float
    quad_resolution: int
    nodes: np.ndarray = field(repr=False)
    radial_profile: np.ndarray = field(repr=False)
    t_grid: tuple = ()

    def to_json(self):
        return {"n": self.n, "eta": self.eta, "quad_resolution": self.quad_resolution}

    def second_moment(self, grid, t):
        """``sum_j w_j |zeta_j / t|^2`` for the discrete weights at scale ``t``.

        Mollifying ``|z|^2 / 2`` adds exactly ``t^2`` times half of this.
        """
        offsets, w = discrete_weights(grid.complex_dim, grid.resolution, float(t))
        r2 = (offsets.astype(float) ** 2).sum(axis=1) * (grid.spacing / t) ** 2
        return float(np.dot(w, r2))

    def flat_monotone_bound(self, grid, t_grid=None):
        """Largest secant slope of ``t^2 m_2(t) / 2`` along the ladder, with
        ``m_2`` the discrete second moment.

        For an omega_0-psh ``u`` on the flat torus the second-order
        expansion ``rho_t u ~ u + t^2 m_2(t) Delta u / (4n)`` together with
        ``Delta u >= -2n`` bounds :func:`monotone_constant` by this number.
        In the continuum ``m_2`` is constant and the bound is ``m_2 / 2``.
        """
        ts = sorted(t_grid if t_grid is not None else self.t_grid)
        s = [t * t * self.second_moment(grid, t) for t in ts]
        slopes = [(b - a) / (t2**2 - t1**2)
                  for a, b, t1, t2 in zip(s[:-1], s[1:], ts[:-1], ts[1:])]
        return 0.5 * max(slopes) if slopes else 0.0


def make_kernel(grid, t_grid=None, quad_resolution=64):
    n = grid.complex_dim
    eta = kernel_eta(n, quad_resolution)
    x, _ = np.polynomial.legendre.leggauss(quad_resolution)
    nodes = 0.5 * (x + 1)
    ts = tuple(sorted(float(t) for t in (t_grid or default_t_grid(grid))))
    for t in ts:
        _check_scale(grid, t)
    return MollifierKernel(n, eta, quad_resolution, nodes,
                           eta * radial_profile(nodes), ts)


def _check_scale(grid, t):
    h = grid.spacing
    if not (h * (1 - 1e-9) <= t <= 0.25 * (1 + 1e-9)):
        raise ScaleOutOfRange(f"scale t = {t} outside [{h}, 0.25]")


@lru_cache(maxsize=64)
def discrete_weights(n, R, t):
    """Integer offsets strictly inside the ball of radius ``t`` and their
    normalized kernel weights."""
    r = t * R
    m = int(math.floor(r))
    axis = np.arange(-m, m + 1)
    mesh = np.stack(np.meshgrid(*([axis] * (2 * n)), indexing="ij"), axis=-1)
    offsets = mesh.reshape(-1, 2 * n)
    s = (offsets.astype(float) ** 2).sum(axis=1) / r**2
    keep = s < 1.0
    offsets, s = offsets[keep], s[keep]
    w = radial_profile(s)
    w = w / w.sum()
    offsets.setflags(write=False)
    w.setflags(write=False)
    return offsets, w


def _convolve_direct(u, offsets, w):
    pad = int(np.abs(offsets).max()) if len(offsets) else 0
    padded = np.pad(u, pad, mode="wrap")
    R = u.shape[0]
    out = np.zeros_like(u)
    for off, wj in zip(offsets, w):
        sl = tuple(slice(pad + o, pad + o + R) for o in off)
        out += wj * padded[sl]
    return out


def _convolve_fft(u, offsets, w):
    R = u.shape[0]
    ker = np.zeros(u.shape)
    # the kernel is even, so correlation and convolution coincide
    np.add.at(ker, tuple((offsets % R).T), w)
    workers = _fourier.get_workers()
    kh = sfft.rfftn(ker, workers=workers)
    return sfft.irfftn(sfft.rfftn(u, workers=workers) * kh, s=u.shape, workers=workers)


def mollify(u, t, kernel=None, method="auto"):
    """``rho_t(u)`` by periodic convolution with the discrete kernel.

    ``method`` is ``"direct"`` (shifted sums, exactly order preserving),
    ``"fft"`` (same weights, circular convolution by FFT) or ``"auto"``,
    which picks direct summation whenever it is affordable.
    """
    u = np.asarray(u, dtype=float)
    grid = grid_of(u)
    _check_scale(grid, t)
    offsets, w = discrete_weights(grid.complex_dim, grid.resolution, float(t))
    if method == "auto":
        method = "direct" if len(w) * u.size <= DIRECT_BUDGET else "fft"
    if method == "direct":
        return _convolve_direct(u, offsets, w)
    if method == "fft":
        return _convolve_fft(u, offsets, w)
    raise ValueError(f"unknown method {method!r}")


def mollification_mass_gap(u, t, metric, kernel=None):
    """Quadrature of ``(rho_t u - u) omega^n``."""
    return integrate(mollify(u, t, kernel) - u, metric)


def monotone_constant(u, kernel, t_grid=None, metric=None, psh_tol=EPS_PSH):
    """Smallest ``K >= 0`` making ``t -> rho_t(u) + K t^2`` non-decreasing
    along the ladder, up to the slack ``1e-10``.

    For each pair of consecutive rungs the condition is linear in ``K``, so
    the minimal constant is a closed-form maximum rather than a bisection.
    With ``metric`` given, ``u`` is first checked to be omega-psh.
    """
    u = np.asarray(u, dtype=float)
    if metric is not None:
        check_omega_psh(u, metric, psh_tol)
    ts = sorted(t_grid if t_grid is not None else kernel.t_grid)
    if len(ts) < 2:
        return 0.0
    K = 0.0
    prev = mollify(u, ts[0], kernel)
    for t1, t2 in zip(ts[:-1], ts[1:]):
        cur = mollify(u, t2, kernel)
        # use half the slack so the certified ladder keeps a rounding margin
        drop = float((prev - cur).max()) - 0.5 * MONOTONE_SLACK
        if drop > 0:
            K = max(K, drop / (t2**2 - t1**2))
        prev = cur
    return K


def ladder_check(u, K, t_grid, kernel=None):
    """Worst decrease of ``rho_t u + K t^2`` between consecutive rungs."""
    ts = sorted(t_grid)
    worst = 0.0
    prev = mollify(u, ts[0], kernel) + K * ts[0] ** 2
    for t in ts[1:]:
        cur = mollify(u, t, kernel) + K * t**2
        worst = min(worst, float((cur - prev).min()))
        prev = cur
    return worst


@dataclass(frozen=True)
class KLParams:
    delta: float
    c: float
    K: float = 0.0
    alpha: Optional[float] = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        if not self.c > 0:
            raise ValueError("c must be positive")
        if self.K < 0:
            raise ValueError("K must be non-negative")

    @classmethod
    def tied(cls, delta, alpha, K=0.0):
        """Parameters with ``c = delta^alpha``."""
        return cls(delta, delta**alpha, K, alpha)


def kl_ladder(grid, delta, rungs=16):
    """Geometric scales from one grid spacing to ``delta`` (both included)."""
    _check_scale(grid, delta)
    rungs = max(int(rungs), 16)
    ts = np.geomspace(grid.spacing, delta, rungs)
    ts[-1] = delta
    return tuple(float(t) for t in ts)


@dataclass
class KLResult:
    U: np.ndarray
    ladder: tuple
    argmin_rung: np.ndarray
    ladder_gap: float


def kiselman_legendre(u, params, kernel=None, rungs=16, full=False):
    """Ladder minimum of the Kiselman-Legendre integrand.

    The top rung is exactly ``delta`` and carries zero penalty, so the
    output never exceeds ``rho_delta(u)``.  ``ladder_gap`` bounds how much
    the continuous infimum could undercut the ladder minimum through the
    log penalty alone, namely ``c log`` of the ladder ratio.
    """
    u = np.asarray(u, dtype=float)
    grid = grid_of(u)
    ts = kl_ladder(grid, params.delta, rungs)
    d, K, c = params.delta, params.K, params.c
    U = None
    arg = np.zeros(u.shape, dtype=np.int16)
    for j, t in enumerate(ts):
        penalty = K * (t * t - d * d) + K * (t - d) - c * math.log(t / d)
        val = mollify(u, t, kernel) + penalty
        if U is None:
            U = val
        else:
            better = val < U
            U = np.where(better, val, U)
            arg[better] = j
    ratio = ts[1] / ts[0] if len(ts) > 1 else 1.0
    res = KLResult(U, ts, arg, c * math.log(ratio))
    return res if full else res.U


def kl_defect(U, metric):
    """``max(0, -min eigenvalue)`` of ``omega + dd^c U`` relative to ``omega``."""
    return max(0.0, -float(min_relative_eigenvalue(U, metric).min()))


def estimate_A(u, metric, kernel, deltas, alphas, K=None):
    """Empirical constant ``A`` with ``omega + dd^c U_{delta,c} >= -(A c +
    2 K delta) omega`` over the sampled ``(delta, alpha)`` with ``c =
    delta^alpha``.  Returns ``(A, samples)``."""
    if K is None:
        K = monotone_constant(u, kernel, kl_ladder(grid_of(u), max(deltas)))
    A = 0.0
    samples = []
    for delta in deltas:
        for alpha in alphas:
            p = KLParams.tied(delta, alpha, K)
            defect = kl_defect(kiselman_legendre(u, p, kernel), metric)
            need = max(0.0, (defect - 2 * K * delta) / p.c)
            samples.append({"delta": delta, "alpha": alpha, "c": p.c,
                            "defect": defect, "A_needed": need})
            A = max(A, need)
    return A, samples


@dataclass
class GKZAudit:
    alpha: float
    C0: float
    hypothesis_ratio: float
    C_prime: float
    drift_slope: float
    deltas: list
    tau: list
    passed: bool


def gkz_modulus_test(u, alpha, C0, kernel, delta_ladder, drift_tol=0.05):
    """Check ``sup(rho_t u - u) <= C0 t^alpha`` on the kernel's scales, then
    measure ``C' = max tau(delta) / delta^alpha`` over ``delta_ladder``.

    Passes when ``C'`` is finite and ``log(tau / delta^alpha)`` has no
    decreasing trend in ``log delta`` (fitted slope >= ``-drift_tol``),
    i.e. the modulus does not grow faster than ``delta^alpha`` towards
    small scales.  ``C0 = None`` uses the smallest admissible constant.
    """
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    u = np.asarray(u, dtype=float)
    ratios = []
    for t in kernel.t_grid:
        ratios.append(float((mollify(u, t, kernel) - u).max()) / t**alpha)
    worst = int(np.argmax(ratios))
    if C0 is None:
        C0 = max(0.0, ratios[worst])
    if ratios[worst] > C0 * (1 + 1e-12) + 1e-14:
        raise HypothesisViolated(
            f"sup(rho_t u - u) / t^alpha = {ratios[worst]:.3e} exceeds C0 = {C0:.3e}",
            worst_t=kernel.t_grid[worst],
        )
    deltas = np.asarray(delta_ladder, dtype=float)
    tau = modulus_profile(u, deltas)
    scaled = tau / deltas**alpha
    C_prime = float(scaled.max())
    if np.all(tau > 0):
        slope = fit_exponent(list(zip(deltas, scaled)))[0]
    else:
        slope = 0.0
    passed = bool(np.isfinite(C_prime) and slope >= -drift_tol)
    return GKZAudit(alpha, float(C0), ratios[worst], C_prime, float(slope),
                    deltas.tolist(), tau.tolist(), passed)
