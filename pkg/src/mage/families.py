"""Density and perturbation generators used by the experiment sweeps.

Every generator takes a :class:`~mage.torus.GridSpec` and returns a plain
array on it.  Randomness enters only through ``numpy.random.default_rng``
seeded by the caller, so the generators are deterministic.
"""
import numpy as np

from .errors import ConfigInvalid
from .spectral import lp_norm, ma_density


def periodic_dist2(grid, center):
    """Squared flat torus distance to ``center`` (a point in [0, 1)^{2n})."""
    xs = grid.coords()
    out = 0.0
    for x, c in zip(xs, center):
        d = np.abs(x - c)
        out = out + np.minimum(d, 1.0 - d) ** 2
    return np.broadcast_to(out, grid.shape).copy()


def bump(grid, center, width):
    """Periodic Gaussian bump with peak value 1."""
    return np.exp(-periodic_dist2(grid, center) / (2.0 * width**2))


def _random_trig(grid, rng, modes, kmax, amplitude):
    xs = grid.coords()
    out = np.zeros(grid.shape)
    for _ in range(modes):
        k = rng.integers(-kmax, kmax + 1, size=grid.ndim)
        if not np.any(k):
            continue
        phase = rng.uniform(0, 2 * np.pi)
        arg = sum(2 * np.pi * kj * x for kj, x in zip(k, xs)) + phase
        out = out + rng.standard_normal() * np.cos(arg)
    scale = np.abs(out).max()
    return amplitude * out / scale if scale > 0 else out


def smooth(grid, seed=0, amplitude=0.3, modes=4, kmax=2):
    """``exp`` of a random low-mode trigonometric polynomial with sup norm
    ``amplitude``; bounded below by ``exp(-amplitude)``."""
    rng = np.random.default_rng(seed)
    return np.exp(_random_trig(grid, rng, modes, kmax, amplitude))


def constant(grid, seed=0, value=1.0):
    return np.full(grid.shape, float(value))


def spike(grid, seed=0, sigma=0.125, p=2.0, A0=1.0, floor=0.2, center=None):
    """``floor + b`` with ``b`` a periodic Gaussian of width ``sigma`` scaled so
    that ``||b||_p = A0`` on the flat torus: the sup norm grows like
    ``sigma^{-2n/p}`` while the ``L^p`` norm stays fixed."""
    if center is None:
        center = [0.5] * grid.ndim
    b = bump(grid, center, sigma)
    b = A0 * b / lp_norm(b, p)
    return floor + b


def degenerate(grid, seed=0, order=4, floor=0.0):
    """``|sin(pi x1)|^order`` (normalized to mean one) plus ``floor``: vanishes
    to order ``order`` on the real hypersurface ``{x1 = 0}``."""
    x1 = grid.coords()[0]
    s = np.abs(np.sin(np.pi * x1)) ** order
    s = np.broadcast_to(s / s.mean(), grid.shape).copy()
    return s + floor


def plateau(grid, seed=0, level=0.5, power=4, floor=0.0):
    """``max(0, cos(2 pi x1) - level)^power`` normalized to mean one, plus
    ``floor``: zero on a slab of the torus."""
    x1 = grid.coords()[0]
    s = np.maximum(0.0, np.cos(2 * np.pi * x1) - level) ** power
    s = np.broadcast_to(s / s.mean(), grid.shape).copy()
    return s + floor


def manufactured_potential(grid, amplitude=0.05):
    """A band-limited omega_0-psh potential of sup norm about ``amplitude``.

    On curves ``0.5 cos(2 pi x1) + 0.5 sin(2 pi y1)``; on surfaces
    ``0.4 cos(2 pi x1) + 0.4 sin(2 pi y2) + 0.2 cos(2 pi (x1 + x2))``, both
    times ``amplitude``.  At amplitude 0.05 the smallest eigenvalue of
    ``omega_0 + dd^c u`` stays positive (about 0.01 and 0.2).
    """
    y = grid.coords()
    if grid.complex_dim == 1:
        u = 0.5 * np.cos(2 * np.pi * y[0]) + 0.5 * np.sin(2 * np.pi * y[1])
    else:
        u = (0.4 * np.cos(2 * np.pi * y[0]) + 0.4 * np.sin(2 * np.pi * y[3])
             + 0.2 * np.cos(2 * np.pi * (y[0] + y[2])))
    return amplitude * np.broadcast_to(u, grid.shape).copy()


def manufactured(grid, metric, seed=0, amplitude=0.05, form="exponential"):
    """Density ``f`` whose exponential-form solution is the manufactured
    potential (or, for ``form='normalized'``, whose normalized solution is
    that potential shifted to ``sup = 0`` with ``c = 1``)."""
    u = manufactured_potential(grid, amplitude)
    if form == "normalized":
        u = u - u.max()
        return ma_density(u, metric)
    return np.exp(-u) * ma_density(u, metric)


def double_well(grid, seed=0, depth=0.15, tilt=0.05):
    """Obstacle with two wells along ``x1`` and a mild ``y1`` tilt:
    ``depth cos(4 pi x1) + tilt cos(2 pi y1)``.  The hump between the wells
    is too concave to be omega_0-psh, so its envelope leaves it there."""
    x = grid.coords()
    out = depth * np.cos(4 * np.pi * x[0]) + tilt * np.cos(2 * np.pi * x[1])
    return np.broadcast_to(out, grid.shape).copy()


def random_field(grid, seed=0, amplitude=0.1, modes=6, kmax=3):
    """Random trigonometric polynomial; gaussian amplitudes of scale
    ``amplitude`` on ``modes`` wavevectors with entries in ``[-kmax, kmax]``."""
    rng = np.random.default_rng(seed)
    xs = grid.coords()
    out = np.zeros(grid.shape)
    for _ in range(modes):
        k = rng.integers(-kmax, kmax + 1, size=grid.ndim)
        arg = sum(2 * np.pi * kj * x for kj, x in zip(k, xs)) + rng.uniform(0, 2 * np.pi)
        out = out + amplitude * rng.standard_normal() * np.cos(arg)
    return out


FAMILIES = {
    "smooth": smooth,
    "constant": constant,
    "spike": spike,
    "degenerate": degenerate,
    "plateau": plateau,
}


def make_density(name, grid, seed=0, **params):
    try:
        gen = FAMILIES[name]
    except KeyError:
        raise ConfigInvalid("density_family.name",
                            f"unknown density family {name!r}") from None
    try:
        return gen(grid, seed=seed, **params)
    except TypeError as exc:
        raise ConfigInvalid("density_family", str(exc)) from None


def perturbation(grid, seed, width=0.1, center=None):
    """Non-negative bump with peak 1 at ``center`` (random from ``seed`` if
    ``None``; ``'zero_set'`` puts it on ``{x1 = 0}``)."""
    rng = np.random.default_rng(seed + 7919)
    c = rng.uniform(0, 1, grid.ndim)
    if isinstance(center, str):
        if center != "zero_set":
            raise ConfigInvalid("perturbation_center", f"unknown center {center!r}")
        c[0] = 0.0
    elif center is not None:
        c = np.asarray(center, dtype=float)
    return bump(grid, c, width)


def perturb(f, b, eps, kind="additive", sign=1.0):
    """``f + sign eps b`` or ``f (1 + sign eps b)``."""
    if kind == "additive":
        return f + sign * eps * b
    if kind == "multiplicative":
        return f * (1.0 + sign * eps * b)
    raise ConfigInvalid("perturbation", f"unknown perturbation kind {kind!r}")
