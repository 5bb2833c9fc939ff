"""Newton solvers for ``omega_u^n = e^u f omega^n`` and ``omega_u^n = c f omega^n``,
plus the pointwise audits of the comparison-type principles on their outputs.

Both equations are instances of

    det(omega + dd^c u) / det(omega) = c * exp(lam * u) * F

solved in log form ``log det - log det(omega) - log c - lam u - log F``
wherever ``F`` is above ``f_floor`` and in plain form elsewhere.  The
linearization ``tr(A^{-1} dd^c w) - lam w`` is not symmetric, so the
Newton systems are solved with GMRES preconditioned by the inverse of a
constant-coefficient flat operator (exact for the flat metric at u = 0).
"""
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from . import _fourier, _sparse
from .errors import DensityInvalid, NotConverged
from .spectral import (
    EPS_PSH,
    hermitian_det,
    integrate,
    lp_norm,
    laplacian_mass,
    ma_density,
    relative_eigenvalues,
)

log = logging.getLogger(__name__)

F_FLOOR = 1e-12
PC_REFRESH_ITERS = 15


@dataclass(frozen=True)
class SolverConfig:
    tol_residual: float = 1e-10
    max_newton_iters: int = 50
    damping: float = 1.0
    continuation_steps: int = 1
    psh_floor: float = EPS_PSH
    gmres_restart: int = 60
    gmres_maxiter: int = 4
    preconditioner: str = "spectral"

    def __post_init__(self):
        if not self.tol_residual > 0:
            raise ValueError("tol_residual must be positive")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be >= 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.continuation_steps < 1:
            raise ValueError("continuation_steps must be >= 1")
        if self.preconditioner not in ("spectral", "sparse"):
            raise ValueError("preconditioner must be 'spectral' or 'sparse'")

    @classmethod
    def from_dict(cls, d):
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)


@dataclass
class SolveResult:
    u: np.ndarray
    c: float
    residual_sup: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list)

    def sidecar(self):
        return {
            "c": self.c,
            "residual_sup": self.residual_sup,
            "iterations": self.iterations,
            "converged": self.converged,
            "history": list(self.history),
        }


def _adjugate(A):
    n = A.shape[-1]
    if n == 1:
        return np.ones_like(A)
    adj = np.empty_like(A)
    adj[..., 0, 0] = A[..., 1, 1]
    adj[..., 1, 1] = A[..., 0, 0]
    adj[..., 0, 1] = -A[..., 0, 1]
    adj[..., 1, 0] = -A[..., 1, 0]
    return adj


class _Problem:
    """Residual and Jacobian of ``det ratio = c exp(lam u) F``."""

    def __init__(self, metric, log_F, plain, lam, with_c, psh_floor):
        self.metric = metric
        self.n = metric.n
        self.shape = metric.grid.shape
        self.log_F = log_F
        self.plain = plain
        self.lam = lam
        self.with_c = with_c
        self.psh_floor = psh_floor
        self.log_detG = np.log(metric.det_omega)
        self.pc_cache = None

    def evaluate(self, u, gamma):
        """Residual at ``(u, gamma = log c)`` or ``None`` if outside the cone."""
        parts = _fourier.hessian_parts(u)
        A = self.metric.entries + _fourier.assemble_hessian(parts, self.n)
        lam_min = relative_eigenvalues(A, self.metric.entries)[..., 0]
        logrows = ~self.plain
        if np.any(lam_min[logrows] <= 0) or np.any(lam_min < -self.psh_floor):
            return None
        if not np.all(np.isfinite(lam_min)):
            return None
        detA = hermitian_det(A)
        r = np.empty(self.shape)
        with np.errstate(divide="ignore"):
            r[logrows] = (np.log(detA[logrows]) - self.log_detG[logrows] - gamma
                          - self.lam * u[logrows] - self.log_F[logrows])
        if np.any(self.plain):
            with np.errstate(over="ignore"):
                rhs = np.exp(gamma + self.lam * u[self.plain] + self.log_F[self.plain])
            r[self.plain] = detA[self.plain] / self.metric.det_omega[self.plain] - rhs
        return r, A, detA

    def linearize(self, u, gamma, A, detA):
        adj = _adjugate(A)
        scale = np.where(self.plain, self.metric.det_omega, detA)
        coef = adj / scale[..., None, None]
        # d(residual)/d(u) diagonal term and d/d(gamma)
        with np.errstate(over="ignore"):
            dgamma = np.where(self.plain, np.exp(gamma + self.lam * u + self.log_F), 1.0)
        diag = self.lam * dgamma
        n = self.n

        def apply(w):
            parts = _fourier.hessian_parts(w)
            return _fourier.trace_product(coef, parts, n) - diag * w

        # Pointwise-scaled constant-coefficient model:
        #   L w ~ s(x) (1/2 Lap w - k w),  s = tr(coef) / n,  k = mean(diag / s).
        s = np.einsum("...ii->...", coef).real / n
        # Plain rows of a degenerate iterate can make the trace tiny.
        s = np.maximum(s, 1e-3 * float(np.abs(s).mean()))
        k = float(np.mean(diag / s))
        sym = 0.5 * _fourier.laplacian_symbol(u.ndim, u.shape[0]) - k
        self.last_coef, self.last_diag = coef, diag
        self.last_scale, self.last_dgamma = s, dgamma
        return apply, dgamma, sym


def _precondition(r, sym, shape):
    rh = _fourier.rfft(r)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(sym != 0, rh / np.where(sym != 0, sym, 1.0), 0.0)
    return _fourier.irfft(out, shape)


def _newton_step(problem, u, gamma, r, A, detA, forcing, cfg):
    apply, dgamma, sym = problem.linearize(u, gamma, A, detA)
    shape = u.shape
    N = u.size
    if problem.with_c:
        # Unknowns (w, dgamma_c); extra equation: mean(w) = -mean(u).
        def mv(x):
            w = x[:N].reshape(shape)
            out = np.empty(N + 1)
            out[:N] = (apply(w) - dgamma * x[N]).ravel()
            out[N] = w.mean()
            return out

        s_x = problem.last_scale
        g_s = dgamma / s_x
        g_mean = float(g_s.mean())

        def pc(y):
            # Exact inverse of the scaled model: solve
            #   1/2 Lap w - g delta = b / s,  mean(w) = y_N.
            b = y[:N].reshape(shape) / s_x
            delta = -float(b.mean()) / g_mean
            w = _precondition(b + delta * g_s, sym, shape) + y[N]
            out = np.empty(N + 1)
            out[:N] = w.ravel()
            out[N] = delta
            return out

        rhs = np.concatenate([-r.ravel(), [-u.mean()]])
        size = N + 1
    elif cfg.preconditioner == "sparse" and N <= _sparse.EXACT_LU_MAX:
        def mv(x):
            return apply(x.reshape(shape)).ravel()

        # The factorization is a preconditioner only, so it is reused across
        # Newton steps until GMRES starts to need many iterations.
        if problem.pc_cache is None or problem.pc_cache[1] > PC_REFRESH_ITERS:
            solve = _sparse.factorize(
                _sparse.fd_operator(problem.last_coef, problem.last_diag, problem.n))
            problem.pc_cache = [solve, 0]
        pc = problem.pc_cache[0]
        rhs = -r.ravel()
        size = N
    else:
        def mv(x):
            return apply(x.reshape(shape)).ravel()

        s_x = problem.last_scale

        def pc(y):
            return _precondition(y.reshape(shape) / s_x, sym, shape).ravel()

        rhs = -r.ravel()
        size = N
    # Right preconditioning: GMRES then monitors the true residual.
    op = LinearOperator((size, size), matvec=lambda y: mv(pc(y)), dtype=float)
    count = [0]

    def _tick(_):
        count[0] += 1

    y, info = gmres(op, rhs, rtol=forcing, atol=0.0, restart=cfg.gmres_restart,
                    maxiter=cfg.gmres_maxiter, callback=_tick, callback_type="pr_norm")
    if problem.pc_cache is not None:
        problem.pc_cache[1] = count[0]
    if info < 0:
        raise RuntimeError(f"GMRES breakdown (info={info})")
    x = pc(y)
    w = x[:N].reshape(shape)
    dg = float(x[N]) if problem.with_c else 0.0
    return w, dg


def _newton(problem, u, gamma, cfg, history):
    ev = problem.evaluate(u, gamma)
    if ev is None:
        raise NotConverged("initial guess is not strictly omega-psh")
    r, A, detA = ev
    res = float(np.abs(r).max())
    merit = float(np.sqrt(np.mean(r * r)))
    history.append(res)
    it = 0
    while res > cfg.tol_residual and it < cfg.max_newton_iters:
        it += 1
        forcing = max(1e-13, min(1e-2, 0.1 * res))
        w, dg = _newton_step(problem, u, gamma, r, A, detA, forcing, cfg)
        step = cfg.damping
        accepted = False
        # Armijo on the RMS residual: any GMRES iterate started from zero is
        # a descent direction for it, unlike for the sup norm.
        for _ in range(40):
            cand_u = u + step * w
            cand_g = gamma + step * dg
            ev = problem.evaluate(cand_u, cand_g)
            if ev is not None:
                with np.errstate(over="ignore", invalid="ignore"):
                    cr = float(np.abs(ev[0]).max())
                    cm = float(np.sqrt(np.mean(ev[0] * ev[0])))
                if cm < (1 - 1e-4 * step) * merit or cr <= cfg.tol_residual:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            log.debug("line search failed at residual %.3e", res)
            break
        u, gamma = cand_u, cand_g
        r, A, detA = ev
        res, merit = cr, cm
        history.append(res)
    return u, gamma, res, it


def _density_logs(f, shape, f_floor=None):
    f_floor = F_FLOOR if f_floor is None else f_floor
    f = np.broadcast_to(np.asarray(f, dtype=float), shape)
    if not np.all(np.isfinite(f)):
        raise DensityInvalid("density has non-finite values")
    if f.min() < -1e-12:
        raise DensityInvalid(f"density negative: min {f.min():.3e}")
    f = np.maximum(f, 0.0)
    plain = f <= f_floor
    log_f = np.log(np.maximum(f, 1e-300))
    return f, log_f, plain


def _bandlimit_warning(f):
    R = f.shape[0]
    fh = np.abs(_fourier.rfft(f - f.mean()))
    if fh.max() == 0:
        return
    ks = _fourier.real_wavenumbers(f.ndim, R)
    kmax = np.zeros(fh.shape)
    for k in ks:
        k = np.broadcast_to(k, fh.shape)
        kmax = np.maximum(kmax, np.abs(k))
    high = fh[kmax > 2 * np.pi * R / 4].sum() / fh.sum()
    if high > 1e-2:
        warnings.warn(
            f"density has {high:.1%} of its spectrum above R/4; results are "
            "resolution-limited", RuntimeWarning, stacklevel=3)


def _continuation(f, steps):
    """Homotopy ``(1 - t) mean(f) + t f`` from the mean to the target."""
    if steps <= 1:
        yield f
        return
    mean = float(f.mean())
    for t in np.linspace(0.0, 1.0, steps + 1):
        yield (1 - t) * mean + t * f


def solve_exponential(f, metric, cfg=None, u0=None):
    """Solve ``omega_u^n = e^u f omega^n`` (no free constant)."""
    cfg = cfg or SolverConfig()
    f, _, _ = _density_logs(f, metric.grid.shape)
    if integrate(f, metric) <= 0:
        raise DensityInvalid("density has zero mass")
    _bandlimit_warning(f)
    if u0 is None:
        u = np.full(metric.grid.shape, -np.log(integrate(f, metric) / metric.volume))
    else:
        u = np.array(u0, dtype=float)
    history = []
    total = 0
    for stage in _continuation(f, cfg.continuation_steps):
        _, log_f, plain = _density_logs(stage, metric.grid.shape)
        problem = _Problem(metric, log_f, plain, 1.0, False, cfg.psh_floor)
        u, _, res, its = _newton(problem, u, 0.0, cfg, history)
        total += its
    result = SolveResult(u, 1.0, res, total, res <= cfg.tol_residual, history)
    if not result.converged:
        raise NotConverged(f"exponential solve stalled at residual {res:.3e}", result)
    return result


def solve_normalized(f, metric, cfg=None, u0=None):
    """Solve ``omega_u^n = c f omega^n`` with ``sup u = 0``; returns ``(u, c)``."""
    cfg = cfg or SolverConfig()
    f, _, _ = _density_logs(f, metric.grid.shape)
    mass = integrate(f, metric)
    if mass <= 0:
        raise DensityInvalid("density has zero mass")
    _bandlimit_warning(f)
    u = np.zeros(metric.grid.shape) if u0 is None else np.array(u0, dtype=float)
    u = u - u.mean()
    history = []
    total = 0
    gamma = None
    for stage in _continuation(f, cfg.continuation_steps):
        _, log_f, plain = _density_logs(stage, metric.grid.shape)
        if gamma is None:
            gamma = float(np.log(metric.volume / integrate(stage, metric)))
        problem = _Problem(metric, log_f, plain, 0.0, True, cfg.psh_floor)
        u, gamma, res, its = _newton(problem, u, gamma, cfg, history)
        total += its
    u = u - u.max()
    result = SolveResult(u, float(np.exp(gamma)), res, total,
                         res <= cfg.tol_residual, history)
    if not result.converged:
        raise NotConverged(f"normalized solve stalled at residual {res:.3e}", result)
    return result


def solve_penalized(obstacle, lam, metric, cfg=None, u0=None):
    """Solve ``omega_u^n = exp(lam (u - obstacle)) omega^n``.

    The residual is taken in plain form ``det ratio - exp(lam (u - f))``:
    off the contact set the right-hand side is exponentially small and
    ``omega_u`` degenerates, where the log form would blow up.  For n = 1
    the plain equation is monotone in ``u``.
    """
    cfg = cfg or SolverConfig()
    obstacle = np.broadcast_to(np.asarray(obstacle, dtype=float), metric.grid.shape)
    log_F = -lam * obstacle
    plain = np.ones(obstacle.shape, dtype=bool)
    problem = _Problem(metric, log_F, plain, float(lam), False, cfg.psh_floor)
    if u0 is None:
        u = np.full(obstacle.shape, float(obstacle.min()))
    else:
        u = np.array(u0, dtype=float)
    history = []
    u, _, res, its = _newton(problem, u, 0.0, cfg, history)
    result = SolveResult(u, 1.0, res, its, res <= cfg.tol_residual, history)
    if not result.converged:
        raise NotConverged(f"penalized solve (lam={lam}) stalled at {res:.3e}", result)
    return result


def exponential_residual(u, f, metric, f_floor=F_FLOOR):
    """Sup of the log residual where ``f > f_floor``, plain residual elsewhere."""
    d = ma_density(u, metric)
    f = np.asarray(f, dtype=float)
    big = f > f_floor
    out = 0.0
    if np.any(big):
        with np.errstate(divide="ignore"):
            out = float(np.abs(np.log(d[big]) - u[big] - np.log(f[big])).max())
    if np.any(~big):
        out = max(out, float(np.abs(d[~big] - np.exp(u[~big]) * f[~big]).max()))
    return out


# -- audits ---------------------------------------------------------------

AUDIT_TOL = 1e-8


@dataclass
class SubSuperAudit:
    hypothesis_holds: bool
    conclusion_holds: bool
    worst_point: tuple
    hypothesis_gap: float
    conclusion_gap: float

    @property
    def passed(self):
        return (not self.hypothesis_holds) or self.conclusion_holds


def check_sub_supersolution(u, v, lam, metric, tol=AUDIT_TOL):
    """Audit ``omega_u^n >= e^{lam (u - v)} omega_v^n  =>  u <= v``."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    mu = ma_density(u, metric)
    mv = ma_density(v, metric)
    gap = mu - np.exp(lam * (u - v)) * mv
    # relative tolerance: both sides can be O(e^{lam |u - v|})
    scale = np.maximum(1.0, np.abs(mu))
    hyp = bool(np.all(gap >= -tol * scale))
    diff = u - v
    worst = np.unravel_index(np.argmax(diff), diff.shape)
    return SubSuperAudit(
        hypothesis_holds=hyp,
        conclusion_holds=bool(diff.max() <= tol),
        worst_point=tuple(int(i) for i in worst),
        hypothesis_gap=float((gap / scale).min()),
        conclusion_gap=float(diff.max()),
    )


def perturbation_subsolution(u, rho, f, g, c_h, p, metric):
    """Kolodziej-type perturbation of ``u`` that is a subsolution for ``g``.

    ``u`` solves ``omega_u^n = e^u f``, ``rho`` solves ``omega_rho^n =
    c_h (|f-g|/||f-g||_p + 1)`` with ``sup rho = 0``.  Returns
    ``(phi, eps)`` with ``phi = (1-eps) u + eps rho - K eps + n log(1-eps)``
    and ``K = sup(-u)``, or ``(None, eps)`` when ``eps > 1/2``.
    """
    n = metric.n
    diff = lp_norm(f - g, p, metric)
    eps = float(np.exp((u.max() - np.log(c_h)) / n) * diff ** (1.0 / n))
    if eps > 0.5:
        return None, eps
    K = float((-u).max())
    phi = (1 - eps) * u + eps * rho - K * eps + n * np.log(1 - eps)
    return phi, eps


@dataclass
class ComparisonAudit:
    mode: str
    rows: list
    empirical_C: float
    vacuous: bool
    passed: bool


def comparison_audits(u, v, metric, constants, eps_list=(0.1, 0.2, 0.4),
                      s_list=None, tol=1e-10):
    """Masked-quadrature audit of comparison-type inequalities.

    With ``B == 0`` the Kahler inequality ``int_{u<v} omega_v^n <=
    int_{u<v} omega_u^n`` is checked (one row).  Otherwise, for every
    ``eps`` and ``s`` the sublevel set ``U = {u < (1-eps) v + m_eps + s}``
    with ``m_eps = inf(u - (1-eps) v)`` is formed and ``C`` is the smallest
    constant with ``LHS <= (1 + C s / eps^n) RHS``.
    """
    n = metric.n
    mu = ma_density(u, metric)
    rows = []
    if constants.B == 0:
        mask = u < v
        if not mask.any():
            return ComparisonAudit("kahler", [], 0.0, True, True)
        mv = ma_density(v, metric)
        lhs = integrate(np.where(mask, mv, 0.0), metric)
        rhs = integrate(np.where(mask, mu, 0.0), metric)
        ok = lhs <= rhs + tol
        rows.append({"lhs": lhs, "rhs": rhs, "ok": ok, "cells": int(mask.sum())})
        return ComparisonAudit("kahler", rows, 0.0, False, ok)
    C = 0.0
    any_set = False
    for eps in eps_list:
        ve = (1 - eps) * v
        m_eps = float((u - ve).min())
        mve = ma_density(ve, metric)
        s_vals = s_list if s_list is not None else [eps**3 / (32 * constants.B)]
        for s in s_vals:
            if not 0 < s < eps**3 / (16 * constants.B):
                raise ValueError(f"s = {s} outside (0, eps^3/16B)")
            mask = u < ve + m_eps + s
            lhs = integrate(np.where(mask, mve, 0.0), metric)
            rhs = integrate(np.where(mask, mu, 0.0), metric)
            any_set = any_set or bool(mask.any())
            need = 0.0
            if lhs > rhs:
                need = np.inf if rhs <= 0 else (lhs / rhs - 1) * eps**n / s
            C = max(C, need)
            rows.append({"eps": eps, "s": s, "lhs": lhs, "rhs": rhs,
                         "C_needed": need, "cells": int(mask.sum())})
    return ComparisonAudit("modified", rows, float(C), not any_set, bool(np.isfinite(C)))


@dataclass
class MassAudit:
    mass: float
    lp: float
    laplacian_mass: float


def mass_lower_bound_audit(f, c, p, metric, u=None):
    """Record ``int c f omega^n``, ``||c f||_p`` and (given ``u``) the
    Laplacian mass of the solution."""
    cf = c * np.asarray(f, dtype=float)
    lm = laplacian_mass(u, metric) if u is not None else float("nan")
    return MassAudit(integrate(cf, metric), lp_norm(cf, p, metric), lm)
