"""Stability analysis of the multistep iteration on quadratics.

For f(x) = (1/2) x^T Q x solved with m inner proximal-gradient steps of
step alpha inside a prox of weight beta, the iteration restricted to an
eigendirection with eigenvalue lambda is the scalar recursion

    x^(k+1) = a^m x^(k) + b * sum_i xi_i x^(k-tau+i),
    a = 1 - alpha/beta - alpha*lambda,
    b = (alpha/beta) * sum_{j=1}^{m} a^(j-1),

whose characteristic polynomial is
eta^tau - (a^m + b xi_tau) eta^(tau-1) - b xi_(tau-1) eta^(tau-2) - ...
- b xi_1. The convergence radius is the max root modulus (what
Gelfand's formula asks of the lifted block matrix), taken in the worst
case over the eigenvalues of Q.
"""

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import _kernels
from .multistep import DivergenceError, MultistepConfig, quadratic_objective, run
from .numerics import TOL, ValidationError, as_vector, check_symmetric
from .prox_ops import QuadraticProblem

_LAMBDA_GRID_POINTS = 512
_ALPHA_GRID_POINTS = 2048
_BISECTION_STEPS = 60


class StabilityError(ArithmeticError):
    """No stable step size exists for the requested configuration."""


@dataclass
class CompanionSpec:
    """Parameters of the lifted first-order system."""

    tau: int
    xi: tuple
    alpha: float
    beta: float
    m: int

    def __post_init__(self):
        self.xi = tuple(float(v) for v in self.xi)
        if len(self.xi) != self.tau or self.tau < 1:
            raise ValidationError("xi length must equal tau >= 1")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValidationError("alpha and beta must be > 0")
        if self.m < 1:
            raise ValidationError(f"m must be >= 1, got {self.m}")

    def with_alpha(self, alpha):
        return CompanionSpec(self.tau, self.xi, alpha, self.beta, self.m)


def _coeff_rows(lams, spec):
    """Ascending monic coefficient rows of the characteristic polynomial."""
    lams = np.asarray(lams, dtype=float)
    a = 1.0 - spec.alpha / spec.beta - spec.alpha * lams
    am = a**spec.m
    one_minus_a = 1.0 - a
    series = np.where(
        np.abs(one_minus_a) > 1e-12, (1.0 - am) / np.where(one_minus_a == 0, 1.0, one_minus_a), float(spec.m)
    )
    b = (spec.alpha / spec.beta) * series
    rows = np.empty((lams.size, spec.tau))
    for i in range(spec.tau - 1):
        rows[:, i] = -b * spec.xi[i]
    rows[:, spec.tau - 1] = -(am + b * spec.xi[spec.tau - 1])
    return rows


def scalar_radius(lam, spec):
    """Convergence radius of the recursion at a single eigenvalue of Q."""
    if lam < 0:
        raise ValidationError(f"lambda must be >= 0, got {lam}")
    rows = _coeff_rows(np.array([lam]), spec)
    return float(_kernels.max_root_modulus_batch(rows)[0])


def _lambda_grid(mu, lmax):
    if mu < 0 or lmax < mu:
        raise ValidationError(f"need 0 <= mu <= L, got mu={mu}, L={lmax}")
    if mu == lmax:
        return np.array([mu])
    lo = mu if mu > 0 else lmax * 1e-9
    return np.concatenate(([mu], np.geomspace(lo, lmax, _LAMBDA_GRID_POINTS), [lmax]))


def spectrum_radius(spec, mu, lmax):
    """Worst-case radius over eigenvalues in [mu, L] (512-point log grid)."""
    lams = _lambda_grid(mu, lmax)
    rows = _coeff_rows(lams, spec)
    return float(_kernels.max_root_modulus_batch(rows).max())


class StableAlpha(NamedTuple):
    alpha: float
    stable: bool


def max_stable_alpha(mu, lmax, beta, m, tau, xi):
    """Largest inner step alpha keeping the worst-case radius below 1.

    Bisection over (0, 10 beta]; returns alpha = 0 with ``stable=False``
    when no stable step size was found.
    """
    spec = CompanionSpec(tau, tuple(xi), beta, beta, m)  # alpha placeholder
    lams = _lambda_grid(mu, lmax)

    def radius(alpha):
        rows = _coeff_rows(lams, spec.with_alpha(alpha))
        return float(_kernels.max_root_modulus_batch(rows).max())

    hi = 10.0 * beta
    if radius(hi) < 1.0:
        return StableAlpha(hi, True)
    lo = None
    probe = hi
    for _ in range(_BISECTION_STEPS):
        probe /= 2.0
        if radius(probe) < 1.0:
            lo = probe
            break
    if lo is None:
        return StableAlpha(0.0, False)
    for _ in range(_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if radius(mid) < 1.0:
            lo = mid
        else:
            hi = mid
    return StableAlpha(lo, True)


class OptimalRate(NamedTuple):
    rho: float
    alpha: float


def optimal_rate(mu, lmax, beta, m, tau, xi):
    """Smallest worst-case radius over alpha, and the minimizing alpha.

    A 2048-point grid over (0, max stable alpha] locates the basin; a
    golden-section pass refines within the best grid cell (the radius is
    piecewise smooth in alpha, with kinks where the maximizing root
    switches).
    """
    bound = max_stable_alpha(mu, lmax, beta, m, tau, xi)
    if not bound.stable:
        raise StabilityError(
            f"no stable step size for tau={tau}, beta={beta}, m={m}, "
            f"spectrum [{mu}, {lmax}]"
        )
    spec = CompanionSpec(tau, tuple(xi), bound.alpha, beta, m)
    lams = _lambda_grid(mu, lmax)
    alphas = np.linspace(bound.alpha / _ALPHA_GRID_POINTS, bound.alpha, _ALPHA_GRID_POINTS)

    # one batched kernel call over the full (alpha, lambda) grid
    rows = np.empty((alphas.size * lams.size, tau))
    for i, alpha in enumerate(alphas):
        rows[i * lams.size : (i + 1) * lams.size] = _coeff_rows(
            lams, spec.with_alpha(alpha)
        )
    radii = _kernels.max_root_modulus_batch(rows).reshape(alphas.size, lams.size)
    worst = radii.max(axis=1)
    best = int(np.argmin(worst))
    best_alpha, best_rho = float(alphas[best]), float(worst[best])

    def radius(alpha):
        return float(
            _kernels.max_root_modulus_batch(
                _coeff_rows(lams, spec.with_alpha(alpha))
            ).max()
        )

    lo = float(alphas[max(best - 1, 0)])
    hi = float(alphas[min(best + 1, alphas.size - 1)])
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc, fd = radius(c), radius(d)
    for _ in range(40):
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = radius(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = radius(d)
    refined_alpha = c if fc < fd else d
    refined_rho = min(fc, fd)
    if refined_rho < best_rho:
        best_alpha, best_rho = float(refined_alpha), float(refined_rho)
    return OptimalRate(best_rho, best_alpha)


@dataclass
class ReportRow:
    tau: int
    m: int
    alpha: float
    beta: float
    lam_or_range: str
    radius: float

    @property
    def stable(self):
        return self.radius < 1.0


@dataclass
class StabilityReport:
    """Radii over a parameter grid, serializable to CSV."""

    rows: list

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["tau", "m", "alpha", "beta", "lambda_or_range", "radius", "stable"]
            )
            for r in self.rows:
                writer.writerow(
                    [
                        r.tau,
                        r.m,
                        format(r.alpha, ".17g"),
                        format(r.beta, ".17g"),
                        r.lam_or_range,
                        format(r.radius, ".17g"),
                        int(r.stable),
                    ]
                )


def beta_scan(mu, lmax, m_list, alpha, tau_list, betas, xi_for_tau=None):
    """Radius curves over a beta grid per (tau, m) pair.

    ``xi_for_tau`` maps tau to mixing weights; BDF weights by default.
    """
    from .multistep import bdf_coefficients

    rows = []
    span = f"[{mu:g},{lmax:g}]"
    for tau in tau_list:
        xi = xi_for_tau[tau] if xi_for_tau else tuple(bdf_coefficients(tau)[0])
        for m in m_list:
            for beta in betas:
                spec = CompanionSpec(tau, xi, alpha, beta, m)
                rho = spectrum_radius(spec, mu, lmax)
                rows.append(ReportRow(tau, m, alpha, beta, span, rho))
    return StabilityReport(rows)


def companion_matrix(spec, q):
    """Explicit block companion matrix M of the lifted system."""
    q = check_symmetric(q, "Q")
    n = q.shape[0]
    a = (1.0 - spec.alpha / spec.beta) * np.eye(n) - spec.alpha * q
    am = np.linalg.matrix_power(a, spec.m)
    series = np.zeros_like(a)
    power = np.eye(n)
    for _ in range(spec.m):
        series += power
        power = power @ a
    b = (spec.alpha / spec.beta) * series

    tau = spec.tau
    m_mat = np.zeros((n * tau, n * tau))
    m_mat[:n, :n] = am + spec.xi[tau - 1] * b
    for i in range(1, tau):
        m_mat[:n, i * n : (i + 1) * n] = spec.xi[tau - 1 - i] * b
    for i in range(1, tau):
        m_mat[i * n : (i + 1) * n, (i - 1) * n : i * n] = np.eye(n)
    return m_mat


class CompanionCheck(NamedTuple):
    discrepancy: float
    max_norm: float


def simulate_companion_check(spec, q, x0, steps):
    """Max discrepancy between the real iteration and the lifted system.

    Runs ``steps`` outer multistep iterations on f(x) = (1/2) x^T Q x
    (inner proximal-gradient with ``spec``'s m and alpha, history padded
    with x0) against the block recursion z <- M z, and returns the max
    over k of the iterate difference norm together with the max iterate
    norm. The contract is
    discrepancy <= ``TOL.companion_discrepancy`` * max_norm.
    """
    q = check_symmetric(q, "Q")
    x0 = as_vector(x0, "x0")
    problem = QuadraticProblem.from_matrix(q)
    if problem.mu < -TOL.spectrum_match:
        raise ValidationError(f"Q must be PSD, min eigenvalue {problem.mu}")
    objective = quadratic_objective(problem)
    cfg = MultistepConfig(
        tau=spec.tau,
        xi=spec.xi,
        beta=spec.beta,
        inner_m=spec.m,
        inner_alpha=spec.alpha,
        warmup="repeat",
        inner_start="previous",
    )
    trace = run(objective, cfg, x0, steps)

    m_mat = companion_matrix(spec, q)
    n = x0.size
    z = np.tile(x0, spec.tau)
    worst = 0.0
    scale = float(np.linalg.norm(x0))
    for k in range(1, steps + 1):
        z = m_mat @ z
        if not np.all(np.isfinite(z)) or np.linalg.norm(z) > TOL.divergence_norm:
            raise DivergenceError(f"companion recursion diverged at step {k}")
        worst = max(worst, float(np.linalg.norm(trace.iterates[k] - z[:n])))
        scale = max(scale, float(np.linalg.norm(trace.iterates[k])))
    return CompanionCheck(worst, scale)
