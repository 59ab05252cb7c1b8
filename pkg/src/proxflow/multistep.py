"""Multi-step approximate proximal point driver.

The outer iteration mixes the last ``tau`` iterates with weights ``xi``
(an affine combination, sum 1), then takes an approximate prox step of
weight ``beta`` on the mixed point:

    x_mix = xi_1 x^(k-tau+1) + ... + xi_tau x^(k)
    x^(k+1) ~ argmin_x F(x) + (1/2 beta) |x - x_mix|^2

The inner solver is ``inner_m`` steps of proximal gradient descent on the
prox subproblem, started at the most recent accepted iterate (or at the
mixed point, see ``inner_start``), which contracts toward the exact prox
by ``gamma_bound(beta, L, m)`` per call.
"""

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional

import numpy as np

from .numerics import TOL, ValidationError, as_vector
from .prox_ops import prox_quadratic


class UnsupportedOrderError(ValidationError):
    """BDF coefficients requested for an order outside 1..4."""


class DegenerateParameterError(ArithmeticError):
    """A theorem constant is undefined for the given parameters."""


class DivergenceError(ArithmeticError):
    """Iteration produced a non-finite or runaway iterate.

    ``trace`` carries the partial RunTrace up to the failure; ``step``
    is the inner-solver step index when the inner loop failed.
    """

    def __init__(self, message, trace=None, step=None):
        super().__init__(message)
        self.trace = trace
        self.step = step


_BDF_TABLE = {
    1: ((Fraction(1),), Fraction(1)),
    2: ((Fraction(-1, 3), Fraction(4, 3)), Fraction(2, 3)),
    3: ((Fraction(2, 11), Fraction(-9, 11), Fraction(18, 11)), Fraction(6, 11)),
    4: (
        (Fraction(-3, 25), Fraction(16, 25), Fraction(-36, 25), Fraction(48, 25)),
        Fraction(12, 25),
    ),
}

assert all(sum(xi) == 1 for xi, _ in _BDF_TABLE.values())


def bdf_coefficients(tau, exact=False):
    """Mixing weights (xi, xi_bar) of the order-``tau`` BDF scheme.

    ``xi[-1]`` multiplies the most recent iterate. With ``exact=True``
    the weights are returned as Fractions (their sum is exactly 1).
    """
    if tau not in _BDF_TABLE:
        raise UnsupportedOrderError(
            f"BDF order must be in 1..4, got {tau!r} "
            "(custom weights can be supplied via MultistepConfig)"
        )
    xi, xi_bar = _BDF_TABLE[tau]
    if exact:
        return list(xi), xi_bar
    return [float(v) for v in xi], float(xi_bar)


@dataclass
class CompositeObjective:
    """Oracle bundle for F = f + h.

    ``prox_h(v, t)`` evaluates prox_{t h}(v). ``exact_prox(x, beta)``,
    when available, evaluates prox_{beta F}(x) exactly and is preferred
    by the stationarity measure and by runs with ``inner_m=None``.
    """

    value: Callable[[np.ndarray], float]
    grad_f: Callable[[np.ndarray], np.ndarray]
    prox_h: Callable[[np.ndarray, float], np.ndarray]
    smoothness: float
    convexity: float
    exact_prox: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    minimizer: Optional[np.ndarray] = None


def quadratic_objective(problem):
    """Composite view of a QuadraticProblem (h = 0, exact prox available)."""
    minimizer = None
    if problem.mu > 0:
        minimizer = np.linalg.solve(problem.q, -problem.c)
    return CompositeObjective(
        value=problem.value,
        grad_f=problem.grad,
        prox_h=lambda v, t: v,
        smoothness=problem.lmax,
        convexity=problem.mu,
        exact_prox=lambda x, beta: prox_quadratic(problem, x, beta),
        minimizer=minimizer,
    )


@dataclass
class MultistepConfig:
    """Configuration of the multi-step outer iteration.

    inner_m = None requests the exact prox (the objective must provide
    one). ``inner_alpha`` defaults to beta / (beta L + 1) at run time.
    Warmup: "ramp" grows the BDF order while fewer than tau iterates
    exist; "repeat" pads the history with x0. ``use_xi_bar_scaling``
    optionally applies the classical BDF step scaling beta_eff =
    xi_bar * beta.
    """

    tau: int
    xi: tuple
    beta: float
    inner_m: Optional[int] = 8
    inner_alpha: Optional[float] = None
    warmup: str = "ramp"
    xi_bar: Optional[float] = None
    use_xi_bar_scaling: bool = False
    inner_start: str = "previous"

    def __post_init__(self):
        self.xi = tuple(float(v) for v in self.xi)
        if not 1 <= self.tau <= 16:
            raise ValidationError(f"tau must be in 1..16, got {self.tau}")
        if len(self.xi) != self.tau:
            raise ValidationError(f"xi has length {len(self.xi)}, expected {self.tau}")
        if abs(sum(self.xi) - 1.0) > TOL.mixing_weight_sum:
            raise ValidationError(f"xi must sum to 1, got {sum(self.xi)!r}")
        if self.beta <= 0:
            raise ValidationError(f"beta must be > 0, got {self.beta}")
        if self.inner_m is not None and self.inner_m < 0:
            raise ValidationError(f"inner_m must be >= 0, got {self.inner_m}")
        if self.inner_alpha is not None and self.inner_alpha <= 0:
            raise ValidationError(f"inner_alpha must be > 0, got {self.inner_alpha}")
        if self.warmup not in ("ramp", "repeat"):
            raise ValidationError(f"unknown warmup policy {self.warmup!r}")
        if self.inner_start not in ("previous", "mixed"):
            raise ValidationError(f"unknown inner_start {self.inner_start!r}")
        if self.use_xi_bar_scaling and self.xi_bar is None:
            raise ValidationError("use_xi_bar_scaling requires xi_bar")

    @classmethod
    def bdf(cls, tau, beta, **kwargs):
        xi, xi_bar = bdf_coefficients(tau)
        return cls(tau=tau, xi=tuple(xi), beta=beta, xi_bar=xi_bar, **kwargs)

    def effective_beta(self):
        return self.xi_bar * self.beta if self.use_xi_bar_scaling else self.beta


class IterateHistory:
    """Ring buffer of the last ``tau`` iterates, most recent last."""

    def __init__(self, tau):
        if tau < 1:
            raise ValidationError("history capacity must be >= 1")
        self.tau = tau
        self._buf = []

    def push(self, x):
        x = as_vector(x, "iterate")
        if self._buf and x.size != self._buf[-1].size:
            raise ValidationError("iterate dimension changed")
        self._buf.append(x)
        if len(self._buf) > self.tau:
            self._buf.pop(0)

    def __len__(self):
        return len(self._buf)

    @property
    def full(self):
        return len(self._buf) == self.tau

    def last(self):
        return self._buf[-1]

    def entries(self):
        return list(self._buf)


def mix(history, xi):
    """Weighted sum of history entries; xi[-1] weights the most recent."""
    entries = history.entries() if isinstance(history, IterateHistory) else list(history)
    if len(entries) != len(xi):
        raise ValidationError(
            f"history holds {len(entries)} iterates but xi has {len(xi)} weights"
        )
    out = np.zeros_like(entries[0])
    for w, x in zip(xi, entries):
        out += w * x
    return out


def gamma_bound(beta, smoothness, m):
    """Inner-solver contraction factor (1 - 1/(beta L + 1))^m."""
    if beta <= 0 or smoothness <= 0:
        raise ValidationError("beta and L must be > 0")
    if m < 0:
        raise ValidationError("m must be >= 0")
    return (1.0 - 1.0 / (beta * smoothness + 1.0)) ** m


def approx_prox(objective, x_mix, start, beta, m, alpha):
    """m proximal-gradient steps on the prox subproblem at ``x_mix``.

    Each step is x <- prox_{alpha h}(x - alpha grad_f(x)
    - (alpha/beta)(x - x_mix)); m = 0 returns ``start`` unchanged.
    """
    if m < 0:
        raise ValidationError(f"m must be >= 0, got {m}")
    if alpha <= 0 or beta <= 0:
        raise ValidationError("alpha and beta must be > 0")
    x = as_vector(start, "start").copy()
    x_mix = as_vector(x_mix, "x_mix")
    ratio = alpha / beta
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(m):
            g = objective.grad_f(x)
            x = objective.prox_h(x - alpha * g - ratio * (x - x_mix), alpha)
            if not np.all(np.isfinite(x)):
                raise DivergenceError(
                    f"inner solver diverged at step {i + 1}", step=i + 1
                )
    return x


@dataclass
class RunTrace:
    """Per-iteration record of a multistep run (index 0 is the start)."""

    ks: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    iterate_error: Optional[list] = None
    stationarity: list = field(default_factory=list)  # (k, epsilon_beta) pairs
    inner_steps: list = field(default_factory=list)
    walltime_s: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    diverged: bool = False
    diverged_at: Optional[int] = None

    def final(self):
        return self.iterates[-1]

    def iterations(self):
        return self.ks[-1] if self.ks else 0


def _warmup_weights(cfg, available):
    """Mixing weights for a ramp step with ``available`` < tau iterates."""
    if available in _BDF_TABLE:
        xi, _ = bdf_coefficients(available)
        return tuple(xi), available
    # custom high orders cannot ramp through the table; pad like "repeat"
    return cfg.xi, None


def run(
    objective,
    cfg,
    x0,
    iterations,
    stop_tol=None,
    stop_metric=None,
    f_star=None,
    stat_every=0,
):
    """Run the multistep iteration for ``iterations`` outer steps.

    Stops early when ``stop_metric`` ("objective_gap", "iterate_error" or
    "epsilon_beta") drops to ``stop_tol``. ``stat_every`` > 0 additionally
    records the stationarity measure every that many iterations.
    Divergence (non-finite iterate or norm above ``TOL.divergence_norm``)
    raises DivergenceError carrying the partial trace.
    """
    if iterations < 0:
        raise ValidationError(f"iterations must be >= 0, got {iterations}")
    if stop_metric not in (None, "objective_gap", "iterate_error", "epsilon_beta"):
        raise ValidationError(f"unknown stop metric {stop_metric!r}")
    if stop_metric == "objective_gap" and f_star is None:
        raise ValidationError("objective_gap stopping requires f_star")
    if stop_metric == "iterate_error" and objective.minimizer is None:
        raise ValidationError("iterate_error stopping requires a known minimizer")

    x0 = as_vector(x0, "x0")
    beta = cfg.effective_beta()
    alpha = cfg.inner_alpha
    if alpha is None:
        alpha = beta / (beta * objective.smoothness + 1.0)

    trace = RunTrace()
    if objective.minimizer is not None:
        trace.iterate_error = []

    history = IterateHistory(cfg.tau)
    if cfg.warmup == "repeat":
        for _ in range(cfg.tau):
            history.push(x0)
    else:
        history.push(x0)

    def record(k, x, inner, elapsed):
        trace.ks.append(k)
        trace.objective.append(float(objective.value(x)))
        trace.inner_steps.append(inner)
        trace.walltime_s.append(elapsed)
        trace.iterates.append(x)
        if trace.iterate_error is not None:
            trace.iterate_error.append(float(np.linalg.norm(x - objective.minimizer)))
        want_stat = stat_every > 0 and k % stat_every == 0
        if want_stat or stop_metric == "epsilon_beta":
            try:
                eps = epsilon_stationarity(objective, x, beta, inner_alpha=alpha)
            except DivergenceError as err:
                trace.diverged = True
                trace.diverged_at = k
                raise DivergenceError(str(err), trace=trace, step=err.step) from None
            trace.stationarity.append((k, eps))

    record(0, x0, 0, 0.0)

    for k in range(iterations):
        t0 = time.perf_counter()
        if history.full:
            x_mix = mix(history, cfg.xi)
        else:
            xi_k, order = _warmup_weights(cfg, len(history))
            if order is None:
                padded = [x0] * (cfg.tau - len(history)) + history.entries()
                x_mix = mix(padded, xi_k)
            else:
                x_mix = mix(history.entries()[-order:], xi_k)

        if cfg.inner_m is None:
            if objective.exact_prox is None:
                raise ValidationError("inner_m=None requires an exact prox oracle")
            x_next = objective.exact_prox(x_mix, beta)
            inner = 0
        else:
            start = history.last() if cfg.inner_start == "previous" else x_mix
            try:
                x_next = approx_prox(
                    objective, x_mix, start, beta, cfg.inner_m, alpha
                )
            except DivergenceError as err:
                trace.diverged = True
                trace.diverged_at = k + 1
                raise DivergenceError(str(err), trace=trace, step=err.step) from None
            inner = cfg.inner_m

        norm = float(np.linalg.norm(x_next))
        if not np.isfinite(norm) or norm > TOL.divergence_norm:
            trace.diverged = True
            trace.diverged_at = k + 1
            raise DivergenceError(
                f"iterate norm {norm:.3e} at outer step {k + 1}", trace=trace
            )

        record(k + 1, x_next, inner, time.perf_counter() - t0)
        history.push(x_next)

        if stop_metric is not None and stop_tol is not None:
            if stop_metric == "objective_gap":
                metric = trace.objective[-1] - f_star
            elif stop_metric == "iterate_error":
                metric = trace.iterate_error[-1]
            else:
                metric = trace.stationarity[-1][1]
            if metric <= stop_tol:
                break

    return trace


def epsilon_stationarity(objective, x, beta, inner_m=None, inner_alpha=None):
    """Scaled prox residual |prox_{beta F}(x) - x| / beta.

    Uses the exact prox when the objective provides one, otherwise a
    high-budget inner solve (m chosen so the contraction bound is below
    1e-12, capped at 100000 steps).
    """
    x = as_vector(x, "x")
    if beta <= 0:
        raise ValidationError(f"beta must be > 0, got {beta}")
    if objective.exact_prox is not None:
        p = objective.exact_prox(x, beta)
    else:
        if inner_m is None:
            per_step = 1.0 - 1.0 / (beta * objective.smoothness + 1.0)
            inner_m = min(100000, int(math.ceil(math.log(1e-12) / math.log(per_step))))
        if inner_alpha is None:
            inner_alpha = beta / (beta * objective.smoothness + 1.0)
        p = approx_prox(objective, x, x, beta, inner_m, inner_alpha)
    return float(np.linalg.norm((p - x) / beta))


def delta_constant(xi):
    """Multistep nonconvexity constant.

    delta = (tau - 1) * sum_{j=1}^{tau-1} sum_{i=1}^{j} (tau - i) xi_i^2.
    Exact when called with Fractions; 0 for tau = 1.
    """
    tau = len(xi)
    total = xi[0] * 0  # zero of the caller's numeric type
    for j in range(1, tau):
        for i in range(1, j + 1):
            total += (tau - i) * xi[i - 1] * xi[i - 1]
    return (tau - 1) * total


@dataclass(frozen=True)
class TheoremBounds:
    """Computable constants of the convergence theorems.

    Strongly convex fields apply for mu > 0, weakly convex fields for
    mu < 0; everything is evaluated regardless so callers can inspect
    boundary cases.
    """

    eta: float
    beta_min_strongly_convex: float
    gamma_max: float
    delta: float
    beta_max_weakly_convex_exact: float
    delta_inexact: float
    beta_max_weakly_convex_inexact: float
    rate_per_step: float


def theorem_bounds(cfg, mu, smoothness, gamma):
    """Evaluate the theorem constants for a config on a (mu, L) problem."""
    if mu == 0:
        raise DegenerateParameterError("mu = 0 makes the beta bounds divide by zero")
    beta = cfg.effective_beta()
    eta = sum(abs(v) for v in cfg.xi)
    denom = beta * mu + eta + 1.0
    if denom == 0:
        raise DegenerateParameterError("beta*mu + eta + 1 = 0")
    delta = delta_constant(cfg.xi)
    delta_inexact = (1.0 + gamma**2 * (1.0 + beta * smoothness) ** 2) * delta
    per_block = gamma + (1.0 + gamma) * eta / (1.0 + beta * mu)
    rate = per_block ** (1.0 / cfg.tau) if per_block >= 0 else float("nan")
    return TheoremBounds(
        eta=eta,
        beta_min_strongly_convex=(eta - 1.0) / mu,
        gamma_max=(beta * mu - eta + 1.0) / denom,
        delta=delta,
        beta_max_weakly_convex_exact=(1.0 - delta) / (-mu),
        delta_inexact=delta_inexact,
        beta_max_weakly_convex_inexact=(2.0 - 4.0 * delta_inexact) / (-mu),
        rate_per_step=rate,
    )
