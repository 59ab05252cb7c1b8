"""Problem generators and experiment runners for the four applications.

Covers sparse regression with l1 and log-sum penalties on synthetic
compressed-sensing instances, alternating projections between random
subspaces, and alternating minimization for matrix factorization, plus
the CSV/SVG serialization shared by all of them. Divergence is data
here: traces carry a flag and end early instead of raising.
"""

import csv
import time
from dataclasses import dataclass, field
from typing import Optional
from xml.sax.saxutils import escape

import numpy as np

from .multistep import (
    CompositeObjective,
    DivergenceError,
    IterateHistory,
    MultistepConfig,
    bdf_coefficients,
    mix,
    run,
)
from .numerics import (
    TOL,
    RankError,
    ValidationError,
    as_vector,
    orthonormal_basis,
    seeded_rng,
)
from .prox_ops import prox_l1, prox_lsp

SPECTRUM_KINDS = ("uniform", "inverse_r", "exp_decay")


@dataclass
class SensingProblem:
    """Underdetermined sensing instance b = A x_true with known spectrum."""

    a: np.ndarray
    b: np.ndarray
    x_true: np.ndarray
    spectrum_kind: str
    seed: int
    singular_values: np.ndarray

    @property
    def shape(self):
        return self.a.shape


def gen_sensing(p, q, spectrum_kind, seed, sparsity=None):
    """Generate A = U diag(sigma) V^T with the declared singular values.

    U and V come from orthonormalized seeded Gaussians; x_true is
    ``sparsity``-sparse standard normal (default p // 5 nonzeros) and
    b = A x_true (noise-free).
    """
    if not 1 <= p < q:
        raise ValidationError(f"need 1 <= p < q, got p={p}, q={q}")
    if spectrum_kind not in SPECTRUM_KINDS:
        raise ValidationError(
            f"spectrum_kind must be one of {SPECTRUM_KINDS}, got {spectrum_kind!r}"
        )
    rng = seeded_rng(seed)
    u = orthonormal_basis(rng.standard_normal((p, p)))
    v = orthonormal_basis(rng.standard_normal((q, p)))
    r = np.arange(1, p + 1, dtype=float)
    if spectrum_kind == "uniform":
        sigma = np.sort(rng.uniform(size=p))[::-1]
    elif spectrum_kind == "inverse_r":
        sigma = 1.0 / r
    else:
        sigma = np.exp(-(r - 1.0))
    a = (u * sigma) @ v.T

    k = max(1, p // 5) if sparsity is None else int(sparsity)
    if not 1 <= k <= q:
        raise ValidationError(f"sparsity must be in 1..{q}, got {k}")
    x_true = np.zeros(q)
    support = rng.choice(q, size=k, replace=False)
    x_true[support] = rng.standard_normal(k)
    return SensingProblem(a, a @ x_true, x_true, spectrum_kind, seed, sigma)


def lasso_objective(problem, lam):
    """Composite F(x) = (1/2)|Ax - b|^2 + lam |x|_1.

    With lam = 0 the prox of F is an exact linear solve, exposed as
    ``exact_prox``.
    """
    if lam < 0:
        raise ValidationError(f"lam must be >= 0, got {lam}")
    a, b = problem.a, problem.b
    smoothness = float(problem.singular_values.max() ** 2)

    def value(x):
        r = a @ x - b
        return 0.5 * float(r @ r) + lam * float(np.abs(x).sum())

    exact = None
    if lam == 0.0:
        gram = a.T @ a
        atb = a.T @ b

        def exact(x, beta):
            n = x.size
            return np.linalg.solve(np.eye(n) + beta * gram, x + beta * atb)

    return CompositeObjective(
        value=value,
        grad_f=lambda x: a.T @ (a @ x - b),
        prox_h=lambda v, t: prox_l1(v, t * lam) if lam > 0 else v,
        smoothness=smoothness,
        convexity=0.0,
        exact_prox=exact,
    )


def lsp_objective(problem, theta):
    """Composite F(x) = (1/2)|Ax - b|^2 + sum_i log(1 + |x_i|/theta)."""
    if theta <= 0:
        raise ValidationError(f"theta must be > 0, got {theta}")
    a, b = problem.a, problem.b
    smoothness = float(problem.singular_values.max() ** 2)

    def value(x):
        r = a @ x - b
        return 0.5 * float(r @ r) + float(np.log1p(np.abs(x) / theta).sum())

    return CompositeObjective(
        value=value,
        grad_f=lambda x: a.T @ (a @ x - b),
        prox_h=lambda v, t: prox_lsp(v, theta, t),
        smoothness=smoothness,
        convexity=-1.0 / theta**2,
    )


_REFERENCE_CACHE = {}


def reference_optimum(problem, lam, beta, m=50, budget=50000):
    """Per-instance F* oracle: a long single-step high-budget run.

    Runs with 10x the usual iteration budget (m = 50 inner steps) and
    stops once the objective stagnates. Cached per instance.
    """
    key = (problem.seed, problem.shape, problem.spectrum_kind, lam, beta)
    if key in _REFERENCE_CACHE:
        return _REFERENCE_CACHE[key]
    objective = lasso_objective(problem, lam)
    cfg = MultistepConfig(
        tau=1, xi=(1.0,), beta=beta, inner_m=None if lam == 0.0 else m
    )
    x = np.zeros(problem.a.shape[1])
    best = objective.value(x)
    history = IterateHistory(1)
    history.push(x)
    stall = 0
    for _ in range(budget):
        trace = run(objective, cfg, history.last(), 1)
        history.push(trace.final())
        val = trace.objective[-1]
        if val >= best - 1e-15 * max(1.0, abs(best)):
            stall += 1
            if stall >= 50:
                break
        else:
            stall = 0
        best = min(best, val)
    _REFERENCE_CACHE[key] = best
    return best


def _sensing_run(
    objective, taus, beta, m, iterations, x0, stop_tol, f_star, stat_every,
    inner_alpha=None,
):
    traces = {}
    for tau in taus:
        xi, xi_bar = bdf_coefficients(tau)
        cfg = MultistepConfig(
            tau=tau, xi=tuple(xi), beta=beta, inner_m=m, xi_bar=xi_bar,
            inner_alpha=inner_alpha,
        )
        try:
            traces[tau] = run(
                objective,
                cfg,
                x0,
                iterations,
                stop_tol=stop_tol,
                stop_metric="objective_gap" if f_star is not None else None,
                f_star=f_star,
                stat_every=stat_every,
            )
        except DivergenceError as err:
            traces[tau] = err.trace
    return traces


@dataclass
class SensingResult:
    traces: dict
    f_star: Optional[float]


def run_l1(
    problem, lam, taus, beta, m, iterations, stop_tol=None, x0=None, f_star=None,
    inner_alpha=None,
):
    """l1-penalized sensing runs, one trace per BDF order in ``taus``."""
    objective = lasso_objective(problem, lam)
    if x0 is None:
        x0 = np.zeros(problem.a.shape[1])
    if f_star is None:
        f_star = reference_optimum(problem, lam, beta)
    traces = _sensing_run(
        objective, taus, beta, m, iterations, x0, stop_tol, f_star,
        stat_every=0, inner_alpha=inner_alpha,
    )
    return SensingResult(traces, f_star)


def run_lsp(
    problem, theta, taus, beta, m, iterations, stop_tol=None, x0=None,
    stat_every=25, inner_alpha=None,
):
    """Log-sum-penalized sensing runs; traces record the stationarity
    measure (the objective gap is not meaningful without convexity)."""
    objective = lsp_objective(problem, theta)
    if x0 is None:
        x0 = np.zeros(problem.a.shape[1])
    traces = {}
    for tau in taus:
        xi, xi_bar = bdf_coefficients(tau)
        cfg = MultistepConfig(
            tau=tau, xi=tuple(xi), beta=beta, inner_m=m, xi_bar=xi_bar,
            inner_alpha=inner_alpha,
        )
        try:
            traces[tau] = run(
                objective,
                cfg,
                x0,
                iterations,
                stop_tol=stop_tol,
                stop_metric="epsilon_beta" if stop_tol is not None else None,
                stat_every=stat_every,
            )
        except DivergenceError as err:
            traces[tau] = err.trace
    return SensingResult(traces, None)


@dataclass
class SubspacePair:
    """Column-space generators of two subspaces; sigma is the coherence
    parameter of the random construction (None for prescribed angles)."""

    c1: np.ndarray
    c2: np.ndarray
    sigma: Optional[float]
    seed: Optional[int]


def gen_subspaces(n, d, sigma, seed, max_retries=3):
    """Random pair C1 ~ N(0,1), C2 = (1 - sigma) C1 + sigma Z.

    Small sigma means nearly coincident (ill-conditioned) subspaces.
    Rank-deficient draws (probability ~ 0) are regenerated with a bumped
    seed, at most ``max_retries`` times.
    """
    if not 1 <= d < n:
        raise ValidationError(f"need 1 <= d < n, got d={d}, n={n}")
    if not 0.0 <= sigma <= 1.0:
        raise ValidationError(f"sigma must be in [0, 1], got {sigma}")
    attempt_seed = seed
    for _ in range(max_retries + 1):
        rng = seeded_rng(attempt_seed)
        c1 = rng.standard_normal((n, d))
        z = rng.standard_normal((n, d))
        c2 = (1.0 - sigma) * c1 + sigma * z
        try:
            orthonormal_basis(c1)
            orthonormal_basis(c2)
            return SubspacePair(c1, c2, sigma, seed)
        except RankError:
            attempt_seed += 1000003
    raise RankError(f"rank-deficient generators after {max_retries + 1} draws")


@dataclass
class AltProjTrace:
    """Residual history of a multistep alternating-projection run."""

    ks: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    walltime_s: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    diverged: bool = False
    diverged_at: Optional[int] = None


def altproj_trace(pair, xi, iterations, x0=None, warmup="repeat"):
    """Run y = proj_1(x_mix), x = proj_2(y) with mixing on the x-iterates.

    The recorded residual is |(I - P1 P2) x^(k)| (P2 applied first).
    """
    b1 = orthonormal_basis(pair.c1)
    b2 = orthonormal_basis(pair.c2)
    xi = tuple(float(v) for v in xi)
    if abs(sum(xi) - 1.0) > TOL.mixing_weight_sum:
        raise ValidationError(f"xi must sum to 1, got {sum(xi)!r}")
    tau = len(xi)
    if x0 is None:
        x0 = seeded_rng(pair.seed if pair.seed is not None else 0).standard_normal(
            b1.shape[0]
        )
    x0 = as_vector(x0, "x0")

    def residual(x):
        return float(np.linalg.norm(x - b1 @ (b1.T @ (b2 @ (b2.T @ x)))))

    trace = AltProjTrace()
    history = IterateHistory(tau)
    if warmup == "repeat":
        for _ in range(tau):
            history.push(x0)
    else:
        history.push(x0)

    trace.ks.append(0)
    trace.residuals.append(residual(x0))
    trace.walltime_s.append(0.0)
    trace.iterates.append(x0)

    for k in range(iterations):
        t0 = time.perf_counter()
        if history.full:
            x_mix = mix(history, xi)
        else:
            padded = [x0] * (tau - len(history)) + history.entries()
            x_mix = mix(padded, xi)
        y = b1 @ (b1.T @ x_mix)
        x = b2 @ (b2.T @ y)
        norm = float(np.linalg.norm(x))
        if not np.isfinite(norm) or norm > TOL.divergence_norm:
            trace.diverged = True
            trace.diverged_at = k + 1
            break
        trace.ks.append(k + 1)
        trace.residuals.append(residual(x))
        trace.walltime_s.append(time.perf_counter() - t0)
        trace.iterates.append(x)
        history.push(x)
    return trace


def run_altproj(pair, taus, iterations, x0=None):
    """Alternating-projection traces, one per BDF order in ``taus``."""
    traces = {}
    for tau in taus:
        xi, _ = bdf_coefficients(tau)
        traces[tau] = altproj_trace(pair, tuple(xi), iterations, x0=x0)
    return traces


@dataclass
class MatFacProblem:
    """Factorization target R with factor rank and inner step size."""

    r_matrix: np.ndarray
    rank: int
    alpha: float
    seed: int

    def __post_init__(self):
        n = self.r_matrix.shape[0]
        if self.r_matrix.shape != (n, n):
            raise ValidationError("R must be square")
        if not 1 <= self.rank <= n:
            raise ValidationError(f"rank must be in 1..{n}, got {self.rank}")
        if self.alpha <= 0:
            raise ValidationError(f"alpha must be > 0, got {self.alpha}")


def gen_matfac(n, rank, alpha, seed):
    """Dense N(0,1) target matrix of size n x n."""
    rng = seeded_rng(seed)
    return MatFacProblem(rng.standard_normal((n, n)), rank, alpha, seed)


@dataclass
class MatFacTrace:
    ks: list = field(default_factory=list)
    objective: list = field(default_factory=list)
    walltime_s: list = field(default_factory=list)
    diverged: bool = False
    diverged_at: Optional[int] = None
    factors: Optional[tuple] = None


def matfac_trace(problem, xi, iterations, factors0=None, warmup="ramp"):
    """Multistep alternating minimization on (1/2)|U V^T - R|_F^2.

    Each block update is an exact ridge-regularized least-squares solve;
    mixing applies per block with the shared weights.
    """
    xi = tuple(float(v) for v in xi)
    tau = len(xi)
    r_mat, alpha = problem.r_matrix, problem.alpha
    n = r_mat.shape[0]
    rng = seeded_rng(problem.seed)
    if factors0 is None:
        u = rng.standard_normal((n, problem.rank))
        v = rng.standard_normal((n, problem.rank))
    else:
        u, v = (f.copy() for f in factors0)

    def objective(u_m, v_m):
        return 0.5 * float(np.linalg.norm(u_m @ v_m.T - r_mat) ** 2)

    trace = MatFacTrace()
    hist_u, hist_v = [], []

    def push(u_m, v_m):
        hist_u.append(u_m)
        hist_v.append(v_m)
        if len(hist_u) > tau:
            hist_u.pop(0)
            hist_v.pop(0)

    if warmup == "repeat":
        for _ in range(tau):
            push(u, v)
    else:
        push(u, v)

    def mix_blocks():
        have = len(hist_u)
        if have == tau:
            weights = xi
            us, vs = hist_u, hist_v
        elif have in (1, 2, 3, 4) and have < tau:
            weights = tuple(bdf_coefficients(have)[0])
            us, vs = hist_u[-have:], hist_v[-have:]
        else:
            weights = xi
            us = [hist_u[0]] * (tau - have) + hist_u
            vs = [hist_v[0]] * (tau - have) + hist_v
        u_m = sum(w * m for w, m in zip(weights, us))
        v_m = sum(w * m for w, m in zip(weights, vs))
        return u_m, v_m

    trace.ks.append(0)
    trace.objective.append(objective(u, v))
    trace.walltime_s.append(0.0)

    eye = np.eye(problem.rank)
    for k in range(iterations):
        t0 = time.perf_counter()
        u_mix, v_mix = mix_blocks()
        u = np.linalg.solve(
            (v_mix.T @ v_mix + eye / alpha).T, (r_mat @ v_mix + u_mix / alpha).T
        ).T
        v = np.linalg.solve(
            (u.T @ u + eye / alpha).T, (r_mat.T @ u + v_mix / alpha).T
        ).T
        scale = max(float(np.linalg.norm(u)), float(np.linalg.norm(v)))
        if not np.isfinite(scale) or scale > TOL.divergence_norm:
            trace.diverged = True
            trace.diverged_at = k + 1
            break
        trace.ks.append(k + 1)
        trace.objective.append(objective(u, v))
        trace.walltime_s.append(time.perf_counter() - t0)
        push(u, v)
    trace.factors = (u, v)
    return trace


def run_matfac(problem, taus, iterations, factors0=None):
    """Matrix-factorization traces, one per BDF order in ``taus``."""
    traces = {}
    for tau in taus:
        xi, _ = bdf_coefficients(tau)
        traces[tau] = matfac_trace(problem, tuple(xi), iterations, factors0=factors0)
    return traces


# ---------------------------------------------------------------------------
# serialization

@dataclass
class TraceSeries:
    """Uniform long-format view of any trace for CSV/SVG emission."""

    experiment: str
    seed: int
    tau: int
    metrics: dict
    walltimes: dict
    diverged: bool = False
    diverged_at: Optional[int] = None

    @classmethod
    def from_run_trace(cls, trace, experiment, seed, tau, f_star=None):
        metrics = {"objective": list(zip(trace.ks, trace.objective))}
        if f_star is not None:
            metrics["objective_gap"] = [
                (k, v - f_star) for k, v in zip(trace.ks, trace.objective)
            ]
        if trace.iterate_error is not None:
            metrics["iterate_error"] = list(zip(trace.ks, trace.iterate_error))
        if trace.stationarity:
            metrics["epsilon_beta"] = list(trace.stationarity)
        return cls(
            experiment,
            seed,
            tau,
            metrics,
            dict(zip(trace.ks, trace.walltime_s)),
            trace.diverged,
            trace.diverged_at,
        )

    @classmethod
    def from_altproj_trace(cls, trace, experiment, seed, tau):
        return cls(
            experiment,
            seed,
            tau,
            {"residual": list(zip(trace.ks, trace.residuals))},
            dict(zip(trace.ks, trace.walltime_s)),
            trace.diverged,
            trace.diverged_at,
        )

    @classmethod
    def from_matfac_trace(cls, trace, experiment, seed, tau):
        return cls(
            experiment,
            seed,
            tau,
            {"objective": list(zip(trace.ks, trace.objective))},
            dict(zip(trace.ks, trace.walltime_s)),
            trace.diverged,
            trace.diverged_at,
        )


CSV_HEADER = "experiment,seed,tau,k,metric_name,metric_value,walltime_s,diverged"


def _fmt(value):
    return format(float(value), ".17g")


def emit_csv(series_list, path):
    """Write traces in the long CSV schema (17 significant digits)."""
    if not series_list:
        raise ValidationError("no traces to serialize")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for s in series_list:
            last_k = max(s.walltimes) if s.walltimes else 0
            for name in sorted(s.metrics):
                for k, value in s.metrics[name]:
                    flag = 1 if (s.diverged and k == last_k) else 0
                    fh.write(
                        f"{s.experiment},{s.seed},{s.tau},{k},{name},"
                        f"{_fmt(value)},{_fmt(s.walltimes.get(k, 0.0))},{flag}\n"
                    )


def read_csv(path):
    """Parse a trace CSV back into row dicts (floats bit-exact)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = []
        for row in reader:
            row["seed"] = int(row["seed"])
            row["tau"] = int(row["tau"])
            row["k"] = int(row["k"])
            row["metric_value"] = float(row["metric_value"])
            row["walltime_s"] = float(row["walltime_s"])
            row["diverged"] = int(row["diverged"])
            rows.append(row)
        return rows


@dataclass
class AxesSpec:
    """What emit_svg plots: one metric, log-y by default."""

    title: str
    xlabel: str
    ylabel: str
    metric: str
    ylog: bool = True
    xlog: bool = False


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def emit_svg(series_list, path, axes):
    """Self-contained static SVG line plot, one polyline per trace."""
    if not series_list:
        raise ValidationError("no traces to plot")
    width, height = 880, 540
    left, right, top, bottom = 70, 150, 46, 56
    plot_w, plot_h = width - left - right, height - top - bottom

    curves = []
    for s in series_list:
        pts = [
            (float(k), float(v))
            for k, v in s.metrics.get(axes.metric, [])
            if np.isfinite(v) and (not axes.ylog or v > 0) and (not axes.xlog or k > 0)
        ]
        if pts:
            curves.append((s, pts))
    if not curves:
        raise ValidationError(f"metric {axes.metric!r} has no plottable points")

    def tx(v):
        return np.log10(v) if axes.xlog else v

    def ty(v):
        return np.log10(v) if axes.ylog else v

    xs = [tx(x) for _, pts in curves for x, _ in pts]
    ys = [ty(y) for _, pts in curves for _, y in pts]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def px(v):
        return left + (tx(v) - x_lo) / (x_hi - x_lo) * plot_w

    def py(v):
        return top + (y_hi - ty(v)) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {width} {height}" '
        f'font-family="sans-serif" font-size="13">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#333"/>',
        f'<text x="{left + plot_w / 2:.1f}" y="24" text-anchor="middle" '
        f'font-size="16">{escape(axes.title)}</text>',
        f'<text x="{left + plot_w / 2:.1f}" y="{height - 14}" '
        f'text-anchor="middle">{escape(axes.xlabel)}</text>',
        f'<text x="20" y="{top + plot_h / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 20 {top + plot_h / 2:.1f})">{escape(axes.ylabel)}</text>',
    ]

    for i in range(5):
        frac = i / 4
        gx = x_lo + frac * (x_hi - x_lo)
        label = f"{10 ** gx:.3g}" if axes.xlog else f"{gx:.3g}"
        x_pix = left + frac * plot_w
        parts.append(
            f'<line x1="{x_pix:.1f}" y1="{top + plot_h}" x2="{x_pix:.1f}" '
            f'y2="{top + plot_h + 5}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{x_pix:.1f}" y="{top + plot_h + 20}" '
            f'text-anchor="middle">{escape(label)}</text>'
        )
    for i in range(5):
        frac = i / 4
        gy = y_lo + frac * (y_hi - y_lo)
        label = f"{10 ** gy:.2e}" if axes.ylog else f"{gy:.3g}"
        y_pix = top + plot_h - frac * plot_h
        parts.append(
            f'<line x1="{left - 5}" y1="{y_pix:.1f}" x2="{left}" '
            f'y2="{y_pix:.1f}" stroke="#333"/>'
        )
        parts.append(
            f'<text x="{left - 9}" y="{y_pix + 4:.1f}" '
            f'text-anchor="end">{escape(label)}</text>'
        )

    for idx, (s, pts) in enumerate(curves):
        color = _PALETTE[idx % len(_PALETTE)]
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
        parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="1.6"/>'
        )
        legend_y = top + 16 + 20 * idx
        label = f"tau={s.tau}" + (" (diverged)" if s.diverged else "")
        parts.append(
            f'<line x1="{left + plot_w + 12}" y1="{legend_y}" '
            f'x2="{left + plot_w + 36}" y2="{legend_y}" stroke="{color}" '
            f'stroke-width="2"/>'
        )
        parts.append(
            f'<text x="{left + plot_w + 42}" y="{legend_y + 4}">{escape(label)}</text>'
        )

    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
