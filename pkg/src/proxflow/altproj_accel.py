"""Accelerated alternating projections between linear subspaces.

The multistep alternating-projection iteration restricted to a principal
direction with projector-product eigenvalue lambda = cos^2(theta) obeys
the recursion t^(k+1) = lambda * sum_i xi_i t^(k-tau+i), with
characteristic polynomial

    eta^tau - xi_tau lambda eta^(tau-1) - ... - xi_1 lambda.

For tau = 2 the coefficients can be tuned so that the polynomial has a
double root at 1 - sqrt(rho) when lambda = 1 - rho, which beats the
single-step rate 1 - rho.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .numerics import (
    TOL,
    ValidationError,
    orthonormal_basis,
    polynomial_max_root_modulus,
    seeded_rng,
)


@dataclass
class ProjectionSpectrum:
    """Eigenvalues of the composed projector on nontrivial directions.

    ``rho`` is min over eigenvalues below 1 of (1 - lambda); it is None
    (with ``degenerate`` set) when every direction has lambda = 1, i.e.
    the subspaces coincide.
    """

    eigenvalues: np.ndarray
    degenerate: bool = False

    _UNIT = 1.0 - 1e-12

    @property
    def rho(self) -> Optional[float]:
        lams = self.eigenvalues[self.eigenvalues < self._UNIT]
        if lams.size == 0:
            return None
        return float(1.0 - lams.max())


def projection_spectrum(pair):
    """Squared cosines of the principal angles between the pair's spans."""
    b1 = orthonormal_basis(pair.c1)
    b2 = orthonormal_basis(pair.c2)
    sv = np.linalg.svd(b1.T @ b2, compute_uv=False)
    if sv.size and sv[0] > 1.0 + 1e-10:
        raise ValidationError(f"cosine {sv[0]} above 1 beyond tolerance")
    lams = np.clip(sv, 0.0, 1.0) ** 2
    spectrum = ProjectionSpectrum(lams)
    spectrum.degenerate = bool(np.all(lams >= ProjectionSpectrum._UNIT))
    return spectrum


def multistep_altproj_radius(lam, xi):
    """Max root modulus of the mixed alternating-projection recursion."""
    if not -1e-12 <= lam <= 1.0 + 1e-12:
        raise ValidationError(f"lambda must be in [0, 1], got {lam}")
    lam = min(max(lam, 0.0), 1.0)
    xi = tuple(float(v) for v in xi)
    if abs(sum(xi) - 1.0) > TOL.mixing_weight_sum:
        raise ValidationError(f"xi must sum to 1, got {sum(xi)!r}")
    tau = len(xi)
    if lam == 0.0:
        return 0.0
    if tau == 1:
        return lam
    if tau == 2:
        return _quadratic_radius(xi[1] * lam, xi[0] * lam)
    coeffs = [1.0] + [-xi[tau - 1 - i] * lam for i in range(tau)]
    return polynomial_max_root_modulus(coeffs)


def _quadratic_radius(c1, c0):
    """Max root modulus of eta^2 - c1 eta - c0, stable near double roots.

    The discriminant's sign is decided in exact rational arithmetic: a
    complex pair has modulus sqrt(-c0) (the root product), which stays
    accurate where the float discriminant would cancel.
    """
    disc = Fraction(c1) * Fraction(c1) + 4 * Fraction(c0)
    if disc <= 0:
        return math.sqrt(-c0) if c0 != 0.0 else abs(c1) / 2.0
    return 0.5 * (abs(c1) + math.sqrt(float(disc)))


def tuned_xi2(rho):
    """Two-step weights with a double root at 1 - sqrt(rho).

    Built from the double-root construction at lambda = 1 - rho:
    xi_2 = (2 - 2 sqrt(rho)) / (1 - rho), xi_1 = -(1 - sqrt(rho))^2 /
    (1 - rho). The float representative of xi_1 is nudged down by at
    most one ulp when needed so the induced discriminant stays on the
    non-positive side it occupies in exact arithmetic.
    """
    if not 0.0 < rho < 1.0:
        raise ValidationError(f"rho must be in (0, 1), got {rho}")
    s = math.sqrt(rho)
    lam = 1.0 - rho
    # stable forms of (2 - 2 sqrt(rho))/(1 - rho) and -(1 - sqrt(rho))^2/(1 - rho)
    xi2 = 2.0 / (1.0 + s)
    xi1 = -lam / (1.0 + s) ** 2

    def disc(x1):
        c1 = Fraction(xi2 * lam)
        c0 = Fraction(x1 * lam)
        return c1 * c1 + 4 * c0

    for _ in range(4):
        if disc(xi1) <= 0:
            break
        xi1 = np.nextafter(xi1, -np.inf)
    return float(xi1), float(xi2)


def tuned_xi_search(lams, tau, iterations=200):
    """Coordinate search for weights minimizing the worst-case radius.

    Operates on the affine set sum(xi) = 1 for tau in {2, 3}; the result
    is never worse than single-step weights, nor than ``tuned_xi2`` when
    tau = 2 and a single eigenvalue is given.
    """
    if tau not in (2, 3):
        raise ValidationError(f"search supports tau in {{2, 3}}, got {tau}")
    lams = [float(v) for v in lams]
    if not lams:
        raise ValidationError("need at least one eigenvalue")

    def worst(free):
        xi = tuple(free) + (1.0 - sum(free),)
        return max(multistep_altproj_radius(lam, xi) for lam in lams)

    candidates = [tuple([0.0] * (tau - 1))]  # single-step
    if tau == 2:
        for lam in lams:
            if 0.0 < lam < 1.0:
                xi1, _ = tuned_xi2(1.0 - lam)
                candidates.append((xi1,))
    best = min(candidates, key=worst)
    best_val = worst(best)

    step = 0.5
    free = list(best)
    for _ in range(iterations):
        improved = False
        for i in range(len(free)):
            for delta in (step, -step):
                trial = list(free)
                trial[i] += delta
                val = worst(trial)
                if val < best_val - 1e-15:
                    free, best_val, improved = trial, val, True
        if not improved:
            step *= 0.5
            if step < 1e-9:
                break
    return tuple(free) + (1.0 - sum(free),)


def prescribed_angle_pair(angles, ambient=None, seed=None):
    """Subspace pair with exactly the given principal angles.

    Spans are built from pairs (e_i, cos(theta_i) e_i + sin(theta_i)
    e_i'), in a shared orthonormal frame, so the principal angles are
    exact; an optional seeded rotation places them in general position.
    """
    from .experiments import SubspacePair

    angles = np.asarray(angles, dtype=float)
    if angles.ndim != 1 or angles.size < 1:
        raise ValidationError("need at least one angle")
    if np.any(angles < 0) or np.any(angles > np.pi / 2):
        raise ValidationError("angles must lie in [0, pi/2]")
    d = angles.size
    n = 2 * d if ambient is None else int(ambient)
    if n < 2 * d:
        raise ValidationError(f"ambient dimension {n} too small for {d} angles")
    c1 = np.zeros((n, d))
    c2 = np.zeros((n, d))
    for i, theta in enumerate(angles):
        c1[2 * i, i] = 1.0
        c2[2 * i, i] = np.cos(theta)
        c2[2 * i + 1, i] = np.sin(theta)
    if seed is not None:
        rot = orthonormal_basis(seeded_rng(seed).standard_normal((n, n)))
        c1 = rot @ c1
        c2 = rot @ c2
    return SubspacePair(c1=c1, c2=c2, sigma=None, seed=seed)


@dataclass
class RateFit:
    """Log-linear fit of a residual decay curve."""

    rate: float
    k_start: int
    k_end: int
    truncated: bool = False


def verify_rate(pair, xi, iterations, x0=None, floor=1e-280):
    """Fit the empirical decay rate of multistep alternating projections.

    Runs the iteration, then regresses log |r^(k)| on k over the last
    half of the iterations. If the residual underflows before the fit
    window ends, the window shrinks and the fit is flagged truncated.
    """
    from .experiments import altproj_trace

    trace = altproj_trace(pair, tuple(xi), iterations, x0=x0)
    resid = np.asarray(trace.residuals)
    ks = np.arange(resid.size)
    window = ks >= iterations // 2
    alive = resid > floor
    truncated = bool(np.any(window & ~alive))
    keep = window & alive
    if keep.sum() < 2:
        keep = alive
        truncated = True
    if keep.sum() < 2:
        raise ValidationError("residual underflowed immediately; nothing to fit")
    slope = np.polyfit(ks[keep], np.log(resid[keep]), 1)[0]
    kept = ks[keep]
    return RateFit(float(np.exp(slope)), int(kept[0]), int(kept[-1]), truncated)
