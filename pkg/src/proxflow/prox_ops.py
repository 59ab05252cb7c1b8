"""Closed-form and exactly solvable proximal operators and projections.

Every operator here maps ``(point, weight)`` to a point of the same
dimension, and weight 0 is the identity. These are the inner oracles
consumed by the multistep driver.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .numerics import (
    TOL,
    ValidationError,
    as_matrix,
    as_vector,
    solve_linear,
    sym_eigen,
)


def prox_l1(x, t):
    """Soft threshold: argmin_u t|u|_1 + (1/2)|u - x|^2, elementwise.

    Entries with |x_i| <= t collapse to 0; the rest shrink toward 0 by t.
    """
    v = as_vector(x, "x")
    if t < 0:
        raise ValidationError(f"threshold must be >= 0, got {t}")
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def prox_lsp(x, theta, beta):
    """Proximal operator of the log-sum penalty, elementwise.

    For each coordinate this minimizes
    ``beta * log(1 + |u|/theta) + (1/2)(u - x_i)^2`` over u.
    Stationarity on u > 0 gives the quadratic
    ``u^2 + (theta - |x|) u + (beta - theta |x|) = 0`` whose larger root is
    ``u+ = ((|x| - theta) + sqrt((|x| + theta)^2 - 4 beta)) / 2``.
    We return ``sign(x) * u+`` when that root exists, is positive and has a
    strictly lower 1-D objective than 0; otherwise 0 (ties prefer the
    sparser point, so the operator is a deterministic function even in the
    nonconvex regime where the prox is set-valued).
    """
    v = as_vector(x, "x")
    if theta <= 0:
        raise ValidationError(f"theta must be > 0, got {theta}")
    if beta < 0:
        raise ValidationError(f"beta must be >= 0, got {beta}")

    a = np.abs(v)
    disc = (a + theta) ** 2 - 4.0 * beta
    has_root = disc >= 0.0
    root = np.where(has_root, ((a - theta) + np.sqrt(np.maximum(disc, 0.0))) / 2.0, 0.0)
    positive = has_root & (root > 0.0)

    obj_root = beta * np.log1p(np.where(positive, root, 0.0) / theta) + 0.5 * (
        np.where(positive, root, 0.0) - a
    ) ** 2
    obj_zero = 0.5 * a**2
    take_root = positive & (obj_root < obj_zero)
    return np.sign(v) * np.where(take_root, root, 0.0)


@dataclass
class QuadraticProblem:
    """Quadratic objective f(x) = (1/2) x^T Q x + c^T x with Q symmetric PSD.

    ``mu`` and ``L`` are the extreme eigenvalues of Q; the constructor
    checks them against a fresh eigendecomposition.
    """

    q: np.ndarray
    c: np.ndarray
    mu: float
    lmax: float

    def __post_init__(self):
        self.q = as_matrix(self.q, "Q")
        self.c = as_vector(self.c, "c")
        if self.q.shape[0] != self.c.size:
            raise ValidationError("Q and c dimensions disagree")
        if self.mu > self.lmax:
            raise ValidationError(f"mu={self.mu} exceeds L={self.lmax}")
        w = sym_eigen(self.q).eigenvalues
        scale = max(abs(w[0]), abs(w[-1]), 1.0)
        if abs(w[0] - self.mu) > TOL.spectrum_match * scale or abs(
            w[-1] - self.lmax
        ) > TOL.spectrum_match * scale:
            raise ValidationError(
                f"(mu, L)=({self.mu}, {self.lmax}) do not match the spectrum "
                f"extremes ({w[0]}, {w[-1]})"
            )

    @classmethod
    def from_matrix(cls, q, c=None):
        q = as_matrix(q, "Q")
        if c is None:
            c = np.zeros(q.shape[0])
        w = sym_eigen(q).eigenvalues
        return cls(q, c, float(w[0]), float(w[-1]))

    def value(self, x):
        return 0.5 * float(x @ self.q @ x) + float(self.c @ x)

    def grad(self, x):
        return self.q @ x + self.c


def prox_quadratic(problem, x, beta):
    """Exact prox of a quadratic: solve (I + beta Q) z = x - beta c."""
    v = as_vector(x, "x")
    if beta < 0:
        raise ValidationError(f"beta must be >= 0, got {beta}")
    if beta == 0:
        return v.copy()
    n = v.size
    return solve_linear(np.eye(n) + beta * problem.q, v - beta * problem.c)


def project_subspace(basis, x):
    """Orthogonal projection B B^T x onto the span of orthonormal columns."""
    b = as_matrix(basis, "basis")
    v = as_vector(x, "x")
    gram_dev = np.abs(b.T @ b - np.eye(b.shape[1])).max()
    if gram_dev > TOL.projector_orthonormal:
        raise ValidationError(
            f"basis is not orthonormal: max |B^T B - I| = {gram_dev:.3e}"
        )
    return b @ (b.T @ v)


@dataclass
class ProxOracle:
    """A prox evaluator ``(point, weight) -> point`` with a descriptor tag."""

    evaluator: Callable[[np.ndarray, float], np.ndarray]
    tag: str

    def __call__(self, x, beta):
        if beta == 0:
            return as_vector(x, "x").copy()
        out = self.evaluator(np.asarray(x, dtype=float), float(beta))
        if out.shape != np.shape(x):
            raise ValidationError(f"{self.tag} prox changed dimension")
        return out


def l1_oracle(strength=1.0):
    return ProxOracle(lambda x, b: prox_l1(x, strength * b), "l1")


def lsp_oracle(theta):
    return ProxOracle(lambda x, b: prox_lsp(x, theta, b), "lsp")


def quadratic_oracle(problem):
    return ProxOracle(lambda x, b: prox_quadratic(problem, x, b), "quadratic")


def subspace_oracle(basis):
    return ProxOracle(lambda x, b: project_subspace(basis, x), "subspace")


def zero_oracle():
    return ProxOracle(lambda x, b: np.asarray(x, dtype=float).copy(), "zero")
