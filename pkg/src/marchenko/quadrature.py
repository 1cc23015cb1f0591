"""Quadrature engine: Gauss-Legendre rules, composite panels, Filon's rule
for oscillatory integrands and the algebraic map of [-1, 1] onto [R, inf).
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import ConvergenceFailure, DomainError


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    a: float
    b: float

    @property
    def domain(self):
        return (self.a, self.b)

    def integrate(self, f):
        return float(np.dot(self.weights, f(self.nodes)))


@dataclass(frozen=True)
class MappedRule:
    """Gauss-Legendre rule carried onto [R, inf) by y = R + alpha0 (1-u)/(1+u)."""

    base: QuadratureRule
    R: float
    alpha0: float
    mapped_nodes: np.ndarray
    mapped_weights: np.ndarray

    def integrate(self, f):
        return float(np.dot(self.mapped_weights, f(self.mapped_nodes)))


@lru_cache(maxsize=64)
def _legendre_nodes(n):
    # Newton iteration on P_n from the Tricomi initial guesses
    i = np.arange(1, n + 1)
    x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
    for _ in range(100):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for m in range(2, n + 1):
            p0, p1 = p1, ((2 * m - 1) * x * p1 - (m - 1) * p0) / m
        if n == 1:
            p0, p1 = np.ones_like(x), x
        dp = n * (x * p1 - p0) / (x * x - 1.0)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    else:
        raise ConvergenceFailure(f"Legendre roots for n={n} did not converge")
    # final derivative at the converged nodes
    p0 = np.ones_like(x)
    p1 = x.copy()
    for m in range(2, n + 1):
        p0, p1 = p1, ((2 * m - 1) * x * p1 - (m - 1) * p0) / m
    if n == 1:
        p0, p1 = np.ones_like(x), x
    dp = n * (x * p1 - p0) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    x, w = x[order], w[order]
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(n, a=-1.0, b=1.0):
    """n-point Gauss-Legendre rule on (a, b), exact through degree 2n - 1."""
    if n < 1:
        raise DomainError("rule size must be at least 1")
    if not a < b:
        raise DomainError("need a < b")
    x, w = _legendre_nodes(int(n))
    half = 0.5 * (b - a)
    return QuadratureRule(half * x + 0.5 * (a + b), half * w, float(a), float(b))


def panel_rule(n, edges):
    """Nodes and weights of the n-point rule repeated on consecutive panels."""
    edges = np.asarray(edges, dtype=float)
    if np.any(np.diff(edges) <= 0):
        raise DomainError("panel edges must be strictly increasing")
    x, w = _legendre_nodes(int(n))
    lo, hi = edges[:-1, None], edges[1:, None]
    half = 0.5 * (hi - lo)
    nodes = (half * x + 0.5 * (hi + lo)).ravel()
    weights = (half * w).ravel()
    return nodes, weights


def composite(rule_size, panels, f):
    """Sum of rule_size-point Gauss-Legendre integrals of f over each (a, b) panel."""
    total = 0.0
    prev_b = -np.inf
    for a, b in panels:
        if a < prev_b:
            raise DomainError("panels must be ordered and non-overlapping")
        total += gauss_legendre(rule_size, a, b).integrate(f)
        prev_b = b
    return total


# Filon coefficient functions; Taylor branch below theta = 1/6
_FILON_SMALL = 1.0 / 6.0


def filon_coefficients(theta):
    theta = np.asarray(theta, dtype=float)
    small = np.abs(theta) < _FILON_SMALL
    t = np.where(small, 1.0, theta)
    s, c = np.sin(t), np.cos(t)
    t3 = t ** 3
    alpha = (t * t + t * s * c - 2.0 * s * s) / t3
    beta = 2.0 * (t * (1.0 + c * c) - 2.0 * s * c) / t3
    gamma = 4.0 * (s - t * c) / t3

    u = np.where(small, theta, 0.0)
    u2 = u * u
    alpha_s = u * u2 * (2 / 45 + u2 * (-2 / 315 + u2 * (2 / 4725 + u2 * (
        -8 / 467775 + u2 * (4 / 8513505 - u2 * 2 / 212837625)))))
    beta_s = 2 / 3 + u2 * (2 / 15 + u2 * (-4 / 105 + u2 * (2 / 567 + u2 * (
        -4 / 22275 + u2 * (4 / 675675 - u2 * 8 / 58046625)))))
    gamma_s = 4 / 3 + u2 * (-2 / 15 + u2 * (1 / 210 + u2 * (-1 / 11340 + u2 * (
        1 / 997920 + u2 * (-1 / 129729600 + u2 / 23351328000)))))
    return (np.where(small, alpha_s, alpha),
            np.where(small, beta_s, beta),
            np.where(small, gamma_s, gamma))


def _filon(f_slow, k_interval, x, n_panels, kind):
    a, b = map(float, k_interval)
    if not b > a:
        raise DomainError("need b > a")
    if n_panels < 1:
        raise DomainError("need at least one panel")
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    x = np.atleast_1d(x)
    m = 2 * int(n_panels)
    h = (b - a) / m
    k = a + h * np.arange(m + 1)
    fk = f_slow(k) if callable(f_slow) else np.asarray(f_slow, dtype=float)
    if fk.shape != k.shape:
        raise DomainError(f"sampled envelope needs {m + 1} values")
    al, be, ga = filon_coefficients(h * x)
    phase = np.outer(x, k)
    trig = np.sin(phase) if kind == "sin" else np.cos(phase)
    even = trig[:, 0::2] @ fk[0::2] - 0.5 * (trig[:, 0] * fk[0] + trig[:, -1] * fk[-1])
    odd = trig[:, 1::2] @ fk[1::2]
    if kind == "sin":
        ends = fk[0] * np.cos(x * a) - fk[-1] * np.cos(x * b)
    else:
        ends = fk[-1] * np.sin(x * b) - fk[0] * np.sin(x * a)
    out = h * (al * ends + be * even + ga * odd)
    return float(out[0]) if scalar else out


def filon_sin(f_slow, k_interval, x, n_panels):
    """Filon approximation of int_a^b f_slow(k) sin(k x) dk.

    ``f_slow`` is a callable or the envelope already sampled on the
    2*n_panels + 1 equispaced points of [a, b].  ``x`` may be an array.
    """
    return _filon(f_slow, k_interval, x, n_panels, "sin")


def filon_cos(f_slow, k_interval, x, n_panels):
    """Filon approximation of int_a^b f_slow(k) cos(k x) dk."""
    return _filon(f_slow, k_interval, x, n_panels, "cos")


def filon_grid(k_interval, n_panels):
    """Equispaced sample points a Filon rule with n_panels panels expects."""
    a, b = map(float, k_interval)
    return a + (b - a) / (2 * n_panels) * np.arange(2 * n_panels + 1)


def map_semi_infinite(base, R, alpha0):
    if R < 0:
        raise DomainError("split point must be non-negative")
    if alpha0 <= 0:
        raise DomainError("map scale must be positive")
    if base.a != -1.0 or base.b != 1.0:
        raise DomainError("base rule must live on (-1, 1)")
    u, w = base.nodes, base.weights
    nodes = R + alpha0 * (1.0 - u) / (1.0 + u)
    weights = 2.0 * alpha0 * w / (u + 1.0) ** 2
    return MappedRule(base, float(R), float(alpha0), nodes, weights)
