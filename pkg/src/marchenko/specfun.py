"""Riemann-Siegel theta function, the arg-gamma combination
B(beta) = arg[Gamma(2i beta) / Gamma(i beta)] and the integral I(beta)
used by the mid-range theta formula.

Bernoulli numbers follow the unsigned convention B_1 = 1/6, B_2 = 1/30,
B_3 = 1/42, ... (the magnitudes of the even-index numbers).
"""
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import comb

import numpy as np
from scipy.special import zeta

from .errors import DomainError, NonConvergence
from .quadrature import panel_rule

EULER_GAMMA = 0.5772156649015329
ZETA3 = 1.2020569031595942
ZETA5 = 1.0369277551433699

SMALL_BETA = 0.1
LARGE_BETA = 20.0


@dataclass(frozen=True)
class ThetaResult:
    value: float
    regime: str
    error_estimate: float


class BernoulliCache:
    """Exact unsigned Bernoulli numbers, filled on first use."""

    def __init__(self):
        self._signed = [Fraction(1)]

    def _extend(self, m):
        # sum_{j<=m} C(m+1, j) b_j = 0 with signed b_j
        b = self._signed
        while len(b) <= m:
            j = len(b)
            b.append(-sum(comb(j + 1, i) * b[i] for i in range(j)) / (j + 1))

    def exact(self, n):
        if n < 1:
            raise DomainError("Bernoulli index must be >= 1")
        self._extend(2 * n)
        return abs(self._signed[2 * n])

    @property
    def values(self):
        return [None] + [self.exact(n) for n in range(1, len(self._signed) // 2 + 1)]

    def __getitem__(self, n):
        return float(self.exact(n))


_BERNOULLI = BernoulliCache()


def bernoulli(n):
    return _BERNOULLI[n]


@lru_cache(maxsize=None)
def _i_series_prefactor(n):
    # (-1)^(n-1) 2^(2n) B_n / ((2n)(2n-1)), exact then rounded once
    q = Fraction((-1) ** (n - 1) * 4 ** n) * _BERNOULLI.exact(n) / (2 * n * (2 * n - 1))
    return float(q)


def i_beta_series_term(n, beta):
    """The n-th term of the Bernoulli series, with the inner binomial sum
    replaced by its closed form Im[(1 + 2i beta)^(2n-1)]."""
    z = 1.0 / (1.0 - 2j * beta)  # (1 + 2i b) / (1 + 4 b^2)
    return _i_series_prefactor(n) * (z ** (2 * n - 1)).imag


def i_beta_series_literal_term(n, beta):
    inner = sum((-1) ** j * comb(2 * n - 1, 2 * j + 1) * (2 * beta) ** (2 * j + 1)
                for j in range(n))
    return _i_series_prefactor(n) * inner / (1 + 4 * beta * beta) ** (2 * n - 1)


def i_beta_series(beta, tol=1e-16, max_terms=2000):
    """I(beta) from the Bernoulli-number series.

    The series is asymptotic: its terms shrink only while n stays below
    roughly pi*sqrt(1 + 4 beta^2)/2, so small beta cannot reach ``tol``
    and raises NonConvergence.
    """
    if beta < 0:
        raise DomainError("beta must be non-negative")
    if beta == 0:
        return 0.0
    total = 0.0
    comp = 0.0
    prev = np.inf
    for n in range(1, max_terms + 1):
        t = i_beta_series_term(n, beta)
        if abs(t) > prev:
            raise NonConvergence(
                f"I({beta}) series terms grow after n={n - 1}; smallest term {prev:.3e}")
        # Kahan summation
        yk = t - comp
        s = total + yk
        comp = (s - total) - yk
        total = s
        if abs(t) <= tol * abs(total):
            return total
        prev = abs(t)
    raise NonConvergence(f"I({beta}) series did not converge in {max_terms} terms")


def _coth_minus_inv(t):
    """coth t - 1/t, without cancellation near t = 0."""
    t = np.asarray(t, dtype=float)
    small = t < 0.25
    ts = np.where(small, t, 0.0)
    t2 = ts * ts
    # 2^(2n) b_2n t^(2n-1) / (2n)!
    ser = ts * (1 / 3 + t2 * (-1 / 45 + t2 * (2 / 945 + t2 * (-1 / 4725 + t2 * (
        2 / 93555 + t2 * (-1382 / 638512875 + t2 * 4 / 18243225))))))
    tl = np.where(small, 1.0, t)
    big = 1.0 + 2.0 / np.expm1(2.0 * tl) - 1.0 / tl
    return np.where(small, ser, big)


def _h(t):
    return _coth_minus_inv(t) / t


def i_beta_quad(beta, tol=1e-16, rule_size=32):
    """I(beta) by quadrature over one half-period T = pi/(2 beta) of the
    folded integrand e^-t sin(pi t/T) sum_m (-1)^m e^-(mT) h(t + mT)."""
    if beta <= 0:
        if beta == 0:
            return 0.0
        raise DomainError("beta must be non-negative")
    T = np.pi / (2.0 * beta)
    upper = min(T, 50.0)
    n_panels = max(4, int(np.ceil(upper / 0.5)))
    t, w = panel_rule(rule_size, np.linspace(0.0, upper, n_panels + 1))
    # terms with e^{-mT} below tol are dropped
    m_max = int(np.ceil(-np.log(tol) / T)) if T < -np.log(tol) else 0
    if m_max > 200000:
        raise NonConvergence(f"folded tail for beta={beta} needs {m_max} terms")
    m = np.arange(m_max + 1)
    signs = np.where(m % 2 == 0, 1.0, -1.0) * np.exp(-m * T)
    folded = np.zeros_like(t)
    for chunk in np.array_split(np.arange(m_max + 1), max(1, (m_max + 1) // 512)):
        folded += (signs[chunk][None, :] * _h(t[:, None] + m[chunk][None, :] * T)).sum(axis=1)
    integrand = np.exp(-t) * np.sin(np.pi * t / T) * folded
    return float(np.dot(w, integrand))


def i_beta(beta):
    """I(beta): the series wherever it converges to full precision, else quadrature."""
    try:
        return i_beta_series(beta)
    except NonConvergence:
        return i_beta_quad(beta)


def _theta_small_terms(beta, tol=1e-18):
    terms = [
        -beta / 4.0 * (2 * EULER_GAMMA + np.pi + 2 * np.log(8 * np.pi)),
        beta ** 3 / 24.0 * (np.pi ** 3 + 28 * ZETA3),
        -beta ** 5 * (np.pi ** 5 / 96.0 + 31 * ZETA5 / 10.0),
    ]
    # further odd powers: (-1)^(j+1) zeta(2j+1, 1/4) (beta/2)^(2j+1) / (2j+1)
    j = 3
    while True:
        t = (-1) ** (j + 1) * zeta(2 * j + 1, 0.25) * (beta / 2) ** (2 * j + 1) / (2 * j + 1)
        terms.append(t)
        if abs(t) < tol or j > 60:
            break
        j += 1
    return terms


def theta_small(beta):
    return float(sum(reversed(_theta_small_terms(beta))))


def theta_large(beta):
    return (-beta / 2 * np.log(2 * np.pi / beta) - beta / 2 - np.pi / 8
            + 1 / (48 * beta) + 7 / (5760 * beta ** 3) + 31 / (80640 * beta ** 5))


def theta_mid(beta):
    return 0.5 * (beta * (np.log(np.sqrt(1 + 4 * beta * beta) / (4 * np.pi)) - 1)
                  - np.arctan(np.tanh(beta * np.pi / 2)) - i_beta(beta) / 2)


def theta(beta):
    """Riemann-Siegel theta arg Gamma(1/4 + i beta/2) - (beta/2) ln pi."""
    if beta < 0:
        r = theta(-beta)
        return ThetaResult(-r.value, r.regime, r.error_estimate)
    if beta < SMALL_BETA:
        terms = _theta_small_terms(beta)
        value, regime, trunc = float(sum(reversed(terms))), "small", abs(terms[-1])
    elif beta > LARGE_BETA:
        # next term of the asymptotic expansion bounds the truncation
        value, regime, trunc = float(theta_large(beta)), "large", 127 / (430080 * beta ** 7)
    else:
        value, regime, trunc = float(theta_mid(beta)), "mid", 1e-15 * max(1.0, abs(beta))
    return ThetaResult(value, regime, trunc + 4 * np.finfo(float).eps * abs(value))


def gamma_arg_B(beta):
    """Continuous arg[Gamma(2i beta)/Gamma(i beta)] = arg Gamma(1/2 + i beta) + 2 beta ln 2."""
    return (beta * np.log(8 * np.pi) + np.arctan(np.tanh(beta * np.pi / 2))
            + 2.0 * theta(beta).value)
