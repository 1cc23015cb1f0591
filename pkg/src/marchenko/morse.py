"""Direct problem for the Morse well on the half line r >= 0.

Energies are in units of the well depth scale with C = hbar^2/(2m); the
coordinate y = 2a exp(-alpha (r - Re)) maps r = 0 to y0 and r -> inf to 0.
The phase shift is the argument of the S-function at y0.
"""
from collections import namedtuple
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import gammaincc, gamma as gamma_fn

from . import specfun
from .errors import BranchAmbiguity, DomainError, FitFailure, NonConvergence
from .quadrature import panel_rule

SERIES_TOL = 1e-14
MAX_TERMS = 10000
LOW_ENERGY_BETA = 1e-7

Level = namedtuple("Level", "n energy gamma")


@dataclass(frozen=True)
class MorseModel:
    D: float = 1.0
    alpha: float = 2.0 / 3.0
    Re: float = 2.5
    C: float = 1.0

    def __post_init__(self):
        for name in ("D", "alpha", "Re", "C"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive, got {v}")

    @property
    def a(self):
        return np.sqrt(self.D / self.C) / self.alpha

    @property
    def y0(self):
        return 2.0 * self.a * np.exp(self.alpha * self.Re)

    @cached_property
    def levels(self):
        return bound_levels(self)

    @property
    def n_bound(self):
        return len(self.levels)

    @cached_property
    def s_sq(self):
        return [norming_constant(self)[0]] if self.n_bound == 1 else []

    def y(self, r):
        return 2.0 * self.a * np.exp(-self.alpha * (np.asarray(r, dtype=float) - self.Re))

    def beta(self, k):
        return np.asarray(k, dtype=float) / self.alpha


def ne2_model():
    """Ne2 Morse approximant in units r0 = sqrt(hbar^2/(2 m D)) = 0.2388 A, D = 42.153 K.

    Distances convert as r[A] = 0.2388 * r, energies as E[K] = 42.153 * E.
    """
    return MorseModel(D=1.0, alpha=0.4879, Re=3.0895 / 0.2388, C=1.0)


def morse_eval(model, r):
    e = np.exp(-model.alpha * (np.asarray(r, dtype=float) - model.Re))
    return model.D * (e * e - 2.0 * e)


def bound_levels(model):
    a = model.a
    out = []
    n = 0
    while (n + 0.5) / a < 1.0:
        energy = -model.D * (1.0 - (n + 0.5) / a) ** 2
        out.append(Level(n, energy, np.sqrt(-energy / model.C)))
        n += 1
    return out


def bound_wavefunction(model, r):
    """Unnormalised ground state y^(a - 1/2) exp(-y/2); equals y exp(-y/2) when a = 3/2."""
    if model.n_bound < 1:
        raise DomainError("model has no bound state")
    y = model.y(r)
    return np.exp(-y / 2) * y ** (model.a - 0.5)


def norming_constant(model, rule_size=64):
    """(leading, full) norming constant of the Jost solution of the ground state.

    leading = alpha y0^(2s) with s = a - 1/2; full divides it by the lower
    incomplete gamma integral int_0^y0 y^(2s-1) e^-y dy, whose complement
    over [y0, inf) is done by composite Gauss-Legendre.
    """
    if model.n_bound != 1:
        raise DomainError(f"norming constant needs exactly one level, model has {model.n_bound}")
    s = model.a - 0.5
    y0 = model.y0
    leading = model.alpha * y0 ** (2 * s)
    nodes, weights = panel_rule(rule_size, y0 + np.linspace(0.0, 80.0 + 4 * s, 17))
    upper = np.dot(weights, nodes ** (2 * s - 1) * np.exp(-nodes))
    full = leading / (gamma_fn(2 * s) - upper)
    return leading, full


def norming_constant_closed_form(model):
    """Same quantity as ``norming_constant(...)[1]`` through the regularised gamma function."""
    s = model.a - 0.5
    return model.alpha * model.y0 ** (2 * s) / (gamma_fn(2 * s) * (1.0 - gammaincc(2 * s, model.y0)))


@dataclass(frozen=True)
class SFunctionValue:
    value: complex
    terms_used: int
    truncation_estimate: float

    @property
    def magnitude(self):
        return abs(self.value)

    @property
    def argument(self):
        return float(np.angle(self.value))


def _s_sum(a, beta, y, tol=SERIES_TOL, max_terms=MAX_TERMS):
    """Vectorised recurrence sum of B_n; returns (sum, terms, estimate).

    The terms reach ~e^(y/2) before cancelling to ~e^(-y/2), so the
    recurrence runs in extended (long double) precision.
    """
    beta, y = np.broadcast_arrays(np.asarray(beta, dtype=float), np.asarray(y, dtype=float))
    y = y.astype(np.longdouble)
    a = np.longdouble(a)
    c = 2j * beta.astype(np.clongdouble)
    b_prev = np.ones(beta.shape, dtype=np.clongdouble)
    b_cur = -a * y / (c + 1)
    total = b_prev + b_cur
    n = 1
    est = np.abs(b_cur) + 1.0
    done = (y == 0)
    while n < max_terms:
        n += 1
        b_next = y / (n * (c + n)) * (-a * b_cur + y / 4 * b_prev)
        total = total + b_next
        est = np.abs(b_next) + np.abs(b_cur)
        done = done | (est < tol * np.abs(total))
        if done.all():
            break
        b_prev, b_cur = b_cur, b_next
    else:
        raise NonConvergence(f"S-series did not converge within {max_terms} terms")
    return total.astype(complex), n, est.astype(float)


def s_series(model, k, y, tol=SERIES_TOL, max_terms=MAX_TERMS):
    if k <= 0 or y < 0:
        raise DomainError("need k > 0 and y >= 0")
    if y == 0:
        return SFunctionValue(1.0 + 0j, 1, 0.0)
    total, n, est = _s_sum(model.a, model.beta(k), y, tol, max_terms)
    return SFunctionValue(complex(total), int(n), float(est))


def _s_low_energy(a, beta, y, tol=1e-17, max_terms=MAX_TERMS):
    """First order in beta of exp(-y/2) Phi(1/2 - a + i beta, 1 + 2i beta; y)."""
    beta, y = np.broadcast_arrays(np.asarray(beta, dtype=float), np.asarray(y, dtype=float))
    p = 0.5 - a
    t0 = np.ones(y.shape)   # P0_n y^n / (Q0_n n!)
    u = np.zeros(y.shape)   # P1_n y^n / (Q0_n n!)
    v = 0.0                 # Q1_n / Q0_n
    re = t0.copy()
    im = np.zeros(y.shape)
    for n in range(1, max_terms):
        fac = y / (n * n)
        t0, u = t0 * (p + n - 1) * fac, (u * (p + n - 1) + t0) * fac
        v += 2.0 / n
        d = u - t0 * v
        re += t0
        im += d
        scale = np.maximum(np.abs(re), np.abs(im))
        if np.all((np.abs(t0) + np.abs(d) <= tol * scale) & (n > p + 2)):
            break
    else:
        raise NonConvergence("low-energy S-series did not converge")
    return np.exp(-y / 2) * (re + 1j * beta * im), n


def s_series_low_energy(model, k, y, threshold=LOW_ENERGY_BETA):
    beta = k / model.alpha
    if not 0 < beta < threshold:
        raise DomainError(f"beta={beta:.3e} outside the low-energy range (0, {threshold})")
    if y < 0:
        raise DomainError("y must be non-negative")
    value, n = _s_low_energy(model.a, beta, y)
    return SFunctionValue(complex(value), int(n), 0.0)


def s_function(model, k, y, threshold=LOW_ENERGY_BETA):
    """S(a, i beta; y) for arrays, switching to the low-energy form below threshold."""
    k, y = np.broadcast_arrays(np.asarray(k, dtype=float), np.asarray(y, dtype=float))
    beta = k / model.alpha
    out = np.empty(k.shape, dtype=complex)
    low = beta < threshold
    if low.any():
        out[low] = _s_low_energy(model.a, beta[low], y[low])[0]
    if (~low).any():
        out[~low] = _s_sum(model.a, beta[~low], y[~low])[0]
    return out


def phase_shifts(model, k, threshold=LOW_ENERGY_BETA):
    """Principal-value phase shifts arg S(a, i beta; y0) for an array of k > 0."""
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0):
        raise DomainError("wavenumbers must be positive")
    return np.angle(s_function(model, k, model.y0, threshold))


def phase_shift_series(model, k, threshold=LOW_ENERGY_BETA):
    if k <= 0:
        raise DomainError("k must be positive")
    return float(phase_shifts(model, np.array([k]), threshold)[0])


def _asymptotic_ratio_series(N, beta, y, sign):
    """Optimally truncated sum of one of the two asymptotic series of the
    ratio; the half-size smallest term is added as a terminant."""
    total = 1.0
    prev = 1.0
    term = 1.0
    n = 0
    while True:
        n += 1
        if sign < 0:
            term = -term * ((N - n + 1) ** 2 + beta * beta) / (n * y)
        else:
            term = term * ((N + n) ** 2 + beta * beta) / (n * y)
        if abs(term) >= abs(prev) or abs(term) < 1e-17 * abs(total):
            break
        total += term
        prev = term
    if n == 1 and abs(term) >= 1.0:
        raise NonConvergence(f"asymptotic series diverges from its first term at beta={beta}")
    total += 0.5 * term
    # the observed error runs at about the full smallest term
    return total, abs(term), n


def asymptotic_phase(model, k):
    """Phase shift from the connection-formula route; returns (delta, error estimate).

    tan(phase_offset + delta) = (alpha_N^2 beta e^y0 / (y0^(2N+1) cosh(pi beta)))
                                 * Den(N, beta; y0) / Num(N, beta; y0)
    with Num the alternating and Den the positive asymptotic series and
    phase_offset = beta ln(2a) + beta_N - B(beta) + k Re.  Only tan(delta)
    is fixed, so delta is returned in (-pi/2, pi/2].
    """
    if k <= 0:
        raise DomainError("k must be positive")
    N = model.a - 0.5
    if N < -1e-12 or abs(N - round(N)) > 1e-10:
        raise DomainError(f"a - 1/2 = {N} is not a non-negative integer")
    N = int(round(N))
    beta = k / model.alpha
    y0 = model.y0
    num, err_num, _ = _asymptotic_ratio_series(N, beta, y0, -1)
    den, err_den, _ = _asymptotic_ratio_series(N, beta, y0, +1)
    j = np.arange(1, N + 1)
    beta_n = float(np.sum(np.arctan(beta / j)))
    alpha_n_sq = float(np.prod(j * j + beta * beta))
    phase_offset = beta * np.log(2 * model.a) + beta_n - specfun.gamma_arg_B(beta) + k * model.Re
    # e^y0 / cosh(pi beta) without overflow
    growth = 2.0 * np.exp(y0 - np.pi * beta) / (1.0 + np.exp(-2 * np.pi * beta))
    tangent = alpha_n_sq * beta * growth / y0 ** (2 * N + 1) * den / num
    delta = np.arctan(tangent) - phase_offset
    delta = -((-delta + np.pi / 2) % np.pi - np.pi / 2)
    rel = err_num / abs(num) + err_den / abs(den)
    err = rel * abs(tangent) / (1.0 + tangent * tangent)
    return float(delta), float(err)


def phase_shift_asymptotic(model, k, tol=1e-6):
    delta, err = asymptotic_phase(model, k)
    if err > tol:
        raise NonConvergence(f"asymptotic route error estimate {err:.2e} exceeds {tol:.1e} at k={k}")
    return delta


def wrap_pi(d):
    """Reduce to (-pi/2, pi/2]; used when comparing phases known modulo pi."""
    return -((-np.asarray(d) + np.pi / 2) % np.pi - np.pi / 2)


@dataclass(frozen=True)
class PhaseTable:
    k: np.ndarray
    delta: np.ndarray
    method: tuple
    n_bound: int
    levinson_residual: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "levinson_residual",
                           float(abs(self.delta[0] - self.delta[-1] - self.n_bound * np.pi)))

    @property
    def entries(self):
        return list(zip(self.k.tolist(), self.delta.tolist(), self.method))

    def __len__(self):
        return len(self.k)


def log_grid(k_min=1e-9, k_max=100.0, per_decade=64):
    decades = np.log10(k_max) - np.log10(k_min)
    n = int(round(decades * per_decade)) + 1
    return np.logspace(np.log10(k_min), np.log10(k_max), n)


def phase_table(model, grid=None, threshold=LOW_ENERGY_BETA):
    """Unwrapped phase shift on an increasing grid, normalised to vanish as k -> inf."""
    k = log_grid() if grid is None else np.sort(np.asarray(grid, dtype=float))
    if k.ndim != 1 or len(k) < 2 or np.any(k <= 0) or np.any(np.diff(k) <= 0):
        raise DomainError("grid must hold at least two distinct positive wavenumbers")
    principal = phase_shifts(model, k, threshold)
    unwrapped = np.unwrap(principal)
    if np.max(np.abs(np.diff(unwrapped))) >= np.pi / 2:
        raise BranchAmbiguity("adjacent phases differ by pi/2 or more; refine the grid")
    unwrapped = unwrapped - 2 * np.pi * np.round(unwrapped[-1] / (2 * np.pi))
    method = tuple("low_energy" if b < threshold else "series" for b in k / model.alpha)
    unwrapped.setflags(write=False)
    k = k.copy()
    k.setflags(write=False)
    return PhaseTable(k, unwrapped, method, model.n_bound)


def scattering_wavefunction(model, k, r, threshold=LOW_ENERGY_BETA):
    """Regular solution |S| sin(k r + arg S0 - arg S), which tends to sin(k r + delta)."""
    if k <= 0:
        raise DomainError("k must be positive")
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise DomainError("r must be non-negative")
    s0 = s_function(model, k, model.y0, threshold)
    s = s_function(model, np.full(r.shape, k), model.y(r), threshold)
    # -Im[e^{-i arg S0} e^{-ikr} S] written without forming the angles
    out = -(np.conj(s0) / abs(s0) * np.exp(-1j * k * r) * s).imag
    return float(out) if out.ndim == 0 else out


def scattering_length(model, window=(1e-9, 1e-6), n_points=31, tol=1e-6):
    """Least-squares a0 from delta = N pi - arctan(k a0), i.e. -tan(delta) = k a0."""
    k = np.logspace(np.log10(window[0]), np.log10(window[1]), n_points)
    t = -np.tan(phase_shifts(model, k))
    a0 = float(np.dot(k, t) / np.dot(k, k))
    resid = np.max(np.abs(t - k * a0) / np.abs(k * a0))
    if resid > tol:
        raise FitFailure(f"scattering-length fit residual {resid:.2e} > {tol:.1e}")
    return a0


def scattering_length_low_energy(model):
    """a0 = -Im S1 / (alpha Re S0) from the first-order-in-beta expansion at y0."""
    value, _ = _s_low_energy(model.a, 1.0, model.y0)
    return float(-value.imag / (model.alpha * value.real))


def scattering_length_from_wavefunction(model, k=1e-9, r_window=(60.0, 600.0), n_points=41):
    """r-intercept of the linear low-energy wavefunction, Psi ~ -k (r - a0)."""
    r = np.linspace(*r_window, n_points)
    psi = scattering_wavefunction(model, k, r)
    slope, intercept = np.polyfit(r, psi, 1)
    return float(-intercept / slope)


def potential_integral(model):
    """Closed-form int_0^inf V(r) dr."""
    al, re = model.alpha, model.Re
    return model.D * (np.exp(2 * al * re) / (2 * al) - 2 * np.exp(al * re) / al)


def high_k_coefficients(model, window=(50.0, 100.0), n_points=101, tol=1e-8):
    """(a1, a3, a5) of delta ~ a1/k + a3/k^3 + a5/k^5; a1 exact, a3 and a5 fitted."""
    a1 = -potential_integral(model) / (2 * model.C)
    k = np.linspace(*window, n_points)
    delta = phase_shifts(model, k)
    design = np.stack([k ** -3, k ** -5], axis=1)
    rhs = delta - a1 / k
    (a3, a5), *_ = np.linalg.lstsq(design, rhs, rcond=None)
    resid = np.abs(design @ np.array([a3, a5]) - rhs)
    if np.any(resid > tol * np.abs(delta)):
        raise FitFailure(f"high-k fit residual {resid.max():.2e} exceeds {tol:.0e}*|delta|")
    return float(a1), float(a3), float(a5)
