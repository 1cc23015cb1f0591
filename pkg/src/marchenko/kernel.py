"""Marchenko kernel from phase-shift data.

The scattering part is built from the half-line transforms

    f(x) = int_0^inf sin(2 delta) sin(k x) dk,
    g(x) = 2 int_0^inf sin^2(delta) cos(k x) dk,

as A_s(x) = -(f + g)/pi; bound states enter A_0 with a minus sign.
"""
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import sici

from . import morse
from .errors import AccuracyLoss, DomainError, FitFailure, KernelRangeError
from .output import write_csv
from .quadrature import filon_cos, filon_grid, filon_sin, panel_rule

K_MIN = 1e-9
K_FILON = 20.0
K_MAX = 100.0
X_FILON = 20.0
RULE_SIZE = 64
FILON_PANELS = 4000          # h = 0.01 on [20, 100]
SPLIT_TOL = 1e-9
PUBLISHED_B = 7.252681534782e-4
PUBLISHED_C = 2.315574387346e-4


def tail_coefficients(a1, a3, a5):
    """Inverse-power coefficients of sin(2 delta) (k^-1, k^-3, k^-5) and
    sin^2(delta) (k^-2, k^-4, k^-6) for delta = a1/k + a3/k^3 + a5/k^5."""
    s = (2 * a1,
         2 * a3 - (2 * a1) ** 3 / 6,
         2 * a5 - (2 * a1) ** 2 * (2 * a3) / 2 + (2 * a1) ** 5 / 120)
    q = (a1 ** 2,
         2 * a1 * a3 - a1 ** 4 / 3,
         a3 ** 2 + 2 * a1 * a5 - 4 * a1 ** 3 * a3 / 3 + 2 * a1 ** 6 / 45)
    return s, q


def _tail_asymptotic(n, z, K, x):
    # I_n = i e^{iz} / (x K^n) sum_j (n)_j (-i/z)^j, stopped at the smallest term
    total = np.zeros(z.shape, dtype=complex)
    term = np.ones(z.shape, dtype=complex)
    active = np.ones(z.shape, dtype=bool)
    prev = np.full(z.shape, np.inf)
    for j in range(400):
        mag = np.abs(term)
        active &= (mag < prev) & (mag > 1e-18)
        if not active.any():
            break
        total = np.where(active, total + term, total)
        prev = mag
        term = term * (n + j) * (-1j / z)
    return 1j * np.exp(1j * z) / (x * K ** n) * total


def tail_integrals(x, K, n_max):
    """S_n = int_K^inf sin(kx) k^-n dk and C_n likewise with cos, n = 1..n_max.

    Rows are indexed by n (row 0 unused).  x = 0 gives the x -> 0+ limits, so
    S_1(0) = pi/2.  Small Kx uses upward recurrence from Si and Ci; large Kx
    the asymptotic expansion, where the recurrence would amplify rounding.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(x < 0):
        raise DomainError("tail integrals need x >= 0")
    S = np.zeros((n_max + 1, x.size))
    C = np.zeros((n_max + 1, x.size))
    z = K * x
    pos = x > 0
    si, ci = sici(np.where(pos, z, 1.0))
    S[1] = np.where(pos, np.pi / 2 - si, np.pi / 2)
    C[1] = np.where(pos, -ci, np.inf)
    for m in range(2, n_max + 1):
        S[m] = np.sin(z) / ((m - 1) * K ** (m - 1)) + x / (m - 1) * np.where(pos, C[m - 1], 0.0)
        C[m] = np.cos(z) / ((m - 1) * K ** (m - 1)) - x / (m - 1) * S[m - 1]
    big = z >= 300.0
    if big.any():
        for m in range(1, n_max + 1):
            val = _tail_asymptotic(m, z[big], K, x[big])
            S[m, big] = val.imag
            C[m, big] = val.real
    return S, C


def _k_edges(k_min=K_MIN, k_max=K_MAX):
    geometric = k_min * 2.0 ** np.arange(0, 64)
    geometric = geometric[geometric < 1.0]
    return np.concatenate([geometric, np.arange(1.0, k_max + 0.25, 0.5)])


@dataclass(frozen=True)
class FourierEngine:
    """Quadrature data for f and g of one model, reusable for any x.

    Gauss-Legendre panels are geometric up to k = 1 (resolving the phase
    jump near k ~ 1/|a0|) and 0.5 wide up to 100; Filon on [20, 100]
    replaces them once x >= 20; beyond k = 100 the inverse-power tail of
    delta is integrated in closed form.
    """
    model: morse.MorseModel
    k_nodes: np.ndarray = field(repr=False)
    k_weights: np.ndarray = field(repr=False)
    sin2d: np.ndarray = field(repr=False)
    sinsq: np.ndarray = field(repr=False)
    filon_sin2d: np.ndarray = field(repr=False)
    filon_sinsq: np.ndarray = field(repr=False)
    high_k: tuple
    s_coef: tuple
    q_coef: tuple

    @classmethod
    def build(cls, model, k_min=K_MIN):
        k, w = panel_rule(RULE_SIZE, _k_edges(k_min))
        d = morse.phase_shifts(model, k)
        kf = filon_grid((K_FILON, K_MAX), FILON_PANELS)
        df = morse.phase_shifts(model, kf)
        high_k = morse.high_k_coefficients(model)
        s, q = tail_coefficients(*high_k)
        return cls(model, k, w, np.sin(2 * d), np.sin(d) ** 2,
                   np.sin(2 * df), np.sin(df) ** 2, high_k, s, q)

    def _gl(self, x, lo, hi):
        sel = (self.k_nodes >= lo) & (self.k_nodes <= hi)
        k, w = self.k_nodes[sel], self.k_weights[sel]
        f = np.empty(x.size)
        g = np.empty(x.size)
        for chunk in np.array_split(np.arange(x.size), max(1, x.size // 256)):
            ph = np.outer(x[chunk], k)
            f[chunk] = np.sin(ph) @ (w * self.sin2d[sel])
            g[chunk] = 2.0 * (np.cos(ph) @ (w * self.sinsq[sel]))
        return f, g

    def _tail(self, x):
        S, C = tail_integrals(x, K_MAX, 6)
        s1, s3, s5 = self.s_coef
        q2, q4, q6 = self.q_coef
        return s1 * S[1] + s3 * S[3] + s5 * S[5], 2.0 * (q2 * C[2] + q4 * C[4] + q6 * C[6])

    def transforms(self, x, check=True):
        """(f, g, split_error) at x >= 0; split_error compares Filon with
        Gauss-Legendre on [20, 100] where Filon is used."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(x < 0) or not np.all(np.isfinite(x)):
            raise DomainError("x must be finite and non-negative")
        f_lo, g_lo = self._gl(x, 0.0, K_FILON)
        f_hi, g_hi = self._gl(x, K_FILON, np.inf)
        split = np.zeros(x.size)
        far = x >= X_FILON
        if far.any():
            ff = filon_sin(self.filon_sin2d, (K_FILON, K_MAX), x[far], FILON_PANELS)
            gf = 2.0 * filon_cos(self.filon_sinsq, (K_FILON, K_MAX), x[far], FILON_PANELS)
            split[far] = np.maximum(np.abs(ff - f_hi[far]), np.abs(gf - g_hi[far]))
            f_hi[far], g_hi[far] = ff, gf
        if check and split.max() > SPLIT_TOL:
            raise AccuracyLoss(f"Filon and Gauss-Legendre differ by {split.max():.2e} on [20, 100]")
        f_t, g_t = self._tail(x)
        return f_lo + f_hi + f_t, g_lo + g_hi + g_t, split


@lru_cache(maxsize=8)
def fourier_engine(model):
    return FourierEngine.build(model)


def _check_phase(phase):
    if phase.k[0] > K_MIN * (1 + 1e-12) or phase.k[-1] < K_MAX * (1 - 1e-12):
        raise DomainError(f"phase table must cover [{K_MIN}, {K_MAX}]")


def compute_f(phase, model, x):
    """f(x); delta is re-evaluated at the quadrature nodes rather than interpolated from ``phase``."""
    _check_phase(phase)
    out = fourier_engine(model).transforms(x)[0]
    return float(out[0]) if np.ndim(x) == 0 else out


def compute_g(phase, model, x):
    _check_phase(phase)
    out = fourier_engine(model).transforms(x)[1]
    return float(out[0]) if np.ndim(x) == 0 else out


def sample_grid(tail_start=30.0):
    """Geometric up to 0.02, step 0.002 up to 1, then 0.01; f has an x^2 log x
    term at the origin, so the spacing shrinks there."""
    if tail_start <= 1.0:
        raise DomainError("tail_start must exceed 1")
    n_steps = int(round((tail_start - 1.0) / 0.01))
    return np.concatenate([[0.0], np.geomspace(1e-6, 0.02, 60)[:-1],
                           np.linspace(0.02, 1.0, 491)[:-1], 1.0 + 0.01 * np.arange(n_steps + 1)])


@dataclass(frozen=True)
class KernelTail:
    """f, g ~ amplitude e^{-rate x} +/- b e^{-c x} + d e^{-2 rate x} for large x.

    The b term (c close to 1/|a0|) cancels in f + g; the d term does not and
    is kept so the tail is accurate from x = 30 on.
    """
    amplitude: float
    rate: float
    b: float
    c: float
    d: float = 0.0

    def f(self, x):
        x = np.asarray(x, dtype=float)
        return (self.amplitude * np.exp(-self.rate * x) + self.b * np.exp(-self.c * x)
                + self.d * np.exp(-2 * self.rate * x))

    def g(self, x):
        x = np.asarray(x, dtype=float)
        return (self.amplitude * np.exp(-self.rate * x) - self.b * np.exp(-self.c * x)
                + self.d * np.exp(-2 * self.rate * x))

    def two_exponential(self):
        return replace(self, d=0.0)


def fit_tail(model, window=(30.0, 60.0), n_points=301, engine=None):
    """b, c from log[(f - g)/2] and d from (f + g)/2 - amplitude e^{-rate x} on ``window``."""
    engine = engine or fourier_engine(model)
    x = np.linspace(*window, n_points)
    f, g, _ = engine.transforms(x)
    amplitude, rate = np.pi / 4 * model.y0, model.alpha / 2
    half_diff = 0.5 * (f - g)
    if np.any(half_diff <= 0):
        raise FitFailure("(f - g)/2 changes sign on the tail window")
    slope, intercept = np.polyfit(x, np.log(half_diff), 1)
    base = 0.5 * (f + g) - amplitude * np.exp(-rate * x)
    shape = np.exp(-2 * rate * x)
    d = float(np.dot(shape, base) / np.dot(shape, shape))
    return KernelTail(float(amplitude), float(rate), float(np.exp(intercept)), float(-slope), d)


def default_bound_terms(model):
    """[(s0^2, gamma0)] with the closed-form norming constant alpha y0^(2a-1)."""
    if model.n_bound != 1:
        raise DomainError(f"model has {model.n_bound} levels; pass bound_terms explicitly")
    return ((float(norming_leading(model)), float(model.levels[0].gamma)),)


def norming_leading(model):
    return morse.norming_constant(model)[0]


@dataclass(frozen=True)
class KernelRep:
    """Sampled scattering transforms, their tail and the bound-state terms.

    Bound states always enter A0 with a minus sign; see ``WrongSignKernel``
    for the deliberately inverted variant.
    """
    sample_grid: np.ndarray = field(repr=False)
    f_samples: np.ndarray = field(repr=False)
    g_samples: np.ndarray = field(repr=False)
    tail: KernelTail
    tail_start: float
    bound_terms: tuple
    interpolation_error: float = 0.0
    tail_mismatch: float = 0.0
    sign_convention: str = field(default="minus", init=False)

    def __post_init__(self):
        for arr in (self.sample_grid, self.f_samples, self.g_samples):
            if not np.all(np.isfinite(arr)):
                raise DomainError("kernel samples must be finite")
            arr.setflags(write=False)
        object.__setattr__(self, "bound_terms",
                           tuple((float(s), float(gm)) for s, gm in self.bound_terms))
        object.__setattr__(self, "_f", CubicSpline(self.sample_grid, self.f_samples))
        object.__setattr__(self, "_g", CubicSpline(self.sample_grid, self.g_samples))

    def fg(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0) or np.any(np.isnan(x)):
            raise KernelRangeError("kernel transforms are defined for x >= 0")
        inner = x < self.tail_start
        f = np.where(inner, self._f(np.where(inner, x, 0.0)), self.tail.f(x))
        g = np.where(inner, self._g(np.where(inner, x, 0.0)), self.tail.g(x))
        return f, g

    def scattering(self, x):
        f, g = self.fg(x)
        return -(f + g) / np.pi

    def scattering_negative(self, x):
        """A_s(-x) = (f(x) - g(x))/pi for x >= 0."""
        f, g = self.fg(x)
        return (f - g) / np.pi

    def bound(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for s_sq, gamma in self.bound_terms:
            out = out + s_sq * np.exp(-gamma * x)
        return out

    def full(self, x):
        return self.scattering(x) - self.bound(x)

    def with_bound_terms(self, bound_terms):
        """Same scattering samples (shared, not copied) with other bound terms."""
        return replace(self, bound_terms=tuple(bound_terms))


@dataclass(frozen=True)
class WrongSignKernel:
    """A0 with the bound-state sum added instead of subtracted."""
    base: KernelRep

    @property
    def sign_convention(self):
        return "plus"

    @property
    def bound_terms(self):
        return self.base.bound_terms

    def scattering(self, x):
        return self.base.scattering(x)

    def full(self, x):
        return self.base.scattering(x) + self.base.bound(x)


def wrong_sign_kernel(rep):
    return WrongSignKernel(rep)


def build_kernel(model, bound_terms=None, tail_start=30.0, fit_window=(30.0, 60.0),
                 audit=True, interp_tol=1e-8, tail_tol=1e-9):
    """Sample f and g, fit the tail and audit both; returns a KernelRep."""
    engine = fourier_engine(model)
    x = sample_grid(tail_start)
    f, g, _ = engine.transforms(x)
    tail = fit_tail(model, fit_window, engine=engine)
    lo = max(tail_start, fit_window[0])
    xt = np.linspace(lo, max(fit_window[1], lo + 1.0), 121)
    ft, gt, _ = engine.transforms(xt)
    mismatch = float(max(np.abs(ft - tail.f(xt)).max(), np.abs(gt - tail.g(xt)).max()))
    if mismatch > tail_tol:
        raise AccuracyLoss(f"tail formula misses the transforms by {mismatch:.2e} beyond x={lo}")
    if bound_terms is None:
        bound_terms = default_bound_terms(model)
    rep = KernelRep(x, f, g, tail, float(tail_start), tuple(bound_terms), 0.0, mismatch)
    if audit:
        mid = 0.5 * (x[1:] + x[:-1])
        fm, gm, _ = engine.transforms(mid)
        fi, gi = rep.fg(mid)
        err = float(max(np.abs(fi - fm).max(), np.abs(gi - gm).max()))
        if err > interp_tol:
            raise AccuracyLoss(f"interpolation error {err:.2e} exceeds {interp_tol:.0e}")
        rep = replace(rep, interpolation_error=err)
    return rep


def scattering_kernel(rep, x):
    out = rep.scattering(x)
    return float(out) if np.ndim(x) == 0 else out


def full_kernel(rep, x):
    out = rep.full(x)
    return float(out) if np.ndim(x) == 0 else out


def _exp_trig_tail(p, k, X):
    """(int_X^inf e^{-px} cos kx dx, int_X^inf e^{-px} sin kx dx)."""
    e = np.exp(-p * X) / (p * p + k * k)
    c, s = np.cos(k * X), np.sin(k * X)
    return e * (p * c - k * s), e * (p * s + k * c)


def inverse_check(rep, k, identity_tol=1e-4):
    """(sin^2 delta, sin 2 delta) recovered from the stored f and g."""
    if k <= 0:
        raise DomainError("k must be positive")
    X = rep.tail_start
    edges = np.concatenate([[0.0], np.geomspace(1e-6, 0.25, 20), np.arange(0.5, X + 0.25, 0.25)])
    edges = edges[edges <= X]
    if edges[-1] < X:
        edges = np.append(edges, X)
    x, w = panel_rule(RULE_SIZE, edges)
    f, g = rep.fg(x)
    cos_int = np.dot(w, g * np.cos(k * x))
    sin_int = np.dot(w, f * np.sin(k * x))
    t = rep.tail
    for coef_f, coef_g, p in ((t.amplitude, t.amplitude, t.rate), (t.b, -t.b, t.c), (t.d, t.d, 2 * t.rate)):
        ci, si = _exp_trig_tail(p, k, X)
        cos_int += coef_g * ci
        sin_int += coef_f * si
    sin_sq = cos_int / np.pi
    sin_2d = 2.0 * sin_int / np.pi
    if abs(sin_2d ** 2 - 4 * sin_sq * (1 - sin_sq)) > identity_tol:
        raise AccuracyLoss(f"recovered pair violates sin^2(2d) = 4 sin^2 d cos^2 d at k={k}")
    return float(sin_sq), float(sin_2d)


def export_kernel_csv(rep, path, x=None):
    x = rep.sample_grid if x is None else np.asarray(x, dtype=float)
    f, g = rep.fg(x)
    return write_csv(path, ["x", "f", "g", "A_s", "A0"],
                     [x, f, g, rep.scattering(x), rep.full(x)])


# The g columns of the published rational fits tabulate g/2, i.e.
# int_0^inf sin^2(delta) cos(kx) dk; multiply by this to compare with g.
FIXTURE_G_SCALE = 2.0


@dataclass(frozen=True)
class RationalFitFixture:
    """Piecewise rational approximants; ranges[which] holds (lo, hi) and
    coefficients[which] an array of shape (n_ranges, 12) ordered a..l."""
    ranges: dict
    coefficients: dict

    def covered(self, which):
        r = self.ranges[which]
        return r[0][0], r[-1][1]


def load_fixture(path=None):
    if path is None:
        text = resources.files("marchenko").joinpath("data/rational_fits.txt").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    ranges = {"f": [], "g": []}
    rows = {"f": {}, "g": {}}
    for line in text.splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "range":
            ranges[parts[1]].append((float(parts[2]), float(parts[3])))
        else:
            rows[parts[1]][parts[0]] = [float(v) for v in parts[2:]]
    coefficients = {}
    for which in ("f", "g"):
        coefficients[which] = np.array([rows[which][c] for c in "abcdefghijkl"]).T
        if coefficients[which].shape != (len(ranges[which]), 12):
            raise DomainError(f"fixture for {which} is malformed")
    return RationalFitFixture(ranges, coefficients)


def rational_fit_eval(fix, which, x, segment=None):
    """Evaluate the fit; the first range is closed, later ones are (lo, hi].

    ``segment`` forces one column of coefficients, whose closed range must
    then contain every x.
    """
    if which not in ("f", "g"):
        raise DomainError("which must be 'f' or 'g'")
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if segment is None:
        lo_all, hi_all = fix.covered(which)
    else:
        lo_all, hi_all = fix.ranges[which][segment]
    if np.any(xs < lo_all) or np.any(xs > hi_all) or np.any(np.isnan(xs)):
        raise DomainError(f"x outside the fitted range [{lo_all}, {hi_all}]")
    his = np.array([hi for _, hi in fix.ranges[which]])
    if segment is None:
        idx = np.minimum(np.searchsorted(his, xs, side="left"), len(his) - 1)
    else:
        idx = np.full(xs.shape, segment)
    c = fix.coefficients[which][idx]
    powers = xs[:, None] ** np.arange(7)
    num = np.sum(c[:, :6] * powers[:, :6], axis=1)
    den = 1.0 + np.sum(c[:, 6:] * powers[:, 1:], axis=1)
    out = num / den
    return float(out[0]) if np.ndim(x) == 0 else out
