"""Nystrom solution of the Marchenko equation and recovery of V(r).

For fixed r, T(x) = A(r, r + x) satisfies

    T(x) = A0(2r + x) + int_0^inf A0(2r + x + y) T(y) dy,

discretised on Gauss-Legendre panels over [0, R] plus a rational map of
[R, inf).  A(r, r) = T(0) and V(r) = -2C dA(r, r)/dr.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ResidualExceeded, SingularSystem
from .morse import morse_eval
from .output import write_csv, write_json
from .quadrature import gauss_legendre, map_semi_infinite, panel_rule

RESIDUAL_TOL = 1e-8
PIVOT_TOL = 1e-13


@dataclass(frozen=True)
class NystromGrid:
    R: float
    finite_panels: int
    points_per_panel: int
    Delta: float
    mapped_points: int
    alpha0: float
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.nodes)


def nystrom_grid(R=15.0, finite_panels=2, points_per_panel=64, Delta=10000.0, mapped_points=64):
    """Panels on [0, R] plus a mapped rule whose outermost node sits at R + Delta."""
    if R <= 0 or Delta <= 0 or finite_panels < 1 or points_per_panel < 1 or mapped_points < 1:
        raise DomainError("invalid Nystrom grid parameters")
    x_fin, w_fin = panel_rule(points_per_panel, np.linspace(0.0, R, finite_panels + 1))
    base = gauss_legendre(mapped_points)
    x0 = base.nodes[0]
    alpha0 = Delta * (1 + x0) / (1 - x0)
    mapped = map_semi_infinite(base, R, alpha0)
    nodes = np.concatenate([x_fin, mapped.mapped_nodes])
    weights = np.concatenate([w_fin, mapped.mapped_weights])
    order = np.argsort(nodes)
    nodes, weights = nodes[order], weights[order]
    if np.any(np.diff(nodes) <= 0):
        raise DomainError("Nystrom nodes are not strictly increasing")
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return NystromGrid(float(R), int(finite_panels), int(points_per_panel), float(Delta),
                       int(mapped_points), float(alpha0), nodes, weights)


@dataclass(frozen=True)
class LinearSystem:
    """(I - M) T = b with M[n, i] = W_i A0(2r + X_n + X_i) and b_n = A0(2r + X_n)."""
    r: float
    matrix: np.ndarray
    rhs: np.ndarray


@dataclass(frozen=True)
class Solution:
    T: np.ndarray
    residual: float
    condition: float


def assemble(kernel, r, grid):
    if r < 0:
        raise DomainError("r must be non-negative")
    X, W = grid.nodes, grid.weights
    K = kernel.full(2 * r + X[:, None] + X[None, :])
    return LinearSystem(float(r), np.eye(len(X)) - K * W[None, :], kernel.full(2 * r + X))


def householder_qr(A):
    """Compact Householder factorisation: returns (R, reflectors) with
    reflectors[j] the unit vector acting on rows j: of the j-th step."""
    R = np.array(A, dtype=float)
    n = R.shape[0]
    reflectors = []
    for j in range(n):
        x = R[j:, j]
        norm_x = np.sqrt(np.dot(x, x))
        v = x.copy()
        if norm_x == 0.0:
            reflectors.append(None)
            continue
        v[0] += np.copysign(norm_x, x[0])
        v /= np.sqrt(np.dot(v, v))
        R[j:, j:] -= 2.0 * np.outer(v, v @ R[j:, j:])
        reflectors.append(v)
    return R, reflectors


def _apply_qt(reflectors, B):
    B = np.array(B, dtype=float)
    for j, v in enumerate(reflectors):
        if v is not None:
            B[j:] -= 2.0 * np.outer(v, v @ B[j:])
    return B


def _back_substitute(R, Y):
    n = R.shape[0]
    diag = np.abs(np.diag(R))
    if diag.min() <= PIVOT_TOL * diag.max():
        raise SingularSystem(f"pivot ratio {diag.min() / diag.max():.1e} below {PIVOT_TOL:.0e}")
    X = np.zeros_like(Y)
    for j in range(n - 1, -1, -1):
        X[j] = (Y[j] - R[j, j + 1:] @ X[j + 1:]) / R[j, j]
    return X


def householder_solve(A, b):
    """Solve A x = b by orthogonal triangularisation and back substitution."""
    R, refl = householder_qr(A)
    y = _apply_qt(refl, np.asarray(b, dtype=float)[:, None])
    return _back_substitute(R, y)[:, 0]


def solve_T(system, condition=True):
    A, b = system.matrix, system.rhs
    R, refl = householder_qr(A)
    n = len(b)
    if condition:
        Y = _apply_qt(refl, np.column_stack([b, np.eye(n)]))
        X = _back_substitute(R, Y)
        T, inv = X[:, 0], X[:, 1:]
        cond = float(np.abs(A).sum(axis=1).max() * np.abs(inv).sum(axis=1).max())
    else:
        T = _back_substitute(R, _apply_qt(refl, b[:, None]))[:, 0]
        cond = float("nan")
    residual = float(np.max(np.abs(A @ T - b)))
    return Solution(T, residual, cond)


def nystrom_interpolate(kernel, r, grid, T, x):
    """T at arbitrary x >= 0 from the discrete equation itself."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    X, W = grid.nodes, grid.weights
    return kernel.full(2 * r + x) + kernel.full(2 * r + x[:, None] + X[None, :]) @ (W * T)


def a_diagonal(kernel, r, grid, solution=None):
    if solution is None:
        solution = solve_T(assemble(kernel, r, grid), condition=False)
    return float(nystrom_interpolate(kernel, r, grid, solution.T, 0.0)[0])


def _probe_points(grid, n_probe=8):
    # midpoints of node gaps spread over the finite panels and the first mapped nodes
    mids = 0.5 * (grid.nodes[1:] + grid.nodes[:-1])
    idx = np.unique(np.linspace(0, len(mids) - 1 - grid.mapped_points // 2, n_probe).astype(int))
    return mids[idx]


def _refined(grid):
    return nystrom_grid(grid.R, 2 * grid.finite_panels, grid.points_per_panel,
                        grid.Delta, 2 * grid.mapped_points)


def off_node_residual(kernel, r, grid, T, probes=None, fine=None):
    """max |T(x) - A0(2r + x) - int A0(2r + x + y) T(y) dy| at off-node x, the
    integral taken on a grid with twice the nodes."""
    probes = _probe_points(grid) if probes is None else probes
    fine = _refined(grid) if fine is None else fine
    t_probe = nystrom_interpolate(kernel, r, grid, T, probes)
    t_fine = nystrom_interpolate(kernel, r, grid, T, fine.nodes)
    integral = kernel.full(2 * r + probes[:, None] + fine.nodes[None, :]) @ (fine.weights * t_fine)
    return float(np.max(np.abs(t_probe - kernel.full(2 * r + probes) - integral)))


def derivative_5pt(values, h):
    """Fourth-order first derivative on a uniform grid, one-sided at both ends."""
    a = np.asarray(values, dtype=float)
    if a.size < 5:
        raise DomainError("need at least five samples")
    d = np.empty_like(a)
    d[2:-2] = (a[:-4] - 8 * a[1:-3] + 8 * a[3:-1] - a[4:]) / (12 * h)
    d[0] = (-25 * a[0] + 48 * a[1] - 36 * a[2] + 16 * a[3] - 3 * a[4]) / (12 * h)
    d[1] = (-3 * a[0] - 10 * a[1] + 18 * a[2] - 6 * a[3] + a[4]) / (12 * h)
    d[-1] = (25 * a[-1] - 48 * a[-2] + 36 * a[-3] - 16 * a[-4] + 3 * a[-5]) / (12 * h)
    d[-2] = (3 * a[-1] + 10 * a[-2] - 18 * a[-3] + 6 * a[-4] - a[-5]) / (12 * h)
    return d


def default_r_grid(lo=0.3, hi=12.0, h=0.01):
    return lo + h * np.arange(int(round((hi - lo) / h)) + 1)


@dataclass(frozen=True)
class ReconstructionResult:
    r_grid: np.ndarray
    a_diag: np.ndarray
    v: np.ndarray
    s0_sq_used: float
    residual_report: np.ndarray
    condition: np.ndarray
    solve_residual: np.ndarray

    def deviation(self, model, window=(0.5, 10.0)):
        sel = (self.r_grid >= window[0] - 1e-12) & (self.r_grid <= window[1] + 1e-12)
        return float(np.max(np.abs(self.v[sel] - morse_eval(model, self.r_grid[sel]))))

    def value_at(self, r):
        i = int(np.argmin(np.abs(self.r_grid - r)))
        if abs(self.r_grid[i] - r) > 1e-9:
            raise DomainError(f"r={r} is not a grid point")
        return float(self.v[i])

    def to_csv(self, path):
        return write_csv(path, ["r", "A_diag", "V", "residual"],
                         [self.r_grid, self.a_diag, self.v, self.residual_report])

    def summary(self, model=None):
        out = {"s0_sq_used": self.s0_sq_used,
               "max_residual": float(self.residual_report.max()),
               "condition_max": float(np.nanmax(self.condition)),
               "condition_median": float(np.nanmedian(self.condition)),
               "n_r": int(self.r_grid.size)}
        if model is not None:
            out["max_deviation_vs_morse"] = self.deviation(model)
            out["v_at_Re"] = float(np.interp(model.Re, self.r_grid, self.v))
        return out

    def to_json(self, path, model=None):
        return write_json(path, self.summary(model))


def _s0_sq(kernel):
    return float(sum(s for s, _ in kernel.bound_terms))


def reconstruct(kernel, r_grid=None, grid=None, C=1.0, residual_tol=RESIDUAL_TOL, condition=True):
    r = default_r_grid() if r_grid is None else np.asarray(r_grid, dtype=float)
    grid = nystrom_grid() if grid is None else grid
    steps = np.diff(r)
    if r.size < 5 or np.any(steps <= 0) or np.ptp(steps) > 1e-9 * steps.mean():
        raise DomainError("r_grid must be uniform, increasing and hold at least five points")
    h = float(steps.mean())
    fine = _refined(grid)
    probes = _probe_points(grid)
    a_diag = np.empty(r.size)
    resid = np.empty(r.size)
    cond = np.empty(r.size)
    solve_res = np.empty(r.size)
    for i, ri in enumerate(r):
        sol = solve_T(assemble(kernel, ri, grid), condition=condition)
        a_diag[i] = a_diagonal(kernel, ri, grid, sol)
        resid[i] = off_node_residual(kernel, ri, grid, sol.T, probes, fine)
        cond[i] = sol.condition
        solve_res[i] = sol.residual
    if residual_tol is not None and resid.max() > residual_tol:
        worst = int(np.argmax(resid))
        raise ResidualExceeded(f"off-node residual {resid[worst]:.2e} at r={r[worst]:.3f}")
    v = -2.0 * C * derivative_5pt(a_diag, h)
    return ReconstructionResult(r, a_diag, v, _s0_sq(kernel), resid, cond, solve_res)


def isospectral_family(kernel_base, s0_sq_values, r_grid=None, grid=None, **kwargs):
    """One reconstruction per norming constant s0^2; the scattering samples are shared."""
    if any(s < 0 for s in s0_sq_values):
        raise DomainError("norming constants must be non-negative")
    if len(kernel_base.bound_terms) != 1:
        raise DomainError("the sweep varies a single bound level")
    gamma = kernel_base.bound_terms[0][1]
    out = []
    for s in s0_sq_values:
        member = kernel_base.with_bound_terms([(s, gamma)] if s > 0 else [])
        out.append(reconstruct(member, r_grid, grid, **kwargs))
    return out


def sign_experiment(kernel_wrong_sign, r_grid=None, grid=None, **kwargs):
    """Reconstruction with the bound term added to A_s; may raise SingularSystem."""
    if kernel_wrong_sign.sign_convention != "plus":
        raise DomainError("sign_experiment expects the wrong-sign kernel")
    kwargs.setdefault("residual_tol", None)
    return reconstruct(kernel_wrong_sign, r_grid, grid, **kwargs)
