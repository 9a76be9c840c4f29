"""1D finite-difference solvers for the backward/elliptic integro-differential
equations and the drift-removing change of variables Phi(x) = x + u(x).

Local part: a(x) u'' + b(x) u' - lambda u with a = sigma^2/2, centered second
difference and upwinded first derivative (the resulting matrix is an M-matrix,
so the discrete comparison principle holds).  The nonlocal small-jump part is
treated explicitly (lagged) inside the implicit local solve and iterated to a
fixed point, mirroring its lower-order role.

The nonlocal operator splits the z-integral at delta = sqrt(h): below delta
the exact second-order Taylor remainder collapses to u''(x)/2 times the
second jump moment; above delta the integrand u(x+g)-u(x)-g u'(x) is
integrated directly on log-spaced Gauss-Legendre panels with doubling until
the value settles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import interpolate, sparse
from scipy.sparse.linalg import splu

from levylab.errors import (
    ContractionError,
    ExtrapolationError,
    NonConvergenceError,
    ParameterError,
)
from levylab.sde_model import SdeProblem, floor_away_from_zero, gamma_moment, problem_1d

__all__ = [
    "GridFunction",
    "SpaceTimeSolution",
    "EllipticSolution",
    "ZvonkinMap",
    "apply_nonlocal",
    "solve_backward_pide",
    "solve_elliptic",
    "build_zvonkin",
    "grid_lipschitz_quotient",
    "gridfunction_to_csv",
]


@dataclass
class GridFunction:
    """Values on a uniform 1D grid with an out-of-domain extension policy.

    Interior evaluation is piecewise linear; outside [lo, hi] the function is
    continued by a constant (edge value) or linearly (edge slope).
    """

    lo: float
    hi: float
    n: int
    values: np.ndarray
    extension: str = "linear"

    def __post_init__(self):
        if self.n < 3:
            raise ParameterError(f"grid needs n >= 3 nodes, got {self.n}")
        if not self.hi > self.lo:
            raise ParameterError("grid needs hi > lo")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.n,):
            raise ParameterError(f"values shape {self.values.shape} != ({self.n},)")
        if not np.all(np.isfinite(self.values)):
            raise ParameterError("grid values must be finite")
        if self.extension not in ("constant", "linear"):
            raise ParameterError(f"unknown extension policy {self.extension!r}")

    @property
    def h(self):
        return (self.hi - self.lo) / (self.n - 1)

    @property
    def x(self):
        return np.linspace(self.lo, self.hi, self.n)

    @classmethod
    def from_callable(cls, fn, lo, hi, n, extension="linear"):
        xs = np.linspace(lo, hi, n)
        return cls(lo, hi, n, np.asarray(fn(xs), dtype=float), extension)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        inner = np.interp(x, self.x, self.values)
        lo_slope = (self.values[1] - self.values[0]) / self.h
        hi_slope = (self.values[-1] - self.values[-2]) / self.h
        if self.extension == "constant":
            return inner
        out = np.where(
            x < self.lo,
            self.values[0] + lo_slope * (x - self.lo),
            np.where(x > self.hi, self.values[-1] + hi_slope * (x - self.hi), inner),
        )
        return out

    def stencil_derivatives(self):
        """(u', u'') at the nodes by central stencils (one-sided at edges)."""
        u, h = self.values, self.h
        du = np.gradient(u, h, edge_order=2)
        d2 = np.empty_like(u)
        d2[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / h**2
        d2[0], d2[-1] = d2[1], d2[-2]
        return du, d2

    def grad_max(self):
        return float(np.max(np.abs(self.stencil_derivatives()[0])))

    def sup(self):
        return float(np.max(np.abs(self.values)))

    def cell_slope(self, x):
        """Exact derivative of the piecewise-linear interpolant at x."""
        x = np.asarray(x, dtype=float)
        idx = np.clip(((x - self.lo) / self.h).astype(int), 0, self.n - 2)
        slopes = np.diff(self.values) / self.h
        lo_slope = slopes[0] if self.extension == "linear" else 0.0
        hi_slope = slopes[-1] if self.extension == "linear" else 0.0
        out = slopes[idx]
        return np.where(x < self.lo, lo_slope, np.where(x > self.hi, hi_slope, out))

    def _spline(self):
        # not-a-knot cubic: reproduces quadratics exactly for the nonlocal tests
        if not hasattr(self, "_spline_cache"):
            self._spline_cache = interpolate.CubicSpline(self.x, self.values, bc_type="not-a-knot")
        return self._spline_cache

    def eval_smooth(self, x):
        """Cubic-spline interior evaluation, extension policy outside."""
        x = np.asarray(x, dtype=float)
        out = np.asarray(self._spline()(np.clip(x, self.lo, self.hi)))
        if self.extension == "linear":
            lo_slope = (self.values[1] - self.values[0]) / self.h
            hi_slope = (self.values[-1] - self.values[-2]) / self.h
            out = np.where(x < self.lo, self.values[0] + lo_slope * (x - self.lo), out)
            out = np.where(x > self.hi, self.values[-1] + hi_slope * (x - self.hi), out)
        return out


def gridfunction_to_csv(gf, fileobj):
    fileobj.write("x,value\n")
    for xi, vi in zip(gf.x, gf.values):
        fileobj.write(f"{format(float(xi), '.17g')},{format(float(vi), '.17g')}\n")


# ---------------------------------------------------------------------------
# nonlocal operator


def _outer_panels(delta, big_r, n_panels):
    """Gauss-Legendre nodes/weights on log-spaced panels of [delta, R]."""
    edges = np.exp(np.linspace(math.log(delta), math.log(big_r), n_panels + 1))
    gl_x, gl_w = np.polynomial.legendre.leggauss(8)
    lo, hi = edges[:-1], edges[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    nodes = (mid[:, None] + half[:, None] * gl_x[None, :]).ravel()
    weights = (half[:, None] * gl_w[None, :]).ravel()
    return nodes, weights


def _nonlocal_outer_on_points(u, p, xs, delta, tol=1e-6):
    """Outer part of the small-jump generator at points xs (vectorized).

    Direct quadrature of u(x+g(x,z)) - u(x) - g(x,z) u'(x) over
    delta <= |z| < R, doubling the panel count until the value settles.
    """
    model = p.levy
    big_r = model.big_jump_radius
    if delta >= big_r:
        return np.zeros_like(xs)
    du, _ = u.stencil_derivatives()
    du_x = np.interp(xs, u.x, du)
    ux = u.eval_smooth(xs)

    prev = None
    n_panels = 16
    while True:
        nodes, weights = _outer_panels(delta, big_r, n_panels)
        dens = model.radial_intensity(nodes) / 2.0  # one-sided line density
        total = np.zeros_like(xs)
        for sign in (1.0, -1.0):
            z = sign * nodes
            gv = p.g(0.0, np.repeat(xs, len(nodes)), np.tile(z, len(xs))).reshape(len(xs), len(nodes))
            integrand = u.eval_smooth(xs[:, None] + gv) - ux[:, None] - gv * du_x[:, None]
            total += integrand @ (weights * dens)
        if prev is not None and np.max(np.abs(total - prev)) <= tol * (1.0 + np.max(np.abs(total))):
            return total
        if n_panels >= 1024:
            return total
        prev = total
        n_panels *= 2


def _nonlocal_on_grid(u, p, xs, tol=1e-6):
    """Small-jump generator L^g_{nu,R} u at the points xs."""
    if p.levy is None or (p.jump is None and p.sigma_bar is None):
        return np.zeros_like(xs)
    delta = min(math.sqrt(u.h), p.levy.big_jump_radius)
    _, d2 = u.stencil_derivatives()
    d2_x = np.interp(xs, u.x, d2)
    inner_mass = np.array([gamma_moment(p, x, 0, 2.0, 0.0, delta) for x in xs])
    inner = 0.5 * d2_x * inner_mass
    outer = _nonlocal_outer_on_points(u, p, xs, delta, tol=tol)
    return inner + outer


def apply_nonlocal(u, p, x, tol=1e-6):
    """Small-jump nonlocal operator L^g_{nu,R} u at a point x.

    The z-integral splits at delta = sqrt(h): the inner part uses the exact
    second-order Taylor remainder (u''(x)/2 times the second jump moment, an
    identity for quadratic u), the outer part direct quadrature of
    u(x+g(x,z)) - u(x) - g(x,z) u'(x).
    """
    x = float(x)
    if not (u.lo <= x <= u.hi):
        raise ExtrapolationError(f"x={x} outside the grid [{u.lo}, {u.hi}]")
    return float(_nonlocal_on_grid(u, p, np.array([x]), tol=tol)[0])


# ---------------------------------------------------------------------------
# solvers


@dataclass
class SpaceTimeSolution:
    """u(t, x) on the time grid ``times`` and the spatial grid of ``grid``."""

    times: np.ndarray
    grid: GridFunction
    values: np.ndarray  # (len(times), n)

    def at_time(self, t):
        k = int(np.argmin(np.abs(self.times - t)))
        return GridFunction(self.grid.lo, self.grid.hi, self.grid.n, self.values[k], self.grid.extension)


@dataclass
class EllipticSolution:
    u: GridFunction
    lam: float
    sup_u: float
    sup_grad: float
    sweeps: int
    residual: float


def _local_matrix(a, b, lam, xs):
    """(lambda - a d2 - b d1_upwind) as a sparse M-matrix with Dirichlet rows."""
    n = len(xs)
    h = xs[1] - xs[0]
    bp = np.maximum(b, 0.0)
    bm = np.minimum(b, 0.0)
    diag = lam + 2.0 * a / h**2 + (bp - bm) / h
    upper = -(a / h**2 + bp / h)
    lower = -(a / h**2 - bm / h)
    mat = sparse.diags(
        [lower[1:], diag, upper[:-1]], offsets=[-1, 0, 1], shape=(n, n), format="lil"
    )
    mat[0, :] = 0.0
    mat[0, 0] = 1.0
    mat[-1, :] = 0.0
    mat[-1, -1] = 1.0
    return sparse.csc_matrix(mat)


def _coerce_forcing(f, xs):
    if callable(f) and not isinstance(f, GridFunction):
        return lambda t: np.asarray(f(t, xs), dtype=float)
    if isinstance(f, GridFunction):
        vec = f(xs)
        return lambda t: vec
    vec = np.broadcast_to(np.asarray(f, dtype=float), xs.shape).copy()
    return lambda t: vec


_GL8 = np.polynomial.legendre.leggauss(8)


def cell_average(fn, xs):
    """Average fn over the width-h cell around each node (Gauss-Legendre 8).

    The honest node value for merely integrable coefficients: a singular
    odd drift contributes its true (vanishing) cell mean at the origin
    instead of a floored point spike, while smooth coefficients move by
    O(h^2) only.
    """
    h = xs[1] - xs[0]
    nodes, weights = _GL8
    pts = xs[:, None] + 0.5 * h * nodes[None, :]
    vals = np.asarray(fn(floor_away_from_zero(pts.ravel())), dtype=float).reshape(pts.shape)
    return vals @ (0.5 * weights)


def _elliptic_coeffs(p, xs, t=0.0, drift="b1"):
    sig = np.asarray(p.sigma_eval(t, xs), dtype=float)
    if sig.ndim == 0:
        sig = np.full_like(xs, float(sig))
    a = 0.5 * sig**2
    if drift == "b1":
        bfun = p.b1
    elif drift == "full":
        bfun = (lambda tt, xv: p.b(tt, xv))
    else:
        bfun = None
    bv = np.zeros_like(xs) if bfun is None else cell_average(lambda xv: bfun(t, xv), xs)
    return a, bv


def solve_backward_pide(
    p,
    f,
    lam,
    horizon,
    grid,
    dt=1e-2,
    terminal=0.0,
    nonlocal_tol=1e-6,
    sweep_tol=1e-8,
    max_sweeps=50,
):
    """Backward parabolic solve of  d_t u + (a d2 - lam) u + b d1 u + L^g u = f
    on [0, horizon] with u(horizon) = terminal and Dirichlet edges.

    Implicit Euler marches in reversed time; the nonlocal term lags one
    fixed-point sweep inside each implicit step and sweeps repeat until the
    update falls below ``sweep_tol`` (NonConvergenceError reports lam if the
    residual grows for ``max_sweeps`` sweeps).
    """
    lo, hi, n = grid
    xs = np.linspace(lo, hi, n)
    if callable(terminal):
        v = np.asarray(terminal(xs), dtype=float)
    else:
        v = np.broadcast_to(np.asarray(terminal, dtype=float), xs.shape).copy().astype(float)
    forcing = _coerce_forcing(f, xs)
    has_jump = p.levy is not None and (p.jump is not None or p.sigma_bar is not None)

    n_steps = int(math.ceil(horizon / dt - 1e-12))
    times = np.linspace(0.0, horizon, n_steps + 1)
    values = np.empty((n_steps + 1, n))
    values[-1] = v
    edge = (v[0], v[-1])

    a, bv = _elliptic_coeffs(p, xs, t=horizon, drift="full")
    lu = None
    if p.time_homogeneous:
        mat = _local_matrix(a, bv, lam + 1.0 / dt, xs)
        lu = splu(mat)

    for k in range(n_steps - 1, -1, -1):
        t = times[k]
        step = times[k + 1] - times[k]
        if not p.time_homogeneous or lu is None or abs(step - dt) > 1e-14:
            a, bv = _elliptic_coeffs(p, xs, t=t, drift="full")
            lu = splu(_local_matrix(a, bv, lam + 1.0 / step, xs))
        fvec = forcing(t)
        guess = v.copy()
        residual_first = None
        for sweep in range(max_sweeps):
            if has_jump:
                gf = GridFunction(lo, hi, n, guess)
                nl = _nonlocal_on_grid(gf, p, xs, tol=nonlocal_tol)
            else:
                nl = 0.0
            rhs = v / step - fvec + nl
            rhs = np.asarray(rhs, dtype=float)
            rhs[0], rhs[-1] = edge
            new = lu.solve(rhs)
            res = float(np.max(np.abs(new - guess)))
            guess = new
            if res < sweep_tol or not has_jump:
                break
            if residual_first is None:
                residual_first = res
            elif sweep == max_sweeps - 1 and res > residual_first:
                raise NonConvergenceError(
                    f"nonlocal sweeps diverge at t={t} (residual {res:.3e}); raise lambda", lam=lam
                )
        v = guess
        values[k] = v

    return SpaceTimeSolution(times=times, grid=GridFunction(lo, hi, n, values[0]), values=values)


def solve_elliptic(p, f, lam, grid, drift="b1", nonlocal_tol=1e-6, sweep_tol=1e-8, max_sweeps=50):
    """Resolvent solve of  (a d2 - lam) u + b d1 u + L^g u = f  with Dirichlet
    zero edges; b is the declared singular part b1 (or the full drift with
    drift='full').  Returns the solution with its sup norms, the inputs of the
    lambda-scaling diagnostics.
    """
    lo, hi, n = grid
    xs = np.linspace(lo, hi, n)
    a, bv = _elliptic_coeffs(p, xs, drift=drift)
    forcing = _coerce_forcing(f, xs)(0.0)
    has_jump = p.levy is not None and (p.jump is not None or p.sigma_bar is not None)

    lu = splu(_local_matrix(a, bv, lam, xs))
    guess = np.zeros(n)
    residual = np.inf
    residual_first = None
    for sweep in range(max_sweeps):
        if has_jump:
            gf = GridFunction(lo, hi, n, guess)
            nl = _nonlocal_on_grid(gf, p, xs, tol=nonlocal_tol)
        else:
            nl = 0.0
        rhs = np.asarray(nl - forcing, dtype=float)
        if np.ndim(rhs) == 0:
            rhs = np.full(n, float(rhs))
        rhs[0], rhs[-1] = 0.0, 0.0
        new = lu.solve(rhs)
        residual = float(np.max(np.abs(new - guess)))
        guess = new
        if residual < sweep_tol or not has_jump:
            break
        if residual_first is None:
            residual_first = residual
        elif sweep == max_sweeps - 1 and residual > residual_first:
            raise NonConvergenceError(
                f"elliptic nonlocal sweeps diverge (residual {residual:.3e}); raise lambda",
                lam=lam,
            )
    u = GridFunction(lo, hi, n, guess)
    return EllipticSolution(
        u=u,
        lam=lam,
        sup_u=u.sup(),
        sup_grad=u.grad_max(),
        sweeps=sweep + 1,
        residual=residual,
    )


# ---------------------------------------------------------------------------
# the drift-removing map


@dataclass
class ZvonkinMap:
    """Phi(x) = x + u(x) with a monotone-interpolated, Newton-polished inverse."""

    u: GridFunction
    lam: float
    sup_u: float
    sup_grad: float

    def __post_init__(self):
        phi_nodes = self.u.x + self.u.values
        if np.any(np.diff(phi_nodes) <= 0):
            raise ContractionError("Phi is not strictly increasing on the grid")
        self._inv_init = interpolate.PchipInterpolator(phi_nodes, self.u.x, extrapolate=True)
        du, _ = self.u.stencil_derivatives()
        self._du_nodes = du

    def phi(self, x):
        x = np.asarray(x, dtype=float)
        return x + self.u(x)

    def grad_phi(self, x):
        """1 + u'(x) with the stencil derivative (smooth representation)."""
        x = np.asarray(x, dtype=float)
        return 1.0 + np.interp(x, self.u.x, self._du_nodes)

    def phi_inverse(self, y):
        y = np.asarray(y, dtype=float)
        x = np.asarray(self._inv_init(y), dtype=float)
        # Newton against the piecewise-linear Phi with its exact cell slope:
        # lands on the containing cell and is then exact
        for _ in range(4):
            x = x - (self.phi(x) - y) / (1.0 + self.u.cell_slope(x))
        return x

    def diagnostics(self):
        return {
            "lambda": self.lam,
            "sup_u": self.sup_u,
            "sup_grad_u": self.sup_grad,
            "grid": {"lo": self.u.lo, "hi": self.u.hi, "n": self.u.n},
        }


def grid_lipschitz_quotient(fn, lo, hi, n):
    """max |f(x_{i+1}) - f(x_i)| / h on a uniform probe grid."""
    xs = np.linspace(lo, hi, n)
    vals = np.asarray(fn(xs), dtype=float)
    return float(np.max(np.abs(np.diff(vals))) / (xs[1] - xs[0]))


def build_zvonkin(p, lam=None, grid=None, lam_start=10.0, lam_cap=2.0**20):
    """Solve the resolvent equation driven by the singular drift and build Phi.

    Returns (ZvonkinMap, transformed SdeProblem) with
    sigma~(y) = (Phi' sigma)(Phi^-1(y)),  b~(y) = (lam u + Phi' b2)(Phi^-1(y)),
    g~(y, z) = Phi(Phi^-1(y) + g(Phi^-1(y), z)) - y.
    When lam is None it starts at ``lam_start`` and doubles until
    ||u||_inf + ||u'||_inf <= 1/2; explicit lam that violates the contraction
    raises ContractionError with the measured norms.
    """
    if not p.time_homogeneous:
        raise ParameterError("build_zvonkin needs a time-homogeneous problem")
    if p.b1 is None:
        u = GridFunction(-10.0 if grid is None else grid[0], 10.0 if grid is None else grid[1], 5 if grid is None else grid[2], np.zeros(5 if grid is None else grid[2]))
        zmap = ZvonkinMap(u=u, lam=lam or lam_start, sup_u=0.0, sup_grad=0.0)
        return zmap, _transformed_problem(p, zmap)
    if grid is None:
        grid = (-10.0, 10.0, 4001)

    def rhs(t, xs):
        # same cell-averaged reading of the singular forcing as the operator
        return cell_average(lambda xv: p.b1(t, xv), np.asarray(xs, dtype=float))

    lam_values = [lam] if lam is not None else []
    if lam is None:
        v = lam_start
        while v <= lam_cap:
            lam_values.append(v)
            v *= 2.0

    last = None
    for lv in lam_values:
        sol = solve_elliptic(p, rhs, lv, grid, drift="b1")
        last = sol
        if sol.sup_u + sol.sup_grad <= 0.5:
            zmap = ZvonkinMap(u=sol.u, lam=lv, sup_u=sol.sup_u, sup_grad=sol.sup_grad)
            return zmap, _transformed_problem(p, zmap)
    raise ContractionError(
        f"contraction condition violated: ||u|| + ||u'|| = {last.sup_u + last.sup_grad:.4f} > 1/2 "
        f"at lambda = {last.lam}; raise lambda",
        sup_u=last.sup_u,
        sup_grad=last.sup_grad,
    )


def _transformed_problem(p, zmap):
    lam = zmap.lam

    def sigma_t(t, y):
        x = zmap.phi_inverse(y)
        return zmap.grad_phi(x) * np.asarray(p.sigma_eval(t, x), dtype=float)

    def b_t(t, y):
        x = zmap.phi_inverse(y)
        b2 = 0.0 if p.b2 is None else np.asarray(p.b2(t, x), dtype=float)
        return lam * zmap.u(x) + zmap.grad_phi(x) * b2

    jump_t = None
    if p.jump is not None:
        def jump_t(t, y, z):
            x = zmap.phi_inverse(y)
            return zmap.phi(x + p.g(t, x, z)) - y

    q = SdeProblem(
        dim=1,
        sigma=None if p.sigma is None else sigma_t,
        b2=b_t,
        jump=jump_t,
        levy=p.levy,
        time_homogeneous=True,
        name=(p.name + "_zvonkin") if p.name else "zvonkin_transformed",
    )
    # fitted dissipativity declarations for the re-audit (kappa1 kept at a
    # quarter of the original, the rest measured on the build grid)
    if p.kappa1 is not None and p.r is not None:
        ys = np.linspace(zmap.phi(np.array([zmap.u.lo]))[0], zmap.phi(np.array([zmap.u.hi]))[0], 801)
        bv = b_t(0.0, ys)
        k1 = p.kappa1 / 4.0
        k2 = float(np.max(ys * bv + k1 * np.abs(ys) ** (2.0 + p.r)))
        k3 = float(np.max(np.abs(bv) / (1.0 + np.abs(ys) ** (1.0 + p.r))))
        q = q.with_tags(kappa1=k1, kappa2=max(k2 * 1.05, 0.5), kappa3=k3 * 1.5, r=p.r)
    return q
