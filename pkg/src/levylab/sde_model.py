"""Coefficient triples (sigma, b, g), hypothesis metadata, and numerical audits.

Coefficient calling convention (vectorized over a batch of states):

- ``sigma(t, x)``: for dim=1, x has shape (n,) and sigma returns (n,) (the
  scalar diffusion); for dim>=2, x has shape (n, d) and sigma returns either
  (n,) (an isotropic multiple of the identity) or (n, d, d).
- ``b(t, x)``, ``b1``, ``b2``: return the same shape as x.
- ``g(t, x, z)``: z has the same shape as x; returns the same shape.

Audits are grid-based certificates with worst-case witnesses, not proofs:
they report falsifiability evidence for the declared constants.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate

from levylab.errors import DivergenceError, EvaluationError, ParameterError
from levylab.levy_noise import LevyModel, sphere_area

__all__ = [
    "SdeProblem",
    "AuditReport",
    "audit_ellipticity",
    "audit_jump_coeff",
    "audit_dissipativity",
    "gamma_moment",
    "default_audit_grid",
    "floor_away_from_zero",
    "preset",
    "PRESET_NAMES",
]

SINGULAR_FLOOR = 1e-10


def floor_away_from_zero(x, eps=SINGULAR_FLOOR):
    """Push |x| up to eps componentwise, mapping exact zeros to +eps.

    Singular drifts such as |x|^(-1/2) then stay finite inside Euler steps
    and PDE assembly while regular coefficients are perturbed by at most eps.
    """
    x = np.asarray(x, dtype=float)
    s = np.where(x < 0, -1.0, 1.0)
    return np.where(np.abs(x) < eps, eps * s, x)


@dataclass
class SdeProblem:
    """The coefficient triple of the jump SDE with hypothesis metadata.

    The drift may be given whole (``drift``) or split as ``b1`` (singular
    part) + ``b2`` (dissipative part); the split is declared, never inferred.
    ``sigma_bar`` marks the multiplicative form g(t,x,z) = sigma_bar(t,x) * z,
    which unlocks the exact stable stepping mode of the integrator.
    """

    dim: int = 1
    sigma: object = None
    drift: object = None
    b1: object = None
    b2: object = None
    jump: object = None
    levy: LevyModel | None = None
    sigma_bar: object = None
    # declared hypothesis constants; None means "not declared"
    c0: float | None = None
    beta_sigma: float | None = None
    c1: float | None = None
    beta_g: float | None = None
    kappa1: float | None = None
    kappa2: float | None = None
    kappa3: float | None = None
    r: float | None = None
    time_homogeneous: bool = True
    name: str = ""

    def __post_init__(self):
        if self.drift is not None and (self.b1 is not None or self.b2 is not None):
            raise ParameterError("give either drift or the (b1, b2) split, not both")
        for label in ("c0", "c1", "kappa1", "kappa2", "kappa3"):
            v = getattr(self, label)
            if v is not None and not v > 0:
                raise ParameterError(f"declared constant {label} must be > 0, got {v}")
        if self.r is not None and not self.r > -1:
            raise ParameterError(f"declared r must be > -1, got {self.r}")
        if self.jump is not None and self.levy is None:
            raise ParameterError("a jump coefficient needs a LevyModel")

    @property
    def has_split(self):
        return self.b1 is not None or self.b2 is not None

    def b(self, t, x):
        """Full drift (sum of the declared split when no whole drift given)."""
        if self.drift is not None:
            return np.asarray(self.drift(t, x), dtype=float)
        out = np.zeros_like(np.asarray(x, dtype=float))
        if self.b1 is not None:
            out = out + self.b1(t, x)
        if self.b2 is not None:
            out = out + self.b2(t, x)
        return out

    def sigma_eval(self, t, x):
        if self.sigma is None:
            return np.zeros(np.shape(x)[0] if np.ndim(x) else ())
        return np.asarray(self.sigma(t, x), dtype=float)

    def g(self, t, x, z):
        if self.jump is None:
            return np.zeros_like(np.asarray(x, dtype=float))
        return np.asarray(self.jump(t, x, z), dtype=float)

    def with_tags(self, **tags):
        return replace(self, **tags)


@dataclass
class AuditReport:
    """Outcome of a grid audit: pass flag, worst ratio/margin, and witness."""

    passed: bool
    worst_ratio: float
    witness: dict | None = None
    details: dict = field(default_factory=dict)

    def __bool__(self):
        return self.passed


def default_audit_grid(lo, hi, n=201, n_random=64, seed=0, t=0.0):
    """Default 1D audit grid: n uniform points plus n_random seeded extras."""
    xs = np.linspace(lo, hi, n)
    if n_random:
        rng = np.random.default_rng(seed)
        xs = np.concatenate([xs, rng.uniform(lo, hi, n_random)])
    return [(t, np.array([x])) for x in xs]


def _sigma_matrix(p, t, x):
    """sigma at a single state x (shape (d,)), returned as a (d, d) matrix."""
    d = p.dim
    val = p.sigma_eval(t, x if d == 1 else x[None, :])
    val = np.asarray(val, dtype=float)
    if not np.all(np.isfinite(val)):
        raise EvaluationError(f"sigma returned a non-finite value at t={t}, x={x}")
    if val.ndim <= 1:
        return float(val.reshape(-1)[0]) * np.eye(d)
    return val[0]


def audit_ellipticity(p, grid, directions=None):
    """Check (H^sigma): uniform ellipticity and the Hoelder modulus on a grid.

    Verifies c0^-1 |xi|^2 <= |sigma^T xi|^2 <= c0 |xi|^2 for every grid point
    and direction, and ||sigma(t,x) - sigma(t,x')|| <= c0 |x-x'|^beta over all
    same-time grid pairs. Returns the worst violation witness.
    """
    if p.c0 is None:
        raise ParameterError("audit_ellipticity needs a declared c0")
    c0 = p.c0
    d = p.dim
    if directions is None:
        directions = np.eye(d)
    directions = np.atleast_2d(np.asarray(directions, dtype=float))
    directions = directions / np.linalg.norm(directions, axis=1, keepdims=True)

    worst = 1.0
    witness = None
    mats = []
    for t, x in grid:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        m = _sigma_matrix(p, t, x)
        mats.append((t, x, m))
        for xi in directions:
            q = float(np.sum((m.T @ xi) ** 2))
            # ratio > 1 measures violation of either side of the sandwich
            ratio = max(q / c0, 1.0 / (c0 * q) if q > 0 else np.inf)
            if ratio > worst:
                worst = ratio
                witness = {"t": t, "x": x.tolist(), "xi": xi.tolist(), "quad_form": q}

    holder_worst = 0.0
    if p.beta_sigma is not None:
        beta = p.beta_sigma
        for i in range(len(mats)):
            for j in range(i + 1, len(mats)):
                ti, xi_, mi = mats[i]
                tj, xj_, mj = mats[j]
                if ti != tj:
                    continue
                dist = float(np.linalg.norm(xi_ - xj_))
                if dist == 0.0:
                    continue
                lhs = float(np.linalg.norm(mi - mj))
                ratio = lhs / (c0 * dist**beta)
                if ratio > max(worst, holder_worst):
                    witness = {"t": ti, "x": xi_.tolist(), "x_prime": xj_.tolist(), "holder_lhs": lhs}
                holder_worst = max(holder_worst, ratio)

    worst = max(worst, holder_worst)
    return AuditReport(passed=worst <= 1.0 + 1e-12, worst_ratio=worst, witness=witness)


def _grad_z(p, t, x, z, scale=None):
    """d/dz g(t, x, z) by central differences (dim=1 batches)."""
    h = 1e-5 * (np.abs(z) + 1.0) if scale is None else scale
    return (p.g(t, x, z + h) - p.g(t, x, z - h)) / (2.0 * h)


def audit_jump_coeff(p, grid, z_pairs):
    """Check (H^g) on sampled (x, z, z') triples (dim=1).

    Covers the bi-Lipschitz sandwich in z, g(x, 0) = 0, and the x-Hoelder
    conditions for the declared (c1, beta). Reports the worst witness.
    """
    if p.jump is None:
        raise ParameterError("problem has no jump coefficient")
    if p.c1 is None:
        raise ParameterError("audit_jump_coeff needs a declared c1")
    if p.dim != 1:
        raise ParameterError("audit_jump_coeff is implemented for dim=1")
    c1 = p.c1
    xs = np.array([float(np.atleast_1d(x)[0]) for _, x in grid])
    ts = [t for t, _ in grid]
    z_pairs = [(float(a), float(b)) for a, b in z_pairs]

    worst = 0.0
    witness = None

    def consider(ratio, tag, **info):
        nonlocal worst, witness
        if ratio > worst:
            worst = ratio
            witness = {"check": tag, **info}

    for t in sorted(set(ts)):
        sel = np.array([ti == t for ti in ts])
        x = xs[sel]
        g0 = p.g(t, x, np.zeros_like(x))
        if not np.all(np.isfinite(g0)):
            raise EvaluationError(f"g returned a non-finite value at t={t}, z=0")
        bad = int(np.argmax(np.abs(g0)))
        consider(float(np.abs(g0[bad])) / 1e-12, "g(x,0)=0", x=float(x[bad]))

        for za, zb in z_pairs:
            if za == zb:
                continue
            ga = p.g(t, x, np.full_like(x, za))
            gb = p.g(t, x, np.full_like(x, zb))
            inc = np.abs(ga - gb) / abs(za - zb)
            i = int(np.argmax(inc))
            consider(float(inc[i]) / c1, "z-lipschitz upper", x=float(x[i]), z=za, z_prime=zb)
            i = int(np.argmin(inc))
            consider(
                1.0 / (c1 * float(inc[i])) if inc[i] > 0 else np.inf,
                "z-lipschitz lower",
                x=float(x[i]),
                z=za,
                z_prime=zb,
            )

        if p.beta_g is not None and len(x) > 1:
            beta = p.beta_g
            zs = np.unique([z for pair in z_pairs for z in pair])
            zs = zs[np.abs(zs) > 0]
            dx = np.abs(x[:, None] - x[None, :])
            np.fill_diagonal(dx, np.inf)
            for z in zs:
                zz = np.full_like(x, z)
                gv = p.g(t, x, zz)
                dg = np.abs(gv[:, None] - gv[None, :])
                bound = c1 * dx**beta * 2.0 * abs(z)
                ratio = dg / bound
                i, j = np.unravel_index(np.argmax(ratio), ratio.shape)
                consider(float(ratio[i, j]), "x-holder j=0", x=float(x[i]), x_prime=float(x[j]), z=float(z))
                dgz = _grad_z(p, t, x, zz)
                ddg = np.abs(dgz[:, None] - dgz[None, :])
                bound = c1 * dx**beta * (abs(z) + 1.0)
                ratio = ddg / bound
                i, j = np.unravel_index(np.argmax(ratio), ratio.shape)
                consider(float(ratio[i, j]), "x-holder j=1", x=float(x[i]), x_prime=float(x[j]), z=float(z))

    return AuditReport(passed=worst <= 1.0 + 1e-9, worst_ratio=worst, witness=witness)


def audit_dissipativity(p, radial_grid):
    """Evaluate the dissipativity inequality on a radial grid.

    With a declared split the (diss) form <x, b2(x)> <= -kappa1 |x|^(2+r) +
    kappa2 is audited together with the growth bound |b2| <= kappa3 (1 +
    |x|^(1+r)); without a split the combined form 2 <x, b(x)> + ||sigma||^2
    is used. margin = min over the grid of (RHS - LHS); pass iff margin >= 0.
    """
    if not p.time_homogeneous:
        raise ParameterError("audit_dissipativity needs a time-homogeneous problem")
    for label in ("kappa1", "kappa2", "r"):
        if getattr(p, label) is None:
            raise ParameterError(f"audit_dissipativity needs declared {label}")
    if p.r <= -1:
        raise ParameterError(f"r must be > -1, got {p.r}")
    radial_grid = np.asarray(radial_grid, dtype=float)
    d = p.dim
    e1 = np.zeros(d)
    e1[0] = 1.0
    pts = np.concatenate([radial_grid[:, None] * e1[None, :], -radial_grid[:, None] * e1[None, :]])
    x = pts[:, 0] if d == 1 else pts
    t = 0.0

    rr = np.linalg.norm(pts, axis=1)
    rhs = -p.kappa1 * rr ** (2.0 + p.r) + p.kappa2
    if p.has_split:
        bv = np.zeros_like(pts) if p.b2 is None else np.atleast_2d(np.asarray(p.b2(t, x), dtype=float).reshape(len(pts), -1))
        lhs = np.sum(pts * bv, axis=1)
    else:
        bv = np.atleast_2d(np.asarray(p.b(t, x), dtype=float).reshape(len(pts), -1))
        sig = p.sigma_eval(t, x)
        sig = np.asarray(sig, dtype=float)
        if sig.ndim <= 1:
            hs2 = d * sig.reshape(-1) ** 2
        else:
            hs2 = np.sum(sig**2, axis=(1, 2))
        lhs = 2.0 * np.sum(pts * bv, axis=1) + hs2
    if not np.all(np.isfinite(lhs)):
        i = int(np.argmax(~np.isfinite(lhs)))
        raise EvaluationError(f"drift/sigma non-finite at x={pts[i]}")

    margins = rhs - lhs
    i = int(np.argmin(margins))
    kappa1_margin = float(margins[i])
    witness = {"x": pts[i].tolist(), "lhs": float(lhs[i]), "rhs": float(rhs[i])}

    kappa3_margin = np.inf
    if p.kappa3 is not None:
        target = p.b2 if p.has_split else None
        bfull = (
            np.atleast_2d(np.asarray(target(t, x), dtype=float).reshape(len(pts), -1))
            if target is not None
            else np.atleast_2d(np.asarray(p.b(t, x), dtype=float).reshape(len(pts), -1))
        )
        growth = p.kappa3 * (1.0 + rr ** (1.0 + p.r)) - np.linalg.norm(bfull, axis=1)
        kappa3_margin = float(np.min(growth))

    passed = kappa1_margin >= 0 and kappa3_margin >= 0
    return AuditReport(
        passed=passed,
        worst_ratio=-min(kappa1_margin, 0.0),
        witness=witness,
        details={"kappa1_margin": kappa1_margin, "kappa3_margin": float(kappa3_margin)},
    )


def _jump_derivative(p, t, x, z, j):
    """|grad_x^j g| at scalar x over a batch of z (dim=1)."""
    z = np.asarray(z, dtype=float)
    xv = np.full_like(z, x)
    if j == 0:
        return np.abs(p.g(t, xv, z))
    h = 1e-5 * (abs(x) + 1.0)
    return np.abs(p.g(t, xv + h, z) - p.g(t, xv - h, z)) / (2.0 * h)


def _local_exponent(vals, radii):
    a, b = np.maximum(vals, 1e-300), radii
    return np.log(a[1] / a[0]) / np.log(b[1] / b[0])


def gamma_moment(p, x, j, alpha_prime, r1, r2):
    """Gamma-type moment: int_{r1 <= |z| < r2} |grad_x^j g(x,z)|^alpha' nu(dz).

    grad_x g falls back to central finite differences (step 1e-5 (|x|+1)).
    Implemented by radial adaptive quadrature for dim=1; multiplicative jump
    coefficients factorize in any dimension.
    """
    if p.jump is None and p.sigma_bar is None:
        return 0.0
    if j not in (0, 1):
        raise ParameterError(f"j must be 0 or 1, got {j}")
    if not (0 <= r1 <= r2):
        raise ParameterError(f"need 0 <= r1 <= r2, got {r1}, {r2}")
    model = p.levy
    if model is None:
        raise ParameterError("gamma_moment needs a LevyModel")
    if model.kind == "radial_table":
        r2 = min(r2, float(model.radii[-1]))
        r1 = max(r1, float(model.radii[0]))
    if r1 == r2:
        return 0.0
    if p.dim != 1:
        raise ParameterError("gamma_moment is implemented for dim=1 problems")

    t = 0.0
    x = float(np.atleast_1d(x)[0])

    def magnitude(s, sign):
        return _jump_derivative(p, t, x, sign * np.asarray(s, dtype=float), j)

    # divergence screening from measured local growth exponents
    alpha = model.alpha if model.kind == "isotropic_stable" else None
    if alpha is not None:
        if r1 == 0.0:
            probes = np.array([1e-6, 1e-4])
            vals = 0.5 * (magnitude(probes, 1.0) + magnitude(probes, -1.0))
            if np.max(vals) > 1e-250:
                expo = _local_exponent(vals, probes)
                if alpha_prime * expo - alpha <= 1e-9:
                    raise DivergenceError(
                        f"gamma_moment diverges at r1=0: local exponent {expo:.3f} gives "
                        f"alpha'*exponent = {alpha_prime * expo:.3f} <= alpha = {alpha}"
                    )
        if np.isinf(r2):
            probes = np.array([1e3, 1e5])
            vals = 0.5 * (magnitude(probes, 1.0) + magnitude(probes, -1.0))
            if np.max(vals) > 1e-250:
                expo = _local_exponent(vals, probes)
                if alpha_prime * expo - alpha >= -1e-9:
                    raise DivergenceError(
                        f"gamma_moment diverges at r2=inf: local exponent {expo:.3f} gives "
                        f"alpha'*exponent = {alpha_prime * expo:.3f} >= alpha = {alpha}"
                    )

    # one-sided density of nu on the line is radial_intensity/2; with the
    # log substitution s = e^u the du-Jacobian is s, so the stable integrand
    # becomes |D|^alpha' * e^(-alpha u), assembled in log space to dodge
    # overflow of s^(-1-alpha) near u -> -inf.
    import math as _math

    stable = model.kind == "isotropic_stable"

    def integrand_log(u, sign):
        if abs(u) > 700.0:
            # the divergence screens already passed, so the integrand decays
            # exponentially in u out here; dodge exp overflow
            return 0.0
        s = _math.exp(u)
        mag = float(np.atleast_1d(magnitude(np.array([s]), sign))[0])
        if mag <= 0.0:
            return 0.0
        if stable:
            return _math.exp(alpha_prime * _math.log(mag) - model.alpha * u)
        return mag**alpha_prime * float(model.radial_intensity(s)) / 2.0 * s

    total = 0.0
    lo = -np.inf if r1 == 0.0 else np.log(r1)
    hi = np.inf if np.isinf(r2) else np.log(r2)
    for sign in (1.0, -1.0):
        val, _ = integrate.quad(
            integrand_log, lo, hi, args=(sign,), epsabs=1e-13, epsrel=1e-8, limit=400
        )
        total += val
    return total


# ---------------------------------------------------------------------------
# built-in presets


def problem_1d(sigma=None, drift=None, b1=None, b2=None, g=None, levy=None, sigma_bar=None, **tags):
    """Convenience builder for 1D problems from scalar functions of x (and z)."""

    def lift(f):
        return None if f is None else (lambda t, x: np.asarray(f(x), dtype=float))

    def lift_g(f):
        return None if f is None else (lambda t, x, z: np.asarray(f(x, z), dtype=float))

    return SdeProblem(
        dim=1,
        sigma=lift(sigma),
        drift=lift(drift),
        b1=lift(b1),
        b2=lift(b2),
        jump=lift_g(g),
        levy=levy,
        sigma_bar=lift(sigma_bar),
        **tags,
    )


def _singular_ou_b1(x):
    xf = floor_away_from_zero(x)
    return np.sign(x) * np.abs(xf) ** (-0.5) * (np.abs(x) <= 1.0)


def preset(name):
    """Built-in experiment presets.

    - ``ou_singular``: dX = (b1 + b2)(X) dt + sqrt(2) dW with the singular
      kick b1(x) = sign(x) |x|^(-1/2) 1_{|x|<=1} and dissipative b2(x) = -x.
    - ``mixing_jump``: dX = dW + 0.5 |X_-|^(1/2) dL - X dt with L the
      isotropic 1.5-stable driver truncated at R=1.
    """
    if name == "ou_singular":
        return problem_1d(
            sigma=lambda x: np.full_like(np.asarray(x, dtype=float), np.sqrt(2.0)),
            b1=_singular_ou_b1,
            b2=lambda x: -np.asarray(x, dtype=float),
            c0=2.0,
            beta_sigma=0.5,
            kappa1=1.0,
            kappa2=1.0,
            kappa3=1.0,
            r=0.0,
            name="ou_singular",
        )
    if name == "mixing_jump":
        levy = LevyModel(kind="isotropic_stable", alpha=1.5, dim=1, big_jump_radius=1.0)
        sigma_bar = lambda x: 0.5 * np.abs(np.asarray(x, dtype=float)) ** 0.5
        return problem_1d(
            sigma=lambda x: np.ones_like(np.asarray(x, dtype=float)),
            drift=lambda x: -np.asarray(x, dtype=float),
            g=lambda x, z: 0.5 * np.abs(np.asarray(x, dtype=float)) ** 0.5 * z,
            levy=levy,
            sigma_bar=sigma_bar,
            c0=1.0,
            beta_sigma=0.5,
            c1=2.0,
            beta_g=0.5,
            kappa1=2.0,
            kappa2=1.0,
            kappa3=1.0,
            r=0.0,
            name="mixing_jump",
        )
    raise ParameterError(f"unknown preset {name!r}; known presets: {', '.join(PRESET_NAMES)}")


PRESET_NAMES = ("ou_singular", "mixing_jump")
