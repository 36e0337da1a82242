"""Reduction of 3D edge-corner problems to the cross-section.

For a field u(x', x3) on S_h x (-M, M) and a bump phi supported in
(x3c - L, x3c + L), P(u)(x') = int phi(x3) u(x', x3) dx3.  Integrating the 3D
system  mu Lap u + (lam + mu) grad div u + w^2 u = 0  against phi splits it into

    Lame'(P u') + w^2 P u' = -mu int phi'' u' + (lam + mu) int phi' grad' u3
    mu Lap'(P u3) + w^2 P u3 = -(lam + 2 mu) int phi'' u3 + (lam + mu) int phi' div' u'

with Lame' the 2D operator mu Lap' + (lam + mu) grad' div'.  The in-plane part is
probed with the elastic CGO (corner_probe); the third component with the
harmonic CGO exp(-sqrt(s z)).
"""
from dataclasses import dataclass, field
import math

import numpy as np

from ._quad import gauss_legendre, integrate_scalar
from .cgo import HarmonicCgo, HarmonicCgoParams, edge_integral_exact
from .corner_probe import (CornerNeighborhood, ProbeError, recover_displacement_jump,
                           recover_traction_rotation)
from .geometry import LameParameters


class DimRedError(ValueError):
    pass


# ----------------------------------------------------------------------------
# cutoff profile

_PROFILES = {
    # (g(t), g'(t), g''(t)) on [-1, 1]
    "poly4": (lambda t: (1 - t * t) ** 4,
              lambda t: -8 * t * (1 - t * t) ** 3,
              lambda t: 8 * (1 - t * t) ** 2 * (7 * t * t - 1)),
    "poly6": (lambda t: (1 - t * t) ** 6,
              lambda t: -12 * t * (1 - t * t) ** 5,
              lambda t: 12 * (1 - t * t) ** 4 * (11 * t * t - 1)),
}


@dataclass(frozen=True)
class CutoffProfile:
    """phi(x3) = scale * c * g((x3 - center) / L), normalised so that int phi = scale."""
    center: float
    L: float
    M: float
    kind: str = "poly4"
    scale: float = 1.0
    n: int = 128

    def __post_init__(self):
        if self.kind not in _PROFILES:
            raise DimRedError(f"unknown profile {self.kind!r}")
        if not self.L > 0 or self.n < 64:
            raise DimRedError("need L > 0 and at least 64 quadrature points")
        if self.center - self.L <= -self.M or self.center + self.L >= self.M:
            raise DimRedError("support of phi exceeds the slab (-M, M)")

    @classmethod
    def default(cls, M, edge_length, center=0.0, **kw):
        return cls(center, min(M / 2, edge_length / 4), M, **kw)

    @property
    def _norm(self):
        t, w = gauss_legendre(self.n)
        return self.scale / (self.L * np.sum(w * _PROFILES[self.kind][0](t)))

    def nodes(self):
        """Gauss nodes and weights on the support."""
        return gauss_legendre(self.n, self.center - self.L, self.center + self.L)

    def _eval(self, x3, order):
        x3 = np.asarray(x3, float)
        t = (x3 - self.center) / self.L
        inside = np.abs(t) < 1
        out = np.where(inside, _PROFILES[self.kind][order](np.clip(t, -1, 1)), 0.0)
        return self._norm * out / self.L ** order

    def __call__(self, x3):
        return self._eval(x3, 0)

    def d1(self, x3):
        return self._eval(x3, 1)

    def d2(self, x3):
        return self._eval(x3, 2)

    def moments(self):
        z, w = self.nodes()
        return {"phi": math.fsum(w * self(z)), "dphi": math.fsum(w * self.d1(z)), "d2phi": math.fsum(w * self.d2(z))}

    def rescaled(self, factor):
        return CutoffProfile(self.center, self.L, self.M, self.kind, self.scale * factor, self.n)


# ----------------------------------------------------------------------------
# manufactured 3D fields

class Field3D:
    """Analytic field: value (..., 3), gradient [..., i, j] = d_j u_i, hessian [..., i, j, k]."""

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def hessian(self, x):
        raise NotImplementedError

    def residual(self, x, lame, omega):
        H = self.hessian(x)
        lap = np.einsum("...ijj->...i", H)
        graddiv = np.einsum("...jjk->...k", H)
        return lame.mu * lap + (lame.lam + lame.mu) * graddiv + omega ** 2 * self.value(x)


class PlaneWave3D(Field3D):
    """amp * exp(i k n . x) p with p = n (pressure) or p orthogonal to n (shear)."""

    def __init__(self, n, lame, omega, kind="p", polarization=None, amp=1.0):
        n = np.asarray(n, float)
        self.n = n / np.linalg.norm(n)
        if kind == "p":
            self.k = omega / math.sqrt(lame.lam + 2 * lame.mu)
            self.p = self.n.copy()
        elif kind == "s":
            pol = np.asarray(polarization, float)
            pol = pol - (pol @ self.n) * self.n
            if np.linalg.norm(pol) < 1e-12:
                raise DimRedError("shear polarization parallel to the wave direction")
            self.k = omega / math.sqrt(lame.mu)
            self.p = pol / np.linalg.norm(pol)
        else:
            raise DimRedError("kind must be 'p' or 's'")
        self.amp = amp
        self._kv = 1j * self.k * self.n

    def _e(self, x):
        return self.amp * np.exp(np.asarray(x, float) @ self._kv)

    def value(self, x):
        return self._e(x)[..., None] * self.p

    def gradient(self, x):
        return self._e(x)[..., None, None] * np.outer(self.p, self._kv)

    def hessian(self, x):
        return self._e(x)[..., None, None, None] * np.einsum("i,j,k->ijk", self.p, self._kv, self._kv)


class Extruded(Field3D):
    """x3-independent field from a 2D elastic field and an optional scalar for the third component.

    The scalar needs value/gradient/hessian with mu Lap' u3 + w^2 u3 = 0.
    """

    def __init__(self, planar, scalar=None):
        self.planar, self.scalar = planar, scalar

    def value(self, x):
        x = np.asarray(x, float)
        u = self.planar.value(x[..., :2])
        u3 = self.scalar.value(x[..., :2]) if self.scalar is not None else np.zeros(u.shape[:-1])
        return np.concatenate([u, np.asarray(u3, complex)[..., None]], axis=-1)

    def gradient(self, x):
        x = np.asarray(x, float)
        G2 = self.planar.gradient(x[..., :2])
        G = np.zeros(G2.shape[:-2] + (3, 3), complex)
        G[..., :2, :2] = G2
        if self.scalar is not None:
            G[..., 2, :2] = self.scalar.gradient(x[..., :2])
        return G

    def hessian(self, x):
        x = np.asarray(x, float)
        H2 = self.planar.hessian(x[..., :2])
        H = np.zeros(H2.shape[:-3] + (3, 3, 3), complex)
        H[..., :2, :2, :2] = H2
        if self.scalar is not None:
            H[..., 2, :2, :2] = self.scalar.hessian(x[..., :2])
        return H


class HelmholtzWave2D:
    """exp(i k d . x') with k = omega / sqrt(mu): solves mu Lap' + omega^2 = 0."""

    def __init__(self, d, lame, omega, amp=1.0):
        d = np.asarray(d, float)
        self.kv = 1j * omega / math.sqrt(lame.mu) * d / np.linalg.norm(d)
        self.amp = amp

    def value(self, x):
        return self.amp * np.exp(np.asarray(x, float) @ self.kv)

    def gradient(self, x):
        return self.value(x)[..., None] * self.kv

    def hessian(self, x):
        return self.value(x)[..., None, None] * np.outer(self.kv, self.kv)


# ----------------------------------------------------------------------------
# reduction

def dimension_reduce(h, phi):
    """x' -> int phi(x3) h(x', x3) dx3 for a callable h on (..., 3) points."""
    z, w = phi.nodes()
    wz = w * phi(z)

    def reduced(xp):
        xp = np.asarray(xp, float)
        X = np.empty(xp.shape[:-1] + (len(z), 3))
        X[..., :2] = xp[..., None, :]
        X[..., 2] = z
        vals = np.asarray(h(X))
        # the x3 axis sits right after the point axes
        ax = xp.ndim - 1
        return np.tensordot(np.moveaxis(vals, ax, -1), wz, axes=([-1], [0]))

    return reduced


def _reduce_with(fun, phi, weight):
    z, w = phi.nodes()
    wz = w * weight(z)

    def reduced(xp):
        xp = np.asarray(xp, float)
        X = np.empty(xp.shape[:-1] + (len(z), 3))
        X[..., :2] = xp[..., None, :]
        X[..., 2] = z
        vals = np.asarray(fun(X))
        return np.tensordot(np.moveaxis(vals, xp.ndim - 1, -1), wz, axes=([-1], [0]))

    return reduced


def reduced_residuals(v, w, phi, lame, omega, points, check_tol=1e-8):
    """Residuals of both reduced systems for v and w at cross-section points.

    Each field must solve the 3D system; the check runs on the slab nodes above
    the points and rejects inputs whose relative residual exceeds ``check_tol``.
    """
    points = np.atleast_2d(np.asarray(points, float))
    lam, mu = lame.lam, lame.mu
    z, _ = phi.nodes()
    out = {}
    for name, u in (("v", v), ("w", w)):
        X = np.empty((len(points), len(z), 3))
        X[..., :2] = points[:, None, :]
        X[..., 2] = z
        res3d = np.abs(u.residual(X, lame, omega)).max()
        scale = max(np.abs(u.hessian(X)).max() * max(lam + 2 * mu, 1), omega ** 2 * np.abs(u.value(X)).max(), 1e-300)
        if res3d > check_tol * scale:
            raise DimRedError(f"{name} does not solve the 3D system (residual {res3d:.2e})")
        Pu = _reduce_with(u.value, phi, phi)(points)
        PH = _reduce_with(u.hessian, phi, phi)(points)            # [..., i, j, k]
        lap = PH[..., 0, 0] + PH[..., 1, 1]                        # Lap' P u_i
        graddiv = PH[..., 0, 0, :2] + PH[..., 1, 1, :2]              # grad' div' P u'
        lhs12 = mu * lap[..., :2] + (lam + mu) * graddiv + omega ** 2 * Pu[..., :2]
        lhs3 = mu * lap[..., 2] + omega ** 2 * Pu[..., 2]
        Uxx = _reduce_with(u.value, phi, phi.d2)(points)
        Gx = _reduce_with(u.gradient, phi, phi.d1)(points)         # [..., i, j]
        G12 = -mu * Uxx[..., :2] + (lam + mu) * Gx[..., 2, :2]
        G3 = -(lam + 2 * mu) * Uxx[..., 2] + (lam + mu) * (Gx[..., 0, 0] + Gx[..., 1, 1])
        r12 = lhs12 - G12
        r3 = lhs3 - G3
        ref = max(np.abs(lhs12).max(), np.abs(lhs3).max(), np.abs(G12).max(), np.abs(G3).max(), 1.0)
        out[name] = {"res_12": float(np.abs(r12).max()), "res_3": float(np.abs(r3).max()),
                     "G_12": G12, "G_3": G3, "scale": float(ref)}
    return {"res_12": max(out["v"]["res_12"], out["w"]["res_12"]),
            "res_3": max(out["v"]["res_3"], out["w"]["res_3"]),
            "G_terms": {k: {"G_12": out[k]["G_12"], "G_3": out[k]["G_3"]} for k in out},
            "scale": max(out["v"]["scale"], out["w"]["scale"])}


def z_ratio(theta_min, theta_max):
    """Z(theta_max)^2 / Z(theta_min)^2 with Z(t) = exp(i t / 2)."""
    Z = lambda t: np.exp(0.5j * t)
    return Z(theta_max) ** 2 / Z(theta_min) ** 2


# ----------------------------------------------------------------------------
# corner data and recovery

@dataclass
class EdgeCorner3D:
    """x3-independent jump data at a 3D edge corner (vectors of length 3 per edge, functions of r)."""
    xc: np.ndarray
    theta_min: float
    theta: float
    h: float
    lame: LameParameters
    f_plus: callable
    f_minus: callable
    g_plus: callable
    g_minus: callable
    df_plus0: np.ndarray = None
    df_minus0: np.ndarray = None
    omega: float = 0.0

    @classmethod
    def constant(cls, xc, theta_min, theta, h, lame, f1, f2, g1, g2, omega=0.0):
        c = lambda val: (lambda r: np.broadcast_to(np.asarray(val, dtype=complex), np.shape(r) + (3,)))
        return cls(np.asarray(xc, float), theta_min, theta, h, lame, c(f1), c(f2), c(g1), c(g2),
                   np.zeros(3), np.zeros(3), omega)

    def reduced_planar(self, phi):
        """In-plane reduced corner data: P(f^(1,2)), P(g^(1,2)) = (int phi) times the data."""
        m = phi.moments()["phi"]
        sl = lambda fn: (lambda r: m * np.asarray(fn(r))[..., :2])
        d0 = lambda v: None if v is None else m * np.asarray(v)[:2]
        return CornerNeighborhood(self.xc, self.theta_min, self.theta, self.h, self.lame,
                                  sl(self.f_plus), sl(self.f_minus), sl(self.g_plus), sl(self.g_minus),
                                  d0(self.df_plus0), d0(self.df_minus0), omega=self.omega)

    def xhat(self, e):
        a = self.theta_min + (self.theta if e == "plus" else 0.0)
        return np.array([math.cos(a), math.sin(a)])

    def normal(self, e):
        if e == "plus":
            a = self.theta_min + self.theta + math.pi / 2
        else:
            a = self.theta_min - math.pi / 2
        return np.array([math.cos(a), math.sin(a)])


def third_component_sweep(h, theta, n=4, depth=25.0):
    """Geometric s-sweep with sqrt(s h) cos(theta/2) >= depth at the start."""
    s0 = (depth / math.cos(theta / 2)) ** 2 / h
    return tuple(s0 * 2.0 ** k for k in range(n))


def scalar_probe_value(corner, phi, s, part=np.real):
    """E3(s) = sum_e int_{Gamma_e} (P g3_e u0 - mu P f3_e d_nu u0) with the harmonic CGO."""
    m = phi.moments()["phi"]
    # the CGO is centred at the origin and fed relative positions, so points
    # very close to the corner do not round onto it
    u0 = HarmonicCgo(HarmonicCgoParams(s, np.zeros(2), corner.theta_min))
    mu = corner.lame.mu
    total, err = 0j, 0.0
    for e in ("plus", "minus"):
        xh, nu = corner.xhat(e), corner.normal(e)
        f, g = corner.f_plus if e == "plus" else corner.f_minus, corner.g_plus if e == "plus" else corner.g_minus

        def integrand(t):
            r = t * t
            x = np.multiply.outer(r, xh)
            dn = u0.gradient(x) @ nu
            return 2 * t * m * (part(np.asarray(g(r))[..., 2]) * u0.value(x) - mu * part(np.asarray(f(r))[..., 2]) * dn)

        rs = math.sqrt(s)
        val, er = integrate_scalar(integrand, 0.0, math.sqrt(corner.h),
                                   points=[k / rs for k in (1, 2, 4, 8, 16, 32) if k / rs < math.sqrt(corner.h)])
        total += val
        err += er
    return total, err


def _scalar_fit(corner, phi, sweep, part):
    """Least squares for (Delta P f3, P g3_1, P g3_2) over the sweep."""
    mu = corner.lame.mu
    rows, rhs = [], []
    for s in sweep:
        E, _ = scalar_probe_value(corner, phi, s, part)
        rs = math.sqrt(s)
        Jp = edge_integral_exact(rs, corner.h, corner.theta)
        Jm = edge_integral_exact(rs, corner.h, 0.0)
        up = np.exp(-rs * math.sqrt(corner.h) * np.exp(0.5j * corner.theta))
        um = np.exp(-rs * math.sqrt(corner.h))
        # constant-data model; the f columns carry the exact arc-endpoint tails
        cols = np.array([1j * mu * (1 - 0.5 * (up + um)), Jp, Jm])
        rows.append(np.vstack([cols.real, cols.imag]))
        rhs.append([E.real, E.imag])
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    scl = np.linalg.norm(A, axis=0)
    x, res, *_ = np.linalg.lstsq(A / scl, b, rcond=None)
    x = x / scl
    fit_res = b - A @ x
    dof = max(len(b) - 3, 1)
    sig = np.linalg.norm(fit_res) / math.sqrt(dof)
    cov = sig ** 2 * np.linalg.inv((A.T @ A))
    return x, np.sqrt(np.maximum(np.diag(cov), 0)), float(np.linalg.norm(fit_res))


@dataclass
class Jump3DResult:
    delta_f: np.ndarray                 # normalized (divided by int phi), length 3
    delta_pf: np.ndarray                # Delta P f, length 3
    rotation_residual: float
    g3: tuple                           # (g3_1(0), g3_2(0)) normalized
    errors: dict = field(default_factory=dict)
    inconclusive: dict = field(default_factory=dict)
    reports: dict = field(default_factory=dict)


def recover_jump_3d(corner, phi, taus=(20.0, 40.0, 80.0, 160.0), sweep=None, rotation=True):
    """Corner quantities of x3-independent jump data through the reduced systems."""
    m = phi.moments()["phi"]
    planar = corner.reduced_planar(phi)
    rep = recover_displacement_jump(planar, taus)
    rot = None
    rot_rep = None
    if rotation:
        try:
            rot_rep = recover_traction_rotation(planar, taus, df_tol=1e-3 * max(abs(m), 1.0))
            rot = rot_rep.rotation_residual / m
        except ProbeError:
            rot = None
    if sweep is None:
        sweep = third_component_sweep(corner.h, corner.theta)
    xr, er, rr = _scalar_fit(corner, phi, sweep, np.real)
    xi, ei, ri = _scalar_fit(corner, phi, sweep, np.imag)
    x = xr + 1j * xi if np.any(xi) else xr
    df3 = x[0]
    dpf = np.concatenate([np.asarray(rep.delta_f, dtype=complex), [df3]])
    if not np.any(dpf.imag):
        dpf = dpf.real
    scalar_err = er + ei
    scalar_scale = np.abs(x).max() + 1.0
    errors = {"in_plane": rep.delta_f_error / abs(m), "third": (scalar_err / abs(m)).tolist(),
              "rotation": None if rot_rep is None else rot_rep.rotation_error / abs(m)}
    inconc = {"in_plane": rep.inconclusive,
              "rotation": None if rot_rep is None else rot_rep.inconclusive,
              "third": bool((rr + ri) > 1e-6 * scalar_scale)}
    return Jump3DResult(dpf / m, dpf, rot, (x[1] / m, x[2] / m), errors, inconc,
                        {"in_plane": rep, "rotation": rot_rep})


def scalar_identity(p, q, source_p, source_q, corner, s, omega=0.0):
    """Green's identity for the third component, both routes.

    p, q are the reduced third components on the two sides (value, gradient),
    with mu Lap' p + w^2 p = source_p and likewise for q.  Returns the edge
    route E3 computed from the traces of q - p, and the volume-plus-arc route
    int_S (source_q - source_p - w^2 (q - p)) u0 - mu int_Lambda (d_nu(q-p) u0 - (q-p) d_nu u0).
    """
    mu = corner.lame.mu
    u0 = HarmonicCgo(HarmonicCgoParams(s, np.zeros(2), corner.theta_min))
    xc = corner.xc
    diff = lambda y: q.value(xc + y) - p.value(xc + y)
    ddiff = lambda y: q.gradient(xc + y) - p.gradient(xc + y)
    edge = 0j
    for e in ("plus", "minus"):
        xh, nu = corner.xhat(e), corner.normal(e)

        def integrand(t):
            x = np.multiply.outer(t * t, xh)
            return 2 * t * ((mu * ddiff(x) @ nu) * u0.value(x) - mu * diff(x) * (u0.gradient(x) @ nu))

        edge += integrate_scalar(integrand, 0.0, math.sqrt(corner.h))[0]
    th0, th1 = corner.theta_min, corner.theta_min + corner.theta

    def arc(a):
        nu = np.array([math.cos(a), math.sin(a)])
        x = corner.h * nu
        return corner.h * ((ddiff(x) @ nu) * u0.value(x) - diff(x) * (u0.gradient(x) @ nu))

    arc_val = integrate_scalar(arc, th0, th1)[0]

    def radial(a):
        xh = np.array([math.cos(a), math.sin(a)])

        def fr(t):
            x = np.multiply.outer(t * t, xh)
            src = source_q(xc + x) - source_p(xc + x) - omega ** 2 * diff(x)
            return 2 * t ** 3 * src * u0.value(x)

        return integrate_scalar(fr, 0.0, math.sqrt(corner.h))[0]

    vol = integrate_scalar(radial, th0, th1)[0]
    return edge, vol - mu * arc_val
