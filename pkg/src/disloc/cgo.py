"""Closed-form special solutions concentrated at a corner, and exact integrals.

Three families are provided:

* ``elastic``    u0(x) = exp(xi . (x - xc)) eta, solving mu Lap u + (lam+mu) grad div u + w^2 u = 0
* ``harmonic``   F(x) = exp(-sqrt(s z)), a scalar harmonic function (z the corner-local complex coordinate)
* ``lame_zero``  u(x) = exp(-s sqrt z) (1, i), solving the static Lame system

The last two have a branch cut along the negative real axis of the corner
frame; the frame rotation ``phi`` must be chosen so the cut misses the region
where the field is used.
"""
from dataclasses import dataclass
import math

import numpy as np
from scipy.special import gamma as gamma_fn

from ._quad import integrate_scalar
from .geometry import LameParameters, GeometryError, rot90

_ONE_I = np.array([1.0, 1j])


@dataclass(frozen=True)
class Sector:
    """Corner sector {xc + r (cos a, sin a): 0 < r < h, theta_min < a < theta_max}."""
    xc: np.ndarray
    theta_min: float
    theta_max: float
    h: float = np.inf

    @property
    def opening(self):
        return self.theta_max - self.theta_min

    def direction(self, a):
        return np.array([math.cos(a), math.sin(a)])


@dataclass(frozen=True)
class ElasticCgoParams:
    tau: float
    d: np.ndarray
    d_perp: np.ndarray
    xc: np.ndarray
    omega: float
    lame: LameParameters

    def __post_init__(self):
        d = np.asarray(self.d, float)
        dp = np.asarray(self.d_perp, float)
        if abs(np.linalg.norm(d) - 1) > 1e-12 or abs(np.linalg.norm(dp) - 1) > 1e-12 or abs(d @ dp) > 1e-12:
            raise GeometryError("d and d_perp must be orthonormal")
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "d_perp", dp)
        object.__setattr__(self, "xc", np.asarray(self.xc, float))
        if not self.tau > self.kappa_s:
            raise GeometryError(f"tau={self.tau} must exceed kappa_s={self.kappa_s}")

    @property
    def kappa_s(self):
        return self.omega * math.sqrt(1.0 / self.lame.mu)

    @property
    def kappa_p(self):
        # kept for completeness; no identity below uses it
        return self.omega * math.sqrt(1.0 / (self.lame.lam + 2 * self.lame.mu))

    @property
    def xi(self):
        return self.tau * self.d + 1j * math.sqrt(self.kappa_s ** 2 + self.tau ** 2) * self.d_perp

    @property
    def eta(self):
        return self.d_perp - 1j * math.sqrt(1 + self.kappa_s ** 2 / self.tau ** 2) * self.d

    @property
    def sigma(self):
        """d1 d_perp2 - d2 d_perp1 (+1 when d_perp is d rotated counterclockwise)."""
        return float(self.d[0] * self.d_perp[1] - self.d[1] * self.d_perp[0])

    @classmethod
    def for_direction(cls, tau, theta0, xc, omega, lame, orientation=1):
        """d = (cos theta0, sin theta0), d_perp its counterclockwise (or clockwise) normal."""
        d = np.array([math.cos(theta0), math.sin(theta0)])
        return cls(tau, d, orientation * rot90(d), xc, omega, lame)


def default_direction(sector):
    """Angle of d = minus the unit bisector of the sector."""
    return 0.5 * (sector.theta_min + sector.theta_max) + math.pi


def separation(theta0, sector, n=2001):
    """max over the closed sector of d . xhat; negative means admissible."""
    a = np.linspace(sector.theta_min, sector.theta_max, n)
    return float(np.max(np.cos(a - theta0)))


def _local_z(x, xc, phi):
    x = np.asarray(x, float)
    z = (x[..., 0] - xc[0]) + 1j * (x[..., 1] - xc[1])
    return z * np.exp(-1j * phi)


def _check_cut(zl, tol=0.0):
    on_cut = (np.abs(zl.imag) <= tol) & (zl.real <= 0)
    if np.any(on_cut):
        raise GeometryError("evaluation on the branch cut")


class CgoField:
    """Common interface: value, gradient (d_j u_i at [..., i, j]), traction, PDE residual."""

    family = None

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def traction(self, x, nu, lame=None):
        lame = lame or self.lame
        G = self.gradient(x)
        nu = np.broadcast_to(np.asarray(nu, float), G.shape[:-1])
        div = G[..., 0, 0] + G[..., 1, 1]
        sym = 0.5 * (G + np.swapaxes(G, -1, -2))
        return lame.lam * div[..., None] * nu + 2 * lame.mu * np.einsum("...ij,...j->...i", sym, nu)


class ElasticCgo(CgoField):
    family = "elastic"

    def __init__(self, params: ElasticCgoParams):
        self.params = params
        self.lame = params.lame
        self._xi = params.xi
        self._eta = params.eta

    def phase(self, x):
        x = np.asarray(x, float)
        return np.exp((x - self.params.xc) @ self._xi)

    def value(self, x):
        return self.phase(x)[..., None] * self._eta

    def gradient(self, x):
        e = self.phase(x)
        return e[..., None, None] * np.outer(self._eta, self._xi)

    def hessian(self, x):
        e = self.phase(x)
        return e[..., None, None, None] * np.einsum("i,j,k->ijk", self._eta, self._xi, self._xi)

    def closed_form_traction(self, x, nu):
        """2 mu (xi.nu) e eta + (mu kappa_s^2 / tau) sigma e nu_perp, nu_perp = ccw rotation of nu."""
        p = self.params
        nu = np.asarray(nu, float)
        e = self.phase(x)
        xn = nu @ self._xi
        c = p.lame.mu * p.kappa_s ** 2 / p.tau * p.sigma
        return (2 * p.lame.mu * (e * xn))[..., None] * self._eta + (c * e)[..., None] * rot90(nu)

    def residual(self, x):
        """mu Lap u + (lam+mu) grad div u + omega^2 u."""
        H = self.hessian(x)
        lam, mu = self.lame.lam, self.lame.mu
        lap = H[..., 0, 0] + H[..., 1, 1]
        graddiv = H[..., 0, 0, :] + H[..., 1, 1, :]
        return mu * lap + (lam + mu) * graddiv + self.params.omega ** 2 * self.value(x)


def cgo_elastic(params):
    return ElasticCgo(params)


@dataclass(frozen=True)
class HarmonicCgoParams:
    s: float
    xc: np.ndarray
    phi: float = 0.0      # rotation of the corner frame (branch cut along its negative x-axis)

    def __post_init__(self):
        if not self.s > 0:
            raise GeometryError("s must be positive")
        object.__setattr__(self, "xc", np.asarray(self.xc, float))


class HarmonicCgo(CgoField):
    """Scalar F = exp(-sqrt(s z)); gradient returns the 2-vector dF."""
    family = "harmonic"

    def __init__(self, params: HarmonicCgoParams):
        self.params = params
        self._rs = math.sqrt(params.s)

    def _z(self, x):
        zl = _local_z(x, self.params.xc, self.params.phi)
        _check_cut(zl)
        return zl

    def value(self, x):
        return np.exp(-self._rs * np.sqrt(self._z(x)))

    def dz(self, x):
        """Complex derivative with respect to the global coordinate."""
        zl = self._z(x)
        sq = np.sqrt(zl)
        return -self._rs / (2 * sq) * np.exp(-self._rs * sq) * np.exp(-1j * self.params.phi)

    def d2z(self, x):
        zl = self._z(x)
        sq = np.sqrt(zl)
        F = np.exp(-self._rs * sq)
        # F'' = F (s / (4 z) + sqrt(s) / (4 z^{3/2}))
        return F * (self.params.s / (4 * zl) + self._rs / (4 * zl * sq)) * np.exp(-2j * self.params.phi)

    def gradient(self, x):
        return self.dz(x)[..., None] * _ONE_I

    def hessian(self, x):
        return self.d2z(x)[..., None, None] * np.outer(_ONE_I, _ONE_I)

    def residual(self, x):
        H = self.hessian(x)
        return H[..., 0, 0] + H[..., 1, 1]

    def traction(self, x, nu, lame=None):
        raise TypeError("the harmonic family is scalar; use gradient() for normal derivatives")


def cgo_harmonic(params):
    return HarmonicCgo(params)


@dataclass(frozen=True)
class LameZeroCgoParams:
    s: float
    xc: np.ndarray
    phi: float = 0.0
    lame: LameParameters = LameParameters(1.0, 1.0)

    def __post_init__(self):
        if not self.s > 0:
            raise GeometryError("s must be positive")
        object.__setattr__(self, "xc", np.asarray(self.xc, float))


class LameZeroCgo(CgoField):
    """u = c(z) (1, i) in global coordinates, c(z) = exp(-i phi) exp(-s sqrt(z_local))."""
    family = "lame_zero"

    def __init__(self, params: LameZeroCgoParams):
        self.params = params
        self.lame = params.lame

    def _z(self, x):
        zl = _local_z(x, self.params.xc, self.params.phi)
        _check_cut(zl)
        return zl

    def first_local(self, x):
        """exp(-s sqrt z) in the corner frame (first local component)."""
        return np.exp(-self.params.s * np.sqrt(self._z(x)))

    def _c(self, x, order=0):
        zl = self._z(x)
        s, phi = self.params.s, self.params.phi
        sq = np.sqrt(zl)
        G = np.exp(-s * sq)
        rot = np.exp(-1j * phi * (order + 1))
        if order == 0:
            return rot * G
        if order == 1:
            return rot * G * (-s / (2 * sq))
        return rot * G * (s * s / (4 * zl) + s / (4 * zl * sq))

    def value(self, x):
        return self._c(x)[..., None] * _ONE_I

    def gradient(self, x):
        return self._c(x, 1)[..., None, None] * np.outer(_ONE_I, _ONE_I)

    def hessian(self, x):
        return self._c(x, 2)[..., None, None, None] * np.einsum("i,j,k->ijk", _ONE_I, _ONE_I, _ONE_I)

    def residual(self, x):
        H = self.hessian(x)
        lam, mu = self.lame.lam, self.lame.mu
        lap = H[..., 0, 0] + H[..., 1, 1]
        graddiv = H[..., 0, 0, :] + H[..., 1, 1, :]
        return mu * lap + (lam + mu) * graddiv


def cgo_lame_zero(params):
    return LameZeroCgo(params)


# ----------------------------------------------------------------------------
# exact integrals

def edge_integral_exact(s, h, theta):
    """int_0^h exp(-s sqrt(r) e^{i theta/2}) dr in closed form."""
    if not (s > 0 and h > 0):
        raise GeometryError("s and h must be positive")
    m = np.exp(0.5j * theta)
    a = s * math.sqrt(h) * m
    e = np.exp(-a)
    return 2.0 / s ** 2 * (m ** -2 - m ** -2 * e - m ** -1 * s * math.sqrt(h) * e)


def edge_integral_quadrature(s, h, theta):
    m = np.exp(0.5j * theta)
    # r = t^2 removes the sqrt singularity of the derivative at the corner
    return integrate_scalar(lambda t: 2 * t * np.exp(-s * m * t), 0.0, math.sqrt(h))[0]


def gamma_tail(alpha, h, zeta):
    """Leading term Gamma(a+1)/zeta^(a+1) of int_0^h r^a e^{-zeta r} dr and the tail bound."""
    zeta = complex(zeta)
    if alpha < 0:
        raise GeometryError("alpha must be nonnegative")
    if not 0 < h < math.e:
        raise GeometryError("h must lie in (0, e)")
    if not zeta.real > 0:
        raise GeometryError("Re zeta must be positive")
    leading = gamma_fn(alpha + 1) / zeta ** (alpha + 1)
    bound = 2.0 / zeta.real * math.exp(-h * zeta.real / 2)
    return {"leading": complex(leading), "tail_bound": bound}


def power_exp_integral(alpha, zeta, a, b):
    """int_a^b r^alpha e^{-zeta r} dr by adaptive quadrature (b may be inf)."""
    zeta = complex(zeta)
    f = lambda r: r ** alpha * np.exp(-zeta * r)
    if np.isinf(b):
        # cut where the integrand is below double precision relative to its peak
        cut = max(a, 1.0) + 80.0 / zeta.real + 4 * alpha / zeta.real
        return integrate_scalar(f, a, cut, limit=1000)[0]
    return integrate_scalar(f, a, b, limit=1000)[0]


def sector_integral_exact(family, s, theta_min, theta_max):
    """Integral over the infinite sector of the harmonic CGO (s^-2) or lame-zero first component (s^-4)."""
    p = {"harmonic": 2, "lame_zero": 4}[family]
    return 6j * (np.exp(-2j * theta_max) - np.exp(-2j * theta_min)) * s ** (-p)


def _radial_rate(family, s):
    # F along a ray is exp(-k sqrt(r) e^{i a/2}) with k = sqrt(s) (harmonic) or s (lame-zero)
    return math.sqrt(s) if family == "harmonic" else float(s)


def sector_integral_quadrature(family, s, theta_min, theta_max, h=np.inf):
    """Nested adaptive quadrature in polar coordinates (r = t^2)."""
    k = _radial_rate(family, s)

    def radial(a):
        m = np.exp(0.5j * a)
        tmax = math.sqrt(h) if np.isfinite(h) else 60.0 / (k * math.cos(a / 2)) + 1.0
        # r dr = 2 t^3 dt
        return integrate_scalar(lambda t: 2 * t ** 3 * np.exp(-k * m * t), 0.0, tmax, epsabs=1e-15)[0]

    return integrate_scalar(radial, theta_min, theta_max, epsabs=1e-15)[0]


def delta_sector(theta_min, theta_max, n=4001):
    a = np.linspace(theta_min, theta_max, n)
    return float(np.min(np.cos(a / 2)))


def weighted_decay_check(alpha, s, theta_min, theta_max):
    """(integral of |u0||x|^alpha over the sector, stated upper bound) for the harmonic CGO."""
    k = math.sqrt(s)

    def radial(a):
        c = math.cos(a / 2)
        tmax = 80.0 / (k * c) + 1.0
        # |x|^alpha r dr with r = t^2 -> 2 t^(2 alpha + 3) dt
        return integrate_scalar(lambda t: 2 * t ** (2 * alpha + 3) * np.exp(-k * c * t), 0.0, tmax,
                                epsabs=1e-15, limit=1000)[0].real

    val = integrate_scalar(radial, theta_min, theta_max, epsabs=1e-15)[0].real
    dA = delta_sector(theta_min, theta_max)
    bound = 2 * (theta_max - theta_min) * gamma_fn(2 * alpha + 4) / dA ** (2 * alpha + 4) * s ** (-alpha - 2)
    return val, bound


def lame_zero_l2_check(s, h, theta_min, theta_max):
    """L2 norm of the lame-zero CGO over the sector of radius h, and the bound parameter.

    The bound reads ||u|| <= sqrt(opening) exp(-s sqrt(T) h) for some T in [0, h].
    The right side decreases in T, so the bound holds iff it holds at T = 0; the
    informative number is the largest admissible T, returned clipped to h.
    """
    def radial(a):
        c = math.cos(a / 2)
        # |u|^2 = 2 exp(-2 s sqrt(r) cos(a/2)); r dr = 2 t^3 dt
        return integrate_scalar(lambda t: 4 * t ** 3 * np.exp(-2 * s * c * t), 0.0, math.sqrt(h),
                                epsabs=1e-16)[0].real

    norm = math.sqrt(integrate_scalar(radial, theta_min, theta_max, epsabs=1e-16)[0].real)
    span = theta_max - theta_min
    ratio = math.sqrt(span) / norm
    T = (math.log(ratio) / (s * h)) ** 2 if ratio >= 1 else -1.0
    return {"norm": norm, "T": min(T, h), "holds": T >= 0}


# ----------------------------------------------------------------------------
# volume decay of the elastic CGO on a corner sector

def elastic_sector_integral(params, sector, B=0.0):
    """int over the sector of |x - xc|^B u0 (vector), nested quadrature."""
    xi = params.xi

    def radial(a):
        xh = sector.direction(a)
        lam = -complex(xi @ xh)             # decay rate along the ray
        rmax = min(sector.h, (80.0 + 4 * B) / lam.real)
        val, _ = integrate_scalar(lambda r: r ** (B + 1) * np.exp(-lam * r), 0.0, rmax, epsabs=1e-18,
                                  limit=1000)
        return val

    scal = integrate_scalar(radial, sector.theta_min, sector.theta_max, epsabs=1e-18)[0]
    return scal * params.eta


def volume_decay_check(params, sector, taus=(20.0, 40.0, 80.0, 160.0), B=0.0):
    """Fit the algebraic decay exponent of |int_S |x|^B u0| in tau.

    Returns dict with integrals, fitted exponent, and the expected value 2 + B.
    """
    theta0 = math.atan2(params.d[1], params.d[0])
    if separation(theta0, sector) >= 0:
        raise GeometryError("no negative separation: d points into the sector")
    mags = []
    for t in taus:
        p = ElasticCgoParams(t, params.d, params.d_perp, params.xc, params.omega, params.lame)
        mags.append(float(np.linalg.norm(elastic_sector_integral(p, sector, B))))
    slope = np.polyfit(np.log(taus), np.log(mags), 1)[0]
    return {"taus": list(taus), "magnitudes": mags, "exponent": -float(slope), "expected": 2.0 + B}
