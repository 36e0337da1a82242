"""Corner probes: Betti pairings of jump data with corner-concentrated CGO fields.

Frame and sign conventions (corner at xc):

* ``theta_min`` is the absolute direction of the edge Gamma^- and ``theta``
  the opening, so Gamma^+ points along theta_min + theta.
* Edge normals are the exterior normals of the sector S_h.
* Jumps follow f = w - v and g = T w - T v on each edge, where v lives in
  the sector and w is the field on the other side continued into it.
  Index 1 refers to Gamma^+ and index 2 to Gamma^-.

With these conventions Betti's formula on S_h reads

    E(tau) := sum_e int_{Gamma_e} (g_e . u0 - T u0 . f_e) = int_Lambda (T(v-w) . u0 - T u0 . (v-w)),

and the large-tau behaviour of E isolates the corner values of f and g.
"""
from dataclasses import dataclass, field, asdict
import json
import math

import numpy as np
from scipy.stats import t as student_t

from ._quad import integrate_scalar, ABS_TOL, REL_TOL
from .cgo import (ElasticCgo, ElasticCgoParams, LameZeroCgo, LameZeroCgoParams, edge_integral_exact,
                  Sector, separation)
from .geometry import GeometryError, LameParameters, theta_matrix, rotation


class ProbeError(ValueError):
    """Probe preconditions violated (separation, hypotheses)."""


def _dir(a):
    return np.array([math.cos(a), math.sin(a)])


def relation_matrix(theta):
    """Matrix M with g1(0) = M g2(0) forced by the probe identity: minus the rotation by theta."""
    c, s = math.cos(theta), math.sin(theta)
    return -np.array([[c, -s], [s, c]])


@dataclass
class CornerNeighborhood:
    """Jump data on the two edges of a corner sector, optionally with the side fields."""
    xc: np.ndarray
    theta_min: float
    theta: float
    h: float
    lame: LameParameters
    f_plus: callable            # r -> (..., 2) jump f1 on Gamma^+
    f_minus: callable
    g_plus: callable
    g_minus: callable
    df_plus0: np.ndarray = None     # d/dr f1 at r = 0
    df_minus0: np.ndarray = None
    v: object = None
    w: object = None
    omega: float = 0.0

    def __post_init__(self):
        self.xc = np.asarray(self.xc, float)
        if not 0 < self.theta < math.pi:
            raise GeometryError("opening angle outside (0, pi)")
        self.df_plus0 = np.zeros(2) if self.df_plus0 is None else np.asarray(self.df_plus0)
        self.df_minus0 = np.zeros(2) if self.df_minus0 is None else np.asarray(self.df_minus0)

    # edge geometry
    def xhat(self, edge):
        return _dir(self.theta_min + (self.theta if edge == "plus" else 0.0))

    def normal(self, edge):
        if edge == "plus":
            return _dir(self.theta_min + self.theta + math.pi / 2)
        return _dir(self.theta_min - math.pi / 2)

    def f(self, edge):
        return self.f_plus if edge == "plus" else self.f_minus

    def g(self, edge):
        return self.g_plus if edge == "plus" else self.g_minus

    def df0(self, edge):
        return self.df_plus0 if edge == "plus" else self.df_minus0

    @property
    def sector(self):
        return Sector(self.xc, self.theta_min, self.theta_min + self.theta, self.h)

    @classmethod
    def from_fields(cls, v, w, xc, theta_min, theta, h, lame, omega=0.0):
        """Jumps induced by two fields with value/gradient/traction (f = w - v, g = T w - T v)."""
        xc = np.asarray(xc, float)
        nb = cls.__new__(cls)
        nb.xc, nb.theta_min, nb.theta = xc, theta_min, theta
        out = {}
        for e in ("plus", "minus"):
            xh, nu = nb.xhat(e), nb.normal(e)
            out["f_" + e] = (lambda xh: lambda r: w.value(xc + np.multiply.outer(r, xh))
                             - v.value(xc + np.multiply.outer(r, xh)))(xh)
            out["g_" + e] = (lambda xh, nu: lambda r: w.traction(xc + np.multiply.outer(r, xh), nu)
                             - v.traction(xc + np.multiply.outer(r, xh), nu))(xh, nu)
            G = w.gradient(xc) - v.gradient(xc)
            out["df_" + e + "0"] = G @ xh
        return cls(xc, theta_min, theta, h, lame, out["f_plus"], out["f_minus"], out["g_plus"],
                   out["g_minus"], out["df_plus0"], out["df_minus0"], v, w, omega)

    @classmethod
    def constant(cls, xc, theta_min, theta, h, lame, f1, f2, g1, g2, omega=0.0):
        c = lambda val: (lambda r: np.broadcast_to(np.asarray(val, dtype=complex), np.shape(r) + (2,)))
        return cls(xc, theta_min, theta, h, lame, c(f1), c(f2), c(g1), c(g2), omega=omega)

    def real_part(self):
        return self._map(np.real)

    def imag_part(self):
        return self._map(np.imag)

    def _map(self, op):
        wrap = lambda fn: (lambda r: op(fn(r)))
        return CornerNeighborhood(self.xc, self.theta_min, self.theta, self.h, self.lame,
                                  wrap(self.f_plus), wrap(self.f_minus), wrap(self.g_plus),
                                  wrap(self.g_minus), op(self.df_plus0), op(self.df_minus0),
                                  None, None, self.omega)


def cgo_for(neigh, tau, theta0_local=None, orientation=1):
    """Elastic CGO centred at the corner with d at angle theta_min + theta0_local."""
    if theta0_local is None:
        theta0_local = neigh.theta / 2 + math.pi
    theta0 = neigh.theta_min + theta0_local
    if separation(theta0, neigh.sector) >= 0:
        raise ProbeError("separation condition violated: d . xhat must stay negative on the sector")
    return ElasticCgo(ElasticCgoParams.for_direction(tau, theta0, neigh.xc, neigh.omega, neigh.lame,
                                                     orientation))


def admissible_directions(theta, n=3, margin=0.3):
    """n probe angles (corner frame) strictly inside (theta + pi/2, 3 pi/2)."""
    lo, hi = theta + math.pi / 2, 1.5 * math.pi
    span = hi - lo
    return list(np.linspace(lo + margin * span, hi - margin * span, n))


# ----------------------------------------------------------------------------
# Betti pairing on general contours

def betti_pairing(a, b, contour, lame=None, epsabs=1e-12, epsrel=1e-10):
    """int over the contour of (T_nu a . b - a . T_nu b).

    ``contour`` is a list of (point(t), normal(t), speed(t), t0, t1) pieces
    with outward normals; fields need value() and traction().
    """
    total = 0j
    err = 0.0
    for point, normal, speed, t0, t1 in contour:
        def integrand(t):
            x = point(t)
            nu = normal(t)
            ta = a.traction(x, nu, lame) if lame is not None else a.traction(x, nu)
            tb = b.traction(x, nu, lame) if lame is not None else b.traction(x, nu)
            return (ta @ b.value(x) - a.value(x) @ tb) * speed(t)
        val, e = integrate_scalar(integrand, t0, t1, epsabs=epsabs, epsrel=epsrel)
        total += val
        err += e
    return total, err


def polygon_contour(verts):
    """Contour pieces for a counterclockwise polygon."""
    verts = np.asarray(verts, float)
    pieces = []
    for i in range(len(verts)):
        a, b = verts[i], verts[(i + 1) % len(verts)]
        L = np.linalg.norm(b - a)
        t = (b - a) / L
        nu = np.array([t[1], -t[0]])
        pieces.append(((lambda a, t: lambda s: a + s * t)(a, t), (lambda nu: lambda s: nu)(nu),
                       lambda s: 1.0, 0.0, L))
    return pieces


def sector_contour(xc, theta_min, theta_max, h):
    """Boundary of the corner sector: Gamma^- outwards, arc, Gamma^+ inwards; outward normals."""
    xc = np.asarray(xc, float)
    xm, xp = _dir(theta_min), _dir(theta_max)
    nm, np_ = _dir(theta_min - math.pi / 2), _dir(theta_max + math.pi / 2)
    return [
        (lambda r: xc + r * xm, lambda r: nm, lambda r: 1.0, 0.0, h),
        (lambda a: xc + h * _dir(a), lambda a: _dir(a), lambda a: h, theta_min, theta_max),
        (lambda r: xc + r * xp, lambda r: np_, lambda r: 1.0, 0.0, h),
    ]


# ----------------------------------------------------------------------------
# the probe functional and its decomposition

def _edge_consts(neigh, u0, edge):
    p = u0.params
    xh, nu = neigh.xhat(edge), neigh.normal(edge)
    xi, eta = p.xi, p.eta
    a = complex(xi @ xh)                      # u0 along the edge is exp(a r) eta
    c = 2 * p.lame.mu * eta * complex(xi @ nu) + p.lame.mu * p.kappa_s ** 2 / p.tau * p.sigma * np.array(
        [-nu[1], nu[0]])
    return xh, nu, a, eta, c


def _breakpoints(a, h):
    rate = -a.real
    return [k / rate for k in (0.5, 1, 2, 4, 8, 16, 32, 64) if k / rate < h]


def _ray_integral(fun, a, h):
    """int_0^h fun(r) exp(a r) dr for scalar fun."""
    return integrate_scalar(lambda r: fun(r) * np.exp(a * r), 0.0, h, points=_breakpoints(a, h))


def probe_value(neigh, u0):
    """E = sum_e int (g_e . u0 - T u0 . f_e) over both edges, with its quadrature error."""
    total, err = 0j, 0.0
    for e in ("plus", "minus"):
        xh, nu, a, eta, c = _edge_consts(neigh, u0, e)
        f, g = neigh.f(e), neigh.g(e)
        val, er = _ray_integral(lambda r: g(r) @ eta - f(r) @ c, a, neigh.h)
        total += val
        err += er
    return total, err


def _tail(a, h):
    """int_h^inf exp(a r) dr."""
    return -np.exp(a * h) / a


def probe_identity(neigh, u0):
    """Leading corner combination and the labelled remainder terms.

    lhs = sum_e [g_e(0) . eta - f_e(0) . 2 mu eta (xi . nu_e)] / (-xi . xhat_e)

    Remainders (e = + is Gamma^+, index 1; e = - is Gamma^-, index 2):
      R1/R3   f-tails of the 2 mu eta (xi.nu) part     R2/R4   g-tails
      R5/R7   f-tails of the nu_perp part              R6/R8   int T u0 . delta f
      R9      arc term int_Lambda (T(v-w).u0 - T u0.(v-w))
      R10/R12 -int delta g . u0                         R11     nu_perp corner terms
      R13/R14 int T u0 . (r df/dr(0)) on Gamma^- / Gamma^+
    and lhs = sum R.
    """
    p = u0.params
    mu = p.lame.mu
    terms, errs = {}, {}
    lhs = 0j
    lhs_quad = 0j
    idx = {"plus": dict(ft="R1", gt="R2", pt="R5", df="R6", dg="R12", lin="R14"),
           "minus": dict(ft="R3", gt="R4", pt="R7", df="R8", dg="R10", lin="R13")}
    r11 = 0j
    for e in ("plus", "minus"):
        xh, nu, a, eta, c = _edge_consts(neigh, u0, e)
        c_main = 2 * mu * eta * complex(p.xi @ nu)
        c_perp = c - c_main
        f0 = np.asarray(neigh.f(e)(0.0))
        g0 = np.asarray(neigh.g(e)(0.0))
        df0 = neigh.df0(e)
        lhs += (g0 @ eta - f0 @ c_main) / (-a)
        q, _ = integrate_scalar(lambda r: (g0 @ eta - f0 @ c_main) * np.exp(a * r), 0.0, np.inf)
        lhs_quad += q
        tl = _tail(a, neigh.h)
        k = idx[e]
        terms[k["ft"]] = -(f0 @ c_main) * tl
        terms[k["gt"]] = (g0 @ eta) * tl
        terms[k["pt"]] = -(f0 @ c_perp) * tl
        r11 += (f0 @ c_perp) / (-a)
        f, g = neigh.f(e), neigh.g(e)
        terms[k["df"]], errs[k["df"]] = _ray_integral(lambda r: c @ (f(r) - f0 - r * df0), a, neigh.h)
        terms[k["dg"]], errs[k["dg"]] = _ray_integral(lambda r: -(g(r) - g0) @ eta, a, neigh.h)
        terms[k["lin"]], errs[k["lin"]] = _ray_integral(lambda r: r * (c @ df0), a, neigh.h)
    terms["R11"] = r11
    if neigh.v is not None and neigh.w is not None:
        D = _Difference(neigh.v, neigh.w)
        pieces = sector_contour(neigh.xc, neigh.theta_min, neigh.theta_min + neigh.theta, neigh.h)[1:2]
        terms["R9"], errs["R9"] = betti_pairing(D, u0, pieces)
    else:
        terms["R9"], errs["R9"] = np.nan, np.nan
    order = [f"R{i}" for i in range(1, 15)]
    terms = {k: complex(terms[k]) for k in order}
    quad_err = float(np.nansum([errs.get(k, 0.0) for k in order]))
    scale = max(abs(lhs), max(abs(t) for t in terms.values() if np.isfinite(t)))
    tol = quad_err + ABS_TOL * len(errs) + REL_TOL * scale
    resid = lhs - sum(terms.values())
    return {"lhs": complex(lhs), "lhs_quadrature": complex(lhs_quad), "terms": terms,
            "residual": complex(resid), "quadrature_tolerance": tol}


class _Difference:
    def __init__(self, v, w):
        self.v, self.w = v, w

    def value(self, x):
        return self.v.value(x) - self.w.value(x)

    def traction(self, x, nu, lame=None):
        return self.v.traction(x, nu) - self.w.traction(x, nu)


# ----------------------------------------------------------------------------
# extrapolation

@dataclass
class Extrapolation:
    limit: complex
    error_estimate: float
    fitted_rate: float
    inconclusive: bool
    table: list = field(default_factory=list)


def sweep_and_extrapolate(values, max_level=None):
    """Richardson extrapolation for V(p) = a + b/p + c/p^2 + ... on a geometric sweep.

    ``values`` is a list of (p, V).  The tableau is built to the highest level
    the data allows (or ``max_level``); the error estimate is the larger of the
    last two increments along the diagonal and along the final column.
    """
    pts = sorted(values, key=lambda pv: pv[0])
    p = np.array([pv[0] for pv in pts], float)
    V = np.array([pv[1] for pv in pts], dtype=complex)
    n = len(p)
    if n < 2:
        raise ValueError("need at least two sweep values")
    ratios = p[1:] / p[:-1]
    if np.any(ratios <= 1):
        raise ValueError("sweep must be strictly increasing")
    if not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ValueError("sweep must be geometric")
    r = ratios[0]
    levels = n - 1 if max_level is None else min(max_level, n - 1)
    T = [V.copy()]
    for k in range(1, levels + 1):
        prev = T[-1]
        fac = r ** k
        T.append((fac * prev[1:] - prev[:-1]) / (fac - 1))
    limit = T[-1][-1]
    incs = [abs(T[-1][-1] - T[-2][-1])]
    # noise allowance: residual of the least-squares model one order below the
    # tableau, propagated through the tableau weights with a Student-t quantile
    order = min(levels, n - 2)
    if order >= 0 and n - 1 - order >= 1:
        X = np.column_stack([p ** -k for k in range(order + 1)])
        coef, *_ = np.linalg.lstsq(X, V, rcond=None)
        dof = n - 1 - order
        sig = np.linalg.norm(V - X @ coef) / math.sqrt(dof)
        w = _tableau_weights(n, r, levels)
        incs.append(float(student_t.ppf(0.975, dof) * sig * np.linalg.norm(w)))
    err = float(max(incs))
    diffs = np.abs(np.diff(V))
    scale = max(np.max(np.abs(V)), 1e-300)
    tiny = diffs <= 1e-10 * scale
    if np.all(tiny):
        rate, inconclusive = np.inf, False
    else:
        good = ~tiny
        if good.sum() >= 2:
            rate = -float(np.polyfit(np.log(p[1:][good]), np.log(diffs[good]), 1)[0])
        else:
            rate = float(np.log(diffs[0] / max(diffs[-1], 1e-300)) / np.log(p[-1] / p[1])) if n > 2 else np.nan
        inconclusive = bool(np.any(diffs[1:][~tiny[1:]] > diffs[:-1][~tiny[1:]] * (1 + 1e-9)))
    return Extrapolation(complex(limit), err, rate, inconclusive, [list(map(complex, t)) for t in T])


def _tableau_weights(n, r, levels):
    W = [np.eye(n)]
    for k in range(1, levels + 1):
        fac = r ** k
        W.append((fac * W[-1][1:] - W[-1][:-1]) / (fac - 1))
    return W[-1][-1]


# ----------------------------------------------------------------------------
# recoveries

@dataclass
class CornerProbeReport:
    sweep: list
    values: dict
    limits: dict
    delta_f: np.ndarray = None
    delta_f_error: float = None
    rotation_residual: float = None
    rotation_vector: np.ndarray = None
    rotation_error: float = None
    fitted_rates: dict = field(default_factory=dict)
    inconclusive: bool = False
    diagnostics: dict = field(default_factory=dict)

    def to_json(self):
        def enc(o):
            if isinstance(o, complex):
                return [o.real, o.imag]
            if isinstance(o, np.ndarray):
                return enc(o.tolist())
            if isinstance(o, (list, tuple)):
                return [enc(x) for x in o]
            if isinstance(o, dict):
                return {str(k): enc(v) for k, v in o.items()}
            if isinstance(o, (np.floating, np.integer)):
                return o.item()
            if isinstance(o, float) and not math.isfinite(o):
                return str(o)
            return o
        return json.dumps(enc(asdict(self)), indent=2, sort_keys=True)

    def to_csv(self):
        rows = ["param,key,value_re,value_im"]
        for key, vals in sorted(self.values.items()):
            for p, v in zip(self.sweep, vals):
                rows.append(f"{p:.17g},{key},{complex(v).real:.17g},{complex(v).imag:.17g}")
        return "\n".join(rows) + "\n"


def _r8_rows(theta, theta0, L, mu):
    """Two real equations in x = (d_perp . df, d . df) from the limit L."""
    a = 2 * theta0 - theta
    A = np.array([[math.sin(a), math.cos(a)], [math.cos(a), -math.sin(a)]])
    b = np.exp(1j * (theta - 2 * theta0)) * L / (2 * mu)
    return A, np.array([b.real, b.imag])


def _recover_real(neigh, taus, theta0s, scale_by_h):
    rows, rhs, errs, vals, rates, incon = [], [], [], {}, {}, False
    ts = [t / neigh.h for t in taus] if scale_by_h else list(taus)
    for th0 in theta0s:
        seq = []
        for t in ts:
            u0 = cgo_for(neigh, t, th0)
            seq.append(probe_value(neigh, u0)[0])
        ex = sweep_and_extrapolate(list(zip(ts, seq)))
        key = f"theta0={th0:.6f}"
        vals[key] = seq
        rates[key] = ex.fitted_rate
        incon |= ex.inconclusive or (np.isfinite(ex.fitted_rate) and ex.fitted_rate < 0.5)
        A, b = _r8_rows(neigh.theta, th0, ex.limit, neigh.lame.mu)
        rows.append(A)
        rhs.append(b)
        errs.append(ex.error_estimate / (2 * neigh.lame.mu))
    A = np.vstack(rows)
    b = np.concatenate(rhs)
    # rows use theta0 measured from Gamma^-, so the solve lives in the corner frame
    df_local = _solve_frame(A, b, theta0s)
    Rloc = rotation(neigh.theta_min)
    return Rloc @ df_local, float(max(errs) * math.sqrt(2)), vals, rates, incon, ts


def _solve_frame(A, b, theta0s):
    """Least-squares Delta f (corner frame) from stacked per-direction systems."""
    blocks = []
    for th0 in theta0s:
        d = _dir(th0)
        dp = np.array([-d[1], d[0]])
        blocks.append(np.vstack([dp, d]))          # x = B df
    C = np.vstack([A[2 * k:2 * k + 2] @ B for k, B in enumerate(blocks)])
    df, *_ = np.linalg.lstsq(C, b, rcond=None)
    return df


def recover_displacement_jump(neigh, taus=(20.0, 40.0, 80.0, 160.0), theta0s=None, scale_by_h=True):
    """Delta f = f1(0) - f2(0) from the large-tau limit of the probe functional.

    Real and imaginary parts of the data are processed separately.  With
    ``scale_by_h`` the sweep runs over tau / h, so the exponential edge tails
    exp(-tau zeta0 h) are equally suppressed for every radius.
    """
    if theta0s is None:
        theta0s = [neigh.theta / 2 + math.pi, *admissible_directions(neigh.theta, 2)]
    if len(taus) < 4:
        raise ValueError("need at least four sweep values")
    dfr, er, vr, rr, ir, ts = _recover_real(neigh.real_part(), taus, theta0s, scale_by_h)
    dfi, ei, vi, ri, ii, _ = _recover_real(neigh.imag_part(), taus, theta0s, scale_by_h)
    df = dfr + 1j * dfi
    if np.max(np.abs(dfi)) == 0:
        df = dfr
    values = {f"re:{k}": v for k, v in vr.items()}
    values.update({f"im:{k}": v for k, v in vi.items()})
    rates = {f"re:{k}": v for k, v in rr.items()}
    rates.update({f"im:{k}": v for k, v in ri.items()})
    return CornerProbeReport(ts, values, {}, delta_f=df, delta_f_error=er + ei, fitted_rates=rates,
                             inconclusive=bool(ir or ii),
                             diagnostics={"theta0s": list(map(float, theta0s))})


def recover_traction_rotation(neigh, taus=(20.0, 40.0, 80.0, 160.0), df_tol=1e-3, grad_tol=1e-12,
                              check_jump=True, scale_by_h=True):
    """Residual ||g1(0) - M g2(0)|| with M = relation_matrix(theta).

    The probe determines only this combination: tau E(tau) tends to
    i (g1^ e^{-i a+} + g2^ e^{-i a-}) with g^ = g_x + i g_y and a+- the edge
    directions, independently of the probe direction, so the separate values
    of g1(0) and g2(0) are not accessible.
    """
    if np.max(np.abs(neigh.df_plus0)) > grad_tol or np.max(np.abs(neigh.df_minus0)) > grad_tol:
        raise ProbeError("rotation relation needs vanishing tangential derivatives of f at the corner")
    if check_jump:
        rep = recover_displacement_jump(neigh, taus, scale_by_h=scale_by_h)
        if np.max(np.abs(rep.delta_f)) > df_tol:
            raise ProbeError(f"rotation relation needs Delta f = 0 (found {np.abs(rep.delta_f).max():.2e})")
    a_plus = neigh.theta_min + neigh.theta
    out_vec = np.zeros(2, dtype=complex)
    err = 0.0
    values, rates, incon = {}, {}, False
    ts = [t / neigh.h for t in taus] if scale_by_h else list(taus)
    for part, nb in (("re", neigh.real_part()), ("im", neigh.imag_part())):
        seq = []
        for t in ts:
            u0 = cgo_for(nb, t)
            seq.append(t * probe_value(nb, u0)[0])
        ex = sweep_and_extrapolate(list(zip(ts, seq)))
        values[part] = seq
        rates[part] = ex.fitted_rate
        incon |= ex.inconclusive
        qhat = -1j * ex.limit * np.exp(1j * a_plus)          # (g1 - M g2) as a complex number
        vec = np.array([qhat.real, qhat.imag])
        out_vec = out_vec + (vec if part == "re" else 1j * vec)
        err += ex.error_estimate
    if not np.any(out_vec.imag):
        out_vec = out_vec.real
    return CornerProbeReport(ts, values, {}, rotation_residual=float(np.linalg.norm(out_vec)),
                             rotation_vector=out_vec, rotation_error=float(err), fitted_rates=rates,
                             inconclusive=incon,
                             diagnostics={"relation_matrix": relation_matrix(neigh.theta).tolist()})


def reflection_residual_from_identity(neigh, g1, g2):
    """||g1 - Theta g2|| in the corner frame, for comparison with the identifiable residual."""
    R = rotation(neigh.theta_min)
    Th = R @ theta_matrix(neigh.theta) @ R.T
    return float(np.linalg.norm(np.asarray(g1) - Th @ np.asarray(g2)))


# ----------------------------------------------------------------------------
# interface corner probe

def interface_traction_mismatch(u, lame_1, lame_2, x, nu):
    """(T^2 - T^1) u at x for normal nu, from the gradient of u."""
    G = u.gradient(x)
    div = G[..., 0, 0] + G[..., 1, 1]
    sym = 0.5 * (G + np.swapaxes(G, -1, -2))
    dl = lame_2.lam - lame_1.lam
    dm = lame_2.mu - lame_1.mu
    nu = np.asarray(nu, float)
    return dl * div[..., None] * nu + 2 * dm * np.einsum("...ij,...j->...i", sym, nu)


def interface_corner_probe(u, lame_1, lame_2, neigh, sweep=(64.0, 128.0, 256.0, 512.0), omega=0.0):
    """Pair the traction mismatch with the static CGO on the sector edges.

    For each s, P(s) = sum_e int_{Gamma_e} t_e . u0 with u0 = exp(-s sqrt z)(1, i)
    in the corner frame, divided by the exact edge integrals J+ + J-.  When the
    same traction t acts on both edges the ratio equals t1 + i t2 (corner frame)
    up to terms vanishing as s grows.  With distinct one-sided tractions t+ and t-
    it tends to (t+^ m+ + t-^ m-) / (m+ + m-), m = exp(-i a), which is also
    returned as ``reference`` from the analytic tractions at the corner.

    Corrections from smooth variation of t along the edges scale with powers of
    s^-2, so the extrapolation runs in p = s^2.
    """
    R = rotation(neigh.theta_min)
    th = neigh.theta
    vals = []
    J = {}
    for s in sweep:
        # centred at the origin and fed relative positions (see dimred.scalar_probe_value)
        u0 = LameZeroCgo(LameZeroCgoParams(s, np.zeros(2), neigh.theta_min, lame_1))
        total = 0j
        for e in ("plus", "minus"):
            xh, nu = neigh.xhat(e), neigh.normal(e)
            alpha = th if e == "plus" else 0.0
            val, _ = integrate_scalar(
                lambda t: 2 * t * (interface_traction_mismatch(u, lame_1, lame_2, neigh.xc + t * t * xh, nu)
                                   @ u0.value(t * t * xh)),
                0.0, math.sqrt(neigh.h), points=[k / s for k in (1, 2, 4, 8, 16, 32) if k / s < math.sqrt(neigh.h)])
            total += val
            J[e] = edge_integral_exact(s, neigh.h, alpha)
        # the vector (1, i) in the corner frame is exp(i theta_min) (1, i) globally, so
        # t_glob . (1, i)_glob = exp(-i theta_min) (t1 + i t2)_glob = (t1 + i t2)_local
        vals.append(total / (J["plus"] + J["minus"]))
    ex = sweep_and_extrapolate([(s * s, v) for s, v in zip(sweep, vals)])
    tloc = {}
    for e in ("plus", "minus"):
        t0 = interface_traction_mismatch(u, lame_1, lame_2, neigh.xc, neigh.normal(e))
        tl = R.T @ t0
        tloc[e] = tl[0] + 1j * tl[1]
    mp, mm = np.exp(-1j * th), 1.0
    reference = (tloc["plus"] * mp + tloc["minus"] * mm) / (mp + mm)
    diag = {"one_sided_local": {k: complex(v) for k, v in tloc.items()},
            "nondegeneracy": complex(mp + mm)}
    if omega:
        diag["volume_term"] = [complex(_volume_term(u, neigh, s, lame_1) * omega ** 2) for s in sweep]
    return CornerProbeReport(list(sweep), {"t_hat": vals}, {"t_hat": ex.limit, "reference": complex(reference)},
                             fitted_rates={"t_hat": ex.fitted_rate}, inconclusive=ex.inconclusive,
                             diagnostics=diag)


def _volume_term(u, neigh, s, lame):
    u0 = LameZeroCgo(LameZeroCgoParams(s, neigh.xc, neigh.theta_min, lame))

    def radial(a):
        xh = _dir(a)
        return integrate_scalar(lambda t: 2 * t ** 3 * (u.value(neigh.xc + t * t * xh) @ u0.value(t * t * xh)),
                                0.0, math.sqrt(neigh.h))[0]

    return integrate_scalar(radial, neigh.theta_min, neigh.theta_min + neigh.theta)[0]


# ----------------------------------------------------------------------------
# remainder decay audits

def r6_decay_audit(neigh, alpha, amplitude=(1.0, 0.5), taus=(40.0, 80.0, 160.0, 320.0, 640.0)):
    """Fitted power of R6 when f1 carries a planted r^(1+alpha) deviation.

    Returns (exponent, predicted) with predicted = 1 + alpha.
    """
    amp = np.asarray(amplitude, float)
    base = neigh.f_plus
    planted = CornerNeighborhood(neigh.xc, neigh.theta_min, neigh.theta, neigh.h, neigh.lame,
                                 lambda r: base(r) + np.multiply.outer(np.asarray(r, float) ** (1 + alpha), amp),
                                 neigh.f_minus, neigh.g_plus, neigh.g_minus, neigh.df_plus0, neigh.df_minus0,
                                 omega=neigh.omega)
    vals = np.array([abs(probe_identity(planted, cgo_for(planted, t))["terms"]["R6"]) for t in taus])
    slope = np.polyfit(np.log(taus), np.log(vals), 1)[0]
    return float(-slope), 1.0 + alpha


def r9_decay_audit(neigh, taus=tuple(np.arange(8.0, 41.0, 4.0)), theta0_local=None):
    """Fit log|R9| = a + p log tau - b tau and compare b with |zeta0| h.

    zeta0 is the largest value of d . xhat over the sector (the slowest-decaying
    point on the arc).  The default direction is tilted off the bisector so one
    arc endpoint dominates; on the bisector both endpoints decay at the same
    rate and their oscillating phases interfere.  Returns (b, predicted).
    """
    if theta0_local is None:
        theta0_local = neigh.theta / 2 + math.pi + 0.25 * (math.pi - neigh.theta) / 2
    vals = np.array([abs(probe_identity(neigh, cgo_for(neigh, t, theta0_local))["terms"]["R9"]) for t in taus])
    t = np.asarray(taus, float)
    X = np.column_stack([np.ones_like(t), np.log(t), -t])
    coef, *_ = np.linalg.lstsq(X, np.log(vals), rcond=None)
    zeta0 = max(math.cos(theta0_local), math.cos(theta0_local - neigh.theta))
    return float(coef[2]), abs(zeta0) * neigh.h
