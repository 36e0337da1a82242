"""Layered polygonal domains, polyline faults, jump data and admissibility checks.

Conventions used throughout the package:

* The outer boundary is a simple polygon; edge ``k`` runs from vertex ``k`` to
  vertex ``k+1``.  Boundary arcs are addressed by edge index.
* Interface ``l`` (0-based) is a polyline with both endpoints on the outer
  boundary.  Layer 0 lies to the left of interface 0 (as traversed), layer
  ``l+1`` lies to the right of interface ``l``.
* The fault is an open or closed polyline.  The "minus" region is the inside
  of the fault polygon (closed) or of the polygon obtained by closing the
  polyline with its chord (open).  The fault normal points away from it, into
  the "plus" side, and jumps are ``[u] = u_plus - u_minus``.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy.special import roots_legendre

COLLINEAR_TOL = 1e-9


class GeometryError(ValueError):
    """Invalid geometry or configuration (maps to CLI exit code 2)."""

    def __init__(self, message, pointer=""):
        super().__init__(message)
        self.pointer = pointer


class AdmissibilityError(GeometryError):
    pass


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    pair: tuple = ()


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def add(self, code, message, pair=()):
        self.violations.append(Violation(code, message, tuple(pair)))

    def __bool__(self):
        return self.ok


# ----------------------------------------------------------------------------
# small planar helpers

def cross2(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def rot90(v):
    """Counterclockwise rotation by pi/2."""
    v = np.asarray(v)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def rotation(phi):
    c, s = math.cos(phi), math.sin(phi)
    return np.array([[c, -s], [s, c]])


def signed_area(poly):
    p = np.asarray(poly, float)
    q = np.roll(p, -1, axis=0)
    return 0.5 * np.sum(cross2(p, q))


def points_in_polygon(pts, poly):
    """Even-odd test, vectorized over points. Boundary points are ambiguous."""
    pts = np.atleast_2d(np.asarray(pts, float))
    poly = np.asarray(poly, float)
    x, y = pts[:, 0][:, None], pts[:, 1][:, None]
    x1, y1 = poly[:, 0][None, :], poly[:, 1][None, :]
    x2, y2 = np.roll(poly[:, 0], -1)[None, :], np.roll(poly[:, 1], -1)[None, :]
    cond = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    hits = cond & (x < xint)
    return np.count_nonzero(hits, axis=1) % 2 == 1


def point_segment_distance(p, a, b):
    p, a, b = (np.asarray(v, float) for v in (p, a, b))
    ab = b - a
    L2 = ab @ ab
    t = 0.0 if L2 == 0 else float(np.clip((p - a) @ ab / L2, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab))), t


def distance_to_polyline(p, verts, closed=False):
    verts = np.asarray(verts, float)
    n = len(verts)
    m = n if closed else n - 1
    return min(point_segment_distance(p, verts[i], verts[(i + 1) % n])[0] for i in range(m))


def segments_intersect(a, b, c, d, tol=0.0):
    """True if closed segments ab and cd share a point (up to tol)."""
    def orient(p, q, r):
        return cross2(q - p, r - p)
    a, b, c, d = (np.asarray(v, float) for v in (a, b, c, d))
    o1, o2, o3, o4 = orient(a, b, c), orient(a, b, d), orient(c, d, a), orient(c, d, b)
    if o1 * o2 < 0 and o3 * o4 < 0:
        return True
    return min(point_segment_distance(c, a, b)[0], point_segment_distance(d, a, b)[0],
               point_segment_distance(a, c, d)[0], point_segment_distance(b, c, d)[0]) <= tol


def polyline_is_simple(verts, closed=False, tol=1e-12):
    verts = np.asarray(verts, float)
    n = len(verts)
    m = n if closed else n - 1
    segs = [(verts[i], verts[(i + 1) % n]) for i in range(m)]
    for i in range(m):
        for j in range(i + 1, m):
            adjacent = j == i + 1 or (closed and i == 0 and j == m - 1)
            if adjacent:
                # adjacent segments may only share their common vertex
                a, b = segs[i]
                c, d = segs[j]
                if j == i + 1:
                    far = d
                    if point_segment_distance(far, a, b)[0] <= tol:
                        return False
                continue
            if segments_intersect(*segs[i], *segs[j], tol=tol):
                return False
    return True


# ----------------------------------------------------------------------------
# material and domain types

@dataclass(frozen=True)
class LameParameters:
    lam: float
    mu: float

    @property
    def shear_speed_factor(self):
        return 1.0 / math.sqrt(self.mu)


def validate_lame(params, n=2):
    """Strong convexity: mu > 0 and 2 mu + n lambda > 0."""
    rep = ValidationReport()
    if not params.mu > 0:
        rep.add("lame", "mu > 0 fails")
    if not 2 * params.mu + n * params.lam > 0:
        rep.add("lame", f"2*mu + {n}*lambda > 0 fails")
    return rep


@dataclass(frozen=True)
class MeasurementArc:
    edge: int
    t0: float = 0.0
    t1: float = 1.0


@dataclass(frozen=True)
class LayeredDomain:
    outer: np.ndarray
    dirichlet_edges: tuple
    measurement: MeasurementArc
    interfaces: tuple = ()
    layers: tuple = (LameParameters(1.0, 1.0),)
    omega: float = 0.0

    def __post_init__(self):
        outer = np.asarray(self.outer, float)
        if signed_area(outer) < 0:
            raise GeometryError("outer boundary must be counterclockwise", "/outer")
        object.__setattr__(self, "outer", outer)
        object.__setattr__(self, "interfaces", tuple(np.asarray(g, float) for g in self.interfaces))
        object.__setattr__(self, "dirichlet_edges", tuple(int(k) for k in self.dirichlet_edges))
        object.__setattr__(self, "layers", tuple(self.layers))

    @property
    def n_edges(self):
        return len(self.outer)

    @property
    def traction_free_edges(self):
        return tuple(k for k in range(self.n_edges) if k not in self.dirichlet_edges)

    def edge(self, k):
        return self.outer[k % self.n_edges], self.outer[(k + 1) % self.n_edges]

    def edge_normal(self, k):
        a, b = self.edge(k)
        t = (b - a) / np.linalg.norm(b - a)
        return np.array([t[1], -t[0]])  # outward for a counterclockwise polygon

    @property
    def diameter(self):
        p = self.outer
        return float(np.max(np.linalg.norm(p[:, None, :] - p[None, :, :], axis=-1)))

    def measurement_endpoints(self):
        a, b = self.edge(self.measurement.edge)
        return a + self.measurement.t0 * (b - a), a + self.measurement.t1 * (b - a)

    def measurement_length(self):
        p, q = self.measurement_endpoints()
        return float(np.linalg.norm(q - p))

    def distance_to_boundary(self, p):
        return distance_to_polyline(p, self.outer, closed=True)

    def _boundary_param(self, p):
        """(edge index, local parameter) of a point on the outer boundary."""
        best = None
        for k in range(self.n_edges):
            a, b = self.edge(k)
            d, t = point_segment_distance(p, a, b)
            if best is None or d < best[0]:
                best = (d, k, t)
        return best

    def split_by_interface(self, l):
        """Left and right sub-polygons of the outer polygon cut by interface l."""
        gam = self.interfaces[l]
        _, ka, ta = self._boundary_param(gam[0])
        _, kb, tb = self._boundary_param(gam[-1])
        n = self.n_edges

        def ccw_path(k_from, t_from, k_to, t_to):
            # boundary vertices met walking counterclockwise between two boundary points
            out = []
            k = k_from
            if k_from == k_to and t_to > t_from:
                return out
            while True:
                k = (k + 1) % n
                out.append(self.outer[k])
                if k == k_to:
                    break
            return out

        left = list(gam) + ccw_path(kb, tb, ka, ta)
        right = list(gam[::-1]) + ccw_path(ka, ta, kb, tb)
        return np.array(left), np.array(right)

    def layer_of(self, p, tol=1e-9):
        """Layer index of point p, or None when p sits on an interface."""
        p = np.asarray(p, float)
        idx = 0
        for l, gam in enumerate(self.interfaces):
            if distance_to_polyline(p, gam) <= tol:
                return None
            _, right = self.split_by_interface(l)
            if points_in_polygon(p[None, :], right)[0]:
                idx = l + 1
        return idx

    def layers_of(self, pts):
        pts = np.atleast_2d(pts)
        idx = np.zeros(len(pts), dtype=int)
        for l in range(len(self.interfaces)):
            _, right = self.split_by_interface(l)
            idx[points_in_polygon(pts, right)] = l + 1
        return idx

    def lame_at(self, layer):
        return self.layers[layer]

    def with_interfaces(self, interfaces):
        return LayeredDomain(self.outer, self.dirichlet_edges, self.measurement, tuple(interfaces),
                             self.layers, self.omega)


def _polyline_sides(gam, other_poly_left, other_poly_right, other_line, tol):
    """Classify sample points of polyline gam against another interface."""
    fr = np.linspace(0.05, 0.95, 19)
    pts = list(gam[1:-1]) + [gam[i] + t * (gam[i + 1] - gam[i]) for i in range(len(gam) - 1) for t in fr]
    left = right = 0
    for p in pts:
        if distance_to_polyline(p, other_line) <= tol:
            continue
        if points_in_polygon(np.asarray(p)[None, :], other_poly_right)[0]:
            right += 1
        elif points_in_polygon(np.asarray(p)[None, :], other_poly_left)[0]:
            left += 1
    return left, right


def validate_partition(domain, tol=1e-9):
    """Check the layered-domain invariants. Returns a report listing violations."""
    rep = ValidationReport()
    outer = domain.outer
    n_if = len(domain.interfaces)
    if len(domain.layers) != n_if + 1:
        rep.add("layer_count", f"{len(domain.layers)} layers for {n_if} interfaces")
        return rep
    if not polyline_is_simple(outer, closed=True):
        rep.add("outer", "outer boundary is not simple")
        return rep
    for k in domain.dirichlet_edges:
        if not 0 <= k < domain.n_edges:
            rep.add("dirichlet", f"edge {k} out of range")
    m = domain.measurement
    if not 0 <= m.edge < domain.n_edges:
        rep.add("measurement", "measurement edge out of range")
    elif m.edge in domain.dirichlet_edges:
        rep.add("measurement", "measurement arc must lie on the traction-free part")
    elif not 0.0 <= m.t0 < m.t1 <= 1.0:
        rep.add("measurement", "measurement arc is empty or malformed")
    for l, lp in enumerate(domain.layers):
        r = validate_lame(lp)
        for v in r.violations:
            rep.add("lame", f"layer {l}: {v.message}", (l,))
    for l in range(n_if):
        a, b = domain.layers[l], domain.layers[l + 1]
        if a.lam == b.lam and a.mu == b.mu:
            rep.add("layer_params", f"layers {l} and {l + 1} have identical Lame parameters", (l, l + 1))
    # interface geometry
    geom_ok = True
    for l, gam in enumerate(domain.interfaces):
        if len(gam) < 2 or not polyline_is_simple(gam):
            rep.add("interface", f"interface {l} is not a simple polyline", (l,))
            geom_ok = False
            continue
        ends_ok = domain.distance_to_boundary(gam[0]) <= tol and domain.distance_to_boundary(gam[-1]) <= tol
        inner = all(points_in_polygon(p[None, :], outer)[0] and domain.distance_to_boundary(p) > tol
                    for p in gam[1:-1])
        mids_inside = all(points_in_polygon((0.5 * (gam[i] + gam[i + 1]))[None, :], outer)[0]
                          for i in range(len(gam) - 1))
        if not (ends_ok and inner and mids_inside):
            rep.add("interface", f"interface {l} must run through the interior between two boundary points", (l,))
            geom_ok = False
    if not geom_ok:
        return rep
    for a in range(n_if):
        la, ra = domain.split_by_interface(a)
        for b in range(a + 1, n_if):
            gb = domain.interfaces[b]
            left, right = _polyline_sides(gb, la, ra, domain.interfaces[a], tol)
            if left and right:
                rep.add("crossing", f"interfaces {a} and {b} cross; layers overlap", (a, b))
                continue
            dmin = min(min(distance_to_polyline(p, domain.interfaces[a]) for p in gb),
                       min(distance_to_polyline(p, gb) for p in domain.interfaces[a]))
            touch = dmin <= tol
            if not touch:
                ga = domain.interfaces[a]
                for i in range(len(ga) - 1):
                    for j in range(len(gb) - 1):
                        if segments_intersect(ga[i], ga[i + 1], gb[j], gb[j + 1], tol):
                            touch = True
            if touch:
                rep.add("closure", f"layers {a} and {b + 1} share a boundary point", (a, b + 1))
            elif left and b == a + 1:
                rep.add("order", f"interface {b} lies on the wrong side of interface {a}", (a, b))
    return rep


# ----------------------------------------------------------------------------
# faults

@dataclass(frozen=True)
class Corner:
    vertex_index: int
    point: np.ndarray
    theta: float              # opening angle in (0, pi)
    layer: int
    theta_min: float          # absolute direction of the edge Gamma^- (radians)
    minus_edge: int           # fault segment index lying on Gamma^-
    plus_edge: int            # fault segment index lying on Gamma^+
    sector_side: str          # 'minus' if the sector lies in the minus region


@dataclass(frozen=True)
class Fault:
    vertices: np.ndarray
    closed: bool = False
    flip: bool = False

    def __post_init__(self):
        v = np.asarray(self.vertices, float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 2:
            raise GeometryError("fault needs at least two vertices", "/fault/vertices")
        if self.closed and len(v) < 3:
            raise GeometryError("closed fault needs at least three vertices", "/fault/vertices")
        object.__setattr__(self, "vertices", v)

    @property
    def n_segments(self):
        return len(self.vertices) if self.closed else len(self.vertices) - 1

    def segment(self, i):
        n = len(self.vertices)
        return self.vertices[i % n], self.vertices[(i + 1) % n]

    def segment_length(self, i):
        a, b = self.segment(i)
        return float(np.linalg.norm(b - a))

    @property
    def length(self):
        return sum(self.segment_length(i) for i in range(self.n_segments))

    @property
    def minus_polygon(self):
        """Polygon bounding the minus region (chord closure for open faults)."""
        return self.vertices

    def _orientation(self):
        a = signed_area(self.vertices)
        if abs(a) < 1e-14 * max(1.0, self.length) ** 2:
            return 0
        return 1 if a > 0 else -1

    def normals(self):
        """Unit normal per segment, pointing out of the minus region."""
        s = self._orientation()
        out = []
        for i in range(self.n_segments):
            a, b = self.segment(i)
            t = (b - a) / np.linalg.norm(b - a)
            left = rot90(t)
            nu = -left if s >= 0 else left   # outward of a ccw polygon is the right normal
            if s == 0:
                nu = left
            out.append(-nu if self.flip else nu)
        return np.array(out)

    def contains_minus(self, pts):
        """Membership in the minus region (vectorized)."""
        if self._orientation() == 0:
            pts = np.atleast_2d(pts)
            a, b = self.segment(0)
            nu = self.normals()[0]
            return (pts - a) @ nu < 0
        inside = points_in_polygon(pts, self.vertices)
        return ~inside if self.flip else inside

    def arc_offsets(self):
        """Arc length at the start of each segment."""
        return np.concatenate([[0.0], np.cumsum([self.segment_length(i) for i in range(self.n_segments)])])

    def translated_rotated(self, R, shift):
        return Fault(self.vertices @ np.asarray(R).T + shift, self.closed, self.flip)


def _interior_angle(prev_pt, v, next_pt, orientation):
    d1 = v - prev_pt
    d2 = next_pt - v
    turn = math.atan2(cross2(d1, d2), float(d1 @ d2))
    return math.pi - orientation * turn


def detect_corners(fault, domain=None, tol=COLLINEAR_TOL, boundary_tol=1e-9):
    """Corners of the fault with opening angle in (0, pi) and containing layer."""
    v = fault.vertices
    n = len(v)
    if fault.n_segments < 2:
        return []
    s = fault._orientation()
    if s == 0:
        s = 1
    if fault.flip:
        s = -s
    idx = range(n) if fault.closed else range(1, n - 1)
    corners = []
    for k in idx:
        prev_pt, nxt = v[(k - 1) % n], v[(k + 1) % n]
        ang = _interior_angle(prev_pt, v[k], nxt, s)   # measured inside the minus region
        if abs(ang - math.pi) <= tol:
            continue
        theta = ang if ang < math.pi else 2 * math.pi - ang
        side = "minus" if ang < math.pi else "plus"
        seg_in, seg_out = (k - 1) % fault.n_segments, k % fault.n_segments
        a_in = math.atan2(*(prev_pt - v[k])[::-1])
        a_out = math.atan2(*(nxt - v[k])[::-1])
        # sector spans counterclockwise from Gamma^- to Gamma^+
        if abs(((a_in - a_out) % (2 * math.pi)) - theta) < 1e-7:
            theta_min, minus_edge, plus_edge = a_out, seg_out, seg_in
        else:
            theta_min, minus_edge, plus_edge = a_in, seg_in, seg_out
        layer = 0
        if domain is not None:
            if domain.distance_to_boundary(v[k]) <= boundary_tol:
                raise AdmissibilityError(f"corner {k} lies on the outer boundary", "/fault/vertices")
            layer = domain.layer_of(v[k], tol=boundary_tol)
            if layer is None:
                raise AdmissibilityError(f"corner {k} lies on an interface", "/fault/vertices")
        corners.append(Corner(k, v[k].copy(), theta, layer, theta_min, minus_edge, plus_edge, side))
    return corners


def theta_matrix(theta):
    if not 0 < theta < math.pi:
        raise GeometryError(f"opening angle {theta} outside (0, pi)")
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[-c, -s], [-s, c]])


# ----------------------------------------------------------------------------
# jumps

def _poly_eval(coef, s):
    coef = np.asarray(coef)
    out = np.zeros(np.shape(s) + coef.shape[1:], dtype=complex)
    for c in coef[::-1]:
        out = out * np.asarray(s)[..., None] + c
    return out


def _poly_deriv(coef):
    coef = np.asarray(coef, dtype=complex)
    if len(coef) == 1:
        return np.zeros_like(coef)
    return coef[1:] * np.arange(1, len(coef))[:, None]


@dataclass(frozen=True)
class JumpData:
    """Per-segment polynomial jumps in arc length measured from the segment start.

    ``f[i]`` and ``g[i]`` are coefficient arrays of shape (degree+1, 2).
    ``alpha``/``beta`` are optional regularity tags per corner.
    """
    f: tuple
    g: tuple
    alpha: dict = field(default_factory=dict)
    beta: dict = field(default_factory=dict)

    def __post_init__(self):
        f = tuple(np.atleast_2d(np.asarray(c, dtype=complex)) for c in self.f)
        g = tuple(np.atleast_2d(np.asarray(c, dtype=complex)) for c in self.g)
        for c in f + g:
            if c.shape[1] != 2 or c.shape[0] > 4:
                raise GeometryError("jump polynomials must have degree <= 3 and 2 components", "/jumps")
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "g", g)

    @classmethod
    def constant(cls, n_segments, f=(0.0, 0.0), g=(0.0, 0.0)):
        return cls(tuple([np.array([f])] * n_segments), tuple([np.array([g])] * n_segments))

    @property
    def n_segments(self):
        return len(self.f)

    def f_at(self, seg, s):
        return _poly_eval(self.f[seg], s)

    def g_at(self, seg, s):
        return _poly_eval(self.g[seg], s)

    def df_at(self, seg, s):
        return _poly_eval(_poly_deriv(self.f[seg]), s)

    def check(self, fault):
        if self.n_segments != fault.n_segments or len(self.g) != fault.n_segments:
            raise GeometryError(f"jump data has {self.n_segments} segments, fault has {fault.n_segments}",
                                "/jumps")

    def is_zero(self):
        return all(not np.any(c) for c in self.f + self.g)


def corner_values(fault, jumps, corner):
    """One-sided values at a corner: dict with f, df (outward tangential), g per edge."""
    out = {}
    for key, seg in (("minus", corner.minus_edge), ("plus", corner.plus_edge)):
        L = fault.segment_length(seg)
        a, _ = fault.segment(seg)
        at_start = np.allclose(a, corner.point)
        s = 0.0 if at_start else L
        sign = 1.0 if at_start else -1.0     # derivative along the ray leaving the corner
        out[key] = dict(f=jumps.f_at(seg, s), df=sign * jumps.df_at(seg, s), g=jumps.g_at(seg, s))
    return out


@dataclass
class AdmissibilityReport:
    corners: list
    assumption_I: list
    assumption_II: list

    @property
    def overall(self):
        return bool(self.corners) and all(a or b for a, b in zip(self.assumption_I, self.assumption_II))


def check_admissibility(fault, jumps, domain=None, tol=1e-12):
    """Assumption I (f jumps at the corner) or II (flat f, g not Theta-related) per corner.

    Traction values are compared in the corner frame whose first axis is the
    Gamma^- direction, where the rotation relation takes its canonical form.
    """
    jumps.check(fault)
    corners = detect_corners(fault, domain)
    AI, AII = [], []
    for c in corners:
        vals = corner_values(fault, jumps, c)
        fm, fp = vals["minus"]["f"], vals["plus"]["f"]
        scale = max(1.0, float(np.max(np.abs(np.concatenate([fm, fp])))))
        ok_I = bool(np.max(np.abs(fm - fp)) > tol * scale)
        ok_II = False
        if not ok_I:
            flat = max(np.max(np.abs(vals["minus"]["df"])), np.max(np.abs(vals["plus"]["df"]))) <= tol
            if flat:
                R = rotation(c.theta_min)
                gm = R.T @ vals["minus"]["g"]
                gp = R.T @ vals["plus"]["g"]
                gscale = max(1.0, float(np.max(np.abs(np.concatenate([gm, gp])))))
                ok_II = bool(np.max(np.abs(gp - theta_matrix(c.theta) @ gm)) > tol * gscale)
        AI.append(ok_I)
        AII.append(ok_II)
    return AdmissibilityReport(corners, AI, AII)


# ----------------------------------------------------------------------------
# Lions-Magenes type weighted norm

def _graded_integral(fun, lo, hi, n=24):
    """Integral of fun over [lo, hi] with 0 < lo, via t = exp(y) substitution."""
    if hi <= lo:
        return 0.0
    ylo, yhi = math.log(lo), math.log(hi)
    npan = max(1, int(math.ceil(yhi - ylo)))
    edges = np.linspace(ylo, yhi, npan + 1)
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        y, w = roots_legendre(n)
        y = 0.5 * (b - a) * y + 0.5 * (a + b)
        t = np.exp(y)
        total += float(np.sum(fun(t) * t * w) * 0.5 * (b - a))
    return total


@dataclass
class WeightedNormResult:
    value: float
    estimates: list
    diverges: bool


def weighted_jump_norm(fcomp, fault=None, length=None, levels=4, n=24):
    """Estimate ||rho^{-1/2} f||_{L^2} on an open fault.

    ``fcomp(s)`` returns the (vector or scalar) jump at arc length s.  The
    weight is rho(s) = min(s, L - s, L/4).  Level k truncates a neighbourhood
    of width eps_k = (L/4) 10^(-2^k) around each endpoint; divergence is flagged
    when the estimate grows by more than a factor 2 over three refinements.
    """
    if fault is not None:
        if fault.closed:
            raise GeometryError("weighted norm is defined for open faults")
        L = fault.length
        breaks = list(fault.arc_offsets())
    else:
        L = float(length)
        breaks = [0.0, L]
    cap = L / 4

    def sq(s):
        v = np.asarray(fcomp(s))
        if v.ndim > np.ndim(s):
            return np.sum(np.abs(v) ** 2, axis=-1)
        return np.abs(v) ** 2

    def middle():
        pts = sorted(set([cap, L - cap] + [b for b in breaks if cap < b < L - cap]))
        tot = 0.0
        for a, b in zip(pts[:-1], pts[1:]):
            x, w = roots_legendre(n)
            x = 0.5 * (b - a) * x + 0.5 * (a + b)
            tot += float(np.sum(sq(x) * w) * 0.5 * (b - a)) / cap
        return tot

    mid = middle()
    inner = [b for b in breaks if 0 < b < cap]
    inner_r = [L - b for b in breaks if L - cap < b < L]
    estimates = []
    for k in range(1, levels + 1):
        eps = cap * 10.0 ** (-(2 ** k))
        tot = mid
        for pts, mirror in ((inner, False), (inner_r, True)):
            cuts = sorted(set([eps, cap] + [p for p in pts if p > eps]))
            for a, b in zip(cuts[:-1], cuts[1:]):
                if mirror:
                    tot += _graded_integral(lambda t: sq(L - t) / t, a, b, n)
                else:
                    tot += _graded_integral(lambda t: sq(t) / t, a, b, n)
        estimates.append(math.sqrt(max(tot, 0.0)))
    diverges = False
    for i in range(len(estimates) - 3):
        lo = estimates[i]
        if lo > 0 and estimates[i + 3] > 2 * lo:
            diverges = True
    return WeightedNormResult(estimates[-1], estimates, diverges)


# ----------------------------------------------------------------------------
# JSON configuration

def _require(cfg, key, pointer):
    if key not in cfg:
        raise GeometryError(f"missing key '{key}'", f"{pointer}/{key}")
    return cfg[key]


def _points(value, pointer, min_len=2):
    try:
        arr = np.asarray(value, float)
    except (TypeError, ValueError):
        raise GeometryError("expected a list of [x, y] pairs", pointer) from None
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < min_len or not np.all(np.isfinite(arr)):
        raise GeometryError("expected a list of [x, y] pairs", pointer)
    return arr


def domain_from_config(cfg):
    outer = _points(_require(cfg, "outer", ""), "/outer", 3)
    if signed_area(outer) < 0:
        outer = outer[::-1]
    layers_cfg = _require(cfg, "layers", "")
    if not isinstance(layers_cfg, list) or not layers_cfg:
        raise GeometryError("layers must be a nonempty list", "/layers")
    layers = []
    for i, lc in enumerate(layers_cfg):
        try:
            layers.append(LameParameters(float(lc["lambda"]), float(lc["mu"])))
        except (KeyError, TypeError, ValueError):
            raise GeometryError("layer needs numeric 'lambda' and 'mu'", f"/layers/{i}") from None
    interfaces = [_points(g, f"/interfaces/{i}") for i, g in enumerate(cfg.get("interfaces", []))]
    dirichlet = cfg.get("dirichlet_arcs", [])
    m = _require(cfg, "measurement_arc", "")
    try:
        arc = MeasurementArc(int(m["edge"]), float(m.get("t0", 0.0)), float(m.get("t1", 1.0)))
    except (KeyError, TypeError, ValueError):
        raise GeometryError("measurement arc needs an 'edge' index", "/measurement_arc") from None
    omega = float(cfg.get("omega", 0.0))
    if omega < 0:
        raise GeometryError("omega must be nonnegative", "/omega")
    dom = LayeredDomain(outer, tuple(dirichlet), arc, tuple(interfaces), tuple(layers), omega)
    rep = validate_partition(dom)
    if not rep.ok:
        v = rep.violations[0]
        ptr = {"lame": "/layers", "layer_params": "/layers", "layer_count": "/layers",
               "measurement": "/measurement_arc", "dirichlet": "/dirichlet_arcs",
               "outer": "/outer"}.get(v.code, "/interfaces")
        raise GeometryError(v.message, ptr)
    return dom


def fault_from_config(cfg):
    fc = _require(cfg, "fault", "")
    verts = _points(_require(fc, "vertices", "/fault"), "/fault/vertices")
    return Fault(verts, bool(fc.get("closed", False)), bool(fc.get("flip", False)))


def jumps_from_config(cfg, fault):
    jc = cfg.get("jumps")
    if jc is None:
        return JumpData.constant(fault.n_segments)

    def polys(key):
        raw = jc.get(key)
        if raw is None:
            return [np.zeros((1, 2))] * fault.n_segments
        if len(raw) != fault.n_segments:
            raise GeometryError(f"need one polynomial per fault segment ({fault.n_segments})", f"/jumps/{key}")
        out = []
        for i, c in enumerate(raw):
            arr = np.asarray(c, float)
            if arr.ndim == 1:
                arr = arr[None, :]
            if arr.ndim != 2 or arr.shape[1] != 2:
                raise GeometryError("segment polynomial must be a list of [cx, cy] coefficients",
                                    f"/jumps/{key}/{i}")
            out.append(arr)
        return out

    return JumpData(tuple(polys("f")), tuple(polys("g")))


def load_geometry(cfg):
    """(domain, fault, jumps) from a configuration mapping."""
    dom = domain_from_config(cfg)
    fault = fault_from_config(cfg) if "fault" in cfg else None
    jumps = jumps_from_config(cfg, fault) if fault is not None else None
    return dom, fault, jumps
