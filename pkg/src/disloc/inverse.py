"""Single-measurement experiments: distinguishability, geometry reconstruction, jump relations.

The reconstruction is a plain finite-difference Gauss-Newton fit of polygon
vertices to one boundary measurement.  Jacobian columns come from solves on a
morphed copy of the current mesh (same topology, fault nodes moved and the
motion extended harmonically), so small vertex steps change the discrete
forward map smoothly; the mesh is regenerated only when morphing would
degrade it.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import json
import math
import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .forward_solver import solve_system, measure, SolverError
from .geometry import (Fault, GeometryError, JumpData, LayeredDomain, check_admissibility, cross2,
                       distance_to_polyline, points_in_polygon, polyline_is_simple,
                       rotation, segments_intersect, signed_area, theta_matrix)
from .mesh import generate_mesh

log = logging.getLogger(__name__)


class InverseError(RuntimeError):
    pass


# ----------------------------------------------------------------------------
# parameterization

def constant_jumps(f=(0.0, 0.0), g=(0.0, 0.0)):
    """Jump model: the same constant f and g on every segment."""
    return lambda fault: JumpData.constant(fault.n_segments, f, g)


def normal_traction(p=1.0, f=(0.0, 0.0)):
    """Jump model: constant f, g = p nu on each segment (nu out of the minus region)."""
    def model(fault):
        nus = fault.normals()
        return JumpData(tuple([np.array([f])] * fault.n_segments), tuple(np.array([p * nu]) for nu in nus))
    return model


def segment_constants(f_list, g_list=None, pressure=0.0):
    """Jump model: per-segment constant f (and g), plus an optional normal traction p nu."""
    def model(fault):
        nus = fault.normals()
        gl = [np.zeros(2)] * fault.n_segments if g_list is None else g_list
        return JumpData(tuple(np.array([np.asarray(f, dtype=complex)]) for f in f_list),
                        tuple(np.array([np.asarray(g, dtype=complex) + pressure * nu]) for g, nu in zip(gl, nus)))
    return model


@dataclass
class FaultParameterization:
    """Vertices of an open polyline or a closed convex polygon, flattened (x0, y0, x1, y1, ...)."""
    n_vertices: int
    closed: bool
    jump_model: callable
    margin: float = 0.02

    def decode(self, p):
        v = np.asarray(p, float).reshape(self.n_vertices, 2)
        return Fault(v, self.closed)

    @staticmethod
    def encode(fault):
        return np.asarray(fault.vertices, float).ravel().copy()

    def jumps(self, fault):
        return self.jump_model(fault)

    def validate(self, p, domain):
        """(ok, reason) for the decoded geometry."""
        v = np.asarray(p, float).reshape(self.n_vertices, 2)
        if not np.all(np.isfinite(v)):
            return False, "non-finite vertex"
        n_seg = self.n_vertices if self.closed else self.n_vertices - 1
        segs = [(v[i], v[(i + 1) % self.n_vertices]) for i in range(n_seg)]
        if min(np.linalg.norm(b - a) for a, b in segs) < self.margin:
            return False, "segment shorter than the margin"
        if not polyline_is_simple(v, self.closed):
            return False, "self-intersecting"
        if not np.all(points_in_polygon(v, domain.outer)):
            return False, "vertex outside the domain"
        if min(domain.distance_to_boundary(x) for x in v) < self.margin:
            return False, "too close to the outer boundary"
        for gam in domain.interfaces:
            for a, b in segs:
                for j in range(len(gam) - 1):
                    if segments_intersect(a, b, gam[j], gam[j + 1]):
                        return False, "crosses an interface"
            if min(distance_to_polyline(x, gam) for x in v) < self.margin:
                return False, "too close to an interface"
        layers = set(domain.layers_of(v).tolist()) if domain.interfaces else {0}
        if len(layers) != 1:
            return False, "fault spans several layers"
        if self.closed:
            if signed_area(v) <= 0:
                return False, "closed fault must be counterclockwise"
            for i in range(self.n_vertices):
                a, b, c = v[i - 1], v[i], v[(i + 1) % self.n_vertices]
                if cross2(b - a, c - b) <= 0:
                    return False, "closed fault must be strictly convex"
        else:
            if abs(signed_area(v)) < 1e-3 * self.margin ** 2:
                return False, "open fault nearly straight; minus side undefined"
        return True, ""


# ----------------------------------------------------------------------------
# misfit

def trapezoid_weights(s):
    s = np.asarray(s, float)
    w = np.zeros_like(s)
    d = np.diff(s)
    w[:-1] += d / 2
    w[1:] += d / 2
    return w


def misfit(m1, m2):
    """Trapezoidal L2 norm of the difference over the measurement arc."""
    if len(m1.s) != len(m2.s) or not np.allclose(m1.s, m2.s, rtol=0, atol=1e-12):
        raise ValueError("measurements are on different sampling grids")
    d = np.abs(np.asarray(m1.u) - np.asarray(m2.u)) ** 2
    return float(math.sqrt(trapezoid_weights(m1.s) @ d.sum(axis=1)))


def _residual_vector(m, data):
    w = np.sqrt(trapezoid_weights(data.s))
    d = (np.asarray(m.u) - np.asarray(data.u)) * w[:, None]
    return np.concatenate([d.real.ravel(), d.imag.ravel()])


# ----------------------------------------------------------------------------
# forward map

def forward_map(param, p, domain, h, n_samples=101, mesh=None, dirichlet=None, check_resonance=True):
    """Boundary measurement for the decoded geometry (mesh generated unless given)."""
    ok, why = param.validate(p, domain)
    if not ok:
        raise GeometryError(f"invalid parameters: {why}", "/fault/vertices")
    fault = param.decode(p)
    try:
        if mesh is None:
            mesh = generate_mesh(domain, fault, h)
        field = solve_system(mesh, domain, fault, param.jumps(fault), dirichlet, check_resonance=check_resonance)
    except (GeometryError, SolverError) as exc:
        raise type(exc)(f"{exc} (parameters {np.round(np.asarray(p), 6).tolist()})") from exc
    return measure(field, domain, n_samples)


def _laplacian(nodes, tris):
    P = nodes[tris]
    d1, d2 = P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    rows, cols, vals = [], [], []
    for i in range(3):
        for j in range(3):
            ei = P[:, (i + 2) % 3] - P[:, (i + 1) % 3]
            ej = P[:, (j + 2) % 3] - P[:, (j + 1) % 3]
            rows.append(tris[:, i])
            cols.append(tris[:, j])
            vals.append(np.sum(ei * ej, axis=1) / (4 * area))
    n = len(nodes)
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


class MeshMorpher:
    """Move the fault of a fixed mesh to nearby vertex positions by harmonic extension."""

    def __init__(self, mesh, fault):
        self.mesh, self.fault = mesh, fault
        n = mesh.n_nodes
        seg_len = np.array([fault.segment_length(i) for i in range(fault.n_segments)])
        # per fault node: (segment, relative position along it)
        fn, seg, rel = [], [], []
        for e in range(len(mesh.fault_plus)):
            sg = int(mesh.fault_segment[e])
            for k in range(2):
                for node in (mesh.fault_plus[e, k], mesh.fault_minus[e, k]):
                    fn.append(int(node))
                    seg.append(sg)
                    rel.append(mesh.fault_s[e, k] / seg_len[sg])
        fn = np.array(fn)
        _, first = np.unique(fn, return_index=True)
        self.fault_nodes = fn[first]
        self.seg = np.array(seg)[first]
        self.rel = np.array(rel)[first]
        fixed = np.zeros(n, bool)
        fixed[mesh.boundary_edges.ravel()] = True
        if len(mesh.interface_edges):
            fixed[mesh.interface_edges.ravel()] = True
        fixed[self.fault_nodes] = True
        self.fixed = fixed
        self.free = np.flatnonzero(~fixed)
        L = _laplacian(mesh.nodes, mesh.triangles)
        self.L_ff = L[self.free][:, self.free].tocsc()
        self.L_fb = L[self.free][:, np.flatnonzero(fixed)]
        self._lu = spla.splu(self.L_ff)
        self.fixed_idx = np.flatnonzero(fixed)

    def morph(self, new_fault):
        m = self.mesh
        disp = np.zeros((m.n_nodes, 2))
        a = np.array([new_fault.segment(s)[0] for s in self.seg])
        b = np.array([new_fault.segment(s)[1] for s in self.seg])
        target = a + self.rel[:, None] * (b - a)
        disp[self.fault_nodes] = target - m.nodes[self.fault_nodes]
        rhs = -self.L_fb @ disp[self.fixed_idx]
        disp[self.free] = np.column_stack([self._lu.solve(rhs[:, 0]), self._lu.solve(rhs[:, 1])])
        nodes = m.nodes + disp
        nodes[self.fault_nodes] = target
        seg_len = np.array([new_fault.segment_length(i) for i in range(new_fault.n_segments)])
        old_len = np.array([self.fault.segment_length(i) for i in range(self.fault.n_segments)])
        fault_s = m.fault_s * (seg_len / old_len)[m.fault_segment][:, None]
        out = replace(m, nodes=nodes, fault_s=fault_s)
        return out

    @staticmethod
    def quality_ok(mesh, min_angle=10.0):
        return bool(np.all(mesh.areas() > 0) and mesh.min_angle() >= min_angle)


# ----------------------------------------------------------------------------
# distinguishability

@dataclass
class Configuration:
    domain: LayeredDomain
    fault: Fault
    jumps: JumpData

    def admissible(self):
        return check_admissibility(self.fault, self.jumps, self.domain).overall


def _measure_config(cfg, h, n_samples, dirichlet=None, grade=False):
    mesh = generate_mesh(cfg.domain, cfg.fault, h, grade_corners=grade)
    field = solve_system(mesh, cfg.domain, cfg.fault, cfg.jumps, dirichlet)
    return measure(field, cfg.domain, n_samples)


def calibrated_floor(cfg, h, factor=10.0, n_samples=101, grade=False):
    """factor x misfit between the forward map at h and at h/2."""
    return factor * misfit(_measure_config(cfg, h, n_samples, grade=grade),
                           _measure_config(cfg, h / 2, n_samples, grade=grade))


def distinguishability_test(cfg_a, cfg_b, h=0.02, floor=None, n_samples=101, require_admissible=True,
                            grade=False):
    """Misfit between the two forward measurements against a floor.

    The floor defaults to 10x the forward-map convergence error of ``cfg_a``
    (misfit between its measurements at h and h/2).
    """
    if require_admissible:
        for name, c in (("a", cfg_a), ("b", cfg_b)):
            if not c.admissible():
                raise GeometryError(f"configuration {name} is not admissible", f"/{name}")
    same = (np.array_equal(cfg_a.fault.vertices, cfg_b.fault.vertices)
            and len(cfg_a.domain.interfaces) == len(cfg_b.domain.interfaces)
            and all(np.array_equal(x, y) for x, y in zip(cfg_a.domain.interfaces, cfg_b.domain.interfaces)))
    ma = _measure_config(cfg_a, h, n_samples, grade=grade)
    mb = _measure_config(cfg_b, h, n_samples, grade=grade)
    val = misfit(ma, mb)
    if same:
        return {"misfit": val, "floor": None, "threshold_pass": None, "applicable": False}
    if floor is None:
        floor = calibrated_floor(cfg_a, h, n_samples=n_samples, grade=grade)
    return {"misfit": val, "floor": float(floor), "threshold_pass": bool(val > floor), "applicable": True}


# ----------------------------------------------------------------------------
# reconstruction

@dataclass
class ReconstructionResult:
    params: np.ndarray
    misfit_history: list
    steps: list = field(default_factory=list)   # (base misfit, accepted misfit) per accepted step
    n_solves: int = 0
    converged: bool = False
    reason: str = ""
    trace: list = field(default_factory=list)

    def to_json(self, truth=None):
        out = {"parameters": self.params.tolist(), "misfit_history": self.misfit_history,
               "n_solves": self.n_solves, "converged": self.converged, "reason": self.reason}
        if truth is not None:
            t = np.asarray(truth).reshape(-1, 2)
            r = self.params.reshape(-1, 2)
            out["recovered_vs_truth"] = [{"truth": a.tolist(), "recovered": b.tolist(),
                                          "error": float(np.linalg.norm(a - b))} for a, b in zip(t, r)]
        return json.dumps(out, indent=2)

    def history_csv(self):
        return "iteration,misfit\n" + "".join(f"{i},{m:.17g}\n" for i, m in enumerate(self.misfit_history))


class _Budget:
    def __init__(self, n):
        self.left = n
        self.used = 0

    def take(self, k=1):
        if self.left < k:
            raise _OutOfBudget
        self.left -= k
        self.used += k


class _OutOfBudget(Exception):
    pass


def reconstruct(measured, param, init, domain, h, max_solves=200, fd_step=1e-4, n_samples=None,
                dirichlet=None, workers=1, gtol=1e-8, max_halvings=6, damping=1e-6):
    """Fit vertex parameters to one measurement by finite-difference Gauss-Newton.

    Each accepted step lowers the misfit evaluated on the same (morphed) mesh.
    Stops when the gradient falls below ``gtol`` times its initial norm, when
    the line search fails, or when ``max_solves`` forward solves are spent.
    """
    n_samples = len(measured.s) if n_samples is None else n_samples
    p = np.asarray(init, float).copy()
    ok, why = param.validate(p, domain)
    if not ok:
        raise InverseError(f"initial parameters invalid: {why}")
    step_fd = fd_step * domain.diameter
    budget = _Budget(max_solves)
    res = ReconstructionResult(p.copy(), [])
    g0 = None
    morpher = None

    def solve_on(mesh, q):
        budget.take()
        fault = param.decode(q)
        fld = solve_system(mesh, domain, fault, param.jumps(fault), dirichlet, check_resonance=False)
        return _residual_vector(measure(fld, domain, n_samples), measured)

    try:
        while True:
            if morpher is None:
                fault = param.decode(p)
                mesh = generate_mesh(domain, fault, h)
                morpher = MeshMorpher(mesh, fault)
            r0 = solve_on(morpher.mesh if np.array_equal(param.encode(morpher.fault), p)
                          else morpher.morph(param.decode(p)), p)
            f0 = float(np.linalg.norm(r0))
            if not res.misfit_history:
                res.misfit_history.append(f0)
            cols = []

            def column(j):
                q = p.copy()
                q[j] += step_fd
                if not param.validate(q, domain)[0]:
                    q[j] -= 2 * step_fd
                    sgn = -1.0
                else:
                    sgn = 1.0
                m = morpher.morph(param.decode(q))
                return sgn * (solve_on(m, q) - r0) / step_fd

            if workers > 1:
                with ThreadPoolExecutor(workers) as ex:
                    cols = list(ex.map(column, range(len(p))))
            else:
                cols = [column(j) for j in range(len(p))]
            J = np.column_stack(cols)
            grad = J.T @ r0
            gn = float(np.linalg.norm(grad))
            if g0 is None:
                g0 = gn
            if gn <= gtol * g0 or f0 == 0.0:
                res.converged, res.reason = True, "gradient tolerance"
                break
            JtJ = J.T @ J
            lam = damping * np.trace(JtJ) / len(p)
            dp = -np.linalg.solve(JtJ + lam * np.eye(len(p)), grad)
            accepted = False
            alpha = 1.0
            for _ in range(max_halvings):
                q = p + alpha * dp
                if param.validate(q, domain)[0]:
                    m = morpher.morph(param.decode(q))
                    if MeshMorpher.quality_ok(m):
                        fq = float(np.linalg.norm(solve_on(m, q)))
                        if fq < f0:
                            accepted = True
                            break
                    else:
                        # the step leaves the morphing range: remesh and retry from here
                        res.trace.append(("remesh", q.tolist()))
                        fault_q = param.decode(q)
                        mesh_q = generate_mesh(domain, fault_q, h)
                        fq = float(np.linalg.norm(solve_on(mesh_q, q)))
                        if fq < f0:
                            accepted = True
                            morpher = MeshMorpher(mesh_q, fault_q)
                            break
                else:
                    res.trace.append(("invalid", q.tolist()))
                alpha *= 0.5
            if not accepted:
                res.reason = "line search failed"
                res.converged = True
                break
            res.steps.append((f0, fq))
            res.misfit_history.append(fq)
            p = q
            res.params = p.copy()
            if not MeshMorpher.quality_ok(morpher.morph(param.decode(p)), 15.0):
                morpher = None
            if abs(f0 - fq) <= 1e-10 * f0:
                res.converged, res.reason = True, "stagnation"
                break
    except _OutOfBudget:
        res.reason = "forward-solve budget exhausted"
    res.n_solves = budget.used
    res.params = p.copy()
    return res


def perturbed_init(truth, fault_scale, rel=0.1, seed=0):
    """Each vertex displaced by rel * fault_scale in a random direction."""
    rng = np.random.default_rng(seed)
    v = np.asarray(truth, float).reshape(-1, 2)
    ang = rng.uniform(0, 2 * math.pi, len(v))
    return (v + rel * fault_scale * np.column_stack([np.cos(ang), np.sin(ang)])).ravel()


def fault_diameter(vertices):
    v = np.asarray(vertices, float).reshape(-1, 2)
    return float(max(np.linalg.norm(a - b) for a in v for b in v))


# ----------------------------------------------------------------------------
# jump relations on a shared polygon

def corner_relation_matrices(vertices, relation="reflection"):
    """T_k with (g difference on segment k+1) = T_k (g difference on segment k).

    Segment k runs from vertex k to vertex k+1, so segments k and k+1 meet at
    vertex k+1.  With the polygon counterclockwise the sector at a convex vertex
    starts on the ray of segment k+1 and ends on the ray of segment k.  For
    "reflection" T_k is the corner matrix Theta (an involution, so the direction
    of travel is immaterial); for "rotation" T_k is the inverse of
    -Rot(theta), the relation forced by the probe identity.
    """
    v = np.asarray(vertices, float)
    if signed_area(v) < 0:
        raise GeometryError("polygon must be counterclockwise")
    m = len(v)
    mats = []
    for k in range(m):
        x = v[(k + 1) % m]
        a = v[k] - x                      # ray of segment k
        b = v[(k + 2) % m] - x            # ray of segment k+1
        th_min = math.atan2(b[1], b[0])
        theta = (math.atan2(a[1], a[0]) - th_min) % (2 * math.pi)
        if not 0 < theta < math.pi:
            raise GeometryError("relation check needs a convex polygon")
        if relation == "reflection":
            R = rotation(th_min)
            T = R @ theta_matrix(theta) @ R.T
        elif relation == "rotation":
            c, s = math.cos(theta), math.sin(theta)
            T = np.linalg.inv(-np.array([[c, -s], [s, c]]))
        else:
            raise ValueError("relation must be 'reflection' or 'rotation'")
        mats.append(T)
    return mats


def _constant_segments(vals, name):
    arr = []
    for c in vals:
        c = np.atleast_2d(np.asarray(c, dtype=complex))
        if c.shape[0] > 1 and np.any(c[1:] != 0):
            raise GeometryError(f"{name} is not piecewise constant")
        arr.append(c[0])
    return np.array(arr)


def jump_relation_check(vertices, f1, f2, g1, g2, relation="reflection"):
    """Maximal cyclic violation of the f- and g-difference relations on a closed polygon.

    f1, f2, g1, g2 are per-segment constants (or coefficient arrays with zero
    higher-order terms).
    """
    v = np.asarray(vertices, float)
    m = len(v)
    df = _constant_segments(f1, "f1") - _constant_segments(f2, "f2")
    dg = _constant_segments(g1, "g1") - _constant_segments(g2, "g2")
    if len(df) != m or len(dg) != m:
        raise GeometryError("one value per polygon segment expected")
    T = corner_relation_matrices(v, relation)
    vf = [float(np.linalg.norm(df[(k + 1) % m] - df[k])) for k in range(m)]
    vg = [float(np.linalg.norm(dg[(k + 1) % m] - T[k] @ dg[k])) for k in range(m)]
    prod = np.eye(2)
    for Tk in T:
        prod = Tk @ prod
    fixed_dim = int(np.sum(np.abs(np.linalg.eigvals(prod) - 1) < 1e-10))
    return {"f_violation": max(vf), "g_violation": max(vg), "f_per_corner": vf, "g_per_corner": vg,
            "cycle_product": prod, "fixed_space_dim": fixed_dim, "relation": relation}


def generate_consistent(vertices, df0, dg0, relation="reflection"):
    """Per-segment differences built by applying the relations from segment 0.

    Returns (df, dg, closure) where closure is the mismatch when the cycle
    returns to segment 0; it vanishes only when dg0 lies in the fixed space of
    the cycle product.
    """
    v = np.asarray(vertices, float)
    m = len(v)
    T = corner_relation_matrices(v, relation)
    df = np.array([np.asarray(df0, dtype=complex)] * m)
    dg = [np.asarray(dg0, dtype=complex)]
    for k in range(m - 1):
        dg.append(T[k] @ dg[-1])
    closure = float(np.linalg.norm(T[m - 1] @ dg[-1] - dg[0]))
    return df, np.array(dg), closure


def cycle_fixed_space(vertices, relation="reflection"):
    """Orthonormal basis of the starting g-differences that close the cycle."""
    T = corner_relation_matrices(vertices, relation)
    prod = np.eye(2)
    for Tk in T:
        prod = Tk @ prod
    _, s, vt = np.linalg.svd(prod - np.eye(2))
    return vt[s < 1e-10]
