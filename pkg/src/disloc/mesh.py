"""Fault- and interface-conforming triangulations with split nodes along the fault.

The triangulation itself comes from Shewchuk's Triangle (constrained Delaunay
with quality refinement, via the ``triangle`` package).  Everything after
that is local: layer tagging, node duplication across the fault, red
refinement and export.

Node duplication: every fault node except the tips of an open fault gets a
second copy.  The original index is the "plus" copy, the new one the "minus"
copy; triangles on the minus side of the fault are rewired to minus copies.
"""
from dataclasses import dataclass, replace
import math

import numpy as np
import triangle

from .geometry import GeometryError, points_in_polygon, point_segment_distance

OUTER_MARK = 10
INTERFACE_MARK = 1000
FAULT_MARK = 2000


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray             # (N, 2), duplicated copies included
    triangles: np.ndarray         # (M, 3)
    layer: np.ndarray             # (M,)
    minus: np.ndarray             # (M,) bool, triangle lies in the minus region of the fault
    pairs: np.ndarray             # (P, 2) node ids (plus copy, minus copy)
    fault_plus: np.ndarray        # (E, 2) plus-side node ids of each fault edge
    fault_minus: np.ndarray       # (E, 2) minus-side node ids
    fault_segment: np.ndarray     # (E,) fault segment index
    fault_s: np.ndarray           # (E, 2) arc length of the endpoints within their segment
    boundary_edges: np.ndarray    # (B, 2)
    boundary_outer: np.ndarray    # (B,) outer edge index
    boundary_dirichlet: np.ndarray  # (B,) bool
    boundary_measure: np.ndarray  # (B,) bool, edge lies on the measurement arc
    interface_edges: np.ndarray   # (I, 2)
    interface_index: np.ndarray   # (I,)
    tips: np.ndarray              # node ids of undoubled fault tips
    h: float
    level: int = 0

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def areas(self):
        p = self.nodes[self.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def min_angle(self):
        p = self.nodes[self.triangles]
        out = np.inf
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            cosang = np.sum(a * b, axis=1) / (np.linalg.norm(a, axis=1) * np.linalg.norm(b, axis=1))
            out = min(out, float(np.degrees(np.min(np.arccos(np.clip(cosang, -1, 1))))))
        return out

    def pair_jump_nodes(self):
        """For each pair, the list of (fault edge, endpoint) incidences (for jump evaluation)."""
        plus_to_pair = {int(p): i for i, p in enumerate(self.pairs[:, 0])}
        inc = [[] for _ in range(len(self.pairs))]
        for e in range(len(self.fault_plus)):
            for k in range(2):
                i = plus_to_pair.get(int(self.fault_plus[e, k]))
                if i is not None:
                    inc[i].append((e, k))
        return inc

    def export(self):
        """Plain-text export with deterministic ordering."""
        lines = [str(self.n_nodes)]
        lines += [f"{x:.17g} {y:.17g}" for x, y in self.nodes]
        lines.append(str(self.n_triangles))
        lines += [f"{a} {b} {c} {l}" for (a, b, c), l in zip(self.triangles, self.layer)]
        lines.append(str(len(self.fault_plus)))
        lines += [f"{e} {p[0]} {p[1]} {m[0]} {m[1]}"
                  for e, (p, m) in enumerate(zip(self.fault_plus, self.fault_minus))]
        return "\n".join(lines) + "\n"


# ----------------------------------------------------------------------------
# PSLG assembly

class _PointSet:
    def __init__(self, tol):
        self.pts = []
        self.tol = tol

    def add(self, p):
        p = np.asarray(p, float)
        for i, q in enumerate(self.pts):
            if np.linalg.norm(p - q) <= self.tol:
                return i
        self.pts.append(p)
        return len(self.pts) - 1


def _check_fault(domain, fault, tol):
    v = fault.vertices
    n = len(v)
    segs = [(v[i], v[(i + 1) % n]) for i in range(fault.n_segments)]
    for p in v:
        if domain.distance_to_boundary(p) <= tol or not points_in_polygon(p[None, :], domain.outer)[0]:
            raise GeometryError("fault touches boundary", "/fault/vertices")
    for a, b in segs:
        for k in range(domain.n_edges):
            c, d = domain.edge(k)
            if _segs_close(a, b, c, d, tol):
                raise GeometryError("fault touches boundary", "/fault/vertices")
    for l, gam in enumerate(domain.interfaces):
        for a, b in segs:
            for j in range(len(gam) - 1):
                if _segs_close(a, b, gam[j], gam[j + 1], tol):
                    raise GeometryError(f"fault meets interface {l}; faults must lie inside one layer",
                                        "/fault/vertices")
    for i, (a, b) in enumerate(segs):
        if np.linalg.norm(b - a) < tol:
            raise GeometryError(f"fault segment {i} is shorter than the geometric tolerance", "/fault/vertices")


def _segs_close(a, b, c, d, tol):
    from .geometry import segments_intersect
    return segments_intersect(a, b, c, d, tol)


def _boundary_points(domain, tol):
    """Extra points on each outer edge (measurement endpoints, interface ends) as (edge, t, point)."""
    extra = {k: [] for k in range(domain.n_edges)}
    m = domain.measurement
    a, b = domain.edge(m.edge)
    for t in (m.t0, m.t1):
        if 0 < t < 1:
            extra[m.edge].append(t)
    for gam in domain.interfaces:
        for p in (gam[0], gam[-1]):
            best = min(range(domain.n_edges), key=lambda k: point_segment_distance(p, *domain.edge(k))[0])
            d, t = point_segment_distance(p, *domain.edge(best))
            if tol < t * np.linalg.norm(np.subtract(*domain.edge(best))) and t < 1 - 1e-14:
                extra[best].append(t)
    return extra


def build_pslg(domain, fault, tol):
    ps = _PointSet(tol)
    segs, marks = [], []
    extra = _boundary_points(domain, tol)
    for k in range(domain.n_edges):
        a, b = domain.edge(k)
        ts = sorted(set([0.0, 1.0] + extra[k]))
        ids = [ps.add(a + t * (b - a)) for t in ts]
        for i, j in zip(ids[:-1], ids[1:]):
            if i != j:
                segs.append((i, j))
                marks.append(OUTER_MARK + k)
    for l, gam in enumerate(domain.interfaces):
        ids = [ps.add(p) for p in gam]
        for i, j in zip(ids[:-1], ids[1:]):
            segs.append((i, j))
            marks.append(INTERFACE_MARK + l)
    if fault is not None:
        ids = [ps.add(p) for p in fault.vertices]
        for s in range(fault.n_segments):
            segs.append((ids[s], ids[(s + 1) % len(ids)]))
            marks.append(FAULT_MARK + s)
    return np.array(ps.pts), np.array(segs, dtype=int), np.array(marks, dtype=int)


def _graded_areas(verts, tris, corners, h, factor=0.5, rings=3):
    """Per-triangle maximal area for geometric grading towards corner points."""
    cen = verts[tris].mean(axis=1)
    size = np.full(len(tris), h)
    for c in corners:
        r = np.linalg.norm(cen - c, axis=1)
        ring = np.floor(r / h).astype(int)
        local = h * factor ** np.clip(rings - ring, 0, rings)
        size = np.minimum(size, local)
    return math.sqrt(3) / 4 * size ** 2


def generate_mesh(domain, fault, h, grade_corners=False, min_angle=20.0):
    """Quality triangulation conforming to the outer boundary, interfaces and fault."""
    if not h > 0:
        raise GeometryError("h must be positive")
    tol = 1e-6 * domain.diameter
    if fault is not None:
        _check_fault(domain, fault, tol)
    verts, segs, marks = build_pslg(domain, fault, 1e-12 * domain.diameter)
    lengths = np.linalg.norm(verts[segs[:, 1]] - verts[segs[:, 0]], axis=1)
    if np.any(lengths < tol):
        raise GeometryError("geometry too fine: a constraint segment is below 1e-6 of the domain diameter")
    area = math.sqrt(3) / 4 * h * h
    # Triangle's switch parser does not read exponent notation
    opts = f"pq{min_angle:g}a{np.format_float_positional(area, trim='-')}Q"
    t = triangle.triangulate({"vertices": verts, "segments": segs, "segment_markers": marks[:, None]}, opts)
    if grade_corners and fault is not None:
        from .geometry import detect_corners
        corners = [c.point for c in detect_corners(fault)]
        if not fault.closed:
            corners += [fault.vertices[0], fault.vertices[-1]]     # tips carry the strongest singularity
        for _ in range(8):
            target = _graded_areas(t["vertices"], t["triangles"], corners, h)
            cur = _tri_areas(t["vertices"], t["triangles"])
            if np.all(cur <= target * (1 + 1e-9)):
                break
            t["triangle_max_area"] = target
            t = triangle.triangulate(t, f"rpq{min_angle:g}aQ")
    return _finish(domain, fault, t, h)


def _tri_areas(v, tris):
    p = v[tris]
    d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
    return 0.5 * np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _finish(domain, fault, t, h):
    V = np.asarray(t["vertices"], float)
    T = np.asarray(t["triangles"], int)
    S = np.asarray(t["segments"], int)
    SM = np.asarray(t["segment_markers"], int).ravel()
    # orient triangles counterclockwise
    p = V[T]
    det = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    T[det < 0] = T[det < 0][:, [0, 2, 1]]
    cen = V[T].mean(axis=1)
    layer = domain.layers_of(cen)

    bmask = (SM >= OUTER_MARK) & (SM < INTERFACE_MARK)
    imask = (SM >= INTERFACE_MARK) & (SM < FAULT_MARK)
    fmask = SM >= FAULT_MARK
    bedges = S[bmask]
    bouter = SM[bmask] - OUTER_MARK
    bdir = np.isin(bouter, domain.dirichlet_edges)
    bmeas = np.zeros(len(bedges), bool)
    m = domain.measurement
    a, b = domain.edge(m.edge)
    L2 = float((b - a) @ (b - a))
    for i, (e, k) in enumerate(zip(bedges, bouter)):
        if k == m.edge:
            tm = float((V[e].mean(axis=0) - a) @ (b - a)) / L2
            bmeas[i] = m.t0 <= tm <= m.t1

    if fault is None:
        empty2 = np.zeros((0, 2), int)
        return Mesh(V, T, layer, np.zeros(len(T), bool), empty2, empty2, empty2, np.zeros(0, int),
                    np.zeros((0, 2)), bedges, bouter, bdir, bmeas, S[imask], SM[imask] - INTERFACE_MARK,
                    np.zeros(0, int), float(h))

    fedges = S[fmask]
    fseg = SM[fmask] - FAULT_MARK
    # arc parameter of edge endpoints within their segment
    fs = np.zeros((len(fedges), 2))
    for i, (e, sg) in enumerate(zip(fedges, fseg)):
        a0, _ = fault.segment(sg)
        fs[i] = np.linalg.norm(V[e] - a0, axis=1)
    # orient each fault edge along its segment
    flip = fs[:, 0] > fs[:, 1]
    fedges[flip] = fedges[flip][:, ::-1]
    fs[flip] = fs[flip][:, ::-1]

    normals = fault.normals()
    tip_ids = []
    if not fault.closed:
        for p_tip in (fault.vertices[0], fault.vertices[-1]):
            tip_ids.append(int(np.argmin(np.linalg.norm(V - p_tip, axis=1))))
    fault_nodes = sorted(set(fedges.ravel().tolist()) - set(tip_ids))
    fault_edge_set = {tuple(sorted(e)) for e in fedges.tolist()}

    node_tris = {n: [] for n in fault_nodes}
    for ti, tri in enumerate(T):
        for n in tri:
            if n in node_tris:
                node_tris[n].append(ti)

    minus_tri_node = set()            # (triangle, node) incidences to rewire
    for n in fault_nodes:
        tris = node_tris[n]
        parent = {ti: ti for ti in tris}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        by_edge = {}
        for ti in tris:
            for m_ in T[ti]:
                if m_ != n:
                    by_edge.setdefault(tuple(sorted((n, int(m_)))), []).append(ti)
        for e, ts in by_edge.items():
            if e not in fault_edge_set and len(ts) == 2:
                parent[find(ts[0])] = find(ts[1])
        comps = {}
        for ti in tris:
            comps.setdefault(find(ti), []).append(ti)
        if len(comps) != 2:
            raise GeometryError(f"fault node {n} does not split its neighbourhood into two sides")
        # side decided by an incident fault edge: the triangle on the +nu side is plus
        k = next(i for i, e in enumerate(fedges) if n in e)
        nu = normals[fseg[k]]
        mid = V[fedges[k]].mean(axis=0)
        e_key = tuple(sorted(fedges[k].tolist()))
        plus_root = None
        for ti in by_edge[e_key]:
            if (cen[ti] - mid) @ nu > 0:
                plus_root = find(ti)
        if plus_root is None:
            raise GeometryError("could not resolve the fault side of a triangle")
        for root, ts in comps.items():
            if root != plus_root:
                minus_tri_node.update((ti, n) for ti in ts)

    n0 = len(V)
    minus_id = {n: n0 + i for i, n in enumerate(fault_nodes)}
    V2 = np.vstack([V, V[fault_nodes]]) if fault_nodes else V
    T2 = T.copy()
    for ti, n in minus_tri_node:
        row = T2[ti]
        row[row == n] = minus_id[n]
    pairs = np.array([[n, minus_id[n]] for n in fault_nodes], dtype=int).reshape(-1, 2)
    fplus = fedges.copy()
    fminus = np.vectorize(lambda n: minus_id.get(int(n), int(n)))(fedges) if len(fedges) else fedges.copy()
    minus = fault.contains_minus(cen)
    return Mesh(V2, T2, layer, np.asarray(minus, bool), pairs, fplus, np.asarray(fminus, int), fseg, fs,
                bedges, bouter, bdir, bmeas, S[imask], SM[imask] - INTERFACE_MARK,
                np.array(tip_ids, dtype=int), float(h))


# ----------------------------------------------------------------------------
# red refinement

def refine(mesh):
    """Uniform red refinement; every triangle is split into four similar ones.

    Midpoints are keyed by the (sorted) node-index pair of the edge, so the
    two sides of a fault edge, which use different node copies, get separate
    midpoint copies and the duplication structure carries over.
    """
    V = [mesh.nodes]
    nxt = mesh.n_nodes
    mids = {}
    new_pts = []

    def mid(a, b):
        nonlocal nxt
        key = (a, b) if a < b else (b, a)
        if key not in mids:
            mids[key] = nxt
            new_pts.append(0.5 * (mesh.nodes[a] + mesh.nodes[b]))
            nxt += 1
        return mids[key]

    tris = []
    for a, b, c in mesh.triangles.tolist():
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        tris += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    T = np.array(tris, dtype=int)
    nodes = np.vstack(V + [np.array(new_pts).reshape(-1, 2)])
    rep4 = lambda arr: np.repeat(arr, 4, axis=0)

    def split_edges(E):
        out = []
        for a, b in E.tolist():
            m_ = mids[(a, b) if a < b else (b, a)]
            out += [(a, m_), (m_, b)]
        return np.array(out, dtype=int).reshape(-1, 2)

    fplus = split_edges(mesh.fault_plus)
    fminus = split_edges(mesh.fault_minus)
    new_pairs = [(mids[tuple(sorted(p))], mids[tuple(sorted(m_))])
                 for p, m_ in zip(mesh.fault_plus.tolist(), mesh.fault_minus.tolist())]
    pairs = np.vstack([mesh.pairs, np.array(new_pairs, dtype=int).reshape(-1, 2)])
    fs = []
    for s0, s1 in mesh.fault_s:
        sm = 0.5 * (s0 + s1)
        fs += [(s0, sm), (sm, s1)]
    return replace(
        mesh, nodes=nodes, triangles=T, layer=rep4(mesh.layer), minus=rep4(mesh.minus), pairs=pairs,
        fault_plus=fplus, fault_minus=fminus, fault_segment=np.repeat(mesh.fault_segment, 2),
        fault_s=np.array(fs).reshape(-1, 2),
        boundary_edges=split_edges(mesh.boundary_edges), boundary_outer=np.repeat(mesh.boundary_outer, 2),
        boundary_dirichlet=np.repeat(mesh.boundary_dirichlet, 2),
        boundary_measure=np.repeat(mesh.boundary_measure, 2),
        interface_edges=split_edges(mesh.interface_edges), interface_index=np.repeat(mesh.interface_index, 2),
        h=mesh.h / 2, level=mesh.level + 1)


def structured_square_mesh(n, domain=None):
    """n x n squares on the unit square, each cut along its diagonal (2 n^2 triangles), no fault."""
    xs = np.linspace(0, 1, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    V = np.column_stack([X.ravel(), Y.ravel()])
    idx = lambda i, j: j * (n + 1) + i
    T = []
    for j in range(n):
        for i in range(n):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            T += [(a, b, c), (a, c, d)]
    T = np.array(T)
    B, Bk = [], []
    for i in range(n):
        B += [(idx(i, 0), idx(i + 1, 0)), (idx(n, i), idx(n, i + 1)),
              (idx(i + 1, n), idx(i, n)), (idx(0, i + 1), idx(0, i))]
        Bk += [0, 1, 2, 3]
    B, Bk = np.array(B), np.array(Bk)
    layer = domain.layers_of(V[T].mean(axis=1)) if domain is not None else np.zeros(len(T), int)
    bdir = np.isin(Bk, domain.dirichlet_edges) if domain is not None else np.zeros(len(B), bool)
    bmeas = np.zeros(len(B), bool)
    if domain is not None:
        m = domain.measurement
        a, b = domain.edge(m.edge)
        for i, (e, k) in enumerate(zip(B, Bk)):
            if k == m.edge:
                tm = float((V[e].mean(axis=0) - a) @ (b - a)) / float((b - a) @ (b - a))
                bmeas[i] = m.t0 <= tm <= m.t1
    e2 = np.zeros((0, 2), int)
    return Mesh(V, T, layer, np.zeros(len(T), bool), e2, e2, e2, np.zeros(0, int), np.zeros((0, 2)),
                B, Bk, bdir, bmeas, e2, np.zeros(0, int), np.zeros(0, int), 1.0 / n)
