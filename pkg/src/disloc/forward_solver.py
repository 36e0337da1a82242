"""P1 finite elements for the piecewise-Lame transmission problem with fault jumps.

The discrete problem is K - w^2 M on the split-node mesh.  Displacement jumps
are imposed by eliminating the plus copies (u_plus = u_minus + f) and
Dirichlet data by eliminating boundary dofs; the traction jump enters as a
load on the fault.  Dof numbering is interleaved: node n owns 2n and 2n+1.
"""
from dataclasses import dataclass, field
import logging
import warnings

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import cKDTree

from ._quad import TRI7_BARY, TRI7_W, gauss_legendre
from .geometry import GeometryError, JumpData, validate_lame
from .mesh import generate_mesh

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Numerical failure (maps to CLI exit code 3)."""


class ResonanceWarning(RuntimeWarning):
    pass


@dataclass
class LinearSystem:
    K: sp.csr_matrix
    M: sp.csr_matrix
    omega: float
    dirichlet_nodes: np.ndarray
    rhs: np.ndarray = None
    lift: np.ndarray = None       # full-length vector carrying f on plus copies and Dirichlet values
    P: sp.csr_matrix = None       # prolongation from reduced to full dofs
    free: np.ndarray = None       # reduced dofs not fixed by Dirichlet data
    ud_red: np.ndarray = None     # Dirichlet values in reduced numbering

    @property
    def A(self):
        return (self.K - self.omega ** 2 * self.M).tocsr()


@dataclass
class FunctionJumps:
    """Jumps given by callables f(x) and g(x, nu), both returning (..., 2) arrays."""
    f: callable
    g: callable


def _p1_gradients(P):
    """Gradients of the barycentric basis per triangle, shape (M, 3, 2), and areas."""
    d1 = P[:, 1] - P[:, 0]
    d2 = P[:, 2] - P[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    inv = np.empty((len(P), 2, 2))
    inv[:, 0, 0] = d2[:, 1] / det
    inv[:, 0, 1] = -d2[:, 0] / det
    inv[:, 1, 0] = -d1[:, 1] / det
    inv[:, 1, 1] = d1[:, 0] / det
    g1 = inv[:, 0]
    g2 = inv[:, 1]
    G = np.stack([-g1 - g2, g1, g2], axis=1)
    return G, 0.5 * det


def element_stiffness(P, lam, mu):
    """Element matrices (M, 6, 6) with interleaved local dofs."""
    G, area = _p1_gradients(P)
    B = np.zeros((len(P), 3, 6))
    B[:, 0, 0::2] = G[:, :, 0]
    B[:, 1, 1::2] = G[:, :, 1]
    B[:, 2, 0::2] = G[:, :, 1]
    B[:, 2, 1::2] = G[:, :, 0]
    lam = np.broadcast_to(lam, (len(P),))
    mu = np.broadcast_to(mu, (len(P),))
    D = np.zeros((len(P), 3, 3))
    D[:, 0, 0] = D[:, 1, 1] = lam + 2 * mu
    D[:, 0, 1] = D[:, 1, 0] = lam
    D[:, 2, 2] = mu
    return np.einsum("eki,ekl,elj->eij", B, D, B) * area[:, None, None]


def element_mass(P):
    _, area = _p1_gradients(P)
    m = (np.ones((3, 3)) + np.eye(3)) / 12.0
    Me = np.zeros((len(P), 6, 6))
    Me[:, 0::2, 0::2] = m
    Me[:, 1::2, 1::2] = m
    return Me * area[:, None, None]


def _scatter(mesh, Ke):
    dofs = np.empty((mesh.n_triangles, 6), dtype=int)
    dofs[:, 0::2] = 2 * mesh.triangles
    dofs[:, 1::2] = 2 * mesh.triangles + 1
    rows = np.repeat(dofs, 6, axis=1).ravel()
    cols = np.tile(dofs, (1, 6)).ravel()
    n = 2 * mesh.n_nodes
    return sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def assemble(mesh, domain):
    """Stiffness and mass matrices with per-layer Lame parameters."""
    for l, lp in enumerate(domain.layers):
        if not validate_lame(lp).ok:
            raise GeometryError(f"layer {l} violates strong convexity", f"/layers/{l}")
    if len(mesh.layer) and mesh.layer.max() >= len(domain.layers):
        raise GeometryError(f"mesh layer tag {mesh.layer.max()} but the domain has {len(domain.layers)} layers",
                            "/layers")
    lam = np.array([domain.layers[l].lam for l in mesh.layer])
    mu = np.array([domain.layers[l].mu for l in mesh.layer])
    P = mesh.nodes[mesh.triangles]
    K = _scatter(mesh, element_stiffness(P, lam, mu))
    M = _scatter(mesh, element_mass(P))
    dn = np.unique(mesh.boundary_edges[mesh.boundary_dirichlet].ravel())
    return LinearSystem(K, M, domain.omega, dn)


def _edge_quadrature(a, b, n=4):
    t, w = gauss_legendre(n, 0.0, 1.0)
    pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
    L = np.linalg.norm(b - a, axis=1)
    return pts, t, w[None, :] * L[:, None]


def node_jump_values(mesh, fault, jumps):
    """f at every duplicated pair (mean of the one-sided segment values at corners)."""
    vals = np.zeros((len(mesh.pairs), 2), dtype=complex)
    inc = mesh.pair_jump_nodes()
    for i, lst in enumerate(inc):
        if not lst:
            raise GeometryError("jump data missing on a fault segment")
        acc = []
        for e, k in lst:
            if isinstance(jumps, FunctionJumps):
                acc.append(jumps.f(mesh.nodes[mesh.fault_plus[e, k]]))
            else:
                acc.append(jumps.f_at(int(mesh.fault_segment[e]), mesh.fault_s[e, k]))
        vals[i] = np.mean(acc, axis=0)
    return vals


def fault_load(mesh, fault, jumps, n=4):
    """Load vector -int_Sigma g . phi over fault edges (phi continuous across the fault).

    Derivation: integrating by parts on both sides with the normal pointing
    out of the minus region gives int(T u_minus - T u_plus) . phi = -int g . phi.
    The load is written on the minus copies; after elimination of the plus
    copies it acts on the shared test function.
    """
    b = np.zeros(2 * mesh.n_nodes, dtype=complex)
    if len(mesh.fault_plus) == 0:
        return b
    a = mesh.nodes[mesh.fault_minus[:, 0]]
    c = mesh.nodes[mesh.fault_minus[:, 1]]
    pts, t, w = _edge_quadrature(a, c, n)
    normals = fault.normals()[mesh.fault_segment]
    if isinstance(jumps, FunctionJumps):
        g = jumps.g(pts, normals[:, None, :])
    else:
        s = mesh.fault_s[:, :1] + t[None, :] * (mesh.fault_s[:, 1:] - mesh.fault_s[:, :1])
        g = np.stack([jumps.g_at(int(sg), s[e]) for e, sg in enumerate(mesh.fault_segment)])
    phi = np.stack([1 - t, t], axis=-1)                   # (n, 2)
    contrib = -np.einsum("eqc,eq,qk->ekc", g, w, phi)     # (E, 2 nodes, 2 comps)
    for k in range(2):
        nodes = mesh.fault_minus[:, k]
        np.add.at(b, 2 * nodes, contrib[:, k, 0])
        np.add.at(b, 2 * nodes + 1, contrib[:, k, 1])
    return b


def neumann_load(mesh, domain, traction, n=4):
    """int t . phi over traction-free-part edges for prescribed boundary traction t(x, nu)."""
    b = np.zeros(2 * mesh.n_nodes, dtype=complex)
    if traction is None:
        return b
    sel = ~mesh.boundary_dirichlet
    E = mesh.boundary_edges[sel]
    if len(E) == 0:
        return b
    nu = np.array([domain.edge_normal(k) for k in mesh.boundary_outer[sel]])
    pts, t, w = _edge_quadrature(mesh.nodes[E[:, 0]], mesh.nodes[E[:, 1]], n)
    tr = traction(pts, nu[:, None, :])
    phi = np.stack([1 - t, t], axis=-1)
    contrib = np.einsum("eqc,eq,qk->ekc", tr, w, phi)
    for k in range(2):
        np.add.at(b, 2 * E[:, k], contrib[:, k, 0])
        np.add.at(b, 2 * E[:, k] + 1, contrib[:, k, 1])
    return b


def prolongation(mesh):
    """Map from reduced dofs (plus copies removed) to full dofs, and the reduced node list."""
    N = mesh.n_nodes
    keep = np.ones(N, bool)
    keep[mesh.pairs[:, 0]] = False
    red_of = -np.ones(N, dtype=int)
    red_of[keep] = np.arange(keep.sum())
    red_of[mesh.pairs[:, 0]] = red_of[mesh.pairs[:, 1]]
    rows = np.concatenate([2 * np.arange(N), 2 * np.arange(N) + 1])
    cols = np.concatenate([2 * red_of, 2 * red_of + 1])
    P = sp.csr_matrix((np.ones(2 * N), (rows, cols)), shape=(2 * N, 2 * int(keep.sum())))
    return P, red_of


def apply_jumps(system, mesh, fault, jumps, dirichlet=None, traction=None, domain=None):
    """Fold jumps, Dirichlet data and boundary tractions into the system.

    The plus copies are eliminated through u_plus = u_minus + f (the lift
    vector carries f), Dirichlet values are carried by the reduced vector
    ``ud_red`` and the fault traction jump becomes a load.
    """
    N = mesh.n_nodes
    lift = np.zeros(2 * N, dtype=complex)
    b = np.zeros(2 * N, dtype=complex)
    if fault is not None and jumps is not None and len(mesh.pairs):
        if isinstance(jumps, JumpData):
            jumps.check(fault)
        fv = node_jump_values(mesh, fault, jumps)
        lift[2 * mesh.pairs[:, 0]] = fv[:, 0]
        lift[2 * mesh.pairs[:, 0] + 1] = fv[:, 1]
        b += fault_load(mesh, fault, jumps)
    if traction is not None:
        b += neumann_load(mesh, domain, traction)
    P, red_of = prolongation(mesh)
    dn = system.dirichlet_nodes
    ud_red = np.zeros(P.shape[1], dtype=complex)
    if dirichlet is not None and len(dn):
        ud = np.asarray(dirichlet(mesh.nodes[dn]), dtype=complex)
        ud_red[2 * red_of[dn]] = ud[:, 0]
        ud_red[2 * red_of[dn] + 1] = ud[:, 1]
    fixed = np.zeros(P.shape[1], bool)
    fixed[2 * red_of[dn]] = True
    fixed[2 * red_of[dn] + 1] = True
    system.rhs = b
    system.lift = lift
    system.P = P
    system.free = np.flatnonzero(~fixed)
    system.ud_red = ud_red
    return system


@dataclass
class DisplacementField:
    mesh: object
    u: np.ndarray                 # (N, 2) complex nodal values
    domain: object = None
    fault: object = None
    residual: float = 0.0
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self._tree = None

    def _locator(self):
        if self._tree is None:
            cen = self.mesh.nodes[self.mesh.triangles].mean(axis=1)
            self._tree = cKDTree(cen)
            self._rmax = float(np.max(np.linalg.norm(
                self.mesh.nodes[self.mesh.triangles] - cen[:, None, :], axis=2)))
            side = np.zeros(self.mesh.n_nodes, dtype=int)
            side[self.mesh.pairs[:, 0]] = 1
            side[self.mesh.pairs[:, 1]] = -1
            tri_side = side[self.mesh.triangles]
            self._tri_side = np.where(np.any(tri_side < 0, axis=1), -1,
                                      np.where(np.any(tri_side > 0, axis=1), 1, 0))
        return self._tree

    def locate(self, x, side=None, tol=1e-10):
        """Triangle index and barycentric coordinates for each point."""
        tree = self._locator()
        x = np.atleast_2d(x)
        tris = np.empty(len(x), dtype=int)
        bary = np.empty((len(x), 3))
        for i, p in enumerate(x):
            cand = tree.query_ball_point(p, self._rmax * (1 + 1e-9))
            best, bb, score = -1, None, -np.inf
            for t in cand:
                P = self.mesh.nodes[self.mesh.triangles[t]]
                T = np.column_stack([P[1] - P[0], P[2] - P[0]])
                l12 = np.linalg.solve(T, p - P[0])
                lam = np.array([1 - l12.sum(), l12[0], l12[1]])
                m = lam.min()
                if side is not None and m >= -tol:
                    s = self._tri_side[t]
                    if s != 0 and s != side:
                        m -= 1.0     # usable only if nothing on the requested side contains p
                if m > score:
                    best, bb, score = t, lam, m
            if best < 0 or score < -tol - (1.0 if side is not None else 0.0):
                raise GeometryError(f"point {p} lies outside the mesh")
            tris[i] = best
            bary[i] = bb
        return tris, bary

    def __call__(self, x, side=None):
        t, b = self.locate(x, side)
        return np.einsum("pk,pkc->pc", b, self.u[self.mesh.triangles[t]])

    def gradients(self):
        """Constant gradient per triangle, (M, 2, 2) with [i, j] = d_j u_i."""
        G, _ = _p1_gradients(self.mesh.nodes[self.mesh.triangles])
        return np.einsum("mkj,mki->mij", G, self.u[self.mesh.triangles])

    def nodal_jumps(self):
        return self.u[self.mesh.pairs[:, 0]] - self.u[self.mesh.pairs[:, 1]]


def resonance_check(K, M, omega, rel=1e-8):
    """Distance of omega^2 to the nearest discrete eigenvalue (warns when too close)."""
    if omega == 0:
        return None
    try:
        vals = spla.eigsh(K, k=1, M=M, sigma=omega ** 2, which="LM", return_eigenvectors=False)
    except Exception as exc:          # factorization of an exactly singular shift
        warnings.warn(f"resonance check failed: {exc}", ResonanceWarning)
        return 0.0
    gap = abs(vals[0] - omega ** 2) / omega ** 2
    if gap < rel:
        cond = 1.0 / max(gap, np.finfo(float).tiny)
        warnings.warn(f"omega^2 within {gap:.2e} of a discrete eigenvalue (condition ~ {cond:.1e})",
                      ResonanceWarning)
    return gap


def solve_system(mesh, domain, fault=None, jumps=None, dirichlet=None, traction=None,
                 check_resonance=True, rtol=1e-10):
    sysm = apply_jumps(assemble(mesh, domain), mesh, fault, jumps, dirichlet, traction, domain)
    P, free, lift, ud_red = sysm.P, sysm.free, sysm.lift, sysm.ud_red
    A = sysm.A
    Ar = (P.T @ A @ P).tocsr()
    rhs = P.T @ (sysm.rhs - A @ lift) - Ar @ ud_red
    Aff = Ar[free][:, free].tocsc()
    if check_resonance and domain.omega > 0:
        Kr = (P.T @ sysm.K @ P).tocsr()[free][:, free]
        Mr = (P.T @ sysm.M @ P).tocsr()[free][:, free]
        resonance_check(Kr.tocsc(), Mr.tocsc(), domain.omega)
    real = not np.any(rhs.imag != 0)
    rf = rhs[free].real if real else rhs[free]
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            xf = spla.spsolve(Aff, rf)
        except spla.MatrixRankWarning as exc:
            raise SolverError("singular system") from exc
    nb = np.linalg.norm(rf)
    res = np.linalg.norm(Aff @ xf - rf) / nb if nb > 0 else 0.0
    if not np.all(np.isfinite(xf)) or res > rtol:
        raise SolverError(f"linear solve residual {res:.2e} above {rtol:.0e}")
    xr = ud_red.copy()
    xr[free] = xf
    u = P @ xr + lift
    return DisplacementField(mesh, u.reshape(-1, 2), domain, fault, float(res))


def solve_forward(domain, fault, jumps, h, dirichlet=None, traction=None, mesh=None, **kw):
    """Mesh (unless given) and solve; returns a side-aware DisplacementField."""
    if mesh is None:
        mesh = generate_mesh(domain, fault, h)
    return solve_system(mesh, domain, fault, jumps, dirichlet, traction, **kw)


# ----------------------------------------------------------------------------
# measurement

@dataclass(frozen=True)
class BoundaryMeasurement:
    s: np.ndarray
    u: np.ndarray     # (n, 2) complex

    def to_csv(self):
        rows = ["s,u1_re,u1_im,u2_re,u2_im"]
        for s, (a, b) in zip(self.s, self.u):
            rows.append(f"{s:.17g},{a.real:.17g},{a.imag:.17g},{b.real:.17g},{b.imag:.17g}")
        return "\n".join(rows) + "\n"


def measurement_points(domain, n_samples):
    p, q = domain.measurement_endpoints()
    s = np.linspace(0.0, float(np.linalg.norm(q - p)), n_samples)
    t = s / s[-1]
    return s, p[None, :] + t[:, None] * (q - p)[None, :]


def measure(field, domain, n_samples=101):
    """Equispaced samples of the trace on the measurement arc (edge-wise linear interpolation)."""
    s, pts = measurement_points(domain, n_samples)
    mesh = field.mesh
    sel = mesh.boundary_outer == domain.measurement.edge
    E = mesh.boundary_edges[sel]
    a, b = domain.edge(domain.measurement.edge)
    L = float(np.linalg.norm(b - a))
    ta = (mesh.nodes[E[:, 0]] - a) @ (b - a) / L ** 2
    tb = (mesh.nodes[E[:, 1]] - a) @ (b - a) / L ** 2
    lo, hi = np.minimum(ta, tb), np.maximum(ta, tb)
    tp = (pts - a) @ (b - a) / L ** 2
    out = np.zeros((n_samples, 2), dtype=complex)
    for i, t in enumerate(tp):
        k = int(np.argmax((lo <= t + 1e-14) & (t - 1e-14 <= hi)))
        w = 0.0 if hi[k] == lo[k] else (t - ta[k]) / (tb[k] - ta[k])
        w = min(max(w, 0.0), 1.0)
        out[i] = (1 - w) * field.u[E[k, 0]] + w * field.u[E[k, 1]]
    return BoundaryMeasurement(s, out)


# ----------------------------------------------------------------------------
# error norms

def l2_error(field, exact_minus, exact_plus=None):
    """L2 norm of u_h - u over the mesh, 7-point rule; exact_minus used on minus triangles."""
    mesh = field.mesh
    exact_plus = exact_plus or exact_minus
    P = mesh.nodes[mesh.triangles]
    area = np.abs(mesh.areas())
    X = np.einsum("qk,mkd->mqd", TRI7_BARY, P)
    uh = np.einsum("qk,mkc->mqc", TRI7_BARY, field.u[mesh.triangles])
    ue = np.where(mesh.minus[:, None, None], exact_minus(X), exact_plus(X))
    err = np.sum(np.abs(uh - ue) ** 2, axis=2) @ TRI7_W
    return float(np.sqrt(np.sum(err * area)))


def boundary_pairing(field_u, trac_u, field_v, trac_v, domain, n=4):
    """int over the traction-free part of (t_u . v - u . t_v), with tractions given as t(x, nu)."""
    mesh = field_u.mesh
    sel = ~mesh.boundary_dirichlet
    E = mesh.boundary_edges[sel]
    nu = np.array([domain.edge_normal(k) for k in mesh.boundary_outer[sel]])
    pts, t, w = _edge_quadrature(mesh.nodes[E[:, 0]], mesh.nodes[E[:, 1]], n)
    phi = np.stack([1 - t, t], axis=-1)
    uq = np.einsum("qk,ekc->eqc", phi, field_u.u[E])
    vq = np.einsum("qk,ekc->eqc", phi, field_v.u[E])
    tu = trac_u(pts, nu[:, None, :])
    tv = trac_v(pts, nu[:, None, :])
    return complex(np.sum((np.sum(tu * vq, axis=2) - np.sum(uq * tv, axis=2)) * w))
