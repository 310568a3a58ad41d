"""Finite isoradial discretizations of marked planar domains.

A lattice is generated from two families of unit "track" vectors: grid point
(i, j) sits at sum(exp(i*a[:i])) + sum(exp(i*b[:j])) in units of the mesh
size delta, and every grid cell is a rhombus with unit sides.  Grid parity
(i + j even/odd) splits vertices into primal and dual.  Cells are clipped to
the target domain, glued along shared sides (slit sides are left unglued,
which realises prime-end duplication), and the boundary is walked as a single
counterclockwise cycle of alternating primal/dual vertices.

Dobrushin marking selects 2 or 4 boundary corners; every boundary vertex
strictly inside a wired (free) arc is cut off by the primal (dual) diagonal
of each incident rhombus, which becomes a boundary rhombus.  The interface,
the sampler and the observable solver all run on the resulting structure.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * math.pi


class LatticeError(ValueError):
    pass


class MeshTooCoarseError(LatticeError):
    pass


class MarkedPointCollisionError(LatticeError):
    pass


def wrap_angle(a):
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, TWO_PI)
    if a <= 0.0:
        a += TWO_PI
    return a - math.pi


# ---------------------------------------------------------------------------
# domain shapes


class _Shape:
    def contains(self, z: complex) -> bool:  # physical coordinates
        raise NotImplementedError


class _Rect(_Shape):
    def __init__(self, rho):
        self.rho = rho

    def contains(self, z):
        return -1e-9 <= z.real <= 1 + 1e-9 and -1e-9 <= z.imag <= self.rho + 1e-9


class _Disc(_Shape):
    def __init__(self, radius=1.0):
        self.radius = radius

    def contains(self, z):
        return abs(z) <= self.radius + 1e-9


class _Polygon(_Shape):
    def __init__(self, points):
        self.pts = [complex(p) for p in points]
        if len(self.pts) < 3:
            raise LatticeError("polygon needs at least 3 points")

    def contains(self, z):
        # ray casting, with a tolerance pull toward the centroid
        c = sum(self.pts) / len(self.pts)
        z = z + 1e-9 * (c - z)
        inside = False
        n = len(self.pts)
        for i in range(n):
            p, q = self.pts[i], self.pts[(i + 1) % n]
            if (p.imag > z.imag) != (q.imag > z.imag):
                xcross = p.real + (z.imag - p.imag) * (q.real - p.real) / (q.imag - p.imag)
                if xcross > z.real:
                    inside = not inside
        return inside


# ---------------------------------------------------------------------------
# geometry containers


@dataclass
class Rhombus:
    id: int
    center: complex
    u: int
    u_z: int
    w: int
    w_z: int
    theta_bar: float
    corner_ids: tuple


@dataclass
class Corner:
    id: int
    primal: int
    dual: int
    nu: complex
    incident_rhombi: tuple


class IsoradialGraph:
    """Vertices, rhombi and corners of one discretization (positions in units
    of delta; multiply by ``delta`` for physical coordinates)."""

    def __init__(self, delta, pos, kind, r_u, r_uz, r_w, r_wz, r_theta):
        self.delta = float(delta)
        self.pos = np.asarray(pos, dtype=complex)
        self.kind = np.asarray(kind, dtype=np.int8)  # 0 primal, 1 dual
        self.r_u = np.asarray(r_u, dtype=np.int64)
        self.r_uz = np.asarray(r_uz, dtype=np.int64)
        self.r_w = np.asarray(r_w, dtype=np.int64)
        self.r_wz = np.asarray(r_wz, dtype=np.int64)
        self.r_theta = np.asarray(r_theta, dtype=float)
        self.n_vertices = len(self.pos)
        self.n_rhombi = len(self.r_u)
        self.r_center = 0.5 * (self.pos[self.r_u] + self.pos[self.r_uz])
        self._build_corners()
        self._build_measures()

    def _build_corners(self):
        key = {}
        c_primal, c_dual = [], []
        rh_of_corner = []
        self.r_corners = np.empty((self.n_rhombi, 4), dtype=np.int64)
        # per rhombus, corner slots in the fixed frame:
        # 0: (u, w)   1: (u, w_z)   2: (u_z, w)   3: (u_z, w_z)
        pairs = [(self.r_u, self.r_w), (self.r_u, self.r_wz),
                 (self.r_uz, self.r_w), (self.r_uz, self.r_wz)]
        for r in range(self.n_rhombi):
            for s, (pa, da) in enumerate(pairs):
                p, d = int(pa[r]), int(da[r])
                cid = key.get((p, d))
                if cid is None:
                    cid = len(c_primal)
                    key[(p, d)] = cid
                    c_primal.append(p)
                    c_dual.append(d)
                    rh_of_corner.append([])
                rh_of_corner[cid].append(r)
                self.r_corners[r, s] = cid
        self.c_primal = np.array(c_primal, dtype=np.int64)
        self.c_dual = np.array(c_dual, dtype=np.int64)
        self.n_corners = len(c_primal)
        nu = self.pos[self.c_dual] - self.pos[self.c_primal]
        self.c_nu = nu / np.abs(nu)
        self.c_rh = np.full((self.n_corners, 2), -1, dtype=np.int64)
        for cid, lst in enumerate(rh_of_corner):
            if len(lst) > 2:
                raise LatticeError(f"corner {cid} shared by {len(lst)} rhombi")
            for t, r in enumerate(lst):
                self.c_rh[cid, t] = r
        self._corner_key = key

    def _build_measures(self):
        d2 = self.delta * self.delta
        self.mu_diamond = d2 * np.sin(2.0 * self.r_theta)
        self.mu_vertex = np.zeros(self.n_vertices)
        for arr in (self.r_u, self.r_uz, self.r_w, self.r_wz):
            np.add.at(self.mu_vertex, arr, 0.5 * self.mu_diamond)
        self.mu_upsilon = 0.25 * self.mu_diamond[self.c_rh[:, 0]]
        second = self.c_rh[:, 1] >= 0
        self.mu_upsilon[second] += 0.25 * self.mu_diamond[self.c_rh[second, 1]]

    # convenience views -----------------------------------------------------
    def rhombus(self, r) -> Rhombus:
        return Rhombus(r, complex(self.r_center[r]), int(self.r_u[r]),
                       int(self.r_uz[r]), int(self.r_w[r]), int(self.r_wz[r]),
                       float(self.r_theta[r]), tuple(self.r_corners[r]))

    def corner(self, c) -> Corner:
        rhs = tuple(int(r) for r in self.c_rh[c] if r >= 0)
        return Corner(int(c), int(self.c_primal[c]), int(self.c_dual[c]),
                      complex(self.c_nu[c]), rhs)

    def corner_id(self, primal, dual):
        return self._corner_key.get((int(primal), int(dual)))

    @property
    def primal_vertices(self):
        return np.nonzero(self.kind == 0)[0]

    @property
    def dual_vertices(self):
        return np.nonzero(self.kind == 1)[0]

    def physical_pos(self, v=None):
        if v is None:
            return self.pos * self.delta
        return self.pos[v] * self.delta


# corner roles
ROLE_ACTIVE = 0
ROLE_MARKED = 1
ROLE_EXTERIOR = 2

BR_WIRED = 0
BR_FREE = 1


@dataclass
class BoundaryRhombus:
    rhombus: int
    kind: int                  # BR_WIRED / BR_FREE
    int_vertex: int
    ext_vertex: int
    entry_corner: int
    exit_corner: int
    rho: float                 # exit = rho * entry in the fixed-phase gauge
    d_turn: float              # geometric turning from entry to exit
    is_marked: bool = False    # degenerate observable: strand and RH dropped


@dataclass
class MarkedDiscreteDomain:
    graph: IsoradialGraph
    kind: str                       # two_point | four_point | wired | free | degenerate
    cycle: np.ndarray               # ccw boundary vertices
    marks: list                     # marked corner ids, ccw (possibly empty)
    mark_sides: list                # cycle side indices of the marks
    arcs: list                      # (arc_kind, [cycle side indices]) ccw
    interior_rhombi: np.ndarray
    boundary: list                  # list[BoundaryRhombus]
    corner_role: np.ndarray
    wired_pairs: np.ndarray         # always-open primal vertex pairs
    free_pairs: np.ndarray          # always-dual-open dual vertex pairs
    caches: dict = field(default_factory=dict, repr=False)

    @property
    def delta(self):
        return self.graph.delta

    def corner_lambda(self):
        """Fixed phase per corner: the principal square root of 1/(i nu)."""
        lam = self.caches.get("lambda")
        if lam is None:
            lam = 1.0 / np.sqrt(1j * self.graph.c_nu)
            self.caches["lambda"] = lam
        return lam

    def active_corners(self):
        return np.nonzero(self.corner_role != ROLE_EXTERIOR)[0]

    def boundary_for_rhombus(self, r):
        for br in self.boundary:
            if br.rhombus == r:
                return br
        return None

    def domain_hash(self) -> str:
        import hashlib
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.graph.pos.view(float)).tobytes())
        h.update(self.graph.r_u.tobytes())
        h.update(np.array(self.marks, dtype=np.int64).tobytes())
        h.update(self.kind.encode())
        return h.hexdigest()[:16]


# ---------------------------------------------------------------------------
# construction


def _tracks(lattice_kind, n_x, n_y, spec):
    ax = np.zeros(n_x)
    if lattice_kind == "square":
        by = np.full(n_y, math.pi / 2)
    elif lattice_kind == "rhombic":
        pattern = np.asarray(spec["pattern"], dtype=float)
        if np.any(pattern <= 0) or np.any(pattern >= math.pi / 2):
            raise LatticeError("rhombic pattern angles must lie in (0, pi/2)")
        by = np.array([2.0 * pattern[j % len(pattern)] for j in range(n_y)])
    elif lattice_kind == "perturbed":
        rng = np.random.default_rng(spec["seed"])
        jit = float(spec["jitter"])
        ax = rng.uniform(-jit, jit, size=n_x)
        by = math.pi / 2 + rng.uniform(-jit, jit, size=n_y)
    else:
        raise LatticeError(f"unknown lattice kind {lattice_kind!r}")
    if np.any(by - ax.max() <= 0) or np.any(by - ax.min() >= math.pi):
        raise LatticeError("track angles leave the rhombic range")
    return ax, by


def _grid_positions(ax, by):
    cx = np.concatenate([[0.0 + 0.0j], np.cumsum(np.exp(1j * ax))])
    cy = np.concatenate([[0.0 + 0.0j], np.cumsum(np.exp(1j * by))])
    return cx, cy


class _CellComplex:
    """Kept cells plus gluing and the boundary walk."""

    def __init__(self, keep, cx, cy, cut_h):
        self.keep = keep
        self.cx, self.cy = cx, cy
        self.cut_h = cut_h  # set of (i, j): horizontal grid side is a slit side
        self.ni, self.nj = keep.shape
        self.cells = np.argwhere(keep)
        self.cell_index = -np.ones(keep.shape, dtype=np.int64)
        for c, (i, j) in enumerate(self.cells):
            self.cell_index[i, j] = c
        self.n_cells = len(self.cells)
        self._glue()
        self._sides()

    def grid_pos(self, i, j):
        return self.cx[i] + self.cy[j]

    def corner_grid(self, c, s):
        i, j = self.cells[c]
        return [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)][s]

    def _glue(self):
        n = 4 * self.n_cells
        parent = np.arange(n, dtype=np.int64)

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        def union(a, b):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb

        for c, (i, j) in enumerate(self.cells):
            right = self.cell_index[i + 1, j] if i + 1 < self.ni else -1
            if right >= 0:
                union(4 * c + 1, 4 * right + 0)
                union(4 * c + 2, 4 * right + 3)
            up = self.cell_index[i, j + 1] if j + 1 < self.nj else -1
            if up >= 0 and (i, j + 1) not in self.cut_h:
                union(4 * c + 3, 4 * up + 0)
                union(4 * c + 2, 4 * up + 1)
        roots = {}
        self.vid = np.empty(n, dtype=np.int64)
        for x in range(n):
            r = find(x)
            if r not in roots:
                roots[r] = len(roots)
            self.vid[x] = roots[r]
        self.n_vertices = len(roots)
        self.pos = np.zeros(self.n_vertices, dtype=complex)
        self.parity = np.zeros(self.n_vertices, dtype=np.int8)
        for c in range(self.n_cells):
            for s in range(4):
                i, j = self.corner_grid(c, s)
                v = self.vid[4 * c + s]
                self.pos[v] = self.grid_pos(i, j)
                self.parity[v] = (i + j) % 2

    def _sides(self):
        # directed sides: slot = 4*cell + side, sides ccw
        # 0 bottom (SW->SE), 1 right (SE->NE), 2 top (NE->NW), 3 left (NW->SW)
        tail_corner = [0, 1, 2, 3]
        head_corner = [1, 2, 3, 0]
        n = 4 * self.n_cells
        self.twin = np.full(n, -1, dtype=np.int64)
        for c, (i, j) in enumerate(self.cells):
            right = self.cell_index[i + 1, j] if i + 1 < self.ni else -1
            if right >= 0:
                self.twin[4 * c + 1] = 4 * right + 3
                self.twin[4 * right + 3] = 4 * c + 1
            up = self.cell_index[i, j + 1] if j + 1 < self.nj else -1
            if up >= 0 and (i, j + 1) not in self.cut_h:
                self.twin[4 * c + 2] = 4 * up + 0
                self.twin[4 * up + 0] = 4 * c + 2
        self.side_tail = np.array(
            [self.vid[4 * (s // 4) + tail_corner[s % 4]] for s in range(n)])
        self.side_head = np.array(
            [self.vid[4 * (s // 4) + head_corner[s % 4]] for s in range(n)])

    def boundary_cycle(self):
        """Walk all boundary sides; must close into one ccw cycle."""
        n = 4 * self.n_cells
        boundary = [s for s in range(n) if self.twin[s] < 0]
        if not boundary:
            raise LatticeError("domain has no boundary")
        unseen = set(boundary)
        start = boundary[0]
        cycle_sides = []
        s = start
        while True:
            cycle_sides.append(s)
            unseen.discard(s)
            t = 4 * (s // 4) + (s % 4 + 1) % 4
            while self.twin[t] >= 0:
                t = self.twin[t]
                t = 4 * (t // 4) + (t % 4 + 1) % 4
            s = t
            if s == start:
                break
            if len(cycle_sides) > n:
                raise LatticeError("boundary walk failed to close")
        if unseen:
            raise LatticeError("domain is not simply connected (multiple "
                               "boundary components)")
        verts = [int(self.side_tail[s]) for s in cycle_sides]
        # ccw check via shoelace
        zs = self.pos[verts]
        area2 = float(np.sum(np.real(zs) * np.imag(np.roll(zs, -1))
                             - np.imag(zs) * np.real(np.roll(zs, -1))))
        if area2 <= 0:
            cycle_sides = cycle_sides[::-1]
            verts = verts[::-1]
        return cycle_sides, np.array(verts, dtype=np.int64)


def _cells_in_shape(shape, cx, cy, delta):
    ni, nj = len(cx) - 1, len(cy) - 1
    keep = np.zeros((ni, nj), dtype=bool)
    for i in range(ni):
        for j in range(nj):
            corners = [cx[i] + cy[j], cx[i + 1] + cy[j],
                       cx[i + 1] + cy[j + 1], cx[i] + cy[j + 1]]
            keep[i, j] = all(shape.contains(delta * z) for z in corners)
    return keep


def _largest_component(keep, cut_h):
    ni, nj = keep.shape
    comp = -np.ones(keep.shape, dtype=np.int64)
    sizes = []
    for i0 in range(ni):
        for j0 in range(nj):
            if keep[i0, j0] and comp[i0, j0] < 0:
                cid = len(sizes)
                stack = [(i0, j0)]
                comp[i0, j0] = cid
                count = 0
                while stack:
                    i, j = stack.pop()
                    count += 1
                    for di, dj, cut in ((1, 0, False), (-1, 0, False),
                                        (0, 1, (i, j + 1) in cut_h),
                                        (0, -1, (i, j) in cut_h)):
                        a, b = i + di, j + dj
                        if (0 <= a < ni and 0 <= b < nj and keep[a, b]
                                and comp[a, b] < 0 and not cut):
                            comp[a, b] = cid
                            stack.append((a, b))
                sizes.append(count)
    if not sizes:
        raise MeshTooCoarseError("no cell fits inside the domain")
    best = int(np.argmax(sizes))
    return keep & (comp == best)


def _fill_holes(keep):
    ni, nj = keep.shape
    outside = np.zeros((ni + 2, nj + 2), dtype=bool)
    padded = np.zeros((ni + 2, nj + 2), dtype=bool)
    padded[1:-1, 1:-1] = keep
    stack = [(0, 0)]
    outside[0, 0] = True
    while stack:
        i, j = stack.pop()
        for a, b in ((i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)):
            if (0 <= a < ni + 2 and 0 <= b < nj + 2 and not padded[a, b]
                    and not outside[a, b]):
                outside[a, b] = True
                stack.append((a, b))
    holes = ~padded & ~outside
    return keep | holes[1:-1, 1:-1]


def _orientation_matches(parity_tail, which):
    # marks a, c are traversed primal->dual along the ccw cycle; b, d dual->primal
    want_primal_first = which in (0, 2)
    return (parity_tail == 0) == want_primal_first


def _build_domain(cc: _CellComplex, delta, marked_points, bc):
    """One marking attempt.  Returns the domain or raises _Degenerate with the
    set of cells to drop."""
    cycle_sides, cycle = cc.boundary_cycle()
    ncyc = len(cycle)
    pos, parity = cc.pos, cc.parity

    # rhombi from cells
    r_u, r_uz, r_w, r_wz, r_theta = [], [], [], [], []
    cell_of_rhombus = []
    for c in range(cc.n_cells):
        vs = [cc.vid[4 * c + s] for s in range(4)]
        i, j = cc.cells[c]
        if (i + j) % 2 == 0:
            u, uz = vs[0], vs[2]
            w, wz = vs[1], vs[3]
        else:
            u, uz = vs[1], vs[3]
            w, wz = vs[2], vs[0]
        d = pos[uz] - pos[u]
        e = pos[wz] - pos[w]
        if (e / d).imag < 0:  # enforce nu_T = i * (uz-u)/|uz-u|
            w, wz = wz, w
            e = -e
        half = abs(d) / 2.0
        theta = math.acos(min(1.0, half))
        r_u.append(u); r_uz.append(uz); r_w.append(w); r_wz.append(wz)
        r_theta.append(theta)
        cell_of_rhombus.append(c)

    graph = IsoradialGraph(delta, pos, parity, r_u, r_uz, r_w, r_wz, r_theta)

    side_of_vertexpos = {int(cycle[t]): t for t in range(ncyc)}
    if len(side_of_vertexpos) != ncyc:
        raise LatticeError("boundary cycle revisits a vertex")

    # --- marks ------------------------------------------------------------
    marks, mark_sides = [], []
    if bc == "dobrushin":
        pts = [complex(p) for p in marked_points]
        if len(pts) not in (2, 4):
            raise LatticeError("need 2 or 4 marked points")
        for which, pt in enumerate(pts):
            best, bestd = None, math.inf
            for t in range(ncyc):
                tail, head = int(cycle[t]), int(cycle[(t + 1) % ncyc])
                if not _orientation_matches(parity[tail], which):
                    continue
                mid = 0.5 * (pos[tail] + pos[head]) * delta
                dd = abs(mid - pt)
                if dd < bestd - 1e-12:
                    best, bestd = t, dd
            if best is None:
                raise LatticeError("no boundary side with required orientation")
            if best in mark_sides:
                raise MarkedPointCollisionError(
                    f"marked points {which} collide on one boundary corner")
            mark_sides.append(best)
        order = sorted(range(len(mark_sides)), key=lambda i: mark_sides[i])
        rot = order.index(0)
        order = order[rot:] + order[:rot]
        if order != list(range(len(mark_sides))):
            raise LatticeError("marked points are not in counterclockwise order")
        for t in mark_sides:
            tail, head = int(cycle[t]), int(cycle[(t + 1) % ncyc])
            p, d = (tail, head) if parity[tail] == 0 else (head, tail)
            cid = graph.corner_id(p, d)
            if cid is None:
                raise LatticeError("marked side is not a rhombus corner")
            marks.append(cid)

    # --- arcs and cut vertices ---------------------------------------------
    # arcs: list of (kind, [side indices ccw]); sides at marks excluded
    arcs = []
    if bc == "dobrushin":
        nm = len(mark_sides)
        for a in range(nm):
            s0, s1 = mark_sides[a], mark_sides[(a + 1) % nm]
            sides = []
            t = (s0 + 1) % ncyc
            while t != s1:
                sides.append(t)
                t = (t + 1) % ncyc
            # arc after mark 0 (i.e. after corner a) is free, then alternate
            arcs.append((BR_FREE if a % 2 == 0 else BR_WIRED, sides))
    elif bc in ("wired", "free"):
        arcs.append((BR_WIRED if bc == "wired" else BR_FREE,
                     list(range(ncyc))))
    else:
        raise LatticeError(f"unknown boundary condition {bc!r}")

    cut_kind = {}
    for akind, sides in arcs:
        want_parity = 1 if akind == BR_WIRED else 0  # cut duals on wired arcs
        # vertices strictly inside the arc: heads of all sides except the last
        for t in sides[:-1] if bc == "dobrushin" else sides:
            v = int(cycle[(t + 1) % ncyc])
            if parity[v] == want_parity:
                if v in cut_kind and cut_kind[v] != akind:
                    raise MeshTooCoarseError("vertex cut by two different arcs")
                cut_kind[v] = akind

    # --- boundary rhombi, degeneracy detection ------------------------------
    incident = [[] for _ in range(graph.n_vertices)]
    for r in range(graph.n_rhombi):
        for v in (graph.r_u[r], graph.r_uz[r], graph.r_w[r], graph.r_wz[r]):
            incident[int(v)].append(r)

    drop = set()
    br_map = {}
    for v, akind in cut_kind.items():
        for r in incident[v]:
            if akind == BR_WIRED:
                if graph.kind[v] != 1:
                    raise LatticeError("wired cut vertex is not dual")
                other = int(graph.r_wz[r]) if int(graph.r_w[r]) == v else int(graph.r_w[r])
            else:
                if graph.kind[v] != 0:
                    raise LatticeError("free cut vertex is not primal")
                other = int(graph.r_uz[r]) if int(graph.r_u[r]) == v else int(graph.r_u[r])
            if r in br_map or other in cut_kind:
                drop.add(cell_of_rhombus[r])
                continue
            br_map[r] = (akind, other, v)
    if drop:
        raise _Degenerate(frozenset(cc.cells[c][0] * 10**6 + cc.cells[c][1]
                                    for c in drop))

    lam = 1.0 / np.sqrt(1j * graph.c_nu)
    boundary = []
    corner_role = np.full(graph.n_corners, ROLE_ACTIVE, dtype=np.int8)
    for r, (akind, v_int, v_ext) in sorted(br_map.items()):
        if akind == BR_WIRED:
            cs = [graph.corner_id(int(graph.r_u[r]), v_int),
                  graph.corner_id(int(graph.r_uz[r]), v_int)]
            ext = [graph.corner_id(int(graph.r_u[r]), v_ext),
                   graph.corner_id(int(graph.r_uz[r]), v_ext)]
        else:
            cs = [graph.corner_id(v_int, int(graph.r_w[r])),
                  graph.corner_id(v_int, int(graph.r_wz[r]))]
            ext = [graph.corner_id(v_ext, int(graph.r_w[r])),
                   graph.corner_id(v_ext, int(graph.r_wz[r]))]
        for e in ext:
            corner_role[e] = ROLE_EXTERIOR
        # entry corner: canonical tangent -i*nu points into the rhombus
        zc = graph.r_center[r]
        c0, c1 = cs
        mid0 = 0.5 * (pos[graph.c_primal[c0]] + pos[graph.c_dual[c0]])
        inward = ((-1j * graph.c_nu[c0]) * np.conj(zc - mid0)).real
        entry, exit_ = (c0, c1) if inward > 0 else (c1, c0)
        dgeo = wrap_angle(np.angle(graph.c_nu[exit_]) - np.angle(graph.c_nu[entry]))
        theta = graph.r_theta[r]
        rho_c = np.exp(-0.5j * dgeo) * lam[entry] / lam[exit_]
        if abs(abs(rho_c.real) - 1.0) > 1e-9 or abs(rho_c.imag) > 1e-9:
            raise LatticeError("boundary phase is not a sign")
        rho = 1.0 if rho_c.real > 0 else -1.0
        boundary.append(BoundaryRhombus(r, akind, v_int, v_ext, entry, exit_,
                                        rho, dgeo))
    for cid in marks:
        corner_role[cid] = ROLE_MARKED

    b_rh = {br.rhombus for br in boundary}
    interior = np.array([r for r in range(graph.n_rhombi) if r not in b_rh],
                        dtype=np.int64)
    if len(interior) == 0:
        raise MeshTooCoarseError("no interior rhombus survives the marking")
    for cid in marks:
        rset = [r for r in graph.c_rh[cid] if r >= 0]
        if any(r in b_rh for r in rset):
            raise MarkedPointCollisionError(
                "marked corner sits on a boundary rhombus")

    wired_pairs = np.array([[graph.r_u[br.rhombus], graph.r_uz[br.rhombus]]
                            for br in boundary if br.kind == BR_WIRED],
                           dtype=np.int64).reshape(-1, 2)
    free_pairs = np.array([[graph.r_w[br.rhombus], graph.r_wz[br.rhombus]]
                           for br in boundary if br.kind == BR_FREE],
                          dtype=np.int64).reshape(-1, 2)

    kind = ("two_point" if bc == "dobrushin" and len(marks) == 2 else
            "four_point" if bc == "dobrushin" else bc)
    return MarkedDiscreteDomain(graph, kind, cycle, marks, mark_sides, arcs,
                                interior, boundary, corner_role,
                                wired_pairs, free_pairs)


class _Degenerate(Exception):
    def __init__(self, cellkeys):
        self.cellkeys = cellkeys


def discretize(domain_kind, lattice_kind, delta, marked_points=None,
               boundary="dobrushin", **kind_args):
    """Discretize a marked planar domain.

    domain_kind: "rectangle" (kind_args: rho), "slit_square", "disc"
        (kind_args: radius), or "polygon" (kind_args: points).
    lattice_kind: "square", "rhombic" (kind_args: pattern = list of
        half-angles), or "perturbed" (kind_args: seed, jitter in radians).
    marked_points: 2 or 4 boundary points (complex, ccw) when
        boundary="dobrushin"; ignored for boundary="wired"/"free".
    """
    if domain_kind == "rectangle":
        shape = _Rect(kind_args.get("rho", 1.0))
        extent = (1.0, kind_args.get("rho", 1.0))
    elif domain_kind == "slit_square":
        shape = _Rect(1.0)
        extent = (1.0, 1.0)
    elif domain_kind == "disc":
        radius = kind_args.get("radius", 1.0)
        shape = _Disc(radius)
        extent = (2 * radius, 2 * radius)
    elif domain_kind == "polygon":
        shape = _Polygon(kind_args["points"])
        xs = [p.real for p in shape.pts]
        ys = [p.imag for p in shape.pts]
        extent = (max(xs) - min(xs), max(ys) - min(ys))
    else:
        raise LatticeError(f"unknown domain kind {domain_kind!r}")

    spec = {k: kind_args[k] for k in ("pattern", "seed", "jitter")
            if k in kind_args}
    n_x = int(math.ceil(extent[0] / delta)) + 3
    n_y = int(math.ceil(extent[1] / delta)) + 3
    ax, by = _tracks(lattice_kind, n_x, n_y, spec)
    cx, cy = _grid_positions(ax, by)

    if domain_kind == "disc":
        shift = -(cx[n_x // 2] + cy[n_y // 2])
    elif domain_kind == "polygon":
        xs = [p.real for p in shape.pts]
        ys = [p.imag for p in shape.pts]
        shift = complex(min(xs), min(ys)) / delta
    else:
        shift = 0.0 + 0.0j  # rectangle/slit grids start at the origin corner
    cx = cx + shift

    cut_h = set()
    if domain_kind == "slit_square":
        if lattice_kind == "perturbed":
            raise LatticeError("slit_square requires unperturbed rows")
        # slit along the lattice row nearest height 1/2, from the left wall
        ys = np.imag(cy)
        j_slit = int(np.argmin(np.abs(ys * delta - 0.5)))
        if j_slit <= 0 or j_slit >= n_y:
            raise MeshTooCoarseError("mesh too coarse for the slit")
        x_tip_target = 0.5 / delta
        for i in range(n_x):
            # horizontal side from grid (i, j_slit) to (i+1, j_slit)
            xr = (cx[i + 1] + cy[j_slit]).real
            if xr <= x_tip_target + 1e-9:
                cut_h.add((i, j_slit))

    keep = _cells_in_shape(shape, cx, cy, delta)
    if not keep.any():
        raise MeshTooCoarseError("mesh too coarse: no cell inside the domain")
    keep = _fill_holes(keep)
    keep = _largest_component(keep, cut_h)

    for _ in range(32):
        cc = _CellComplex(keep, cx, cy, cut_h)
        try:
            return _build_domain(cc, delta, marked_points, boundary)
        except _Degenerate as d:
            keep = keep.copy()
            for key in d.cellkeys:
                keep[key // 10**6, key % 10**6] = False
            keep = _largest_component(keep, cut_h)
    raise MeshTooCoarseError("degenerate boundary cells keep reappearing")


def mark_degenerate(domain: MarkedDiscreteDomain, boundary_point):
    """Re-mark a fully wired domain at the two interior corners of the
    boundary rhombus nearest ``boundary_point`` (its inner dual vertex plays
    the role of the degenerate pair of marked corners)."""
    if domain.kind != "wired":
        raise LatticeError("degenerate marking needs a fully wired domain")
    g = domain.graph
    best, bestd = None, math.inf
    for idx, br in enumerate(domain.boundary):
        zext = g.pos[br.ext_vertex] * g.delta
        dd = abs(zext - complex(boundary_point))
        if dd < bestd:
            best, bestd = idx, dd
    boundary = [BoundaryRhombus(**vars(br)) for br in domain.boundary]
    target = boundary[best]
    target.is_marked = True
    marks = [target.exit_corner, target.entry_corner]  # (a, b): path runs b -> a
    corner_role = domain.corner_role.copy()
    corner_role[marks[0]] = ROLE_MARKED
    corner_role[marks[1]] = ROLE_MARKED
    return MarkedDiscreteDomain(g, "degenerate", domain.cycle, marks,
                                domain.mark_sides, domain.arcs,
                                domain.interior_rhombi, boundary, corner_role,
                                domain.wired_pairs, domain.free_pairs)


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    violations: list

    @property
    def ok(self):
        return not self.violations


def validate_isoradial(graph: IsoradialGraph, eta: float) -> ValidationReport:
    """Check rhombus geometry, the uniform angle bound, orientation, and
    corner incidence counts."""
    v = []
    pos = graph.pos
    for r in range(graph.n_rhombi):
        u, uz = pos[graph.r_u[r]], pos[graph.r_uz[r]]
        w, wz = pos[graph.r_w[r]], pos[graph.r_wz[r]]
        for a, b in ((u, w), (w, uz), (uz, wz), (wz, u)):
            if abs(abs(b - a) - 1.0) > 1e-9:
                v.append(("side_length", r))
                break
        d, e = uz - u, wz - w
        if abs((d * np.conj(e)).real) > 1e-9 * abs(d) * abs(e):
            v.append(("diagonals_not_perpendicular", r))
        th = graph.r_theta[r]
        if not (eta - 1e-12 <= th <= math.pi / 2 - eta + 1e-12):
            v.append(("angle_bound", r))
        if (np.conj(d) * e).imag <= 0:
            v.append(("orientation", r))
    counts = np.sum(graph.c_rh >= 0, axis=1)
    if counts.min() < 1 or counts.max() > 2:
        v.append(("corner_incidence", -1))
    return ValidationReport(v)


# ---------------------------------------------------------------------------
# serialization


SCHEMA = "isofk-graph-v1"


def domain_to_json(domain: MarkedDiscreteDomain) -> str:
    g = domain.graph
    payload = {
        "schema": SCHEMA,
        "delta": g.delta,
        "kind": domain.kind,
        "vertices": [
            {"id": i, "x": float(g.pos[i].real), "y": float(g.pos[i].imag),
             "kind": int(g.kind[i])} for i in range(g.n_vertices)],
        "rhombi": [
            {"id": r, "u": int(g.r_u[r]), "uz": int(g.r_uz[r]),
             "w": int(g.r_w[r]), "wz": int(g.r_wz[r]),
             "theta_bar": float(g.r_theta[r])} for r in range(g.n_rhombi)],
        "cycle": [int(x) for x in domain.cycle],
        "marks": [int(m) for m in domain.marks],
        "mark_sides": [int(m) for m in domain.mark_sides],
        "arcs": [{"kind": int(k), "sides": [int(s) for s in sides]}
                 for k, sides in domain.arcs],
        "boundary": [
            {"rhombus": int(br.rhombus), "kind": int(br.kind),
             "int_vertex": int(br.int_vertex), "ext_vertex": int(br.ext_vertex),
             "entry": int(br.entry_corner), "exit": int(br.exit_corner),
             "rho": float(br.rho), "d_turn": float(br.d_turn),
             "marked": bool(br.is_marked)}
            for br in domain.boundary],
    }
    return json.dumps(payload)


def domain_from_json(text: str) -> MarkedDiscreteDomain:
    d = json.loads(text)
    if d.get("schema") != SCHEMA:
        raise LatticeError(f"unsupported schema {d.get('schema')!r}")
    pos = np.array([complex(v["x"], v["y"]) for v in d["vertices"]])
    kind = np.array([v["kind"] for v in d["vertices"]], dtype=np.int8)
    r_u = [r["u"] for r in d["rhombi"]]
    r_uz = [r["uz"] for r in d["rhombi"]]
    r_w = [r["w"] for r in d["rhombi"]]
    r_wz = [r["wz"] for r in d["rhombi"]]
    r_theta = [r["theta_bar"] for r in d["rhombi"]]
    g = IsoradialGraph(d["delta"], pos, kind, r_u, r_uz, r_w, r_wz, r_theta)
    boundary = []
    corner_role = np.full(g.n_corners, ROLE_ACTIVE, dtype=np.int8)
    for b in d["boundary"]:
        br = BoundaryRhombus(b["rhombus"], b["kind"], b["int_vertex"],
                             b["ext_vertex"], b["entry"], b["exit"],
                             b["rho"], b["d_turn"], b.get("marked", False))
        boundary.append(br)
        r = br.rhombus
        if br.kind == BR_WIRED:
            ext = [g.corner_id(int(g.r_u[r]), br.ext_vertex),
                   g.corner_id(int(g.r_uz[r]), br.ext_vertex)]
        else:
            ext = [g.corner_id(br.ext_vertex, int(g.r_w[r])),
                   g.corner_id(br.ext_vertex, int(g.r_wz[r]))]
        for e in ext:
            corner_role[e] = ROLE_EXTERIOR
    marks = [int(m) for m in d["marks"]]
    for m in marks:
        corner_role[m] = ROLE_MARKED
    b_rh = {br.rhombus for br in boundary}
    interior = np.array([r for r in range(g.n_rhombi) if r not in b_rh],
                        dtype=np.int64)
    wired_pairs = np.array([[g.r_u[br.rhombus], g.r_uz[br.rhombus]]
                            for br in boundary if br.kind == BR_WIRED],
                           dtype=np.int64).reshape(-1, 2)
    free_pairs = np.array([[g.r_w[br.rhombus], g.r_wz[br.rhombus]]
                           for br in boundary if br.kind == BR_FREE],
                          dtype=np.int64).reshape(-1, 2)
    return MarkedDiscreteDomain(
        g, d["kind"], np.array(d["cycle"], dtype=np.int64), marks,
        [int(m) for m in d["mark_sides"]],
        [(a["kind"], list(a["sides"])) for a in d["arcs"]],
        interior, boundary, corner_role, wired_pairs, free_pairs)
