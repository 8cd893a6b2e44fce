"""Adaptive triangular meshes driven by newest-vertex bisection.

A triangle is stored as a vertex triple ``(a, b, c)`` where ``(a, b)`` is its
refinement edge and ``c`` the newest vertex.  Bisecting at the midpoint ``m``
of ``(a, b)`` yields the children ``(c, a, m)`` and ``(b, c, m)``: orientation
is preserved and the former non-refinement edges become the children's
refinement edges.  Every triangle ever created is kept in a forest with
parent/children/midpoint links; the leaves form the current triangulation and
coarsening simply reverts a sibling pair to its parent.

Both initial constructors label refinement edges so that each one is shared by
exactly the two triangles based on it (square cells mark their diagonal, disc
strips mark the circumferential edge), which makes hanging-node closure
terminate.

Assembly code never sees the forest: each :class:`AdaptiveMesh` snapshot
carries compacted ``vertices``/``triangles`` arrays, and ``adapt`` returns a
fresh snapshot plus a :class:`TransferMap` whose rows are convex combinations
of old nodal values (midpoint averaging), so affine fields transfer exactly
and nodal simplex membership survives.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse as sp

SQRT2 = math.sqrt(2.0)

AXIS = 1   # symmetry axis of a quarter domain, natural boundary condition
OUTER = 2  # physical boundary, Dirichlet data lives here (wins at axis corners)


def _ekey(u, v):
    return (u, v) if u < v else (v, u)


class TransferMap:
    """Sparse interpolation operator taking old-mesh nodal fields to a new mesh.

    Rows are convex combinations (each row sums to one), so transferred phase
    fields stay on the Gibbs simplex nodewise and affine functions are
    reproduced exactly.
    """

    def __init__(self, matrix, is_identity=False):
        self.matrix = matrix
        self.is_identity = is_identity

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, field):
        field = np.asarray(field)
        if self.is_identity:
            return field.copy()
        return self.matrix @ field


class _Forest:
    """Growable storage for the bisection forest and its edge bookkeeping."""

    def __init__(self):
        self.vx = np.empty(1024)
        self.vy = np.empty(1024)
        self.nv = 0
        cap = 1024
        self.tri = np.empty((cap, 3), dtype=np.int64)
        self.parent = np.full(cap, -1, dtype=np.int64)
        self.child0 = np.full(cap, -1, dtype=np.int64)
        self.child1 = np.full(cap, -1, dtype=np.int64)
        self.mid = np.full(cap, -1, dtype=np.int64)
        self.alive = np.zeros(cap, dtype=bool)
        self.nt = 0
        self.version = 0
        self.edge_mid = {}   # sorted vertex pair -> midpoint vertex id
        self.bdry = {}       # sorted vertex pair -> OUTER or AXIS, leaf boundary edges

    def add_vertex(self, x, y):
        if self.nv == len(self.vx):
            self.vx = np.concatenate([self.vx, np.empty(len(self.vx))])
            self.vy = np.concatenate([self.vy, np.empty(len(self.vy))])
        self.vx[self.nv] = x
        self.vy[self.nv] = y
        self.nv += 1
        return self.nv - 1

    def add_tri(self, a, b, c, parent=-1):
        if self.nt == len(self.parent):
            cap = len(self.parent)
            self.tri = np.concatenate([self.tri, np.empty((cap, 3), dtype=np.int64)])
            for name in ("parent", "child0", "child1", "mid"):
                setattr(self, name, np.concatenate(
                    [getattr(self, name), np.full(cap, -1, dtype=np.int64)]))
            self.alive = np.concatenate([self.alive, np.zeros(cap, dtype=bool)])
        t = self.nt
        self.tri[t, 0] = a
        self.tri[t, 1] = b
        self.tri[t, 2] = c
        self.parent[t] = parent
        self.child0[t] = -1
        self.child1[t] = -1
        self.mid[t] = -1
        self.alive[t] = True
        self.nt += 1
        return t

    def add_tri_ccw(self, a, b, c):
        """Add a root triangle, swapping the refinement edge ends if needed for CCW."""
        ax, ay = self.vx[a], self.vy[a]
        det = (self.vx[b] - ax) * (self.vy[c] - ay) - (self.vy[b] - ay) * (self.vx[c] - ax)
        if det < 0:
            a, b = b, a
        return self.add_tri(a, b, c)

    def bisect(self, t, new_edge_log=None):
        """Split leaf t at the midpoint of its refinement edge; returns the children."""
        a, b, c = self.tri[t]
        key = _ekey(a, b)
        m = self.edge_mid.get(key)
        if m is None:
            m = self.add_vertex(0.5 * (self.vx[a] + self.vx[b]),
                                0.5 * (self.vy[a] + self.vy[b]))
            self.edge_mid[key] = m
            if new_edge_log is not None:
                new_edge_log.append((m, a, b))
            kind = self.bdry.pop(key, None)
            if kind is not None:
                self.bdry[_ekey(a, m)] = kind
                self.bdry[_ekey(m, b)] = kind
        t0 = self.add_tri(c, a, m, parent=t)
        t1 = self.add_tri(b, c, m, parent=t)
        self.child0[t] = t0
        self.child1[t] = t1
        self.mid[t] = m
        self.version += 1
        return t0, t1

    def merge(self, t):
        """Revert the two (leaf) children of t back into t."""
        c0, c1 = self.child0[t], self.child1[t]
        self.alive[c0] = False
        self.alive[c1] = False
        self.child0[t] = -1
        self.child1[t] = -1
        a, b = self.tri[t, 0], self.tri[t, 1]
        key = _ekey(a, b)
        m = self.mid[t]
        self.mid[t] = -1
        if self.edge_mid.get(key) == m:
            del self.edge_mid[key]
            kind = self.bdry.pop(_ekey(a, m), None)
            self.bdry.pop(_ekey(m, b), None)
            if kind is not None:
                self.bdry[key] = kind
        self.version += 1

    def leaves(self):
        n = self.nt
        return np.nonzero(self.alive[:n] & (self.child0[:n] == -1))[0]


class AdaptiveMesh:
    """One snapshot of the adaptive triangulation, plus the shared forest.

    ``vertices`` is ``(n_vertices, 2)`` float64 and ``triangles`` is
    ``(n_triangles, 3)`` int64 in compact numbering; triangles are counter
    clockwise and their first two vertices span the refinement edge.
    """

    def __init__(self, forest, half_width=None, quarter=False):
        self._forest = forest
        self.quarter = quarter
        self.half_width = half_width
        self._compact()

    def _compact(self):
        f = self._forest
        self._version = f.version
        leaf_ids = f.leaves()
        tri_g = f.tri[leaf_ids]
        c2g = np.unique(tri_g)
        g2c = np.full(f.nv, -1, dtype=np.int64)
        g2c[c2g] = np.arange(len(c2g))
        self._c2g = c2g
        self._g2c = g2c
        self._leaf_ids = leaf_ids
        self.vertices = np.column_stack([f.vx[c2g], f.vy[c2g]])
        self.triangles = g2c[tri_g]
        kinds = np.zeros(len(c2g), dtype=np.int8)
        for (u, v), kind in f.bdry.items():
            for g in (u, v):
                c = g2c[g]
                if c >= 0:
                    kinds[c] = max(kinds[c], kind)
        self.vertex_boundary_kind = kinds

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def outer_vertices(self):
        """Compact ids of vertices on the physical (Dirichlet) boundary."""
        return np.nonzero(self.vertex_boundary_kind == OUTER)[0]

    def triangle_diameters(self):
        p = self.vertices[self.triangles]
        d01 = np.linalg.norm(p[:, 0] - p[:, 1], axis=1)
        d12 = np.linalg.norm(p[:, 1] - p[:, 2], axis=1)
        d20 = np.linalg.norm(p[:, 2] - p[:, 0], axis=1)
        return np.maximum(np.maximum(d01, d12), d20)

    def triangle_areas(self):
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    # ------------------------------------------------------------------
    # adaptation

    def adapt(self, vertex_flags, h_fine, h_coarse, max_rounds=64):
        """Refine near flagged vertices and coarsen away from them.

        Flagged leaves are bisected until their diameter is at most
        ``h_fine * sqrt(2)``; sibling pairs whose parent has diameter at most
        ``h_coarse * sqrt(2)``, touches no flagged vertex and whose midpoint is
        used by no other leaf are merged back.  A midpoint of an edge whose
        endpoints are both flagged counts as flagged itself (recursively), so
        a fully flagged region refines to ``h_fine`` throughout while a flag
        set without flagged edges stays one star local.  Returns the new
        snapshot and the nodal transfer operator.
        """
        f = self._forest
        if f.version != self._version:
            raise RuntimeError("adapt called on a stale mesh snapshot")
        flags = np.asarray(vertex_flags, dtype=bool)
        if flags.shape != (self.n_vertices,):
            raise ValueError("flags must be one bool per compact vertex")
        gflags = np.zeros(f.nv, dtype=bool)
        gflags[self._c2g] = flags
        # midpoints created by earlier adapts inherit flags from their edge
        # endpoints; ascending midpoint id makes the pass transitive
        for (u, v), m in sorted(f.edge_mid.items(), key=lambda kv: kv[1]):
            if gflags[u] and gflags[v]:
                gflags[m] = True
        nv_before = f.nv
        old_g2c = self._g2c

        new_midpoints = []  # (midpoint id, endpoint u, endpoint v) in creation order
        changed, gflags = self._refine(gflags, h_fine, new_midpoints, max_rounds)
        if f.nv > len(gflags):
            gflags = np.concatenate(
                [gflags, np.zeros(f.nv - len(gflags), dtype=bool)])
        changed |= self._coarsen(gflags, h_coarse)

        if not changed:
            ident = TransferMap(sp.identity(self.n_vertices, format="csr"),
                                is_identity=True)
            return self, ident

        new_mesh = AdaptiveMesh(f, half_width=self.half_width, quarter=self.quarter)
        transfer = self._build_transfer(new_mesh, nv_before, new_midpoints, old_g2c)
        return new_mesh, transfer

    def _coarsen(self, gflags, h_coarse):
        f = self._forest
        limit2 = 2.0 * h_coarse * h_coarse
        changed = False
        while True:
            leaf_ids = f.leaves()
            if len(leaf_ids) == 0:
                break
            parents = f.parent[leaf_ids]
            cand = np.unique(parents[parents >= 0])
            if len(cand) == 0:
                break
            c0 = f.child0[cand]
            c1 = f.child1[cand]
            both_leaves = (f.child0[c0] == -1) & (f.child0[c1] == -1) \
                & f.alive[c0] & f.alive[c1]
            cand = cand[both_leaves]
            if len(cand) == 0:
                break
            tri = f.tri[cand]
            mids = f.mid[cand]
            unflagged = ~(gflags[tri[:, 0]] | gflags[tri[:, 1]]
                          | gflags[tri[:, 2]] | gflags[mids])
            d2 = np.zeros(len(cand))
            px = f.vx[tri]
            py = f.vy[tri]
            for i, j in ((0, 1), (1, 2), (2, 0)):
                d2 = np.maximum(d2, (px[:, i] - px[:, j]) ** 2
                                + (py[:, i] - py[:, j]) ** 2)
            small = d2 <= limit2 * (1 + 1e-12)
            # merging must not re-expose a split edge (hanging node churn):
            # the parent's non-refinement edges must currently be unsplit
            if f.edge_mid:
                nv = f.nv
                split_codes = np.fromiter(
                    (u * nv + v for (u, v) in f.edge_mid.keys()),
                    dtype=np.int64, count=len(f.edge_mid))
                split_codes.sort()
                clean = np.ones(len(cand), dtype=bool)
                for i, j in ((1, 2), (2, 0)):
                    u = np.minimum(tri[:, i], tri[:, j])
                    v = np.maximum(tri[:, i], tri[:, j])
                    codes = u * nv + v
                    pos = np.searchsorted(split_codes, codes)
                    pos[pos == len(split_codes)] = 0
                    clean &= split_codes[pos] != codes
            else:
                clean = True
            cand = cand[unflagged & small & clean]
            if len(cand) == 0:
                break
            # a midpoint may be removed only if every leaf using it is merged
            counts = np.bincount(f.tri[f.leaves()].ravel(), minlength=f.nv)
            mids = f.mid[cand]
            pair_count = np.bincount(mids, minlength=f.nv)
            removable = 2 * pair_count[mids] == counts[mids]
            cand = cand[removable]
            if len(cand) == 0:
                break
            for t in cand:
                f.merge(t)
            changed = True
        return changed

    def _refine(self, gflags, h_fine, new_midpoints, max_rounds):
        f = self._forest
        limit2 = 2.0 * h_fine * h_fine  # (h_fine * sqrt(2))^2
        changed = False
        seen = 0
        for _ in range(max_rounds):
            leaf_ids = f.leaves()
            tri = f.tri[leaf_ids]
            if f.nv > len(gflags):
                gflags = np.concatenate(
                    [gflags, np.zeros(f.nv - len(gflags), dtype=bool)])
            while seen < len(new_midpoints):
                m, a, b = new_midpoints[seen]
                gflags[m] = gflags[a] and gflags[b]
                seen += 1
            flagged = gflags[tri[:, 0]] | gflags[tri[:, 1]] | gflags[tri[:, 2]]
            px = f.vx[tri]
            py = f.vy[tri]
            d2 = np.zeros(len(leaf_ids))
            for i, j in ((0, 1), (1, 2), (2, 0)):
                d2 = np.maximum(d2, (px[:, i] - px[:, j]) ** 2
                                + (py[:, i] - py[:, j]) ** 2)
            marked = leaf_ids[flagged & (d2 > limit2 * (1 + 1e-12))]
            if len(marked) == 0:
                if not self._close_hanging(new_midpoints):
                    break
                changed = True
                continue
            for t in marked:
                if f.child0[t] == -1:
                    f.bisect(t, new_midpoints)
            changed = True
        else:
            raise RuntimeError("mesh refinement did not settle")
        return changed, gflags

    def _close_hanging(self, new_midpoints):
        """Bisect every leaf with a split edge; returns True if anything split."""
        f = self._forest
        split_any = False
        while True:
            if not f.edge_mid:
                return split_any
            leaf_ids = f.leaves()
            tri = f.tri[leaf_ids]
            nv = f.nv
            codes = np.concatenate([
                tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
            codes = (np.minimum(codes[:, 0], codes[:, 1]) * nv
                     + np.maximum(codes[:, 0], codes[:, 1]))
            split_codes = np.fromiter(
                (u * nv + v for (u, v) in f.edge_mid.keys()),
                dtype=np.int64, count=len(f.edge_mid))
            split_codes.sort()
            pos = np.searchsorted(split_codes, codes)
            pos[pos == len(split_codes)] = 0
            hang = split_codes[pos] == codes
            hang = hang.reshape(3, -1).any(axis=0)
            if not hang.any():
                return split_any
            for t in leaf_ids[hang]:
                if f.child0[t] == -1:
                    f.bisect(t, new_midpoints)
            split_any = True

    def _build_transfer(self, new_mesh, nv_before, new_midpoints, old_g2c):
        parents = {m: (u, v) for (m, u, v) in new_midpoints}
        weight_cache = {}

        def weights_for(g):
            if g < nv_before:
                c = old_g2c[g]
                if c < 0:
                    raise RuntimeError("transfer hit a vertex outside the old mesh")
                return {c: 1.0}
            got = weight_cache.get(g)
            if got is not None:
                return got
            u, v = parents[g]
            wu = weights_for(u)
            wv = weights_for(v)
            w = dict((k, 0.5 * val) for k, val in wu.items())
            for k, val in wv.items():
                w[k] = w.get(k, 0.0) + 0.5 * val
            weight_cache[g] = w
            return w

        rows, cols, vals = [], [], []
        for c_new, g in enumerate(new_mesh._c2g):
            for c_old, w in weights_for(g).items():
                rows.append(c_new)
                cols.append(c_old)
                vals.append(w)
        mat = sp.csr_matrix((vals, (rows, cols)),
                            shape=(new_mesh.n_vertices, self.n_vertices))
        return TransferMap(mat)

    # ------------------------------------------------------------------
    # validation

    def validate(self):
        """Run structural checks; returns a dict of booleans (all must be True)."""
        areas = self.triangle_areas()
        tri = self.triangles
        nv = self.n_vertices
        edges = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        codes = (np.minimum(edges[:, 0], edges[:, 1]) * nv
                 + np.maximum(edges[:, 0], edges[:, 1]))
        codes_sorted = np.sort(codes)
        uniq, counts = np.unique(codes_sorted, return_counts=True)
        f = self._forest
        if f.version != self._version:
            raise RuntimeError("validate called on a stale mesh snapshot")
        hanging = False
        for (u, v) in f.edge_mid.keys():
            cu, cv = self._g2c[u], self._g2c[v]
            if cu < 0 or cv < 0:
                continue
            code = min(cu, cv) * nv + max(cu, cv)
            i = np.searchsorted(uniq, code)
            if i < len(uniq) and uniq[i] == code:
                hanging = True
        boundary_codes = set()
        for (u, v) in f.bdry.keys():
            cu, cv = self._g2c[u], self._g2c[v]
            if cu >= 0 and cv >= 0:
                boundary_codes.add(min(cu, cv) * nv + max(cu, cv))
        mesh_boundary = set(uniq[counts == 1].tolist())
        return {
            "positive_areas": bool((areas > 0).all()),
            "edge_counts": bool((counts <= 2).all()),
            "no_hanging_nodes": not hanging,
            "boundary_edges_tracked": boundary_codes == mesh_boundary,
            "vertices_referenced": bool(len(np.unique(tri)) == nv),
        }


def build_square_mesh(half_width, h, quarter=False):
    """Criss-cross triangulation of ``(-w, w)^2`` (or ``(0, w)^2`` for a quarter).

    The cell count per side rounds up so the actual spacing is at most ``h``
    and the axes are mesh lines; each cell's diagonal runs from its corner
    nearest the origin to the far corner, so the full mesh is mirror symmetric
    and the quarter mesh is its exact restriction.  Both triangles of a cell
    use the diagonal as refinement edge.
    """
    if half_width <= 0 or h <= 0:
        raise ValueError("half_width and h must be positive")
    if h > half_width:
        raise ValueError("h must not exceed half_width")
    n_half = int(math.ceil(half_width / h - 1e-12))
    f = _Forest()
    if quarter:
        n = n_half
        coords = np.linspace(0.0, half_width, n + 1)
    else:
        n = 2 * n_half
        coords = np.linspace(-half_width, half_width, n + 1)
    for y in coords:
        for x in coords:
            f.add_vertex(x, y)

    def vid(i, j):
        return j * (n + 1) + i

    for j in range(n):
        for i in range(n):
            cx = 0.5 * (coords[i] + coords[i + 1])
            cy = 0.5 * (coords[j] + coords[j + 1])
            p00, p10 = vid(i, j), vid(i + 1, j)
            p01, p11 = vid(i, j + 1), vid(i + 1, j + 1)
            if cx * cy > 0:
                d0, d1, e0, e1 = p00, p11, p10, p01
            else:
                d0, d1, e0, e1 = p10, p01, p00, p11
            f.add_tri_ccw(d0, d1, e0)
            f.add_tri_ccw(d0, d1, e1)

    for j in range(n):
        for (i0, j0, i1, j1) in ((0, j, 0, j + 1), (n, j, n, j + 1)):
            kind = AXIS if (quarter and abs(coords[i0]) < 1e-12) else OUTER
            f.bdry[_ekey(vid(i0, j0), vid(i1, j1))] = kind
    for i in range(n):
        for (i0, j0, i1, j1) in ((i, 0, i + 1, 0), (i, n, i + 1, n)):
            kind = AXIS if (quarter and abs(coords[j0]) < 1e-12) else OUTER
            f.bdry[_ekey(vid(i0, j0), vid(i1, j1))] = kind
    return AdaptiveMesh(f, half_width=half_width, quarter=quarter)


def build_disc_mesh(radius, h):
    """Polygonal disc of concentric rings; ring edges are the refinement edges.

    Ring ``k`` sits at radius ``radius * k / K`` with ``K = ceil(radius / h)``
    and carries ``k * n1`` points, ``n1 = ceil(2 pi radius / (K h))``, so the
    boundary polygon has at least ``ceil(2 pi radius / h)`` segments.  Strips
    between consecutive rings are triangulated by an angular two-pointer merge.
    """
    if radius <= 0 or h <= 0:
        raise ValueError("radius and h must be positive")
    K = int(math.ceil(radius / h - 1e-12))
    n1 = int(math.ceil(2.0 * math.pi * radius / (K * h) - 1e-12))
    n1 = max(n1, 4)
    f = _Forest()
    center = f.add_vertex(0.0, 0.0)
    rings = [[center]]
    for k in range(1, K + 1):
        r = radius * k / K
        nk = n1 * k
        ang = 2.0 * np.pi * np.arange(nk) / nk
        ring = [f.add_vertex(r * math.cos(t), r * math.sin(t)) for t in ang]
        rings.append(ring)

    ring1 = rings[1]
    for i in range(len(ring1)):
        f.add_tri_ccw(ring1[i], ring1[(i + 1) % len(ring1)], center)
    for k in range(1, K):
        inner, outer = rings[k], rings[k + 1]
        ni, no = len(inner), len(outer)
        i = j = 0
        while i < ni or j < no:
            a_in = 2.0 * math.pi * (i + 1) / ni if i < ni else math.inf
            a_out = 2.0 * math.pi * (j + 1) / no if j < no else math.inf
            if a_out <= a_in:
                f.add_tri_ccw(outer[j % no], outer[(j + 1) % no], inner[i % ni])
                j += 1
            else:
                f.add_tri_ccw(inner[i % ni], inner[(i + 1) % ni], outer[j % no])
                i += 1
    last = rings[K]
    for i in range(len(last)):
        f.bdry[_ekey(last[i], last[(i + 1) % len(last)])] = OUTER
    return AdaptiveMesh(f, half_width=radius, quarter=False)


def interface_vertex_flags(phi, delta=1e-3):
    """Vertices inside the diffuse band: any component strictly between the obstacles."""
    phi = np.asarray(phi)
    inside = (phi > delta) & (phi < 1.0 - delta)
    return inside.any(axis=1)


def straddle_vertex_flags(mesh, phi):
    """Flag vertices of leaves whose nodal values cross 1/2 in some component.

    Safety net for meshes so coarse that the diffuse band can fall between
    vertices; once the band is resolved this adds nothing beyond
    :func:`interface_vertex_flags`.
    """
    tri = mesh.triangles
    vals = phi[tri]  # (nt, 3 vertices, 3 phases)
    lo = vals.min(axis=1)
    hi = vals.max(axis=1)
    crossing = ((lo < 0.5) & (hi > 0.5)).any(axis=1)
    flags = np.zeros(mesh.n_vertices, dtype=bool)
    flags[tri[crossing].ravel()] = True
    return flags
