"""Indexed cell tables and bitmask machinery for a box complex.

Everything downstream (enumeration, exact engines, cluster sums) works on
integer bitmasks over the ordered positive-cell lists built here, which keeps
the 2^E style scans and the polymer adjacency tests cheap.
"""

from __future__ import annotations

import functools

import numpy as np

from .dec import BoxSpec, boundary
from .errors import NumericError, ResourceError


def _mask_bits(mask):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


class Lattice:
    """Cell index tables for one box, plus GF(2) surface solving."""

    def __init__(self, box):
        self.box = box
        self.m = box.m
        self.verts = list(box.cells(0))
        self.edges = list(box.cells(1))
        self.plaqs = list(box.cells(2))
        self.cubes = list(box.cells(3)) if self.m >= 3 else []
        self.n_verts = len(self.verts)
        self.n_edges = len(self.edges)
        self.n_plaqs = len(self.plaqs)
        self._vidx = {c.base: i for i, c in enumerate(self.verts)}
        self._eidx = {(c.base, c.dirs): i for i, c in enumerate(self.edges)}
        self._pidx = {(c.base, c.dirs): i for i, c in enumerate(self.plaqs)}

        # edge <-> vertex incidence
        self.edge_verts = np.empty((self.n_edges, 2), dtype=np.int64)
        self.edge_vmask = [0] * self.n_edges
        for i, e in enumerate(self.edges):
            a = self._vidx[e.base]
            up = list(e.base)
            up[e.dirs[0]] += 1
            b = self._vidx[tuple(up)]
            self.edge_verts[i] = (a, b)
            self.edge_vmask[i] = (1 << a) | (1 << b)

        # plaquette <-> edge incidence (each plaquette has 4 boundary edges)
        self.plaq_edges = np.empty((self.n_plaqs, 4), dtype=np.int64)
        self.plaq_emask = [0] * self.n_plaqs
        self.edge_pmask = [0] * self.n_edges
        for p, cell in enumerate(self.plaqs):
            for j, (face, _) in enumerate(sorted(boundary(cell).items(), key=lambda it: it[0].sort_key())):
                e = self._eidx[(face.base, face.dirs)]
                self.plaq_edges[p, j] = e
                self.plaq_emask[p] |= 1 << e
                self.edge_pmask[e] |= 1 << p

        # plaquette <-> cube incidence drives vortex adjacency for m >= 3;
        # boxes without 3-cells fall back to shared-edge adjacency.
        self.cube_pmask = []
        self.plaq_cmask = [0] * self.n_plaqs
        for ci, cube in enumerate(self.cubes):
            mask = 0
            for face, _ in boundary(cube).items():
                p = self._pidx[(face.base, face.dirs)]
                mask |= 1 << p
                self.plaq_cmask[p] |= 1 << ci
            self.cube_pmask.append(mask)
        # Vortex adjacency: two plaquettes interact iff they lie in the
        # boundary of a common 3-cell; without 3-cells (m = 2) only a shared
        # plaquette (support overlap) remains, so distinct vortices there
        # never interact and vortex supports decompose into single plaquettes.
        self.has_cubes = bool(self.cubes)
        self.plaq_adj_mask = [0] * self.n_plaqs
        for p in range(self.n_plaqs):
            reach = 1 << p
            for ci in _mask_bits(self.plaq_cmask[p]):
                reach |= self.cube_pmask[ci]
            self.plaq_adj_mask[p] = reach

        # edge adjacency via shared endpoints (the path graph)
        vert_emask = [0] * self.n_verts
        for i in range(self.n_edges):
            for v in self.edge_verts[i]:
                vert_emask[v] |= 1 << i
        self.vert_emask = vert_emask
        self.edge_adj_mask = [0] * self.n_edges
        for i in range(self.n_edges):
            self.edge_adj_mask[i] = vert_emask[self.edge_verts[i, 0]] | vert_emask[self.edge_verts[i, 1]]

        self.interior_edges = [e for e in range(self.n_edges)
                               if self.edge_pmask[e].bit_count() == 2 * (self.m - 1)]
        # bulk plaquettes: every incident cell of one dimension up exists, so
        # closedness constraints around them match the infinite lattice
        if self.m >= 3:
            self.interior_plaqs = [p for p in range(self.n_plaqs)
                                   if self.plaq_cmask[p].bit_count() == 2 * (self.m - 2)]
        else:
            interior = set(self.interior_edges)
            self.interior_plaqs = [p for p in range(self.n_plaqs)
                                   if all(e in interior
                                          for e in _mask_bits(self.plaq_emask[p]))]
        self._echelon = None

    # -- lookups ---------------------------------------------------------

    def eidx(self, cell):
        return self._eidx[(cell.positive().base, cell.dirs)]

    def pidx(self, cell):
        return self._pidx[(cell.positive().base, cell.dirs)]

    def vidx(self, vertex):
        return self._vidx[tuple(vertex)]

    def edge_mask(self, cells):
        mask = 0
        for c in cells:
            mask |= 1 << self.eidx(c)
        return mask

    def edge_cells(self, mask):
        return tuple(self.edges[i] for i in _mask_bits(mask))

    def plaq_mask(self, cells):
        mask = 0
        for c in cells:
            mask |= 1 << self.pidx(c)
        return mask

    def plaq_cells(self, mask):
        return tuple(self.plaqs[i] for i in _mask_bits(mask))

    def straight_line_mask(self, start, n, axis=0):
        """Edge mask of the straight n-edge path from `start` along `axis`."""
        mask = 0
        x = list(start)
        for _ in range(n):
            mask |= 1 << self._eidx[(tuple(x), (axis,))]
            x[axis] += 1
        return mask

    def centered_line_mask(self, n, axis=0):
        lo, hi = self.box.extents[axis]
        if hi - lo < n:
            raise ValueError(f"line of length {n} does not fit the box")
        start = [(l + h) // 2 for l, h in self.box.extents]
        start[axis] = lo + (hi - lo - n) // 2
        return self.straight_line_mask(start, n, axis)

    # -- mask topology ---------------------------------------------------

    def vmask_of_edges(self, emask):
        out = 0
        for e in _mask_bits(emask):
            out |= self.edge_vmask[e]
        return out

    def odd_vertices(self, emask):
        """Vertices of odd degree in the edge set (the mod-2 boundary)."""
        deg = {}
        for e in _mask_bits(emask):
            for v in self.edge_verts[e]:
                deg[v] = deg.get(v, 0) + 1
        return sorted(v for v, d in deg.items() if d & 1)

    def edges_connected(self, emask):
        """Connectivity of an edge set through shared vertices."""
        if emask == 0:
            return True
        first = emask & -emask
        seen = first
        frontier = first
        while frontier:
            reach = 0
            for e in _mask_bits(frontier):
                reach |= self.edge_adj_mask[e]
            frontier = reach & emask & ~seen
            seen |= frontier
        return seen == emask

    def plaqs_connected(self, pmask):
        if pmask == 0:
            return True
        first = pmask & -pmask
        seen = first
        frontier = first
        while frontier:
            reach = 0
            for p in _mask_bits(frontier):
                reach |= self.plaq_adj_mask[p]
            frontier = reach & pmask & ~seen
            seen |= frontier
        return seen == pmask

    def form_closed(self, pmask):
        """d(omega) = 0 for the 2-form given by a plaquette mask."""
        for cube_mask in self.cube_pmask:
            if (pmask & cube_mask).bit_count() & 1:
                return False
        return True

    # -- GF(2) surface solving -------------------------------------------

    def _surface_echelon(self):
        if self._echelon is None:
            pivots = []
            used_rows = 0
            for p in range(self.n_plaqs):
                col = self.plaq_emask[p]
                combo = 1 << p
                for row, pcol, pcombo in pivots:
                    if col >> row & 1:
                        col ^= pcol
                        combo ^= pcombo
                if col:
                    row = (col & -col).bit_length() - 1
                    pivots.append((row, col, combo))
                    used_rows |= 1 << row
            self._echelon = pivots
        return self._echelon

    def surface_mask_solve(self, emask):
        """Some plaquette set q with boundary(q) = the edge set, mod 2."""
        b = emask
        q = 0
        for row, col, combo in self._surface_echelon():
            if b >> row & 1:
                b ^= col
                q ^= combo
        if b:
            raise NumericError("edge set is not a mod-2 boundary in this box")
        return q

    def surface_mask_staircase(self, emask):
        """Axis-projection fill: push edges down the last axis, then recurse."""
        q = 0
        cur = emask
        for axis in range(self.m - 1, 0, -1):
            lo = self.box.extents[axis][0]
            nxt = 0
            for e in _mask_bits(cur):
                cell = self.edges[e]
                d = cell.dirs[0]
                if d == axis:
                    continue
                base = list(cell.base)
                height = base[axis]
                for t in range(lo, height):
                    base[axis] = t
                    q ^= 1 << self._pidx[(tuple(base), (min(d, axis), max(d, axis)))]
                base[axis] = lo
                nxt ^= 1 << self._eidx[(tuple(base), (d,))]
            cur = nxt
        if cur:
            raise NumericError("projected chain did not close; input was not a cycle")
        return q

    def boundary_of_plaqs(self, pmask):
        """Mod-2 boundary edge set of a plaquette set."""
        out = 0
        for p in _mask_bits(pmask):
            out ^= self.plaq_emask[p]
        return out

    def surface_mask(self, emask, method="solve"):
        if method == "solve":
            q = self.surface_mask_solve(emask)
        elif method == "staircase":
            q = self.surface_mask_staircase(emask)
        elif method == "solve_reversed":
            q = self._surface_solve_reversed(emask)
        else:
            raise ValueError(f"unknown surface method {method!r}")
        if self.boundary_of_plaqs(q) != emask:
            raise NumericError("surface construction failed to span the path")
        return q

    @functools.cached_property
    def _echelon_reversed(self):
        pivots = []
        for p in reversed(range(self.n_plaqs)):
            col = self.plaq_emask[p]
            combo = 1 << p
            for row, pcol, pcombo in pivots:
                if col >> row & 1:
                    col ^= pcol
                    combo ^= pcombo
            if col:
                row = col.bit_length() - 1
                pivots.append((row, col, combo))
        return pivots

    def _surface_solve_reversed(self, emask):
        b = emask
        q = 0
        for row, col, combo in self._echelon_reversed:
            if b >> row & 1:
                b ^= col
                q ^= combo
        if b:
            raise NumericError("edge set is not a mod-2 boundary in this box")
        return q

    # -- cycle space -----------------------------------------------------

    def cycle_space_dim(self):
        pivots = self._surface_echelon()
        return len(pivots)

    def closed_edge_sets(self):
        """All mod-2 closed edge sets, via Gray-code XOR over a cycle basis.

        Only valid when the span is the full cycle space, which holds on a
        (simply connected) box where every cycle bounds.
        """
        basis = [col for _, col, _ in self._surface_echelon()]
        dim = len(basis)
        if dim > 26:
            raise ResourceError(f"cycle space dimension {dim} too large to enumerate")
        cur = 0
        yield 0
        gray_prev = 0
        for i in range(1, 1 << dim):
            gray = i ^ (i >> 1)
            bit = (gray ^ gray_prev).bit_length() - 1
            gray_prev = gray
            cur ^= basis[bit]
            yield cur


@functools.lru_cache(maxsize=None)
def lattice_for(box):
    return Lattice(box)


def box_from_extents(*extents):
    return BoxSpec(tuple(extents))
