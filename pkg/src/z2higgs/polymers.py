"""Polymers of the expansion: connected paths, vortices, and their interactions.

Paths and vortices are stored as bitmasks over a Lattice's positive edge and
plaquette lists.  Orientation is immaterial for every Z2-valued quantity, so
polymers canonicalize to +1 coefficients on their support; the chain view
reconstructs signed coefficients on demand.

Adjacency conventions (the load-bearing ones, pinned by tests):
  * paths are adjacent iff they pass through a common vertex;
  * vortices are adjacent iff two support plaquettes lie in the boundary of a
    common 3-cell, or trivially share a plaquette (which keeps the relation
    reflexive).  Boxes without 3-cells (m = 2) therefore have no interaction
    between distinct vortices, and vortex supports decompose into single
    plaquettes there.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .dec import Cell, Chain, Z2Form
from .errors import DimensionError, NumericError, ResourceError
from .lattice import Lattice, _mask_bits


@dataclass(frozen=True, eq=False)
class PathPolymer:
    """A path: a 1-chain with coefficients in {-1,+1}, stored as its support."""

    lattice: Lattice = field(repr=False)
    mask: int

    def __eq__(self, other):
        return isinstance(other, PathPolymer) and self.mask == other.mask

    def __hash__(self):
        return hash(("path", self.mask))

    @classmethod
    def from_cells(cls, lattice, cells):
        return cls(lattice, lattice.edge_mask(cells))

    @property
    def length(self):
        return self.mask.bit_count()

    @property
    def cells(self):
        return self.lattice.edge_cells(self.mask)

    @property
    def vertex_mask(self):
        return self.lattice.vmask_of_edges(self.mask)

    @property
    def connected(self):
        return self.lattice.edges_connected(self.mask)

    @property
    def is_closed(self):
        return not self.lattice.odd_vertices(self.mask)

    def boundary_vertices(self):
        """The two odd-degree vertices of an open path (as coordinate tuples)."""
        odd = self.lattice.odd_vertices(self.mask)
        return tuple(self.lattice.verts[v].base for v in odd)

    def chain(self):
        return Chain(1, {c: 1 for c in self.cells})

    def to_text(self):
        return " ".join(c.to_text() for c in sorted(self.cells, key=Cell.sort_key))


@dataclass(frozen=True, eq=False)
class VortexPolymer:
    """A vortex: a closed 2-form with connected positive support."""

    lattice: Lattice = field(repr=False)
    pmask: int

    def __eq__(self, other):
        return isinstance(other, VortexPolymer) and self.pmask == other.pmask

    def __hash__(self):
        return hash(("vortex", self.pmask))

    @classmethod
    def from_cells(cls, lattice, cells):
        return cls(lattice, lattice.plaq_mask(cells))

    @property
    def support_size(self):
        return self.pmask.bit_count()

    @property
    def cells(self):
        return self.lattice.plaq_cells(self.pmask)

    @property
    def is_closed(self):
        return self.lattice.form_closed(self.pmask)

    @property
    def connected(self):
        return self.lattice.plaqs_connected(self.pmask)

    @property
    def is_minimal(self):
        """True iff the form equals d(sigma_e) for an interior edge e."""
        if self.pmask.bit_count() != 2 * (self.lattice.m - 1):
            return False
        first_plaq = (self.pmask & -self.pmask).bit_length() - 1
        for e in _mask_bits(self.lattice.plaq_emask[first_plaq]):
            if self.lattice.edge_pmask[e] == self.pmask:
                return True
        return False

    def form(self):
        return Z2Form(self.lattice.box, 2, frozenset(self.cells))

    def to_text(self):
        return " ".join(c.to_text() for c in sorted(self.cells, key=Cell.sort_key))


@dataclass(frozen=True)
class SpanningSurface:
    """A 2-chain q with mod-2 boundary equal to a given closed path."""

    lattice: Lattice = field(repr=False)
    pmask: int
    boundary_mask: int

    def chain(self):
        return Chain(2, {c: 1 for c in self.lattice.plaq_cells(self.pmask)})


def minimal_vortex(lattice, edge):
    """The vortex d(sigma_e) around an edge (interior edges give minimal ones)."""
    e = edge if isinstance(edge, int) else lattice.eidx(edge)
    return VortexPolymer(lattice, lattice.edge_pmask[e])


def spanning_surface(path, method="solve"):
    if not path.is_closed:
        raise DimensionError("spanning surface requires a closed path")
    q = path.lattice.surface_mask(path.mask, method=method)
    return SpanningSurface(path.lattice, q, path.mask)


# -- adjacency and interactions -----------------------------------------


def path_adjacent(a, b):
    """Paths interact iff they pass through a common vertex."""
    return bool(a.mask and b.mask and (a.vertex_mask & b.vertex_mask))


def vortex_adjacent(a, b):
    lat = a.lattice
    reach = 0
    for p in _mask_bits(a.pmask):
        reach |= lat.plaq_adj_mask[p]
    return bool(reach & b.pmask)


def surface_parity(vortex, surface_pmask):
    """omega(q) in Z2 for a vortex and a surface plaquette mask."""
    return (vortex.pmask & surface_pmask).bit_count() & 1


def iota(a, b, surfaces=None):
    """The pairwise interaction: indicator of non-adjacency for like pairs,
    rho(omega(q_gamma)) for vortex/path pairs (the path must be closed)."""
    if isinstance(a, PathPolymer) and isinstance(b, PathPolymer):
        return 0 if path_adjacent(a, b) else 1
    if isinstance(a, VortexPolymer) and isinstance(b, VortexPolymer):
        return 0 if vortex_adjacent(a, b) else 1
    if isinstance(a, PathPolymer):
        a, b = b, a
    if not b.is_closed:
        raise DimensionError("open path has no spanning surface")
    method = surfaces if isinstance(surfaces, str) else "solve"
    q = b.lattice.surface_mask(b.mask, method=method)
    return 1 - 2 * surface_parity(a, q)


def zeta(a, b, surfaces=None):
    return 1 - iota(a, b, surfaces)


# -- enumeration ---------------------------------------------------------


def enumerate_closed_paths(lattice, max_len):
    """All connected closed paths with at most max_len edges, one per class.

    Closed edge sets are spanned by plaquette boundaries on a box, so the
    stream walks that span and keeps the connected members, shortest first.
    """
    if max_len < 4:
        return
    found = []
    if lattice.cycle_space_dim() <= 22:
        for emask in lattice.closed_edge_sets():
            if emask and emask.bit_count() <= max_len and lattice.edges_connected(emask):
                found.append(emask)
    else:
        for emask in _connected_edge_subsets(lattice, max_len):
            if not lattice.odd_vertices(emask):
                found.append(emask)
    found.sort(key=lambda msk: (msk.bit_count(), msk))
    for emask in found:
        yield PathPolymer(lattice, emask)


def _connected_edge_subsets(lattice, max_size):
    """Connected edge subsets up to max_size, each exactly once.

    Rooted growth with a binary include/exclude branching on an ordered
    candidate frontier; roots are canonical (only edges >= root allowed).
    """
    n = lattice.n_edges
    if n > 400:
        raise ResourceError(f"subset growth over {n} edges not supported")
    adj = lattice.edge_adj_mask

    def grow(smask, size, cand, banned):
        yield smask
        if size == max_size:
            return
        while cand:
            low = cand & -cand
            cand ^= low
            e = low.bit_length() - 1
            new_cand = cand | (adj[e] & ~smask & ~banned & ~cand & ~low)
            yield from grow(smask | low, size + 1, new_cand & ~low, banned)
            banned |= low

    for root in range(n):
        allowed = ~((1 << (root + 1)) - 1)
        cand = adj[root] & allowed
        yield from grow(1 << root, 1, cand, (1 << (root + 1)) - 1)


def enumerate_connecting_paths(gamma_n, max_len):
    """All connected paths gamma with boundary(gamma_n + gamma) = 0, by length.

    When a straight axis line joins the endpoints and fits the budget it is
    yielded first; maxima below the graph distance give an empty stream.
    """
    lat = gamma_n.lattice
    odd = lat.odd_vertices(gamma_n.mask)
    if len(odd) != 2:
        raise DimensionError("connecting paths need a path with two endpoints")
    straight = _straight_mask_between(lat, odd[0], odd[1])
    base = straight if straight is not None else _any_connector(lat, odd[0], odd[1])
    found = []
    for loop in lat.closed_edge_sets():
        emask = base ^ loop
        if emask and emask.bit_count() <= max_len and lat.edges_connected(emask):
            found.append(emask)
    first = straight if straight is not None and straight.bit_count() <= max_len else None
    found.sort(key=lambda msk: (msk.bit_count(), msk))
    if first is not None and first in found:
        found.remove(first)
        found.insert(0, first)
    for emask in found:
        yield PathPolymer(lat, emask)


def _straight_mask_between(lattice, v0, v1):
    a = lattice.verts[v0].base
    b = lattice.verts[v1].base
    diff = [i for i in range(lattice.m) if a[i] != b[i]]
    if len(diff) != 1:
        return None
    axis = diff[0]
    lo = min(a[axis], b[axis])
    start = list(a)
    start[axis] = lo
    return lattice.straight_line_mask(start, abs(a[axis] - b[axis]), axis)


def _any_connector(lattice, v0, v1):
    """Edge mask of some lattice path between two vertices (BFS)."""
    prev = {v0: None}
    queue = [v0]
    while queue:
        nxt = []
        for v in queue:
            for e in _mask_bits(lattice.vert_emask[v]):
                for w in lattice.edge_verts[e]:
                    if w not in prev:
                        prev[w] = (v, e)
                        nxt.append(w)
        if v1 in prev:
            break
        queue = nxt
    if v1 not in prev:
        raise NumericError("endpoints not connected in box")
    mask = 0
    v = v1
    while prev[v] is not None:
        v, e = prev[v]
        mask |= 1 << e
    return mask


def enumerate_vortices(lattice, max_support, pool="all"):
    """All closed 2-forms with connected support of size <= max_support.

    pool="interior" restricts the support to bulk plaquettes, which recovers
    the infinite-lattice census (sizes 2(m-1), then 4(m-1)-2); pool="all"
    keeps the boundary vortices a finite box genuinely has.
    """
    allowed = (1 << lattice.n_plaqs) - 1
    if pool == "interior":
        allowed = 0
        for p in lattice.interior_plaqs:
            allowed |= 1 << p
    elif pool != "all":
        raise ValueError(f"unknown pool {pool!r}")
    found = []
    for pmask in _connected_plaq_subsets(lattice, max_support, allowed):
        if lattice.form_closed(pmask):
            found.append(pmask)
    found.sort(key=lambda msk: (msk.bit_count(), msk))
    for pmask in found:
        yield VortexPolymer(lattice, pmask)


def _connected_plaq_subsets(lattice, max_size, allowed):
    adj = lattice.plaq_adj_mask

    def grow(smask, size, cand, banned):
        yield smask
        if size == max_size:
            return
        while cand:
            low = cand & -cand
            cand ^= low
            p = low.bit_length() - 1
            new_cand = cand | (adj[p] & allowed & ~smask & ~banned & ~cand & ~low)
            yield from grow(smask | low, size + 1, new_cand & ~low, banned)
            banned |= low

    for root in range(lattice.n_plaqs):
        if not allowed >> root & 1:
            continue
        below = (1 << (root + 1)) - 1
        cand = adj[root] & allowed & ~below
        yield from grow(1 << root, 1, cand, below)


def dump_polymers(polymers):
    """Census dump: one canonical polymer per line, lines sorted."""
    return "\n".join(sorted(p.to_text() for p in polymers)) + "\n"
