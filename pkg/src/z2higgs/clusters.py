"""Polymer cluster expansion: Ursell functions, truncated log-ratios, the
minimal-vortex decomposition, and numerical bound diagnostics.

Conventions that make the truncated series agree with the exact engines:

  * Polymers are connected closed paths (loops, length >= 4) and vortices.
  * ursell(items) is the signed connected-graph sum over the k labeled items;
    the summation weight of a cluster C is ursell(C) * phi(C) divided by the
    multiset symmetry factor  prod_eta n_C(eta)!.  The symmetry factor is what
    makes exp(sum) reproduce the exact loop/vortex gas.
  * All zeta/iota/ursell arithmetic is exact integer; activities enter only
    at the final multiply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import DimensionError, ResourceError
from .lattice import _mask_bits
from .polymers import (PathPolymer, VortexPolymer, enumerate_closed_paths,
                       enumerate_connecting_paths, enumerate_vortices, iota,
                       vortex_adjacent)

URSELL_LIMIT = 8


@dataclass(frozen=True)
class Activities:
    """Path and vortex activities derived from the couplings.

    t = tanh(J_e) is the per-edge loop activity and x = e^{-2 J_p} the
    per-plaquette vortex activity; xi is the minimal-vortex activity
    (e^{-8(m-1)beta} under the oriented convention) and xi_hat the activity of
    the smallest non-minimal vortex, support 4(m-1)-2.
    """

    beta: float
    kappa: float
    m: int
    oriented_double: bool = True

    @property
    def j_plaq(self):
        return (2.0 if self.oriented_double else 1.0) * self.beta

    @property
    def j_edge(self):
        return (2.0 if self.oriented_double else 1.0) * self.kappa

    @property
    def t(self):
        return math.tanh(self.j_edge)

    @property
    def x(self):
        return math.exp(-2.0 * self.j_plaq) if self.beta != math.inf else 0.0

    @property
    def xi(self):
        return self.x ** (2 * (self.m - 1))

    @property
    def xi_hat(self):
        return self.x ** (4 * (self.m - 1) - 2)

    def phi_path(self, length):
        return self.t ** length

    def phi_vortex(self, support_size):
        return self.x ** support_size

    @classmethod
    def from_params(cls, params):
        return cls(params.beta, params.kappa, params.box.m, params.oriented_double)


@dataclass(frozen=True)
class ExpansionConfig:
    """Truncation cutoffs and the (alpha, a) knobs of the bound lemmas.

    beta0_free/kappa0_free are documented empirical defaults for where the
    truncation ladder converges at desk scale; they are configuration inputs,
    not derived constants.
    """

    max_norm1: int
    max_norm2: int
    max_cluster_size: int = 4
    alpha: float = 0.5
    a: float = 0.5
    ursell_limit: int = URSELL_LIMIT
    beta0_free: float = 2.0
    kappa0_free: float = 0.05

    def __post_init__(self):
        if not (0 < self.alpha < 1 and 0 < self.a < 1):
            raise ValueError("alpha and a must lie in (0,1)")
        if min(self.max_norm1, self.max_norm2, self.max_cluster_size) < 0:
            raise ValueError("cutoffs must be nonnegative")


# -- Ursell functions ------------------------------------------------------


def ursell_from_zeta(zmat):
    """Sum over connected graphs on k labeled vertices of (-1)^{|E|} prod zeta.

    Subset DP on the Mayer weights w = -zeta: with A(S) = prod_{i<j in S}
    (1 + w_ij) the sum over all graphs, the connected part C(S) follows from
    Moebius inversion over the component of min(S).  Exact integers.
    """
    k = len(zmat)
    if k == 0:
        return 1
    if k > URSELL_LIMIT:
        raise ResourceError(f"ursell limited to {URSELL_LIMIT} polymers, got {k}")
    full = 1 << k
    w = [[-z for z in row] for row in zmat]
    prod_all = [1] * full
    for s in range(1, full):
        i = (s & -s).bit_length() - 1
        rest = s ^ (1 << i)
        acc = prod_all[rest]
        for j in _mask_bits(rest):
            acc *= 1 + w[i][j]
        prod_all[s] = acc
    conn = [0] * full
    for s in range(1, full):
        low = 1 << ((s & -s).bit_length() - 1)
        total = prod_all[s]
        sub = (s - 1) & s
        while sub:
            if sub & low and sub != s:
                total -= conn[sub] * prod_all[s ^ sub]
            sub = (sub - 1) & s
        conn[s] = total
    return conn[full - 1]


def _zeta_polymers(items, surfaces=None):
    k = len(items)
    mat = [[0] * k for _ in range(k)]
    for i in range(k):
        for j in range(i + 1, k):
            z = 1 - iota(items[i], items[j], surfaces)
            mat[i][j] = mat[j][i] = z
    return mat


def ursell(items, surfaces=None):
    """U(C) for a list of polymers (repeats allowed), permutation invariant."""
    if len(items) == 1:
        return 1
    return ursell_from_zeta(_zeta_polymers(items, surfaces))


def ursell_minimal_factorization(paths, vortices):
    """U(C) = U(C^1) * (-2)^{|C^2|} * prod deg(omega) under the lemma hypotheses:
    every vortex minimal and vortices pairwise non-adjacent."""
    if not paths:
        raise DimensionError("factorization needs at least one path polymer")
    for w in vortices:
        if not w.is_minimal:
            raise DimensionError("factorization requires minimal vortices")
    for i, w in enumerate(vortices):
        for w2 in vortices[i + 1:]:
            if w2 == w or vortex_adjacent(w, w2):
                raise DimensionError("factorization requires pairwise non-adjacent vortices")
    u1 = ursell(paths)
    value = u1 * (-2) ** len(vortices)
    for w in vortices:
        deg = sum(1 for g in paths if 1 - iota(w, g) != 0)
        value *= deg
    return value


# -- polymer pools and clusters -------------------------------------------


@dataclass(frozen=True)
class PoolPath:
    emask: int
    vmask: int
    length: int
    qmask: int


@dataclass(frozen=True)
class PoolVortex:
    pmask: int
    size: int
    reach: int
    closure_emask: int
    is_minimal: bool
    anchor_edge: int


class PolymerPool:
    """Indexed polymers (paths first, then vortices) with cached interactions."""

    def __init__(self, lattice, max_norm1, max_norm2, include_vortices=True,
                 vortex_pool="all"):
        self.lattice = lattice
        self.max_norm1 = max_norm1
        self.max_norm2 = max_norm2
        self.paths = []
        for p in enumerate_closed_paths(lattice, max_norm1):
            self.paths.append(PoolPath(p.mask, p.vertex_mask, p.length,
                                       lattice.surface_mask_solve(p.mask)))
        self.vortices = []
        if include_vortices and max_norm2 > 0:
            for w in enumerate_vortices(lattice, max_norm2, pool=vortex_pool):
                reach = 0
                closure = 0
                for pl in _mask_bits(w.pmask):
                    reach |= lattice.plaq_adj_mask[pl]
                    closure |= lattice.plaq_emask[pl]
                anchor = -1
                if w.is_minimal:
                    for e in _mask_bits(lattice.plaq_emask[(w.pmask & -w.pmask).bit_length() - 1]):
                        if lattice.edge_pmask[e] == w.pmask:
                            anchor = e
                            break
                self.vortices.append(PoolVortex(w.pmask, w.support_size, reach,
                                                closure, w.is_minimal, anchor))
        self.n_paths = len(self.paths)
        self.n = self.n_paths + len(self.vortices)
        self._zeta = {}

    def is_path(self, i):
        return i < self.n_paths

    def norm(self, i):
        return (self.paths[i].length if i < self.n_paths
                else self.vortices[i - self.n_paths].size)

    def edge_support(self, i):
        return (self.paths[i].emask if i < self.n_paths
                else self.vortices[i - self.n_paths].closure_emask)

    def zeta(self, i, j):
        if i == j:
            return 1
        if i > j:
            i, j = j, i
        key = (i, j)
        z = self._zeta.get(key)
        if z is None:
            if j < self.n_paths:
                z = 1 if self.paths[i].vmask & self.paths[j].vmask else 0
            elif i >= self.n_paths:
                a = self.vortices[i - self.n_paths]
                b = self.vortices[j - self.n_paths]
                z = 1 if a.reach & b.pmask else 0
            else:
                g = self.paths[i]
                w = self.vortices[j - self.n_paths]
                z = 2 * ((w.pmask & g.qmask).bit_count() & 1)
            self._zeta[key] = z
        return z


@dataclass
class Cluster:
    """A connected multiset of pool polymers with cached combinatorics."""

    pool: PolymerPool
    indices: tuple
    norm1: int
    norm2: int
    sym: int
    _ursell: int = field(default=None, repr=False)

    @property
    def size(self):
        return len(self.indices)

    @property
    def path_indices(self):
        return tuple(i for i in self.indices if self.pool.is_path(i))

    @property
    def vortex_indices(self):
        return tuple(i for i in self.indices if not self.pool.is_path(i))

    def ursell_value(self):
        if self._ursell is None:
            idx = self.indices
            mat = [[self.pool.zeta(a, b) for b in idx] for a in idx]
            self._ursell = ursell_from_zeta(mat)
        return self._ursell

    def phi(self, act):
        return act.t ** self.norm1 * act.x ** self.norm2

    def psi(self, act):
        """The paper-normalized cluster weight U(C) * phi(C)."""
        return self.ursell_value() * self.phi(act)

    def weight(self, act):
        """Summation weight: psi / symmetry factor."""
        return self.psi(act) / self.sym

    def degree_at(self, emask):
        """Sum over path members (with multiplicity) of |support ∩ emask| per edge.

        Returns a dict edge -> deg_C(e) restricted to edges in emask.
        """
        out = {}
        for i in self.path_indices:
            hit = self.pool.paths[i].emask & emask
            for e in _mask_bits(hit):
                out[e] = out.get(e, 0) + 1
        return out

    def vmask_paths(self):
        out = 0
        for i in self.path_indices:
            out |= self.pool.paths[i].vmask
        return out

    def vortex_parity(self, qmask):
        par = 0
        for i in self.vortex_indices:
            par ^= (self.pool.vortices[i - self.pool.n_paths].pmask & qmask).bit_count() & 1
        return par

    def edge_support_mask(self):
        out = 0
        for i in set(self.indices):
            out |= self.pool.edge_support(i)
        return out


def _connected_indices(pool, indices):
    distinct = sorted(set(indices))
    if len(distinct) == 1:
        return True
    parent = {i: i for i in distinct}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for ai, a in enumerate(distinct):
        for b in distinct[ai + 1:]:
            if pool.zeta(a, b):
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[ra] = rb
    root = find(distinct[0])
    return all(find(i) == root for i in distinct)


def enumerate_clusters(pool, cfg, paths_only=False):
    """All connected multisets within the cutoffs, as Cluster records."""
    top = pool.n_paths if paths_only else pool.n
    out = []

    def grow(start, indices, norm1, norm2, sym_counts):
        if indices and _connected_indices(pool, indices):
            sym = 1
            for c in sym_counts.values():
                sym *= math.factorial(c)
            out.append(Cluster(pool, tuple(indices), norm1, norm2, sym))
        if len(indices) == cfg.max_cluster_size:
            return
        for i in range(start, top):
            dn = pool.norm(i)
            if pool.is_path(i):
                if norm1 + dn > cfg.max_norm1:
                    continue
                n1, n2 = norm1 + dn, norm2
            else:
                if norm2 + dn > cfg.max_norm2:
                    continue
                n1, n2 = norm1, norm2 + dn
            sym_counts[i] = sym_counts.get(i, 0) + 1
            grow(i, indices + [i], n1, n2, sym_counts)
            sym_counts[i] -= 1
            if not sym_counts[i]:
                del sym_counts[i]

    grow(0, [], 0, 0, {})
    return out


class Expansion:
    """A polymer pool plus its cluster census, reused across evaluations."""

    def __init__(self, lattice, cfg, include_vortices=True, vortex_pool="all"):
        self.lattice = lattice
        self.cfg = cfg
        self.pool = PolymerPool(lattice, cfg.max_norm1, cfg.max_norm2,
                                include_vortices=include_vortices,
                                vortex_pool=vortex_pool)
        self.clusters = enumerate_clusters(self.pool, cfg)
        self.path_clusters = [c for c in self.clusters if not c.vortex_indices]

    # -- the truncated expansion -----------------------------------------

    def log_ratio(self, gamma_n_mask, gamma0_mask, act, qmask=None):
        """Truncated log(check_Z[gamma_n, gamma0] / check_Z[0]) plus tail report.

        Sums weight(C) * (rho(C^2(q)) 1(C^1 not~ gamma0) - 1); only clusters
        interacting with the loop or with gamma0 contribute.
        """
        lat = self.lattice
        loop = gamma_n_mask ^ gamma0_mask
        if lat.odd_vertices(loop):
            raise DimensionError("gamma_n + gamma0 must be closed")
        if qmask is None:
            qmask = lat.surface_mask_solve(loop) if loop else 0
        v0 = lat.vmask_of_edges(gamma0_mask)
        total = 0.0
        shells = {}
        for c in self.clusters:
            bracket = self._bracket(c, qmask, v0)
            if bracket == 0:
                continue
            term = c.weight(act) * bracket
            total += term
            key = c.norm1
            shells[key] = shells.get(key, 0.0) + abs(term)
        return total, tail_report(shells, self.cfg)

    def _bracket(self, cluster, qmask, gamma0_vmask):
        near = bool(cluster.vmask_paths() & gamma0_vmask) if gamma0_vmask else False
        if near:
            return -1
        return -2 * cluster.vortex_parity(qmask)

    # -- the path-only measure -------------------------------------------

    def vartheta_weight(self, gamma0_mask, act):
        """Truncated vartheta(gamma0): tanh^{|gamma0|} e^{Xi^1 cluster sum}."""
        v0 = self.lattice.vmask_of_edges(gamma0_mask)
        expo = 0.0
        for c in self.path_clusters:
            if c.vmask_paths() & v0:
                expo -= c.weight(act)
        return act.t ** gamma0_mask.bit_count() * math.exp(expo)

    def vartheta_total(self, gamma_n, act, max_len):
        """Truncated vartheta(Lambda^{gamma_n}) with a length-shell tail report."""
        total = 0.0
        shells = {}
        for g in enumerate_connecting_paths(gamma_n, max_len):
            w = self.vartheta_weight(g.mask, act)
            total += w
            shells[g.length] = shells.get(g.length, 0.0) + w
        return total, tail_report(shells, self.cfg, cutoff=max_len)

    # -- decomposition into main terms and error pieces --------------------

    def decomposition(self, gamma_n_mask, gamma0_mask, act, qmask=None):
        """Regroup the truncated expansion per the minimal-vortex cases.

        Formula pieces follow the bulk statements (main, E2, the Xi^1 sums,
        E1/E3); what the truncated cluster set actually contributes beyond
        them is returned exactly in `residual` so that the pieces always sum
        to the truncated log-ratio.
        """
        lat = self.lattice
        loop = gamma_n_mask ^ gamma0_mask
        if qmask is None:
            qmask = lat.surface_mask_solve(loop) if loop else 0
        v0 = lat.vmask_of_edges(gamma0_mask)
        m = lat.m
        min_support = 2 * (m - 1)
        interior = set(lat.interior_edges)

        case_i = 0.0
        case_ii = 0.0
        case_iii = 0.0
        nonconforming = 0.0
        e1 = 0.0
        e1_shells = {}
        for c in self.clusters:
            bracket = self._bracket(c, qmask, v0)
            if bracket == 0:
                continue
            term = c.weight(act) * bracket
            vids = c.vortex_indices
            if c.norm2 > min_support:
                e1 += term
                e1_shells[c.norm2] = e1_shells.get(c.norm2, 0.0) + abs(term)
            elif not vids:
                case_ii += term
            elif (len(vids) == 1
                  and self.pool.vortices[vids[0] - self.pool.n_paths].is_minimal):
                if c.path_indices:
                    case_iii += term
                else:
                    case_i += term
            else:
                nonconforming += term

        xi = act.xi
        main = -2.0 * xi * (gamma_n_mask.bit_count() + gamma0_mask.bit_count())
        e2 = 4.0 * xi * (gamma_n_mask & gamma0_mask).bit_count()

        has_minimal = min_support <= self.cfg.max_norm2
        if not has_minimal:
            main = e2 = 0.0

        # Xi^1 sums entering case (iii) run over clusters with one polymer of
        # headroom (the vortex occupies a slot of max_cluster_size).
        xi1_norm = 0.0
        deg_main = 0.0
        e3 = 0.0
        gamma_n_int = 0
        for e in _mask_bits(gamma_n_mask):
            if e in interior:
                gamma_n_int |= 1 << e
        if has_minimal:
            for c in self.path_clusters:
                if c.size > self.cfg.max_cluster_size - 1:
                    continue
                w = c.weight(act)
                near = bool(c.vmask_paths() & v0)
                if near:
                    xi1_norm += -2.0 * xi * w * c.norm1 * (-1)
                degs = c.degree_at(gamma_n_int)
                deg_total = sum(degs.values())
                deg_main += 4.0 * xi * w * deg_total
                if near:
                    e3 += -4.0 * xi * w * deg_total

        residual_case_i = case_i - (main + e2)
        residual_case_iii = case_iii - (xi1_norm + deg_main + e3)
        residual = residual_case_i + residual_case_iii + nonconforming
        total = case_i + case_ii + case_iii + nonconforming + e1
        pieces_sum = (main + e2 + case_ii + xi1_norm + deg_main + e3 + e1
                      + residual)

        tanh_pow = act.t ** (self.cfg.a * (1 - self.cfg.alpha))
        e1_bound = (2.0 * tanh_pow
                    * (gamma_n_mask.bit_count() + gamma0_mask.bit_count())
                    * act.xi_hat ** (1 - self.cfg.a))
        return DecompositionResult(
            main_term=main, e2=e2, xi1_zeroth=case_ii, xi1_norm=xi1_norm,
            deg_main=deg_main, e1=e1, e1_bound=e1_bound, e3=e3,
            residual=residual, residual_case_i=residual_case_i,
            residual_case_iii=residual_case_iii, nonconforming=nonconforming,
            total=total, pieces_sum=pieces_sum,
            e1_tail=tail_report(e1_shells, self.cfg))


@dataclass(frozen=True)
class DecompositionResult:
    main_term: float
    e2: float
    xi1_zeroth: float
    xi1_norm: float
    deg_main: float
    e1: float
    e1_bound: float
    e3: float
    residual: float
    residual_case_i: float
    residual_case_iii: float
    nonconforming: float
    total: float
    pieces_sum: float
    e1_tail: object


@dataclass(frozen=True)
class TailReport:
    """Truncation bookkeeping: cutoff, last shell magnitude, extrapolation."""

    cutoff: object
    shells: tuple
    last_shell: float
    ratio: float
    extrapolated_tail: float


def tail_report(shells, cfg, cutoff=None):
    items = sorted(shells.items())
    if cutoff is None:
        cutoff = (cfg.max_norm1, cfg.max_norm2, cfg.max_cluster_size)
    if not items:
        return TailReport(cutoff, (), 0.0, 0.0, 0.0)
    last = items[-1][1]
    ratio = 0.0
    if len(items) >= 2 and items[-2][1] > 0:
        ratio = items[-1][1] / items[-2][1]
    tail = last * ratio / (1 - ratio) if 0 < ratio < 1 else math.inf if ratio >= 1 else 0.0
    return TailReport(cutoff, tuple(items), last, ratio, tail)


# -- bound diagnostics -----------------------------------------------------


def power_tail_series(m_exp, x, start):
    """sum_{k >= start} k^m x^k to machine precision (x in [0,1))."""
    if not 0 <= x < 1:
        raise ValueError("series requires 0 <= x < 1")
    total = 0.0
    k = start
    while k < start + 2_000_000:
        term = k ** m_exp * x ** k
        total += term
        if term <= total * 1e-18 or term < 1e-320:
            break
        k += 1
    return total


def eulerian_power_sum(m_exp, x):
    """Closed form of sum_{k>=1} k^m x^k via Eulerian polynomial coefficients."""
    if m_exp == 0:
        return x / (1 - x)
    eul = [1]
    for mm in range(1, m_exp + 1):
        nxt = [0] * mm
        for j in range(mm):
            left = (j + 1) * (eul[j] if j < len(eul) else 0)
            right = (mm - j) * (eul[j - 1] if 0 <= j - 1 < len(eul) else 0)
            nxt[j] = left + right
        eul = nxt
    num = sum(c * x ** (j + 1) for j, c in enumerate(eul))
    return num / (1 - x) ** (m_exp + 1)


@dataclass(frozen=True)
class BoundCheck:
    name: str
    lhs: float
    rhs: float
    passed: bool
    margin: float


@dataclass(frozen=True)
class DiagnosticsReport:
    checks: tuple
    d_m: dict
    vartheta_total: float

    @property
    def all_passed(self):
        return all(c.passed for c in self.checks)


def bound_diagnostics(expansion, act, K=4, gamma_n=None, vartheta_max_len=None,
                      edges=None):
    """Numerical checks of the truncated bound-lemma inequalities.

    The truncated left-hand sides underestimate the full sums, so LHS <= RHS
    is a necessary check of each lemma, reported with its margin.  Also
    evaluates the truncated D_m constants and, when a line is supplied, the
    vartheta mass and its large-path tail bound.
    """
    cfg = expansion.cfg
    lat = expansion.lattice
    pool = expansion.pool
    if edges is None:
        center = lat.centered_line_mask(1)
        edges = [next(_mask_bits(center))]

    checks = []
    m_exp = lat.m
    t = act.t
    tpow = t ** (cfg.a * (1 - cfg.alpha))

    def xi1_e(e):
        bit = 1 << e
        return [c for c in expansion.path_clusters if c.edge_support_mask() & bit]

    lhs_pc = 0.0
    for e in edges:
        val = sum(abs(c.weight(act)) * c.norm1 ** m_exp
                  for c in xi1_e(e) if c.norm1 >= K)
        lhs_pc = max(lhs_pc, val)
    rhs_pc = tpow * power_tail_series(m_exp, t ** (1 - cfg.a), K)
    checks.append(BoundCheck("power_cluster", lhs_pc, rhs_pc,
                             lhs_pc <= rhs_pc, rhs_pc - lhs_pc))

    min_support = 2 * (lat.m - 1)
    lhs_sn = 0.0
    for e in edges:
        bit = 1 << e
        val = sum(abs(c.weight(act)) for c in expansion.clusters
                  if c.norm2 > min_support and c.edge_support_mask() & bit)
        lhs_sn = max(lhs_sn, val)
    rhs_sn = act.xi_hat ** (1 - cfg.a) * tpow
    checks.append(BoundCheck("smallest_nonminimal", lhs_sn, rhs_sn,
                             lhs_sn <= rhs_sn, rhs_sn - lhs_sn))

    d_m = {}
    for mm in (1, lat.m):
        best = 0.0
        for e in edges:
            best = max(best, sum(abs(c.weight(act)) * c.norm1 ** mm
                                 for c in xi1_e(e)))
        d_m[mm] = best

    theta_total = math.nan
    if gamma_n is not None:
        max_len = vartheta_max_len or cfg.max_norm1
        theta_total, _ = expansion.vartheta_total(gamma_n, act, max_len)
        r = 2 * lat.m * t * math.exp(2 * t ** (1 - cfg.alpha))
        Kv = gamma_n.length
        rhs_lg = (r ** Kv) / (1 - r) if r < 1 else math.inf
        lhs_lg = 0.0
        for g in enumerate_connecting_paths(gamma_n, max_len):
            if g.length > Kv:
                lhs_lg += expansion.vartheta_weight(g.mask, act)
        checks.append(BoundCheck("large_gamma0", lhs_lg, rhs_lg,
                                 lhs_lg <= rhs_lg, rhs_lg - lhs_lg))
        checks.append(BoundCheck("vartheta_in_unit_interval", theta_total, 1.0,
                                 0.0 < theta_total <= 1.0, 1.0 - theta_total))

    return DiagnosticsReport(tuple(checks), d_m, theta_total)


# -- spec-facing wrappers --------------------------------------------------


def cluster_weight(items, act, surfaces=None):
    """Psi(C) = U(C) * phi(C) for a list of polymer objects."""
    u = ursell(items, surfaces)
    phi = 1.0
    for it in items:
        if isinstance(it, PathPolymer):
            phi *= act.phi_path(it.length)
        elif isinstance(it, VortexPolymer):
            phi *= act.phi_vortex(it.support_size)
        else:
            raise TypeError(f"not a polymer: {it!r}")
    return u * phi
