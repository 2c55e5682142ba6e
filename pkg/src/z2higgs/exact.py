"""Exact small-box engines: 2^E gauge scans, Ising scans, and the
high-temperature (loop + vortex) rewriting of the same partition function.

Couplings are handled through the per-positive-cell weights J_p and J_e.  With
the default oriented-cell convention the action sums each edge and plaquette
with both orientations, so J_p = 2*beta and J_e = 2*kappa; this is what makes
tanh(2*kappa) the loop activity and e^{-8(m-1)beta} the minimal vortex
activity.  A flag selects positive-cells-only weighting instead, and every
formula downstream is expressed in J_p/J_e so both conventions stay exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import DimensionError, ResourceError
from .lattice import _mask_bits, lattice_for
from .polymers import PathPolymer, enumerate_connecting_paths

DEFAULT_EDGE_BUDGET = 26


@dataclass(frozen=True)
class ModelParams:
    """Model parameters: box, plaquette coupling beta, edge coupling kappa."""

    box: object
    beta: float
    kappa: float
    oriented_double: bool = True
    budget: int = DEFAULT_EDGE_BUDGET

    def __post_init__(self):
        if self.kappa < 0 or (self.beta != math.inf and self.beta < 0):
            raise ValueError("beta and kappa must be nonnegative")

    @property
    def j_plaq(self):
        return (2.0 if self.oriented_double else 1.0) * self.beta

    @property
    def j_edge(self):
        return (2.0 if self.oriented_double else 1.0) * self.kappa

    @property
    def tanh_edge(self):
        """The loop activity per edge: tanh(2*kappa) under the default convention."""
        return math.tanh(self.j_edge)

    def lattice(self):
        return lattice_for(self.box)


@dataclass(frozen=True)
class ExactResult:
    logZ0: float
    logZgamma: object
    ratio: float
    method: str


@njit(cache=True)
def _scan_gauge(n_edges, eplaq_ptr, eplaq_idx, gamma, j_plaq, j_edge, start, stop):
    """Gray-code scan of sigma configurations in [start, stop).

    Returns compensated sums (Z0, Zg) of exp(action - action_max) and of
    rho(sigma(gamma)) * exp(action - action_max).
    """
    s_neg = np.zeros(n_edges, dtype=np.uint8)
    plaq_neg = np.zeros(eplaq_idx.max() + 1 if eplaq_idx.size else 1, dtype=np.uint8)
    n_bad = 0
    n_neg = 0
    w_sign = 1
    gray = start ^ (start >> 1)
    for e in range(n_edges):
        if gray >> e & 1:
            s_neg[e] = 1
            n_neg += 1
            if gamma[e]:
                w_sign = -w_sign
            for k in range(eplaq_ptr[e], eplaq_ptr[e + 1]):
                p = eplaq_idx[k]
                plaq_neg[p] ^= 1
    for p in range(plaq_neg.size):
        n_bad += plaq_neg[p]

    z0 = 0.0
    zg = 0.0
    c0 = 0.0
    cg = 0.0
    for count in range(start, stop):
        if count != start:
            step = count
            e = 0
            while not step & 1:
                step >>= 1
                e += 1
            if s_neg[e]:
                s_neg[e] = 0
                n_neg -= 1
            else:
                s_neg[e] = 1
                n_neg += 1
            if gamma[e]:
                w_sign = -w_sign
            for k in range(eplaq_ptr[e], eplaq_ptr[e + 1]):
                p = eplaq_idx[k]
                if plaq_neg[p]:
                    plaq_neg[p] = 0
                    n_bad -= 1
                else:
                    plaq_neg[p] = 1
                    n_bad += 1
        w = math.exp(-2.0 * j_plaq * n_bad - 2.0 * j_edge * n_neg)
        y = w - c0
        t = z0 + y
        c0 = (t - z0) - y
        z0 = t
        wg = w_sign * w
        y = wg - cg
        t = zg + y
        cg = (t - zg) - y
        zg = t
    return z0, zg


def _gauge_tables(lat):
    counts = [lat.edge_pmask[e].bit_count() for e in range(lat.n_edges)]
    ptr = np.zeros(lat.n_edges + 1, dtype=np.int64)
    ptr[1:] = np.cumsum(counts)
    idx = np.empty(int(ptr[-1]), dtype=np.int64)
    k = 0
    for e in range(lat.n_edges):
        for p in _mask_bits(lat.edge_pmask[e]):
            idx[k] = p
            k += 1
    return ptr, idx


def exact_partition(params, gamma=None, n_shards=1):
    """Exact Z[gamma]/Z[0] and log Z[0] by full configuration scan."""
    if params.beta == math.inf:
        raise DimensionError("beta = infinity: use exact_Z_ratio_ising")
    lat = params.lattice()
    if lat.n_edges > params.budget:
        raise ResourceError(
            f"{lat.n_edges} edges exceed the exact budget {params.budget}")
    gamma_mask = _as_edge_mask(lat, gamma)
    garr = np.zeros(lat.n_edges, dtype=np.bool_)
    for e in _mask_bits(gamma_mask):
        garr[e] = True
    ptr, idx = _gauge_tables(lat)
    total = 1 << lat.n_edges
    bounds = [total * i // n_shards for i in range(n_shards + 1)]
    z0 = 0.0
    zg = 0.0
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        if lo == hi:
            continue
        a, b = _scan_gauge(lat.n_edges, ptr, idx, garr, params.j_plaq, params.j_edge, lo, hi)
        z0 += a
        zg += b
    action_max = params.j_plaq * lat.n_plaqs + params.j_edge * lat.n_edges
    ratio = zg / z0
    logZ0 = action_max + math.log(z0)
    logZg = logZ0 + math.log(ratio) if ratio > 0 else None
    return ExactResult(logZ0=logZ0, logZgamma=logZg, ratio=ratio, method="gray-scan")


def exact_Z_ratio(params, gamma, n_shards=1):
    """E[rho(sigma(gamma))] = Z[gamma]/Z[0] over all 2^E configurations."""
    return exact_partition(params, gamma, n_shards=n_shards).ratio


def wilson_line(params, n, axis=0, start=None):
    """Expectation of the Wilson line along a straight n-edge path."""
    lat = params.lattice()
    if n == 0:
        return 1.0
    if start is None:
        mask = lat.centered_line_mask(n, axis)
    else:
        mask = lat.straight_line_mask(start, n, axis)
    return exact_Z_ratio(params, mask)


def _as_edge_mask(lat, gamma):
    if gamma is None:
        return 0
    if isinstance(gamma, PathPolymer):
        return gamma.mask
    if isinstance(gamma, int):
        return gamma
    return lat.edge_mask(gamma)


# -- Ising engine (the beta = infinity reduction) -------------------------


@njit(cache=True)
def _scan_ising(n_verts, vedge_ptr, vedge_idx, j_edge, x, y, n_edges):
    spin_neg = np.zeros(n_verts, dtype=np.uint8)
    edge_neg = np.zeros(n_edges if n_edges else 1, dtype=np.uint8)
    n_bad = 0
    z0 = 0.0
    zg = 0.0
    c0 = 0.0
    cg = 0.0
    total = 1 << n_verts
    for count in range(total):
        if count:
            step = count
            v = 0
            while not step & 1:
                step >>= 1
                v += 1
            spin_neg[v] ^= 1
            for k in range(vedge_ptr[v], vedge_ptr[v + 1]):
                e = vedge_idx[k]
                if edge_neg[e]:
                    edge_neg[e] = 0
                    n_bad -= 1
                else:
                    edge_neg[e] = 1
                    n_bad += 1
        w = math.exp(-2.0 * j_edge * n_bad)
        sign = 1
        if spin_neg[x] != spin_neg[y]:
            sign = -1
        yv = w - c0
        t = z0 + yv
        c0 = (t - z0) - yv
        z0 = t
        wg = sign * w
        yv = wg - cg
        t = zg + yv
        cg = (t - zg) - yv
        zg = t
    return z0, zg


def exact_Z_ratio_ising(kappa, box, x, y, oriented_double=True, budget=DEFAULT_EDGE_BUDGET):
    """Spin-spin correlation of the induced Ising model by 2^V enumeration.

    The model is the beta = infinity reduction sigma = d(theta): vertex spins
    coupled with weight exp(J_e * rho) per positive edge, J_e = 2*kappa under
    the oriented-cell convention.
    """
    lat = lattice_for(box)
    if lat.n_verts > budget:
        raise ResourceError(f"{lat.n_verts} vertices exceed the budget {budget}")
    xi = lat.vidx(x)
    yi = lat.vidx(y)
    if xi == yi:
        return 1.0
    counts = [lat.vert_emask[v].bit_count() for v in range(lat.n_verts)]
    ptr = np.zeros(lat.n_verts + 1, dtype=np.int64)
    ptr[1:] = np.cumsum(counts)
    idx = np.empty(int(ptr[-1]), dtype=np.int64)
    k = 0
    for v in range(lat.n_verts):
        for e in _mask_bits(lat.vert_emask[v]):
            idx[k] = e
            k += 1
    j_edge = (2.0 if oriented_double else 1.0) * kappa
    z0, zg = _scan_ising(lat.n_verts, ptr, idx, j_edge, xi, yi, lat.n_edges)
    return zg / z0


def ising_chain_correlation(kappa, n, oriented_double=True):
    """Transfer-matrix closed form for the free 1D chain: tanh(J_e)^n."""
    j_edge = (2.0 if oriented_double else 1.0) * kappa
    return math.tanh(j_edge) ** n


def restricted_flat_ratio(params, gamma):
    """Z-ratio restricted to flat configurations (d sigma = 0).

    Flat sigma are spanned by the vertex stars d(lambda_v), so the scan walks
    that span directly; on a simply connected box this reproduces the Ising
    correlation of the endpoints.
    """
    lat = params.lattice()
    if lat.n_verts - 1 > 24:
        raise ResourceError("flat-sector span too large to enumerate")
    gamma_mask = _as_edge_mask(lat, gamma)
    stars = [lat.vert_emask[v] for v in range(lat.n_verts - 1)]
    j_edge = params.j_edge
    num = 0.0
    den = 0.0
    sigma = 0
    gray_prev = 0
    dim = len(stars)
    for i in range(1 << dim):
        if i:
            gray = i ^ (i >> 1)
            bit = (gray ^ gray_prev).bit_length() - 1
            gray_prev = gray
            sigma ^= stars[bit]
        w = math.exp(-2.0 * j_edge * sigma.bit_count())
        sign = -1 if (sigma & gamma_mask).bit_count() & 1 else 1
        den += w
        num += sign * w
    return num / den


# -- the high-temperature rewriting ---------------------------------------


def _closed_form_masks(lat, max_dim=22):
    """Basis of the closed 2-forms (= the exact ones on a box)."""
    pivots = []
    for e in range(lat.n_edges):
        col = lat.edge_pmask[e]
        for _, pcol in pivots:
            if col & (pcol & -pcol):
                col ^= pcol
        if col:
            pivots.append((e, col))
    basis = [col for _, col in pivots]
    if len(basis) > max_dim:
        raise ResourceError(f"closed-form space dimension {len(basis)} too large")
    return basis


def _span(basis):
    cur = 0
    yield 0
    gray_prev = 0
    for i in range(1, 1 << len(basis)):
        gray = i ^ (i >> 1)
        bit = (gray ^ gray_prev).bit_length() - 1
        gray_prev = gray
        cur ^= basis[bit]
        yield cur


class CheckZEngine:
    """Explicit summation of the high-temperature form of Z (check-Z).

    check_Z[gamma, gamma0] sums over closed loop sets gamma' that avoid the
    vertices of gamma0, weighted by tanh(J_e)^{|gamma'|}, and over closed
    2-forms omega, weighted by e^{-2 J_p |supp omega|} and the two surface
    signs rho(omega(q_{gamma+gamma0})) rho(omega(q_{gamma'})).
    """

    def __init__(self, params, max_loop_len=None, max_vortex_support=None):
        self.params = params
        self.lat = params.lattice()
        lat = self.lat
        if lat.cycle_space_dim() > 20:
            raise ResourceError("loop space too large for explicit check-Z")
        self.max_loop_len = max_loop_len
        self.max_vortex = max_vortex_support
        self.t = params.tanh_edge
        self.x = math.exp(-2.0 * params.j_plaq)
        self.loops = []
        for emask in lat.closed_edge_sets():
            if max_loop_len is not None and emask.bit_count() > max_loop_len:
                continue
            self.loops.append((emask, lat.vmask_of_edges(emask),
                               lat.surface_mask_solve(emask) if emask else 0))
        if lat.m == 2:
            self._omega_basis = None
        else:
            self._omega_basis = _closed_form_masks(lat)
        self._omega_cache = {}

    def _omega_sum(self, rmask):
        """Sum over closed 2-forms of e^{-2 J_p |omega|} (-1)^{|omega ∩ R|}."""
        key = rmask
        if key in self._omega_cache:
            return self._omega_cache[key]
        if self._omega_basis is None:
            n_in = rmask.bit_count()
            if self.max_vortex is None:
                val = (1.0 + self.x) ** (self.lat.n_plaqs - n_in) * (1.0 - self.x) ** n_in
            else:
                val = 0.0
                for pmask in _span([1 << p for p in range(self.lat.n_plaqs)]):
                    if pmask.bit_count() > self.max_vortex:
                        continue
                    sign = -1.0 if (pmask & rmask).bit_count() & 1 else 1.0
                    val += sign * self.x ** pmask.bit_count()
        else:
            val = 0.0
            for pmask in _span(self._omega_basis):
                if self.max_vortex is not None and pmask.bit_count() > self.max_vortex:
                    continue
                sign = -1.0 if (pmask & rmask).bit_count() & 1 else 1.0
                val += sign * self.x ** pmask.bit_count()
        self._omega_cache[key] = val
        return val

    def check_Z_pair(self, gamma_mask, gamma0_mask):
        """check_Z[gamma, gamma0]; gamma + gamma0 must be closed mod 2."""
        lat = self.lat
        loop_mask_total = gamma_mask ^ gamma0_mask
        if lat.odd_vertices(loop_mask_total):
            raise DimensionError("gamma + gamma0 is not closed")
        q_main = lat.surface_mask_solve(loop_mask_total) if loop_mask_total else 0
        v0 = lat.vmask_of_edges(gamma0_mask)
        total = 0.0
        for emask, vmask, q_loop in self.loops:
            if vmask & v0:
                continue
            total += self.t ** emask.bit_count() * self._omega_sum(q_main ^ q_loop)
        return total

    def connecting_paths(self, gamma_mask):
        """All of Lambda^gamma on the box (the empty path when gamma is closed)."""
        lat = self.lat
        odd = lat.odd_vertices(gamma_mask)
        if not odd:
            return [0]
        gamma = PathPolymer(lat, gamma_mask)
        max_len = self.max_loop_len if self.max_loop_len is not None else lat.n_edges
        return [p.mask for p in enumerate_connecting_paths(gamma, max_len)]

    def check_Z(self, gamma_mask):
        """check_Z[gamma] = sum over gamma0 of t^{|gamma0|} check_Z[gamma, gamma0]."""
        total = 0.0
        for g0 in self.connecting_paths(gamma_mask):
            total += self.t ** g0.bit_count() * self.check_Z_pair(gamma_mask, g0)
        return total

    def check_Z_ratio(self, gamma_mask):
        return self.check_Z(gamma_mask) / self.check_Z_pair(0, 0)


def exact_check_Z_ratio(params, gamma, max_loop_len=None, max_vortex_support=None):
    lat = params.lattice()
    engine = CheckZEngine(params, max_loop_len, max_vortex_support)
    return engine.check_Z_ratio(_as_edge_mask(lat, gamma))


def ht_prefactor_log(params):
    """log of the constant relating Z[gamma] to check_Z[gamma]."""
    lat = params.lattice()
    n_closed_dim = (lat.n_plaqs if lat.m == 2 else len(_closed_form_masks(lat)))
    return (lat.n_edges * math.log(2)
            + lat.n_edges * math.log(math.cosh(params.j_edge))
            + params.j_plaq * lat.n_plaqs
            - n_closed_dim * math.log(2))
