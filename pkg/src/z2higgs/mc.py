"""Heat-bath Monte Carlo for the gauge model and its beta = infinity Ising
reduction, with counter-based reproducible streams and block-jackknife errors.

The single-edge (single-spin) conditional is a two-point law and is sampled
exactly; sweeps run in numba kernels fed by pre-generated uniform blocks from
a Philox generator keyed by (seed, stream), so a trajectory is a pure function
of (seed, stream, sweep count).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import NumericError
from .lattice import _mask_bits, lattice_for
from .polymers import PathPolymer

CHUNK_SWEEPS = 4096


@dataclass(frozen=True)
class RngSpec:
    """Counter-based RNG contract: (seed, stream) fixes the trajectory."""

    seed: int
    stream_id: int = 0

    def generator(self):
        key = np.array([self.seed % (1 << 64), self.stream_id % (1 << 64)],
                       dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class SamplingPlan:
    n_sweeps: int
    n_therm: int
    block_len: int
    estimator: str = "auto"   # auto | rao | raw
    measure_every: int = 1

    def __post_init__(self):
        if min(self.n_sweeps, self.n_therm, self.block_len) <= 0:
            raise ValueError("sweep, thermalization and block counts must be positive")
        if self.n_sweeps % self.block_len:
            raise ValueError("n_sweeps must be a multiple of block_len")
        if self.n_sweeps // self.block_len < 2:
            raise ValueError("need at least two blocks for a jackknife error")
        if self.estimator not in ("auto", "rao", "raw"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.measure_every < 1 or self.block_len % self.measure_every:
            raise ValueError("block_len must be a multiple of measure_every")

    @property
    def n_blocks(self):
        return self.n_sweeps // self.block_len


@dataclass(frozen=True)
class WilsonEstimate:
    mean: float
    stderr: float
    n_sweeps: int
    n_therm: int
    block_len: int
    mode: str
    estimator: str
    seed: int
    stream_id: int
    params: dict = field(default_factory=dict)


def jackknife_mean(blocks):
    """Leave-one-block-out jackknife mean and stderr."""
    blocks = np.asarray(blocks, dtype=float)
    nb = blocks.size
    total = blocks.sum()
    loo = (total - blocks) / (nb - 1)
    mean = blocks.mean()
    se = math.sqrt((nb - 1) / nb * np.sum((loo - loo.mean()) ** 2))
    return mean, se


def tau_int(series, window_factor=6.0):
    """Integrated autocorrelation time with a self-consistent window."""
    x = np.asarray(series, dtype=float)
    n = x.size
    x = x - x.mean()
    var = np.dot(x, x) / n
    if var == 0:
        return 0.5
    tau = 0.5
    for t in range(1, n // 2):
        c = np.dot(x[:-t], x[t:]) / (n - t) / var
        tau += c
        if t >= window_factor * tau:
            break
    return max(tau, 0.5)


# -- numba kernels ---------------------------------------------------------


@njit(cache=True)
def _run_gauge(s, nbr_ptr, nbr_other, jp, je, u, line_ptr, line_idx,
               uniq_edges, factor, rb, acc, measure_every):
    nsweeps = u.shape[0]
    n_edges = s.size
    for t in range(nsweeps):
        for e in range(n_edges):
            b = 0.0
            for k in range(nbr_ptr[e], nbr_ptr[e + 1]):
                b += s[nbr_other[k, 0]] * s[nbr_other[k, 1]] * s[nbr_other[k, 2]]
            h = jp * b + je
            if u[t, e] * (1.0 + math.exp(-2.0 * h)) < 1.0:
                s[e] = 1.0
            else:
                s[e] = -1.0
        if (t + 1) % measure_every:
            continue
        for ui in range(uniq_edges.size):
            e = uniq_edges[ui]
            if rb:
                b = 0.0
                for kk in range(nbr_ptr[e], nbr_ptr[e + 1]):
                    b += (s[nbr_other[kk, 0]] * s[nbr_other[kk, 1]]
                          * s[nbr_other[kk, 2]])
                factor[ui] = math.tanh(jp * b + je)
            else:
                factor[ui] = s[e]
        for li in range(line_ptr.size - 1):
            prod = 1.0
            for k in range(line_ptr[li], line_ptr[li + 1]):
                prod *= factor[line_idx[k]]
            acc[li] += prod


@njit(cache=True)
def _run_ising(s, vnbr_ptr, vnbr_idx, je, u, pairs, uniq_verts, factor, rb,
               acc, measure_every):
    nsweeps = u.shape[0]
    n_verts = s.size
    for t in range(nsweeps):
        for v in range(n_verts):
            b = 0.0
            for k in range(vnbr_ptr[v], vnbr_ptr[v + 1]):
                b += s[vnbr_idx[k]]
            h = je * b
            if u[t, v] * (1.0 + math.exp(-2.0 * h)) < 1.0:
                s[v] = 1.0
            else:
                s[v] = -1.0
        if (t + 1) % measure_every:
            continue
        for ui in range(uniq_verts.size):
            v = uniq_verts[ui]
            if rb:
                b = 0.0
                for k in range(vnbr_ptr[v], vnbr_ptr[v + 1]):
                    b += s[vnbr_idx[k]]
                factor[ui] = math.tanh(je * b)
            else:
                factor[ui] = s[v]
        for pi in range(pairs.shape[0]):
            acc[pi] += factor[pairs[pi, 0]] * factor[pairs[pi, 1]]


def _gauge_tables(lat):
    cached = getattr(lat, "_mc_gauge", None)
    if cached is not None:
        return cached
    rows = []
    ptr = [0]
    for e in range(lat.n_edges):
        for p in _mask_bits(lat.edge_pmask[e]):
            others = [x for x in lat.plaq_edges[p] if x != e]
            rows.append(others)
        ptr.append(len(rows))
    nbr_ptr = np.asarray(ptr, dtype=np.int64)
    nbr_other = (np.asarray(rows, dtype=np.int64) if rows
                 else np.zeros((0, 3), dtype=np.int64))
    lat._mc_gauge = (nbr_ptr, nbr_other)
    return lat._mc_gauge


def _ising_tables(lat):
    cached = getattr(lat, "_mc_ising", None)
    if cached is not None:
        return cached
    idx = []
    ptr = [0]
    for v in range(lat.n_verts):
        for e in _mask_bits(lat.vert_emask[v]):
            a, b = lat.edge_verts[e]
            idx.append(b if a == v else a)
        ptr.append(len(idx))
    lat._mc_ising = (np.asarray(ptr, dtype=np.int64), np.asarray(idx, dtype=np.int64))
    return lat._mc_ising


def _rb_allowed_gauge(lat, lines):
    """Conditional-mean estimation is exact iff no plaquette holds two edges
    of the same line (the line edges are then conditionally independent)."""
    for line in lines:
        mask = 0
        for e in line:
            mask |= 1 << int(e)
        for p in range(lat.n_plaqs):
            if (lat.plaq_emask[p] & mask).bit_count() >= 2:
                return False
    return True


def _lines_arrays(lines):
    """Flatten lines into (ptr, idx-into-uniq, uniq) arrays."""
    uniq = sorted({int(e) for line in lines for e in line})
    pos = {e: i for i, e in enumerate(uniq)}
    ptr = [0]
    idx = []
    for line in lines:
        idx.extend(pos[int(e)] for e in line)
        ptr.append(len(idx))
    return (np.asarray(ptr, dtype=np.int64),
            np.asarray(idx, dtype=np.int64) if idx else np.zeros(0, dtype=np.int64),
            np.asarray(uniq, dtype=np.int64) if uniq else np.zeros(0, dtype=np.int64))


def run_gauge_chain(params, lines, plan, rng_spec):
    """Heat-bath chain measuring Wilson products over the given edge lines.

    Returns the (n_blocks, n_lines) block means and the estimator tag used.
    """
    if params.beta == math.inf:
        raise ValueError("beta = infinity: use the Ising sampler")
    lat = params.lattice()
    nbr_ptr, nbr_other = _gauge_tables(lat)
    line_ptr, line_idx, uniq_edges = _lines_arrays(lines)
    rb = plan.estimator != "raw" and _rb_allowed_gauge(lat, lines)
    if plan.estimator == "rao" and not rb:
        raise ValueError("rao estimator invalid: a plaquette holds two line edges")
    s = np.ones(lat.n_edges, dtype=np.float64)
    rng = rng_spec.generator()
    empty_ptr = np.zeros(1, dtype=np.int64)
    empty_idx = np.zeros(0, dtype=np.int64)
    none = np.zeros(0, dtype=np.float64)
    factor = np.zeros(uniq_edges.size, dtype=np.float64)
    done = 0
    while done < plan.n_therm:
        step = min(CHUNK_SWEEPS, plan.n_therm - done)
        u = rng.random((step, lat.n_edges))
        _run_gauge(s, nbr_ptr, nbr_other, params.j_plaq, params.j_edge, u,
                   empty_ptr, empty_idx, empty_idx, none, False, none, 1)
        done += step
    per_block = plan.block_len // plan.measure_every
    blocks = np.empty((plan.n_blocks, len(lines)), dtype=np.float64)
    for b in range(plan.n_blocks):
        acc = np.zeros(len(lines), dtype=np.float64)
        u = rng.random((plan.block_len, lat.n_edges))
        _run_gauge(s, nbr_ptr, nbr_other, params.j_plaq, params.j_edge, u,
                   line_ptr, line_idx, uniq_edges, factor, rb, acc,
                   plan.measure_every)
        blocks[b] = acc / per_block
    if not np.isfinite(blocks).all():
        raise NumericError("non-finite measurement in gauge chain")
    return blocks, ("rao" if rb else "raw")


def mc_wilson(params, gamma, plan, rng_spec):
    """Monte Carlo estimate of E[rho(sigma(gamma))] with jackknife error."""
    lat = params.lattice()
    mask = gamma.mask if isinstance(gamma, PathPolymer) else int(gamma)
    line = list(_mask_bits(mask))
    blocks, est = run_gauge_chain(params, [line], plan, rng_spec)
    mean, se = jackknife_mean(blocks[:, 0])
    return WilsonEstimate(mean=mean, stderr=se, n_sweeps=plan.n_sweeps,
                          n_therm=plan.n_therm, block_len=plan.block_len,
                          mode="finite-beta", estimator=est,
                          seed=rng_spec.seed, stream_id=rng_spec.stream_id,
                          params={"beta": params.beta, "kappa": params.kappa,
                                  "box": params.box.extents,
                                  "oriented_double": params.oriented_double})


def run_ising_chain(kappa, box, pairs, plan, rng_spec, oriented_double=True):
    """Vertex heat-bath chain measuring spin-spin products over vertex pairs."""
    lat = lattice_for(box)
    vnbr_ptr, vnbr_idx = _ising_tables(lat)
    pair_arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    rb = plan.estimator != "raw"
    if rb:
        for x, y in pair_arr:
            nbrs = set(vnbr_idx[vnbr_ptr[x]:vnbr_ptr[x + 1]])
            if y == x or y in nbrs:
                rb = False
                break
    if plan.estimator == "rao" and not rb:
        raise ValueError("rao estimator invalid for adjacent or equal vertices")
    j_edge = (2.0 if oriented_double else 1.0) * kappa
    s = np.ones(lat.n_verts, dtype=np.float64)
    rng = rng_spec.generator()
    no_pairs = np.zeros((0, 2), dtype=np.int64)
    none = np.zeros(0, dtype=np.float64)
    no_verts = np.zeros(0, dtype=np.int64)
    uniq = sorted({int(v) for xy in pair_arr for v in xy})
    pos = {v: i for i, v in enumerate(uniq)}
    slot_arr = np.asarray([[pos[int(x)], pos[int(y)]] for x, y in pair_arr],
                          dtype=np.int64).reshape(-1, 2)
    uniq_arr = np.asarray(uniq, dtype=np.int64)
    factor = np.zeros(uniq_arr.size, dtype=np.float64)
    done = 0
    while done < plan.n_therm:
        step = min(CHUNK_SWEEPS, plan.n_therm - done)
        u = rng.random((step, lat.n_verts))
        _run_ising(s, vnbr_ptr, vnbr_idx, j_edge, u, no_pairs, no_verts, none,
                   False, none, 1)
        done += step
    per_block = plan.block_len // plan.measure_every
    blocks = np.empty((plan.n_blocks, pair_arr.shape[0]), dtype=np.float64)
    for b in range(plan.n_blocks):
        acc = np.zeros(pair_arr.shape[0], dtype=np.float64)
        u = rng.random((plan.block_len, lat.n_verts))
        _run_ising(s, vnbr_ptr, vnbr_idx, j_edge, u, slot_arr, uniq_arr, factor,
                   rb, acc, plan.measure_every)
        blocks[b] = acc / per_block
    if not np.isfinite(blocks).all():
        raise NumericError("non-finite measurement in Ising chain")
    return blocks, ("rao" if rb else "raw")


def mc_ising_correlation(kappa, box, x, y, plan, rng_spec, oriented_double=True):
    """Monte Carlo spin-spin correlation of the beta = infinity reduction."""
    lat = lattice_for(box)
    xi, yi = lat.vidx(x), lat.vidx(y)
    if xi == yi:
        return WilsonEstimate(mean=1.0, stderr=0.0, n_sweeps=0, n_therm=0,
                              block_len=1, mode="ising-inf", estimator="exact",
                              seed=rng_spec.seed, stream_id=rng_spec.stream_id,
                              params={"kappa": kappa, "box": box.extents})
    blocks, est = run_ising_chain(kappa, box, [(xi, yi)], plan, rng_spec,
                                  oriented_double)
    mean, se = jackknife_mean(blocks[:, 0])
    return WilsonEstimate(mean=mean, stderr=se, n_sweeps=plan.n_sweeps,
                          n_therm=plan.n_therm, block_len=plan.block_len,
                          mode="ising-inf", estimator=est,
                          seed=rng_spec.seed, stream_id=rng_spec.stream_id,
                          params={"kappa": kappa, "box": box.extents,
                                  "oriented_double": oriented_double})


# -- decay scans -----------------------------------------------------------


@dataclass(frozen=True)
class ScanRow:
    n: int
    beta_n: float
    kappa: float
    mean: float
    stderr: float
    sweeps: int
    seed: int
    xi_times_n: float
    mode: str


def dilute_schedule(lam, m, oriented_double=True):
    """beta_n keeping n * xi_beta = lam: the dilute-gas scaling line."""
    factor = 4.0 * (m - 1) * (2.0 if oriented_double else 1.0)

    def beta_n(n):
        return math.log(n / lam) / factor

    return beta_n


def fixed_schedule(beta):
    return lambda n: beta


def _line_starts(lat, n, axis, translates):
    lo, hi = lat.box.extents[axis]
    left = lo + (hi - lo - n) // 2
    starts = [left]
    offset = 1
    while len(starts) < translates:
        for s in (left - offset, left + offset):
            if lo <= s and s + n <= hi and len(starts) < translates:
                starts.append(s)
        if offset > hi - lo:
            break
        offset += 1
    return sorted(starts)


def _cross_sections(lat, axis, rows):
    mids = []
    for d, (lo, hi) in enumerate(lat.box.extents):
        mids.append((lo + hi) // 2)
    options = []
    d_other = [d for d in range(lat.m) if d != axis]
    for r in range(rows):
        coord = list(mids)
        lo, hi = lat.box.extents[d_other[0]]
        c = mids[d_other[0]] + (r + 1) // 2 * (1 if r % 2 else -1)
        if lo <= c <= hi:
            coord[d_other[0]] = c
            options.append(tuple(coord))
    return options or [tuple(mids)]


def decay_scan(box, kappa, n_values, schedule, plan, seed, streams=1, axis=0,
               translates=1, rows=1, mode="gauge", oriented_double=True):
    """Wilson-line (or Ising) decay profile over n with per-n couplings.

    mode="gauge" runs one chain per (n, stream) at beta_n = schedule(n);
    mode="ising" runs one chain per stream measuring every n at once.
    Estimates average over `translates` line positions and `rows` transverse
    offsets to cut variance; errors are pooled block jackknives over streams.
    """
    from .exact import ModelParams

    lat = lattice_for(box)
    m = box.m
    rows_out = []
    if mode == "ising":
        pairs = []
        slot = []
        for n in n_values:
            for sec in _cross_sections(lat, axis, rows):
                for start in _line_starts(lat, n, axis, translates):
                    a = list(sec)
                    a[axis] = start
                    b = list(a)
                    b[axis] = start + n
                    pairs.append((lat.vidx(tuple(a)), lat.vidx(tuple(b))))
                    slot.append(n)
        all_blocks = {n: [] for n in n_values}
        for stream in range(streams):
            blocks, _ = run_ising_chain(kappa, box, pairs, plan,
                                        RngSpec(seed, stream), oriented_double)
            for n in n_values:
                cols = [i for i, nn in enumerate(slot) if nn == n]
                all_blocks[n].append(blocks[:, cols].mean(axis=1))
        for n in n_values:
            mean, se = jackknife_mean(np.concatenate(all_blocks[n]))
            rows_out.append(ScanRow(n=n, beta_n=math.inf, kappa=kappa, mean=mean,
                                    stderr=se, sweeps=plan.n_sweeps * streams,
                                    seed=seed, xi_times_n=0.0, mode="ising-inf"))
        return rows_out

    for n in n_values:
        beta_n = schedule(n)
        params = ModelParams(box, beta=beta_n, kappa=kappa,
                             oriented_double=oriented_double)
        lines = []
        for sec in _cross_sections(lat, axis, rows):
            for start in _line_starts(lat, n, axis, translates):
                a = list(sec)
                a[axis] = start
                mask = lat.straight_line_mask(tuple(a), n, axis)
                lines.append(list(_mask_bits(mask)))
        blocks = []
        for stream in range(streams):
            bm, _ = run_gauge_chain(params, lines, plan, RngSpec(seed, stream))
            blocks.append(bm.mean(axis=1))
        mean, se = jackknife_mean(np.concatenate(blocks))
        jp = (2.0 if oriented_double else 1.0) * beta_n
        xi = math.exp(-2.0 * jp) ** (2 * (m - 1))
        rows_out.append(ScanRow(n=n, beta_n=beta_n, kappa=kappa, mean=mean,
                                stderr=se, sweeps=plan.n_sweeps * streams,
                                seed=seed, xi_times_n=xi * n, mode="finite-beta"))
    return rows_out


def scan_rows_to_csv(rows):
    lines = ["n,beta_n,kappa,mean,stderr,sweeps,seed"]
    for r in rows:
        lines.append(f"{r.n},{r.beta_n},{r.kappa},{r.mean!r},{r.stderr!r},{r.sweeps},{r.seed}")
    return "\n".join(lines) + "\n"
