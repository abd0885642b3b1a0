"""Exact path sampling via delayed-renewal recursions.

The joint law factorizes over gaps between successive "1"s, so a window can
be sampled as a delayed renewal sequence: draw the first "1" from the
first-event probabilities v, then successive gaps from the gap
probabilities u, finishing when a single uniform lands in the right-hand
survival mass.  The tables solve the Volterra-type recursions

    u_d = f(d) - sum_{j<d} u_j f(d-j),        d = 1..N,
    v_j = b*fT - sum_{i<j} v_i f(j-i),        j = 1..N,

and the induced pattern law equals the exact inclusion-exclusion law; that
equality is not assumed but enforced against the enumeration oracle by the
tests, and kernels for which it fails must be rejected.

Randomness is counter based: every chunk of paths draws from its own
Philox stream keyed by (master seed, chunk index), so ensembles are
bit-identical regardless of worker count or scheduling.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numpy.random import Generator, Philox

from .exact import WindowSpec
from .kernels import Kernel, check_assumption

__all__ = [
    "RenewalBreakdownError",
    "QueryError",
    "substream",
    "RenewalTables",
    "StarWalkSpec",
    "build_renewal_tables",
    "build_star_renewal_tables",
    "pattern_probability",
    "sample_gbp_window",
    "sample_gbp_star",
    "sample_window_patterns",
    "PathEnsemble",
    "scaled_walk_paths",
    "EstimateReport",
    "empirical_statistics",
]

BREAKDOWN_TOL = 1e-10
MASS_TOL = 1e-12
DEFAULT_CHUNK = 1 << 14
MEMORY_GUARD_CELLS = 200_000_000


class RenewalBreakdownError(ArithmeticError):
    """Renewal recursion produced a significantly negative probability."""


class QueryError(ValueError):
    """Statistics query refers to times missing from the ensemble grid."""


def substream(seed: int, index: int) -> Generator:
    """Independent counter-based stream keyed by (seed, index)."""
    return Generator(Philox(key=np.array([seed, index], dtype=np.uint64)))


@dataclass(frozen=True)
class StarWalkSpec:
    """Start-anchored walk source: kernel plus scale n (no horizon, no b)."""

    kernel: Kernel
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be a positive integer")


@dataclass(frozen=True)
class RenewalTables:
    """Gap pmf u, first-event pmf v, survival tails s, and no-event mass s0.

    s[m] = 1 - sum_{d<=m} u_d is the probability that the next "1" lies
    more than m slots ahead; s0 is the probability of an empty window.
    For start-anchored tables v equals u (gaps run from a virtual "1" at
    slot 0) and s0 = s[N].
    """

    N: int
    u: np.ndarray
    v: np.ndarray
    s: np.ndarray
    s0: float
    kind: str
    first_prob: float
    cu: np.ndarray = field(repr=False, default=None)
    cv: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "cu", np.cumsum(self.u[1:]))
        object.__setattr__(self, "cv", np.cumsum(self.v[1:]))

    @property
    def geometric(self) -> bool:
        """True when all gap mass sits on d = 1 (freezing kernels)."""
        return bool(self.cu[-1] - self.cu[0] <= 1e-15)


def _solve_gap_recursion(f: np.ndarray, target: np.ndarray, N: int,
                         label: str) -> np.ndarray:
    out = np.zeros(N + 1)
    for d in range(1, N + 1):
        val = target[d] - float(np.dot(out[1:d], f[d - 1:0:-1]))
        if val < -BREAKDOWN_TOL:
            raise RenewalBreakdownError(
                f"{label}[{d}] = {val:.6e} below -{BREAKDOWN_TOL:g}")
        out[d] = max(val, 0.0)
    return out


def _tables_from(f: np.ndarray, first: np.ndarray, N: int, kind: str,
                 first_prob: float) -> RenewalTables:
    u = _solve_gap_recursion(f, f, N, "u")
    v = u if kind == "star" else _solve_gap_recursion(f, first, N, "v")
    total_u = float(u[1:].sum())
    total_v = float(v[1:].sum())
    if total_u > 1.0 + MASS_TOL or total_v > 1.0 + MASS_TOL:
        raise RenewalBreakdownError(
            f"gap masses exceed 1: sum u = {total_u!r}, sum v = {total_v!r}")
    s = np.concatenate(([1.0], 1.0 - np.cumsum(u[1:])))
    np.clip(s, 0.0, 1.0, out=s)
    s0 = min(max(1.0 - total_v, 0.0), 1.0)
    return RenewalTables(N=N, u=u, v=v, s=s, s0=s0, kind=kind,
                         first_prob=first_prob)


def build_renewal_tables(window: WindowSpec) -> RenewalTables:
    """Stationary-window tables for the given window."""
    f = window.kernel_values()
    first = np.full(window.N + 1, window.marginal)
    return _tables_from(f, first, window.N, "window", window.marginal)


def build_star_renewal_tables(kernel: Kernel, n: int, length: int) -> RenewalTables:
    """Start-anchored tables: gaps run from a virtual "1" at slot 0."""
    if length < 1:
        raise ValueError("length must be >= 1")
    report = check_assumption(kernel, n, max_x=max(length, 3))
    if not (report.decreasing and report.ratio_nondecreasing):
        raise RenewalBreakdownError(f"kernel fails monotonicity checks: {report}")
    f = kernel.values(n, length)
    return _tables_from(f, f, length, "star", float(f[1]))


def pattern_probability(tables: RenewalTables, ones) -> float:
    """Probability of the full pattern with "1"s exactly at the given slots,
    computed symbolically from the tables (no sampling)."""
    ones = tuple(sorted(int(i) for i in ones))
    if not ones:
        return tables.s0
    p = tables.v[ones[0]]
    for lo, hi in zip(ones[:-1], ones[1:]):
        p *= tables.u[hi - lo]
    return p * tables.s[tables.N - ones[-1]]


def _draw_first(tables: RenewalTables, rng: Generator) -> int:
    """Slot of the first "1" (0 when the window stays empty)."""
    U = rng.random()
    if U >= tables.cv[-1]:
        return 0
    return int(np.searchsorted(tables.cv, U, side="right")) + 1


def _draw_gap(tables: RenewalTables, remaining: int, rng: Generator) -> int:
    """Next gap, or 0 when the single uniform lands in the survival mass
    s[remaining]; truncation is exact, no rejection."""
    if remaining < 1:
        return 0
    U = rng.random()
    if U >= tables.cu[remaining - 1]:
        return 0
    return int(np.searchsorted(tables.cu, U, side="right")) + 1


def sample_gbp_window(window: WindowSpec, tables: RenewalTables,
                      rng: Generator) -> np.ndarray:
    """One exact draw of the window as a 0/1 array of length N."""
    if tables.kind != "window" or tables.N != window.N:
        raise ValueError("tables were not built for this window")
    seq = np.zeros(window.N, dtype=np.int8)
    pos = _draw_first(tables, rng)
    while pos:
        seq[pos - 1] = 1
        gap = _draw_gap(tables, window.N - pos, rng)
        pos = pos + gap if gap else 0
    return seq


def sample_gbp_star(kernel: Kernel, n: int, length: int, rng: Generator,
                    tables: RenewalTables | None = None) -> np.ndarray:
    """One exact draw of the start-anchored sequence of the given length."""
    if tables is None:
        tables = build_star_renewal_tables(kernel, n, length)
    elif tables.kind != "star" or tables.N != length:
        raise ValueError("tables were not built for this star length")
    seq = np.zeros(length, dtype=np.int8)
    pos = _draw_gap(tables, length, rng)
    while pos:
        seq[pos - 1] = 1
        gap = _draw_gap(tables, length - pos, rng)
        pos = pos + gap if gap else 0
    return seq


def _chunk_ranges(count: int, chunk: int):
    for start in range(0, count, chunk):
        yield start, min(start + chunk, count)


def sample_window_patterns(window: WindowSpec, tables: RenewalTables,
                           count: int, seed: int,
                           chunk_size: int = DEFAULT_CHUNK) -> np.ndarray:
    """Vectorized batch of full window patterns as integer codes.

    Pattern code bit (N - i) is slot i, matching ProbabilityTable rows.
    Chunk c draws from substream (seed, c); results do not depend on the
    caller's threading.
    """
    if window.N > 62:
        raise ValueError("pattern codes support N <= 62")
    codes = np.zeros(count, dtype=np.int64)
    cu, cv, N = tables.cu, tables.cv, window.N
    for ci, (lo, hi) in enumerate(_chunk_ranges(count, chunk_size)):
        rng = substream(seed, ci)
        nc = hi - lo
        chunk_codes = np.zeros(nc, dtype=np.int64)
        U = rng.random(nc)
        has = U < cv[-1]
        pos = np.zeros(nc, dtype=np.int64)
        first = np.searchsorted(cv, U[has], side="right") + 1
        pos[has] = first
        chunk_codes[has] = np.int64(1) << (N - first)
        active = np.flatnonzero(has & (pos < N))
        while active.size:
            m = N - pos[active]
            U = rng.random(active.size)
            cont = U < cu[m - 1]
            keep = active[cont]
            gaps = np.searchsorted(cu, U[cont], side="right") + 1
            newpos = pos[keep] + gaps
            pos[keep] = newpos
            chunk_codes[keep] |= np.int64(1) << (N - newpos)
            active = keep[newpos < N]
        codes[lo:hi] = chunk_codes
    return codes


def _batch_counts(tables: RenewalTables, marks: np.ndarray, nc: int,
                  rng: Generator) -> np.ndarray:
    """Counts of "1"s at each mark (slots <= mark) for nc independent draws."""
    limit = tables.N
    counts = np.zeros((nc, marks.size), dtype=np.int64)
    if tables.kind == "star" and tables.geometric:
        # All gap mass on d = 1: the sequence is a single run of "1"s whose
        # length is geometric with continuation probability u_1, truncated
        # at the window end.  Identical law, one uniform per path.
        q = float(tables.cu[0])
        U = rng.random(nc)
        with np.errstate(divide="ignore"):
            runs = np.floor(np.log(U) / math.log(q)).astype(np.int64)
        runs = np.minimum(runs, limit)
        for g, m in enumerate(marks):
            counts[:, g] = np.minimum(runs, m)
        return counts
    cu, cv = tables.cu, tables.cv
    U = rng.random(nc)
    has = U < cv[-1]
    pos = np.zeros(nc, dtype=np.int64)
    pos[has] = np.searchsorted(cv, U[has], side="right") + 1
    active = np.flatnonzero(has)
    while active.size:
        p = pos[active]
        for g, m in enumerate(marks):
            counts[active[p <= m], g] += 1
        inside = p < limit
        active = active[inside]
        if not active.size:
            break
        m_rem = limit - pos[active]
        U = rng.random(active.size)
        cont = U < cu[m_rem - 1]
        keep = active[cont]
        gaps = np.searchsorted(cu, U[cont], side="right") + 1
        pos[keep] += gaps
        active = keep
    return counts


@dataclass
class PathEnsemble:
    """Scaled-walk values on a fixed time grid, one row per path.

    Values are cumulative counts divided by n**alpha, hence non-negative
    and non-decreasing along the grid.
    """

    grid: np.ndarray
    paths: np.ndarray
    meta: dict

    def increments(self, t_lo: float, t_hi: float) -> np.ndarray:
        """X(t_hi) - X(t_lo) per path, with X(0) = 0."""
        return self._column(t_hi) - self._column(t_lo)

    def _column(self, t: float) -> np.ndarray:
        if t == 0.0:
            return np.zeros(self.paths.shape[0])
        idx = np.flatnonzero(np.isclose(self.grid, t, rtol=0.0, atol=1e-12))
        if idx.size != 1:
            raise QueryError(f"time {t} not on the ensemble grid")
        return self.paths[:, idx[0]]

    def export_csv(self, path, sidecar=None) -> None:
        """Long-format CSV (path_id, t, value) plus a metadata sidecar."""
        with open(path, "w") as fh:
            fh.write("path_id,t,value\n")
            for pid in range(self.paths.shape[0]):
                for g, t in enumerate(self.grid):
                    fh.write(f"{pid},{t:.17g},{self.paths[pid, g]:.17g}\n")
        side = sidecar or (str(path) + ".meta.txt")
        body = "".join(f"{k} = {self.meta[k]}\n" for k in sorted(self.meta))
        digest = hashlib.sha256(body.encode()).hexdigest()
        with open(side, "w") as fh:
            fh.write(body)
            fh.write(f"content_hash = {digest}\n")


def scaled_walk_paths(source, grid, count: int, seed: int,
                      chunk_size: int = DEFAULT_CHUNK,
                      threads: int = 1) -> PathEnsemble:
    """Ensemble of scaled partial-sum walks on the grid.

    source is a WindowSpec (stationary walk, grid within (0, T]) or a
    StarWalkSpec (start-anchored walk, any positive grid).  Path chunks map
    to substreams (seed, chunk index) and are written into a preallocated
    array, so the result is independent of `threads`.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing and non-empty")
    if grid[0] <= 0.0:
        raise ValueError("grid times must be positive")
    if count * grid.size > MEMORY_GUARD_CELLS:
        raise ValueError("ensemble would exceed the memory guard")
    if isinstance(source, WindowSpec):
        if grid[-1] > source.T + 1e-12:
            raise ValueError("grid exceeds the window horizon")
        tables = build_renewal_tables(source)
        n = source.n
        alpha = source.kernel.alpha_scale
        meta_kernel = source.kernel.to_dict()
        variant = "window"
    elif isinstance(source, StarWalkSpec):
        n = source.n
        length = int(math.floor(n * grid[-1]))
        if length < 1:
            raise ValueError("grid too short: floor(n*t_max) must be >= 1")
        tables = build_star_renewal_tables(source.kernel, n, length)
        alpha = source.kernel.alpha_scale
        meta_kernel = source.kernel.to_dict()
        variant = "star"
    else:
        raise TypeError("source must be a WindowSpec or StarWalkSpec")
    marks = np.floor(n * grid).astype(np.int64)
    paths = np.empty((count, grid.size))
    scale = float(n) ** alpha

    def run_chunk(ci_lo_hi):
        ci, (lo, hi) = ci_lo_hi
        rng = substream(seed, ci)
        paths[lo:hi] = _batch_counts(tables, marks, hi - lo, rng) / scale

    jobs = list(enumerate(_chunk_ranges(count, chunk_size)))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_chunk, jobs))
    else:
        for job in jobs:
            run_chunk(job)
    meta = {"seed": seed, "variant": variant, "n": n, "alpha": alpha,
            "count": count, "chunk_size": chunk_size, "kernel": meta_kernel}
    return PathEnsemble(grid=grid, paths=paths, meta=meta)


@dataclass(frozen=True)
class EstimateReport:
    """Monte Carlo mean with its standard error."""

    mean: float
    stderr: float
    count: int

    def within(self, target: float, sigmas: float = 4.0) -> bool:
        return abs(self.mean - target) <= sigmas * self.stderr


def empirical_statistics(ensemble: PathEnsemble, query) -> EstimateReport:
    """Mean and standard error of prod_i (X(t_hi_i) - X(t_lo_i))**k_i.

    query is a sequence of (t_lo, t_hi, k) triples; all times must lie on
    the ensemble grid (t_lo = 0 means the walk origin).  An empty query or
    all-zero powers give exactly 1.
    """
    vals = np.ones(ensemble.paths.shape[0])
    for t_lo, t_hi, k in query:
        if k == 0:
            continue
        vals = vals * ensemble.increments(t_lo, t_hi) ** k
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return EstimateReport(mean=mean, stderr=stderr, count=vals.size)
