"""Chaos-game sampling of self-affine measures and grid-based spectrum estimates.

Sampling runs ``K`` independent chains in lockstep. Points are stored
step-major, so ``points[i]`` belongs to chain ``i % K``; per-chain means give
honest standard errors for statistics of the correlated orbit (batch means).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .lyapunov import RNG_NAME, make_rng
from .words import BudgetError, IFSSpec

__all__ = [
    "SampledMeasure",
    "GridMoments",
    "EmpiricalTau",
    "random_translations",
    "rosc_translations",
    "chaos_game",
    "grid_moments",
    "empirical_tau",
    "dyadic_radii",
    "local_dimension_histogram",
    "InequalityCheck",
    "check_measure_inequalities",
    "pushforward_check",
    "affine_mean",
    "write_sample",
    "read_sample",
    "write_moments",
    "MIN_STAT_POINTS",
]

SAMPLE_BUDGET = 10**9
MIN_STAT_POINTS = 10_000
NOISE_FLOOR = 20.0
N_SHIFTS = 4


# ---------------------------------------------------------------------------
# translations
# ---------------------------------------------------------------------------

def random_translations(m: int, d: int, rho: float, seed) -> np.ndarray:
    """Uniform draw from the ball of radius ``rho`` in ``R^(m d)``, shaped ``(m, d)``."""
    if m < 1 or d < 1:
        raise ValueError("need m >= 1 and d >= 1")
    if not rho >= 0:
        raise ValueError(f"rho must be >= 0, got {rho}")
    rng = make_rng(seed)
    g = rng.standard_normal(m * d)
    u = rng.random()
    if rho == 0:
        return np.zeros((m, d))
    v = g / np.linalg.norm(g) * rho * u ** (1.0 / (m * d))
    return v.reshape(m, d)


def rosc_translations(m: int, t1: float, t2: float) -> np.ndarray:
    """Translations placing ``m`` copies of ``[0,t1] x [0,t2]`` diagonally in the unit square.

    Copy ``i`` sits at ``(i(1-t1)/(m-1), i(1-t2)/(m-1))``; the images of the open
    unit square are pairwise disjoint when ``m t1 <= 1`` or ``m t2 <= 1``.
    """
    if m < 2:
        raise ValueError("need m >= 2")
    if not 0 < t2 < t1 < 1:
        raise ValueError("need 0 < t2 < t1 < 1")
    if m * t1 > 1 and m * t2 > 1:
        raise ValueError("copies would overlap: need m*t1 <= 1 or m*t2 <= 1")
    i = np.arange(m)
    return np.stack([i * (1 - t1) / (m - 1), i * (1 - t2) / (m - 1)], axis=1)


def affine_mean(spec: IFSSpec) -> np.ndarray:
    """Mean of the self-affine measure: ``(I - sum p_i T_i)^(-1) sum p_i a_i``."""
    if spec.translations is None:
        raise ValueError("spec has no translations")
    T = np.tensordot(spec.probabilities, np.stack(spec.linear_parts), axes=1)
    b = spec.probabilities @ spec.translations
    return np.linalg.solve(np.eye(spec.d) - T, b)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

@dataclass
class SampledMeasure:
    """Orbit points approximating the self-affine measure."""

    points: np.ndarray
    labels: np.ndarray
    spec: IFSSpec
    seed: object
    burn_in: int
    chains: int
    bounding_radius: float
    generator: str = RNG_NAME

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def chain_ids(self) -> np.ndarray:
        return np.arange(self.n) % self.chains

    def batch_mean_se(self, values: np.ndarray) -> tuple[float, float]:
        """Mean of per-point ``values`` and its standard error from chain means."""
        values = np.asarray(values, dtype=float)
        K = self.chains
        if self.n % K == 0:
            means = values.reshape(-1, K).mean(axis=0)
            if K < 2:
                return float(values.mean()), math.inf
            return float(values.mean()), float(means.std(ddof=1) / math.sqrt(K))
        ids = self.chain_ids()
        sums = np.bincount(ids, weights=values, minlength=self.chains)
        counts = np.bincount(ids, minlength=self.chains)
        ok = counts > 0
        means = sums[ok] / counts[ok]
        mean = float(values.mean())
        if means.size < 2:
            return mean, math.inf
        return mean, float(means.std(ddof=1) / math.sqrt(means.size))

    def metadata(self) -> dict:
        return {"spec_hash": self.spec.spec_hash(), "seed": self.seed, "N": self.n,
                "burn_in": self.burn_in, "chains": self.chains, "generator": self.generator,
                "bounding_radius": self.bounding_radius}


def chaos_game(spec: IFSSpec, N: int = 1_000_000, burn_in: int = 1000, seed=0, *,
               chains: int = 1024, budget: int = SAMPLE_BUDGET) -> SampledMeasure:
    """Random iteration ``z <- T_i z + a_i`` with ``i ~ p`` on parallel chains.

    Every chain starts at the origin, which lies in the invariant ball
    ``B(0, R)``; the first ``burn_in`` iterates of each chain are discarded.
    """
    if spec.translations is None:
        raise ValueError("chaos game needs translations")
    if N < 1 or burn_in < 0 or chains < 1:
        raise ValueError("need N >= 1, burn_in >= 0, chains >= 1")
    chains = min(chains, N)
    steps = -(-N // chains)
    if chains * (steps + burn_in) > budget:
        raise BudgetError(f"{chains * (steps + burn_in)} iterations exceed the sampling budget {budget}")
    rng = make_rng(seed)
    T = np.stack(spec.linear_parts)
    a = spec.translations
    cum = np.cumsum(spec.probabilities)
    cum[-1] = 1.0
    diag = spec.diagonal
    Td = np.array([np.diag(M) for M in T]) if diag else None
    z = np.zeros((chains, spec.d))
    pts = np.empty((steps, chains, spec.d))
    lab = np.empty((steps, chains), dtype=np.int16)
    block = 256
    total = burn_in + steps
    for b0 in range(0, total, block):
        nb = min(block, total - b0)
        idx_block = np.searchsorted(cum, rng.random((nb, chains)), side="right")
        for j in range(nb):
            idx = idx_block[j]
            if diag:
                z = Td[idx] * z + a[idx]
            else:
                z = np.einsum("kij,kj->ki", T[idx], z) + a[idx]
            s = b0 + j - burn_in
            if s >= 0:
                pts[s] = z
                lab[s] = idx
    points = pts.reshape(-1, spec.d)[:N]
    labels = lab.reshape(-1)[:N]
    return SampledMeasure(points, labels, spec, seed, burn_in, chains, spec.bounding_radius)


# ---------------------------------------------------------------------------
# grid moments and spectrum estimates
# ---------------------------------------------------------------------------

@dataclass
class GridMoments:
    """Moment sums ``sum_cells mu(cell)^q`` for cells of side ``2r``."""

    radii: np.ndarray
    q: np.ndarray
    log_moments: np.ndarray
    cells_occupied: np.ndarray
    shifts: int
    notices: list = field(default_factory=list)

    def rows(self):
        for i, r in enumerate(self.radii):
            for j, q in enumerate(self.q):
                yield float(r), float(q), float(self.log_moments[i, j]), float(self.cells_occupied[i])


def _cell_counts(points: np.ndarray, side: float, origin: np.ndarray) -> np.ndarray:
    idx = np.floor((points - origin) / side).astype(np.int64)
    idx -= idx.min(axis=0)
    span = idx.max(axis=0) + 1
    if float(np.prod(span.astype(float))) <= 4e7:
        key = np.ravel_multi_index(idx.T, tuple(span))
        c = np.bincount(key)
        return c[c > 0]
    key = idx[:, 0]
    for j in range(1, idx.shape[1]):
        key = key * span[j] + idx[:, j]
    return np.unique(key, return_counts=True)[1]


def dyadic_radii(sample: SampledMeasure, octaves: int = 9, start: int | None = None) -> np.ndarray:
    """``r = 2^-k`` for ``octaves`` consecutive ``k``, starting near 1/16 of the attractor's extent."""
    ext = float(np.max(sample.points.max(axis=0) - sample.points.min(axis=0)))
    k0 = start if start is not None else max(1, int(math.ceil(-math.log2(max(ext, 1e-300) / 16))))
    return 2.0 ** -np.arange(k0, k0 + octaves, dtype=float)


def grid_moments(sample: SampledMeasure, r_list: Sequence[float], q_list: Sequence[float], *,
                 shifts: int = N_SHIFTS, seed=None, noise_floor: float = NOISE_FLOOR) -> GridMoments:
    """Moment sums over axis-aligned cells of side ``2r``, averaged over random grid origins.

    Radii whose mean occupancy ``N / cells`` falls below ``noise_floor`` are
    dropped with a notice.
    """
    pts = sample.points
    if pts.shape[0] == 0:
        raise ValueError("empty sample")
    r_list = np.asarray(sorted(set(float(r) for r in r_list), reverse=True))
    q = np.asarray(q_list, dtype=float)
    if np.any(r_list <= 0):
        raise ValueError("radii must be positive")
    if np.any(q < 0):
        raise ValueError("moments are defined here for q >= 0")
    rng = make_rng(sample.seed if seed is None else seed)
    N = pts.shape[0]
    keep, logs, occ, notices = [], [], [], []
    for r in r_list:
        side = 2.0 * r
        acc = np.zeros(q.size)
        n_occ = 0.0
        for _ in range(shifts):
            origin = rng.random(pts.shape[1]) * side
            counts = _cell_counts(pts, side, origin)
            w = counts / N
            lw = np.log(w)
            acc += np.exp(q[:, None] * lw[None, :]).sum(axis=1)
            n_occ += counts.size
        n_occ /= shifts
        if N / n_occ < noise_floor:
            notices.append(f"r={r:.6g} excluded: {N / n_occ:.3g} points per occupied cell < {noise_floor:g}")
            continue
        keep.append(r)
        logs.append(np.log(acc / shifts))
        occ.append(n_occ)
    return GridMoments(np.array(keep), q, np.array(logs).reshape(len(keep), q.size),
                       np.array(occ), shifts, notices)


@dataclass
class EmpiricalTau:
    q: float
    slope: float
    stderr: float
    intercept: float
    curvature: float
    curved: bool
    radii: np.ndarray


def empirical_tau(moments: GridMoments, q: float, curvature_tol: float = 0.02) -> EmpiricalTau:
    """Least-squares slope of ``log sum mu^q`` against ``log r``.

    ``curvature`` is the largest gap between the quadratic and the linear fit
    over the radius range; above ``curvature_tol`` the estimate is flagged.
    """
    j = np.flatnonzero(np.isclose(moments.q, q))
    if j.size == 0:
        raise ValueError(f"q = {q} not among the computed moments")
    x = np.log(moments.radii)
    y = moments.log_moments[:, j[0]]
    if x.size < 4:
        raise ValueError(f"need at least 4 radii, got {x.size}")
    if np.ptp(x) == 0:
        raise ValueError("degenerate regression: all radii equal")
    lin = stats.linregress(x, y)
    quad = np.polyfit(x, y, 2)
    gap = np.polyval(quad, x) - (lin.intercept + lin.slope * x)
    curv = float(np.max(np.abs(gap)))
    return EmpiricalTau(float(q), float(lin.slope), float(lin.stderr), float(lin.intercept),
                        curv, curv > curvature_tol, moments.radii.copy())


def local_dimension_histogram(sample: SampledMeasure, r_list: Sequence[float], bins: int = 40,
                              seed=None) -> list:
    """Per-point coarse local dimensions ``log mu(cell(x)) / log(2r)`` and coarse spectra.

    For each radius returns a dict with the histogram (``counts``, ``edges``),
    the per-point values and the coarse ``(alpha, f)`` cloud where
    ``f = -log N(alpha) / log(2r)`` counts cells in each alpha bin.
    """
    pts = sample.points
    rng = make_rng(sample.seed if seed is None else seed)
    N = pts.shape[0]
    out = []
    for r in sorted(r_list, reverse=True):
        side = 2.0 * r
        origin = rng.random(pts.shape[1]) * side
        idx = np.floor((pts - origin) / side).astype(np.int64)
        _, inv, counts = np.unique(idx, axis=0, return_inverse=True, return_counts=True)
        inv = inv.reshape(-1)
        cell_alpha = np.log(counts / N) / math.log(side)
        point_alpha = cell_alpha[inv]
        hist, edges = np.histogram(point_alpha, bins=bins)
        cell_hist, _ = np.histogram(cell_alpha, bins=edges)
        centers = 0.5 * (edges[1:] + edges[:-1])
        ok = cell_hist > 0
        f = -np.log(cell_hist[ok]) / math.log(side)
        out.append({"r": float(r), "counts": hist, "edges": edges, "alpha": point_alpha,
                    "coarse_alpha": centers[ok], "coarse_f": f})
    return out


# ---------------------------------------------------------------------------
# measure inequalities
# ---------------------------------------------------------------------------

@dataclass
class InequalityCheck:
    kind: str
    word: tuple
    estimate: float
    stderr: float
    bound: float
    status: str
    detail: dict = field(default_factory=dict)


def _word_affine(spec: IFSSpec, word) -> tuple[np.ndarray, np.ndarray]:
    """Linear part and translation of ``S_{i_1} o ... o S_{i_n}``."""
    T = np.eye(spec.d)
    b = np.zeros(spec.d)
    for i in word:
        b = T @ spec.translations[i] + b
        T = T @ spec.linear_parts[i]
    return T, b


def _apply_word(spec: IFSSpec, word, z: np.ndarray) -> np.ndarray:
    """``S_{i_1} o ... o S_{i_n}`` applied to rows of ``z``."""
    T, b = _word_affine(spec, word)
    return z @ T.T + b


def _in_box(z, lo, hi):
    mask = (z[:, 0] >= lo[0]) & (z[:, 0] <= hi[0])
    for j in range(1, z.shape[1]):
        mask &= (z[:, j] >= lo[j]) & (z[:, j] <= hi[j])
    return mask


def check_measure_inequalities(sample: SampledMeasure, words: Sequence[Sequence[int]] | None = None,
                               trials: int = 200, seed=None, *, max_len: int = 12,
                               ball_level: int = 8, min_count: int = 10) -> list:
    """Statistical checks of two lower bounds satisfied by self-affine measures.

    ``cylinder``: ``mu(A) >= p_I mu(S_I^{-1} A)`` for random boxes ``A`` and
    words ``I``, estimated as the mean of ``1_A(z) - p_I 1_A(S_I z)`` over the
    sample. ``ball``: ``mu(B(S_I z, 2R ||T_I||)) >= p_I`` for a random word of
    length ``ball_level`` and a random sample point ``z``.

    Standard errors come from chain batch means. A check fails only if the
    estimate falls below the bound by more than three standard errors; with
    fewer than ``min_count`` points involved it is ``inconclusive``.
    """
    spec = sample.spec
    rng = make_rng([int(sample.seed), 1] if seed is None else seed)
    pts = sample.points
    R = sample.bounding_radius
    p = spec.probabilities
    out = []
    if words is None:
        lens = rng.integers(1, max_len + 1, size=trials)
        words = [tuple(int(i) for i in rng.choice(spec.m, size=k, p=p)) for k in lens]
    for w in words:
        w = tuple(int(i) for i in w)
        pI = float(np.prod(p[list(w)]))
        # cylinder check on a random box around the image of a sample point
        c = _apply_word(spec, w, pts[rng.integers(pts.shape[0])][None, :])[0]
        half = R * np.exp(rng.uniform(np.log(1e-3), np.log(0.5), size=spec.d))
        lo, hi = c - half, c + half
        inA = _in_box(pts, lo, hi)
        inB = _in_box(_apply_word(spec, w, pts), lo, hi)
        diff = inA.astype(float) - pI * inB.astype(float)
        est, se = sample.batch_mean_se(diff)
        n_used = int(inA.sum() + inB.sum())
        out.append(_status("cylinder", w, est, se, 0.0, n_used, min_count,
                           {"box_lo": lo.tolist(), "box_hi": hi.tolist(), "p_I": pI,
                            "mu_A": float(inA.mean()), "mu_preimage": float(inB.mean())}))
        # ball check at level ball_level
        v = tuple(int(i) for i in rng.choice(spec.m, size=ball_level, p=p))
        pv = float(np.prod(p[list(v)]))
        Tn, _ = _word_affine(spec, v)
        radius = 2.0 * R * float(np.linalg.norm(Tn, 2))
        x = _apply_word(spec, v, pts[rng.integers(pts.shape[0])][None, :])[0]
        dist2 = (pts[:, 0] - x[0]) ** 2
        for j in range(1, spec.d):
            dist2 += (pts[:, j] - x[j]) ** 2
        inside = (dist2 <= radius * radius).astype(float)
        est, se = sample.batch_mean_se(inside)
        out.append(_status("ball", v, est, se, pv, int(inside.sum()), min_count,
                           {"center": x.tolist(), "radius": radius}))
    return out


def _status(kind, word, est, se, bound, n_used, min_count, detail) -> InequalityCheck:
    if n_used < min_count:
        status = "inconclusive"
    elif est < bound - 3.0 * se:
        status = "violation"
    elif abs(est - bound) <= 3.0 * se:
        status = "equality"
    else:
        status = "pass"
    return InequalityCheck(kind, word, float(est), float(se), float(bound), status, detail)


def pushforward_check(sample: SampledMeasure, fresh: SampledMeasure, i: int, *,
                      max_points: int = 2000, level: float = 0.0027) -> dict:
    """Two-sample KS test: points whose last map was ``i`` versus ``S_i`` of a fresh sample.

    Both sides are thinned to at most ``max_points`` points spread across
    chains, reducing serial correlation. Each coordinate is tested; the
    smallest p-value is Bonferroni-corrected against ``level`` (three sigma).
    """
    spec = sample.spec
    a = sample.points[sample.labels == i]
    b = _apply_word(spec, (i,), fresh.points)
    a = a[:: max(1, a.shape[0] // max_points)][:max_points]
    b = b[:: max(1, b.shape[0] // max_points)][:max_points]
    if a.shape[0] < 20:
        return {"map": i, "status": "inconclusive", "p_value": math.nan}
    pv = min(stats.ks_2samp(a[:, j], b[:, j]).pvalue for j in range(spec.d))
    pv_adj = min(1.0, pv * spec.d)
    return {"map": i, "status": "pass" if pv_adj >= level else "fail", "p_value": pv_adj,
            "sizes": (a.shape[0], b.shape[0])}


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def write_sample(path, sample: SampledMeasure) -> None:
    """Plain-text point list with ``#`` header lines carrying the generation metadata."""
    meta = sample.metadata()
    with open(path, "w") as fh:
        for k in ("spec_hash", "seed", "N", "burn_in", "chains", "generator", "bounding_radius"):
            fh.write(f"# {k}: {meta[k]}\n")
        np.savetxt(fh, np.column_stack([sample.points, sample.labels]), fmt="%.17g")


def read_sample(path) -> tuple[np.ndarray, np.ndarray, dict]:
    meta = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("#"):
                break
            k, _, v = line[1:].partition(":")
            meta[k.strip()] = v.strip()
    data = np.loadtxt(path, comments="#", ndmin=2)
    return data[:, :-1], data[:, -1].astype(int), meta


def write_moments(path, moments: GridMoments) -> None:
    with open(path, "w") as fh:
        fh.write("r,q,log_moment,cells_occupied\n")
        for r, q, lm, occ in moments.rows():
            fh.write(f"{r:.17g},{q:.17g},{lm:.17g},{occ:.17g}\n")
