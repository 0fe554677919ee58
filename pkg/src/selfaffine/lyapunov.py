"""Lyapunov exponents of Bernoulli measures on the shift and the Lyapunov dimension."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .affine import compound_matrix, top_singular_values
from .words import BudgetError, IFSSpec

__all__ = [
    "BernoulliMeasure",
    "LyapunovData",
    "lyapunov_exponents",
    "lyapunov_dimension",
    "make_rng",
    "MC_BUDGET",
]

MC_BUDGET = 10**8
RNG_NAME = "numpy.random.Philox"


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator used for every random draw in the package."""
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class BernoulliMeasure:
    """Product measure with letter weights ``eta``."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.size == 0 or np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and non-negative")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1, got sum {math.fsum(w):.15g}")
        object.__setattr__(self, "weights", w)

    @classmethod
    def uniform(cls, m: int) -> "BernoulliMeasure":
        return cls(np.full(m, 1.0 / m))

    @property
    def entropy(self) -> float:
        w = self.weights[self.weights > 0]
        return float(-np.sum(w * np.log(w)))


@dataclass
class LyapunovData:
    """Exponents ``lambda_1 >= ... >= lambda_d`` (nats per symbol) and entropy."""

    lambdas: np.ndarray
    entropy: float
    stderr: np.ndarray | None = None
    method: str = "exact-diagonal"

    @property
    def d(self) -> int:
        return self.lambdas.size

    def phi_star(self, s: float) -> float:
        """``phi^k_* + (s - k) lambda_{k+1}`` on ``[k, k+1]``; ``(s/d) sum lambda`` beyond ``d``."""
        if s < 0:
            raise ValueError(f"s must be >= 0, got {s}")
        lam = self.lambdas
        d = lam.size
        if s >= d:
            return float(s / d * lam.sum())
        k = int(math.floor(s))
        return float(lam[:k].sum() + (s - k) * lam[k])


def _check_eta(spec: IFSSpec, eta) -> BernoulliMeasure:
    if not isinstance(eta, BernoulliMeasure):
        eta = BernoulliMeasure(eta)
    if eta.weights.size != spec.m:
        raise ValueError(f"eta has {eta.weights.size} weights for {spec.m} maps")
    return eta


def lyapunov_exponents(spec: IFSSpec, eta, method: str = "auto", *, n: int = 400,
                       trials: int = 10_000, seed=0, budget: int = MC_BUDGET) -> LyapunovData:
    """Lyapunov exponents of the matrix cocycle under the Bernoulli measure ``eta``.

    ``exact-diagonal`` averages the log diagonal entries and sorts them.
    ``monte-carlo`` samples ``trials`` random words of length ``n`` and averages
    ``log alpha_i(T_{x|n}) / n``; the reported standard error is the spread
    across independent trials divided by ``sqrt(trials)``.
    """
    eta = _check_eta(spec, eta)
    if method == "auto":
        method = "exact-diagonal" if spec.diagonal else "monte-carlo"
    if method == "exact-diagonal":
        if not spec.diagonal:
            raise ValueError("exact-diagonal exponents need diagonal linear parts")
        logs = np.log(np.abs(np.array([np.diag(T) for T in spec.linear_parts])))
        lam = np.sort(eta.weights @ logs)[::-1]
        return LyapunovData(lam, eta.entropy, None, method)
    if method != "monte-carlo":
        raise ValueError(f"unknown method {method!r}")
    if n < 1 or trials < 2:
        raise ValueError("need n >= 1 and trials >= 2")
    if n * trials > budget:
        raise BudgetError(f"n * trials = {n * trials} exceeds the Monte-Carlo budget {budget}")
    levels = _sample_levels(spec, eta.weights, n, trials, make_rng(seed))
    per_trial = np.diff(levels, axis=1) / n
    lam = per_trial.mean(axis=0)
    se = per_trial.std(axis=0, ddof=1) / math.sqrt(trials)
    return LyapunovData(lam, eta.entropy, se, "monte-carlo")


def _sample_levels(spec: IFSSpec, w: np.ndarray, n: int, trials: int, rng) -> np.ndarray:
    """``log phi^j(T_{x|n})`` for ``j = 0..d`` along ``trials`` random words."""
    d = spec.d
    mats = np.stack(spec.linear_parts)
    comps = [compound_matrix(mats, j) for j in range(1, d)]
    log_det = np.sum(spec.log_sv, axis=1)
    prods = [np.broadcast_to(np.eye(C.shape[-1]), (trials,) + C.shape[1:]).copy() for C in comps]
    scale = np.zeros((trials, len(comps)))
    det_sum = np.zeros(trials)
    for step in range(n):
        idx = rng.choice(spec.m, size=trials, p=w)
        det_sum += log_det[idx]
        for j, C in enumerate(comps):
            prods[j] = prods[j] @ C[idx]
        if step % 8 == 7 or step == n - 1:
            for j, P in enumerate(prods):
                nrm = np.max(np.abs(P), axis=(1, 2))
                prods[j] = P / nrm[:, None, None]
                scale[:, j] += np.log(nrm)
    out = np.zeros((trials, d + 1))
    for j, P in enumerate(prods, start=1):
        out[:, j] = scale[:, j - 1] + np.log(top_singular_values(P))
    out[:, d] = det_sum
    return out


def lyapunov_dimension(data: LyapunovData) -> float:
    """Root ``s`` of ``h + phi^s_* = 0`` (piecewise linear in ``s``).

    Returns ``d h / (-sum lambda)`` when ``h + phi^d_* > 0`` and ``0`` when ``h = 0``.
    """
    lam = np.asarray(data.lambdas, dtype=float)
    h = float(data.entropy)
    if not lam[0] < 0:
        raise ValueError("Lyapunov dimension needs lambda_1 < 0")
    if h < 0:
        raise ValueError("entropy must be non-negative")
    if h == 0.0:
        return 0.0
    d = lam.size
    phi = np.concatenate([[0.0], np.cumsum(lam)])
    if h + phi[d] >= 0:
        return float(d * h / -phi[d])
    for k in range(d):
        if h + phi[k] >= 0 > h + phi[k + 1]:
            return float(k + (h + phi[k]) / -lam[k])
    raise AssertionError("unreachable: phi_* is decreasing from 0")
