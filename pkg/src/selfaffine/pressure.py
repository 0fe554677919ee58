"""Pressure of the moment series and the roots that define D(q), tau(q) and u(q).

Two evaluation paths:

* exact: when the system is multiplicative (diagonal maps with a common
  coordinate order, similitudes, or d = 1) the level-n sums factor as
  ``S_n = S_1^n`` and the pressure is ``log S_1``;
* finite-n: otherwise the pressure is approximated by ``(1/n) log S_n`` at the
  largest level fitting the table budget, and the root is re-solved two levels
  lower to report a drift estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from .affine import log_phi_from_integer_levels, log_phi_s
from .words import DEFAULT_WORD_BUDGET, IFSSpec, WordTable, log_word_weights, moment_sum

__all__ = [
    "Q_GUARD",
    "TABLE_BUDGET",
    "ConvergenceError",
    "PressureProbe",
    "RootResult",
    "SpectrumTable",
    "pressure",
    "solve_root",
    "solve_D",
    "solve_tau",
    "solve_u",
    "equilibrium_weights",
    "spectrum_table",
    "entropy",
]

Q_GUARD = 1e-3
TABLE_BUDGET = 1 << 21
KNOT_TOL = 1e-7
FINITE_TOL = 1e-4
_MAX_EXPANSIONS = 40


class ConvergenceError(RuntimeError):
    """Root bracketing or iteration failed."""


def entropy(eta) -> float:
    eta = np.asarray(eta, dtype=float)
    return float(-np.sum(eta * np.log(eta)))


@dataclass
class PressureProbe:
    """Finite-n pressure estimates ``P_n = (1/n) log S_n`` at fixed ``(sigma, q)``."""

    sigma: float
    q: float
    estimates: list
    bracket: tuple
    method: str
    variational_lower: float | None = None

    @property
    def value(self) -> float:
        """Working estimate: the exact value, or ``P_n`` at the deepest level."""
        return self.estimates[-1][1]


@dataclass
class RootResult:
    """Outcome of one pressure-root solve with its provenance."""

    q: float
    sigma: float
    D: float
    tau: float
    method: str
    residual: float = 0.0
    iterations: int = 0
    n: int | None = None
    drift: float | None = None
    knot: int | None = None
    heuristic: bool = False
    bracket: tuple = (math.nan, math.nan)

    def flags(self) -> dict:
        return {
            "method": self.method,
            "n": self.n,
            "drift": self.drift,
            "knot": self.knot,
            "heuristic": self.heuristic,
            "residual": self.residual,
        }


@dataclass
class SpectrumTable:
    """``q -> D(q), tau(q)`` on a sorted grid, with per-point method flags."""

    q_grid: np.ndarray
    D: np.ndarray
    tau: np.ndarray
    sigma: np.ndarray
    derivative: np.ndarray
    d: int
    meta: list = field(default_factory=list)

    def __post_init__(self):
        self.q_grid = np.asarray(self.q_grid, dtype=float)
        if self.q_grid.size == 0:
            raise ValueError("empty q grid")
        if np.any(np.diff(self.q_grid) <= 0):
            raise ValueError("q grid must be strictly increasing")


# ---------------------------------------------------------------------------
# pressure evaluation
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _table(spec: IFSSpec, n: int) -> WordTable:
    return WordTable.build(spec, n, budget=max(TABLE_BUDGET, spec.m ** n))


def _max_level(spec: IFSSpec, budget: int) -> int:
    if spec.m == 1:
        return 1
    return max(1, int(math.floor(math.log(budget) / math.log(spec.m) + 1e-12)))


def _super_additive(q: float, kind: str) -> bool:
    return kind == "u" or q > 1.0


def _variational_bound(spec: IFSSpec, sigma: float, q: float, eta, kind: str) -> float:
    """``h_eta + Psi_*(eta)`` for a Bernoulli measure ``eta``.

    Exact when the system is multiplicative; otherwise the Lyapunov part uses the
    level-n expectation over the word table. That expectation decreases to its
    limit, so the finite-n value is still a valid lower bound only when the
    coefficient of the Lyapunov term is negative (``q > 1`` or ``kind="u"``).
    """
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (spec.m,) or np.any(eta <= 0) or abs(eta.sum() - 1.0) > 1e-12:
        raise ValueError("eta must be a positive probability vector over the maps")
    s = sigma if kind == "D" else sigma * (q - 1.0)
    if spec.multiplicative:
        lam = np.sort(eta @ spec.log_sv)[::-1]
        phi_star = log_phi_s(lam, s)
    else:
        n = _max_level(spec, TABLE_BUDGET)
        tab = _table(spec, n)
        log_eta_I = _word_log_eta(spec, n, np.log(eta))
        phi_star = float(np.exp(log_eta_I) @ log_phi_from_integer_levels(tab.levels, s)) / n
    lin = q * float(eta @ spec.log_p)
    coef = (1.0 - q) if kind == "D" else -1.0
    return entropy(eta) + coef * phi_star + lin


def _word_log_eta(spec: IFSSpec, n: int, log_eta: np.ndarray) -> np.ndarray:
    out = log_eta.copy()
    for _ in range(n - 1):
        out = (out[:, None] + log_eta[None, :]).reshape(-1)
    return out


def pressure(spec: IFSSpec, sigma: float, q: float, schedule: Sequence[int] | None = None, *,
             eta=None, kind: str = "D", budget: int = DEFAULT_WORD_BUDGET) -> PressureProbe:
    """Pressure estimates for the ``(sigma, q)`` moment series.

    For multiplicative specs the pressure is exact (``log S_1``) and the
    bracket has width zero. Otherwise ``P_n`` is computed at every level in
    ``schedule`` (default ``1..n_max``); for ``q < 1`` the sequence is
    sub-additive so ``min P_n`` is a certified upper bracket, for ``q > 1`` it is
    super-additive so ``max P_n`` is a certified lower bracket.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if schedule is None:
        schedule = [1] if spec.multiplicative else list(range(1, _max_level(spec, TABLE_BUDGET) + 1))
    schedule = [int(n) for n in schedule]
    if not schedule:
        raise ValueError("empty level schedule")
    for n in schedule:
        if n < 1 or spec.m ** n > budget:
            raise ValueError(f"level {n} outside 1..budget ({budget} words)")
    var = None if eta is None else _variational_bound(spec, sigma, q, eta, kind)
    if spec.multiplicative:
        P = WordTable.single_letters(spec).log_moment(sigma, q, kind)
        return PressureProbe(sigma, q, [(n, P) for n in schedule], (P, P), "exact", var)
    est = []
    for n in schedule:
        if spec.m ** n <= TABLE_BUDGET:
            log_S = _table(spec, n).log_moment(sigma, q, kind)
        else:
            log_S = moment_sum(spec, n, sigma, q, budget=budget, method="words", kind=kind)
        est.append((n, log_S / n))
    vals = [P for _, P in est]
    if q == 1.0 and kind == "D":
        bracket = (0.0, 0.0)
    elif _super_additive(q, kind):
        bracket = (max(vals), math.inf)
    else:
        bracket = (-math.inf, min(vals))
    if var is not None and _super_additive(q, kind):
        bracket = (max(bracket[0], var), bracket[1])
    return PressureProbe(sigma, q, est, bracket, "finite-n", var)


# ---------------------------------------------------------------------------
# root finding
# ---------------------------------------------------------------------------

def _bisect(f, increasing: bool, cap: float, tol: float, exact: bool, hard: bool = False):
    """Bisection for the sign change of a monotone ``f`` on ``[0, inf)``.

    ``cap`` is the first upper bracket; it is doubled until the sign changes
    unless ``hard`` is set, in which case no root below ``cap`` is an error.
    """
    f0 = f(0.0)
    if f0 == 0.0:
        return 0.0, 0, (0.0, 0.0)
    if (f0 > 0) == increasing:
        raise ConvergenceError("pressure at sigma = 0 has the wrong sign for a root")
    lo, hi = 0.0, cap
    for _ in range(_MAX_EXPANSIONS):
        fh = f(hi)
        if (fh > 0) == increasing or fh == 0.0:
            break
        if hard:
            raise ConvergenceError(f"no sign change of the pressure for sigma <= sigma_cap = {cap:g}")
        lo, hi = hi, 2.0 * hi
    else:
        raise ConvergenceError(f"no sign change of the pressure for sigma <= {hi:g}")
    it = 0
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if not exact and hi - lo <= tol:
            break
        it += 1
        fm = f(mid)
        if fm == 0.0:
            return mid, it, (mid, mid)
        if (fm > 0) == increasing:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi), it, (lo, hi)


def _knot(spec: IFSSpec, sigma: float, tol: float) -> int | None:
    k = round(sigma)
    if 1 <= k <= spec.d and abs(sigma - k) <= tol:
        return int(k)
    return None


def _heuristic(spec: IFSSpec, q: float, kind: str) -> bool:
    """q > 1 results on specs where sub-additivity of the potential is not known."""
    if not (q > 1.0):
        return False
    return not (spec.multiplicative or spec.equal_linear_parts)


def _sigma_cap(spec: IFSSpec, sigma_cap: float | None) -> float:
    return float(sigma_cap) if sigma_cap is not None else 4.0 * spec.d


def solve_root(spec: IFSSpec, q: float, *, kind: str = "D", tol: float | None = None,
               sigma_cap: float | None = None, budget: int = TABLE_BUDGET,
               q_guard: float = Q_GUARD, drift: bool = True) -> RootResult:
    """Root ``sigma*`` of the pressure and the derived ``D``/``tau``.

    ``kind="D"``: ``D(q) = (q - 1) sigma*`` for the series
    ``sum phi^sigma(T_I)^(1-q) p_I^q``. ``kind="u"``: ``u(q) = sigma*`` for
    ``sum phi^{sigma (q-1)}(T_I)^(-1) p_I^q``, returned in the ``sigma`` field.
    """
    q = float(q)
    if not (q >= 0.0) or not math.isfinite(q):
        raise ValueError(f"q must be a finite number >= 0, got {q}")
    if kind == "u" and not q > 2.0:
        raise ValueError(f"u(q) is defined for q > 2, got {q}")
    if kind == "D" and q == 1.0:
        return RootResult(q, math.nan, 0.0, 0.0, "definition")
    if kind == "D" and abs(q - 1.0) < q_guard * (1.0 - 1e-9):
        side = 1.0 + math.copysign(q_guard, q - 1.0)
        edge = solve_root(spec, side, kind=kind, tol=tol, sigma_cap=sigma_cap, budget=budget,
                          q_guard=q_guard, drift=drift)
        frac = (q - 1.0) / (side - 1.0)
        D = edge.D * frac
        return RootResult(q, edge.sigma, D, (q - 1.0) * min(edge.sigma, spec.d), "guard-interpolated",
                          edge.residual, edge.iterations, edge.n, edge.drift, None, edge.heuristic)
    increasing = kind == "u" or q > 1.0
    cap = _sigma_cap(spec, sigma_cap)
    hard = sigma_cap is not None
    heur = _heuristic(spec, q, kind)

    if spec.multiplicative:
        tab = WordTable.single_letters(spec)
        f = lambda s: tab.log_moment(s, q, kind)  # noqa: E731
        sigma, it, br = _bisect(f, increasing, cap, 0.0, exact=True, hard=hard)
        res = f(sigma)
        method, n, dr = "exact", 1, None
        ktol = KNOT_TOL
    else:
        tol = FINITE_TOL if tol is None else tol
        n = _max_level(spec, budget)

        def at_level(level):
            tab = _table(spec, level)
            g = lambda s: tab.log_moment(s, q, kind) / level  # noqa: E731
            root, iters, brk = _bisect(g, increasing, cap, tol * 1e-2, exact=False, hard=hard)
            return root, iters, brk, g(root)

        sigma, it, br, res = at_level(n)
        dr = None
        if drift and n > 2:
            dr = abs(at_level(n - 2)[0] - sigma)
        method = "finite-n"
        ktol = tol
    knot = _knot(spec, sigma, ktol)
    if kind == "u":
        return RootResult(q, sigma, math.nan, math.nan, method, abs(res), it, n, dr, None, heur, br)
    D = (q - 1.0) * sigma
    tau = (q - 1.0) * min(sigma, spec.d)
    if dr is not None:
        dr = abs(q - 1.0) * dr
    return RootResult(q, sigma, D, tau, method, abs(res), it, n, dr, knot, heur, br)


def solve_D(spec: IFSSpec, q: float, tol: float | None = None, **kw) -> float:
    """``D(q)``; ``D(1) = 0`` by definition."""
    return solve_root(spec, q, tol=tol, **kw).D


def solve_tau(spec: IFSSpec, q: float, tol: float | None = None, **kw) -> float:
    """``tau(q) = (q - 1) min(D(q)/(q - 1), d)``."""
    return solve_root(spec, q, tol=tol, **kw).tau


def solve_u(spec: IFSSpec, q: float, tol: float | None = None, **kw) -> float:
    """Root ``s`` of the pressure of ``phi^{s(q-1)}(T_I)^(-1) p_I^q`` for ``q > 2``."""
    return solve_root(spec, q, kind="u", tol=tol, **kw).sigma


def equilibrium_weights(spec: IFSSpec, q: float, *, normalize: bool = True) -> np.ndarray:
    """Bernoulli equilibrium weights ``w_i = phi^sigma(T_i)^(1-q) p_i^q`` at the root.

    Only defined for diagonal specs with a common coordinate order, where the
    potential is additive in the first symbol.
    """
    if not (spec.diagonal and spec.multiplicative):
        raise ValueError("equilibrium weights are only available for diagonal specs "
                         "with a common coordinate order")
    if abs(q - 1.0) < Q_GUARD * (1.0 - 1e-9):
        raise ValueError(f"q = {q} lies inside the guard band around 1")
    r = solve_root(spec, q)
    logw = log_word_weights(WordTable.single_letters(spec).levels, spec.log_p, r.sigma, q, "D")
    w = np.exp(logw)
    return w / w.sum() if normalize else w


def spectrum_table(spec: IFSSpec, q_grid, *, tol: float | None = None,
                   with_derivative: bool = False, **kw) -> SpectrumTable:
    """Solve ``D`` and ``tau`` on a grid; ``derivative`` holds grid differences when asked."""
    q_grid = np.asarray(q_grid, dtype=float)
    results = [solve_root(spec, q, tol=tol, **kw) for q in q_grid]
    D = np.array([r.D for r in results])
    tau = np.array([r.tau for r in results])
    sigma = np.array([r.sigma for r in results])
    if with_derivative and q_grid.size >= 3:
        deriv = np.gradient(D, q_grid)
    else:
        deriv = np.full(q_grid.size, np.nan)
    return SpectrumTable(q_grid, D, tau, sigma, deriv, spec.d, [r.flags() for r in results])
