"""Derivatives of D, Legendre spectra, concavity audits and formalism clause checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lyapunov import lyapunov_exponents
from .pressure import Q_GUARD, SpectrumTable, equilibrium_weights, solve_root
from .words import IFSSpec

__all__ = [
    "DerivativeResult",
    "d_prime",
    "LegendrePoint",
    "legendre_spectrum",
    "AuditReport",
    "concavity_audit",
    "ClauseReport",
    "formalism_clauses",
]

FD_STEP = 1e-4


@dataclass
class DerivativeResult:
    """``D'(q)`` with diagnostics.

    ``left``/``right`` are one-sided estimates, filled when the root sits on an
    integer knot. ``residual`` is the linear-identity residual
    ``-D lambda_{k+1} + qA + B`` (formula mode only).
    """

    q: float
    value: float
    mode: str
    D: float
    sigma: float
    k: int | None
    alpha_q_minus_D: float
    residual: float | None = None
    left: float | None = None
    right: float | None = None
    knot: int | None = None
    weights: np.ndarray | None = None


def _fd(spec: IFSSpec, q: float, h: float, **kw):
    Dq = lambda x: solve_root(spec, x, **kw).D  # noqa: E731
    D0 = Dq(q)
    Dm, Dp = Dq(q - h), Dq(q + h)
    central = (Dp - Dm) / (2 * h)
    right = (-3 * D0 + 4 * Dp - Dq(q + 2 * h)) / (2 * h)
    left = (3 * D0 - 4 * Dm + Dq(q - 2 * h)) / (2 * h)
    return central, left, right


def d_prime(spec: IFSSpec, q: float, mode: str = "formula", h: float = FD_STEP,
            **kw) -> DerivativeResult:
    """Derivative of ``D`` at ``q``.

    ``formula``: for diagonal specs with a common coordinate order and
    ``sigma* = D/(q-1)`` strictly inside ``(k, k+1)``,
    ``D' = (sum w_i log p_i - phi^k_*(w)) / lambda_{k+1}(w) + k`` where ``w`` are
    the equilibrium weights. Above ``d`` the same envelope argument gives
    ``D' = d sum w_i log p_i / sum lambda(w)``.

    ``finite-difference``: central difference of the solver with step ``h``;
    at a knot the second-order one-sided pair is reported as well.
    """
    q = float(q)
    if not q > 0 or abs(q - 1.0) < Q_GUARD:
        raise ValueError(f"derivative needs q > 0 away from 1, got {q}")
    root = solve_root(spec, q, **kw)
    sigma, D = root.sigma, root.D
    if mode == "finite-difference":
        if q - 2 * h <= 0:
            raise ValueError("step too large for q")
        central, left, right = _fd(spec, q, h, **kw)
        k = None if root.knot else int(min(math.floor(sigma), spec.d))
        res = DerivativeResult(q, central, mode, D, sigma, k, central * q - D, knot=root.knot)
        if root.knot:
            res.left, res.right = left, right
        return res
    if mode != "formula":
        raise ValueError(f"unknown mode {mode!r}")
    if not (spec.diagonal and spec.multiplicative):
        raise ValueError("formula mode needs diagonal maps with a common coordinate order")
    if root.knot is not None:
        raise ValueError(f"D(q)/(q-1) = {sigma:.12g} sits on the knot {root.knot}; "
                         "use finite-difference mode for one-sided values")
    w = equilibrium_weights(spec, q)
    lam = lyapunov_exponents(spec, w, "exact-diagonal").lambdas
    h_w = float(-np.sum(w * np.log(w)))
    int_f = float(w @ spec.log_p)
    d = spec.d
    if sigma > d:
        value = d * int_f / lam.sum()
        resid = -D * lam.sum() / d + q * int_f + h_w
        return DerivativeResult(q, value, mode, D, sigma, d, value * q - D, resid, weights=w)
    k = int(math.floor(sigma))
    phi_k = float(lam[:k].sum())
    lk = float(lam[k])
    value = (int_f - phi_k) / lk + k
    A = int_f - phi_k + k * lk
    B = h_w + phi_k - k * lk
    resid = -D * lk + q * A + B
    return DerivativeResult(q, value, mode, D, sigma, k, value * q - D, resid, weights=w)


# ---------------------------------------------------------------------------
# Legendre transform
# ---------------------------------------------------------------------------

@dataclass
class LegendrePoint:
    alpha: float
    f: float
    q_star: float
    boundary: bool
    empty: bool


def legendre_spectrum(table: SpectrumTable, alpha_grid, tol: float = 1e-12) -> list:
    """Discrete transform ``f(alpha) = min_q (alpha q - tau(q))`` over the solved grid.

    A point is flagged ``boundary`` when no interior grid index attains the
    minimum (the true infimum may lie outside the grid). Negative ``f``
    is flagged ``empty``: the level set is predicted to be empty.
    """
    q = np.asarray(table.q_grid, dtype=float)
    tau = np.asarray(table.tau, dtype=float)
    if q.size < 2:
        raise ValueError("need at least two q values")
    alpha = np.asarray(alpha_grid, dtype=float).reshape(-1)
    if alpha.size == 0:
        raise ValueError("empty alpha grid")
    out = []
    for a in alpha:
        vals = a * q - tau
        j = int(np.argmin(vals))
        fmin = float(vals[j])
        hit = np.flatnonzero(vals <= fmin + tol * max(1.0, abs(fmin)))
        interior = hit[(hit > 0) & (hit < q.size - 1)]
        boundary = interior.size == 0
        qs = float(q[interior[0]]) if not boundary else float(q[j])
        out.append(LegendrePoint(float(a), fmin, qs, boundary, fmin < 0))
    return out


# ---------------------------------------------------------------------------
# concavity audit
# ---------------------------------------------------------------------------

@dataclass
class AuditReport:
    passed: bool
    intervals: list = field(default_factory=list)
    violations: list = field(default_factory=list)
    jumps: list = field(default_factory=list)
    notices: list = field(default_factory=list)
    max_second_difference: float = -math.inf


def _second_diffs(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Second differences, normalized so a uniform grid gives ``y[i-1] - 2y[i] + y[i+1]``."""
    h1 = np.diff(x)[:-1]
    h2 = np.diff(x)[1:]
    return 2.0 * (h1 * y[2:] - (h1 + h2) * y[1:-1] + h2 * y[:-2]) / (h1 + h2)


def _end_slope(x, y, at_end: bool) -> float:
    """Second-order one-sided slope at the last (``at_end``) or first point of a run."""
    if x.size >= 3:
        if at_end:
            h = x[-1] - x[-2]
            return float((3 * y[-1] - 4 * y[-2] + y[-3]) / (2 * h))
        h = x[1] - x[0]
        return float((-3 * y[0] + 4 * y[1] - y[2]) / (2 * h))
    return float((y[-1] - y[-2]) / (x[-1] - x[-2])) if at_end else float((y[1] - y[0]) / (x[1] - x[0]))


def concavity_audit(table: SpectrumTable, d: int | None = None, tol: float = 1e-10) -> AuditReport:
    """Discrete concavity checks of a solved spectrum.

    * ``D`` concave on every run where ``D/(q-1)`` lies in ``(k, k+1)``,
      ``0 <= k <= d-1``, on each side of ``q = 1`` (runs in the clamped region
      ``D/(q-1) >= d`` are reported but not required);
    * ``tau`` concave on ``q > 1``;
    * ``D/(q-1)`` non-increasing on ``q > 1``.

    Slope jumps between adjacent runs are estimated with one-sided second-order
    differences and located by linear interpolation of ``D/(q-1)``.
    """
    d = table.d if d is None else d
    q = np.asarray(table.q_grid, dtype=float)
    D = np.asarray(table.D, dtype=float)
    tau = np.asarray(table.tau, dtype=float)
    sigma = np.asarray(table.sigma, dtype=float)
    methods = [m.get("method") if isinstance(m, dict) else None for m in table.meta] or [None] * q.size
    valid = np.array([abs(x - 1.0) >= Q_GUARD * (1 - 1e-9) and mth not in ("definition", "guard-interpolated")
                      for x, mth in zip(q, methods)])
    cls = np.where(valid, np.minimum(np.floor(np.where(valid, sigma, 0.0)), d), -1).astype(int)
    rep = AuditReport(True)

    runs = []
    start = None
    for i in range(q.size + 1):
        brk = i == q.size or cls[i] < 0 or (start is not None and (cls[i] != cls[start] or (q[i] > 1) != (q[start] > 1)))
        if start is not None and brk:
            runs.append((start, i))
            start = None
        if i < q.size and cls[i] >= 0 and start is None:
            start = i
    for a, b in runs:
        k = int(cls[a])
        info = {"k": k, "q_lo": float(q[a]), "q_hi": float(q[b - 1]), "points": b - a,
                "side": "q>1" if q[a] > 1 else "q<1", "required": k < d}
        rep.intervals.append(info)
        if b - a < 3:
            rep.notices.append(f"interval k={k} on [{q[a]:.6g}, {q[b - 1]:.6g}] has {b - a} points; skipped")
            continue
        sd = _second_diffs(q[a:b], D[a:b])
        info["max_second_difference"] = float(sd.max())
        if k < d:
            rep.max_second_difference = max(rep.max_second_difference, float(sd.max()))
            for j in np.flatnonzero(sd > tol):
                rep.violations.append(("D-concavity", float(q[a + 1 + j]), float(sd[j])))

    hi = np.flatnonzero(valid & (q > 1))
    if hi.size >= 3:
        segs = np.split(hi, np.flatnonzero(np.diff(hi) > 1) + 1)
        for seg in segs:
            if seg.size >= 3:
                sd = _second_diffs(q[seg], tau[seg])
                rep.max_second_difference = max(rep.max_second_difference, float(sd.max()))
                for j in np.flatnonzero(sd > tol):
                    rep.violations.append(("tau-concavity", float(q[seg[j + 1]]), float(sd[j])))
            inc = np.diff(sigma[seg])
            for j in np.flatnonzero(inc > tol):
                rep.violations.append(("ratio-monotonicity", float(q[seg[j + 1]]), float(inc[j])))

    for (a1, b1), (a2, b2) in zip(runs, runs[1:]):
        if a2 != b1 or (q[a1] > 1) != (q[a2] > 1) or b1 - a1 < 2 or b2 - a2 < 2:
            continue
        k1, k2 = int(cls[a1]), int(cls[a2])
        level = max(k1, k2)
        s0, s1 = sigma[b1 - 1], sigma[a2]
        loc = float(q[b1 - 1] + (level - s0) / (s1 - s0) * (q[a2] - q[b1 - 1])) if s1 != s0 else float(q[a2])
        left = _end_slope(q[a1:b1], D[a1:b1], True)
        right = _end_slope(q[a2:b2], D[a2:b2], False)
        rep.jumps.append({"q": loc, "from_k": k1, "to_k": k2, "jump": right - left,
                          "expected": "positive" if loc < 1 else "non-positive"})
    rep.passed = not rep.violations
    return rep


# ---------------------------------------------------------------------------
# formalism clauses
# ---------------------------------------------------------------------------

@dataclass
class ClauseReport:
    q: float
    D: float
    tau: float
    sigma: float
    alpha: float
    clause: str | None
    predicted_dimension: float | None
    checks: dict = field(default_factory=dict)
    one_sided: list = field(default_factory=list)


def _clause_for(spec: IFSSpec, q: float, D: float, tau: float, sigma: float, alpha: float):
    x = alpha * q - D
    checks = {"strict_half": spec.strict_half, "sigma": sigma, "alpha_q_minus_D": x}
    if not spec.strict_half:
        return None, checks
    if 0 < q < 1:
        checks["i"] = sigma < 1 and x <= 1
        if checks["i"]:
            return "i", checks
        return None, checks
    k = int(math.floor(sigma))
    inside = 0 <= k < spec.d and k < sigma < k + 1 and k < x < k + 1
    if 1 < q < 2:
        checks["ii"] = spec.diagonal_ordered and inside
        return ("ii" if checks["ii"] else None), checks
    checks["extended"] = spec.diagonal_ordered and inside and D < q - 1 and tau < 1
    return ("extended" if checks["extended"] else None), checks


def formalism_clauses(spec: IFSSpec, q: float, h: float = FD_STEP) -> ClauseReport:
    """Which hypotheses for ``dim E(alpha) = alpha q - tau(q)`` hold at ``q``.

    * ``"i"``: ``0 < q < 1``, ``D/(q-1) < 1`` and ``alpha q - D <= 1``;
    * ``"ii"``: ``1 < q < 2``, ordered diagonal maps, ``D/(q-1)`` and
      ``alpha q - D`` both in the same ``(k, k+1)``;
    * ``"extended"``: ``q >= 2`` with the same conditions plus ``D < q - 1``
      and ``tau < 1``.

    All clauses also need every norm below 1/2. At a knot each one-sided
    derivative is evaluated separately into ``one_sided``.
    """
    if not q > 0 or q == 1.0:
        raise ValueError(f"need q > 0 and q != 1, got {q}")
    root = solve_root(spec, q)
    use_formula = spec.diagonal and spec.multiplicative and root.knot is None
    der = d_prime(spec, q, "formula" if use_formula else "finite-difference", h=h)
    clause, checks = _clause_for(spec, q, root.D, root.tau, root.sigma, der.value)
    pred = der.value * q - root.tau if clause else None
    rep = ClauseReport(q, root.D, root.tau, root.sigma, der.value, clause, pred, checks)
    if der.left is not None:
        for a in (der.left, der.right):
            c, _ = _clause_for(spec, q, root.D, root.tau, root.sigma, a)
            rep.one_sided.append((a, c, a * q - root.tau if c else None))
    return rep
