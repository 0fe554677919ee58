"""Closed-form spectra for equal diagonal maps, similitudes and carpet-type measures."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq

from .pressure import solve_root
from .words import IFSSpec, logsumexp

__all__ = [
    "ClosedFormValue",
    "log_moment_sum",
    "equal_diagonal_spectrum",
    "locate_crossings",
    "slope_jump",
    "rosc_carpet_tau",
    "rosc_carpet_qmax",
    "similitude_D",
    "similitude_D_prime",
    "RegimeReport",
    "regime_report",
    "validity_interval",
]

Q_RES = 1e-6


class ClosedFormValue(NamedTuple):
    tau: float
    D: float
    regime: int


def _probs(p) -> np.ndarray:
    p = np.asarray(p, dtype=float).reshape(-1)
    if p.size == 0 or np.any(p <= 0) or abs(math.fsum(p) - 1.0) > 1e-12:
        raise ValueError("p must be a positive probability vector")
    return p


def log_moment_sum(p, q: float) -> float:
    """``log sum p_i^q``."""
    return float(logsumexp(q * np.log(_probs(p))))


def _log_moment_sum_prime(p, q: float) -> float:
    lp = np.log(_probs(p))
    w = np.exp(q * lp - logsumexp(q * lp))
    return float(w @ lp)


def _ratios(t) -> np.ndarray:
    t = np.asarray(t, dtype=float).reshape(-1)
    if t.size == 0 or np.any(t <= 0) or np.any(t >= 1):
        raise ValueError("ratios must lie in (0, 1)")
    if np.any(np.diff(t) >= 0):
        raise ValueError("ratios must be strictly decreasing")
    return t


# ---------------------------------------------------------------------------
# equal diagonal parts
# ---------------------------------------------------------------------------

def equal_diagonal_spectrum(t, p, q: float) -> ClosedFormValue:
    """``tau``, ``D`` and active branch when every map is ``diag(t_1 > ... > t_d)``.

    With ``L = log sum p_i^q`` and ``A(q) = exp(L/(q-1))``, branch ``k`` is
    active when ``t_1...t_{k+1} <= A(q) < t_1...t_k`` (``k = 0`` means
    ``A >= t_1``, ``k = d`` means ``A < t_1...t_d``).
    """
    t = _ratios(t)
    d = t.size
    if not q > 0 or q == 1.0:
        raise ValueError(f"need q > 0 and q != 1, got {q}")
    L = log_moment_sum(p, q)
    log_A = L / (q - 1.0)
    logt = np.log(t)
    cum = np.concatenate([[0.0], np.cumsum(logt)])
    if log_A >= cum[1]:
        D = L / logt[0]
        return ClosedFormValue(D, D, 0)
    for k in range(1, d):
        if cum[k + 1] <= log_A < cum[k]:
            D = L / logt[k] + (q - 1.0) * (k - cum[k] / logt[k])
            return ClosedFormValue(D, D, k)
    D = d * L / cum[d]
    return ClosedFormValue(d * (q - 1.0), D, d)


def locate_crossings(t, p) -> list:
    """Points ``q in (0, 1)`` where ``A(q) = t_1...t_k``, as ``(q, k)`` pairs.

    ``log A`` increases from ``-log m`` (q -> 0) to minus the entropy (q -> 1);
    each product ``t_1...t_k`` inside that range gives exactly one crossing.
    """
    t = _ratios(t)
    p = _probs(p)
    cum = np.cumsum(np.log(t))
    lo = -math.log(p.size)
    hi = float(np.sum(p * np.log(p)))
    out = []
    for k in range(1, t.size):
        target = cum[k - 1]
        if lo < target < hi:
            f = lambda q, c=target: log_moment_sum(p, q) / (q - 1.0) - c  # noqa: E731
            out.append((brentq(f, 1e-12, 1.0 - 1e-12, xtol=1e-15), k))
    return out


def slope_jump(t, p, q_cross: float | None = None, k: int | None = None) -> tuple:
    """Right minus left slope of ``tau`` at a branch crossing in ``(0, 1)``.

    Returns ``(q_cross, k, jump)`` with
    ``jump = (L/(q-1) - L') (1/log t_{k+1} - 1/log t_k)``.
    When ``q_cross`` is omitted it is located by root finding (first crossing,
    or the one for the given ``k``).
    """
    t = _ratios(t)
    p = _probs(p)
    if t.size < 2:
        raise ValueError("need d >= 2 for a branch crossing")
    if q_cross is None:
        found = locate_crossings(t, p)
        if k is not None:
            found = [c for c in found if c[1] == k]
        if not found:
            hi = math.exp(float(np.sum(p * np.log(p))))
            raise ValueError(f"no crossing in (0, 1): A ranges over ({1.0 / p.size:.6g}, {hi:.6g})")
        q_cross, k = found[0]
    else:
        if not 0 < q_cross < 1:
            raise ValueError("q_cross must lie in (0, 1)")
        if k is None:
            log_A = log_moment_sum(p, q_cross) / (q_cross - 1.0)
            cum = np.cumsum(np.log(t))
            k = int(np.argmin(np.abs(cum[:-1] - log_A))) + 1
    if not 1 <= k <= t.size - 1:
        raise ValueError(f"k must be in 1..{t.size - 1}")
    L = log_moment_sum(p, q_cross)
    Lp = _log_moment_sum_prime(p, q_cross)
    jump = (L / (q_cross - 1.0) - Lp) * (1.0 / math.log(t[k]) - 1.0 / math.log(t[k - 1]))
    return float(q_cross), int(k), float(jump)


# ---------------------------------------------------------------------------
# carpets with the rectangular open set condition
# ---------------------------------------------------------------------------

def _carpet_checks(t1: float, t2: float) -> None:
    if not 0.5 > t1 > t2 > 0:
        raise ValueError(f"need 1/2 > t1 > t2 > 0, got t1={t1}, t2={t2}")


def rosc_carpet_qmax(t1: float, p) -> float:
    """``max(2, q_1)`` with ``B(q_1) = 1`` for ``B(q) = log sum p_i^q / log t_1``."""
    lt = math.log(t1)
    B = lambda q: log_moment_sum(p, q) / lt  # noqa: E731
    if B(2.0) >= 1.0:
        return 2.0
    hi = 4.0
    while B(hi) < 1.0:
        hi *= 2.0
        if hi > 1e6:
            return math.inf
    return float(brentq(lambda q: B(q) - 1.0, 2.0, hi, xtol=1e-12))


def _tau_projection(t1: float, p, q: float) -> float:
    """Almost-sure spectrum of the self-similar projection ``{t_1 x + a_i}``."""
    lt = math.log(t1)
    B = lambda x: log_moment_sum(p, x) / lt  # noqa: E731
    Bp = lambda x: _log_moment_sum_prime(p, x) / lt  # noqa: E731
    if q > 1.0:
        return min(B(q), q - 1.0)
    if Bp(1.0) >= 1.0:
        return q - 1.0
    g = lambda x: Bp(x) * x - B(x) - 1.0  # noqa: E731
    q0 = 0.0 if g(0.0) <= 0 else _bisect_first(g, 0.0, 1.0)
    if q <= q0:
        return Bp(q0) * q - 1.0
    return B(q)


def rosc_carpet_tau(t1: float, t2: float, p, q: float,
                    tau_nu: Callable[[float], float] | None = None) -> float:
    """Spectrum of a diagonal carpet ``diag(t1, t2)`` with the rectangular open set condition.

    ``tau = tau_nu(q) (1 - log t1/log t2) + log sum p_i^q / log t2`` where
    ``tau_nu`` is the spectrum of the first-coordinate projection. If omitted,
    its almost-sure value is used (valid on ``[0, q_max]``).
    """
    _carpet_checks(t1, t2)
    p = _probs(p)
    if not q >= 0:
        raise ValueError(f"need q >= 0, got {q}")
    if q == 1.0:
        return 0.0
    if tau_nu is None:
        qmax = rosc_carpet_qmax(t1, p)
        if q > qmax + 1e-12:
            raise ValueError(f"q = {q} beyond the validity range [0, {qmax:.6g}]")
        tn = _tau_projection(t1, p, q)
    else:
        tn = float(tau_nu(q))
    return float(tn * (1.0 - math.log(t1) / math.log(t2)) + log_moment_sum(p, q) / math.log(t2))


# ---------------------------------------------------------------------------
# similitudes
# ---------------------------------------------------------------------------

def _similitude_parts(spec: IFSSpec):
    if not spec.similitudes:
        raise ValueError("spec is not made of similitudes")
    return spec.log_p, spec.log_sv[:, 0]


def similitude_D(spec: IFSSpec, q: float, tol: float = 1e-15) -> float:
    """Root ``t`` of ``sum p_i^q r_i^(-t) = 1`` by Newton's method.

    ``log sum p_i^q r_i^(-t)`` is convex and increasing in ``t``, so Newton
    from ``t = 0`` converges monotonically after at most one overshoot.
    """
    lp, lr = _similitude_parts(spec)
    t = 0.0
    for _ in range(200):
        z = q * lp - t * lr
        g = logsumexp(z)
        w = np.exp(z - g)
        step = g / float(w @ -lr)
        t -= step
        if abs(step) <= tol * max(1.0, abs(t)):
            break
    return float(t)


def similitude_D_prime(spec: IFSSpec, q: float) -> float:
    """``D'(q) = sum w log p / sum w log r`` with ``w_i = p_i^q r_i^(-D(q))``."""
    lp, lr = _similitude_parts(spec)
    D = similitude_D(spec, q)
    z = q * lp - D * lr
    w = np.exp(z - logsumexp(z))
    return float((w @ lp) / (w @ lr))


def _bisect_first(g, lo: float, hi: float, res: float = Q_RES) -> float:
    """Smallest point of ``[lo, hi]`` where a non-increasing ``g`` becomes ``<= 0``."""
    while hi - lo > res:
        mid = 0.5 * (lo + hi)
        if g(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _bisect_last(g, lo: float, hi: float, res: float = Q_RES) -> float:
    """Largest point of ``[lo, hi]`` where a non-decreasing ``g`` is ``<= 0``."""
    while hi - lo > res:
        mid = 0.5 * (lo + hi)
        if g(mid) <= 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _expand_until(g, start: float, limit: float = 1e6) -> float | None:
    hi = start
    while g(hi) <= 0:
        hi *= 2.0
        if hi > limit:
            return None
    return hi


@dataclass
class RegimeReport:
    """Classification of the almost-sure spectrum for similitude systems."""

    case: str
    d: int
    D_prime_1: float
    q_max: float
    q_min: float | None = None
    q_tilde: float | None = None
    s: float | None = None
    validity: tuple | None = None
    branches: list = field(default_factory=list)
    _spec: IFSSpec | None = field(default=None, repr=False)

    def tau(self, q: float) -> float:
        """Piecewise almost-sure spectrum on ``[0, q_max]``."""
        if not 0 <= q <= self.q_max + 1e-12:
            raise ValueError(f"q = {q} outside [0, {self.q_max:.6g}]")
        d = self.d
        if self.case == "2a":
            return d * (q - 1.0)
        if self.case == "2b":
            return d * (q - 1.0) if q < self.q_min else similitude_D(self._spec, q)
        if self.q_tilde and q < self.q_tilde:
            Dq = similitude_D(self._spec, self.q_tilde)
            return (d + Dq) / self.q_tilde * q - d
        return similitude_D(self._spec, q)


def regime_report(spec: IFSSpec, q_grid: Sequence[float] | None = None) -> RegimeReport:
    """Which almost-sure spectrum shape applies to a similitude system.

    * ``"2a"``: ``D'(1) >= d`` and ``D(2) >= d``. Then ``tau = d(q-1)`` on ``[0, 2]``.
    * ``"2b"``: ``D'(1) >= d`` and ``D(2) < d``. Then ``tau = d(q-1)`` up to ``q_min``
      and ``D`` after it.
    * ``"3"``: ``D'(1) < d``. Then a tangent line through ``(0, -d)`` is used below
      ``q_tilde`` and ``D`` from there to ``q_max``.

    Thresholds are resolved by bisection to ``1e-6`` in ``q``. ``branches``
    lists ``(q_lo, q_hi, label)``; when ``q_grid`` is given, ``branches`` gets the
    sampled ``(q, tau)`` pairs appended as a ``"samples"`` entry.
    """
    if not spec.similitudes:
        raise ValueError("regime classification needs similitudes")
    if not spec.strict_half:
        raise ValueError("regime classification needs all norms below 1/2")
    d = spec.d
    lp, lr = _similitude_parts(spec)
    p = spec.probabilities
    Dp1 = float((p @ lp) / (p @ lr))
    Dq = lambda q: similitude_D(spec, q)  # noqa: E731

    def q_at_level_d():
        hi = _expand_until(lambda q: Dq(q) - d, 2.0)
        if hi is None:
            return math.inf
        return _bisect_last(lambda q: Dq(q) - d, 2.0, hi) if Dq(2.0) <= d else 2.0

    validity = (2.0, q_at_level_d())
    if Dp1 >= d:
        s = Dq(2.0)
        if s >= d:
            rep = RegimeReport("2a", d, Dp1, 2.0, s=s, validity=validity,
                               branches=[(0.0, 2.0, "d(q-1)")])
        else:
            q_min = _bisect_first(lambda q: Dq(q) / (q - 1.0) - d, 1.0 + 1e-9, 2.0)
            q_max = max(2.0, q_at_level_d())
            rep = RegimeReport("2b", d, Dp1, q_max, q_min=q_min, s=s, validity=validity,
                               branches=[(0.0, q_min, "d(q-1)"), (q_min, q_max, "D")])
    else:
        g = lambda q: similitude_D_prime(spec, q) * q - Dq(q) - d  # noqa: E731
        q_tilde = 0.0 if g(0.0) <= 0 else _bisect_first(g, 0.0, 1.0)
        q_max = max(2.0, q_at_level_d())
        branches = [(q_tilde, q_max, "D")]
        if q_tilde > 0:
            branches.insert(0, (0.0, q_tilde, "tangent"))
        rep = RegimeReport("3", d, Dp1, q_max, q_tilde=q_tilde, validity=validity,
                           branches=branches)
    rep._spec = spec
    if q_grid is not None:
        qs = [float(q) for q in q_grid if 0 <= q <= rep.q_max]
        rep.branches.append(("samples", [(q, rep.tau(q)) for q in qs]))
    return rep


def validity_interval(spec: IFSSpec, q_hi: float = 1e3) -> tuple | None:
    """``[2, sup{t : D(t)/(t-1) <= 1, tau(t) <= 1}]`` from the pressure solver.

    ``D(t)/(t-1)`` is non-increasing and ``tau`` is non-decreasing for ``t > 1``,
    so the admissible set is an interval ``[t_a, t_b]``. Returns ``None`` when
    it does not reach ``2``.
    """
    sig = lambda t: solve_root(spec, t, drift=False).sigma  # noqa: E731
    tau = lambda t: solve_root(spec, t, drift=False).tau  # noqa: E731
    if tau(2.0) > 1.0:
        return None
    hi = _expand_until(lambda t: tau(t) - 1.0, 2.0, q_hi)
    t_b = math.inf if hi is None else _bisect_last(lambda t: tau(t) - 1.0, 2.0, hi)
    if sig(t_b if math.isfinite(t_b) else q_hi) > 1.0:
        return None
    return (2.0, t_b)
