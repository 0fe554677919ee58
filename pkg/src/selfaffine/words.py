"""Affine IFS model, symbolic words and the moment sums built from them."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from .affine import (
    as_matrix,
    compound_matrix,
    log_phi_from_integer_levels,
    singular_values,
    top_singular_values,
)

__all__ = [
    "SpecError",
    "BudgetError",
    "IFSSpec",
    "WordWeight",
    "WordTable",
    "DEFAULT_WORD_BUDGET",
    "enumerate_words",
    "iter_word_chunks",
    "moment_sum",
    "log_word_weights",
    "logsumexp",
]

DEFAULT_WORD_BUDGET = 20_000_000
PROB_SUM_TOL = 1e-12
_CHUNK = 1 << 16


def logsumexp(x) -> float:
    """Stable ``log sum exp(x)`` for a 1-d array (lean enough for inner loops)."""
    x = np.asarray(x, dtype=float)
    mx = x.max()
    if not np.isfinite(mx):
        return float(mx)
    return float(mx + np.log(np.sum(np.exp(x - mx))))


class SpecError(ValueError):
    """Invalid IFS description. ``field`` names the offending entry."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field


class BudgetError(RuntimeError):
    """A requested enumeration or simulation exceeds its configured budget."""


def _is_diagonal(A: np.ndarray) -> bool:
    return bool(np.all(A == np.diag(np.diag(A))))


@dataclass(frozen=True, eq=False)
class IFSSpec:
    """Linear parts ``T_i``, optional translations ``a_i`` and weights ``p_i``.

    Maps are stored 0-based. Validation happens at construction: the
    probability vector must be positive and sum to one within ``1e-12``,
    every linear part must be non-singular with operator norm below one.
    """

    linear_parts: tuple
    probabilities: np.ndarray
    translations: np.ndarray | None = None
    log_sv: np.ndarray = field(init=False, repr=False)

    def __init__(self, linear_parts, probabilities, translations=None):
        mats = []
        for i, T in enumerate(linear_parts):
            try:
                A = as_matrix(T)
            except ValueError as exc:
                raise SpecError(str(exc), f"maps[{i}].matrix") from None
            mats.append(A)
        if not mats:
            raise SpecError("at least one map is required", "maps")
        d = mats[0].shape[0]
        for i, A in enumerate(mats):
            if A.shape != (d, d):
                raise SpecError(f"expected {d}x{d} matrix, got {A.shape}", f"maps[{i}].matrix")
        p = np.asarray(probabilities, dtype=float).reshape(-1)
        if p.size != len(mats):
            raise SpecError(f"{p.size} probabilities for {len(mats)} maps", "probabilities")
        for i, pi in enumerate(p):
            if not (np.isfinite(pi) and pi > 0.0):
                raise SpecError(f"probability must be positive, got {pi}", f"maps[{i}].probability")
        total = math.fsum(p)
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise SpecError(f"probabilities must sum to 1, got sum {total:.15g}", "probabilities")
        log_sv = np.empty((len(mats), d))
        for i, A in enumerate(mats):
            try:
                sv = singular_values(A)
            except ValueError as exc:
                raise SpecError(str(exc), f"maps[{i}].matrix") from None
            if sv[0] >= 1.0:
                raise SpecError(
                    f"map {i} is not contractive: top singular value {sv[0]:.6g} >= 1",
                    f"maps[{i}].matrix",
                )
            log_sv[i] = np.log(sv)
        if translations is not None:
            a = np.asarray(translations, dtype=float)
            if a.shape != (len(mats), d):
                raise SpecError(f"expected translations of shape {(len(mats), d)}, got {a.shape}",
                                "translations")
            if not np.all(np.isfinite(a)):
                raise SpecError("non-finite translation", "translations")
            a = a.copy()
            a.setflags(write=False)
        else:
            a = None
        for A in mats:
            A.setflags(write=False)
        p = p.copy()
        p.setflags(write=False)
        log_sv.setflags(write=False)
        object.__setattr__(self, "linear_parts", tuple(mats))
        object.__setattr__(self, "probabilities", p)
        object.__setattr__(self, "translations", a)
        object.__setattr__(self, "log_sv", log_sv)

    # -- shape --------------------------------------------------------------
    @property
    def d(self) -> int:
        return self.linear_parts[0].shape[0]

    @property
    def m(self) -> int:
        return len(self.linear_parts)

    @cached_property
    def log_p(self) -> np.ndarray:
        out = np.log(self.probabilities)
        out.setflags(write=False)
        return out

    @cached_property
    def norms(self) -> np.ndarray:
        out = np.exp(self.log_sv[:, 0])
        out.setflags(write=False)
        return out

    # -- structural flags ---------------------------------------------------
    @cached_property
    def strict_half(self) -> bool:
        """All operator norms below 1/2."""
        return bool(np.all(self.norms < 0.5))

    @cached_property
    def diagonal(self) -> bool:
        return all(_is_diagonal(A) for A in self.linear_parts)

    @cached_property
    def diagonal_ordered(self) -> bool:
        """Every map is ``diag(t_1 > t_2 > ... > t_d > 0)``."""
        for A in self.linear_parts:
            if not _is_diagonal(A):
                return False
            t = np.diag(A)
            if np.any(t <= 0) or np.any(np.diff(t) >= 0):
                return False
        return True

    @cached_property
    def similitudes(self) -> bool:
        return bool(np.all(self.log_sv[:, 0] - self.log_sv[:, -1] <= 1e-12))

    @cached_property
    def equal_linear_parts(self) -> bool:
        T0 = self.linear_parts[0]
        return all(np.array_equal(T0, A) for A in self.linear_parts[1:])

    @cached_property
    def multiplicative(self) -> bool:
        """True when ``phi^s(T_I) = prod_j phi^s(T_{i_j})`` for every word.

        Holds for similitudes, for ``d = 1``, and for diagonal maps whose
        absolute entries are ordered the same way in every map.
        """
        if self.d == 1 or self.similitudes:
            return True
        if not self.diagonal:
            return False
        t = np.abs(np.array([np.diag(A) for A in self.linear_parts]))
        for l in range(self.d):
            for l2 in range(l + 1, self.d):
                diff = t[:, l] - t[:, l2]
                if np.any(diff > 0) and np.any(diff < 0):
                    return False
        return True

    # -- geometry -----------------------------------------------------------
    @property
    def bounding_radius(self) -> float:
        """``R = max|a_i| / (1 - max||T_i||)``; the attractor lies in ``B(0, R)``."""
        if self.translations is None:
            raise ValueError("spec has no translations")
        amax = float(np.max(np.linalg.norm(self.translations, axis=1)))
        return amax / (1.0 - float(np.max(self.norms)))

    def with_translations(self, translations) -> "IFSSpec":
        return IFSSpec(self.linear_parts, self.probabilities, translations)

    def permuted(self, order: Sequence[int]) -> "IFSSpec":
        order = list(order)
        a = None if self.translations is None else self.translations[order]
        return IFSSpec([self.linear_parts[i] for i in order], self.probabilities[order], a)

    # -- serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        maps = []
        for i, A in enumerate(self.linear_parts):
            entry = {"matrix": A.tolist(), "probability": float(self.probabilities[i])}
            if self.translations is not None:
                entry["translation"] = self.translations[i].tolist()
            maps.append(entry)
        return {"dimension": self.d, "maps": maps}

    @classmethod
    def from_dict(cls, data: dict) -> "IFSSpec":
        maps = data.get("maps")
        if not isinstance(maps, list) or not maps:
            raise SpecError("expected a non-empty list", "maps")
        mats, probs, trans = [], [], []
        for i, entry in enumerate(maps):
            if not isinstance(entry, dict):
                raise SpecError("expected an object", f"maps[{i}]")
            if "matrix" not in entry:
                raise SpecError("missing", f"maps[{i}].matrix")
            if "probability" not in entry:
                raise SpecError("missing", f"maps[{i}].probability")
            try:
                mats.append(np.asarray(entry["matrix"], dtype=float))
                probs.append(float(entry["probability"]))
            except (TypeError, ValueError) as exc:
                raise SpecError(str(exc), f"maps[{i}]") from None
            trans.append(entry.get("translation"))
        has_t = [t is not None for t in trans]
        if any(has_t) and not all(has_t):
            missing = has_t.index(False)
            raise SpecError("translation given for some maps only", f"maps[{missing}].translation")
        spec = cls(mats, probs, trans if all(has_t) else None)
        dim = data.get("dimension")
        if dim is not None and int(dim) != spec.d:
            raise SpecError(f"dimension {dim} does not match {spec.d}x{spec.d} matrices", "dimension")
        return spec

    def spec_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def __eq__(self, other) -> bool:
        if not isinstance(other, IFSSpec):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self) -> int:
        return hash(self.spec_hash())


@dataclass(frozen=True)
class WordWeight:
    """A word with its log cylinder probability and log singular profile."""

    word: tuple
    log_p: float
    log_sv: np.ndarray

    @property
    def profile(self) -> np.ndarray:
        return np.exp(self.log_sv)


# ---------------------------------------------------------------------------
# word tables
# ---------------------------------------------------------------------------

def _letter_levels(spec: IFSSpec) -> np.ndarray:
    """Per-letter ``log phi^j`` for ``j = 0..d``."""
    out = np.zeros((spec.m, spec.d + 1))
    out[:, 1:] = np.cumsum(spec.log_sv, axis=1)
    return out


def _bfs_products(C: np.ndarray, n: int, letters=None) -> np.ndarray:
    """All products ``C_{i_1} ... C_{i_n}`` in lexicographic word order."""
    D = C.shape[-1]
    first = C if letters is None else C[list(letters)]
    P = first.copy()
    for _ in range(n - 1):
        P = np.einsum("aij,bjk->abik", P, C).reshape(-1, D, D)
    return P if n > 0 else np.eye(D)[None]


def _bfs_sums(x: np.ndarray, n: int, letters=None) -> np.ndarray:
    """All letter sums ``x_{i_1} + ... + x_{i_n}`` (x has shape (m, k))."""
    first = x if letters is None else x[list(letters)]
    S = first.copy()
    for _ in range(n - 1):
        S = (S[:, None, :] + x[None, :, :]).reshape(-1, x.shape[1])
    return S if n > 0 else np.zeros((1, x.shape[1]))


def _check_budget(spec: IFSSpec, n: int, budget: int, n_letters: int | None = None) -> int:
    if n < 1:
        raise ValueError(f"word length must be >= 1, got {n}")
    count = (n_letters or spec.m) * spec.m ** (n - 1)
    if count > budget:
        raise BudgetError(f"{count} words at level {n} exceed the word budget {budget}")
    return count


def iter_word_chunks(spec: IFSSpec, n: int, budget: int = DEFAULT_WORD_BUDGET,
                     first_letters: Sequence[int] | None = None,
                     chunk: int = _CHUNK) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Stream ``(codes, log_p, levels)`` over all words of length ``n``.

    ``codes`` are lexicographic word indices, ``levels[:, j] = log phi^j(T_I)``.
    Integer levels come from the top singular value of exterior-power products,
    so they keep full relative accuracy even for very anisotropic products.
    Memory is bounded by the chunk size, not by ``m**n``.
    """
    m, d = spec.m, spec.d
    letters = None if first_letters is None else sorted(set(int(i) for i in first_letters))
    _check_budget(spec, n, budget, None if letters is None else len(letters))
    n2 = max(0, min(n - 1, int(math.log(chunk) / math.log(m)) if m > 1 else n - 1))
    n1 = n - n2
    compounds = [compound_matrix(np.stack(spec.linear_parts), j) for j in range(1, d)]
    log_det = np.sum(spec.log_sv, axis=1)[:, None]
    base = np.concatenate([spec.log_p[:, None], log_det], axis=1)

    pre_sums = _bfs_sums(base, n1, letters)
    suf_sums = _bfs_sums(base, n2)
    pre_prod = [_bfs_products(C, n1, letters) for C in compounds]
    suf_prod = [_bfs_products(C, n2) for C in compounds]
    n_suf = m ** n2
    first_codes = np.arange(m) if letters is None else np.asarray(letters)
    pre_codes = first_codes
    for _ in range(n1 - 1):
        pre_codes = (pre_codes[:, None] * m + np.arange(m)[None, :]).reshape(-1)

    for a in range(pre_sums.shape[0]):
        sums = pre_sums[a] + suf_sums
        levels = np.zeros((n_suf, d + 1))
        levels[:, d] = sums[:, 1]
        for j, (P, S) in enumerate(zip(pre_prod, suf_prod), start=1):
            prod = P[a] @ S
            levels[:, j] = np.log(top_singular_values(prod))
        codes = pre_codes[a] * n_suf + np.arange(n_suf)
        yield codes, sums[:, 0], levels


def decode_word(code: int, n: int, m: int) -> tuple:
    out = []
    for _ in range(n):
        code, r = divmod(int(code), m)
        out.append(r)
    return tuple(reversed(out))


def enumerate_words(spec: IFSSpec, n: int, budget: int = DEFAULT_WORD_BUDGET) -> Iterator[WordWeight]:
    """Yield every word of length ``n`` once, in lexicographic order."""
    for codes, log_p, levels in iter_word_chunks(spec, n, budget):
        log_sv = np.diff(levels, axis=1)
        for c, lp, sv in zip(codes, log_p, log_sv):
            yield WordWeight(decode_word(c, n, spec.m), float(lp), sv)


@dataclass
class WordTable:
    """Materialized level-``n`` word data for repeated moment evaluations."""

    n: int
    log_p: np.ndarray
    levels: np.ndarray

    @classmethod
    def build(cls, spec: IFSSpec, n: int, budget: int = DEFAULT_WORD_BUDGET) -> "WordTable":
        _check_budget(spec, n, budget)
        lp, lv = [], []
        for _, log_p, levels in iter_word_chunks(spec, n, budget):
            lp.append(log_p)
            lv.append(levels)
        return cls(n, np.concatenate(lp), np.concatenate(lv))

    @classmethod
    def single_letters(cls, spec: IFSSpec) -> "WordTable":
        return cls(1, spec.log_p.copy(), _letter_levels(spec))

    def log_moment(self, sigma: float, q: float, kind: str = "D") -> float:
        return float(logsumexp(log_word_weights(self.levels, self.log_p, sigma, q, kind)))


def log_word_weights(levels, log_p, sigma: float, q: float, kind: str = "D"):
    """Per-word log weights of the two moment series.

    ``kind="D"``: ``(1 - q) log phi^sigma(T_I) + q log p_I``.
    ``kind="u"``: ``-log phi^{sigma (q - 1)}(T_I) + q log p_I``.
    """
    if kind == "D":
        return (1.0 - q) * log_phi_from_integer_levels(levels, sigma) + q * log_p
    if kind == "u":
        return -log_phi_from_integer_levels(levels, sigma * (q - 1.0)) + q * log_p
    raise ValueError(f"unknown weight kind {kind!r}")


def moment_sum(spec: IFSSpec, n: int, sigma: float, q: float, *,
               budget: int = DEFAULT_WORD_BUDGET, method: str = "auto", kind: str = "D",
               first_letters: Sequence[int] | None = None) -> float:
    """``log S_n(sigma, q)`` with ``S_n = sum_I phi^sigma(T_I)^(1-q) p_I^q``.

    ``method="auto"`` uses ``log S_n = n log S_1`` when the system is
    multiplicative (exact for every ``n``); ``method="words"`` always streams
    the full enumeration.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if method not in ("auto", "words"):
        raise ValueError(f"unknown method {method!r}")
    if method == "auto" and spec.multiplicative and first_letters is None:
        if n < 1:
            raise ValueError(f"word length must be >= 1, got {n}")
        return n * WordTable.single_letters(spec).log_moment(sigma, q, kind)
    total = -np.inf
    for _, log_p, levels in iter_word_chunks(spec, n, budget, first_letters):
        total = np.logaddexp(total, logsumexp(log_word_weights(levels, log_p, sigma, q, kind)))
    return float(total)
