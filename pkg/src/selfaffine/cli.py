"""Command-line dispatcher: ``selfaffine CONFIG.json [--override k=v] [--seed] [--budget] [--out-dir]``.

Every task writes ``<task>.csv`` (header row, 17 significant digits) and
``<task>.meta`` (JSON with spec hash, seed, version, tolerances and per-point
method flags). Exit status is 0 on success, 2 on a validation error and 3 on a
budget, convergence or invariant failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .closed_forms import (equal_diagonal_spectrum, regime_report, rosc_carpet_tau,
                           similitude_D)
from .config import ConfigError, RunConfig, apply_override, config_from_dict, q_grid_from
from .covering import AxisRectangle, partition_and_select, select_translates
from .empirical import (chaos_game, dyadic_radii, empirical_tau, grid_moments,
                        random_translations)
from .lyapunov import RNG_NAME, lyapunov_dimension, lyapunov_exponents, make_rng
from .pressure import FINITE_TOL, ConvergenceError, solve_root, spectrum_table
from .spectra import concavity_audit, d_prime
from .words import BudgetError, SpecError

__all__ = ["main", "run", "TaskOutput", "format_number"]

EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 2, 3


@dataclass
class TaskOutput:
    header: list
    rows: list
    meta: dict = field(default_factory=dict)
    ok: bool = True
    extra: dict = field(default_factory=dict)  # file stem -> (header, rows)


def format_number(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    if x is None:
        return ""
    return str(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_number(v) for v in row) + "\n")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# ---------------------------------------------------------------------------
# tasks
# ---------------------------------------------------------------------------

def _solver_kw(cfg: RunConfig) -> dict:
    kw = {}
    if cfg.budget is not None:
        kw["budget"] = cfg.budget
    if "tol" in cfg.params:
        kw["tol"] = float(cfg.params["tol"])
    return kw


def _task_roots(cfg: RunConfig, with_tau: bool) -> TaskOutput:
    qs = q_grid_from(cfg.params)
    kw = _solver_kw(cfg)
    rows, flags = [], []
    for q in qs:
        r = solve_root(cfg.spec, float(q), **kw)
        rows.append([r.q, r.D, r.tau, r.method] if with_tau else [r.q, r.D, r.sigma, r.method])
        flags.append(r.flags())
    header = ["q", "D", "tau", "method"] if with_tau else ["q", "D", "sigma", "method"]
    return TaskOutput(header, rows, {"points": flags})


def task_dq(cfg):
    return _task_roots(cfg, False)


def task_tau(cfg):
    return _task_roots(cfg, True)


def task_spectrum(cfg):
    qs = q_grid_from(cfg.params, default=(0.1, 3.0, 59))
    table = spectrum_table(cfg.spec, qs, with_derivative=True, **_solver_kw(cfg))
    rows = [[table.q_grid[i], table.D[i], table.tau[i], table.sigma[i], table.derivative[i],
             table.meta[i]["method"]] for i in range(table.q_grid.size)]
    return TaskOutput(["q", "D", "tau", "sigma", "dD_dq", "method"], rows, {"points": table.meta})


def task_lyapunov(cfg):
    p = cfg.params
    eta = p.get("eta", cfg.spec.probabilities.tolist())
    kw = {}
    if cfg.budget is not None:
        kw["budget"] = cfg.budget
    data = lyapunov_exponents(cfg.spec, eta, p.get("method", "auto"), n=int(p.get("n", 400)),
                              trials=int(p.get("trials", 10_000)), seed=cfg.seed, **kw)
    se = data.stderr if data.stderr is not None else [None] * data.d
    rows = [[i + 1, data.lambdas[i], se[i], data.method] for i in range(data.d)]
    meta = {"entropy": data.entropy, "lyapunov_dimension": lyapunov_dimension(data),
            "method": data.method}
    return TaskOutput(["index", "lambda", "stderr", "method"], rows, meta)


def task_closed_form(cfg):
    spec, p = cfg.spec, cfg.params
    qs = q_grid_from(p)
    form = p.get("form", "auto")
    if form == "auto":
        form = "similitude" if spec.similitudes else "equal-diagonal"
    rows = []
    if form == "similitude":
        for q in qs:
            D = similitude_D(spec, float(q))
            rows.append([q, D, min(D, (q - 1.0) * spec.d) if q > 1 else D, "closed-form", ""])
    elif form == "equal-diagonal":
        if not (spec.diagonal and spec.equal_linear_parts):
            raise ConfigError("equal-diagonal form needs identical diagonal linear parts", "params.form")
        t = np.abs(np.diag(spec.linear_parts[0]))
        for q in qs:
            v = equal_diagonal_spectrum(t, spec.probabilities, float(q))
            rows.append([q, v.D, v.tau, "closed-form", v.regime])
    elif form == "rosc-carpet":
        if not (spec.diagonal and spec.equal_linear_parts and spec.d == 2):
            raise ConfigError("rosc-carpet form needs identical planar diagonal parts", "params.form")
        t1, t2 = np.abs(np.diag(spec.linear_parts[0]))
        for q in qs:
            tau = rosc_carpet_tau(float(t1), float(t2), spec.probabilities, float(q))
            rows.append([q, None, tau, "closed-form", ""])
    else:
        raise ConfigError(f"unknown form {form!r}", "params.form")
    return TaskOutput(["q", "D", "tau", "method", "regime"], rows, {"form": form})


def task_regimes(cfg):
    qs = q_grid_from(cfg.params, default=(0.0, 2.0, 21))
    rep = regime_report(cfg.spec, qs)
    samples = next((b[1] for b in rep.branches if b[0] == "samples"), [])
    rows = [[q, t, rep.case] for q, t in samples]
    meta = {"case": rep.case, "D_prime_1": rep.D_prime_1, "q_max": rep.q_max, "q_min": rep.q_min,
            "q_tilde": rep.q_tilde, "s": rep.s, "validity": rep.validity,
            "branches": [b for b in rep.branches if b[0] != "samples"]}
    return TaskOutput(["q", "tau", "case"], rows, meta)


def _spec_with_translations(cfg, seed=None):
    spec, p = cfg.spec, cfg.params
    if seed is None and spec.translations is not None:
        return spec
    seed = cfg.seed if seed is None else seed
    rho = float(p.get("rho", 1.0))
    return spec.with_translations(random_translations(spec.m, spec.d, rho, seed))


def _sample(cfg, spec, seed):
    kw = {}
    if cfg.budget is not None:
        kw["budget"] = cfg.budget
    return chaos_game(spec, int(cfg.params.get("N", 1_000_000)), int(cfg.params.get("burn_in", 1000)),
                      seed=seed, chains=int(cfg.params.get("chains", 1024)), **kw)


def task_sample(cfg):
    spec = _spec_with_translations(cfg)
    s = _sample(cfg, spec, cfg.seed)
    header = [f"x{j}" for j in range(spec.d)] + ["label"]
    rows = [list(pt) + [int(lab)] for pt, lab in zip(s.points, s.labels)]
    meta = s.metadata()
    meta["method"] = "monte-carlo"
    meta["translations"] = spec.translations
    return TaskOutput(header, rows, meta)


def task_empirical_tau(cfg):
    p = cfg.params
    qs = [float(q) for q in p.get("q_grid", [0.5, 1.5, 2.0])]
    seeds = p.get("translation_seeds")
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    runs = [(None, cfg.spec)] if seeds is None and cfg.spec.translations is not None else \
        [(int(s), _spec_with_translations(cfg, int(s))) for s in (seeds or [cfg.seed])]
    extra, per_seed, notices = {}, [], []
    header = ["q", "tau_hat", "stderr", "curvature", "curved", "tau_solver"]
    theory = {q: solve_root(cfg.spec, q, **_solver_kw(cfg)).tau for q in qs}
    for k, (tseed, spec) in enumerate(runs):
        sample = _sample(cfg, spec, [cfg.seed, k])
        radii = p.get("radii")
        radii = np.asarray(radii, dtype=float)[::-1] if radii is not None else \
            dyadic_radii(sample, int(p.get("octaves", 9)), p.get("start"))
        mom = grid_moments(sample, radii, qs, seed=[cfg.seed, k, 7])
        notices.extend(mom.notices)
        rows = []
        for q in qs:
            e = empirical_tau(mom, q)
            rows.append([q, e.slope, e.stderr, e.curvature, e.curved, theory[q]])
        per_seed.append(rows)
        extra[f"empirical-tau_seed{tseed if tseed is not None else k}"] = (header, rows)
    agg = []
    for j, q in enumerate(qs):
        vals = np.array([r[j][1] for r in per_seed])
        sd = float(vals.std(ddof=1)) if vals.size > 1 else None
        agg.append([q, float(vals.mean()), sd, vals.size, theory[q]])
    meta = {"translation_seeds": seeds, "notices": notices, "method": "monte-carlo",
            "theory_method": "solver"}
    return TaskOutput(["q", "mean", "std", "runs", "tau_solver"], agg, meta, extra=extra)


def task_verify(cfg):
    """Concavity audit plus formula/finite-difference cross-checks of ``D'``."""
    spec, p = cfg.spec, cfg.params
    qs = q_grid_from(p, default=(0.1, 3.0, 59))
    fd_tol = float(p.get("fd_tol", 1e-4))
    res_tol = float(p.get("residual_tol", 1e-8))
    table = spectrum_table(spec, qs, **_solver_kw(cfg))
    audit = concavity_audit(table, tol=float(p.get("concavity_tol", 1e-10)))
    rows = [["concavity", None, audit.max_second_difference, None, None, audit.passed]]
    ok = audit.passed
    can_formula = spec.diagonal and spec.multiplicative
    for q in p.get("derivative_points", [0.5, 2.0, 2.5]):
        q = float(q)
        fd = d_prime(spec, q, "finite-difference")
        if not can_formula or fd.knot is not None:
            rows.append(["derivative-fd", q, fd.value, None, None, True])
            continue
        fm = d_prime(spec, q, "formula")
        err = abs(fm.value - fd.value)
        passed = err <= fd_tol and abs(fm.residual) <= res_tol
        ok &= passed
        rows.append(["derivative", q, fm.value, fd.value, err, passed])
        rows.append(["linear-identity", q, fm.residual, 0.0, abs(fm.residual), abs(fm.residual) <= res_tol])
    meta = {"audit": {"passed": audit.passed, "violations": audit.violations, "jumps": audit.jumps,
                      "notices": audit.notices},
            "points": table.meta, "tolerances": {"fd": fd_tol, "residual": res_tol}}
    return TaskOutput(["check", "q", "value", "reference", "abs_error", "passed"], rows, meta, ok)


def task_covering(cfg):
    p = cfg.params
    kind = p.get("kind", "rectangles")
    families = int(p.get("families", 10))
    n = int(p.get("n", 40))
    ratio = float(p.get("ratio", 8.0))
    rng = make_rng([cfg.seed, 11])
    rows, ok = [], True
    for f in range(families):
        if kind == "rectangles":
            d = int(p.get("dimension", 2))
            norms = rng.uniform(1.0, ratio, n)
            a = norms[:, None] * rng.uniform(0.05, 1.0, (n, d))
            a[np.arange(n), rng.integers(0, d, n)] = norms
            c = rng.uniform(0.0, 5.0 * ratio, (n, d))
            res = partition_and_select([AxisRectangle(ci, ai) for ci, ai in zip(c, a)], d,
                                       lattice=int(p.get("lattice", 1000)))
            rows.append([f, n, len(res.selected[1]) + len(res.selected[2]), res.M, res.certified])
        elif kind == "translates":
            d = int(p.get("dimension", 2))
            T = rng.normal(size=(d, d)) * 0.3
            while abs(np.linalg.det(T)) < 1e-2:
                T = rng.normal(size=(d, d)) * 0.3
            b = rng.uniform(0.0, 3.0, (n, d))
            res = select_translates(np.full(d, 0.5), 0.5, [(T, x) for x in b],
                                    factor=float(p.get("factor", 3.0)))
            rows.append([f, n, len(res.selected), res.factor, res.certified])
        else:
            raise ConfigError(f"unknown kind {kind!r}", "params.kind")
        ok &= bool(rows[-1][-1])
    return TaskOutput(["family", "size", "selected", "factor", "certified"], rows,
                      {"kind": kind, "method": "exact+lattice"}, ok)


TASK_RUNNERS = {
    "dq": task_dq,
    "tau": task_tau,
    "spectrum": task_spectrum,
    "lyapunov": task_lyapunov,
    "closed-form": task_closed_form,
    "regimes": task_regimes,
    "sample": task_sample,
    "empirical-tau": task_empirical_tau,
    "verify": task_verify,
    "covering": task_covering,
}


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def run(cfg: RunConfig, out_dir: str | None = None) -> int:
    """Dispatch ``cfg.task`` and write its files. Returns the exit status."""
    out_dir = out_dir or cfg.out_dir
    try:
        result = TASK_RUNNERS[cfg.task](cfg)
    except (ConfigError, SpecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (BudgetError, ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    os.makedirs(out_dir, exist_ok=True)
    write_csv(os.path.join(out_dir, f"{cfg.task}.csv"), result.header, result.rows)
    for stem, (header, rows) in result.extra.items():
        write_csv(os.path.join(out_dir, f"{stem}.csv"), header, rows)
    meta = {
        "task": cfg.task,
        "spec_hash": cfg.spec.spec_hash(),
        "seed": cfg.seed,
        "version": __version__,
        "generator": RNG_NAME,
        "budget": cfg.budget,
        "params": cfg.params,
        "tolerances": {"exact": "machine precision", "finite_n": FINITE_TOL},
        "passed": result.ok,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        **result.meta,
    }
    with open(os.path.join(out_dir, f"{cfg.task}.meta"), "w") as fh:
        json.dump(_jsonable(meta), fh, indent=2, sort_keys=True)
        fh.write("\n")
    if not result.ok:
        print(f"{cfg.task}: invariant check failed", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="selfaffine",
                                 description="L^q spectra of self-affine measures.")
    ap.add_argument("config", help="JSON run configuration")
    ap.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                    help="set a scalar field, e.g. params.N=200000 (repeatable)")
    ap.add_argument("--seed", type=int, help="master seed")
    ap.add_argument("--budget", type=int, help="word / sample budget")
    ap.add_argument("--out-dir", help="output directory")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config) as fh:
            data = json.load(fh)
        for item in args.override:
            apply_override(data, item)
        if args.seed is not None:
            data["seed"] = args.seed
        if args.budget is not None:
            data["budget"] = args.budget
        if args.out_dir is not None:
            data["out_dir"] = args.out_dir
        cfg = config_from_dict(data)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}",
              file=sys.stderr)
        return EXIT_INVALID
    except (ConfigError, SpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
