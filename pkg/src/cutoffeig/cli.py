"""Command-line entry point.

Subcommands:

* ``solve CONFIG``: train ``K`` eigenpairs and write a run directory.
* ``reference``: separable reference spectrum as CSV.
* ``approx-study``: H1 error sweep of a constructive approximation.
* ``compare-penalty CONFIG``: exact-boundary run against a boundary-penalty sweep.
* ``diagnose RUN_DIR``: post-hoc diagnostics of a run directory.

A run directory holds ``config.yaml`` (canonical snapshot), ``records.json``,
``trace_k<k>.csv``, ``params_k<k>.npz`` and ``results.csv`` with columns
``k,result,reference,rel_error``.  Given the same configuration, the files
are byte-identical from run to run.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import barron
from .config import ConfigError, ExperimentConfig, dump_config, load_config, parse_config
from .cutoff import make_cutoff
from .loss import LossConfig
from .diag import accumulation_trace, apriori_bounds_check, diagnose_solution
from .net import TrialFn, load_params, save_params
from .problem import Domain, Potential
from .spectral_ref import TruncationError, fixture_reference, solve_separable
from .train import TRACE_COLUMNS, SolveAborted, build_trial, initialization_seed, solve_spectrum, train_kth

log = logging.getLogger("cutoffeig")

CSV_SCHEMA_VERSION = 1
DEFAULT_GAMMAS = (100.0, 500.0, 2000.0, 10000.0)


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{float(x):.10e}"


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ---------------------------------------------------------------------------
# References
# ---------------------------------------------------------------------------


def reference_values(cfg: ExperimentConfig, K: int) -> dict[int, float]:
    """Reference eigenvalues keyed by ``k`` (empty if none is available)."""
    dom = cfg.problem.domain
    pot = cfg.problem.potential
    if dom.kind == "hypercube" and pot.kind != "inverse_square":
        try:
            spec = solve_separable(dom.build(), pot.build(), K, cfg.reference.M, cfg.reference.Q)
        except TruncationError as exc:
            log.warning("no reference: %s", exc)
            return {}
        return {k: float(spec.values[k - 1]) for k in range(1, K + 1)}
    if pot.kind == "inverse_square" and dom.kind in ("ball", "shell"):
        try:
            return fixture_reference(dom.kind, pot.c)
        except KeyError:
            return {}
    return {}


def reference_spectrum(cfg: ExperimentConfig, K: int):
    """Separable reference covering ``1..K`` and the next distinct eigenvalue (``None`` if unavailable)."""
    dom, pot = cfg.problem.domain, cfg.problem.potential
    if dom.kind != "hypercube" or pot.kind == "inverse_square":
        return None
    spec = solve_separable(dom.build(), pot.build(), K, cfg.reference.M, cfg.reference.Q)
    if not math.isfinite(spec.next_distinct(K)):
        # The stability bounds need the first eigenvalue above the top cluster.
        spec = solve_separable(dom.build(), pot.build(), spec.K + 1, cfg.reference.M, cfg.reference.Q)
    return spec


def results_rows(eigenvalues, refs: dict[int, float]):
    rows = []
    for k, lam in enumerate(eigenvalues, start=1):
        ref = refs.get(k)
        rel = abs(lam - ref) / abs(ref) if ref is not None else None
        rows.append([k, _fmt(lam), _fmt(ref), _fmt(rel)])
    return rows


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def _write_record(run_dir: Path, record) -> None:
    save_params(run_dir / f"params_k{record.k}.npz", record.trial.net)
    _write_csv(run_dir / f"trace_k{record.k}.csv", TRACE_COLUMNS,
               [[row[c] if c in ("epoch", "batch") else _fmt(row[c]) for c in TRACE_COLUMNS] for row in record.trace])


def _records_json(records) -> str:
    payload = {
        "version": CSV_SCHEMA_VERSION,
        "records": [
            {"k": r.k, "eigenvalue": r.eigenvalue, "stderr": r.stderr, "beta": r.beta,
             "init_seed": r.init_seed, "param_hash": r.param_hash, "e2_final": r.e2_final}
            for r in records
        ],
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def run_solve(cfg: ExperimentConfig, run_dir: Path) -> Path:
    """Train and persist a run directory; returns its path."""
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.yaml").write_text(dump_config(cfg))
    problem = cfg.problem.build()
    meth = cfg.method
    finished = []

    def on_record(record):
        finished.append(record)
        _write_record(run_dir, record)
        (run_dir / "records.json").write_text(_records_json(finished))

    refs = reference_values(cfg, cfg.K)
    try:
        solution = solve_spectrum(
            problem, meth.cutoff, cfg.K, cfg.schedule(), beta_factor=meth.loss.beta_factor,
            beta_override=meth.loss.beta, width=meth.architecture.width, depth=meth.architecture.depth,
            mode=meth.mode, gamma_bdry=meth.loss.gamma_bdry, gamma_norm=meth.loss.gamma_norm,
            log_every=cfg.log_every, on_record=on_record,
        )
    except SolveAborted as exc:
        _write_csv(run_dir / "results.csv", ["k", "result", "reference", "rel_error"],
                   results_rows([r.eigenvalue for r in exc.partial.records], refs))
        raise
    _write_csv(run_dir / "results.csv", ["k", "result", "reference", "rel_error"],
               results_rows(solution.eigenvalues, refs))
    return run_dir


@dataclass
class LoadedRecord:
    k: int
    eigenvalue: float
    beta: float
    trial: TrialFn
    trace: list


def load_run(run_dir: Path):
    """Config, problem and records of a run directory."""
    cfg = load_config(run_dir / "config.yaml")
    problem = cfg.problem.build()
    meta = json.loads((run_dir / "records.json").read_text())
    cutoff = make_cutoff("none" if cfg.method.mode == "boundary_penalty" else cfg.method.cutoff, problem.domain)
    records = []
    for entry in meta["records"]:
        k = entry["k"]
        net = load_params(run_dir / f"params_k{k}.npz")
        trial = TrialFn(net, cutoff)
        with open(run_dir / f"trace_k{k}.csv") as fh:
            trace = [{c: float(v) for c, v in row.items()} for row in csv.DictReader(fh)]
        records.append(LoadedRecord(k, entry["eigenvalue"], entry["beta"], trial, trace))
    return cfg, problem, records


# ---------------------------------------------------------------------------
# compare-penalty
# ---------------------------------------------------------------------------


def run_compare_penalty(cfg: ExperimentConfig, out_dir: Path, gammas=DEFAULT_GAMMAS) -> list[list]:
    """Ground state with exact boundary conditions and with each penalty weight.

    Every run starts from the initialization ``solve`` uses for ``k = 1``, so
    the exact-BC row reproduces a single-pair ``solve`` with the same config.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = cfg.problem.build()
    schedule = cfg.schedule()
    arch = cfg.method.architecture
    ref = reference_values(cfg, 1).get(1)
    rows = []

    def one(mode, gamma):
        trial = build_trial(problem, cfg.method.cutoff, mode, arch.width, arch.depth, seed=initialization_seed(schedule.seed, 1))
        lc = LossConfig(k=1, gamma_bdry=gamma, mode=mode, gamma_norm=cfg.method.loss.gamma_norm)
        res = train_kth(problem, trial, [], schedule, lc, log_every=cfg.log_every)
        rel = abs(res.eigenvalue - ref) / abs(ref) if ref is not None else None
        rows.append([mode, _fmt(gamma) if mode != "exact_bc" else "", _fmt(res.eigenvalue), _fmt(ref), _fmt(rel)])
        log.info("%s gamma=%s lambda=%.6f", mode, gamma, res.eigenvalue)

    one("exact_bc", 0.0)
    for g in gammas:
        one("boundary_penalty", float(g))
    _write_csv(out_dir / "compare.csv", ["mode", "gamma", "result", "reference", "rel_error"], rows)
    return rows


# ---------------------------------------------------------------------------
# approx-study
# ---------------------------------------------------------------------------


def read_series(path) -> barron.SineSeries:
    """Rows ``k_1 ... k_d coefficient`` separated by commas or whitespace; ``#`` comments."""
    rows = []
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.replace(",", " ").split()
        rows.append([float(p) for p in parts])
    if not rows:
        raise ValueError(f"{path}: no series rows")
    return barron.SineSeries.from_rows(rows)


def approx_bound(u: barron.SineSeries, construction: str, s: float, m: int) -> float:
    if construction == "maurey":
        b_u = barron.coefficient_bound_factor(u.dim, s) * barron.barron_norm(u, s)
        return math.sqrt(6.0 / m) * b_u
    B = barron.network_budget(u, s)
    return (28.0 if construction == "relu" else 64.0) * B / math.sqrt(m)


def build_approximation(u: barron.SineSeries, construction: str, s: float, m: int, seed: int):
    if construction == "maurey":
        return barron.maurey_sample(u, s - 1, m, seed)
    if construction == "relu":
        return barron.relu_pipeline(u, s, m, seed)
    if construction == "softplus":
        return barron.softplus_pipeline(u, s, m, seed)
    raise ValueError(f"unknown construction {construction!r}")


def run_approx_study(u: barron.SineSeries, construction: str, s: float, ms, seeds) -> list[list]:
    rows = []
    for m in ms:
        bound = approx_bound(u, construction, s, m)
        for seed in seeds:
            err = barron.h1_error(u, build_approximation(u, construction, s, m, seed))
            rows.append([m, seed, _fmt(err), _fmt(bound)])
    return rows


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------


def run_diagnose(run_dir: Path) -> tuple[bool, list[str]]:
    """Write ``diagnostics.csv`` and return ``(all proven checks passed, summary lines)``."""
    cfg, problem, records = load_run(run_dir)
    K = max((r.k for r in records), default=0)
    spectrum = None
    if K:
        try:
            spectrum = reference_spectrum(cfg, K)
        except TruncationError as exc:
            log.warning("no reference spectrum: %s", exc)
    diags = diagnose_solution(records, problem, spectrum)
    rows = []
    ok = True
    lines = []
    for d in diags:
        flags = d.flags
        passed = all(v for key, v in flags.items() if key != "skipped") if flags else True
        ok &= passed
        overl = max((abs(v) for v in d.overlaps), default=0.0)
        e2_last = d.e2_history[-1] if d.e2_history.size else float("nan")
        rows.append([d.k, _fmt(d.lam_hat), _fmt(d.lam_ref), _fmt(d.energy_excess), _fmt(d.proj_residual_l2),
                     _fmt(d.proj_residual_h1), _fmt(overl), _fmt(e2_last),
                     int(flags.get("skipped", False)), int(passed)])
        lines.append(f"k={d.k} lambda={d.lam_hat:.6f} stability={'PASS' if passed else 'FAIL'}"
                     + (" (skipped: beta too small)" if flags.get("skipped") else ""))
    if spectrum is not None and problem.domain.kind == "hypercube":
        vmin, vmax = problem.potential.bounds(problem.domain)
        ap = apriori_bounds_check(spectrum, vmin, vmax)
        ok &= ap.ok
        lines.append(f"a-priori: monotone={ap.monotone} lambda_1={ap.lambda_1:.6f} >= {ap.lower_bound:.6f}: "
                     f"{'PASS' if ap.lower_bound_ok else 'FAIL'}; max sup-norm ratio {ap.sup_ratios.max():.3f} (reported)")
        excess = [d.energy_excess for d in diags if d.energy_excess is not None]
        if len(excess) >= 3:
            tr = accumulation_trace(np.maximum(excess, 0.0))
            lines.append("accumulation exponent: " + ("exact" if tr.exact else f"{tr.exponent:.3f}")
                         + f" (soft limit 2.5: {'within' if tr.within_soft_limit else 'above'})")
    _write_csv(run_dir / "diagnostics.csv",
               ["k", "lambda_hat", "reference", "energy_excess", "proj_residual_l2", "proj_residual_h1",
                "max_overlap", "e2_final", "skipped", "passed"], rows)
    return ok, lines


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def _float_list(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cutoffeig", description="Neural Dirichlet eigensolver with exact-boundary cutoffs.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="train K eigenpairs and write a run directory")
    s.add_argument("config", type=Path)
    s.add_argument("--out", type=Path, help="run directory (default: the config's output)")

    r = sub.add_parser("reference", help="separable reference spectrum as CSV")
    r.add_argument("--config", type=Path, help="take domain and potential from a config file")
    r.add_argument("--potential", default="separable_cosine", choices=["zero", "constant", "separable_cosine"])
    r.add_argument("--c", type=float, default=0.0, help="constant potential value")
    r.add_argument("--dim", type=int, default=2)
    r.add_argument("--lo", type=float, default=-1.0)
    r.add_argument("--hi", type=float, default=1.0)
    r.add_argument("--K", type=int, default=10)
    r.add_argument("--M", type=int, default=32)
    r.add_argument("--decimals", type=int, default=4)
    r.add_argument("--out", type=Path, help="CSV path (default: stdout)")

    a = sub.add_parser("approx-study", help="H1 error sweep of a constructive approximation")
    a.add_argument("--series", type=Path, required=True, help="rows 'k_1 ... k_d coefficient'")
    a.add_argument("--construction", choices=["maurey", "relu", "softplus"], default="relu")
    a.add_argument("--s", type=float, default=3.0, help="Barron smoothness of the series")
    a.add_argument("--m", type=_int_list, default=[8, 16, 32, 64, 128, 256, 512])
    a.add_argument("--seeds", type=int, default=20)
    a.add_argument("--out", type=Path)

    c = sub.add_parser("compare-penalty", help="exact boundary conditions vs a boundary-penalty sweep")
    c.add_argument("config", type=Path)
    c.add_argument("--gammas", type=_float_list, default=list(DEFAULT_GAMMAS))
    c.add_argument("--out", type=Path)

    d = sub.add_parser("diagnose", help="diagnostics for a run directory")
    d.add_argument("run_dir", type=Path)
    return p


def _load(path: Path) -> ExperimentConfig:
    return parse_config(path.read_text())


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "solve":
            cfg = _load(args.config)
            out = run_solve(cfg, args.out or Path(cfg.output))
            print((out / "results.csv").read_text(), end="")
        elif args.command == "reference":
            if args.config:
                cfg = _load(args.config)
                domain, potential = cfg.problem.domain.build(), cfg.problem.potential.build()
                M = cfg.reference.M
            else:
                domain = Domain.hypercube(args.lo, args.hi, args.dim)
                potential = {"zero": Potential.zero, "separable_cosine": Potential.separable_cosine}.get(
                    args.potential, lambda: Potential.constant(args.c))()
                M = args.M
            spec = solve_separable(domain, potential, args.K, M)
            rows = [[k, f"{spec.values[k - 1]:.{args.decimals}f}", spec.multiplicity(k),
                     ";".join(str(i + 1) for i in spec.indices[k - 1])] for k in range(1, args.K + 1)]
            header = ["k", "lambda", "multiplicity", "multi_index"]
            if args.out:
                _write_csv(args.out, header, rows)
            else:
                w = csv.writer(sys.stdout, lineterminator="\n")
                w.writerow(header)
                w.writerows(rows)
        elif args.command == "approx-study":
            u = read_series(args.series)
            rows = run_approx_study(u, args.construction, args.s, args.m, range(args.seeds))
            header = ["m", "seed", "h1_error", "bound"]
            if args.out:
                _write_csv(args.out, header, rows)
            else:
                w = csv.writer(sys.stdout, lineterminator="\n")
                w.writerow(header)
                w.writerows(rows)
        elif args.command == "compare-penalty":
            cfg = _load(args.config)
            out = args.out or Path(cfg.output)
            run_compare_penalty(cfg, out, args.gammas)
            print((out / "compare.csv").read_text(), end="")
        elif args.command == "diagnose":
            ok, lines = run_diagnose(args.run_dir)
            for line in lines:
                print(line)
            print("PASS" if ok else "FAIL")
            return 0 if ok else 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolveAborted as exc:
        print(f"solve aborted: {exc}", file=sys.stderr)
        return 3
    except (TruncationError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
