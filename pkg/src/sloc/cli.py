"""Command-line harness.

    sloc {verify,mmse-curve,sde,pinning-compare,gen-measure} SPEC.json --seed S --out DIR [--threads N]

Exit codes: 0 pass, 1 input or usage error, 2 statistical or diagnostic failure.
Errors go to stderr as ``error <CODE>: <message>``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import sde as _sde
from .errors import InvalidParameter, ParseError, SlocError, StepTooLarge
from .linalg import PsdMatrix
from .measures import DiscreteMeasure, cov, measure_from_dict, measure_to_dict, random_measure, load_measure
from .verify import McConfig, estimate_pinning, estimate_mutual_information, estimate_mixture_cov, mmse, verify_theorem

log = logging.getLogger("sloc")

EXIT_OK, EXIT_INPUT, EXIT_STAT = 0, 1, 2
SCALED_COV_FLOOR = 1e-9


def fmt(v) -> str:
    return format(float(v), ".17g")


# -- spec parsing ----------------------------------------------------------

def read_spec(path) -> dict:
    try:
        spec = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(spec, dict):
        raise ParseError("spec must be a JSON object")
    return spec


def resolve_measure(src, base_dir: Path = Path(".")) -> DiscreteMeasure:
    if isinstance(src, str):
        p = Path(src)
        return load_measure(p if p.is_absolute() else base_dir / p)
    if not isinstance(src, dict):
        raise ParseError("measure must be an inline object, a file path or a generator spec")
    sources = [key for key in ("atoms", "generator", "file") if key in src]
    if len(sources) != 1:
        raise ParseError("measure needs exactly one of 'atoms', 'generator' or 'file'")
    if "generator" in src:
        g = src["generator"]
        try:
            return random_measure(int(g["seed"]), int(g["n"]), int(g["k"]), g.get("geometry", "cube"))
        except (KeyError, TypeError) as exc:
            raise ParseError(f"generator spec needs seed, n, k: {exc}") from exc
    if "file" in src:
        return resolve_measure(str(src["file"]), base_dir)
    return measure_from_dict(src)


def resolve_q(q_spec, mu: DiscreteMeasure) -> PsdMatrix:
    n = mu.dim
    if q_spec is None:
        q = np.eye(n)
    elif isinstance(q_spec, (int, float)):
        q = float(q_spec) * np.eye(n)
    elif isinstance(q_spec, dict):
        if "scaled_identity" in q_spec:
            q = float(q_spec["scaled_identity"]) * np.eye(n)
        elif "scaled_cov" in q_spec:
            q = float(q_spec["scaled_cov"]) * cov(mu).array + SCALED_COV_FLOOR * np.eye(n)
        elif "diag" in q_spec:
            q = np.diag(np.asarray(q_spec["diag"], dtype=np.float64))
        else:
            raise ParseError("q_matrix object needs scaled_identity, scaled_cov or diag")
    else:
        q = np.asarray(q_spec, dtype=np.float64)
    q = np.atleast_2d(q)
    if q.shape != (n, n):
        raise ParseError(f"q_matrix must be {n}x{n}")
    q = PsdMatrix(q)
    q._check_definite()
    return q


def resolve_r(r_spec, n: int) -> np.ndarray:
    if r_spec is None:
        return np.eye(n)
    if isinstance(r_spec, (int, float)):
        return float(r_spec) * np.eye(n)
    r = np.atleast_2d(np.asarray(r_spec, dtype=np.float64))
    if r.shape != (n, n):
        raise ParseError(f"R must be {n}x{n}")
    return PsdMatrix(r).array


def mc_config(spec: dict, seed: int, threads: int, **over) -> McConfig:
    kw = dict(
        seed=seed,
        n_samples=int(spec.get("n_samples", 100_000)),
        n_batches=int(spec.get("n_batches", 50)),
        tau_mode=spec.get("tau_mode", "uniform12"),
        threads=threads,
    )
    kw.update(over)
    return McConfig(**kw)


class Context:
    def __init__(self, args, spec: dict):
        self.spec = spec
        seed = args.seed if args.seed is not None else spec.get("seed")
        if seed is None:
            raise ParseError("a seed is required (spec 'seed' or --seed)")
        self.seed = int(seed)
        self.out = Path(args.out)
        self.threads = args.threads
        self.base_dir = Path(args.spec).resolve().parent

    def measure(self) -> DiscreteMeasure:
        if "measure" not in self.spec:
            raise ParseError("spec has no 'measure'")
        return resolve_measure(self.spec["measure"], self.base_dir)

    def write_json(self, name: str, obj) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        p.write_text(json.dumps(obj, indent=2) + "\n")
        return p

    def write_csv(self, name: str, header, rows) -> Path:
        self.out.mkdir(parents=True, exist_ok=True)
        p = self.out / name
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
        return p


# -- commands ----------------------------------------------------------------

def cmd_verify(ctx: Context) -> int:
    mu = ctx.measure()
    q = resolve_q(ctx.spec.get("q_matrix"), mu)
    cfg = mc_config(ctx.spec, ctx.seed, ctx.threads)
    scale = float(ctx.spec.get("cov1_bound_scale", 1.0))
    log.info("verify: n=%d k=%d n_samples=%d", mu.dim, mu.k, cfg.n_samples)
    reports = verify_theorem(mu, q, cfg, cov1_bound_scale=scale)
    ctx.write_json("report.json", [r.to_dict() for r in reports.values()])
    ok = all(r.passed for r in reports.values())
    log.info("verify: %s", "pass" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_STAT


def cmd_mmse_curve(ctx: Context) -> int:
    mu = ctx.measure()
    q = resolve_q(ctx.spec.get("q_matrix"), mu)
    r = resolve_r(ctx.spec.get("R"), mu.dim)
    grid = [float(t) for t in ctx.spec.get("t_grid", [0.0, 0.5, 1.0, 1.5, 2.0])]
    if any(t < 0 for t in grid) or grid != sorted(grid):
        raise InvalidParameter("t_grid must be sorted and nonnegative")
    quantity = ctx.spec.get("quantity", "mmse")
    rows = []
    for t in grid:
        cfg = mc_config(ctx.spec, ctx.seed, ctx.threads, tau_mode=t)
        if quantity == "mmse":
            est = mmse(mu, q, t, r, cfg)
        elif quantity == "mutual_information":
            est = estimate_mutual_information(mu, q, cfg) if t > 0 else None
        else:
            raise InvalidParameter("quantity must be 'mmse' or 'mutual_information'")
        rows.append((t, 0.0, 0.0) if est is None else (t, est.value, est.std_error))
        log.info("%s-curve: t=%g done", quantity, t)
    ctx.write_csv(f"{'mmse' if quantity == 'mmse' else 'mi'}_curve.csv", ["t", "value", "std_error"], rows)
    return EXIT_OK


def cmd_sde(ctx: Context) -> int:
    spec = ctx.spec
    mu = ctx.measure()
    q = resolve_q(spec.get("q_matrix"), mu)
    t_max = float(spec.get("t_max", 50.0))
    checkpoints = [float(c) for c in spec.get("checkpoints", [0.5, 1.0, 2.0, 5.0]) if float(c) <= t_max]
    cfg = _sde.PathConfig(
        seed=ctx.seed,
        dt=float(spec.get("dt", 1e-3)),
        t_max=t_max,
        driver=spec.get("driver", "exact_channel"),
        record_every=int(spec.get("record_every", 100)),
        extra_times=tuple(checkpoints),
    )
    n_paths = int(spec.get("n_paths", 500))
    diag = {"driver": cfg.driver, "n_paths": n_paths, "dt": cfg.dt, "t_max": cfg.t_max, "seed": ctx.seed}
    status = EXIT_OK
    try:
        ens = _sde.simulate(mu, q, cfg, n_paths, drift_scale=float(spec.get("drift_scale", 1.0)),
                            threads=ctx.threads)
    except StepTooLarge as exc:
        diag["error"] = {"code": exc.code, "message": str(exc)}
        ctx.write_json("diagnostic.json", diag)
        print(f"error {exc.code}: {exc}", file=sys.stderr)
        return EXIT_STAT
    n_dump = min(n_paths, int(spec.get("write_paths", 10)))
    if n_dump:
        (ctx.out / "paths").mkdir(parents=True, exist_ok=True)
        for p in range(n_dump):
            ens.write_csv(p, ctx.out / "paths" / f"path_{p:05d}.csv")
    if n_paths >= 100 and checkpoints:
        mart = _sde.martingale_diagnostic(ens, checkpoints)
        diag["martingale"] = mart.to_dict()
        if not mart.passed:
            status = EXIT_STAT
    diag["localization"] = _sde.localization_diagnostic(ens, float(spec.get("threshold", 0.99))).to_dict()
    if ens.max_normalization_drift is not None:
        diag["max_normalization_drift"] = float(ens.max_normalization_drift.max())
    law = spec.get("law_equivalence")
    if law:
        rep = _sde.law_equivalence_test(
            mu, q, float(law.get("t", 1.0)), int(law.get("n_paths", 1000)), ctx.seed,
            channel_t=law.get("channel_t"), threads=ctx.threads)
        diag["law_equivalence"] = rep.to_dict()
        if not rep.passed:
            status = EXIT_STAT
    diag["pass"] = status == EXIT_OK
    ctx.write_json("diagnostic.json", diag)
    log.info("sde: %s", "pass" if status == EXIT_OK else "FAIL")
    return status


def cmd_pinning_compare(ctx: Context) -> int:
    mu = ctx.measure()
    eps_grid = [float(e) for e in ctx.spec.get("epsilon_grid", [0.0, 0.25, 0.5, 0.75, 1.0])]
    if any(not 0.0 <= e <= 1.0 for e in eps_grid):
        raise InvalidParameter("epsilon_grid must lie in [0, 1]")
    q_grid = ctx.spec.get("q_grid")
    if q_grid is None:
        q_grid = [(1.0 - e) / e for e in eps_grid if 0.0 < e < 1.0]
    cfg = mc_config(ctx.spec, ctx.seed, ctx.threads)
    rows = []
    for e in eps_grid:
        est = estimate_pinning(mu, e, cfg)
        rows.append(("erasure", e, est["mi"].value, est["mi"].std_error,
                     np.linalg.eigvalsh(est["cov"].value)[-1], np.linalg.norm(est["cov"].std_error)))
    for c in q_grid:
        q = resolve_q({"scaled_identity": float(c)}, mu)
        mi = estimate_mutual_information(mu, q, cfg)
        cv = estimate_mixture_cov(mu, q, cfg)
        rows.append(("gaussian", float(c), mi.value, mi.std_error,
                     np.linalg.eigvalsh(cv.value)[-1], np.linalg.norm(cv.std_error)))
    ctx.write_csv("pinning_compare.csv",
                  ["channel", "param", "mutual_information", "mi_std_error", "max_eig_cov", "cov_std_error"], rows)
    return EXIT_OK


def cmd_gen_measure(ctx: Context) -> int:
    g = ctx.spec.get("generator", ctx.spec)
    try:
        n, k = int(g["n"]), int(g["k"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"gen-measure needs n and k: {exc}") from exc
    seed = int(g["seed"]) if "seed" in g and g is not ctx.spec else ctx.seed
    mu = random_measure(seed, n, k, g.get("geometry", "cube"))
    ctx.write_json("measure.json", measure_to_dict(mu))
    return EXIT_OK


COMMANDS = {
    "verify": cmd_verify,
    "mmse-curve": cmd_mmse_curve,
    "sde": cmd_sde,
    "pinning-compare": cmd_pinning_compare,
    "gen-measure": cmd_gen_measure,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sloc", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("spec", help="JSON experiment spec")
    p.add_argument("--seed", type=int, default=None, help="overrides the spec seed")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $SLOC_THREADS or 1)")
    p.add_argument("-q", "--quiet", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    if args.threads is None:
        try:
            args.threads = int(os.environ.get("SLOC_THREADS", "1"))
        except ValueError:
            print("error E_PARSE: SLOC_THREADS must be an integer", file=sys.stderr)
            return EXIT_INPUT
    try:
        ctx = Context(args, read_spec(args.spec))
        return COMMANDS[args.command](ctx)
    except SlocError as exc:
        print(f"error {exc.code}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ValueError, TypeError, KeyError) as exc:
        print(f"error E_INPUT: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
