"""Command-line experiment runner and verification driver.

    onebit run --config cfg.json [--timing]
    onebit verify {lemma1,lemma2,rip,dilation,normloss,wedin,all} [--d N] [--samples N] [--seed N]
    onebit sweep --config cfg.json --axis {m,noise_p,noise_xi} --values 0.01,0.05
    onebit template [--out cfg.json]

Exit codes: 0 success, 1 a verification check failed, 2 configuration error,
3 numerical failure. Set ``ONEBIT_NUM_THREADS`` to cap BLAS threads.
"""

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import __version__, metrics, oracle
from ._random import derive_seed, stream
from .linalg import ConvergenceError, RankDeficientError
from .sensing import NoiseSpec, make_ground_truth
from .solver import SolverConfig, naive_plug_in, run

CSV_COLUMNS = (
    "t",
    "samples_seen",
    "recovery_error",
    "tan_theta",
    "hamming",
    "auc_pct",
    "degenerate_columns",
    "elapsed_ms",
)
SWEEP_COLUMNS = (
    "axis",
    "value",
    "seed",
    "recovery_error",
    "auc_pct",
    "hamming",
    "baseline_recovery_error",
    "baseline_auc_pct",
    "baseline_hamming",
)
SUITES = ("lemma1", "lemma2", "rip", "dilation", "normloss", "wedin")

TEMPLATE = {
    "d1": 500,
    "d2": 200,
    "k": 3,
    "m": 100000,
    "T": 10,
    "mode": "single_label",
    "noise": {"kind": "none"},
    "n_test": 10000,
    "seed": 0,
    "out_csv": "run.csv",
    "out_summary": "run.json",
}


class ConfigError(ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"config field {field!r}: {message}")


@dataclass(frozen=True)
class ExperimentConfig:
    d1: int
    d2: int
    k: int
    m: int
    T: int
    mode: str
    noise: NoiseSpec
    n_test: int
    seed: int
    out_csv: Path
    out_summary: Path

    @classmethod
    def from_dict(cls, raw, base_dir=Path(".")):
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "expected a JSON object")
        expected = set(TEMPLATE)
        for key in raw:
            if key not in expected:
                raise ConfigError(key, "unknown field")
        for key in TEMPLATE:
            if key not in raw:
                raise ConfigError(key, "missing")
        vals = {}
        for key in ("d1", "d2", "k", "m", "T", "n_test"):
            v = raw[key]
            if isinstance(v, bool) or not isinstance(v, int) or v < 1:
                raise ConfigError(key, f"must be an integer >= 1, got {v!r}")
            vals[key] = v
        if vals["d1"] < 2:
            raise ConfigError("d1", "must be >= 2")
        if vals["n_test"] < 2:
            raise ConfigError("n_test", "must be >= 2")
        if vals["k"] > min(vals["d1"], vals["d2"]):
            raise ConfigError("k", f"must be <= min(d1, d2) = {min(vals['d1'], vals['d2'])}")
        seed = raw["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError("seed", f"must be a nonnegative integer, got {seed!r}")
        mode = raw["mode"]
        if mode not in ("single_label", "full_observation"):
            raise ConfigError("mode", f"must be single_label or full_observation, got {mode!r}")
        noise = _parse_noise(raw["noise"])
        paths = {}
        for key in ("out_csv", "out_summary"):
            if not isinstance(raw[key], str) or not raw[key]:
                raise ConfigError(key, "must be a nonempty path string")
            p = Path(raw[key])
            paths[key] = p if p.is_absolute() else base_dir / p
        return cls(mode=mode, noise=noise, seed=seed, **vals, **paths)

    def to_dict(self):
        return {
            "d1": self.d1,
            "d2": self.d2,
            "k": self.k,
            "m": self.m,
            "T": self.T,
            "mode": self.mode,
            "noise": self.noise.to_dict(),
            "n_test": self.n_test,
            "seed": self.seed,
            "out_csv": str(self.out_csv),
            "out_summary": str(self.out_summary),
        }

    def solver_config(self):
        return SolverConfig(
            d1=self.d1, d2=self.d2, k=self.k, m=self.m, T=self.T,
            seed=self.seed, noise=self.noise, mode=self.mode,
        )


def _parse_noise(raw):
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ConfigError("noise", 'expected an object with a "kind" key')
    kind = raw["kind"]
    allowed = {"none": set(), "gaussian": {"xi"}, "flip": {"p"}}
    if kind not in allowed:
        raise ConfigError("noise", f"unknown kind {kind!r}")
    extra = set(raw) - {"kind"} - allowed[kind]
    if extra:
        raise ConfigError("noise", f"unexpected keys {sorted(extra)} for kind {kind!r}")
    try:
        if kind == "gaussian":
            return NoiseSpec.gaussian(_number(raw.get("xi")))
        if kind == "flip":
            return NoiseSpec.flip(_number(raw.get("p")))
    except (TypeError, ValueError) as exc:
        raise ConfigError("noise", str(exc)) from None
    return NoiseSpec()


def _number(v):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise TypeError(f"expected a number, got {v!r}")
    return float(v)


def load_config(path):
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError("<file>", f"{path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("<file>", f"invalid JSON: {exc}") from None
    return ExperimentConfig.from_dict(raw, base_dir=path.parent)


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _axis_value(v):
    # shortest round-trip form: file names and sweep keys read 0.025, not 0.025000000000000001
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def _json_float(x):
    x = float(x)
    return None if math.isnan(x) or math.isinf(x) else x


def run_experiment(cfg, timing=False):
    """Solver and naive baseline on the same ``(T + 1) m`` samples.

    Writes ``cfg.out_csv`` (one row per iteration) and ``cfg.out_summary``.
    Without ``timing`` the elapsed/wall-time fields are written as 0 / null so
    reruns are byte-identical. Returns the summary dict.
    """
    start = time.perf_counter()
    model = make_ground_truth(cfg.d1, cfg.d2, cfg.k, cfg.seed)
    W, history = run(cfg.solver_config(), model, n_test=cfg.n_test)
    total = (cfg.T + 1) * cfg.m
    W_naive = naive_plug_in(model, total, cfg.noise, cfg.seed, batch_size=cfg.m, mode=cfg.mode)

    cfg.out_csv.parent.mkdir(parents=True, exist_ok=True)
    with open(cfg.out_csv, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for rec in history:
            writer.writerow([
                _fmt(rec.t),
                _fmt(rec.samples_seen),
                _fmt(rec.recovery_error),
                _fmt(rec.tan_theta),
                _fmt(rec.hamming),
                _fmt(100 * rec.auc),
                _fmt(rec.degenerate_columns),
                _fmt(rec.elapsed_ms if timing else 0.0),
            ])

    final = history[-1]
    naive_ham = metrics.hamming_prediction_error(W_naive, model, cfg.n_test, cfg.seed)
    naive_auc = metrics.average_auc(W_naive, model, cfg.n_test, cfg.seed)
    summary = {
        "version": __version__,
        "config": cfg.to_dict(),
        "total_samples": total,
        "solver": {
            "recovery_error": _json_float(final.recovery_error),
            "tan_theta": _json_float(final.tan_theta),
            "hamming": _json_float(final.hamming),
            "auc_pct": _json_float(100 * final.auc),
        },
        "baseline": {
            "recovery_error": _json_float(metrics.recovery_error(W_naive, model.W_star)),
            "hamming": _json_float(naive_ham),
            "auc_pct": _json_float(100 * naive_auc),
        },
        "ground_truth_sigma": [float(s) for s in model.sigma],
        "wall_time_s": (time.perf_counter() - start) if timing else None,
    }
    cfg.out_summary.parent.mkdir(parents=True, exist_ok=True)
    cfg.out_summary.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


# -- verify ----------------------------------------------------------------


def _verify_lemma1(d, samples, seed):
    d = d or 20
    n = samples or 10**6
    w = np.zeros(d)
    w[0] = 1.0
    _, r1 = oracle.mc_lemma1_vector(w, n, seed)
    rng = stream(seed, "verify_lemma1")
    W = oracle.random_rank_k_columns_normalized(d, 5, 2, rng)
    _, r2 = oracle.mc_lemma1_matrix(W, n, seed)
    return [r1, r2]


def _verify_lemma2(d, samples, seed):
    d = d or 5
    n = samples or 10**7
    reports = []
    e = np.eye(d)
    for a in (0.3, math.pi / 4, math.pi / 2):
        w2 = math.cos(a) * e[0] + math.sin(a) * e[1]
        _, r = oracle.mc_second_moment(e[0], w2, n, seed)
        r.name = f"lemma2_second_moment_alpha{a:.4f}"
        reports.append(r)
    grid = [0.1, 0.3, 0.7, 1.2, math.pi / 2]
    c1 = oracle.fitted_c1_grid(grid, d)
    reports.append(oracle.OracleReport(
        "lemma2_C1_grid", max(c1), 4.0, 0.0, max(c1) <= 4.0,
        parameters={"d": d, "alphas": grid}, details={"ratios": c1},
    ))
    return reports


def _verify_rip(d, samples, seed):
    return [oracle.rip_decay(d1=d or 50, seed=seed)]


def _verify_dilation(d, samples, seed):
    d1 = d or 10
    worst = None
    for i in range(100):
        W = stream(seed, "verify_dilation", i).standard_normal((d1, max(1, (6 * d1) // 10)))
        r = oracle.check_dilation_spectrum(W)
        if worst is None or r.statistic > worst.statistic:
            worst = r
    worst.name = "dilation_spectrum_100"
    worst.n_samples = 100
    worst.seed = seed
    return [worst]


def normloss_trials(d1, d2, k, trials, seed):
    """Reports for random ``(W*, W_tilde)`` pairs with ``rank(W_tilde) <= 2k``."""
    out = []
    for i in range(trials):
        model = make_ground_truth(d1, d2, k, derive_seed(seed, "normloss_truth", i))
        rng = stream(seed, "normloss_tilde", i)
        scale = 10.0 ** rng.uniform(-3, 1)
        if i % 2 == 0:
            P = rng.standard_normal((d1, k)) @ rng.standard_normal((d2, k)).T
            W_tilde = model.W_star + scale * P / np.linalg.norm(P, 2)
        else:
            W_tilde = scale * rng.standard_normal((d1, 2 * k)) @ rng.standard_normal((d2, 2 * k)).T
        out.append(oracle.check_normalization_loss(model, W_tilde, k))
    return out


def _verify_normloss(d, samples, seed):
    reports = normloss_trials(d or 30, 12, 3, 200, seed)
    worst = max(reports, key=lambda r: r.statistic / r.bound_or_target if r.bound_or_target else 0)
    ratio = worst.statistic / worst.bound_or_target if worst.bound_or_target else 0.0
    return [oracle.OracleReport(
        "normalization_loss_200", ratio, 1.0, 0.0, all(r.passed for r in reports),
        n_samples=len(reports), seed=seed,
        parameters={"d1": d or 30, "d2": 12, "k": 3},
        details={"max_lhs_over_rhs": ratio},
    )]


def _verify_wedin(d, samples, seed):
    W = oracle.matrix_with_spectrum(d or 20, 10, [3.0, 2.0, 1.0], seed)
    return [oracle.check_wedin_init(W, 1.0 / 5, trials=100, seed=seed, k=3)]


_VERIFIERS = {
    "lemma1": _verify_lemma1,
    "lemma2": _verify_lemma2,
    "rip": _verify_rip,
    "dilation": _verify_dilation,
    "normloss": _verify_normloss,
    "wedin": _verify_wedin,
}


def verify(suite, d=None, samples=None, seed=0):
    names = SUITES if suite == "all" else (suite,)
    reports = []
    for name in names:
        reports.extend(_VERIFIERS[name](d, samples, seed))
    return reports


def _print_table(reports, out=None):
    out = out or sys.stdout
    width = max(len(r.name) for r in reports)
    for r in reports:
        status = "PASS" if r.passed else "FAIL"
        print(
            f"{r.name:<{width}}  {status}  statistic={r.statistic:.6g}  "
            f"{r.kind}={r.bound_or_target:.6g}  tol={r.tolerance:.3g}",
            file=out,
        )


# -- sweep -----------------------------------------------------------------


def _axis_config(cfg, axis, value, index):
    seed = derive_seed(cfg.seed, "sweep", index)
    tag = f"{axis}{_axis_value(value)}"
    kw = {
        "seed": seed,
        "out_csv": cfg.out_csv.with_name(f"{cfg.out_csv.stem}_{tag}{cfg.out_csv.suffix}"),
        "out_summary": cfg.out_summary.with_name(
            f"{cfg.out_summary.stem}_{tag}{cfg.out_summary.suffix}"
        ),
    }
    if axis == "m":
        if value != int(value) or value < 1:
            raise ConfigError("values", f"m must be a positive integer, got {value}")
        kw["m"] = int(value)
    elif axis == "noise_p":
        if not 0 <= value <= 1:
            raise ConfigError("values", f"p must lie in [0, 1], got {value}")
        kw["noise"] = NoiseSpec.flip(value)
    elif axis == "noise_xi":
        if value < 0:
            raise ConfigError("values", f"xi must be >= 0, got {value}")
        kw["noise"] = NoiseSpec.gaussian(value)
    else:
        raise ConfigError("axis", f"unknown axis {axis!r}")
    return replace(cfg, **kw)


def _sweep_one(cfg):
    return run_experiment(cfg)


def sweep(cfg, axis, values, out=None, parallel=False):
    if not values:
        raise ConfigError("values", "need at least one value")
    runs = [_axis_config(cfg, axis, v, i) for i, v in enumerate(values)]
    if parallel:
        with ProcessPoolExecutor() as pool:
            summaries = list(pool.map(_sweep_one, runs))
    else:
        summaries = [_sweep_one(c) for c in runs]
    out = Path(out) if out else cfg.out_summary.with_name(f"sweep_{axis}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    new = not out.exists()
    with open(out, "a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if new:
            writer.writerow(SWEEP_COLUMNS)
        for v, c, s in zip(values, runs, summaries):
            writer.writerow([
                axis, _axis_value(v), c.seed,
                _fmt(s["solver"]["recovery_error"]),
                _fmt(s["solver"]["auc_pct"]),
                _fmt(s["solver"]["hamming"]),
                _fmt(s["baseline"]["recovery_error"]),
                _fmt(s["baseline"]["auc_pct"]),
                _fmt(s["baseline"]["hamming"]),
            ])
    return summaries


# -- entry point -----------------------------------------------------------


def _parse_values(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError("values", f"expected a comma-separated list of numbers, got {text!r}")


def build_parser():
    parser = argparse.ArgumentParser(prog="onebit", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one experiment from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--timing", action="store_true", help="record wall-clock times")

    p = sub.add_parser("verify", help="run oracle checks")
    p.add_argument("suite")
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="JSON report path (default verify_<suite>.json)")

    p = sub.add_parser("sweep", help="repeat an experiment along one axis")
    p.add_argument("--config", required=True)
    p.add_argument("--axis", required=True)
    p.add_argument("--values", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--parallel", action="store_true")

    p = sub.add_parser("template", help="write the full-scale template config")
    p.add_argument("--out", default="-")
    return parser


def _limit_threads():
    n = os.environ.get("ONEBIT_NUM_THREADS")
    if not n:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(int(n))


def main(argv=None):
    args = build_parser().parse_args(argv)
    limiter = _limit_threads()
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            s = run_experiment(cfg, timing=args.timing)
            print(
                f"solver recovery_error={s['solver']['recovery_error']:.6g} "
                f"auc_pct={s['solver']['auc_pct']:.4f}  "
                f"baseline recovery_error={s['baseline']['recovery_error']:.6g} "
                f"auc_pct={s['baseline']['auc_pct']:.4f}"
            )
            return 0
        if args.command == "verify":
            if args.suite != "all" and args.suite not in SUITES:
                print(f"error: unknown suite {args.suite!r}; choose from "
                      f"{', '.join(SUITES + ('all',))}", file=sys.stderr)
                return 2
            reports = verify(args.suite, args.d, args.samples, args.seed)
            _print_table(reports)
            out = Path(args.out or f"verify_{args.suite}.json")
            out.write_text(json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n")
            return 0 if all(r.passed for r in reports) else 1
        if args.command == "sweep":
            cfg = load_config(args.config)
            sweep(cfg, args.axis, _parse_values(args.values), args.out, args.parallel)
            return 0
        if args.command == "template":
            text = json.dumps(TEMPLATE, indent=2) + "\n"
            if args.out == "-":
                sys.stdout.write(text)
            else:
                Path(args.out).write_text(text)
            return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RankDeficientError, ConvergenceError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    finally:
        if limiter is not None:
            limiter.unregister()
    return 2


if __name__ == "__main__":
    sys.exit(main())
