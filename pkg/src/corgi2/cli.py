"""Command-line front end.

Subcommands: gen, shuffle, train, stats, uniformity, complexity.
Every run is a pure function of (config file, seed): outputs are CSV
files plus a plain-text summary, each CSV row tagged with a hash of the
effective config so rows from different runs can be joined safely.

Exit codes: 0 success, 2 config error, 3 contract or reconciliation
failure, 4 divergence.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import complexity as cx
from . import objective as obj
from . import rng as rngmod
from . import shuffling as shf
from . import statistics as st
from . import trainer as tr
from .errors import ConfigError, Corgi2Error, DivergenceError
from .storage import serialize_store

CONFIG_VERSION = 1
STRATEGY_CHOICES = ("sequential", "shuffle_once", "full_shuffle", "corgipile", "corgi2")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONTRACT = 3
EXIT_DIVERGENCE = 4


# -- config loading ----------------------------------------------------

def _need(table: dict, key: str, kind, path: str, default=None):
    if key not in table:
        if default is not None:
            return default
        raise ConfigError(f"{path}.{key}: missing required field")
    value = table[key]
    if kind in (int, float) and isinstance(value, bool):
        raise ConfigError(f"{path}.{key}: expected {kind.__name__}, got bool")
    if kind is float and isinstance(value, int):
        value = float(value)
    if not isinstance(value, kind):
        raise ConfigError(f"{path}.{key}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def load_config(path: str | Path, seed_override=None, trials_override=None) -> dict:
    """Parse and validate a TOML experiment config into a plain dict."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: not valid TOML: {exc}") from exc

    if raw.get("version") != CONFIG_VERSION:
        raise ConfigError(f"version: expected {CONFIG_VERSION}, got {raw.get('version')!r}")

    prob = raw.get("problem", {})
    cfg = {"version": CONFIG_VERSION, "problem": {}, "shuffle": {}, "trainer": {}, "run": {}}
    p = cfg["problem"]
    p["kind"] = _need(prob, "kind", str, "problem", default="ladder")
    if p["kind"] not in ("ladder", "clustered"):
        raise ConfigError(f"problem.kind: expected 'ladder' or 'clustered', got {p['kind']!r}")
    p["N"] = _need(prob, "N", int, "problem")
    p["b"] = _need(prob, "b", int, "problem")
    p["d"] = _need(prob, "d", int, "problem", default=1)
    if p["N"] < 1 or p["b"] < 1 or p["d"] < 1:
        raise ConfigError("problem.N/b/d: must all be >= 1")
    p["cluster_spread"] = float(_need(prob, "cluster_spread", float, "problem", default=1.0))
    p["within_spread"] = float(_need(prob, "within_spread", float, "problem", default=0.0))
    p["seed"] = _need(prob, "seed", int, "problem", default=1234)

    sh = raw.get("shuffle", {})
    s = cfg["shuffle"]
    s["strategy"] = _need(sh, "strategy", str, "shuffle", default="corgi2")
    if s["strategy"] not in STRATEGY_CHOICES:
        raise ConfigError(f"shuffle.strategy: expected one of {STRATEGY_CHOICES}, got {s['strategy']!r}")
    s["n"] = _need(sh, "n", int, "shuffle", default=1)
    s["replacement"] = _need(sh, "replacement", str, "shuffle", default="with")
    if s["replacement"] not in ("with", "without"):
        raise ConfigError(f"shuffle.replacement: expected 'with' or 'without', got {s['replacement']!r}")
    s["in_place"] = bool(sh.get("in_place", False))
    s["offline_passes"] = _need(sh, "offline_passes", int, "shuffle", default=1)
    if s["n"] < 1:
        raise ConfigError("shuffle.n: must be >= 1")
    if s["n"] > p["N"]:
        raise ConfigError(f"shuffle.n: buffer of {s['n']} blocks exceeds problem.N = {p['N']}")
    if s["offline_passes"] < 0:
        raise ConfigError("shuffle.offline_passes: must be >= 0")
    if s["in_place"] and s["replacement"] != "without":
        raise ConfigError("shuffle.in_place: requires shuffle.replacement = 'without'")

    trn = raw.get("trainer", {})
    t = cfg["trainer"]
    t["epochs"] = _need(trn, "epochs", int, "trainer", default=1)
    if t["epochs"] < 0:
        raise ConfigError("trainer.epochs: must be >= 0")
    t["mu"] = float(_need(trn, "mu", float, "trainer", default=1.0))
    a = trn.get("a", "auto")
    if not (a == "auto" or isinstance(a, (int, float))):
        raise ConfigError(f"trainer.a: expected 'auto' or a number, got {a!r}")
    t["a"] = a if a == "auto" else float(a)
    x0 = trn.get("x0", 0.0)
    if isinstance(x0, (int, float)):
        t["x0"] = float(x0)
    elif isinstance(x0, list) and all(isinstance(v, (int, float)) for v in x0):
        t["x0"] = [float(v) for v in x0]
    else:
        raise ConfigError(f"trainer.x0: expected number or list of numbers, got {x0!r}")
    t["domain_radius"] = float(_need(trn, "domain_radius", float, "trainer", default=0.0))
    strategies = trn.get("strategies", [s["strategy"]])
    if not (isinstance(strategies, list) and strategies and all(isinstance(v, str) for v in strategies)):
        raise ConfigError("trainer.strategies: expected a non-empty list of strategy names")
    for name in strategies:
        if name not in STRATEGY_CHOICES:
            raise ConfigError(f"trainer.strategies: unknown strategy {name!r}")
    t["strategies"] = strategies

    run = raw.get("run", {})
    r = cfg["run"]
    r["trials"] = _need(run, "trials", int, "run", default=1)
    r["seed"] = _need(run, "seed", int, "run", default=0)
    if trials_override is not None:
        r["trials"] = int(trials_override)
    if seed_override is not None:
        r["seed"] = int(seed_override)
    if r["trials"] < 1:
        raise ConfigError("run.trials: must be >= 1")
    return cfg


def config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]


# -- shared builders ---------------------------------------------------

def _build_store(cfg: dict):
    p = cfg["problem"]
    if p["kind"] == "ladder":
        return obj.make_ladder_dataset(p["N"], p["b"], p["d"])
    spec = obj.HomogeneitySpec(p["cluster_spread"], p["within_spread"])
    return obj.make_clustered_dataset(p["N"], p["b"], p["d"], spec, p["seed"])


def _shuffle_cfg(cfg: dict, seed: int, replacement=None) -> shf.ShuffleConfig:
    s = cfg["shuffle"]
    return shf.ShuffleConfig(
        n=s["n"],
        replacement=replacement if replacement is not None else s["replacement"],
        in_place=s["in_place"],
        offline_passes=s["offline_passes"],
        seed=seed,
    )


def _x0(cfg: dict, d: int) -> np.ndarray:
    x0 = cfg["trainer"]["x0"]
    if isinstance(x0, float):
        return np.full(d, x0)
    if len(x0) != d:
        raise ConfigError(f"trainer.x0: has {len(x0)} entries, problem dimension is {d}")
    return np.asarray(x0)


def _resolve_a(cfg: dict, problem) -> float:
    t = cfg["trainer"]
    if t["a"] != "auto":
        return t["a"]
    radius = t["domain_radius"]
    if radius <= 0:
        raise ConfigError("trainer.domain_radius: must be positive when trainer.a = 'auto'")
    consts = obj.constants(problem, radius)
    return tr.a_lower_bound(consts.L, consts.G, consts.L_H, consts.mu)


def _make_stream(store, strategy: str, cfg: dict, seed: int, round_items=None, replacement=None):
    """Run one strategy's pipeline; returns (online store, stream)."""
    n = cfg["shuffle"]["n"]
    epochs = cfg["trainer"]["epochs"]
    if strategy == "corgipile":
        return store, shf.corgipile_stream(store, n, epochs, seed)
    if strategy == "corgi2":
        return shf.corgi2_stream(store, _shuffle_cfg(cfg, seed, replacement), epochs, seed)
    stream = shf.baseline_streams(store, strategy, epochs, seed, round_items=round_items)
    return store, stream


def _mean_result(runs: list) -> tr.TrainResult:
    """Seed-averaged convergence curves for the rate summary."""
    first = runs[0]
    return tr.TrainResult(
        final_x=first.final_x,
        weighted_avg_x=first.weighted_avg_x,
        per_round_suboptimality=np.mean([r.per_round_suboptimality for r in runs], axis=0),
        per_round_avg_suboptimality=np.mean([r.per_round_avg_suboptimality for r in runs], axis=0),
        per_round_eta=first.per_round_eta,
        per_round_examples_seen=first.per_round_examples_seen,
        ledger_snapshot=first.ledger_snapshot,
        max_distance_to_center=max(r.max_distance_to_center for r in runs),
    )


# -- output helpers ----------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _prepare_out(out: str | Path, force: bool) -> Path:
    out = Path(out)
    if out.exists() and not out.is_dir():
        raise ConfigError(f"output path {out} exists and is not a directory")
    if out.is_dir() and any(out.iterdir()) and not force:
        raise ConfigError(f"output directory {out} exists and is not empty; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_summary(out: Path, lines: list[str]) -> None:
    (out / "summary.txt").write_text("\n".join(lines) + "\n")


# -- subcommands -------------------------------------------------------

def cmd_gen(cfg: dict, out: Path) -> int:
    store = _build_store(cfg)
    problem = obj.problem_from_store(store)
    h = st.measure_h_D(store, problem)
    serialize_store(store, out / "dataset")
    chash = config_hash(cfg)
    _write_csv(
        out / "gen.csv",
        ["config_hash", "N", "b", "d", "m", "sigma2", "h_D"],
        [[chash, store.N, store.b, store.d, store.m, problem.sigma2, h]],
    )
    _write_summary(out, [
        f"dataset written to {out / 'dataset'}",
        f"N={store.N} b={store.b} d={store.d} m={store.m}",
        f"sigma2={problem.sigma2!r} h_D={h!r}",
        f"config_hash={chash}",
    ])
    return EXIT_OK


def cmd_shuffle(cfg: dict, out: Path) -> int:
    seed = cfg["run"]["seed"]
    strategy = cfg["shuffle"]["strategy"]
    store = _build_store(cfg)
    online_store, stream = _make_stream(store, strategy, cfg, seed)
    # in-place mode rebuilds `store` itself, so identity alone is not enough
    rebuilt = online_store is not store or (
        strategy == "corgi2" and cfg["shuffle"]["in_place"] and cfg["shuffle"]["offline_passes"] > 0
    )
    if rebuilt:
        serialize_store(online_store, out / "shuffled")
    snap = stream.ledger.snapshot()
    chash = config_hash(cfg)
    _write_csv(
        out / "ledger.csv",
        ["config_hash", "strategy", "seed", "m", "b", "n", "epochs", "offline_passes",
         "offline_reads", "offline_writes", "online_reads", "online_writes", "total"],
        [[chash, strategy, seed, store.m, store.b, cfg["shuffle"]["n"], cfg["trainer"]["epochs"],
          cfg["shuffle"]["offline_passes"], snap["offline_reads"], snap["offline_writes"],
          snap["online_reads"], snap["online_writes"], snap["total"]]],
    )
    lines = [
        f"strategy={strategy} seed={seed}",
        f"stream: {len(stream)} items in {stream.num_rounds} rounds",
        f"ledger: {snap}",
        f"config_hash={chash}",
    ]
    if rebuilt:
        lines.insert(1, f"shuffled store written to {out / 'shuffled'}")
    _write_summary(out, lines)
    return EXIT_OK


def cmd_train(cfg: dict, out: Path) -> int:
    chash = config_hash(cfg)
    root_seed = cfg["run"]["seed"]
    trials = cfg["run"]["trials"]
    strategies = cfg["trainer"]["strategies"]
    base_store = _build_store(cfg)
    base_problem = obj.problem_from_store(base_store)
    a = _resolve_a(cfg, base_problem)
    n, b = cfg["shuffle"]["n"], cfg["problem"]["b"]
    round_items = n * b

    rows = []
    per_strategy = {}
    for strategy in strategies:
        runs = []
        for k in range(trials):
            seed = rngmod.derive_seed(root_seed, rngmod.TRAINER, k)
            store = _build_store(cfg)
            online_store, stream = _make_stream(store, strategy, cfg, seed, round_items=round_items)
            # convergence of the online stage is measured against the
            # dataset that stage actually iterates; in-place runs keep
            # the base objective because the multiset is preserved
            problem = base_problem if online_store is store else obj.problem_from_store(online_store)
            sgd = tr.SGDConfig(n=n, b=b, mu=cfg["trainer"]["mu"], a=a, x0=_x0(cfg, store.d))
            result = tr.run_sgd(stream, problem, sgd)
            run_id = f"{strategy}-{k}"
            for t in range(result.rounds):
                rows.append([
                    chash, run_id, strategy, seed, t,
                    int(result.per_round_examples_seen[t]),
                    result.per_round_eta[t],
                    result.per_round_suboptimality[t],
                    result.per_round_avg_suboptimality[t],
                ])
            runs.append(result)
        per_strategy[strategy] = runs

    _write_csv(
        out / "rounds.csv",
        ["config_hash", "run_id", "strategy", "seed", "round", "T_seen", "eta",
         "suboptimality", "suboptimality_of_weighted_avg"],
        rows,
    )
    lines = [f"strategies={strategies} trials={trials} a={a!r}", f"config_hash={chash}"]
    if len(per_strategy) >= 2:
        mean_results = {name: _mean_result(runs) for name, runs in per_strategy.items()}
        h = st.measure_h_D(base_store, base_problem)
        report = tr.rate_report(
            mean_results, base_problem,
            N=cfg["problem"]["N"], n=n, b=b, h_D=h,
        )
        lines += [
            f"alpha={report.alpha!r} beta={report.beta!r} gamma={report.gamma!r}",
            f"h_D={report.h_D!r} h_prime={report.h_prime!r} sigma2={report.sigma2!r}",
            "final-decade slopes of weighted-average suboptimality:",
        ]
        lines += [f"  {name}: {slope!r}" for name, slope in sorted(report.slopes.items())]
        lines += [
            "leading 1/T coefficients (times 1/T):",
            f"  corgipile: {report.leading_coefficients['corgipile']!r}",
            f"  corgi2:    {report.leading_coefficients['corgi2']!r}",
        ]
    _write_summary(out, lines)
    return EXIT_OK


def cmd_stats(cfg: dict, out: Path) -> int:
    chash = config_hash(cfg)
    seed = cfg["run"]["seed"]
    trials = max(cfg["run"]["trials"], 2)
    store = _build_store(cfg)
    problem = obj.problem_from_store(store)
    report = st.monte_carlo_offline_variance(store, problem, _shuffle_cfg(cfg, seed), trials, seed)
    bound = report.predicted_h_prime * report.sigma2 / store.b if not report.degenerate else float("nan")
    _write_csv(
        out / "stats.csv",
        ["config_hash", "N", "b", "n", "replacement", "offline_passes", "trials",
         "sigma2", "blockwise_variance", "h_D", "predicted_h_prime", "predicted_bound",
         "mc_mean", "mc_halfwidth_95", "degenerate"],
        [[chash, store.N, store.b, cfg["shuffle"]["n"], cfg["shuffle"]["replacement"],
          cfg["shuffle"]["offline_passes"], report.trials, report.sigma2,
          report.blockwise_variance, report.h_D, report.predicted_h_prime, bound,
          report.mc_mean, report.mc_halfwidth_95, report.degenerate]],
    )
    _write_summary(out, [
        f"trials={report.trials} sigma2={report.sigma2!r} h_D={report.h_D!r}",
        f"predicted h'={report.predicted_h_prime!r} bound={bound!r}",
        f"mc_mean={report.mc_mean!r} +- {report.mc_halfwidth_95!r} (95%)",
        f"config_hash={chash}",
    ])
    return EXIT_OK


def cmd_uniformity(cfg: dict, out: Path) -> int:
    chash = config_hash(cfg)
    root_seed = cfg["run"]["seed"]
    trials = cfg["run"]["trials"]
    strategies = cfg["trainer"]["strategies"]
    rows = []
    for strategy in strategies:
        for k in range(trials):
            seed = rngmod.derive_seed(root_seed, rngmod.TRIAL, k)
            store = _build_store(cfg)
            # a permutation requires multiset preservation, so the
            # offline pass runs in without-replacement mode here
            _, stream = _make_stream(store, strategy, cfg, seed, replacement="without")
            perm = stream.epoch_origin_indices(0)
            report = st.uniformity_metrics(perm)
            rows.append([chash, strategy, seed, len(perm),
                         report.mean_abs_displacement, report.spearman_to_identity,
                         report.position_ks])
    _write_csv(
        out / "uniformity.csv",
        ["config_hash", "strategy", "seed", "m", "mean_abs_displacement",
         "spearman_to_identity", "position_ks"],
        rows,
    )
    lines = [f"strategies={strategies} trials={trials}", f"config_hash={chash}"]
    for strategy in strategies:
        vals = [abs(r[5]) for r in rows if r[1] == strategy]
        lines.append(f"mean |spearman| {strategy}: {sum(vals) / len(vals)!r}")
    _write_summary(out, lines)
    return EXIT_OK


def cmd_complexity(cfg: dict, out: Path) -> int:
    chash = config_hash(cfg)
    seed = cfg["run"]["seed"]
    epochs = cfg["trainer"]["epochs"]
    passes = cfg["shuffle"]["offline_passes"]
    rows = []
    all_match = True
    for strategy, runner in (
        ("random_access", "full_shuffle"),
        ("shuffle_once", "shuffle_once"),
        ("corgipile", "corgipile"),
        ("corgi2", "corgi2"),
    ):
        store = _build_store(cfg)
        _, stream = _make_stream(store, runner, cfg, seed)
        prediction = cx.predict_queries(strategy, store.m, store.b, epochs,
                                        offline_passes=passes if strategy == "corgi2" else 1)
        report = cx.reconcile(prediction, stream.ledger)
        all_match &= report.match
        rows.append([chash, strategy, store.m, store.b, epochs,
                     report.expected_offline, report.expected_online,
                     report.observed_offline, report.observed_online, report.match])
    _write_csv(
        out / "complexity.csv",
        ["config_hash", "strategy", "m", "b", "T", "predicted_offline", "predicted_online",
         "measured_offline", "measured_online", "match"],
        rows,
    )
    _write_summary(out, [
        f"reconciled 4 strategies at epochs={epochs}",
        f"all_match={all_match}",
        f"config_hash={chash}",
    ])
    if not all_match:
        print("reconciliation failure:", file=sys.stderr)
        for row in rows:
            if not row[-1]:
                print(f"  {row[1]}: expected {row[5]}/{row[6]}, observed {row[7]}/{row[8]}",
                      file=sys.stderr)
        return EXIT_CONTRACT
    return EXIT_OK


COMMANDS = {
    "gen": cmd_gen,
    "shuffle": cmd_shuffle,
    "train": cmd_train,
    "stats": cmd_stats,
    "uniformity": cmd_uniformity,
    "complexity": cmd_complexity,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corgi2",
        description="Two-phase partial shuffling experiments with exact query accounting.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("gen", "synthesize a dataset and write it in block format"),
        ("shuffle", "run the configured shuffle strategy and record its ledger"),
        ("train", "run SGD sweeps and emit per-round convergence CSV"),
        ("stats", "Monte Carlo blockwise-variance report for the offline pass"),
        ("uniformity", "permutation uniformity metrics per strategy"),
        ("complexity", "reconcile measured ledgers against closed-form query counts"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to TOML experiment config")
        cmd.add_argument("--seed", type=int, default=None, help="override run.seed")
        cmd.add_argument("--trials", type=int, default=None, help="override run.trials")
        cmd.add_argument("--out", default=None,
                         help="output directory (default: $CORGI2_OUT or ./corgi2-out/<command>)")
        cmd.add_argument("--force", action="store_true", help="allow writing into a non-empty directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed, trials_override=args.trials)
        out_root = args.out or os.environ.get("CORGI2_OUT") or str(Path("corgi2-out") / args.command)
        out = _prepare_out(out_root, args.force)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except Corgi2Error as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONTRACT


if __name__ == "__main__":
    sys.exit(main())
