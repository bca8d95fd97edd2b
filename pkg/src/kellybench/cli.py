"""
Command-line entry point
========================

Subcommands::

    prepare     parse source files, engineer features, write split files
    train       train one agent (q | ddpg | buyhold) on the train split
    gridsearch  Cartesian hyperparameter sweep selected on validation log utility
    evaluate    backtest checkpoints on a split; write reports, comparison, figures
    report      rebuild a comparison and figures from existing report files

Every command writes a ``manifest.json`` capturing the fully resolved
configuration; its hash is embedded in every output file, and a rerun
with the same manifest and seed reproduces every output byte.  Exit
codes: 0 success, 1 validation error, 2 data error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import backtest, data, plots, qlearn
from .ddpg import DdpgAgent, DdpgConfig
from .env import EnvConfig, MarketEnv

CURVE_FILE_TAG = "kellybench-curve v1"
POLICY_FILE_TAG = "kellybench-policy v1"

ALGO_NAMES = {"q": "q-learning", "ddpg": "ddpg-tide", "buyhold": "buy-and-hold"}

HYPER_KEYS = {
    "q": ("alpha", "alpha_decay", "gamma_td", "epsilon_start", "epsilon_end",
          "epsilon_decay", "episodes", "k"),
    "ddpg": ("gamma_td", "tau", "actor_lr", "critic_lr", "batch_size", "capacity",
             "n_step", "episodes", "latent_width", "critic_hidden",
             "ou_theta", "ou_sigma"),
    "buyhold": (),
}

DEFAULTS = {
    "q": {"alpha": 0.1, "alpha_decay": 0.0, "gamma_td": 0.9, "epsilon_start": 1.0,
          "epsilon_end": 0.05, "epsilon_decay": 0.97, "episodes": 300, "k": 50},
    "ddpg": {"gamma_td": 0.99, "tau": 0.005, "actor_lr": 1e-4, "critic_lr": 1e-3,
             "batch_size": 64, "capacity": 100_000, "n_step": 3, "episodes": 50,
             "latent_width": 64, "critic_hidden": 64, "ou_theta": 0.15,
             "ou_sigma": 0.2},
    "buyhold": {},
}


class ConfigError(Exception):
    """Invalid configuration; reported before any compute (exit code 1)."""


# ---------------------------------------------------------------------------
# configuration and manifests

def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    file = Path(path)
    if not file.exists():
        raise ConfigError(f"config file not found: {file}")
    try:
        loaded = json.loads(file.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{file}: invalid JSON ({exc})") from None
    if not isinstance(loaded, dict):
        raise ConfigError(f"{file}: top level must be an object")
    return loaded


def resolve_config(algo: str, file_config: dict, seed: int | None,
                   leverage: bool | None, allow_lists: bool = False) -> dict:
    """Merge defaults <- config file <- CLI flags; reject unknown keys.

    A ``manifest`` key is accepted and ignored: emitted config files
    (best_config.json) carry their producing manifest hash there.
    """
    if algo not in ALGO_NAMES:
        raise ConfigError(f"unknown algorithm {algo!r}; choose from {sorted(ALGO_NAMES)}")
    file_config = {k: v for k, v in file_config.items() if k != "manifest"}
    allowed = set(HYPER_KEYS[algo]) | {"algo", "seed", "leverage"}
    unknown = set(file_config) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys for {algo}: {sorted(unknown)}")
    config = {"algo": algo, "seed": 0, "leverage": False, **DEFAULTS[algo]}
    config.update(file_config)
    if seed is not None:
        config["seed"] = seed
    if leverage is not None:
        config["leverage"] = leverage
    for key, value in config.items():
        if isinstance(value, list):
            if not allow_lists:
                raise ConfigError(f"{key}: list values are only valid in gridsearch")
            if not value:
                raise ConfigError(f"{key}: empty grid")
    if config.get("algo") != algo:
        raise ConfigError(f"config algo {config['algo']!r} does not match --algo {algo!r}")
    return config


def manifest_for(command: str, config: dict, inputs: dict) -> tuple[dict, str]:
    manifest = {"tool": "kellybench 0.1.0", "command": command,
                "config": config, "inputs": inputs}
    canonical = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(canonical.encode()).hexdigest()[:12]
    manifest["hash"] = digest
    return manifest, digest


def write_manifest(out_dir: Path, manifest: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def read_manifest(run_dir: Path) -> dict:
    path = run_dir / "manifest.json"
    if not path.exists():
        raise data.DataError(f"missing manifest: {path}")
    return json.loads(path.read_text())


def _write_curve(path: Path, columns: dict[str, list[float]], manifest: str) -> None:
    lines = [f"# {CURVE_FILE_TAG}", f"# manifest {manifest}"]
    names = list(columns)
    lines.append(",".join(["episode"] + names))
    for i in range(len(columns[names[0]])):
        lines.append(",".join([str(i)] + [repr(float(columns[n][i])) for n in names]))
    path.write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# training helpers (shared by train and gridsearch)

def _env_config(config: dict) -> EnvConfig:
    return EnvConfig(max_weight=1.5 if config["leverage"] else 1.0)


def _check_hyper_types(algo: str, config: dict) -> None:
    for key in HYPER_KEYS[algo] + ("seed",):
        if isinstance(config[key], bool) or not isinstance(config[key], (int, float)):
            raise ConfigError(f"{key}: expected a number, got {config[key]!r}")


def train_q(train_split: data.DatasetSplit, config: dict):
    qconfig = qlearn.QConfig(
        alpha=config["alpha"], alpha_decay=config["alpha_decay"],
        gamma_td=config["gamma_td"], epsilon_start=config["epsilon_start"],
        epsilon_end=config["epsilon_end"], epsilon_decay=config["epsilon_decay"],
        episodes=int(config["episodes"]), seed=int(config["seed"]),
    )
    centroids = qlearn.fit_kmeans(train_split.feature_matrix(),
                                  k=int(config["k"]), seed=int(config["seed"]))
    state_map = qlearn.ClusterStateMap(centroids)
    grid = qlearn.make_action_grid(config["leverage"])
    env = MarketEnv(train_split, _env_config(config))
    table, curve = qlearn.train(env, state_map, grid, qconfig)
    return centroids, table, grid, {"reward": curve}


def train_ddpg(train_split: data.DatasetSplit, config: dict):
    dconfig = DdpgConfig(
        gamma_td=config["gamma_td"], tau=config["tau"],
        actor_lr=config["actor_lr"], critic_lr=config["critic_lr"],
        batch_size=int(config["batch_size"]), capacity=int(config["capacity"]),
        n_step=int(config["n_step"]), episodes=int(config["episodes"]),
        seed=int(config["seed"]), max_weight=1.5 if config["leverage"] else 1.0,
        latent_width=int(config["latent_width"]),
        critic_hidden=int(config["critic_hidden"]),
        ou_theta=config["ou_theta"], ou_sigma=config["ou_sigma"],
    )
    env = MarketEnv(train_split, _env_config(config))
    agent = DdpgAgent(dconfig, obs_dim=env.reset().flat().size)
    curves = agent.train(env)
    return agent, curves


def policy_name(config: dict) -> str:
    return ALGO_NAMES[config["algo"]] + ("+lev" if config["leverage"] else "")


def trained_policy(algo: str, artifacts, config: dict):
    """Deterministic evaluation policy from in-memory training artifacts."""
    if algo == "q":
        centroids, table, grid, _ = artifacts
        return qlearn.greedy_policy(table, qlearn.ClusterStateMap(centroids), grid)
    if algo == "ddpg":
        agent, _ = artifacts
        return agent.policy()
    return backtest.buy_and_hold_policy


def _train_artifacts(algo: str, train_split: data.DatasetSplit, config: dict):
    _check_hyper_types(algo, config)
    if algo == "q":
        return train_q(train_split, config)
    if algo == "ddpg":
        return train_ddpg(train_split, config)
    return None  # buyhold trains nothing


# ---------------------------------------------------------------------------
# commands

def cmd_prepare(args) -> int:
    config = {
        "factors_monthly": args.factors_monthly, "factors_daily": args.factors_daily,
        "predictors": args.predictors, "payout": args.payout,
        "payout_column": args.payout_column,
    }
    manifest, digest = manifest_for("prepare", config, {})
    splits = data.prepare_dataset(args.factors_monthly, args.factors_daily,
                                  args.predictors, args.payout,
                                  payout_column=args.payout_column)
    out_dir = Path(args.out)
    data.save_dataset(out_dir, splits, manifest=digest)
    write_manifest(out_dir, manifest)
    for name, split in splits.items():
        print(f"{name}: {len(split.records)} months "
              f"({split.records[0].date}..{split.records[-1].date})")
    return 0


def cmd_train(args) -> int:
    config = resolve_config(args.algo, _load_config_file(args.config),
                            args.seed, args.leverage)
    _check_hyper_types(args.algo, config)  # fail fast, before loading anything
    manifest, digest = manifest_for("train", config, {"data": args.data})
    out_dir = Path(args.out)
    dataset = data.load_dataset(args.data, names=("train",))
    artifacts = _train_artifacts(args.algo, dataset["train"], config)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.algo == "q":
        centroids, table, grid, curves = artifacts
        qlearn.save_centroids(out_dir / "centroids.txt", centroids, manifest=digest)
        qlearn.save_qtable(out_dir / "qtable.txt", table, grid, manifest=digest)
        _write_curve(out_dir / "learning_curve.csv", curves, digest)
    elif args.algo == "ddpg":
        agent, curves = artifacts
        agent.save(out_dir / "checkpoint.txt", manifest=digest)
        _write_curve(out_dir / "learning_curve.csv", curves, digest)
    else:
        (out_dir / "policy.txt").write_text(
            f"# {POLICY_FILE_TAG}\n# manifest {digest}\nalgo buyhold\nweight 1.0\n")
    write_manifest(out_dir, manifest)
    print(f"trained {policy_name(config)} -> {out_dir}")
    return 0


def _gridsearch_one(payload) -> float:
    """Worker: train one combo and score validation log utility."""
    combo, data_dir = payload
    dataset = data.load_dataset(data_dir, names=("train", "validation"))
    artifacts = _train_artifacts(combo["algo"], dataset["train"], combo)
    policy = trained_policy(combo["algo"], artifacts, combo)
    report = backtest.run_backtest(policy, dataset["validation"],
                                   env_config=_env_config(combo),
                                   name=policy_name(combo))
    return report.log_utility


def expand_grid(config: dict) -> list[dict]:
    """Cartesian product over list-valued keys, enumerated in resolved-config
    key order; ties in the selection metric go to the earliest combo."""
    grid_keys = [k for k, v in config.items() if isinstance(v, list)]
    if not grid_keys:
        return [dict(config)]
    combos = []
    for values in itertools.product(*(config[k] for k in grid_keys)):
        combo = dict(config)
        combo.update(dict(zip(grid_keys, values)))
        combos.append(combo)
    return combos


def cmd_gridsearch(args) -> int:
    config = resolve_config(args.algo, _load_config_file(args.config),
                            args.seed, args.leverage, allow_lists=True)
    combos = expand_grid(config)
    for combo in combos:
        _check_hyper_types(args.algo, combo)  # the whole grid, before any run
    manifest, digest = manifest_for("gridsearch", config, {"data": args.data})
    payloads = [(combo, args.data) for combo in combos]
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            scores = list(pool.map(_gridsearch_one, payloads))
    else:
        scores = [_gridsearch_one(p) for p in payloads]
    best_index = int(np.argmax(scores))  # argmax keeps the earliest tie

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    grid_keys = [k for k, v in config.items() if isinstance(v, list)] or ["seed"]
    lines = ["# kellybench-grid v1", f"# manifest {digest}",
             ",".join(grid_keys + ["validation_log_utility", "selected"])]
    for i, (combo, score) in enumerate(zip(combos, scores)):
        cells = [json.dumps(combo[k]) for k in grid_keys]
        lines.append(",".join(cells + [repr(float(score)), str(int(i == best_index))]))
    (out_dir / "grid_results.csv").write_text("\n".join(lines) + "\n")
    best_config = {**combos[best_index], "manifest": digest}
    (out_dir / "best_config.json").write_text(
        json.dumps(best_config, sort_keys=True, indent=2) + "\n")
    write_manifest(out_dir, manifest)
    print(f"gridsearch over {len(combos)} configs; "
          f"best validation log utility {scores[best_index]:.6f}")
    print(f"best config -> {out_dir / 'best_config.json'}")
    return 0


def load_run_policy(run_dir: str | Path):
    """Rebuild the deterministic policy of a finished training run."""
    run_dir = Path(run_dir)
    manifest = read_manifest(run_dir)
    config = manifest["config"]
    algo = config["algo"]
    if algo == "q":
        centroids = qlearn.load_centroids(run_dir / "centroids.txt")
        if centroids.vectors.shape[1] != data.N_FEATURES:
            raise data.SchemaError(
                f"{run_dir}: centroids have {centroids.vectors.shape[1]} dims, "
                f"splits carry {data.N_FEATURES} features")
        table, grid = qlearn.load_qtable(run_dir / "qtable.txt")
        policy = qlearn.greedy_policy(table, qlearn.ClusterStateMap(centroids), grid)
    elif algo == "ddpg":
        dconfig = DdpgConfig(**{k: config[k] for k in HYPER_KEYS["ddpg"]},
                             seed=config["seed"],
                             max_weight=1.5 if config["leverage"] else 1.0)
        agent = DdpgAgent.load(run_dir / "checkpoint.txt", dconfig)
        policy = agent.policy()
    elif algo == "buyhold":
        policy = backtest.buy_and_hold_policy
    else:
        raise data.SchemaError(f"{run_dir}: unknown algo {algo!r} in manifest")
    return policy_name(config), policy, _env_config(config)


def cmd_evaluate(args) -> int:
    config = {"checkpoints": [str(c) for c in args.checkpoint], "split": args.split,
              "annualize_sharpe": args.annualize_sharpe}
    manifest, digest = manifest_for("evaluate", config, {"data": args.data})
    dataset = data.load_dataset(args.data, names=(args.split,))
    split = dataset[args.split]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = []
    for run in args.checkpoint:
        name, policy, env_config = load_run_policy(run)
        report = backtest.run_backtest(policy, split, env_config=env_config,
                                       name=name,
                                       annualize_sharpe=args.annualize_sharpe)
        backtest.save_report(out_dir / f"report_{name}_{args.split}.csv",
                             report, manifest=digest)
        reports.append(report)
        print(f"{name:>18} {args.split}: LU={report.log_utility:.4f} "
              f"PV={report.portfolio_value:.4f} "
              f"avgSR={report.average_rolling_sharpe:.4f}")
    if len(reports) >= 2:
        comparison = backtest.compare(reports)
        backtest.save_comparison(out_dir / f"comparison_{args.split}.csv",
                                 comparison, manifest=digest)
        plots.comparison_figures(comparison, out_dir, manifest=digest)
    write_manifest(out_dir, manifest)
    return 0


def cmd_report(args) -> int:
    config = {"reports": [str(r) for r in args.reports]}
    manifest, digest = manifest_for("report", config, {})
    reports = [backtest.load_report(path) for path in args.reports]
    comparison = backtest.compare(reports)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    backtest.save_comparison(out_dir / f"comparison_{comparison.split_name}.csv",
                             comparison, manifest=digest)
    plots.comparison_figures(comparison, out_dir, manifest=digest)
    write_manifest(out_dir, manifest)
    print(f"comparison of {len(reports)} reports -> {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kellybench",
                                     description=__doc__.splitlines()[1])
    sub = parser.add_subparsers(dest="command", required=True)

    prepare = sub.add_parser("prepare", help="build the aligned split files")
    prepare.add_argument("--factors-monthly", required=True)
    prepare.add_argument("--factors-daily", required=True)
    prepare.add_argument("--predictors", required=True)
    prepare.add_argument("--payout", required=True)
    prepare.add_argument("--payout-column", default=None)
    prepare.add_argument("--out", required=True)
    prepare.set_defaults(handler=cmd_prepare)

    def training_args(p):
        p.add_argument("--algo", required=True, choices=sorted(ALGO_NAMES))
        p.add_argument("--data", required=True, help="directory from prepare")
        p.add_argument("--out", required=True)
        p.add_argument("--config", default=None, help="JSON hyperparameter file")
        p.add_argument("--seed", type=int, default=None)
        lev = p.add_mutually_exclusive_group()
        lev.add_argument("--leverage", dest="leverage", action="store_true", default=None)
        lev.add_argument("--no-leverage", dest="leverage", action="store_false")

    train = sub.add_parser("train", help="train one agent on the train split")
    training_args(train)
    train.set_defaults(handler=cmd_train)

    grid = sub.add_parser("gridsearch",
                          help="sweep hyperparameters, select on validation log utility")
    training_args(grid)
    grid.add_argument("--workers", type=int, default=1)
    grid.set_defaults(handler=cmd_gridsearch)

    evaluate = sub.add_parser("evaluate", help="backtest checkpoints on a split")
    evaluate.add_argument("--checkpoint", action="append", required=True,
                          help="training run directory (repeatable)")
    evaluate.add_argument("--data", required=True)
    evaluate.add_argument("--split", default="test",
                          choices=("train", "validation", "test"))
    evaluate.add_argument("--annualize-sharpe", action="store_true")
    evaluate.add_argument("--out", required=True)
    evaluate.set_defaults(handler=cmd_evaluate)

    report = sub.add_parser("report", help="comparison and figures from report files")
    report.add_argument("--reports", nargs="+", required=True)
    report.add_argument("--out", required=True)
    report.set_defaults(handler=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if not exc.code else 1
    try:
        return args.handler(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except data.DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 3
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
