"""Command-line front end.

Subcommands: profile | cost | optimize | oracle | retrieval-sim | privacy.
All numeric output uses shortest round-trip decimal formatting and every
command is deterministic given the config bytes and seed, so re-runs
produce byte-identical files.

Exit codes: 0 on success, 2 for configuration or input errors, 3 for
runtime infeasibility (an unusable link). Diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor

from .config import ScenarioConfig, load_config
from .errors import ConfigError, SplitCVLError, ZeroRateError
from .nnprofile import device_flops, intermediate_bytes
from .retrieval import (
    FusionStrategy,
    METRIC_NAMES,
    evaluate_cell,
    format_metrics_table,
    synth_gallery,
)
from .rlopt.agents import train_agent
from .rlopt.env import PartitionEnv
from .trico import (
    brute_force_optimal,
    decision_effect,
    format_conf_table,
    format_cost_table,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3


def _write_output(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _require_scenario(config: ScenarioConfig):
    if config.scenario is None:
        raise ConfigError("this command needs devices/channels/model sections")
    return config.scenario


def _decision_text(scenario, decision) -> str:
    return ",".join(
        f"{dev.id}:{scenario.profile.cut_name(cut)}"
        for dev, cut in zip(scenario.devices, decision.cuts)
    )


def cmd_profile(config: ScenarioConfig, args) -> int:
    if config.profile is None:
        raise ConfigError("profile command needs a 'model' section")
    profile = config.profile
    lines = ["cut_name,device_flops,intermediate_bytes"]
    for c in range(profile.num_candidates):
        lines.append(
            f"{profile.cut_name(c)},{device_flops(profile, c)},"
            f"{intermediate_bytes(profile, c)}"
        )
    _write_output("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_cost(config: ScenarioConfig, args) -> int:
    scenario = _require_scenario(config)
    _write_output(format_cost_table(scenario), args.out)
    return EXIT_OK


def cmd_oracle(config: ScenarioConfig, args) -> int:
    scenario = _require_scenario(config)
    decision, effect = brute_force_optimal(scenario)
    text = (
        f"decision={_decision_text(scenario, decision)}\n"
        f"effect={effect!r}\n"
    )
    _write_output(text, args.out)
    return EXIT_OK


def cmd_optimize(config: ScenarioConfig, args) -> int:
    scenario = _require_scenario(config)
    opt = config.optimizer
    seed = args.seed if args.seed is not None else opt.seed
    env = PartitionEnv(
        scenario,
        bandwidth_bins=opt.bandwidth_bins,
        snr_bins=opt.snr_bins,
        battery_bins=opt.battery_bins,
        horizon=opt.horizon,
    )
    policy, trace = train_agent(opt.agent, env, opt.steps, hyper=opt.hyper, seed=seed)
    _write_output(trace.to_csv(), args.out)

    decision = env.decode_action(policy.action(0))
    effect = decision_effect(scenario, decision)
    _, oracle_effect = brute_force_optimal(scenario)
    gap = (effect - oracle_effect) / oracle_effect if oracle_effect > 0 else effect
    summary = [
        f"agent={opt.agent}",
        f"steps={opt.steps}",
        f"seed={seed}",
        f"trained={'yes' if opt.steps > 0 else 'no'}",
        f"decision={_decision_text(scenario, decision)}",
        f"effect={effect!r}",
        f"oracle_effect={oracle_effect!r}",
        f"gap={gap!r}",
    ]
    if len(trace) > 0:
        summary.append(f"final_moving_avg={trace.final_moving_avg!r}")
    sys.stdout.write("\n".join(summary) + "\n")
    return EXIT_OK


def _retrieval_seed_worker(task) -> list[dict]:
    """Per-seed metric grid; top-level so process pools can pickle it."""
    locations, dim, noise, images_per_view, fusion, seed = task
    gallery, pools = synth_gallery(
        locations, dim, noise, seed=seed, images_per_view=images_per_view
    )
    strategy = FusionStrategy(fusion)
    rows = []
    for u in range(1, images_per_view + 1):
        for g in range(1, images_per_view + 1):
            row = {"uav_images": u, "ground_images": g}
            row.update(evaluate_cell(gallery, pools, u, g, strategy))
            rows.append(row)
    return rows


def cmd_retrieval_sim(config: ScenarioConfig, args) -> int:
    ret = config.retrieval
    base_seed = args.seed if args.seed is not None else ret.seed
    tasks = [
        (
            ret.locations, ret.dim, ret.view_noise, ret.images_per_view,
            ret.fusion, base_seed + i,
        )
        for i in range(ret.seeds)
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            per_seed = list(pool.map(_retrieval_seed_worker, tasks))
    else:
        per_seed = [_retrieval_seed_worker(task) for task in tasks]

    rows = []
    for i in range(len(per_seed[0])):
        row = {
            "uav_images": per_seed[0][i]["uav_images"],
            "ground_images": per_seed[0][i]["ground_images"],
        }
        for name in METRIC_NAMES:
            row[name] = sum(seed_rows[i][name] for seed_rows in per_seed) / len(per_seed)
        rows.append(row)
    _write_output(format_metrics_table(rows), args.out)
    return EXIT_OK


def cmd_privacy(args) -> int:
    from .privmetrics import build_conf_table, load_corpus_dir

    corpus = load_corpus_dir(args.corpus_dir)
    table = build_conf_table(corpus)
    names = [name for name, _ in corpus]
    _write_output(format_conf_table(table, names), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splitcvl",
        description=(
            "Cost-model simulator and optimizer for split-inference "
            "cross-view localization"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="scenario YAML path")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's seed")
        p.add_argument("--out", default=None,
                       help="output file (default: stdout)")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel workers across seeds (never within a run)")

    add_common(sub.add_parser("profile", help="per-cut device FLOPs and bytes"))
    add_common(sub.add_parser("cost", help="per-device, per-cut cost table"))
    add_common(sub.add_parser("optimize", help="train an agent, write its trace"))
    add_common(sub.add_parser("oracle", help="exhaustive optimal decision"))
    add_common(sub.add_parser("retrieval-sim", help="synthetic matching grid"))
    privacy = sub.add_parser("privacy", help="confidentiality table from a corpus")
    privacy.add_argument("corpus_dir", help="reconstruction corpus directory")
    add_common(privacy, needs_config=False)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "privacy":
            return cmd_privacy(args)
        config = load_config(args.config)
        if args.command == "profile":
            return cmd_profile(config, args)
        if args.command == "cost":
            return cmd_cost(config, args)
        if args.command == "optimize":
            return cmd_optimize(config, args)
        if args.command == "oracle":
            return cmd_oracle(config, args)
        if args.command == "retrieval-sim":
            return cmd_retrieval_sim(config, args)
        raise AssertionError(f"unhandled command {args.command}")
    except ZeroRateError as exc:
        print(f"error: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, SplitCVLError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
