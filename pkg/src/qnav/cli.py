"""Command-line entry point: ``qnav {train,sweep,evaluate,spectrum,worlds}``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from qnav import env, harness, pqc, rl

log = logging.getLogger("qnav")


def _apply_overrides(cfg: harness.ExperimentConfig, args) -> harness.ExperimentConfig:
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["base_seed"] = args.seed
    if getattr(args, "runs", None) is not None:
        changes["runs"] = args.runs
    if getattr(args, "out", None) is not None:
        changes["out_dir"] = args.out
    cfg = dataclasses.replace(cfg, **changes)
    problems = cfg.validate()
    if problems:
        raise harness.ConfigError("command line", problems)
    return cfg


def cmd_train(args) -> int:
    cfg = _apply_overrides(harness.load_config(args.config), args)
    record = harness.run_single(cfg, cfg.base_seed)
    base = Path(cfg.out_dir) / f"{cfg.label}_seed{cfg.base_seed}"
    harness._write(base / "run.csv", harness.run_log_text(record))
    harness.save_checkpoint(base / "checkpoint.json", cfg, record)
    harness._write(base / "config.yaml", harness.dump_config(cfg))
    curve = harness.learning_curve([record])
    harness._write(base / "curve.csv", harness.curve_text(curve))
    from qnav import plotting

    plotting.plot_learning_curves({cfg.label: curve}, base / "learning_curve.png")
    print(f"{cfg.label} seed={cfg.base_seed} status={record.status} "
          f"solved_step={harness.fmt(record.solved_step)} params={record.param_count} out={base}")
    return 0 if record.status != "failed" else 1


def cmd_sweep(args) -> int:
    configs = harness.load_configs(args.config)
    configs = [_apply_overrides(c, args) for c in configs]
    out = args.out if args.out is not None else configs[0].out_dir
    results = harness.run_sweep(configs, parallel=args.parallel, out_dir=out)
    sys.stdout.write(harness.summary_text([r.summary for r in results]))
    return 0


def cmd_evaluate(args) -> int:
    cfg, model, params = harness.load_checkpoint(args.checkpoint)
    world = env.load_world(args.world or cfg.environment)
    q_fn = lambda s: model.q_batch(params, s[None, :])[0]  # noqa: E731
    mean = rl.evaluate(q_fn, world, episodes=args.episodes)
    total, results = rl.greedy_episode(q_fn, world)
    out = {
        "world": world.name,
        "episodes": args.episodes,
        "mean_reward": float(mean),
        "steps": len(results),
        "final_event": results[-1].event.value,
        "solved": bool(mean > world.success_threshold),
    }
    print(json.dumps(out))
    return 0


def cmd_spectrum(args) -> int:
    spec = pqc.CircuitSpec(1, 1, 1, args.layers, pqc.Encoding.SINGLE)
    params = pqc.init_params(spec, np.random.default_rng(args.seed))
    spectrum = pqc.analyze_spectrum(spec, params, args.samples)
    rows = list(zip(spectrum.frequencies.tolist(), spectrum.coefficients.real, spectrum.coefficients.imag))
    text = harness._csv_text(("frequency", "real", "imag"), rows)
    sys.stdout.write(text)
    print(f"# residual above |frequency| {args.layers}: {harness.fmt(spectrum.residual)}")
    if args.out:
        from qnav import plotting

        out = Path(args.out)
        harness._write(out / f"spectrum_L{args.layers}.csv", text)
        plotting.plot_spectrum(spectrum, out / f"spectrum_L{args.layers}.png", args.layers)
    return 0


def cmd_worlds(args) -> int:
    worlds = []
    for item in args.paths or env.BUILTIN_NAMES:
        try:
            worlds.append(env.load_world(item))
        except (OSError, ValueError) as exc:
            print(f"{item}: invalid: {exc}", file=sys.stderr)
            return 1
    print("name,extent,obstacles,success_threshold,scripted_actions,scripted_reward")
    for w in worlds:
        if args.no_plan:
            n, total = None, None
        else:
            path = env.shortest_path(w)
            n = len(path) if path else None
            total = env.rollout(w, path)[0] if path else None
        print(",".join([w.name, harness.fmt(w.extent), str(len(w.obstacles)),
                        harness.fmt(w.success_threshold), harness.fmt(n), harness.fmt(total)]))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qnav", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="one training run")
    t.add_argument("--config", required=True, type=Path)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sweep", help="multi-seed runs for every experiment in a config")
    s.add_argument("--config", required=True, type=Path)
    s.add_argument("--seed", type=int, help="base seed; run i uses seed + i")
    s.add_argument("--runs", type=int)
    s.add_argument("--out")
    s.add_argument("--parallel", type=int, default=1)
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("evaluate", help="greedy episodes with a saved checkpoint")
    e.add_argument("--checkpoint", required=True, type=Path)
    e.add_argument("--world", help="bundled world name or world file (default: checkpoint's)")
    e.add_argument("--episodes", type=int, default=10)
    e.set_defaults(func=cmd_evaluate)

    f = sub.add_parser("spectrum", help="Fourier spectrum of a random one-qubit re-upload circuit")
    f.add_argument("--layers", type=int, default=3)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--samples", type=int)
    f.add_argument("--out")
    f.set_defaults(func=cmd_spectrum)

    w = sub.add_parser("worlds", help="list and validate world files")
    w.add_argument("paths", nargs="*", help="world files (default: bundled worlds)")
    w.add_argument("--no-plan", action="store_true", help="skip the shortest-path search")
    w.set_defaults(func=cmd_worlds)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except harness.ConfigError as exc:
        for problem in exc.problems:
            print(f"{exc.source}: {problem}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
