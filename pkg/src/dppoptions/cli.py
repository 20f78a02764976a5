"""Command-line front end: spectral fixtures, training, evaluation, plots and ablations."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import trainer
from .gridworld import all_transitions, read_jsonl, write_jsonl
from .metrics import evaluate, summarize
from .plotting import plot_ablation, plot_curves, plot_trajectories
from .spectral import build_graph, format_graph, format_spectrum, state_features

log = logging.getLogger("dppoptions")


class CLIError(Exception):
    pass


def _config(args, **extra):
    overrides = {"seed": getattr(args, "seed", None), **extra}
    if getattr(args, "ablation", None):
        overrides["ablation"] = args.ablation
    if args.config:
        try:
            return trainer.load_config(args.config, **overrides)
        except OSError as exc:
            raise CLIError(f"cannot read config {args.config}: {exc.strerror}") from exc
    return trainer.OptionConfig(**{k: v for k, v in overrides.items() if v is not None})


def _out(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def cmd_spectral(args):
    config = _config(args)
    maze = trainer.make_maze(config)
    spec = trainer.maze_spectrum(maze, config)
    out = _out(args)
    with open(os.path.join(out, "graph.txt"), "w") as fh:
        fh.write(format_graph(build_graph(all_transitions(maze), maze.n_states)))
    with open(os.path.join(out, "spectrum.txt"), "w") as fh:
        fh.write(format_spectrum(spec))
    print(f"spectrum\t{maze.n_states}\t{spec.dim}\t{spec.digest()}")


def _train_one(config, out, prefix=""):
    maze = trainer.make_maze(config)
    policies, reports, digest = trainer.train(maze, config)
    trainer.save_checkpoint(os.path.join(out, prefix + "checkpoint.json"), policies, config, digest)
    trainer.write_reports_csv(os.path.join(out, prefix + "reports.csv"), reports)
    return maze, policies, reports


def cmd_train(args):
    config = _config(args, iterations=args.iterations)
    out = _out(args)
    _, _, reports = _train_one(config, out)
    plot_curves(os.path.join(out, "curves.svg"), {config.ablation: reports})
    last = reports[-1] if reports else None
    if last is not None:
        print("iteration\tib\tl1\tl2\tl3\ttotal")
        print(f"{last.iteration}\t{last.ib:.6g}\t{last.l1:.6g}\t{last.l2:.6g}\t{last.l3:.6g}\t{last.total:.6g}")


def _eval_checkpoint(path, per_option, seed, out, prefix=""):
    policies, config, digest = trainer.load_checkpoint(path)
    maze = trainer.make_maze(config)
    if policies.n_states != maze.n_states:
        raise CLIError(f"checkpoint has {policies.n_states} states but maze has {maze.n_states}")
    spec = trainer.maze_spectrum(maze, config)
    if config.spectrum == "exact" and spec.digest() != digest:
        raise CLIError("checkpoint spectrum hash does not match the maze")
    features = state_features(spec)
    report, records = evaluate(maze, policies, config, features, per_option, seed)
    with open(os.path.join(out, prefix + "metrics.json"), "w") as fh:
        fh.write(report.to_json())
    write_jsonl(os.path.join(out, prefix + "trajectories.jsonl"), maze, records)
    return maze, report, records, config


def cmd_eval(args):
    out = _out(args)
    maze, report, records, config = _eval_checkpoint(args.checkpoint, args.per_option, args.seed or 0, out)
    plot_trajectories(os.path.join(out, "trajectories.svg"), maze, records, config.n_options)
    print("coverage\tdiversity\tmean_distance\tstd_x\tstd_y")
    print(f"{report.coverage:.6g}\t{report.diversity:.6g}\t{report.mean_distance:.6g}\t"
          f"{report.std_x:.6g}\t{report.std_y:.6g}")


def cmd_plot(args):
    config = _config(args)
    maze = trainer.make_maze(config)
    records = read_jsonl(args.trajectories, maze)
    out = args.out
    if os.path.isdir(out) or not out.endswith(".svg"):
        os.makedirs(out, exist_ok=True)
        out = os.path.join(out, "trajectories.svg")
    plot_trajectories(out, maze, records, config.n_options)
    print(f"plot\t{len(records)}\t{out}")


def cmd_ablate(args):
    base = _config(args, iterations=args.iterations)
    out = _out(args)
    seeds = [base.seed + k for k in range(args.seeds)]
    table, rows = {}, []
    curves = {}
    for ab in trainer.ABLATIONS:
        reports = []
        for seed in seeds:
            config = base.replace(ablation=ab, seed=seed)
            prefix = f"{ab}_seed{seed}_"
            _, _, reps = _train_one(config, out, prefix)
            if seed == seeds[0]:
                curves[ab] = reps
            _, rep, _, _ = _eval_checkpoint(os.path.join(out, prefix + "checkpoint.json"),
                                            args.per_option, seed, out, prefix)
            reports.append(rep)
            rows.append((ab, seed, rep))
        table[ab] = summarize(reports)
    with open(os.path.join(out, "ablation.tsv"), "w") as fh:
        fh.write("ablation\tseed\tcoverage\tdiversity\tmean_distance\tstd_x\tstd_y\n")
        for ab, seed, r in rows:
            fh.write(f"{ab}\t{seed}\t{r.coverage!r}\t{r.diversity!r}\t{r.mean_distance!r}\t{r.std_x!r}\t{r.std_y!r}\n")
    with open(os.path.join(out, "ablation_summary.json"), "w") as fh:
        json.dump(table, fh, sort_keys=True, indent=2)
        fh.write("\n")
    plot_ablation(os.path.join(out, "ablation.svg"), table)
    plot_curves(os.path.join(out, "ablation_curves.svg"), curves)
    print("ablation\tcoverage\tdiversity\tmean_distance")
    for ab in trainer.ABLATIONS:
        t = table[ab]
        print(f"{ab}\t{t['coverage'][0]:.4f}\t{t['diversity'][0]:.4f}\t{t['mean_distance'][0]:.4f}")


def _seed(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="dppoptions", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default="out"):
        sp.add_argument("--config", help="key/value YAML config file")
        sp.add_argument("--seed", type=_seed)
        sp.add_argument("--out", default=out_default, help="output directory")

    sp = sub.add_parser("spectral", help="write the maze graph and Laplacian spectrum fixtures")
    common(sp)
    sp.set_defaults(func=cmd_spectral)

    sp = sub.add_parser("train", help="train an option set and write a checkpoint")
    common(sp)
    sp.add_argument("--ablation", choices=trainer.ABLATIONS)
    sp.add_argument("--iterations", type=int)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="metrics from fresh rollouts of a checkpoint")
    sp.add_argument("checkpoint")
    sp.add_argument("--seed", type=_seed)
    sp.add_argument("--out", default="out")
    sp.add_argument("--per-option", type=int, default=10)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("plot", help="render trajectories (JSON lines) over the maze as SVG")
    common(sp)
    sp.add_argument("trajectories")
    sp.set_defaults(func=cmd_plot)

    sp = sub.add_parser("ablate", help="train and evaluate every ablation over several seeds")
    common(sp)
    sp.add_argument("--seeds", type=int, default=5)
    sp.add_argument("--iterations", type=int)
    sp.add_argument("--per-option", type=int, default=10)
    sp.set_defaults(func=cmd_ablate, ablation=None)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CLIError, ValueError, KeyError, OSError, FloatingPointError) as exc:
        msg = str(exc).replace("\n", " ")
        print(json.dumps({"error": type(exc).__name__, "message": msg}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
