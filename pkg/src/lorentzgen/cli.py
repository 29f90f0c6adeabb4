"""Command-line entry point: each experiment is a subcommand writing
deterministic artifacts under a run directory named by config hash + seed.

Config files are flat ``key = value`` text; command-line ``--set key=value``
flags override individual keys and ``--seed`` overrides the seed.  Every
run directory receives the fully resolved config, a schema description,
and a DONE marker written only on success.

Exit codes: 0 success, 1 invariant/test failure, 2 configuration error,
3 numerical abort (NaN) with the step recorded.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from pathlib import Path

import numpy as np

from lorentzgen import experiments as ex
from lorentzgen import metrics as mt
from lorentzgen import trees as tr
from lorentzgen import wgan
from lorentzgen import layers as ly
from lorentzgen import tree_model as tm
from lorentzgen.optim import NumericalAbort

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------


def parse_config_text(text: str) -> dict:
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = _parse_value(value)
    return out


def _parse_value(value: str):
    if value.lower() in ("true", "false"):
        return value.lower() == "true"
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        pass
    return value.strip("\"'")


def format_config(config: dict) -> str:
    lines = []
    for key in sorted(config):
        value = config[key]
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, float):
            rendered = repr(value)
        else:
            rendered = str(value)
        lines.append(f"{key} = {rendered}")
    return "\n".join(lines) + "\n"


def resolve_config(defaults: dict, args) -> dict:
    config = dict(defaults)
    if args.config is not None:
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        overrides = parse_config_text(path.read_text())
        for key, value in overrides.items():
            if key not in config:
                raise ConfigError(f"unknown config key {key!r}")
            config[key] = value
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        if key not in config:
            raise ConfigError(f"unknown config key {key!r}")
        config[key] = _parse_value(value)
    if args.seed is not None:
        config["seed"] = args.seed
    return config


def make_run_dir(base: Path, command: str, config: dict) -> Path:
    digest = hashlib.sha256(format_config(config).encode()).hexdigest()[:12]
    run_dir = base / f"{command}-{digest}-s{config['seed']}"
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def write_table(path: Path, header: list[str], rows) -> None:
    with open(path, "w") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_render(v) for v in row) + "\n")


def _render(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_summary(path: Path, pairs) -> None:
    with open(path, "w") as fh:
        for key, value in pairs:
            fh.write(f"{key} = {_render(value)}\n")


def finalize_run(run_dir: Path, config: dict, schema_lines: list[str]) -> None:
    (run_dir / "config.resolved").write_text(format_config(config))
    schema = [f"schema_version = {SCHEMA_VERSION}"] + schema_lines
    (run_dir / "schema.txt").write_text("\n".join(schema) + "\n")
    (run_dir / "DONE").write_text("ok\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_manifold_selftest(args) -> int:
    defaults = {"seed": 0, "cases": 10_000, "fault_time_bias": 0.0}
    if args.scale == "ci":
        defaults["cases"] = 10_000
    config = resolve_config(defaults, args)
    run_dir = make_run_dir(Path(args.out), "manifold-selftest", config)
    results = ex.run_selftest(config["seed"], config["cases"], config["fault_time_bias"])
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:<{width}}  max_error={r.max_error:.3e}  tol={r.tolerance:.1e}")
    write_table(
        run_dir / "properties.tsv",
        ["property", "max_error", "tolerance", "passed"],
        [(r.name, r.max_error, r.tolerance, int(r.passed)) for r in results],
    )
    ok = all(r.passed for r in results)
    finalize_run(run_dir, config, ["properties.tsv: property, max_error, tolerance, passed(0/1)"])
    print(f"selftest: {'all properties hold' if ok else 'FAILURES detected'} ({run_dir})")
    return 0 if ok else 1


def cmd_toy2d(args) -> int:
    defaults = {
        "seed": 0,
        "density": "checkerboard",
        "epochs": 20,
        "train_count": 5000,
        "eval_count": 2048,
        "log_scale_init": 1.0,
    }
    config = resolve_config(defaults, args)
    run_dir = make_run_dir(Path(args.out), "toy2d", config)
    ckpt_dir = run_dir / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)

    def save_ckpt(epoch: int, model: wgan.GanModel) -> None:
        ly.save_weights(ckpt_dir / f"epoch{epoch:03d}.lzw", model.named_parameters(), model.curvature)

    result = ex.toy2d_run(
        config["density"],
        config["seed"],
        epochs=config["epochs"],
        train_count=config["train_count"],
        eval_count=config["eval_count"],
        log_scale_init=config["log_scale_init"],
        epoch_callback=save_ckpt,
    )
    write_table(run_dir / "loss_history.tsv", list(result.history.columns), result.history.rows)
    write_table(
        run_dir / "energy_distance.tsv",
        ["epoch", "energy_distance"],
        list(enumerate(result.energy_by_epoch)),
    )
    write_table(run_dir / "samples_tangent.tsv", ["x", "y"], result.final_samples_tangent)
    write_table(run_dir / "data_tangent.tsv", ["x", "y"], result.data_tangent)
    write_summary(
        run_dir / "summary.txt",
        [
            ("density", config["density"]),
            ("energy_distance_first_epoch", result.energy_by_epoch[0]),
            ("energy_distance_last_epoch", result.energy_by_epoch[-1]),
        ],
    )
    finalize_run(
        run_dir,
        config,
        [
            "loss_history.tsv: step, epoch, critic_loss, penalty, gen_loss (nan on non-generator steps)",
            "energy_distance.tsv: epoch, energy_distance (generated vs held-out)",
            "samples_tangent.tsv / data_tangent.tsv: x, y tangent-space coordinates",
        ],
    )
    print(
        f"toy2d[{config['density']}]: energy distance {result.energy_by_epoch[0]:.4f} -> "
        f"{result.energy_by_epoch[-1]:.4f} over {config['epochs']} epochs ({run_dir})"
    )
    return 0


def cmd_concat_grad_surface(args) -> int:
    defaults = {"seed": 0, "extent": 100.0, "points": 401}
    if args.scale == "ci":
        defaults["points"] = 401
    config = resolve_config(defaults, args)
    run_dir = make_run_dir(Path(args.out), "concat-grad-surface", config)
    surface = ex.concat_grad_surface(config["extent"], config["points"])
    summary = []
    for (method, comp), panel in surface.panels.items():
        name = f"grad_{method}_{comp}.tsv"
        write_table(run_dir / name, [f"{x:.17g}" for x in surface.xs], panel)
        summary.append((f"max_abs_{method}_{comp}", float(np.abs(panel).max())))
    write_summary(run_dir / "summary.txt", summary)
    finalize_run(
        run_dir,
        config,
        ["grad_<method>_<component>.tsv: matrix of d z_component / d x_s, rows = x_s grid, cols = y_s grid"],
    )
    direct_max = max(v for k, v in summary if "direct" in k)
    tangent_max = max(v for k, v in summary if "tangent" in k)
    print(f"gradient surface: direct max {direct_max:.6f}, tangent max {tangent_max:.3f} ({run_dir})")
    return 0


def cmd_concat_depth(args) -> int:
    defaults = {"seed": 0, "width": 64, "depth": 64, "steps": 200, "batch": 32, "lr": 1e-4}
    if args.scale == "ci":
        defaults["steps"] = 100
    config = resolve_config(defaults, args)
    run_dir = make_run_dir(Path(args.out), "concat-depth", config)
    summary = []
    traces = {}
    for concat in ("direct", "tangent"):
        trace = ex.depth_study(
            concat,
            width=config["width"],
            depth=config["depth"],
            steps=config["steps"],
            batch=config["batch"],
            lr=config["lr"],
            seed=config["seed"],
        )
        traces[concat] = trace
        header = ["step"] + [f"block{i}" for i in range(config["depth"])]
        rows = [(s, *trace.grad_norms[s]) for s in range(config["steps"])]
        write_table(run_dir / f"grad_norms_{concat}.tsv", header, rows)
        write_table(
            run_dir / f"loss_{concat}.tsv", ["step", "loss"], list(enumerate(trace.losses))
        )
        early = trace.grad_norms[:, : min(20, config["depth"])]
        early_mean = float(np.nanmean(early)) if np.any(np.isfinite(early)) else float("nan")
        summary += [
            (f"{concat}_nan_events", trace.nan_events),
            (f"{concat}_aborted_at", -1 if trace.aborted_at is None else trace.aborted_at),
            (f"{concat}_mean_grad_norm_blocks1_20", early_mean),
        ]
    write_summary(run_dir / "summary.txt", summary)
    finalize_run(
        run_dir,
        config,
        [
            "grad_norms_<concat>.tsv: step, then per-block mean gradient norm of the three layers",
            "loss_<concat>.tsv: step, loss",
        ],
    )
    d = dict(summary)
    print(
        f"depth study (L={config['depth']}): mean grad norm blocks 1-20 "
        f"direct={d['direct_mean_grad_norm_blocks1_20']:.4e} "
        f"tangent={d['tangent_mean_grad_norm_blocks1_20']:.4e}, "
        f"direct NaN events={d['direct_nan_events']} ({run_dir})"
    )
    return 0


def cmd_concat_distance(args) -> int:
    defaults = {"seed": 0, "samples": 10_000, "dims": "3,16,64"}
    if args.scale == "ci":
        defaults["dims"] = "16,64"
    config = resolve_config(defaults, args)
    run_dir = make_run_dir(Path(args.out), "concat-distance", config)
    dims = [int(d) for d in str(config["dims"]).split(",")]
    rng = np.random.default_rng(config["seed"])
    summary = []
    for scenario in ("spatial-normal", "wrapped-normal"):
        for dim in dims:
            sample = ex.concat_distance_deviation(scenario, dim, config["samples"], rng)
            write_table(
                run_dir / f"deviation_{scenario}_n{dim}.tsv",
                ["direct", "tangent"],
                np.stack([sample.direct, sample.tangent], axis=1),
            )
            summary += [
                (f"median_direct_{scenario}_n{dim}", float(np.median(sample.direct))),
                (f"median_tangent_{scenario}_n{dim}", float(np.median(sample.tangent))),
            ]
    write_summary(run_dir / "summary.txt", summary)
    finalize_run(
        run_dir,
        config,
        ["deviation_<scenario>_n<dim>.tsv: per-trial |d(cat(x,c),cat(y,c)) - d(x,y)| for both concatenations"],
    )
    print(f"distance deviation written for dims {dims} ({run_dir})")
    return 0


def cmd_tree_gen(args) -> int:
    defaults = {
        "seed": 0,
        "dataset_size": 500,
        "train_size": 400,
        "min_nodes": 20,
        "max_nodes": 50,
        "ae_epochs": 20,
        "ae_batch_size": 32,
        "ae_lr": 5e-3,
        "ae_beta1": 0.0,
        "gan_epochs": 20,
        "sample_count": 100,
        "decode_cap": 100,
    }
    if args.scale == "ci":
        defaults.update(
            {"dataset_size": 125, "train_size": 100, "ae_epochs": 80, "ae_batch_size": 16, "ae_lr": 1e-2, "ae_beta1": 0.9, "gan_epochs": 150}
        )
    config = resolve_config(defaults, args)
    run_dir = make_run_dir(Path(args.out), "tree-gen", config)
    pipe_cfg = tm.PipelineConfig(
        dataset_size=config["dataset_size"],
        train_size=config["train_size"],
        min_nodes=config["min_nodes"],
        max_nodes=config["max_nodes"],
        ae_epochs=config["ae_epochs"],
        gan_epochs=config["gan_epochs"],
        sample_count=config["sample_count"],
        decode_cap=config["decode_cap"],
        seed=config["seed"],
    )
    ae_cfg = pipe_cfg.ae_config()
    ae_cfg.batch_size = config["ae_batch_size"]
    ae_cfg.lr = config["ae_lr"]
    ae_cfg.beta1 = config["ae_beta1"]
    ckpt_dir = run_dir / "checkpoints"
    ckpt_dir.mkdir(exist_ok=True)

    def save_gan_ckpt(epoch: int, model: wgan.GanModel) -> None:
        ly.save_weights(ckpt_dir / f"gan_epoch{epoch:03d}.lzw", model.named_parameters(), model.curvature)

    result = tm.run_pipeline(pipe_cfg, ae_config=ae_cfg, gan_epoch_callback=save_gan_ckpt)

    tr.save_trees(run_dir / "train.trees", result.train_trees)
    tr.save_trees(run_dir / "test.trees", result.test_trees)
    tr.save_trees(run_dir / "sampled.trees", result.sampled_trees)
    write_table(run_dir / "ae_loss.tsv", ["epoch", "loss"], list(enumerate(result.ae_history)))
    write_table(run_dir / "gan_loss.tsv", list(result.gan_history.columns), result.gan_history.rows)
    write_table(run_dir / "metrics.tsv", ["metric", "value"], result.report.rows())
    ae_params = result.encoder.named_parameters() + result.decoder.named_parameters()
    ly.save_weights(run_dir / "autoencoder.lzw", ae_params, result.encoder.curvature)
    ly.save_weights(run_dir / "gan.lzw", result.gan.named_parameters(), result.gan.curvature)
    test_vs_test = mt.evaluate_tree_sets(result.test_trees, result.test_trees)
    write_summary(
        run_dir / "summary.txt",
        [
            ("train_accuracy", result.train_accuracy),
            ("test_accuracy", result.test_accuracy),
            ("valid_samples", sum(1 for _ in result.sampled_trees)),
            ("sample_count", config["sample_count"]),
            ("degree_mmd", result.report.degree_mmd),
            ("degree_mmd_test_vs_test", test_vs_test.degree_mmd),
            ("betweenness_avg_diff", result.report.betweenness_avg_diff),
            ("closeness_avg_diff", result.report.closeness_avg_diff),
            ("ae_final_loss", result.ae_history[-1]),
        ],
    )
    finalize_run(
        run_dir,
        config,
        [
            "train/test/sampled.trees: one tree per line, node_count then parent array",
            "ae_loss.tsv: epoch, mean teacher-forced cross-entropy",
            "gan_loss.tsv: step, epoch, critic_loss, penalty, gen_loss",
            "metrics.tsv: metric, value",
        ],
    )
    print(
        f"tree-gen: test accuracy {result.test_accuracy:.4f}, degree MMD {result.report.degree_mmd:.6f}, "
        f"{len(result.sampled_trees)}/{config['sample_count']} valid samples ({run_dir})"
    )
    return 0


COMMANDS = {
    "manifold-selftest": cmd_manifold_selftest,
    "toy2d": cmd_toy2d,
    "concat-grad-surface": cmd_concat_grad_surface,
    "concat-depth": cmd_concat_depth,
    "concat-distance": cmd_concat_distance,
    "tree-gen": cmd_tree_gen,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lorentzgen", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        p.add_argument("--out", default="runs", help="base output directory")
        p.add_argument("--scale", choices=("paper", "ci"), default="paper")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalAbort as exc:
        print(f"numerical abort: {exc} (step {exc.step})", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
