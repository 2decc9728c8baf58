"""Command-line entry point orchestrating the full adaptation workflow.

Subcommands mirror the pipeline stages: ``augment`` (color-randomized
variants), ``train-d`` (stage 1), ``train-g`` (stage 2), ``adapt``,
``swd``, ``replay`` (bit-exact reproduction from recorded parameters), and
``report`` (figures from a run directory).

Settings come from built-in defaults, overridden by an optional
configuration file (one ``key = value`` per line, ``#`` comments), then
by command-line flags.  Every command that writes a run directory echoes
its fully resolved configuration there; the environment is never
consulted.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numeric divergence.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import (
    ChromadaptError,
    ConfigError,
    DatasetError,
    DivergenceError,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


@dataclass
class RunConfig:
    """Every tunable knob, resolved before any work starts."""

    # sampling
    p: float = 0.99
    seed: int = 0
    multiplier: int = 1
    shared_alpha: bool = False  # one alpha for all three operators
    rejection: bool = False
    # training
    batch_size: int = 24
    iterations: int = 3000
    lr: float = 1e-3
    beta1: float = 0.5
    beta2: float = 0.999
    adam_eps: float = 1e-8
    freeze_d: bool = True
    holdout_fraction: float = 0.10
    log_interval: int = 25
    eval_interval: int = 250
    generator_loss: str = "nonsaturating"
    # networks
    resolution: tuple[int, int] = (64, 64)
    d_channels: tuple[int, ...] = (64, 128, 256, 512)
    d_kernel: int = 4
    g_channels: tuple[int, ...] = (32, 64, 128, 256, 256)
    g_kernel: int = 3
    stride: int = 2
    padding: int = 1
    dtype: str = "float32"
    # swd
    swd_descriptor: str = "patch"
    swd_patch_size: int = 7
    swd_patches_per_image: int = 128
    swd_projections: int = 256

    def echo(self, path: Path) -> None:
        lines = ["# resolved configuration"]
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n")


def _parse_value(name: str, raw: str, kind):
    raw = raw.strip()
    try:
        if kind is bool:
            if raw.lower() in ("true", "1", "yes", "on"):
                return True
            if raw.lower() in ("false", "0", "no", "off"):
                return False
            raise ValueError(raw)
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is str:
            return raw
        # tuples of ints
        return tuple(int(x) for x in raw.replace("x", ",").split(",") if x)
    except ValueError:
        raise ConfigError(f"cannot parse config value {name} = {raw!r}") from None


def load_config_file(path) -> dict:
    """Parse 'key = value' lines; '#' starts a comment."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    known = {f.name: f for f in fields(RunConfig)}
    out = {}
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, raw = line.partition("=")
        key = key.strip().replace("-", "_")
        if key not in known:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        default = getattr(RunConfig(), key)
        kind = bool if isinstance(default, bool) else type(default)
        out[key] = _parse_value(key, raw, kind)
    return out


def resolve_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if getattr(args, "config", None):
        values.update(load_config_file(args.config))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    cfg = RunConfig(**values)
    if not 0.0 < cfg.p < 1.0:
        raise ConfigError(f"p must be in (0, 1), got {cfg.p}")
    return cfg


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _sampler_config(cfg: RunConfig):
    from .sampler import SamplerConfig

    return SamplerConfig(p=cfg.p, seed=cfg.seed, per_op=not cfg.shared_alpha, rejection=cfg.rejection)


def _train_config(cfg: RunConfig):
    from .trainer import TrainConfig

    return TrainConfig(
        batch_size=cfg.batch_size, iterations=cfg.iterations, lr=cfg.lr, beta1=cfg.beta1,
        beta2=cfg.beta2, adam_eps=cfg.adam_eps, p=cfg.p, per_op=not cfg.shared_alpha,
        freeze_d=cfg.freeze_d, seed=cfg.seed, holdout_fraction=cfg.holdout_fraction,
        log_interval=cfg.log_interval, eval_interval=cfg.eval_interval,
        generator_loss=cfg.generator_loss,
    )


def _swd_config(cfg: RunConfig):
    from .metrics import SwdConfig

    return SwdConfig(
        descriptor=cfg.swd_descriptor, patch_size=cfg.swd_patch_size,
        patches_per_image=cfg.swd_patches_per_image, projections=cfg.swd_projections,
        seed=cfg.seed,
    )


def cmd_augment(args) -> int:
    from .dataset import resolve_manifest, write_manifest
    from .report import render_alpha_figure
    from .sampler import make_adversarial_set, write_variant_records

    cfg = resolve_config(args)
    out_dir = Path(args.out)
    manifest = resolve_manifest(args.input)
    variants, records = make_adversarial_set(manifest, _sampler_config(cfg), cfg.multiplier, out_dir)
    write_manifest(variants, out_dir / "manifest.tsv")
    write_variant_records(records, out_dir / "records.tsv")
    cfg.echo(out_dir / "config.resolved.txt")
    if not args.no_figures:
        render_alpha_figure(out_dir / "records.tsv")
    print(f"wrote {len(variants)} variants of {len(manifest)} images to {out_dir}")
    return EXIT_OK


def cmd_train_d(args) -> int:
    from .dataset import resolve_manifest
    from .networks import discriminator_spec
    from .report import render_training_figure

    cfg = resolve_config(args)
    run_dir = Path(args.out)
    real = resolve_manifest(args.real)
    spec = discriminator_spec(
        resolution=cfg.resolution, channels=cfg.d_channels, kernel=cfg.d_kernel,
        stride=cfg.stride, padding=cfg.padding, dtype=cfg.dtype,
    )
    cfg.echo(run_dir / "config.resolved.txt")
    from .trainer import train_stage1

    _, logbook = train_stage1(real, _train_config(cfg), spec=spec, run_dir=run_dir)
    if not args.no_figures:
        render_training_figure(run_dir / "train_d.log")
    print(f"discriminator checkpoint and log written to {run_dir}")
    return EXIT_OK


def cmd_train_g(args) -> int:
    from .dataset import resolve_manifest
    from .networks import generator_spec
    from .report import render_training_figure

    cfg = resolve_config(args)
    run_dir = Path(args.out)
    synthetic = resolve_manifest(args.synthetic)
    spec = generator_spec(
        resolution=cfg.resolution, channels=cfg.g_channels, kernel=cfg.g_kernel,
        stride=cfg.stride, padding=cfg.padding, dtype=cfg.dtype,
    )
    cfg.echo(run_dir / "config.resolved.txt")
    from .trainer import train_stage2

    _, logbook = train_stage2(
        synthetic, Path(args.d_checkpoint), _train_config(cfg), g_spec=spec, run_dir=run_dir
    )
    if not args.no_figures:
        render_training_figure(run_dir / "train_g.log")
    mode = "frozen" if cfg.freeze_d else "non-fixed (ablation)"
    print(f"generator trained against {mode} discriminator; outputs in {run_dir}")
    return EXIT_OK


def cmd_adapt(args) -> int:
    from .dataset import resolve_manifest
    from .report import render_alpha_figure
    from .trainer import adapt_dataset

    cfg = resolve_config(args)
    out_dir = Path(args.out)
    synthetic = resolve_manifest(args.synthetic)
    manifest, records = adapt_dataset(synthetic, Path(args.g_checkpoint), out_dir)
    cfg.echo(out_dir / "config.resolved.txt")
    if not args.no_figures:
        render_alpha_figure(out_dir / "alphas.tsv")
    print(f"adapted {len(manifest)} images into {out_dir}")
    return EXIT_OK


def cmd_swd(args) -> int:
    from .dataset import resolve_manifest
    from .metrics import swd

    cfg = resolve_config(args)
    result = swd(resolve_manifest(args.set_a), resolve_manifest(args.set_b), _swd_config(cfg))
    print(result.record)
    if args.figure:
        from .report import render_swd_figure

        render_swd_figure(["A vs B"], [result.distance], args.figure)
    return EXIT_OK


def cmd_replay(args) -> int:
    from .dataset import resolve_manifest, write_manifest
    from .sampler import read_variant_records, replay_records

    source = resolve_manifest(args.source)
    records = read_variant_records(args.records)
    out_dir = Path(args.out)
    manifest = replay_records(records, source, out_dir)
    write_manifest(manifest, out_dir / "manifest.tsv")
    print(f"replayed {len(manifest)} images into {out_dir}")
    return EXIT_OK


def cmd_report(args) -> int:
    from .report import render_alpha_figure, render_training_figure

    run_dir = Path(args.run)
    if not run_dir.is_dir():
        raise DatasetError(f"run directory not found: {run_dir}")
    made = []
    for log in sorted(run_dir.glob("*.log")):
        made.append(render_training_figure(log))
    for rec in ("alphas.tsv", "records.tsv"):
        if (run_dir / rec).is_file():
            made.append(render_alpha_figure(run_dir / rec))
    if not made:
        print(f"nothing to render in {run_dir}", file=sys.stderr)
        return EXIT_DATA
    for p in made:
        print(f"wrote {p}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _tuple_arg(raw: str) -> tuple[int, ...]:
    return tuple(int(x) for x in raw.replace("x", ",").split(",") if x)


def _add_common(sp, train: bool = False):
    sp.add_argument("--config", help="configuration file (key = value lines)")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--p", type=float, default=None, help="coverage probability for alpha draws")
    sp.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    if train:
        sp.add_argument("--iterations", type=int, default=None)
        sp.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        sp.add_argument("--lr", type=float, default=None)
        sp.add_argument("--resolution", type=_tuple_arg, default=None, help="H,W")
        sp.add_argument("--eval-interval", dest="eval_interval", type=int, default=None)
        sp.add_argument("--dtype", choices=("float32", "float64"), default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="chromadapt",
        description="Label-preserving color space adaptation of synthetic image datasets.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("augment", help="emit color-randomized variants of a dataset")
    sp.add_argument("--input", required=True, help="dataset directory or manifest file")
    sp.add_argument("--out", required=True)
    sp.add_argument("--multiplier", type=int, default=None, help="variants per source image")
    sp.add_argument("--shared-alpha", dest="shared_alpha", action="store_true", default=None,
                    help="draw one alpha shared by all three operators")
    sp.add_argument("--rejection", action="store_true", default=None,
                    help="resample out-of-range draws instead of clipping")
    _add_common(sp)
    sp.set_defaults(func=cmd_augment)

    sp = sub.add_parser("train-d", help="stage 1: pre-train the discriminator")
    sp.add_argument("--real", required=True, help="real dataset directory or manifest")
    sp.add_argument("--out", required=True, help="run directory")
    sp.add_argument("--d-channels", dest="d_channels", type=_tuple_arg, default=None)
    _add_common(sp, train=True)
    sp.set_defaults(func=cmd_train_d)

    sp = sub.add_parser("train-g", help="stage 2: train the generator against a frozen D")
    sp.add_argument("--synthetic", required=True)
    sp.add_argument("--d-checkpoint", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--g-channels", dest="g_channels", type=_tuple_arg, default=None)
    sp.add_argument("--no-freeze-d", dest="freeze_d", action="store_false", default=None,
                    help="ablation: let the discriminator into backprop")
    sp.add_argument("--generator-loss", dest="generator_loss",
                    choices=("nonsaturating", "literal"), default=None)
    _add_common(sp, train=True)
    sp.set_defaults(func=cmd_train_g)

    sp = sub.add_parser("adapt", help="apply a trained generator to a dataset")
    sp.add_argument("--synthetic", required=True)
    sp.add_argument("--g-checkpoint", required=True)
    sp.add_argument("--out", required=True)
    _add_common(sp)
    sp.set_defaults(func=cmd_adapt)

    sp = sub.add_parser("swd", help="sliced Wasserstein distance between two sets")
    sp.add_argument("--set-a", dest="set_a", required=True)
    sp.add_argument("--set-b", dest="set_b", required=True)
    sp.add_argument("--projections", dest="swd_projections", type=int, default=None)
    sp.add_argument("--patch-size", dest="swd_patch_size", type=int, default=None)
    sp.add_argument("--patches-per-image", dest="swd_patches_per_image", type=int, default=None)
    sp.add_argument("--descriptor", dest="swd_descriptor", choices=("patch", "pixel"), default=None)
    sp.add_argument("--figure", help="also render a bar chart to this path")
    _add_common(sp)
    sp.set_defaults(func=cmd_swd)

    sp = sub.add_parser("replay", help="reproduce variants bitwise from recorded alphas")
    sp.add_argument("--records", required=True)
    sp.add_argument("--source", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_replay)

    sp = sub.add_parser("report", help="render figures from a run directory")
    sp.add_argument("--run", required=True)
    sp.set_defaults(func=cmd_report)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ChromadaptError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
