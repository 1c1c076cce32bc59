"""Command-line front end: one subcommand per experiment stage.

Commands carry no hidden state between invocations; checkpoints are the
only carrier.  Every output file starts with header comments (tool
version, config hash, seed) and every output directory receives the fully
resolved configuration, so identical invocations produce byte-identical
results.

Subcommands: train, ser, air, mi, regions, gradcheck, export-constellation.
"""

from __future__ import annotations

import argparse
import colorsys
import os
import sys
from pathlib import Path

import numpy as np

from fiberae import __version__
from fiberae.autoencoder import (
    AutoencoderModel,
    CheckpointError,
    TrainConfig,
    TrainingDivergedError,
    build_model,
    constellation_points,
    load_checkpoint,
    save_checkpoint,
    train,
)
from fiberae.channel import dbm_from_watts, watts_from_dbm
from fiberae.config import ConfigError, RunConfig, config_hash, load_config, resolved_json
from fiberae.evaluation import (
    RasterSpec,
    ae_detector,
    decision_regions,
    min_distance_detector,
    ml_oracle_detector,
    qam,
    sweep,
)
from fiberae.gradcheck import run_all
from fiberae.likelihood import Constellation, build_oracle

GRADCHECK_TOLERANCE = 1e-5


class CliError(ValueError):
    """User-facing command failure (bad arguments, missing files)."""


# ---------------------------------------------------------------------------
# shared plumbing


def _parse_powers(args) -> list[float]:
    if args.powers is not None:
        try:
            start_s, step_s, stop_s = args.powers.split(":")
            start, step, stop = float(start_s), float(step_s), float(stop_s)
        except ValueError as exc:
            raise CliError(f"--powers must be start:step:stop, got {args.powers!r}") from exc
        if step <= 0:
            raise CliError("--powers step must be positive")
        out = []
        v = start
        while v <= stop + 1e-9:
            out.append(round(v, 10) + 0.0)
            v += step
        return out
    if args.power is not None:
        return [float(args.power)]
    return []


def checkpoint_name(m: int, power_dbm: float) -> str:
    return f"ae_m{m}_p{power_dbm:+.2f}dbm.json"


def _header(config: RunConfig, seed: int) -> list[str]:
    return [
        f"# fiberae {__version__}",
        f"# config-hash: {config_hash(config)}",
        f"# seed: {seed}",
    ]


def _echo_config(out_dir: Path, config: RunConfig) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved_config.json").write_text(resolved_json(config))


def _write_results_csv(path: Path, config: RunConfig, seed: int, rows, extra_rows=()) -> None:
    lines = _header(config, seed)
    lines.append("power_dbm,metric,value,n_samples,seed")
    for r in rows:
        lines.append(f"{r.power_dbm},{r.metric},{r.value},{r.n_samples},{r.seed}")
    for raw in extra_rows:
        lines.append(raw)
    path.write_text("\n".join(lines) + "\n")


def _write_raster(path: Path, config: RunConfig, seed: int, spec: RasterSpec, grid) -> None:
    lines = _header(config, seed)
    lines.append(
        f"# window: center={spec.center.real},{spec.center.imag} "
        f"half_width={spec.half_width} (rows run along ascending imaginary part)"
    )
    lines.append(str(spec.resolution))
    for row in grid:
        lines.append(" ".join(str(int(v)) for v in row))
    path.write_text("\n".join(lines) + "\n")


def _write_ppm(path: Path, grid, m: int) -> None:
    # P3 pixmap, top row = highest imaginary part
    palette = []
    for i in range(m):
        r, g, b = colorsys.hsv_to_rgb(i / m, 0.65, 0.95)
        palette.append((int(255 * r), int(255 * g), int(255 * b)))
    res = len(grid)
    lines = ["P3", f"{res} {res}", "255"]
    for row in grid[::-1]:
        lines.append(" ".join(f"{palette[v][0]} {palette[v][1]} {palette[v][2]}" for v in row))
    path.write_text("\n".join(lines) + "\n")


def _load_checkpoint_file(path: Path) -> AutoencoderModel:
    if not path.is_file():
        raise CliError(f"checkpoint {path} does not exist")
    return load_checkpoint(path)


def _model_for_power(source: Path, m: int, power_dbm: float) -> AutoencoderModel:
    """Resolve a checkpoint file or per-power directory to a model."""
    if source.is_dir():
        path = source / checkpoint_name(m, power_dbm)
        if not path.is_file():
            raise CliError(f"no checkpoint {path} for {power_dbm} dBm")
        return load_checkpoint(path)
    model = _load_checkpoint_file(source)
    trained = dbm_from_watts(model.input_power_w)
    if abs(trained - power_dbm) > 1e-6:
        raise CliError(
            f"checkpoint {source} was trained at {trained:.2f} dBm, not {power_dbm} dBm; "
            "pass a checkpoint directory for sweeps"
        )
    return model


def _default_powers_from_source(args, source: Path) -> list[float]:
    powers = _parse_powers(args)
    if not powers and source is not None and source.is_file():
        model = _load_checkpoint_file(source)
        powers = [round(dbm_from_watts(model.input_power_w), 10)]
    if not powers:
        raise CliError("need --power or --powers")
    return powers


def _source_fn(source_arg: str, config: RunConfig, detector: str):
    """Per-power source: 'qam' or a checkpoint path/directory."""
    m = config.model.m
    if source_arg == "qam":
        if detector == "ae":
            raise CliError("the ae detector needs a checkpoint source, not qam")

        def fn(p_dbm: float):
            return qam(m, watts_from_dbm(p_dbm))

        return fn, None
    source = Path(source_arg)

    def fn(p_dbm: float):
        return _model_for_power(source, m, p_dbm)

    return fn, source


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    config = load_config(args.config)
    if args.power is None:
        raise CliError("train needs --power <dbm>")
    out_dir = Path(args.out or config.paths.checkpoints)
    _echo_config(out_dir, config)
    params = config.channel.params()
    seed = args.seed if args.seed is not None else config.train.seed
    power = float(args.power)
    if args.warm_start is not None:
        model = _load_checkpoint_file(Path(args.warm_start))
        if model.m != config.model.m:
            raise CliError("warm-start checkpoint has a different constellation size")
    else:
        model = build_model(
            config.model.m,
            params,
            watts_from_dbm(power),
            seed=config.model.init_seed,
            tx_hidden=config.model.tx_hidden_layers,
            rx_hidden=config.model.rx_hidden_layers,
            hidden_width=config.model.hidden_width,
        )
    train_config = TrainConfig(
        batch_size=config.batch_size(),
        batches=args.batches if args.batches is not None else config.train.batches,
        learning_rate=config.train.learning_rate,
        seed=seed,
        power_dbm=power,
    )
    result = train(model, train_config)
    ckpt_path = out_dir / checkpoint_name(config.model.m, power)
    save_checkpoint(model, ckpt_path, train_config)
    trace_path = out_dir / f"train_loss_m{config.model.m}_p{power:+.2f}dbm.csv"
    lines = _header(config, seed) + ["batch,loss"]
    lines += [f"{i},{v}" for i, v in enumerate(result.losses)]
    trace_path.write_text("\n".join(lines) + "\n")
    print(f"trained {ckpt_path} (final loss {result.losses[-1]:.6g}, "
          f"posterior floor hits {result.floor_hits})")
    return 0


def cmd_ser(args) -> int:
    config = load_config(args.config)
    out_dir = Path(args.out or config.paths.outputs)
    _echo_config(out_dir, config)
    source_fn, source_path = _source_fn(args.source, config, args.detector)
    powers = (
        _default_powers_from_source(args, source_path)
        if source_path is not None
        else _parse_powers(args)
    )
    if not powers:
        raise CliError("need --power or --powers")
    seed = args.seed if args.seed is not None else config.eval.seed
    rows = sweep(
        powers,
        "ser",
        source_fn,
        config.channel.params(),
        args.samples or config.eval.n_samples,
        seed,
        detector=args.detector,
        oracle_samples=args.oracle_samples or config.eval.oracle_samples,
        threads=args.threads,
    )
    tag = "qam" if args.source == "qam" else "ae-const"
    path = out_dir / f"ser_{tag}_{args.detector}.csv"
    _write_results_csv(path, config, seed, rows)
    print(f"wrote {path}")
    return 0


def cmd_air(args) -> int:
    config = load_config(args.config)
    out_dir = Path(args.out or config.paths.outputs)
    _echo_config(out_dir, config)
    source = Path(args.checkpoint)
    powers = _default_powers_from_source(args, source)
    seed = args.seed if args.seed is not None else config.eval.seed

    def source_fn(p_dbm: float):
        return _model_for_power(source, config.model.m, p_dbm)

    rows = sweep(
        powers,
        "air",
        source_fn,
        config.channel.params(),
        args.samples or config.eval.n_samples,
        seed,
        threads=args.threads,
    )
    extra = _overlay_rows(args.overlay) if args.overlay else ()
    path = out_dir / "air.csv"
    _write_results_csv(path, config, seed, rows, extra_rows=extra)
    print(f"wrote {path}")
    return 0


def _overlay_rows(overlay_path: str) -> list[str]:
    """Pass external bound curves through into the output CSV, unmodified."""
    path = Path(overlay_path)
    if not path.is_file():
        raise CliError(f"overlay file {path} does not exist")
    rows = []
    for line in path.read_text().splitlines():
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split(",")
        if parts[0] == "power_dbm":
            continue
        if len(parts) < 3:
            raise CliError(f"overlay row needs power_dbm,metric,value: {line!r}")
        try:
            float(parts[0])
            float(parts[2])
        except ValueError as exc:
            raise CliError(f"unparseable overlay row {line!r}") from exc
        while len(parts) < 5:
            parts.append("0")
        rows.append(",".join(parts[:5]))
    return rows


def cmd_mi(args) -> int:
    config = load_config(args.config)
    out_dir = Path(args.out or config.paths.outputs)
    _echo_config(out_dir, config)
    source_fn, source_path = _source_fn(args.source, config, detector="ml")
    powers = (
        _default_powers_from_source(args, source_path)
        if source_path is not None
        else _parse_powers(args)
    )
    if not powers:
        raise CliError("need --power or --powers")
    seed = args.seed if args.seed is not None else config.eval.seed
    rows = sweep(
        powers,
        "mi",
        source_fn,
        config.channel.params(),
        args.samples or config.eval.n_samples,
        seed,
        oracle_samples=args.oracle_samples or config.eval.oracle_samples,
        threads=args.threads,
    )
    tag = "qam" if args.source == "qam" else "ae-const"
    path = out_dir / f"mi_{tag}.csv"
    _write_results_csv(path, config, seed, rows)
    print(f"wrote {path}")
    return 0


def cmd_regions(args) -> int:
    config = load_config(args.config)
    out_dir = Path(args.out or config.paths.outputs)
    _echo_config(out_dir, config)
    seed = args.seed if args.seed is not None else config.eval.seed
    params = config.channel.params()

    if args.source == "qam":
        if args.detector == "ae":
            raise CliError("the ae detector needs a checkpoint source")
        powers = _parse_powers(args)
        if not powers:
            raise CliError("need --power with a qam source")
        power = powers[0]
        const = qam(config.model.m, watts_from_dbm(power))
        model = None
    else:
        source = Path(args.source)
        powers = _default_powers_from_source(args, source)
        power = powers[0]
        model = _model_for_power(source, config.model.m, power)
        const = Constellation(
            points=constellation_points(model), power_w=model.input_power_w
        )

    if args.detector == "ae":
        detector = ae_detector(model)
    elif args.detector == "ml":
        oracle = build_oracle(
            const, params, args.oracle_samples or config.eval.oracle_samples,
            seed, threads=args.threads,
        )
        detector = ml_oracle_detector(oracle)
    else:
        detector = min_distance_detector(const)

    half_width = args.half_width or config.eval.raster_half_width
    if half_width is None:
        half_width = 3.0 * float(np.sqrt(watts_from_dbm(power)))
    center = 0j
    if args.center is not None:
        try:
            re_s, im_s = args.center.split(",")
            center = complex(float(re_s), float(im_s))
        except ValueError as exc:
            raise CliError(f"--center must be re,im: {args.center!r}") from exc
    spec = RasterSpec(
        center=center,
        half_width=float(half_width),
        resolution=args.resolution or config.eval.raster_resolution,
    )
    grid = decision_regions(detector, spec)
    path = out_dir / f"regions_{args.detector}_p{power:+.2f}dbm.txt"
    _write_raster(path, config, seed, spec, grid)
    written = [str(path)]
    if args.ppm:
        ppm_path = path.with_suffix(".ppm")
        _write_ppm(ppm_path, grid, config.model.m)
        written.append(str(ppm_path))
    print("wrote " + " ".join(written))
    return 0


def cmd_gradcheck(args) -> int:
    config = load_config(args.config)
    out_dir = Path(args.out or config.paths.outputs)
    _echo_config(out_dir, config)
    seed = args.seed if args.seed is not None else 0
    report = run_all(seed=seed)
    lines = _header(config, seed)
    ok = True
    for name, err in report.items():
        passed = err <= GRADCHECK_TOLERANCE
        ok = ok and passed
        line = f"{name}: max relative error {err:.3e} (tolerance {GRADCHECK_TOLERANCE:g}) {'PASS' if passed else 'FAIL'}"
        lines.append(line)
        print(line)
    (out_dir / "gradcheck.txt").write_text("\n".join(lines) + "\n")
    return 0 if ok else 1


def cmd_export_constellation(args) -> int:
    config = load_config(args.config)
    out_dir = Path(args.out or config.paths.outputs)
    _echo_config(out_dir, config)
    model = _load_checkpoint_file(Path(args.checkpoint))
    points = constellation_points(model)
    lines = _header(config, config.eval.seed)
    lines.append(f"# input_power_w: {model.input_power_w}")
    lines.append("index,re,im")
    for i, p in enumerate(points):
        lines.append(f"{i},{p.real},{p.imag}")
    path = out_dir / "constellation.csv"
    path.write_text("\n".join(lines) + "\n")
    print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# argument wiring


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (defaults apply when omitted)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads for independent tasks (results do not depend on this)")
    p.add_argument("--out", help="output directory (overrides config paths)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fiberae",
        description="Autoencoder constellation shaping over a nonlinear fiber channel",
    )
    parser.add_argument("--version", action="version", version=f"fiberae {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one model at one input power")
    _add_common(p)
    p.add_argument("--power", type=float, required=True, help="input power in dBm")
    p.add_argument("--batches", type=int, help="override config train.batches")
    p.add_argument("--warm-start", help="checkpoint to initialize from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("ser", help="symbol error rate over input powers")
    _add_common(p)
    p.add_argument("--source", required=True, help="'qam' or a checkpoint file/directory")
    p.add_argument("--detector", choices=("mindist", "ml", "ae"), default="mindist")
    p.add_argument("--power", type=float)
    p.add_argument("--powers", help="start:step:stop in dBm (use --powers=-15:1:10 for negative starts)")
    p.add_argument("--samples", type=int, help="Monte Carlo samples per power")
    p.add_argument("--oracle-samples", type=int, help="KDE samples per symbol")
    p.set_defaults(func=cmd_ser)

    p = sub.add_parser("air", help="decoder information rate of trained models")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help="checkpoint file or directory")
    p.add_argument("--power", type=float)
    p.add_argument("--powers", help="start:step:stop in dBm (use --powers=-15:1:10 for negative starts)")
    p.add_argument("--samples", type=int)
    p.add_argument("--overlay", help="external bound curves CSV merged into the output")
    p.set_defaults(func=cmd_air)

    p = sub.add_parser("mi", help="oracle mutual information of a constellation")
    _add_common(p)
    p.add_argument("--source", required=True, help="'qam' or a checkpoint file/directory")
    p.add_argument("--power", type=float)
    p.add_argument("--powers", help="start:step:stop in dBm (use --powers=-15:1:10 for negative starts)")
    p.add_argument("--samples", type=int)
    p.add_argument("--oracle-samples", type=int)
    p.set_defaults(func=cmd_mi)

    p = sub.add_parser("regions", help="decision-region raster")
    _add_common(p)
    p.add_argument("--source", required=True, help="'qam' or a checkpoint file")
    p.add_argument("--detector", choices=("ae", "ml", "mindist"), default="ae")
    p.add_argument("--power", type=float)
    p.add_argument("--powers", help=argparse.SUPPRESS)
    p.add_argument("--center", help="window center as re,im (default 0,0)")
    p.add_argument("--half-width", type=float, help="window half width in sqrt(W)")
    p.add_argument("--resolution", type=int)
    p.add_argument("--oracle-samples", type=int)
    p.add_argument("--ppm", action="store_true", help="also write a portable pixmap")
    p.set_defaults(func=cmd_regions)

    p = sub.add_parser("gradcheck", help="finite-difference verification of all gradients")
    _add_common(p)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("export-constellation", help="dump a checkpoint's symbols as CSV")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_export_constellation)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, CheckpointError, TrainingDivergedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
