"""Command-line interface: datasets, training, inference, baselines, sweeps.

Every command writes a ``manifest.json`` into its output directory recording
the fully resolved configuration and the file-format versions; ``lamp rerun
<manifest>`` replays a manifest and reproduces all outputs byte-identically.

Exit codes: 0 success, 2 usage/validation, 3 I/O or file-format, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import formats, metrics, synthetic
from .attention import MaskSpec, reconstruct, train_attention_model
from .errors import FormatError, NumericalError, ValidationError
from .gappy import fit_gappy, reconstruct_gappy
from .metrics import PowerMap, place_sensors, pred_loss, predictive_power
from .patches import (
    PatchGrid,
    SplitSpec,
    apply_stats,
    denormalize,
    normalize,
    patchify,
    split,
)
from .pod import ae_loss
from .synthetic import (
    CHAOTIC,
    LAMINAR,
    ChaoticParams,
    FlowSpec,
    LaminarParams,
    NoiseSpec,
)

DEFAULT_BUDGET_BYTES = 2 * 1024**3


# Helpers ----------------------------------------------------------------------

def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        value = float(value)
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(tok) for tok in str(text).split(","))
    except ValueError:
        raise ValidationError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in str(text).split(","))
    except ValueError:
        raise ValidationError(f"expected comma-separated numbers, got {text!r}")


def _parse_snr(text) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ValidationError(f"invalid --snr-db value: {text!r}")
    if math.isnan(value):
        raise ValidationError("--snr-db must be a number or inf")
    return value


def _split_spec(args) -> SplitSpec:
    return SplitSpec(args.train_fraction, args.test_fraction, args.gap_fraction)


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args, skip=("func", "command")) -> dict:
    return {k: _jsonable(v) for k, v in sorted(vars(args).items()) if k not in skip}


def _write_run_manifest(args, out: Path, outputs: list[str], results: dict) -> None:
    payload = {
        "command": args.command,
        "config": _config(args),
        "format_versions": {
            "dataset": formats.DATASET_FORMAT,
            "model": formats.MODEL_FORMAT,
        },
        "outputs": sorted(outputs),
        "results": _jsonable(results),
    }
    formats.write_manifest(payload, out / "manifest.json")


def _load_raw(path: str) -> SnapshotSet:
    """Dataset in raw units: standardized files are inverted with their stats."""
    fields = formats.read_dataset(path)
    return denormalize(fields) if fields.norm_stats is not None else fields


def _standardized(path: str, split_spec: SplitSpec) -> SnapshotSet:
    """Dataset in standardized units (stats fitted on the train block)."""
    fields = formats.read_dataset(path)
    if fields.norm_stats is not None:
        return fields
    return normalize(fields, split_spec.train_range(fields.snapshots))


def _mask_for(args, grid: PatchGrid, power: PowerMap | None) -> MaskSpec:
    if getattr(args, "sensors_from", None):
        values = _read_power_values(args.sensors_from, grid.n_patches)
        count = max(1, round(args.coverage * grid.n_patches))
        return place_sensors(PowerMap(grid, values), count)
    if power is not None:
        count = max(1, round(args.coverage * grid.n_patches))
        return place_sensors(power, count)
    return MaskSpec.random(grid.n_patches, args.coverage, args.seed)


def _read_power_values(path: str, n_expected: int) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    if len(rows) != n_expected:
        raise ValidationError(
            f"power map {path} has {len(rows)} patches, expected {n_expected}"
        )
    values = np.empty(n_expected)
    try:
        for row in rows:
            values[int(row["patch_index"])] = float(row["value"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: not a power-map CSV: {exc}") from exc
    return values


def _noisy_test_input(test_raw, mask, snr_db, noise_seed, grid, stats):
    """Masked-and-noised test input in standardized units, plus sigma^2.

    As in the sweep protocol, the variance comes from the full test-split
    power, so one run has one well-defined noise level regardless of which
    patches the mask happens to observe.
    """
    if math.isinf(snr_db):
        return apply_stats(test_raw, stats), 0.0
    sigma2 = synthetic.noise_sigma2(test_raw, None, NoiseSpec(snr_db))
    noisy = synthetic.add_noise_fixed(test_raw, mask, sigma2, noise_seed, grid)
    return apply_stats(noisy, stats), sigma2


def _emit_field_images(
    out: Path, named_fields: dict, snapshot: int, component: int, mask, grid
) -> tuple[list[str], dict]:
    files, ranges = [], {}
    for name, fields in named_fields.items():
        rgb, vmin, vmax = formats.render_field(fields, snapshot, component, mask, grid)
        fname = f"{name}_c{component}.ppm"
        formats.write_ppm(rgb, out / fname)
        files.append(fname)
        ranges[fname] = {"vmin": vmin, "vmax": vmax}
    return files, ranges


# Commands ---------------------------------------------------------------------

def cmd_generate(args) -> int:
    out = _out_dir(args)
    if args.kind == LAMINAR:
        params = LaminarParams(
            speed=args.speed,
            wavelength=args.wavelength,
            envelope_width=args.envelope_width,
            harmonics=args.harmonics,
            amplitude=args.amplitude,
            decay=args.decay if args.decay is not None else 3.5,
        )
    else:
        params = ChaoticParams(
            modes=args.modes,
            decay=args.decay if args.decay is not None else 0.5,
            packet_radius=args.packet_radius,
        )
    spec = FlowSpec(args.kind, args.height, args.width, args.snapshots, args.seed, params)
    fields = synthetic.generate(spec)
    formats.write_dataset(fields, out / "dataset.lampds")
    _write_run_manifest(
        args,
        out,
        ["dataset.lampds"],
        {
            "geometry": {
                "height": fields.height,
                "width": fields.width,
                "components": fields.components,
                "snapshots": fields.snapshots,
            },
            "signal_power": synthetic.signal_power(fields),
        },
    )
    return 0


def cmd_train(args) -> int:
    out = _out_dir(args)
    spec = _split_spec(args)
    dataset = _standardized(args.dataset, spec)
    need = formats.model_nbytes(
        dataset.height, dataset.width, dataset.components, args.patch_size, args.latent_dim
    )
    if need > args.budget_bytes:
        raise ValidationError(
            f"model would take {need} bytes, over the budget of {args.budget_bytes}; "
            "reduce patch count or latent dimension, or raise --budget-bytes"
        )
    train_set, test_set = split(dataset, spec)
    model = train_attention_model(
        train_set,
        args.patch_size,
        args.latent_dim,
        ridge_lambda=args.ridge_lambda,
        error_floor=args.error_floor,
        use_intercept=args.use_intercept,
    )
    formats.write_model(model, out / "model.lampmd")
    off_diag = model.pair_losses[~np.eye(model.n_patches, dtype=bool)]
    _write_run_manifest(
        args,
        out,
        ["model.lampmd"],
        {
            "ae_loss_train": ae_loss(model.pod, patchify(train_set, args.patch_size)),
            "ae_loss_test": ae_loss(model.pod, patchify(test_set, args.patch_size)),
            "pair_loss": {
                "min": float(off_diag.min()),
                "median": float(np.median(off_diag)),
                "max": float(off_diag.max()),
            },
            "model_bytes": need,
        },
    )
    return 0


def cmd_reconstruct(args) -> int:
    out = _out_dir(args)
    spec = _split_spec(args)
    model = formats.read_model(args.model)
    raw = _load_raw(args.dataset)
    if not model.grid.matches(raw):
        raise ValidationError(
            f"dataset geometry {(raw.height, raw.width, raw.components)} does not "
            f"match model grid {model.grid}"
        )
    _, test_raw = split(raw, spec)
    snr_db = _parse_snr(args.snr_db)
    mask = _mask_for(args, model.grid, None)
    test_in, sigma2 = _noisy_test_input(
        test_raw, mask, snr_db, args.seed + 1, model.grid, model.norm_stats
    )
    test_norm = apply_stats(test_raw, model.norm_stats)
    recon = reconstruct(model, test_in, mask, args.copy_through)
    sq = (recon.data - test_norm.data) ** 2
    losses = [float(v) for v in sq.mean(axis=(1, 2, 3))]
    formats.write_dataset(denormalize(recon), out / "recon.lampds")
    formats.write_csv(
        ["snapshot", "pred_loss"],
        [[i, v] for i, v in enumerate(losses)],
        out / "loss.csv",
    )
    images, ranges = _emit_field_images(
        out,
        {"truth": test_norm, "input": test_in, "recon": recon},
        args.snapshot,
        args.component,
        mask,
        model.grid,
    )
    _write_run_manifest(
        args,
        out,
        ["recon.lampds", "loss.csv", *images],
        {
            "pred_loss_mean": float(np.mean(losses)),
            "pred_loss_median": float(np.median(losses)),
            "noise_variance": metrics.noise_variance_normalized(sigma2, model.norm_stats),
            "unmasked": list(mask.unmasked),
            "image_ranges": ranges,
        },
    )
    return 0


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    spec = _split_spec(args)
    raw = _load_raw(args.dataset)
    axes = metrics.SweepAxes(
        patch_sizes=_int_list(args.patch_size),
        latent_dims=_int_list(args.latent_dim),
        snr_dbs=_float_list(args.snr_db),
        coverages=_float_list(args.coverage),
    )
    for p in axes.patch_sizes:
        for ne in axes.latent_dims:
            try:
                need = formats.model_nbytes(raw.height, raw.width, raw.components, p, ne)
            except ValidationError:
                continue
            if need > args.budget_bytes:
                raise ValidationError(
                    f"cell (P={p}, N_e={ne}) would take {need} bytes, over the "
                    f"budget of {args.budget_bytes}"
                )
    result = metrics.run_sweep(
        raw,
        axes,
        n_arrangements=args.arrangements,
        seed=args.seed,
        split_spec=spec,
        ridge_lambda=args.ridge_lambda,
        error_floor=args.error_floor,
        use_intercept=args.use_intercept,
        copy_through=args.copy_through,
    )
    rows = [
        [
            c.patch_size,
            c.latent_dim,
            c.snr_db,
            c.coverage,
            c.median_pred_loss,
            c.ae_loss,
            c.noise_variance,
            c.n_arrangements,
            c.seed,
        ]
        for c in result.cells
    ]
    formats.write_csv(
        [
            "patch_size",
            "latent_dim",
            "snr_db",
            "coverage",
            "median_pred_loss",
            "ae_loss",
            "noise_variance",
            "n_arrangements",
            "seed",
        ],
        rows,
        out / "sweep.csv",
    )
    images = _emit_sweep_heatmaps(out, result)
    skipped = [
        {
            "patch_size": c.patch_size,
            "latent_dim": c.latent_dim,
            "snr_db": c.snr_db,
            "coverage": c.coverage,
            "reason": c.skip_reason,
        }
        for c in result.cells
        if c.skip_reason
    ]
    _write_run_manifest(
        args,
        out,
        ["sweep.csv", *images],
        {"cells": len(result.cells), "skipped": skipped},
    )
    return 0


def _emit_sweep_heatmaps(out: Path, result: metrics.SweepResult, scale: int = 16) -> list[str]:
    """One PPM per (snr, coverage): log10 median loss over the (P, N_e) grid."""
    axes = result.axes
    files = []
    for snr in axes.snr_dbs:
        for cov in axes.coverages:
            cells = np.full((len(axes.patch_sizes), len(axes.latent_dims)), np.nan)
            for i, p in enumerate(axes.patch_sizes):
                for j, ne in enumerate(axes.latent_dims):
                    c = result.cell(p, ne, snr, cov)
                    if c.median_pred_loss is not None:
                        cells[i, j] = math.log10(max(c.median_pred_loss, 1e-300))
            finite = np.isfinite(cells)
            vmin = float(cells[finite].min()) if finite.any() else 0.0
            vmax = float(cells[finite].max()) if finite.any() else 0.0
            rgb = formats.heatmap_rgb(np.where(finite, cells, vmin), vmin, vmax)
            rgb = np.repeat(np.repeat(rgb, scale, axis=0), scale, axis=1)
            name = f"sweep_snr{snr:g}_cov{cov:g}.ppm"
            formats.write_ppm(rgb, out / name)
            files.append(name)
    return files


def cmd_power_map(args) -> int:
    out = _out_dir(args)
    model = formats.read_model(args.model)
    power = predictive_power(model)
    grid = model.grid
    rows = [
        [i, i // grid.cols, i % grid.cols, float(power.values[i])]
        for i in range(grid.n_patches)
    ]
    formats.write_csv(["patch_index", "row", "col", "value"], rows, out / "power.csv")
    tile = power.as_grid()
    vmin, vmax = float(tile.min()), float(tile.max())
    rgb = formats.heatmap_rgb(tile, vmin, vmax)
    rgb = np.repeat(np.repeat(rgb, grid.patch_size, axis=0), grid.patch_size, axis=1)
    formats.write_ppm(rgb, out / "power.ppm")
    _write_run_manifest(
        args,
        out,
        ["power.csv", "power.ppm"],
        {"vmin": vmin, "vmax": vmax},
    )
    return 0


def cmd_place_sensors(args) -> int:
    out = _out_dir(args)
    model = formats.read_model(args.model)
    power = predictive_power(model)
    count = args.count or max(1, round(args.coverage * model.n_patches))
    mask = place_sensors(power, count)
    formats.write_manifest(
        {
            "n_patches": mask.n_patches,
            "coverage": mask.coverage,
            "unmasked": list(mask.unmasked),
        },
        out / "sensors.json",
    )
    _write_run_manifest(
        args, out, ["sensors.json"], {"unmasked": list(mask.unmasked)}
    )
    return 0


def cmd_gappy(args) -> int:
    out = _out_dir(args)
    spec = _split_spec(args)
    raw = _load_raw(args.dataset)
    grid = PatchGrid(raw.height, raw.width, raw.components, args.patch_size)
    normalized = normalize(raw, spec.train_range(raw.snapshots))
    stats = normalized.norm_stats
    train_norm, test_norm = split(normalized, spec)
    _, test_raw = split(raw, spec)
    model = fit_gappy(train_norm, args.rank)
    snr_db = _parse_snr(args.snr_db)
    mask = _mask_for(args, grid, None)
    test_in, sigma2 = _noisy_test_input(test_raw, mask, snr_db, args.seed + 1, grid, stats)
    recon = reconstruct_gappy(model, test_in, mask, grid, args.ridge_lambda)
    loss = pred_loss(recon, test_norm)
    formats.write_csv(["rank", "coverage", "snr_db", "pred_loss"],
                      [[args.rank, args.coverage, snr_db, loss]], out / "loss.csv")
    images, ranges = _emit_field_images(
        out,
        {"truth": test_norm, "input": test_in, "gappy": recon},
        args.snapshot,
        args.component,
        mask,
        grid,
    )
    _write_run_manifest(
        args,
        out,
        ["loss.csv", *images],
        {
            "pred_loss": loss,
            "noise_variance": metrics.noise_variance_normalized(sigma2, stats),
            "unmasked": list(mask.unmasked),
            "image_ranges": ranges,
        },
    )
    return 0


def cmd_compare(args) -> int:
    out = _out_dir(args)
    spec = _split_spec(args)
    model = formats.read_model(args.model)
    raw = _load_raw(args.dataset)
    if not model.grid.matches(raw):
        raise ValidationError(
            f"dataset geometry {(raw.height, raw.width, raw.components)} does not "
            f"match model grid {model.grid}"
        )
    grid = model.grid
    stats = model.norm_stats
    train_raw, test_raw = split(raw, spec)
    train_norm = apply_stats(train_raw, stats)
    test_norm = apply_stats(test_raw, stats)
    rank = args.rank if args.rank is not None else model.latent_dim
    baseline = fit_gappy(train_norm, rank)
    power = predictive_power(model) if args.sensors_from is None and args.place_sensors else None
    mask = _mask_for(args, grid, power)
    snr_db = _parse_snr(args.snr_db)
    test_in, sigma2 = _noisy_test_input(test_raw, mask, snr_db, args.seed + 1, grid, stats)
    lamp_recon = reconstruct(model, test_in, mask, args.copy_through)
    gappy_recon = reconstruct_gappy(baseline, test_in, mask, grid, args.ridge_lambda)
    lamp_loss = pred_loss(lamp_recon, test_norm)
    gappy_loss = pred_loss(gappy_recon, test_norm)
    ratio = lamp_loss / gappy_loss if gappy_loss > 0 else math.inf
    formats.write_csv(
        ["lamp_pred_loss", "gappy_pred_loss", "ratio"],
        [[lamp_loss, gappy_loss, ratio]],
        out / "compare.csv",
    )
    images, ranges = _emit_field_images(
        out,
        {"truth": test_norm, "input": test_in, "lamp": lamp_recon, "gappy": gappy_recon},
        args.snapshot,
        args.component,
        mask,
        grid,
    )
    _write_run_manifest(
        args,
        out,
        ["compare.csv", *images],
        {
            "lamp_pred_loss": lamp_loss,
            "gappy_pred_loss": gappy_loss,
            "ratio": ratio,
            "rank": rank,
            "noise_variance": metrics.noise_variance_normalized(sigma2, stats),
            "unmasked": list(mask.unmasked),
            "image_ranges": ranges,
        },
    )
    return 0


def cmd_rerun(args) -> int:
    manifest = formats.read_manifest(args.manifest)
    try:
        command = manifest["command"]
        config = manifest["config"]
    except KeyError as exc:
        raise FormatError(f"{args.manifest}: manifest missing {exc}") from exc
    argv = _argv_from_config(command, config)
    if args.out_dir is not None:
        idx = argv.index("--out-dir")
        argv[idx + 1] = args.out_dir
    return main(argv)


_FLAG_BOOLEANS = {
    "copy_through": "--no-copy-through",
    "use_intercept": "--no-intercept",
    "place_sensors": "--place-sensors",
}


def _argv_from_config(command: str, config: dict) -> list[str]:
    argv = [command]
    for key, value in sorted(config.items()):
        if key in _FLAG_BOOLEANS:
            expected_when_flagged = key == "place_sensors"
            if bool(value) is expected_when_flagged:
                argv.append(_FLAG_BOOLEANS[key])
            continue
        if value is None:
            continue
        argv.extend(["--" + key.replace("_", "-"), str(value)])
    return argv


# Parser -----------------------------------------------------------------------

def _add_split_flags(sub):
    sub.add_argument("--train-fraction", type=float, default=0.75)
    sub.add_argument("--test-fraction", type=float, default=0.20)
    sub.add_argument("--gap-fraction", type=float, default=0.05)


def _add_eval_flags(sub):
    sub.add_argument("--coverage", type=float, required=True,
                     help="fraction of patches left unmasked")
    sub.add_argument("--snr-db", default="inf",
                     help="signal-to-noise ratio in dB (inf = noise-free)")
    sub.add_argument("--seed", type=int, default=0)
    sub.add_argument("--sensors-from", default=None, metavar="POWERMAP",
                     help="place unmasked patches at the top values of this power-map CSV")
    sub.add_argument("--snapshot", type=int, default=0,
                     help="test-split snapshot index for emitted images")
    sub.add_argument("--component", type=int, default=0,
                     help="field component for emitted images")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lamp",
        description="Masked flow reconstruction with patch-wise POD and "
        "closed-form latent attention.",
    )
    subs = parser.add_subparsers(dest="command", metavar="COMMAND")

    gen = subs.add_parser("generate", help="emit a synthetic dataset")
    gen.add_argument("--kind", choices=[LAMINAR, CHAOTIC], default=LAMINAR)
    gen.add_argument("--height", type=int, default=64)
    gen.add_argument("--width", type=int, default=64)
    gen.add_argument("--snapshots", type=int, default=160)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--speed", type=float, default=1.0)
    gen.add_argument("--wavelength", type=float, default=32.0)
    gen.add_argument("--envelope-width", type=float, default=None)
    gen.add_argument("--harmonics", type=int, default=6)
    gen.add_argument("--amplitude", type=float, default=1.0)
    gen.add_argument("--decay", type=float, default=None,
                     help="amplitude decay exponent (defaults per kind)")
    gen.add_argument("--modes", type=int, default=40)
    gen.add_argument("--packet-radius", type=float, default=None)
    gen.add_argument("--out-dir", required=True)
    gen.set_defaults(func=cmd_generate)

    train = subs.add_parser("train", help="fit compression and attention tensors")
    train.add_argument("--dataset", required=True)
    train.add_argument("--patch-size", type=int, required=True)
    train.add_argument("--latent-dim", type=int, required=True)
    train.add_argument("--ridge-lambda", type=float, default=None)
    train.add_argument("--error-floor", type=float, default=1e-12)
    train.add_argument("--no-intercept", dest="use_intercept", action="store_false")
    train.add_argument("--budget-bytes", type=int, default=DEFAULT_BUDGET_BYTES)
    _add_split_flags(train)
    train.add_argument("--out-dir", required=True)
    train.set_defaults(func=cmd_train)

    rec = subs.add_parser("reconstruct", help="masked reconstruction of the test split")
    rec.add_argument("--dataset", required=True)
    rec.add_argument("--model", required=True)
    rec.add_argument("--no-copy-through", dest="copy_through", action="store_false")
    _add_eval_flags(rec)
    _add_split_flags(rec)
    rec.add_argument("--out-dir", required=True)
    rec.set_defaults(func=cmd_reconstruct)

    sweep = subs.add_parser("sweep", help="median loss over (P, N_e, SNR, coverage)")
    sweep.add_argument("--dataset", required=True)
    sweep.add_argument("--patch-size", required=True, help="comma-separated list")
    sweep.add_argument("--latent-dim", required=True, help="comma-separated list")
    sweep.add_argument("--snr-db", default="inf", help="comma-separated list")
    sweep.add_argument("--coverage", default="0.1", help="comma-separated list")
    sweep.add_argument("--arrangements", type=int, default=25)
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--ridge-lambda", type=float, default=None)
    sweep.add_argument("--error-floor", type=float, default=1e-12)
    sweep.add_argument("--no-intercept", dest="use_intercept", action="store_false")
    sweep.add_argument("--no-copy-through", dest="copy_through", action="store_false")
    sweep.add_argument("--budget-bytes", type=int, default=DEFAULT_BUDGET_BYTES)
    _add_split_flags(sweep)
    sweep.add_argument("--out-dir", required=True)
    sweep.set_defaults(func=cmd_sweep)

    power = subs.add_parser("power-map", help="predictive power per source patch")
    power.add_argument("--model", required=True)
    power.add_argument("--out-dir", required=True)
    power.set_defaults(func=cmd_power_map)

    place = subs.add_parser("place-sensors", help="unmask the highest-power patches")
    place.add_argument("--model", required=True)
    place.add_argument("--coverage", type=float, default=0.1)
    place.add_argument("--count", type=int, default=None,
                       help="explicit sensor count (overrides --coverage)")
    place.add_argument("--out-dir", required=True)
    place.set_defaults(func=cmd_place_sensors)

    gappy = subs.add_parser("gappy", help="gappy-POD baseline reconstruction")
    gappy.add_argument("--dataset", required=True)
    gappy.add_argument("--patch-size", type=int, required=True,
                       help="patch size defining the pixel-level mask")
    gappy.add_argument("--rank", type=int, required=True)
    gappy.add_argument("--ridge-lambda", type=float, default=None)
    _add_eval_flags(gappy)
    _add_split_flags(gappy)
    gappy.add_argument("--out-dir", required=True)
    gappy.set_defaults(func=cmd_gappy)

    comp = subs.add_parser("compare", help="attention model vs gappy POD on identical inputs")
    comp.add_argument("--dataset", required=True)
    comp.add_argument("--model", required=True)
    comp.add_argument("--rank", type=int, default=None,
                      help="gappy mode count (default: the model's latent dimension)")
    comp.add_argument("--ridge-lambda", type=float, default=None)
    comp.add_argument("--no-copy-through", dest="copy_through", action="store_false")
    comp.add_argument("--place-sensors", action="store_true",
                      help="unmask the model's highest-power patches instead of random ones")
    _add_eval_flags(comp)
    _add_split_flags(comp)
    comp.add_argument("--out-dir", required=True)
    comp.set_defaults(func=cmd_compare)

    rerun = subs.add_parser("rerun", help="replay a run from its manifest")
    rerun.add_argument("manifest")
    rerun.add_argument("--out-dir", default=None)
    rerun.set_defaults(func=cmd_rerun)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    if not hasattr(args, "func"):
        parser.print_help()
        return 2
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


def console() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console()
