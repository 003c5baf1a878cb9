from __future__ import annotations

import argparse
import asyncio
import os
import sys
import time
from dataclasses import fields
from typing import Optional, Sequence

from rich.progress import BarColumn, Progress, SpinnerColumn, TaskProgressColumn, TextColumn

from src.ablation import ABLATION_SCHEMES, ABLATION_SEEDS, run_ablation
from src.checkpoint import load_checkpoint
from src.config import RunConfig, apply_overrides, load_run_config, write_resolved_config
from src.dataset import load_image, load_manifest, split_records
from src.errors import (
    EXIT_IO,
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_USAGE,
    EXIT_VALIDATION,
    exit_code_for,
)
from src.evaluation import (
    build_index,
    load_index,
    localization_report,
    north_noise_sweep,
    recall_at_k,
    save_index,
    top_k,
)
from src.geometry import ground_orientation_map, satellite_orientation_map, save_uv_png
from src.i18n import resolve_locale, set_locale, t
from src.model import count_parameters, parameter_bytes
from src.objective import exhaustive_triplets
from src.reporter import (
    console,
    export_ablation,
    export_eval,
    export_sweep,
    export_training_summary,
    print_ablation_table,
    print_localization_table,
    print_query_table,
    print_recall_table,
    print_step,
    print_sweep_table,
    print_training_summary,
    refresh_verbosity,
)
from src.synthetic import generate_synthetic_world
from src.trainer import EMBED_BATCH, embed_images, embed_records, make_loader, planned_steps, train

# ---------------------------------------------------------------------------
# CLI argument parsing
# ---------------------------------------------------------------------------


class CliParser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config_options() -> argparse.ArgumentParser:
    """Shared --config plus one --key flag per RunConfig field."""
    p = CliParser(add_help=False)
    p.add_argument("--config", default=None, metavar="PATH", help="Flat YAML run config")
    p.add_argument(
        "--lang",
        choices=["en", "zh"],
        default=None,
        help="Output language: en or zh (default: auto-detect)",
    )
    group = p.add_argument_group("run config overrides")
    for f in fields(RunConfig):
        group.add_argument(
            "--" + f.name.replace("_", "-"),
            dest=f.name,
            default=None,
            metavar="VALUE",
        )
    return p


def _name_list(text: str) -> list[str]:
    names = [part.strip() for part in text.split(",") if part.strip()]
    if not names:
        raise argparse.ArgumentTypeError("expected a comma-separated list")
    return names


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in _name_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _config_options()
    p = CliParser(
        prog="python main.py",
        description="Cross-view geo-localization: train and evaluate a ground-to-overhead retrieval model",
    )
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)

    s = sub.add_parser("synth", parents=[common], help="Render a synthetic cross-view dataset")
    s.add_argument("--out", required=True, metavar="DIR", help="Dataset directory to create")

    s = sub.add_parser("train", parents=[common], help="Train the Siamese model")
    s.add_argument("--resume", default=None, metavar="CKPT", help="Continue from a checkpoint")

    s = sub.add_parser("embed", parents=[common], help="Embed one side of a manifest into an index")
    s.add_argument("--side", required=True, choices=["ground", "satellite"])
    s.add_argument("--split", default="test", choices=["train", "test", "all"])
    s.add_argument("--out", default=None, metavar="PATH", help="Index file (default: OUTPUT_DIR/SIDE_SPLIT.idx)")

    s = sub.add_parser("eval", parents=[common], help="Recall@K and metric localisation")
    s.add_argument("--ground-index", required=True, metavar="PATH")
    s.add_argument("--satellite-index", required=True, metavar="PATH")

    s = sub.add_parser("sweep", parents=[common], help="Recall under random north errors")
    s.add_argument("--satellite-index", required=True, metavar="PATH")
    s.add_argument("--split", default="test", choices=["train", "test", "all"])

    s = sub.add_parser("query", parents=[common], help="Top-K satellite tiles for one panorama")
    s.add_argument("panorama", metavar="IMAGE")
    s.add_argument("--satellite-index", required=True, metavar="PATH")

    s = sub.add_parser("orient", parents=[common], help="Export a U-V orientation map as PNG")
    s.add_argument("--view", required=True, choices=["ground", "satellite"])
    s.add_argument("--width", required=True, type=int)
    s.add_argument("--height", required=True, type=int)
    s.add_argument("--style", default="raw", choices=["raw", "color"])
    s.add_argument("--out", required=True, metavar="PATH")

    s = sub.add_parser("ablation", parents=[common], help="Train, embed and score every scheme x seed, then compare medians")
    s.add_argument("--schemes", type=_name_list, default=list(ABLATION_SCHEMES), metavar="LIST",
                   help="Comma-separated schemes (default: rgb-baseline,I,II)")
    s.add_argument("--seeds", type=_int_list, default=list(ABLATION_SEEDS), metavar="LIST",
                   help="Comma-separated seeds (default: 1,2,3)")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_run_config(args.config)
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig) if getattr(args, f.name) is not None}
    if args.command == "synth":
        overrides.setdefault("data_dir", args.out)
        overrides.setdefault("manifest", os.path.join(args.out, "manifest.csv"))
    return apply_overrides(cfg, overrides).validate()


def _progress() -> Progress:
    return Progress(
        SpinnerColumn(),
        BarColumn(),
        TaskProgressColumn(),
        TextColumn("{task.completed}/{task.total}"),
        console=console,
    )


def _load_records(cfg: RunConfig):
    console.print(t("loading_manifest", path=cfg.manifest))
    records = load_manifest(cfg.manifest)
    n_train = len(split_records(records, "train"))
    console.print(t("manifest_loaded", total=len(records), train=n_train, test=len(records) - n_train))
    return records


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

async def cmd_synth(args, cfg: RunConfig) -> None:
    world_cfg = cfg.world()
    console.print(t("phase_synth", current=1, total=1, n=world_cfg.n_locations))
    with _progress() as progress:
        task = progress.add_task("synth", total=world_cfg.n_locations)
        world = await asyncio.to_thread(
            generate_synthetic_world, world_cfg, args.out, lambda n: progress.advance(task, n),
        )
    write_resolved_config(cfg, args.out)
    n_test = len(split_records(world.records, "test"))
    console.print(t("synth_done", path=args.out, train=len(world.records) - n_test, test=n_test))


async def cmd_train(args, cfg: RunConfig) -> None:
    records = _load_records(cfg)
    console.print(t("config_written", path=write_resolved_config(cfg, cfg.output_dir)), style="dim")
    n_train = len(split_records(records, "train"))
    total = planned_steps(cfg, n_train)
    console.print(t(
        "phase_train", current=1, total=1, steps=total, batch=cfg.batch_size,
        triplets=len(exhaustive_triplets(cfg.batch_size)),
    ))
    with _progress() as progress:
        task = progress.add_task("train", total=total)

        def on_start(model, start_step: int) -> None:
            if args.resume:
                console.print(t("phase_resume", path=args.resume, step=start_step))
                progress.update(task, completed=start_step)
            console.print(t(
                "model_footprint", scheme=cfg.scheme, params=count_parameters(model),
                mb=parameter_bytes(model) / 1e6, dim=model.cfg.descriptor_dim,
            ))

        result = await train(
            cfg, records, resume=args.resume,
            progress_cb=lambda n: progress.advance(task, n),
            step_cb=print_step, start_cb=on_start,
        )
    print_training_summary(result.summary)
    export_training_summary(cfg.output_dir, result.summary)
    if result.summary.first_loss is not None:
        console.print(t(
            "train_done", step=result.summary.steps,
            first=result.summary.first_loss, last=result.summary.last_loss,
        ))
    console.print(t("checkpoint_saved", path=result.checkpoint_path))


async def cmd_embed(args, cfg: RunConfig) -> None:
    records = split_records(_load_records(cfg), args.split)
    console.print(t("config_written", path=write_resolved_config(cfg, cfg.output_dir)), style="dim")
    model, _, _ = load_checkpoint(cfg.checkpoint)
    console.print(t("phase_embed", current=1, total=1, n=len(records), side=args.side))
    with _progress() as progress:
        task = progress.add_task("embed", total=len(records))
        embeddings = await embed_records(
            model, records, args.side, make_loader(cfg, cache=False),
            progress_cb=lambda n: progress.advance(task, n),
        )
    positions = None
    if records and all(r.position is not None for r in records):
        positions = [r.position for r in records]
    index = build_index([r.id for r in records], embeddings, positions)
    out = args.out or os.path.join(cfg.output_dir, f"{args.side}_{args.split}.idx")
    save_index(index, out)
    console.print(t("index_saved", n=index.size, dim=index.dim, path=out))


async def cmd_eval(args, cfg: RunConfig) -> None:
    ground = load_index(args.ground_index)
    satellite = load_index(args.satellite_index)
    write_resolved_config(cfg, cfg.output_dir)
    recall = recall_at_k(satellite, ground.matrix, ground.ids, cfg.recall_ks)
    print_recall_table(recall)

    localization = None
    if ground.positions is not None and satellite.positions is not None:
        localization = localization_report(
            satellite, ground.matrix, ground.positions,
            n_top=cfg.localization_top, radius_m=cfg.localization_radius,
        )
        print_localization_table(localization, cfg.recall_ks)
    else:
        console.print(t("no_positions"), style="yellow")
    export_eval(cfg.output_dir, recall, localization)


async def cmd_sweep(args, cfg: RunConfig) -> None:
    records = split_records(_load_records(cfg), args.split)
    write_resolved_config(cfg, cfg.output_dir)
    index = load_index(args.satellite_index)
    model, _, _ = load_checkpoint(cfg.checkpoint)
    panoramas = await make_loader(cfg, cache=False).ground(records)

    console.print(t("phase_sweep", current=1, total=1, levels=len(cfg.sweep_levels)))
    with _progress() as progress:
        task = progress.add_task("sweep", total=len(cfg.sweep_levels))
        report = north_noise_sweep(
            lambda images: embed_images(model, images, "ground", EMBED_BATCH),
            panoramas,
            [r.id for r in records],
            index,
            levels=cfg.sweep_levels,
            seed=cfg.seed,
            ks=cfg.recall_ks,
            progress_cb=lambda n: progress.advance(task, n),
        )
    print_sweep_table(report)
    export_sweep(cfg.output_dir, report)


async def cmd_query(args, cfg: RunConfig) -> None:
    index = load_index(args.satellite_index)
    model, _, _ = load_checkpoint(cfg.checkpoint)
    image = load_image(args.panorama, cfg.ground_height, cfg.ground_width)
    query = embed_images(model, [image], "ground")[0]
    started = time.perf_counter()
    hits = top_k(index, query, cfg.top_k)
    elapsed_ms = (time.perf_counter() - started) * 1000.0
    positions = None
    if index.positions is not None:
        positions = {rec_id: tuple(index.positions[i]) for i, rec_id in enumerate(index.ids)}
    print_query_table(hits, positions, elapsed_ms)


async def cmd_orient(args, cfg: RunConfig) -> None:
    if args.view == "ground":
        orientation = ground_orientation_map(args.width, args.height)
    else:
        orientation = satellite_orientation_map(args.width, args.height)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    save_uv_png(orientation, args.out, style=args.style)
    console.print(t(
        "orient_saved", view=args.view, width=args.width, height=args.height, style=args.style, path=args.out,
    ))


async def cmd_ablation(args, cfg: RunConfig) -> None:
    records = _load_records(cfg)
    console.print(t("config_written", path=write_resolved_config(cfg, cfg.output_dir)), style="dim")
    runs = len(args.schemes) * len(args.seeds)
    console.print(t(
        "phase_ablation", current=1, total=1, runs=runs,
        schemes=",".join(args.schemes), seeds=",".join(str(s) for s in args.seeds),
    ))
    with _progress() as progress:
        task = progress.add_task("ablation", total=runs)

        def on_run(run) -> None:
            console.print(t(
                "ablation_run_done", scheme=run.scheme, seed=run.seed, r1=run.recall.curve[0],
                first=run.first_loss, last=run.last_loss,
            ))
            progress.advance(task, 1)

        report = await run_ablation(cfg, records, args.schemes, args.seeds, run_cb=on_run)
    print_ablation_table(report)
    export_ablation(cfg.output_dir, report)


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "embed": cmd_embed,
    "eval": cmd_eval,
    "sweep": cmd_sweep,
    "query": cmd_query,
    "orient": cmd_orient,
    "ablation": cmd_ablation,
}

_ERROR_KEYS = {
    EXIT_VALIDATION: "error_validation",
    EXIT_IO: "error_io",
    EXIT_NUMERIC: "error_numeric",
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK

    # Set locale before any output
    set_locale(resolve_locale(args.lang))
    refresh_verbosity()

    try:
        cfg = resolve_config(args)
        asyncio.run(COMMANDS[args.command](args, cfg))
    except Exception as exc:
        code = exit_code_for(exc)
        if code is None:
            raise
        console.print(t(_ERROR_KEYS[code], error=exc), style="bold red")
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
