"""``layoutforge`` command line.

Exit codes: 0 success, 1 a stage failed (named in the report or on stderr),
2 usage error. Oracle-backed subcommands default to replay mode; live and
record modes must be asked for explicitly.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Sequence

import httpx

from layoutforge import __version__
from layoutforge.config import Config, load_config
from layoutforge.datagen import (
    DescriptionQuota,
    SampleBatch,
    build_dpo_pairs,
    build_sft_corpus,
    generate_descriptions,
    sample_layout_batch,
    score_layout,
    write_dpo_jsonl,
)
from layoutforge.errors import AlignmentAborted, LayoutForgeError
from layoutforge.layout import (
    BevLayout,
    Room,
    Scene3D,
    SceneObject3D,
    parse_bev_layout,
    parse_cot_record,
    parse_scene_file,
    serialize_scene_file,
)
from layoutforge.llm.gateway import Gateway, make_gateway
from layoutforge.metrics import compute_metrics
from layoutforge.pipeline import (
    assemble_scene,
    generate_bev,
    lift_to_3d,
    placeholder_assets,
    run_alignment_loop,
)
from layoutforge.render import RasterConfig, rasterize_bev
from layoutforge.report import RunReport

log = logging.getLogger("layoutforge.cli")


class StageFailed(Exception):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {type(cause).__name__}: {cause}")
        self.stage = stage


def _room_arg(text: str) -> Room:
    try:
        return Room.parse_dims(text)
    except (ValueError, TypeError) as exc:
        raise argparse.ArgumentTypeError(f"expected LxWxH integers in 1..256, got {text!r} ({exc})") from None


def _emit(data: Any) -> None:
    print(json.dumps(data, indent=2, sort_keys=True, ensure_ascii=False))


def _read_scene(path: str) -> tuple[Room | None, BevLayout | Scene3D]:
    """A scene file with a room header, or bare BEV lines (room unknown)."""
    text = Path(path).read_text(encoding="utf-8")
    first = next((ln for ln in text.splitlines() if ln.strip()), "")
    if first.strip().lower().startswith("room"):
        return parse_scene_file(text)
    return None, parse_bev_layout(text)


def _need_room(room: Room | None, path: str) -> Room:
    if room is None:
        raise ValueError(f"{path} has no 'room {{...}}' header")
    return room


def as_scene3d(layout: BevLayout | Scene3D, room: Room) -> Scene3D:
    """BEV-only layouts become full-height columns, so 3D collision equals 2D overlap."""
    if isinstance(layout, Scene3D):
        return layout
    objs = tuple(SceneObject3D(o.label, o.length, o.width, o.center_x, o.center_y, o.orientation,
                               height=room.max_height, center_z=room.max_height / 2)
                 for o in layout.objects)
    return Scene3D(room, objs)


def _gateway(args, cfg: Config, client: httpx.Client | None) -> Gateway:
    return make_gateway(args.mode, cfg, args.cassette, client)


def _load_cot(path: str | None):
    if path is None:
        return None
    return parse_cot_record(json.loads(Path(path).read_text(encoding="utf-8")))


# -- subcommands -------------------------------------------------------------------------

def cmd_validate(args, cfg, client) -> int:
    room, layout = _read_scene(args.layout_file)
    out: dict[str, Any] = {"file": args.layout_file, "valid": True, "n_objects": len(layout.objects),
                           "kind": "3d" if isinstance(layout, Scene3D) else "bev"}
    if room is not None:
        m = compute_metrics(as_scene3d(layout, room), cfg.oob_tolerance, cfg.collision_eps)
        out["room"] = room.to_dict()
        out["offenders_oob"] = m.offenders_oob
        out["offenders_collision"] = m.offenders_collision
    _emit(out)
    return 0


def cmd_render(args, cfg, client) -> int:
    room, layout = _read_scene(args.scene)
    room = _need_room(room, args.scene)
    scene_id = Path(args.scene).name.split(".")[0]
    out_dir = Path(args.output or Path(args.scene).parent)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / f"{scene_id}.bev.png"
    target.write_bytes(rasterize_bev(layout, room, RasterConfig(scale=args.scale or cfg.raster_scale)))
    print(target)
    return 0


def cmd_metrics(args, cfg, client) -> int:
    room, layout = _read_scene(args.scene)
    room = _need_room(room, args.scene)
    eps = cfg.collision_eps if args.eps is None else args.eps
    tol = cfg.oob_tolerance if args.tol is None else args.tol
    _emit(compute_metrics(as_scene3d(layout, room), tol, eps).to_dict())
    return 0


def cmd_score(args, cfg, client) -> int:
    room, layout = _read_scene(args.scene)
    room = _need_room(room, args.scene)
    bev = layout.bev_layout() if isinstance(layout, Scene3D) else layout
    cot = _load_cot(args.cot)
    description = args.description or (cot.prompt if cot is not None else "")
    gw = _gateway(args, cfg, client)
    verdicts, ratios = score_layout(description, room, bev, cot, gw, args.seed)
    _emit({"verdicts": verdicts.to_dict(), "ratios": ratios,
           "oracle_calls": dict(sorted(gw.calls.items()))})
    return 0


def _batches(batch_dir: str) -> list[tuple[Path, SampleBatch]]:
    paths = sorted(Path(batch_dir).glob("*.batch.json"))
    if not paths:
        raise FileNotFoundError(f"no *.batch.json files in {batch_dir}")
    return [(p, SampleBatch.load(p)) for p in paths]


def cmd_sample(args, cfg, client) -> int:
    gw = _gateway(args, cfg, client)
    seeds = range(args.seed, args.seed + args.T)
    batch = sample_layout_batch(args.prompt, args.room, args.T, gw, prompt_id=args.prompt_id,
                                parallel=args.parallel, seeds=seeds)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / f"{args.prompt_id}.batch.json"
    batch.dump(target)
    _emit({"batch": str(target), "samples": len(batch.samples), "failures": batch.failures,
           "oracle_calls": dict(sorted(gw.calls.items()))})
    return 0


def cmd_reward(args, cfg, client) -> int:
    _emit({b.prompt_id: b.report().to_dict() for _, b in _batches(args.batch_dir)})
    return 0


def cmd_pairs(args, cfg, client) -> int:
    threshold = cfg.pair_threshold if args.threshold is None else args.threshold
    pairs = []
    for _, batch in _batches(args.batch_dir):
        pairs.extend(build_dpo_pairs(batch, threshold, args.max_pairs))
    target = Path(args.output or Path(args.batch_dir) / "pairs.dpo.jsonl")
    n = write_dpo_jsonl(pairs, target)
    _emit({"pairs": n, "threshold": threshold, "output": str(target)})
    return 0


def cmd_sft_build(args, cfg, client) -> int:
    scenes = []
    for path in sorted(Path(args.gt_dir).glob("*.scene")):
        room, layout = parse_scene_file(path.read_text(encoding="utf-8"))
        bev = layout.bev_layout() if isinstance(layout, Scene3D) else layout
        scenes.append((path.name, room, bev))
    if not scenes:
        raise FileNotFoundError(f"no *.scene files in {args.gt_dir}")
    gw = _gateway(args, cfg, client)
    with ThreadPoolExecutor(max_workers=max(1, args.parallel)) as pool:
        parts = list(pool.map(lambda s: build_sft_corpus([s], gw), scenes))
    lines = [ln for part, _ in parts for ln in part]
    statuses = [st for _, part in parts for st in part]
    target = Path(args.output or Path(args.gt_dir) / "corpus.sft.jsonl")
    target.write_text("".join(ln + "\n" for ln in lines), encoding="utf-8")
    _emit({"output": str(target), "accepted": len(lines),
           "records": [{"source": s.source, "status": s.status, "detail": s.detail} for s in statuses]})
    return 0


def cmd_describe(args, cfg, client) -> int:
    gw = _gateway(args, cfg, client)
    records = generate_descriptions(DescriptionQuota.parse(args.quotas), gw, args.seed)
    data = [r.to_dict() for r in records]
    if args.output:
        Path(args.output).write_text(json.dumps(data, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        print(args.output)
    else:
        _emit(data)
    return 0


def _raster(cfg: Config):
    rc = RasterConfig(scale=cfg.raster_scale)
    return lambda scene: rasterize_bev(scene, scene.room, rc)


def _run_alignment(report: RunReport, gw: Gateway, scene: Scene3D, cot, assets, description: str,
                   max_iters: int, cfg: Config) -> Scene3D:
    with report.stage("align", gw.calls) as rec:
        try:
            state = run_alignment_loop(scene, cot, assets, gw, max_iters, description=description,
                                       render_fn=_raster(cfg))
        except AlignmentAborted as exc:
            rec.status = "aborted"
            rec.detail = f"{exc}; kept best-so-far scene after {len(exc.history)} updates"
            report.exit_status, report.failed_stage = 1, "align"
            return exc.best_scene
        rec.detail = f"{state.iteration} updates, {len(state.evaluations)} evaluations"
        for i, ev in enumerate(state.evaluations):
            for err in ev.errors:
                report.warnings.append(f"evaluation {i}: {err}")
        return state.scene


def _write_scene_outputs(report: RunReport, out_dir: Path, scene_id: str, scene: Scene3D, cfg: Config,
                         cot=None) -> None:
    with report.stage("assemble"):
        manifest = assemble_scene(scene, placeholder_assets(scene, scene_id))
    with report.stage("render"):
        png = _raster(cfg)(scene)
    with report.stage("write"):
        out_dir.mkdir(parents=True, exist_ok=True)
        files = {"manifest.json": manifest.to_json().encode(),
                 f"{scene_id}.bev.png": png,
                 f"{scene_id}.scene": serialize_scene_file(scene.room, scene).encode()}
        if cot is not None:
            files[f"{scene_id}.cot.json"] = (json.dumps(cot.to_payload(), indent=2, sort_keys=True,
                                                        ensure_ascii=False) + "\n").encode()
        for name, data in files.items():
            (out_dir / name).write_bytes(data)
            report.outputs.append(name)


def _finish(report: RunReport, out_dir: Path) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    report.outputs.extend(["run_report.json", "run_report.txt"])
    report.write(out_dir)
    sys.stdout.write(report.to_text())
    if report.exit_status:
        print(f"stage failed: {report.failed_stage}", file=sys.stderr)
    return report.exit_status


def cmd_generate(args, cfg, client) -> int:
    report = RunReport("generate")
    out_dir = Path(args.out)
    max_iters = cfg.max_iters if args.max_iters is None else args.max_iters
    with report.capture_warnings():
        try:
            with report.stage("gateway"):
                gw = _gateway(args, cfg, client)
            with report.stage("generate_bev", gw.calls):
                cot, bev = generate_bev(args.prompt, args.room, gw, seed=args.seed)
            with report.stage("lift_to_3d", gw.calls):
                scene = lift_to_3d(args.prompt, bev, args.room, gw, seed=args.seed)
            assets = placeholder_assets(scene, args.scene_id)
            scene = _run_alignment(report, gw, scene, cot, assets, args.prompt, max_iters, cfg)
            _write_scene_outputs(report, out_dir, args.scene_id, scene, cfg, cot)
        except Exception as exc:  # recorded on the failing stage
            log.debug("generate stopped: %s", exc)
    return _finish(report, out_dir)


def cmd_align(args, cfg, client) -> int:
    report = RunReport("align")
    out_dir = Path(args.out)
    scene_id = args.scene_id or Path(args.scene).name.split(".")[0]
    max_iters = cfg.max_iters if args.max_iters is None else args.max_iters
    with report.capture_warnings():
        try:
            with report.stage("load"):
                room, layout = _read_scene(args.scene)
                room = _need_room(room, args.scene)
                if not isinstance(layout, Scene3D):
                    raise ValueError("align needs a 3D scene file (height and center_z on every line)")
                cot = _load_cot(args.cot)
                description = args.description or (cot.prompt if cot is not None else "")
                if not description:
                    raise ValueError("align needs --description or --cot")
            with report.stage("gateway"):
                gw = _gateway(args, cfg, client)
            assets = placeholder_assets(layout, scene_id)
            scene = _run_alignment(report, gw, layout, cot, assets, description, max_iters, cfg)
            _write_scene_outputs(report, out_dir, scene_id, scene, cfg)
        except Exception as exc:
            log.debug("align stopped: %s", exc)
    return _finish(report, out_dir)


# -- parser ------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="layoutforge", description="Text-to-3D-layout synthesis tools.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="JSON config file (default ./layoutforge.config if present)")
    p.add_argument("--seed", type=int, default=None, help="base sampling seed (default from config)")
    p.add_argument("--parallel", type=int, default=1, help="concurrent scenes or samples")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    oracle = argparse.ArgumentParser(add_help=False)
    oracle.add_argument("--mode", choices=("live", "replay", "record"), default="replay")
    oracle.add_argument("--cassette", help="cassette file (required for replay and record)")

    s = sub.add_parser("validate", help="parse a layout or scene file and check its invariants")
    s.add_argument("layout_file")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("render", help="rasterize a scene to <scene_id>.bev.png")
    s.add_argument("scene")
    s.add_argument("-o", "--output", help="output directory (default: next to the scene)")
    s.add_argument("--scale", type=int)
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("metrics", help="out-of-bound and collision rates")
    s.add_argument("scene")
    s.add_argument("--eps", type=float)
    s.add_argument("--tol", type=float)
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("score", parents=[oracle], help="evaluator verdicts and ratio vector for a scene")
    s.add_argument("scene")
    s.add_argument("--cot")
    s.add_argument("--description")
    s.set_defaults(func=cmd_score, needs_oracle=True)

    s = sub.add_parser("sample", parents=[oracle], help="sample T layouts for one prompt into a batch file")
    s.add_argument("prompt")
    s.add_argument("--room", type=_room_arg, required=True)
    s.add_argument("--T", type=int, default=30)
    s.add_argument("--prompt-id", default="prompt")
    s.add_argument("--out-dir", default="batches")
    s.set_defaults(func=cmd_sample, needs_oracle=True)

    s = sub.add_parser("reward", help="entropy-weighted rewards for every batch in a directory")
    s.add_argument("batch_dir")
    s.set_defaults(func=cmd_reward)

    s = sub.add_parser("pairs", help="DPO preference pairs from batch files")
    s.add_argument("batch_dir")
    s.add_argument("--threshold", type=float)
    s.add_argument("--max-pairs", type=int, help="optional cap per prompt")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_pairs)

    s = sub.add_parser("sft-build", parents=[oracle], help="CoT SFT records from ground-truth scene files")
    s.add_argument("gt_dir")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_sft_build, needs_oracle=True)

    s = sub.add_parser("describe", parents=[oracle], help="generate scene descriptions")
    s.add_argument("--quotas", default="40:2:2:1", help="types:coarse:medium:fine")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_describe, needs_oracle=True)

    s = sub.add_parser("generate", parents=[oracle], help="full text-to-scene pipeline")
    s.add_argument("prompt")
    s.add_argument("--room", type=_room_arg, required=True)
    s.add_argument("--out", default="out")
    s.add_argument("--scene-id", default="scene")
    s.add_argument("--max-iters", type=int)
    s.set_defaults(func=cmd_generate, needs_oracle=True)

    s = sub.add_parser("align", parents=[oracle], help="run the alignment loop on a 3D scene file")
    s.add_argument("scene")
    s.add_argument("--max-iters", type=int)
    s.add_argument("--cot")
    s.add_argument("--description")
    s.add_argument("--out", default="out")
    s.add_argument("--scene-id")
    s.set_defaults(func=cmd_align, needs_oracle=True)
    return p


def main(argv: Sequence[str] | None = None, client: httpx.Client | None = None) -> int:
    """Entry point. ``client`` lets tests and fixture scripts inject an HTTP transport."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "needs_oracle", False) and args.mode != "live" and not args.cassette:
            parser.error(f"--mode {args.mode} needs --cassette")
        if args.parallel < 1:
            parser.error("--parallel must be >= 1")
        if getattr(args, "max_iters", None) is not None and args.max_iters < 0:
            parser.error("--max-iters must be >= 0")
        if getattr(args, "T", None) is not None and args.T < 2:
            parser.error("--T must be >= 2")
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except (OSError, ValueError, TypeError) as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    if args.seed is None:
        args.seed = cfg.seed
    try:
        return args.func(args, cfg, client)
    except (LayoutForgeError, OSError, ValueError, KeyError) as exc:
        print(f"error: {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
