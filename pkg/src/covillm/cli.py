"""Command-line entry points: scene generation, one-shot pipeline runs, the
evaluation harness, fine-tune dataset emission, camera-height analysis,
and the service launcher.

Exit codes: 0 ok, 1 pipeline error, 2 usage/config error.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import cases, __version__
from .backends import make_backend
from .board import BoardConfig
from .classify import (AmbiguousDescriptorError, ClassificationParseError,
                       associate, parse_classification)
from .evaluation import run_eval
from .executor import (WorkcellComponent, WorkcellState, events_to_jsonl,
                       execute_plan)
from .filters import FilterParams
from .frames import read_frame, write_frame, write_pgm
from .geometry import GeometryContext, valid_camera_height_range
from .localize import LocalizationParams, SurfaceNotFound, localize
from .planner import (InstructionRequest, PlannerError, PlanningFailed,
                      generate_finetune_dataset, plan_deterministic, plan_llm)
from .synth import SceneSpec, synthesize_frame


class PipelineError(click.ClickException):
    exit_code = 1


class ConfigError(click.ClickException):
    exit_code = 2


@click.group()
@click.version_option(version=__version__)
@click.option("--seed", type=int, default=0, show_default=True,
              help="Seed for every randomized step.")
@click.option("--json", "json_out", is_flag=True, help="Machine-readable output.")
@click.option("--config", "config_path", type=click.Path(exists=True),
              help="Service/transform configuration file.")
@click.pass_context
def main(ctx, seed, json_out, config_path):
    ctx.ensure_object(dict)
    ctx.obj["seed"] = seed
    ctx.obj["json"] = json_out
    ctx.obj["config_path"] = config_path


@main.command("gen-scene")
@click.option("--level", type=click.IntRange(1, 3), required=True)
@click.option("--product", type=click.IntRange(1, 3), required=True)
@click.option("--noise-sigma", type=float, default=0.0, show_default=True)
@click.option("--dropout", type=float, default=0.0, show_default=True)
@click.option("--out", type=click.Path(), required=True,
              help="Output prefix; writes <out>.scene.json, <out>.cvlm, <out>.pgm")
@click.pass_context
def gen_scene(ctx, level, product, noise_sigma, dropout, out):
    """Emit the scene spec and synthesized frame for one catalog product."""
    seed = ctx.obj["seed"]
    labels = cases.PRODUCTS[level][product - 1]
    scene = cases.build_scene(labels, seed, noise_sigma_mm=noise_sigma,
                              dropout_rate=dropout)
    geo = GeometryContext.default()
    frame = synthesize_frame(scene, geo.intrinsics, seed)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.with_suffix(".scene.json").write_text(scene.to_json() + "\n")
    write_frame(frame, out.with_suffix(".cvlm"))
    write_pgm(frame, out.with_suffix(".pgm"))
    payload = {"scene": str(out.with_suffix(".scene.json")),
               "frame": str(out.with_suffix(".cvlm")),
               "instruction": cases.instruction_for(labels)}
    if ctx.obj["json"]:
        click.echo(json.dumps(payload, sort_keys=True))
    else:
        click.echo(f"scene:       {payload['scene']}")
        click.echo(f"frame:       {payload['frame']}")
        click.echo(f"instruction: {payload['instruction']}")


def _make_llm_backend(board: BoardConfig, kind: str, base_url: str, model: str):
    if kind == "http":
        api_key = os.environ.get("COVILLM_API_KEY", "")
        if not api_key:
            raise ConfigError("COVILLM_API_KEY is not set; refusing to "
                              "configure the http backend")
        return make_backend("http", base_url=base_url, model=model,
                            api_key=api_key)
    return make_backend(kind, board=board)


@main.command("run")
@click.option("--scene", "scene_path", type=click.Path(exists=True),
              required=True, help="Scene JSON or .cvlm frame file.")
@click.option("--classification", "cls_path", type=click.Path(exists=True),
              required=True)
@click.option("--instruction", required=True)
@click.option("--mode", type=click.Choice(["deterministic", "llm"]),
              default="deterministic", show_default=True)
@click.option("--backend", "backend_kind",
              type=click.Choice(["oracle", "garbage", "http"]),
              default="oracle", show_default=True)
@click.option("--base-url", default="", help="http backend base URL.")
@click.option("--model", default="", help="http backend model id.")
@click.pass_context
def run(ctx, scene_path, cls_path, instruction, mode, backend_kind,
        base_url, model):
    """Full pipeline in-process: localize, classify, plan, execute."""
    seed = ctx.obj["seed"]
    geo = GeometryContext.default()
    board = BoardConfig.default()
    fp, lp = FilterParams(), LocalizationParams()

    if scene_path.endswith(".cvlm"):
        frame = read_frame(scene_path)
    else:
        try:
            scene = SceneSpec.from_json(Path(scene_path).read_text())
        except Exception as exc:
            raise ConfigError(f"scene: cannot parse {scene_path}: {exc}")
        frame = synthesize_frame(scene, geo.intrinsics, seed)

    try:
        cands, d_s = localize([frame], fp, lp)
    except SurfaceNotFound as exc:
        raise PipelineError(f"localization: {exc}")
    region = lp.roi_for(frame)

    text = Path(cls_path).read_text()
    try:
        stmts = parse_classification(text)
        assoc = associate(stmts, cands, region)
    except (ClassificationParseError, AmbiguousDescriptorError) as exc:
        raise PipelineError(f"classification: {exc}")

    req = InstructionRequest(instruction=instruction, mode=mode)
    try:
        if mode == "deterministic":
            plan = plan_deterministic(req, assoc, cands, geo, board)
        else:
            backend = _make_llm_backend(board, backend_kind, base_url, model)
            plan = plan_llm(req, cands, text, board, backend, geo, region)
    except (PlannerError, PlanningFailed) as exc:
        raise PipelineError(f"planner: {exc}")

    label_of = {cid: stmt.label for stmt, cid in assoc.bindings}
    comps = [WorkcellComponent(id=c.id, position=geo.candidate_base_point(c),
                               label=label_of.get(c.id)) for c in cands]
    state = WorkcellState.fresh(comps, board, home_pose=geo.t_be)
    state, events = execute_plan(state, plan)
    completed = state.cursor == plan.n

    if ctx.obj["json"]:
        click.echo(json.dumps({"plan": plan.to_dict(),
                               "provenance": plan.provenance,
                               "events": [e.to_dict() for e in events],
                               "completed": completed}, sort_keys=True))
    else:
        click.echo(f"surface depth: {d_s:.0f} mm, {len(cands)} candidates")
        click.echo(plan.to_json())
        click.echo(events_to_jsonl(events), nl=False)
    if not completed:
        raise PipelineError("executor: plan did not run to completion")


@main.command("eval")
@click.option("--backend", "backend_kind",
              type=click.Choice(["oracle", "garbage", "http"]),
              default="oracle", show_default=True)
@click.option("--base-url", default="")
@click.option("--model", default="")
@click.option("--trials", type=click.IntRange(min=1), default=3,
              show_default=True)
@click.pass_context
def eval_cmd(ctx, backend_kind, base_url, model, trials):
    """Task-planning accuracy per case level, against the reference planner."""
    board = BoardConfig.default()
    backend = _make_llm_backend(board, backend_kind, base_url, model)
    report = run_eval(backend, trials=trials, seed=ctx.obj["seed"])
    click.echo(report.to_json() if ctx.obj["json"] else report.to_text())


@main.command("gen-finetune")
@click.option("--count", type=click.IntRange(min=1), default=100,
              show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.pass_context
def gen_finetune(ctx, count, out):
    """Write the chat-format fine-tune dataset, one JSON record per line."""
    records = generate_finetune_dataset(count=count, seed=ctx.obj["seed"])
    try:
        with open(out, "w") as fh:
            for rec in records:
                fh.write(rec.to_json_line() + "\n")
    except OSError as exc:
        raise PipelineError(f"cannot write {out}: {exc}")
    click.echo(json.dumps({"records": len(records), "path": out})
               if ctx.obj["json"] else f"wrote {len(records)} records to {out}")


@main.command("height-range")
@click.option("--spec", "spec_path", type=click.Path(exists=True),
              help="Component footprint spec JSON; defaults to the built-in catalog.")
@click.option("--operating-height", type=float, default=400.0, show_default=True)
@click.pass_context
def height_range(ctx, spec_path, operating_height):
    """Valid camera-height interval per component category."""
    from .geometry import ComponentFootprintSpec
    lp = LocalizationParams()
    intr = GeometryContext.default().intrinsics
    if spec_path:
        try:
            raw = json.loads(Path(spec_path).read_text())
            specs = [ComponentFootprintSpec(
                label=s["label"], height_mm=s["height_mm"],
                min_extent_mm=s["min_extent_mm"],
                max_extent_mm=s["max_extent_mm"]) for s in raw]
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"bad component spec file: {exc}")
    else:
        specs = cases.footprint_specs()

    rows = []
    for spec in specs:
        rng = valid_camera_height_range(spec, lp, intr)
        rows.append({"category": spec.label,
                     "z_lo_mm": None if rng is None else rng[0],
                     "z_hi_mm": None if rng is None else rng[1],
                     "contains_operating_height":
                         rng is not None and rng[0] <= operating_height <= rng[1]})
    if ctx.obj["json"]:
        click.echo(json.dumps(rows, sort_keys=True))
        return
    click.echo(f"{'category':<28}{'z_lo':>8}{'z_hi':>8}  ok@{operating_height:.0f}mm")
    for r in rows:
        if r["z_lo_mm"] is None:
            click.echo(f"{r['category']:<28}{'empty':>16}  no")
        else:
            flag = "yes" if r["contains_operating_height"] else "NO"
            click.echo(f"{r['category']:<28}{r['z_lo_mm']:>8.0f}"
                       f"{r['z_hi_mm']:>8.0f}  {flag}")


@main.command("serve")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8400, show_default=True)
@click.pass_context
def serve(ctx, host, port):
    """Run the HTTP service (config via --config, see README)."""
    import uvicorn

    from .service import ServiceConfig, create_app

    config_path = ctx.obj["config_path"]
    try:
        if config_path:
            config = ServiceConfig.from_file(config_path)
        else:
            config = ServiceConfig(data_dir=Path("data"),
                                   geo=GeometryContext.default(),
                                   board=BoardConfig.default())
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad service config: {exc}")
    app = create_app(config)
    try:
        uvicorn.run(app, host=host, port=port)
    except SystemExit as exc:  # uvicorn exits 1 on bind failure
        sys.exit(exc.code or 1)


if __name__ == "__main__":
    main()
