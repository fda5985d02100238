"""Operator entry point: grounding runs, evaluation, training, prompt
rendering, superpixel export, and the annotation server.

Structured logs (one JSON object per event) go to stderr; artifacts go to the
output directory only, so runs are scriptable and reruns with the same
configuration and a scripted client are byte-identical.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import pngio
from .benchmark import (
    PipelineOutcome,
    evaluate,
    load_dataset,
    report_csv,
    split_counts,
)
from .config import MOCK_COVER_GT, MOCK_SCHEME, RunConfig, resolve_config
from .errors import ConfigError, EmptyMaskError, SpacegroundError
from .objects import ObjectMaskSet, detect_objects, load_masks
from .raster import to_grayscale
from .refiner import (
    RefinerModel,
    TrainConfig,
    TrainSample,
    distance_flag,
    node_features,
    pseudo_logits,
    refine,
    select_placement_point,
    train,
)
from .superpixels import build_graph, slic
from .synthetic import gt_covering_responder
from .transport import RecordingTransport, RequestsTransport, RetryPolicy
from .vlm import HttpVlmClient, ReasoningConfig, ScriptedVlmClient, ground
from .vlm.prompts import make_visual_prompt


def log_event(event: str, **data) -> None:
    print(json.dumps({"event": event, **data}, sort_keys=True), file=sys.stderr)


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

_CONFIG_FLAGS = [
    ("--vlm-endpoint", "vlm_endpoint", str, 'VLM endpoint URL, "mock:<script.json>", or "mock-cover-gt"'),
    ("--vlm-model", "vlm_model", str, "model name sent to the endpoint"),
    ("--vlm-auth-token", "vlm_auth_token", str, "bearer token for live endpoints"),
    ("--detector-endpoint", "detector_endpoint", str, "object detector endpoint URL"),
    ("--object-masks", "object_masks", str, "object masks: directory of PNGs or one instance PNG"),
    ("--grid-interval", "grid_interval", int, "grid spacing in pixels"),
    ("--max-iterations", "max_iterations", int, "propose-validate iteration cap"),
    ("--max-ellipses", "max_ellipses", int, "maximum ellipses per proposal"),
    ("--retry-attempts", "retry_attempts", int, "attempts per model call"),
    ("--slic-target-count", "slic_target_count", int, "superpixel target count"),
    ("--slic-compactness", "slic_compactness", float, "superpixel compactness"),
    ("--slic-iterations", "slic_iterations", int, "superpixel k-means iterations"),
    ("--slic-seed", "slic_seed", int, "superpixel seed (provenance)"),
    ("--alpha", "alpha", float, "blend factor: 1 = pseudo-logits only, 0 = residual only"),
    ("--scale", "scale", float, "pseudo-logit scale s"),
    ("--checkpoint", "checkpoint", str, "refiner checkpoint JSON"),
    ("--concurrency", "concurrency", int, "max in-flight samples during evaluation"),
    ("--seed", "seed", int, "run seed"),
    ("--transport", "transport", str, 'network transport: "requests" or "disabled"'),
    ("--footprint-radius", "footprint_radius", int, "placement footprint half-size in pixels"),
    ("--output-dir", "output_dir", str, "artifact directory"),
]


def config_options(fn):
    fn = click.option("--config", "config_file", type=click.Path(exists=True, dir_okay=False),
                      default=None, help="JSON config file")(fn)
    for flag, name, ftype, help_text in reversed(_CONFIG_FLAGS):
        fn = click.option(flag, name, type=ftype, default=None, help=help_text)(fn)
    return fn


def build_config(kwargs: dict) -> tuple[RunConfig, set[str]]:
    config_file = kwargs.pop("config_file", None)
    cli_values = {k: v for k, v in kwargs.items() if k in RunConfig.__dataclass_fields__}
    explicit = {k for k, v in cli_values.items() if v is not None}
    return resolve_config(cli_values, explicit, config_file)


def build_transport(cfg: RunConfig):
    if cfg.transport == "disabled":
        return RecordingTransport(inner=None)
    headers = {"Authorization": f"Bearer {cfg.vlm_auth_token}"} if cfg.vlm_auth_token else {}
    return RequestsTransport(headers=headers)


def build_vlm_client(cfg: RunConfig, transport, sample=None):
    """Client per the endpoint scheme; mock-cover-gt needs a benchmark sample."""
    endpoint = cfg.vlm_endpoint
    if not endpoint:
        raise ConfigError("no VLM endpoint configured (--vlm-endpoint)")
    if endpoint == MOCK_COVER_GT:
        if sample is None:
            raise ConfigError("mock-cover-gt only works inside evaluation or training runs")
        return ScriptedVlmClient(responder=gt_covering_responder(sample))
    if endpoint.startswith(MOCK_SCHEME):
        script_path = endpoint[len(MOCK_SCHEME):]
        if not script_path:
            raise ConfigError('mock endpoint needs a script: "mock:<script.json>"')
        script = json.loads(Path(script_path).read_text())
        if not isinstance(script, list):
            raise ConfigError(f"mock script {script_path} must be a JSON list of responses")
        return ScriptedVlmClient(script=list(script))
    return HttpVlmClient(endpoint, model=cfg.vlm_model, transport=transport)


def load_objects(cfg: RunConfig, img, transport) -> ObjectMaskSet:
    if cfg.object_masks:
        return load_masks(cfg.object_masks)
    if cfg.detector_endpoint:
        return detect_objects(
            transport, cfg.detector_endpoint, img, retry=RetryPolicy(cfg.retry_attempts)
        )
    return ObjectMaskSet(masks=[])


def load_model(cfg: RunConfig, explicit: set[str]) -> RefinerModel:
    if cfg.checkpoint:
        model = RefinerModel.from_json(Path(cfg.checkpoint).read_text())
        if "alpha" in explicit:
            model.alpha = cfg.alpha
        if "scale" in explicit:
            model.scale = cfg.scale
        return model
    log_event("refiner.default_model", note="no checkpoint given; using zero-initialized residual network")
    return RefinerModel.zeros(alpha=cfg.alpha, scale=cfg.scale)


def reasoning_config(cfg: RunConfig) -> ReasoningConfig:
    return ReasoningConfig(
        grid_interval=cfg.grid_interval,
        max_iterations=cfg.max_iterations,
        max_ellipses=cfg.max_ellipses,
        retry=RetryPolicy(cfg.retry_attempts),
    )


def square_footprint(radius: int) -> np.ndarray:
    side = 2 * radius + 1
    return np.ones((side, side), dtype=bool)


def write_run_metadata(out: Path, cfg: RunConfig, **extra) -> None:
    doc = {"config_hash": cfg.config_hash(), "config": cfg.redacted_dict(), **extra}
    (out / "run.json").write_text(json.dumps(doc, indent=1, sort_keys=True))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

@click.group()
def main():
    """Ground spatial instructions to fine-grained image regions."""


@main.command("ground")
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@click.argument("instruction")
@config_options
def cmd_ground(image, instruction, **kwargs):
    """Ground INSTRUCTION in IMAGE and write mask, probability map, and
    placement point to the output directory."""
    try:
        cfg, explicit = build_config(kwargs)
        _run_ground(cfg, explicit, Path(image), instruction)
    except SpacegroundError as exc:
        log_event("error", kind=type(exc).__name__, message=str(exc))
        raise SystemExit(2)


def _run_ground(cfg: RunConfig, explicit: set[str], image_path: Path, instruction: str):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    transport = build_transport(cfg)
    img = pngio.decode_image_png(image_path.read_bytes())
    h, w = img.shape[:2]

    objects = load_objects(cfg, img, transport)
    client = build_vlm_client(cfg, transport)
    trace = ground(client, img, instruction, objects, reasoning_config(cfg))
    log_event("ground.done", iterations=trace.iterations_used, vlm_calls=trace.vlm_calls)

    sp = slic(to_grayscale(img), cfg.slic_target_count, cfg.slic_compactness,
              cfg.slic_iterations, cfg.slic_seed)
    model = load_model(cfg, explicit)
    flag = distance_flag(instruction)
    prob, final = refine(trace, img, sp, model, flag)

    placement = None
    try:
        placement = select_placement_point(prob, final, square_footprint(cfg.footprint_radius))
    except EmptyMaskError:
        log_event("ground.empty_final_mask", note="no placement point for an empty mask")

    (out / "final_mask.png").write_bytes(pngio.encode_mask_png(final))
    (out / "prob.png").write_bytes(pngio.encode_prob_png(prob))
    (out / "placement.json").write_text(
        json.dumps({"point": list(placement) if placement else None, "distance_flag": flag}, indent=1)
    )
    trace_dir = out / "trace"
    trace_dir.mkdir(exist_ok=True)
    for record in trace.records:
        k = record.bundle.iteration
        (trace_dir / f"iter{k}_prompt.png").write_bytes(pngio.encode_image_png(record.bundle.visual))
        (trace_dir / f"iter{k}_prompt.txt").write_text(record.bundle.text)
        (trace_dir / f"iter{k}_response.txt").write_text(record.proposal.raw_text)
        verdicts = [
            {"kind": v.kind, "passed": v.passed, "reasoning": v.reasoning,
             "segments": [list(s) for s in v.segments], "vlm_calls": v.vlm_calls}
            for v in record.verdicts
        ]
        (trace_dir / f"iter{k}_verdicts.json").write_text(json.dumps(verdicts, indent=1))
    write_run_metadata(out, cfg, vlm_calls=trace.vlm_calls, iterations=trace.iterations_used,
                       placement=list(placement) if placement else None)
    log_event("ground.artifacts", output_dir=str(out), config_hash=cfg.config_hash())


@main.command("evaluate")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--split", type=click.Choice(["train", "val", "test", "all"]), default="all")
@click.option("--repeats", type=int, default=1, help="evaluation repeats (std is over repeats)")
@config_options
def cmd_evaluate(manifest, split, repeats, **kwargs):
    """Evaluate the pipeline over a benchmark manifest and write report files."""
    try:
        cfg, explicit = build_config(kwargs)
        _run_evaluate(cfg, explicit, Path(manifest), split, repeats)
    except SpacegroundError as exc:
        log_event("error", kind=type(exc).__name__, message=str(exc))
        raise SystemExit(2)


def _run_evaluate(cfg: RunConfig, explicit: set[str], manifest: Path, split: str, repeats: int):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    samples = load_dataset(manifest)
    log_event("dataset.loaded", counts=split_counts(samples), total=len(samples))
    if split != "all":
        samples = [s for s in samples if s.split == split]
    if not samples:
        raise ConfigError(f"no samples in split {split!r}")

    transport = build_transport(cfg)
    model = load_model(cfg, explicit)
    shared_client = None
    if cfg.is_live_vlm():
        shared_client = build_vlm_client(cfg, transport)

    def pipeline(sample) -> PipelineOutcome:
        img = sample.load_image()
        sp = sample.load_superpixels()
        if sample.objects_kind == "detector":
            objects = detect_objects(transport, cfg.detector_endpoint or "", img,
                                     retry=RetryPolicy(cfg.retry_attempts))
        else:
            objects = load_masks(sample.resolve(sample.objects_path))
        client = shared_client or build_vlm_client(cfg, transport, sample=sample)
        calls_before = client.calls
        trace = ground(client, img, sample.instruction, objects, reasoning_config(cfg))
        flag = sample.distance_flag if sample.distance_flag is not None else distance_flag(sample.instruction)
        prob, final = refine(trace, img, sp, model, flag)
        return PipelineOutcome(prob=prob, final=final, trace=trace,
                               vlm_calls=client.calls - calls_before)

    report = evaluate(pipeline, samples, repeats=repeats,
                      max_workers=max(1, cfg.concurrency), trace_dir=out / "traces")
    report.metadata.update(config_hash=cfg.config_hash(), seed=cfg.seed, split=split)
    (out / "report.json").write_text(json.dumps(report.to_dict(), indent=1, sort_keys=True))
    (out / "report.csv").write_text(report_csv(report))
    write_run_metadata(out, cfg, split=split, repeats=repeats, rows=len(report.rows))
    log_event("evaluate.done", total=report.total, failed_rows=report.metadata["failed_rows"])


@main.command("train")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--split", type=click.Choice(["train", "val", "test", "all"]), default="train")
@click.option("--steps", type=int, default=2000)
@click.option("--learning-rate", type=float, default=1e-3)
@click.option("--focal-gamma", type=float, default=2.0)
@click.option("--focal-balance", type=float, default=0.25)
@click.option("--hidden", type=int, default=32)
@click.option("--depth", type=int, default=3)
@config_options
def cmd_train(manifest, split, steps, learning_rate, focal_gamma, focal_balance, hidden, depth, **kwargs):
    """Train the residual refiner on a manifest split and write the checkpoint
    plus the loss curve CSV."""
    try:
        cfg, explicit = build_config(kwargs)
        _run_train(cfg, Path(manifest), split, steps, learning_rate,
                   focal_gamma, focal_balance, hidden, depth)
    except SpacegroundError as exc:
        log_event("error", kind=type(exc).__name__, message=str(exc))
        raise SystemExit(2)


def _run_train(cfg: RunConfig, manifest: Path, split: str, steps: int, lr: float,
               gamma: float, balance: float, hidden: int, depth: int):
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    samples = load_dataset(manifest)
    if split != "all":
        samples = [s for s in samples if s.split == split]
    if not samples:
        raise ConfigError(f"no samples in split {split!r}")
    transport = build_transport(cfg)

    train_set = []
    for sample in samples:
        img = sample.load_image()
        sp = sample.load_superpixels()
        if sample.objects_kind == "detector":
            objects = detect_objects(transport, cfg.detector_endpoint or "", img,
                                     retry=RetryPolicy(cfg.retry_attempts))
        else:
            objects = load_masks(sample.resolve(sample.objects_path))
        client = build_vlm_client(cfg, transport, sample=sample)
        trace = ground(client, img, sample.instruction, objects, reasoning_config(cfg))
        flag = sample.distance_flag if sample.distance_flag is not None else distance_flag(sample.instruction)
        labels = np.zeros(sp.count, dtype=np.int64)
        labels[list(sample.gt_superpixels)] = 1
        train_set.append(
            TrainSample(
                graph=build_graph(sp),
                features=node_features(to_grayscale(img), trace.final_region, sp, flag),
                pseudo=pseudo_logits(list(trace.final_ellipses), sp, cfg.scale),
                labels=labels,
            )
        )
    log_event("train.dataset", samples=len(train_set), split=split)

    tc = TrainConfig(learning_rate=lr, steps=steps, focal_gamma=gamma, focal_balance=balance,
                     seed=cfg.seed, alpha=cfg.alpha, scale=cfg.scale, hidden=hidden, depth=depth)
    model, curve = train(train_set, tc)
    (out / "checkpoint.json").write_text(model.to_json())
    (out / "loss.csv").write_text("step,loss\n" + "\n".join(f"{i},{v:.10f}" for i, v in enumerate(curve)) + "\n")
    write_run_metadata(out, cfg, steps=steps, final_loss=curve[-1] if curve else None)
    log_event("train.done", steps=steps, final_loss=curve[-1] if curve else None)


@main.command("render-prompt")
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@click.option("--iteration", "-k", type=int, default=0)
@click.option("--region", type=click.Path(exists=True, dir_okay=False), default=None,
              help="region mask PNG (required for k > 0)")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@config_options
def cmd_render_prompt(image, iteration, region, out_path, **kwargs):
    """Render the grid-overlaid visual prompt for inspection."""
    try:
        cfg, _ = build_config(kwargs)
        img = pngio.decode_image_png(Path(image).read_bytes())
        mask = pngio.decode_mask_png(Path(region).read_bytes()) if region else None
        visual = make_visual_prompt(img, mask, iteration, cfg.grid_interval)
        Path(out_path).write_bytes(pngio.encode_image_png(visual))
        log_event("render_prompt.done", out=out_path, iteration=iteration)
    except SpacegroundError as exc:
        log_event("error", kind=type(exc).__name__, message=str(exc))
        raise SystemExit(2)


@main.command("superpixels")
@click.argument("image", type=click.Path(exists=True, dir_okay=False))
@click.option("--out-labels", type=click.Path(dir_okay=False), required=True)
@click.option("--out-meta", type=click.Path(dir_okay=False), required=True)
@config_options
def cmd_superpixels(image, out_labels, out_meta, **kwargs):
    """Segment an image into superpixels and export the annotation substrate
    (16-bit label PNG plus a JSON metadata sidecar)."""
    try:
        cfg, _ = build_config(kwargs)
        img = pngio.decode_image_png(Path(image).read_bytes())
        sp = slic(to_grayscale(img), cfg.slic_target_count, cfg.slic_compactness,
                  cfg.slic_iterations, cfg.slic_seed)
        Path(out_labels).write_bytes(pngio.encode_labels_png(sp.labels))
        Path(out_meta).write_text(json.dumps({"L": sp.count, "params": sp.params.to_dict()}, indent=1))
        log_event("superpixels.done", L=sp.count, labels=out_labels)
    except SpacegroundError as exc:
        log_event("error", kind=type(exc).__name__, message=str(exc))
        raise SystemExit(2)


@main.command("annotate-serve")
@click.argument("manifest", type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8701)
@click.option("--static-dir", type=click.Path(file_okay=False), default=None,
              help="built annotator frontend (defaults to frontend/dist when present)")
def cmd_annotate_serve(manifest, host, port, static_dir):
    """Serve the annotation API plus the web annotator for a manifest."""
    import uvicorn

    from .annotserver import create_app

    app = create_app(manifest, static_dir=static_dir)
    log_event("annotate.serving", host=host, port=port, manifest=manifest)
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
