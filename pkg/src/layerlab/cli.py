"""Command-line interface.

Subcommands compose the library: validate, render, masks, seed, snap,
propagate, label-map, layers, depth, stratify, reconstruct, psd, metrics,
augment, serve. Exit codes: 0 success, 1 domain error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import archive, formats, report
from .depth import (
    BACK,
    FRONT,
    kmeans_1d,
    pseudo_depth,
    render_depth_map,
    stratify_layer,
)
from .errors import LayerLabError, TooManyLayers, UnknownClass
from .labeling import (
    Label,
    LabelAssignment,
    propagate_labels,
    render_label_map,
    snap_labels,
    vote_seed_labels,
)
from .layers import extract_layer, reconstruct
from .metrics import (
    MetricsReport,
    metric_depth,
    metric_dice_loss,
    metric_mask_mse,
    metric_psnr_ssim,
)
from .model import CharacterModel, DatasetManifest, ManifestEntry
from .psd import PsdLayerEntry, export_psd, write_psd
from .raster import generate_orientation_grid, render_composite, visibility_masks
from .taxonomy import Taxonomy


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layerlab",
        description="Layered 2.5D character data engine",
    )
    parser.add_argument("--model", help="LCM archive (alternative to the positional path)")
    parser.add_argument("--taxonomy", help="JSON file overriding the taxonomy (same class count)")
    parser.add_argument("--seed", type=int, default=None, help="clustering determinism seed")
    parser.add_argument("--tau-vis", type=float, default=0.5, help="visibility threshold")
    parser.add_argument("--tau-bg", type=float, default=0.05, help="background score threshold")
    parser.add_argument("--k", type=int, default=2, help="strata count for stratification")
    parser.add_argument("--retie", action="store_true",
                        help="break duplicate draw orders by mesh id instead of failing")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str, needs_model: bool = True) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        if needs_model:
            p.add_argument("model_path", nargs="?", help="LCM archive")
        return p

    add("validate", "parse a model and print mesh/class counts")

    p = add("render", "composite the model to a PNG")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--visible", help="comma-separated mesh ids")
    p.add_argument("--classes", help="class filter, e.g. 'Hair,Face' or '!Hair'")
    p.add_argument("--assignment", help="label assignment JSON for class filtering")

    p = add("masks", "write per-mesh visibility masks")
    p.add_argument("-o", "--output", required=True, help="output directory")

    p = add("seed", "vote seed labels from a score stack")
    p.add_argument("--stack", required=True, help="SSTK score stack file")
    p.add_argument("-o", "--output", required=True, help="assignment JSON")

    p = add("snap", "snap a pixel label map to fragment boundaries")
    p.add_argument("--label-map", required=True, help="indexed label-map PNG")
    p.add_argument("--assignment", help="prior assignment JSON (manual labels kept)")
    p.add_argument("-o", "--output", required=True, help="snapped assignment JSON")
    p.add_argument("--map-out", help="optional snapped label-map PNG")

    p = add("propagate", "propagate labels to occluded meshes")
    p.add_argument("--assignment", required=True)
    p.add_argument("-o", "--output", required=True)

    p = add("label-map", "render an assignment to an indexed label-map PNG")
    p.add_argument("--assignment", required=True)
    p.add_argument("-o", "--output", required=True)

    p = add("layers", "extract per-class RGBA layers (and padded fills)")
    p.add_argument("--assignment")
    p.add_argument("-o", "--output", required=True, help="output directory")

    p = add("depth", "export the pseudo-depth map")
    p.add_argument("-o", "--output", help="16-bit depth PNG")
    p.add_argument("--tensor", help="float32 DPTH tensor")
    p.add_argument("--class", dest="class_name", help="restrict to one class")
    p.add_argument("--assignment")

    p = add("stratify", "split a class into depth strata")
    p.add_argument("--class", dest="class_name", required=True)
    p.add_argument("--assignment")
    p.add_argument("--mesh-level", action="store_true")
    p.add_argument("-o", "--output", required=True, help="output directory")

    p = add("reconstruct", "rebuild the composite from layers + depth")
    p.add_argument("--assignment")
    p.add_argument("-o", "--output", required=True, help="reconstruction PNG")

    p = add("psd", "export a layered PSD")
    p.add_argument("--assignment")
    p.add_argument("--no-stratify", action="store_true", help="skip depth stratification")
    p.add_argument("-o", "--output", required=True)

    p = add("metrics", "compute evaluation metrics between exports", needs_model=False)
    p.add_argument("--image-a", help="RGBA PNG")
    p.add_argument("--image-b", help="RGBA PNG")
    p.add_argument("--mask-a", help="binary mask PNG")
    p.add_argument("--mask-b", help="binary mask PNG")
    p.add_argument("--depth-pred", help="DPTH tensor")
    p.add_argument("--depth-gt", help="DPTH tensor")
    p.add_argument("-o", "--output", help="report JSON")
    p.add_argument("--csv", help="report CSV")
    p.add_argument("--figure", help="report bar-chart image")

    p = add("augment", "write the 9-pose orientation grid and a manifest")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--split", default="train", choices=("train", "val", "test"))

    p = add("serve", "run the annotation service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--static", help="directory with the built web UI")

    return parser


def _load_model(args) -> CharacterModel:
    path = getattr(args, "model_path", None) or args.model
    if not path:
        raise LayerLabError("no model given (positional path or --model)")
    model = archive.parse_model(Path(path), retie=args.retie)
    if args.taxonomy:
        doc = json.loads(Path(args.taxonomy).read_text(encoding="utf-8"))
        taxonomy = Taxonomy(
            classes=tuple(doc["classes"]),
            stratify_default=tuple(doc.get("stratify", [])),
        )
        if len(taxonomy) != len(model.taxonomy):
            raise UnknownClass(
                f"--taxonomy lists {len(taxonomy)} classes, model has {len(model.taxonomy)}"
            )
        model = CharacterModel(
            canvas_width=model.canvas_width,
            canvas_height=model.canvas_height,
            atlases=model.atlases,
            meshes=model.meshes,
            parameters=model.parameters,
            taxonomy=taxonomy,
            metadata=model.metadata,
        )
    return model


def _load_assignment(path: Optional[str], model: CharacterModel) -> LabelAssignment:
    if path is None:
        return LabelAssignment.from_model(model)
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    assignment = LabelAssignment.from_json(doc, model.taxonomy)
    for mid in model.mesh_ids():
        assignment.labels.setdefault(mid, Label(-1))
    return assignment


def _save_assignment(assignment: LabelAssignment, model: CharacterModel, path: str) -> None:
    Path(path).write_text(
        json.dumps(assignment.to_json(model.taxonomy), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def _labeled_model(args, model: CharacterModel) -> CharacterModel:
    assignment = _load_assignment(getattr(args, "assignment", None), model)
    return model.with_labels(assignment.as_mesh_labels())


def _present_classes(model: CharacterModel) -> list[int]:
    return sorted({m.label for m in model.meshes if m.label >= 0})


def _cmd_validate(args) -> int:
    model = _load_model(args)
    labeled = sum(1 for m in model.meshes if m.label >= 0)
    classes = len(_present_classes(model))
    print(f"meshes: {len(model.meshes)}")
    print(f"atlases: {len(model.atlases)}")
    print(f"parameters: {len(model.parameters)}")
    print(f"taxonomy: {len(model.taxonomy)} classes")
    print(f"labeled meshes: {labeled} ({classes} classes present)")
    print(f"canvas: {model.canvas_width}x{model.canvas_height}")
    return 0


def _cmd_render(args) -> int:
    model = _load_model(args)
    visible = None
    if args.visible is not None:
        visible = {int(tok) for tok in args.visible.split(",") if tok.strip()}
    if args.classes:
        assignment = _load_assignment(args.assignment, model)
        names = [tok.strip() for tok in args.classes.split(",") if tok.strip()]
        exclude = all(n.startswith("!") for n in names)
        wanted = {model.taxonomy.index_of(n.lstrip("!")) for n in names}
        class_ids = {
            mid for mid in model.mesh_ids()
            if (assignment.class_of(mid) in wanted) != exclude
        }
        visible = class_ids if visible is None else visible & class_ids
    image = render_composite(model, visible=visible)
    formats.save_image_png(image, args.output)
    print(f"wrote {args.output}")
    return 0


def _cmd_masks(args) -> int:
    model = _load_model(args)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    for vm in visibility_masks(model, args.tau_vis):
        formats.save_mask_png(vm.mask, out / f"mask_{vm.mesh_id}.png")
    print(f"wrote {len(model.meshes)} masks to {out}")
    return 0


def _cmd_seed(args) -> int:
    model = _load_model(args)
    stack = formats.load_score_stack(args.stack)
    assignment = vote_seed_labels(model, stack, tau_vis=args.tau_vis)
    _save_assignment(assignment, model, args.output)
    print(f"seeded {assignment.n_labeled()}/{len(model.meshes)} meshes")
    return 0


def _cmd_snap(args) -> int:
    model = _load_model(args)
    label_map = formats.load_label_map(Path(args.label_map), len(model.taxonomy))
    prior = _load_assignment(args.assignment, model) if args.assignment else None
    snapped_map, assignment = snap_labels(
        model, label_map, assignment=prior, tau_vis=args.tau_vis
    )
    _save_assignment(assignment, model, args.output)
    if args.map_out:
        formats.save_label_map(snapped_map, args.map_out, model.taxonomy)
    print(f"snapped {assignment.n_labeled()}/{len(model.meshes)} meshes")
    return 0


def _cmd_propagate(args) -> int:
    model = _load_model(args)
    assignment = _load_assignment(args.assignment, model)
    updated = propagate_labels(model, assignment, tau_vis=args.tau_vis)
    _save_assignment(updated, model, args.output)
    print(f"labeled {updated.n_labeled()}/{len(model.meshes)} meshes")
    return 0


def _cmd_label_map(args) -> int:
    model = _load_model(args)
    assignment = _load_assignment(args.assignment, model)
    label_map = render_label_map(model, assignment, tau_vis=args.tau_vis)
    formats.save_label_map(label_map, args.output, model.taxonomy)
    print(f"wrote {args.output}")
    return 0


def _cmd_layers(args) -> int:
    model = _labeled_model(args, _load_model(args))
    present = _present_classes(model)
    if not present:
        raise LayerLabError("no labeled meshes: nothing to extract")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    from .raster import RGBAImage

    for class_index in present:
        layer = extract_layer(model, class_index)
        name = model.taxonomy.name_of(class_index)
        formats.save_image_png(layer.image, out / f"{name}.png")
        padded = RGBAImage.from_parts(layer.padded_rgb, np.ones_like(layer.alpha))
        formats.save_image_png(padded, out / f"{name}.padded.png")
    print(f"wrote {len(present)} layers to {out}")
    return 0


def _cmd_depth(args) -> int:
    model = _labeled_model(args, _load_model(args))
    class_index = model.taxonomy.index_of(args.class_name) if args.class_name else None
    dmap = render_depth_map(model, class_index)
    if not args.output and not args.tensor:
        raise LayerLabError("depth: give -o and/or --tensor")
    if args.output:
        formats.save_depth_png(dmap, args.output)
        print(f"wrote {args.output}")
    if args.tensor:
        formats.save_depth_tensor(dmap, args.tensor)
        print(f"wrote {args.tensor}")
    return 0


def _cmd_stratify(args) -> int:
    model = _labeled_model(args, _load_model(args))
    class_index = model.taxonomy.index_of(args.class_name)
    layer = extract_layer(model, class_index)
    dmap = render_depth_map(model, class_index)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    name = model.taxonomy.name_of(class_index)
    if args.k == 2:
        strata = stratify_layer(model, class_index, dmap, layer.alpha,
                                mesh_level=args.mesh_level)
        formats.save_mask_png(strata.assignments == BACK, out / f"{name}_back.png")
        formats.save_mask_png(strata.assignments == FRONT, out / f"{name}_front.png")
        formats.save_mask_png(strata.hole_mask, out / f"{name}_holes.png")
        print(f"centroids: {strata.centroids[0]:.4f}, {strata.centroids[1]:.4f}")
        print(f"hole pixels: {int(strata.hole_mask.sum())}")
    else:
        depths = pseudo_depth(model)
        ids = [m.id for m in model.meshes if m.label == class_index]
        centroids, assignments = kmeans_1d([depths[i] for i in ids], args.k, seed=args.seed)
        for stratum in range(args.k):
            subset = [mid for mid, a in zip(ids, assignments) if a == stratum]
            image = render_composite(model, visible=subset)
            formats.save_image_png(image, out / f"{name}_s{stratum}.png")
        print("centroids: " + ", ".join(f"{c:.4f}" for c in centroids))
    return 0


def _cmd_reconstruct(args) -> int:
    model = _labeled_model(args, _load_model(args))
    present = _present_classes(model)
    if not present:
        raise LayerLabError("no labeled meshes: nothing to reconstruct")
    layers = [extract_layer(model, c) for c in present]
    depths = [render_depth_map(model, c) for c in present]
    formats.save_image_png(reconstruct(layers, depths), args.output)
    print(f"wrote {args.output}")
    return 0


def _cmd_psd(args) -> int:
    model = _labeled_model(args, _load_model(args))
    present = _present_classes(model)
    if not present:
        raise LayerLabError("no layers: label meshes (or pass --assignment) first")
    layers = [extract_layer(model, c) for c in present]
    depth_maps = [render_depth_map(model, c) for c in present]
    strata = {}
    if not args.no_stratify and args.k == 2:
        for class_index, layer, dmap in zip(present, layers, depth_maps):
            if class_index not in model.taxonomy.stratify_indices():
                continue
            try:
                split = stratify_layer(model, class_index, dmap, layer.alpha)
            except LayerLabError:
                continue
            if split.is_split:
                strata[class_index] = split
    names = export_psd(layers, depth_maps, model.taxonomy, args.output,
                       strata=strata or None, model=model)
    print(f"wrote {args.output} ({len(names)} layers: {', '.join(names)})")
    return 0


def _cmd_metrics(args) -> int:
    result = MetricsReport()
    if bool(args.image_a) != bool(args.image_b):
        raise LayerLabError("metrics: --image-a and --image-b go together")
    if bool(args.mask_a) != bool(args.mask_b):
        raise LayerLabError("metrics: --mask-a and --mask-b go together")
    if bool(args.depth_pred) != bool(args.depth_gt):
        raise LayerLabError("metrics: --depth-pred and --depth-gt go together")
    if args.image_a:
        psnr, ssim = metric_psnr_ssim(
            formats.load_image_png(args.image_a), formats.load_image_png(args.image_b)
        )
        result.psnr = psnr
        result.ssim = ssim
    if args.mask_a:
        a = formats.load_mask_png(args.mask_a)
        b = formats.load_mask_png(args.mask_b)
        result.mask_dice_loss = metric_dice_loss(a, b)
        result.mask_mse = metric_mask_mse(a, b)
    if args.depth_pred:
        absrel, delta1 = metric_depth(
            formats.load_depth_tensor(args.depth_pred),
            formats.load_depth_tensor(args.depth_gt),
        )
        result.absrel = absrel
        result.delta1 = delta1
    if not result.items():
        raise LayerLabError("metrics: nothing to compute (pass at least one input pair)")
    for name, value in result.items():
        print(f"{name}: {value:.6g}")
    if args.output:
        report.write_report_json(result, args.output)
    if args.csv:
        report.write_report_csv(result, args.csv)
    if args.figure:
        report.write_report_figure(result, args.figure)
    return 0


def _cmd_augment(args) -> int:
    model = _load_model(args)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for pose, posed in generate_orientation_grid(model):
        filename = f"pose_{pose}.lcm"
        archive.save_model(posed, out / filename)
        entries.append(ManifestEntry(path=filename, split=args.split, pose=pose))
    manifest = DatasetManifest(entries=entries)
    archive.save_manifest(manifest, out / "manifest.jsonl")
    print(f"wrote 9 poses and manifest.jsonl to {out}")
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    model = _load_model(args)
    print(f"serving on http://127.0.0.1:{args.port}")
    serve(model, port=args.port, static_dir=args.static)
    return 0


_COMMANDS = {
    "validate": _cmd_validate,
    "render": _cmd_render,
    "masks": _cmd_masks,
    "seed": _cmd_seed,
    "snap": _cmd_snap,
    "propagate": _cmd_propagate,
    "label-map": _cmd_label_map,
    "layers": _cmd_layers,
    "depth": _cmd_depth,
    "stratify": _cmd_stratify,
    "reconstruct": _cmd_reconstruct,
    "psd": _cmd_psd,
    "metrics": _cmd_metrics,
    "augment": _cmd_augment,
    "serve": _cmd_serve,
}


def cli_run(argv: Optional[list[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except LayerLabError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(cli_run())


if __name__ == "__main__":
    main()
