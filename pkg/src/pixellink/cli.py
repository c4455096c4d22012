"""Command-line entry point: the pipeline as subcommands.

    encode-gt   annotation files -> label/weight tensors per image
    decode      probability-map pairs -> detection quad files
    fuse        average several map pairs at the largest size
    loss        logits + encoded ground truth -> loss breakdown
    eval        detections vs ground truth -> precision/recall/F
    augment     deterministic geometric augmentation of one sample
    stats       dataset feature percentile (post-filter calibration)

All commands share the layered config (defaults < --preset < --config
file < flags) and write output files atomically. Exit codes: 0 success,
1 unexpected failure, 2 usage, 3 file format, 4 annotation parse, 5
shape/range, 6 degenerate geometry, 7 missing pair or empty input, 8
config.

Map tensors use the PLNK format and a `<id>.pixel.plnk` /
`<id>.links.plnk` naming convention; detection files are `res_<id>.txt`
with one x1,y1,...,x4,y4 quad per line; images are binary netpbm.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, RngStream, augment_sample
from .config import PRESETS, RESOLUTIONS, _parse_scales, build_config, default_jobs
from .decoder import DecodeConfig, decode, percentile_threshold
from .errors import (
    AnnotationParseError,
    ConfigError,
    EmptyInput,
    IoFailure,
    MissingPair,
    PixelLinkError,
)
from .evaluation import EvalConfig, evaluate_dataset, evaluate_image, image_id
from .fusion import fuse_multiscale
from .geometry import min_area_rect, polygon_area
from .gt_encoder import (
    LabelMaps,
    _format_coord,
    encode_labels,
    format_annotations,
    instance_weights,
    parse_annotations,
    scale_annotations,
)
from .loss import LossConfig, total_loss
from .tensor_io import atomic_write_bytes, load_netpbm, load_tensor, netpbm_bytes, tensor_bytes

PIXEL_SUFFIX = ".pixel.plnk"
LINKS_SUFFIX = ".links.plnk"


def _module_config(ctor, **kwargs):
    # module configs raise ValueError; at the CLI that is a config problem
    try:
        return ctor(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _build_config(args):
    overrides = {
        "resolution": args.resolution,
        "pixel_threshold": args.pixel_threshold,
        "link_threshold": args.link_threshold,
        "min_short_side": args.min_short_side,
        "min_area": args.min_area,
        "scales": _parse_scales(args.scales) if args.scales is not None else None,
        "max_longer_side": args.max_longer_side,
        "pixel_scale": args.pixel_scale,
        "negative_ratio": args.negative_ratio,
        "seed": args.seed,
    }
    return build_config(args.preset, args.config, overrides)


def _read_text(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def _read_annots(path):
    try:
        return parse_annotations(_read_text(path))
    except AnnotationParseError as exc:
        raise AnnotationParseError(f"{path}: {exc}") from None


def _write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def _write_tensor(path, arr) -> None:
    atomic_write_bytes(path, tensor_bytes(np.asarray(arr, dtype=np.float32)))


def _txt_files(dirpath, required: bool = True) -> list:
    d = Path(dirpath)
    if not d.is_dir():
        raise IoFailure(f"not a directory: {dirpath}")
    files = sorted(d.glob("*.txt"))
    if required and not files:
        raise EmptyInput(f"no .txt files in {dirpath}")
    return files


def _by_image(files) -> dict:
    out = {}
    for path in files:
        key = image_id(path)
        if key in out:
            raise MissingPair(f"duplicate image id {key!r} ({out[key]} vs {path})")
        out[key] = path
    return out


def _out_dir(path) -> Path:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _jobs(args) -> int:
    if args.jobs is None:
        return default_jobs()
    if args.jobs < 1:
        raise ConfigError(f"--jobs must be >= 1, got {args.jobs}")
    return args.jobs


def _run_parallel(fn, items, jobs: int) -> None:
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        for item in items:
            fn(item)
        return
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(fn, item) for item in items]
        for fut in futures:
            fut.result()


def cmd_encode_gt(args) -> int:
    cfg = _build_config(args)
    factor = cfg.downscale
    if args.height % factor or args.width % factor:
        raise ConfigError(
            f"image size {args.height}x{args.width} not divisible by the "
            f"{cfg.resolution} downscale factor {factor}"
        )
    map_h, map_w = args.height // factor, args.width // factor
    if map_h < 1 or map_w < 1:
        raise ConfigError(f"map size {map_h}x{map_w} is empty")
    out = _out_dir(args.out_dir)

    def one(path):
        annots = scale_annotations(_read_annots(path), 1.0 / factor)
        labels = encode_labels(annots, map_h, map_w)
        weights, _ = instance_weights(labels)
        key = image_id(path)
        _write_tensor(out / f"{key}{PIXEL_SUFFIX}", labels.pixel_label)
        _write_tensor(out / f"{key}{LINKS_SUFFIX}", labels.link_label)
        _write_tensor(out / f"{key}.instance.plnk", labels.instance_id)
        _write_tensor(out / f"{key}.ignore.plnk", labels.ignore_mask)
        _write_tensor(out / f"{key}.weight.plnk", weights)

    _run_parallel(one, _txt_files(args.annot_dir), _jobs(args))
    return 0


def cmd_decode(args) -> int:
    cfg = _build_config(args)
    in_dir = Path(args.in_dir)
    if not in_dir.is_dir():
        raise IoFailure(f"not a directory: {args.in_dir}")
    files = sorted(in_dir.glob(f"*{PIXEL_SUFFIX}"))
    if not files:
        raise EmptyInput(f"no {PIXEL_SUFFIX} files in {args.in_dir}")
    out = _out_dir(args.out_dir)
    dcfg = _module_config(
        DecodeConfig,
        pixel_threshold=cfg.pixel_threshold,
        link_threshold=cfg.link_threshold,
        min_short_side=cfg.min_short_side,
        min_area=cfg.min_area,
        scale_back=float(cfg.downscale),
    )

    def one(path):
        key = path.name[: -len(PIXEL_SUFFIX)]
        links_path = in_dir / f"{key}{LINKS_SUFFIX}"
        if not links_path.exists():
            raise MissingPair(f"no link map for {path.name}")
        pixel = load_tensor(path).astype(np.float64)
        links = load_tensor(links_path).astype(np.float64)
        detections = decode(pixel, links, dcfg)
        lines = []
        for box in detections.boxes:
            lines.append(",".join(_format_coord(float(v)) for v in box.vertices().ravel()))
        _write_text(out / f"res_{key}.txt", "".join(line + "\n" for line in lines))

    _run_parallel(one, files, _jobs(args))
    return 0


def cmd_fuse(args) -> int:
    pairs = []
    for prefix in args.prefixes:
        pixel = load_tensor(f"{prefix}{PIXEL_SUFFIX}").astype(np.float64)
        links = load_tensor(f"{prefix}{LINKS_SUFFIX}").astype(np.float64)
        pairs.append((pixel, links))
    fused_pixel, fused_links = fuse_multiscale(pairs)
    _write_tensor(f"{args.out}{PIXEL_SUFFIX}", fused_pixel)
    _write_tensor(f"{args.out}{LINKS_SUFFIX}", fused_links)
    return 0


def cmd_loss(args) -> int:
    cfg = _build_config(args)
    pixel_logits = load_tensor(args.pixel_logits).astype(np.float64)
    link_logits = load_tensor(args.link_logits).astype(np.float64)

    prefix = args.gt_prefix
    pixel = load_tensor(f"{prefix}{PIXEL_SUFFIX}")
    links = load_tensor(f"{prefix}{LINKS_SUFFIX}")
    instance_path = Path(f"{prefix}.instance.plnk")
    ignore_path = Path(f"{prefix}.ignore.plnk")
    instance = load_tensor(instance_path) if instance_path.exists() else np.zeros_like(pixel)
    ignore = load_tensor(ignore_path) if ignore_path.exists() else np.zeros_like(pixel)
    labels = LabelMaps(pixel, instance, ignore, links)

    weight_path = Path(f"{prefix}.weight.plnk")
    if weight_path.exists():
        weights = load_tensor(weight_path).astype(np.float64)
    else:
        weights, _ = instance_weights(labels)

    lcfg = _module_config(
        LossConfig, pixel_scale=cfg.pixel_scale, negative_ratio=cfg.negative_ratio
    )
    b = total_loss(pixel_logits, link_logits, labels, weights, lcfg)
    print(
        f"total={float(b.total)!r} pixel={float(b.pixel)!r} "
        f"link_pos={float(b.link_pos)!r} link_neg={float(b.link_neg)!r}"
    )
    return 0


def cmd_eval(args) -> int:
    gts = {k: _read_annots(p) for k, p in _by_image(_txt_files(args.gt_dir, False)).items()}
    dets = {
        k: [a.quad for a in _read_annots(p)]
        for k, p in _by_image(_txt_files(args.det_dir, False)).items()
    }
    ecfg = _module_config(EvalConfig, iou_thresh=args.iou, dontcare_overlap=args.dontcare_overlap)
    metrics = evaluate_dataset(dets, gts, ecfg)
    if args.per_image:
        for key in sorted(gts):
            m = evaluate_image(dets[key], gts[key], ecfg)
            print(f"{key}: P={m.precision:.4f}, R={m.recall:.4f}, F={m.fscore:.4f}")
    print(f"P={metrics.precision:.4f}, R={metrics.recall:.4f}, F={metrics.fscore:.4f}")
    return 0


def cmd_augment(args) -> int:
    cfg = _build_config(args)
    img = load_netpbm(args.image)
    annots = _read_annots(args.annot)
    acfg = _module_config(AugmentConfig, rotate_prob=args.rotate_prob, out_size=args.out_size)
    out_img, out_annots = augment_sample(img, annots, RngStream(cfg.seed), acfg)
    atomic_write_bytes(args.out_image, netpbm_bytes(out_img))
    _write_text(args.out_annot, format_annotations(out_annots))
    return 0


def cmd_stats(args) -> int:
    values = []
    for path in _txt_files(args.annot_dir):
        for a in _read_annots(path):
            if not a.counts:
                continue
            if args.feature == "short-side":
                values.append(min_area_rect(a.quad.vertices).short_side)
            else:
                values.append(polygon_area(a.quad))
    try:
        threshold = percentile_threshold(np.asarray(values), args.keep)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    print(repr(float(threshold)))
    return 0


def _config_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("pipeline config")
    g.add_argument("--preset", choices=sorted(PRESETS), help="benchmark constants bundle")
    g.add_argument("--config", help="key=value config file")
    g.add_argument("--resolution", choices=sorted(RESOLUTIONS), help="map downscale, 2s or 4s")
    g.add_argument("--pixel-threshold", type=float)
    g.add_argument("--link-threshold", type=float)
    g.add_argument("--min-short-side", type=float, help="post-filter: minimum shorter side")
    g.add_argument("--min-area", type=float, help="post-filter: minimum box area")
    g.add_argument("--scales", type=str, help="multi-scale set, e.g. 384x384,512x512")
    g.add_argument("--max-longer-side", type=int)
    g.add_argument("--pixel-scale", type=float, help="pixel-loss weight in the total")
    g.add_argument("--negative-ratio", type=float, help="mined negatives per positive")
    g.add_argument("--seed", type=int, help="augmentation seed")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pixellink",
        description="Link-based scene-text detection pipeline (encode, decode, score).",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    conf = _config_parent()

    p = sub.add_parser("encode-gt", parents=[conf], help="annotations to label/weight tensors")
    p.add_argument("--annot-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--height", type=int, required=True, help="source image height")
    p.add_argument("--width", type=int, required=True, help="source image width")
    p.add_argument("--jobs", type=int, help="parallel workers (default $PIXELLINK_JOBS or 1)")
    p.set_defaults(func=cmd_encode_gt)

    p = sub.add_parser("decode", parents=[conf], help="probability maps to detection quads")
    p.add_argument("--in-dir", required=True, help="directory of *.pixel.plnk/*.links.plnk")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--jobs", type=int, help="parallel workers (default $PIXELLINK_JOBS or 1)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("fuse", parents=[conf], help="average map pairs at the largest size")
    p.add_argument("prefixes", nargs="+", metavar="PREFIX", help="input map-pair prefixes")
    p.add_argument("--out", required=True, metavar="PREFIX", help="output map-pair prefix")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("loss", parents=[conf], help="loss breakdown for logits vs ground truth")
    p.add_argument("--pixel-logits", required=True, help="(H, W, 2) tensor file")
    p.add_argument("--link-logits", required=True, help="(H, W, 8, 2) tensor file")
    p.add_argument("--gt-prefix", required=True, help="encode-gt output prefix for the image")
    p.set_defaults(func=cmd_loss)

    p = sub.add_parser("eval", parents=[conf], help="score detections against ground truth")
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--det-dir", required=True)
    p.add_argument("--iou", type=float, default=0.5, help="match threshold")
    p.add_argument("--dontcare-overlap", type=float, default=0.5)
    p.add_argument("--per-image", action="store_true", help="also print one line per image")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("augment", parents=[conf], help="augment one image + annotation pair")
    p.add_argument("--image", required=True, help="netpbm input image")
    p.add_argument("--annot", required=True)
    p.add_argument("--out-image", required=True)
    p.add_argument("--out-annot", required=True)
    p.add_argument("--rotate-prob", type=float, default=0.2)
    p.add_argument("--out-size", type=int, default=512)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("stats", parents=[conf], help="dataset feature percentile")
    p.add_argument("--annot-dir", required=True)
    p.add_argument("--feature", choices=("short-side", "area"), default="short-side")
    p.add_argument("--keep", type=float, default=0.99, help="fraction to keep above the cutoff")
    p.set_defaults(func=cmd_stats)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PixelLinkError as exc:
        print(f"pixellink: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
