"""Command line interface.

Subcommands:
  lh        transform an image into a histogram cube or level stack
  synth     sample textures from an occlusion model config
  verify    check model properties (mass, flatness, bound, disjointness)
  train     fit a subspace classifier from per-class texture images
  classify  label every pixel of an image with a trained classifier
  eval      compare predicted labels against ground truth

Exit codes: 0 success, 1 usage error, 2 I/O or file format error,
3 verification failure.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
import time

import numpy as np

from . import __version__, _kernels, rng
from .grid import Grid, Image, ValueSpace, quantize_values
from .classifier import (build_training_set, classify_image, evaluate,
                         interior_mask, train)
from .io import (ConfigError, FormatError, RunManifest, parse_model_config,
                 parse_quantize_spec, read_classifier, read_image,
                 read_label_map, sha256_file, write_bytes_atomic,
                 write_classifier, write_histcube, write_image,
                 write_label_map, write_manifest)
from .localhist import FilterPlan, local_histogram
from .occlusion import (EnumerationCapError, check_flatness, occlude,
                        verify_decomposition_bound)
from .textures import ExpansionModel, check_effective_disjointness
from .windows import window_from_spec

MODE_NAMES = {"auto": "auto", "direct": "direct", "fft": "cyclic_fft",
              "noncyclic": "noncyclic"}


class UsageError(Exception):
    pass


class VerificationFailure(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _default_threads() -> int:
    raw = os.environ.get("HISTOCUBE_THREADS", "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _plan(args) -> FilterPlan:
    return FilterPlan(mode=MODE_NAMES[args.mode],
                      fft_threshold=getattr(args, "fft_threshold", 49),
                      threads=args.threads)


def _manifest(args, argv: list[str]) -> RunManifest:
    return RunManifest(command=argv, seed=getattr(args, "seed", None),
                       version=__version__, backend=_kernels.BACKEND)


def _parse_colors(spec: str, values_hint: int = 256):
    groups = [g.strip() for g in spec.split(";") if g.strip()]
    if not groups:
        raise UsageError("empty --colors spec")
    parsed = []
    for g in groups:
        parts = [p.strip() for p in g.split(",")]
        try:
            parsed.append(tuple(int(p) for p in parts))
        except ValueError:
            raise UsageError(f"bad color {g!r}") from None
    arity = len(parsed[0])
    if arity not in (1, 3) or any(len(c) != arity for c in parsed):
        raise UsageError("colors must be all gray (v) or all rgb (r,g,b)")
    if any(not 0 <= v < values_hint for c in parsed for v in c):
        raise UsageError(f"color components must lie in [0, {values_hint})")
    return parsed


def _constant_sources(grid: Grid, colors) -> list[Image]:
    arity = len(colors[0])
    values = ValueSpace((256,) * arity)
    out = []
    for c in colors:
        out.append(Image(grid, values,
                         np.full(grid.shape, values.index(c), dtype=np.int64)))
    return out


def _load_sources(args, grid: Grid, count: int) -> list[Image]:
    if getattr(args, "colors", None):
        sources = _constant_sources(grid, _parse_colors(args.colors))
    elif getattr(args, "sources", None):
        sources = [read_image(p) for p in args.sources]
        for f in sources:
            if f.grid != grid:
                raise UsageError(f"source grid {f.grid.shape} does not match "
                                 f"model grid {grid.shape}")
    else:
        raise UsageError("need --colors or --sources")
    if len(sources) != count:
        raise UsageError(f"model has {count} labels but {len(sources)} sources given")
    return sources


# ------------------------------------------------------------------- lh

def cmd_lh(args, argv) -> int:
    started = time.monotonic()
    image = read_image(args.input)
    if args.quantize:
        image = quantize_values(image, parse_quantize_spec(args.quantize, image.values))
    w = window_from_spec(image.grid, args.window)
    if not args.out and not args.levels_dir:
        raise UsageError("nothing to do: pass --out and/or --levels-dir")
    cube = local_histogram(image, w, _plan(args))
    manifest = _manifest(args, argv)
    manifest.add_input(args.input)
    if args.out:
        write_histcube(args.out, cube)
        manifest.add_output(args.out)
    if args.levels_dir:
        os.makedirs(args.levels_dir, exist_ok=True)
        for y in range(cube.values.size):
            plane = np.clip(np.rint(cube.data[y] * 255.0), 0, 255).astype(np.uint8)
            path = os.path.join(args.levels_dir, f"level_{y:04d}.pgm")
            header = f"P5\n{plane.shape[1]} {plane.shape[0]}\n255\n".encode()
            write_bytes_atomic(path, header + plane.tobytes())
            manifest.add_output(path)
    manifest.wall_time_s = time.monotonic() - started
    mpath = (f"{args.out}.manifest.json" if args.out
             else os.path.join(args.levels_dir, "manifest.json"))
    write_manifest(mpath, manifest)
    print(f"wrote {len(manifest.outputs)} files; cube {cube.data.shape} "
          f"mode={_plan(args).resolve(w)}")
    return 0


# ---------------------------------------------------------------- synth

def cmd_synth(args, argv) -> int:
    started = time.monotonic()
    with open(args.config, "r", encoding="utf-8") as fh:
        config_text = fh.read()
    grid, model = parse_model_config(config_text)
    sources = _load_sources(args, grid, model.num_labels)
    os.makedirs(args.out_dir, exist_ok=True)
    manifest = _manifest(args, argv)
    manifest.config_hash = sha256_file(args.config)
    manifest.add_input(args.config)
    for i in range(args.count):
        draw_seed = rng.derive(args.seed, i)
        phi = model.sample(draw_seed)
        tex = occlude(sources, phi)
        tex_path = os.path.join(args.out_dir, f"texture_{i:03d}.ppm"
                                if len(tex.values.factors) == 3
                                else f"texture_{i:03d}.pgm")
        write_image(tex_path, tex)
        lab_path = os.path.join(args.out_dir, f"labels_{i:03d}.pgm")
        write_label_map(lab_path, phi)
        manifest.add_output(tex_path)
        manifest.add_output(lab_path)
        manifest.add_output(f"{lab_path}.palette")
    manifest.wall_time_s = time.monotonic() - started
    write_manifest(os.path.join(args.out_dir, "manifest.json"), manifest)
    print(f"wrote {args.count} textures to {args.out_dir}")
    return 0


# --------------------------------------------------------------- verify

def cmd_verify(args, argv) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        grid, model = parse_model_config(fh.read())
    checks = [c.strip() for c in args.checks.split(",") if c.strip()]
    known = {"mass", "flatness", "bound", "disjoint"}
    for c in checks:
        if c not in known:
            raise UsageError(f"unknown check {c!r}; choose from {sorted(known)}")
    if not checks:
        raise UsageError("no checks requested")
    method = {"auto": "auto", "analytic": "analytic", "exact": "exact",
              "monte-carlo": "monte_carlo"}[args.method]
    failures = 0

    for check in checks:
        if check == "mass":
            table = model.pdf_table()
            total = math.fsum(table.probs.tolist())
            err = abs(total - 1.0)
            ok = err <= 1e-12
            failures += not ok
            print(f"mass: {'PASS' if ok else 'FAIL'} support={table.support_size()} "
                  f"total={total!r} err={err:.3e}")
        elif check == "flatness":
            cert = check_flatness(model, tol=args.tol, method=method,
                                  samples=args.samples, seed=args.seed)
            failures += not cert.is_flat
            lam = ("[" + ", ".join(f"{v:.6g}" for v in cert.lambdas) + "]"
                   if cert.lambdas else "none")
            extra = (f" samples={cert.samples} max_stderr={cert.max_stderr:.3e}"
                     if cert.method == "monte_carlo" else "")
            print(f"flatness: {'PASS' if cert.is_flat else 'FAIL'} "
                  f"method={cert.method} lambdas={lam} "
                  f"max_dev={cert.max_deviation:.3e} tol={cert.tol:.3e}{extra}")
        elif check == "bound":
            if not args.window:
                raise UsageError("bound check needs --window")
            w = window_from_spec(grid, args.window)
            sources = _load_sources(args, grid, model.num_labels)
            report = verify_decomposition_bound(model, sources, w)
            failures += not report.holds
            print(f"bound: {'PASS' if report.holds else 'FAIL'} "
                  f"max|eps|={report.max_abs_eps:.3e} "
                  f"max_bound={report.max_bound:.3e}")
        elif check == "disjoint":
            if not isinstance(model, ExpansionModel):
                raise UsageError("disjoint check applies to expansion models")
            mode = "sampled" if method == "monte_carlo" else "exhaustive"
            report = check_effective_disjointness(model, mode=mode,
                                                  trials=args.samples,
                                                  seed=args.seed)
            failures += not report.disjoint
            extra = f" violation={report.violation}" if report.violation else ""
            print(f"disjoint: {'PASS' if report.disjoint else 'FAIL'} "
                  f"method={report.method}{extra}")
    if failures:
        raise VerificationFailure(f"{failures} check(s) failed")
    return 0


# ---------------------------------------------------------------- train

def cmd_train(args, argv) -> int:
    started = time.monotonic()
    if len(args.class_images) < 2:
        raise UsageError("need at least two --class images")
    images = [read_image(p) for p in args.class_images]
    if args.quantize:
        images = [quantize_values(f, parse_quantize_spec(args.quantize, f.values))
                  for f in images]
    base = images[0]
    for f in images[1:]:
        if f.grid != base.grid or f.values != base.values:
            raise UsageError("class images must share grid and value space")
    w = window_from_spec(base.grid, args.window)
    margin = None if args.margin == "auto" else int(args.margin)
    if "," in args.components:
        comps = [int(c) for c in args.components.split(",")]
    else:
        comps = int(args.components)
    ts = build_training_set(images, w, count=args.samples_per_class,
                            margin=margin, plan=_plan(args), seed=args.seed)
    clf = train(ts, comps, window_spec=args.window, quantize_spec=args.quantize,
                mode=MODE_NAMES[args.mode])
    write_classifier(args.out, clf)
    manifest = _manifest(args, argv)
    for p in args.class_images:
        manifest.add_input(p)
    manifest.add_output(args.out)
    manifest.wall_time_s = time.monotonic() - started
    write_manifest(f"{args.out}.manifest.json", manifest)
    dims = ",".join(str(d.shape[0]) for d in clf.directions)
    print(f"trained {clf.num_classes} classes, |Y|={clf.num_values}, "
          f"components=[{dims}] -> {args.out}")
    return 0


# ------------------------------------------------------------- classify

def cmd_classify(args, argv) -> int:
    started = time.monotonic()
    clf = read_classifier(args.classifier)
    image = read_image(args.input)
    if clf.quantize_spec:
        image = quantize_values(image, parse_quantize_spec(clf.quantize_spec,
                                                           image.values))
    window_spec = args.window or clf.window_spec
    if not window_spec:
        raise UsageError("classifier stores no window; pass --window")
    w = window_from_spec(image.grid, window_spec)
    mode = MODE_NAMES[args.mode] if args.mode else clf.mode
    plan = FilterPlan(mode=mode, threads=args.threads)
    labels = classify_image(image, w, clf, plan=plan, materialize=args.reference)
    write_label_map(args.out, labels)
    manifest = _manifest(args, argv)
    manifest.add_input(args.input)
    manifest.add_input(args.classifier)
    manifest.add_output(args.out)
    manifest.add_output(f"{args.out}.palette")
    manifest.wall_time_s = time.monotonic() - started
    write_manifest(f"{args.out}.manifest.json", manifest)
    print(f"classified {image.grid.width}x{image.grid.height} -> {args.out}")
    return 0


# ----------------------------------------------------------------- eval

def cmd_eval(args, argv) -> int:
    predicted = read_label_map(args.predicted)
    truth = read_label_map(args.truth)
    mask = interior_mask(truth.grid, args.margin) if args.margin else None
    names = [n.strip() for n in args.names.split(",")] if args.names else None
    cm = evaluate(predicted, truth, ignore_label=args.ignore,
                  num_classes=args.num_classes, mask=mask, names=names)
    print(cm.format())
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> _Parser:
    parser = _Parser(prog="histocube",
                     description="local histogram cubes, occlusion texture "
                                 "models, and subspace classification")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lh", help="transform an image into a histogram cube")
    p.add_argument("input")
    p.add_argument("--window", required=True, help="delta | box:R | center-weighted:R[:c0]")
    p.add_argument("--mode", choices=sorted(MODE_NAMES), default="auto")
    p.add_argument("--fft-threshold", type=int, default=49)
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--quantize", help="per-factor spec, e.g. 8,drop,8")
    p.add_argument("--out", help="cube file to write")
    p.add_argument("--levels-dir", help="directory for per-level PGM previews")
    p.set_defaults(func=cmd_lh)

    p = sub.add_parser("synth", help="sample textures from a model config")
    p.add_argument("--config", required=True)
    p.add_argument("--colors", help="constant sources: 'r,g,b;r,g,b;...' or 'v;v;...'")
    p.add_argument("--sources", nargs="+", help="source image files")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify", help="check model properties")
    p.add_argument("--config", required=True)
    p.add_argument("--checks", default="mass,flatness",
                   help="comma list: mass,flatness,bound,disjoint")
    p.add_argument("--method", choices=["auto", "analytic", "exact", "monte-carlo"],
                   default="auto")
    p.add_argument("--samples", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--window")
    p.add_argument("--colors")
    p.add_argument("--sources", nargs="+")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("train", help="fit a subspace classifier")
    p.add_argument("--class", dest="class_images", action="append", required=True,
                   metavar="IMAGE", help="one exemplar image per class, in label order")
    p.add_argument("--window", required=True)
    p.add_argument("--samples-per-class", type=int, default=64)
    p.add_argument("--components", default="2", help="int, or comma list per class")
    p.add_argument("--margin", default="auto")
    p.add_argument("--quantize")
    p.add_argument("--mode", choices=sorted(MODE_NAMES), default="noncyclic")
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="label each pixel of an image")
    p.add_argument("input")
    p.add_argument("--classifier", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--window", help="override the stored window spec")
    p.add_argument("--mode", choices=sorted(MODE_NAMES), default=None)
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--reference", action="store_true",
                   help="materialize the full cube instead of streaming")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("eval", help="compare predicted labels against truth")
    p.add_argument("predicted")
    p.add_argument("truth")
    p.add_argument("--ignore", type=int, default=None)
    p.add_argument("--margin", type=int, default=0)
    p.add_argument("--num-classes", type=int, default=None)
    p.add_argument("--names", help="comma list of class display names")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args, ["histocube"] + argv) or 0
    except SystemExit as exc:  # --help / --version
        code = exc.code
        return int(code) if isinstance(code, int) else 0
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (EnumerationCapError, ValueError) as exc:
        if isinstance(exc, (ConfigError, FormatError)):
            print(f"file error: {exc}", file=sys.stderr)
            return 2
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return 2
    except VerificationFailure as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
