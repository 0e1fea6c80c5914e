"""File formats: netpbm images, cube files, classifier bundles, model
configs, and run manifests.

Formats
-------
Images: binary PGM (P5) and PPM (P6), maxval up to 65535 (16-bit samples
are big-endian per the netpbm convention).  Raster rows map to the first
grid coordinate, so a file with c columns and r rows loads as Grid(r, c).

Label maps: P5 with the label as the gray value, plus a sidecar text
palette "<path>.palette" with lines "label r g b" suggesting display
colors.

Cube files: magic "HCUB", then little-endian u32 version (1), u32 W, H,
and value count, then W*H*|Y| float64 little-endian values, level-major
(all of level 0, then level 1, ...).

Classifier bundles: magic "HCLF", u32 version (1), u32 K and |Y|, then
per class u32 N_k, float64 mean[|Y|], singular values[N_k], and
directions[N_k * |Y|] (row per direction); then three length-prefixed
optional strings: window spec, quantize spec, filter mode.

Model configs: JSON with a documented shape; see parse_model_config.

All writers are atomic: a temp file in the target directory is renamed
over the destination, so readers never observe partial files.
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .classifier import SubspaceClassifier
from .grid import Grid, HistCube, Image, LabelMap, Quantization, ValueSpace
from .occlusion import ClassTableModel, IIDSpinnerModel, OcclusionModel, TableModel
from .textures import (BlobDistribution, BlobTable, DiskBlobs, ExpansionModel,
                       OverlayModel)

CUBE_MAGIC = b"HCUB"
CLASSIFIER_MAGIC = b"HCLF"

PALETTE = ((31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40),
           (148, 103, 189), (140, 86, 75), (227, 119, 194), (127, 127, 127),
           (188, 189, 34), (23, 190, 207))


class FormatError(ValueError):
    """A file exists but its contents do not parse."""


class ConfigError(ValueError):
    """A model config is structurally invalid; the message carries the path."""


def write_bytes_atomic(path, data: bytes):
    path = os.fspath(path)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def write_text_atomic(path, text: str):
    write_bytes_atomic(path, text.encode("utf-8"))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------- netpbm

def _parse_netpbm(data: bytes, path):
    if len(data) < 2 or data[:1] != b"P" or data[1:2] not in b"56":
        raise FormatError(f"{path}: not a binary PGM/PPM file")
    magic = data[:2].decode()
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos] in b" \t\r\n":
            pos += 1
        if pos < len(data) and data[pos] in b"#":
            while pos < len(data) and data[pos] not in b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos] not in b" \t\r\n#":
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated header")
        fields.append(data[start:pos])
    if pos >= len(data) or data[pos] not in b" \t\r\n":
        raise FormatError(f"{path}: missing whitespace after header")
    pos += 1
    try:
        cols, rows, maxval = (int(f) for f in fields)
    except ValueError:
        raise FormatError(f"{path}: non-numeric header field") from None
    if cols < 1 or rows < 1 or not 1 <= maxval <= 65535:
        raise FormatError(f"{path}: bad dimensions or maxval")
    channels = 1 if magic == "P5" else 3
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = rows * cols * channels * dtype.itemsize
    raster = data[pos:pos + need]
    if len(raster) != need:
        raise FormatError(f"{path}: raster truncated ({len(raster)} of {need} bytes)")
    arr = np.frombuffer(raster, dtype=dtype).astype(np.int64)
    if arr.max(initial=0) > maxval:
        raise FormatError(f"{path}: sample exceeds maxval")
    shape = (rows, cols) if channels == 1 else (rows, cols, 3)
    return magic, maxval, arr.reshape(shape)


def _read_file(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def read_image(path) -> Image:
    """Load a P5 image into Z_{maxval+1} or a P6 image into a three-factor
    value space (one factor per channel)."""
    magic, maxval, arr = _parse_netpbm(_read_file(path), path)
    grid = Grid(arr.shape[0], arr.shape[1])
    if magic == "P5":
        return Image(grid, ValueSpace((maxval + 1,)), arr)
    m = maxval + 1
    flat = (arr[:, :, 0] * m + arr[:, :, 1]) * m + arr[:, :, 2]
    return Image(grid, ValueSpace((m, m, m)), flat)


def _netpbm_bytes(magic: str, maxval: int, planes: np.ndarray) -> bytes:
    header = f"{magic}\n{planes.shape[1]} {planes.shape[0]}\n{maxval}\n".encode()
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    return header + np.ascontiguousarray(planes, dtype=dtype).tobytes()


def write_image(path, image: Image):
    """Write one-factor images as P5 and three-factor images as P6."""
    factors = image.values.factors
    if len(factors) == 1:
        if factors[0] > 65536:
            raise ValueError("value space too large for PGM")
        write_bytes_atomic(path, _netpbm_bytes("P5", factors[0] - 1, image.pixels))
        return
    if len(factors) == 3:
        if len(set(factors)) != 1:
            raise ValueError("PPM output needs equal channel factors")
        if factors[0] > 65536:
            raise ValueError("value space too large for PPM")
        digits = np.stack(image.values.digits(image.pixels), axis=-1)
        write_bytes_atomic(path, _netpbm_bytes("P6", factors[0] - 1, digits))
        return
    raise ValueError(f"cannot write a value space with factors {factors} as netpbm")


def write_label_map(path, labels: LabelMap):
    """P5 with labels as gray values, plus a display palette sidecar."""
    if labels.num_labels > 256:
        raise ValueError("too many labels for an 8-bit label image")
    maxval = max(labels.num_labels - 1, 1)
    write_bytes_atomic(path, _netpbm_bytes("P5", maxval, labels.labels))
    lines = ["# label r g b"]
    for n in range(labels.num_labels):
        r, g, b = PALETTE[n % len(PALETTE)]
        lines.append(f"{n} {r} {g} {b}")
    write_text_atomic(f"{os.fspath(path)}.palette", "\n".join(lines) + "\n")


def read_label_map(path, num_labels: int | None = None) -> LabelMap:
    magic, maxval, arr = _parse_netpbm(_read_file(path), path)
    if magic != "P5":
        raise FormatError(f"{path}: label maps must be P5")
    n = num_labels if num_labels is not None else maxval + 1
    return LabelMap(Grid(arr.shape[0], arr.shape[1]), n, arr)


# ------------------------------------------------------------- cube file

def write_histcube(path, cube: HistCube):
    header = CUBE_MAGIC + struct.pack("<IIII", 1, cube.grid.width,
                                      cube.grid.height, cube.values.size)
    body = np.ascontiguousarray(cube.data, dtype="<f8").tobytes()
    write_bytes_atomic(path, header + body)


def read_histcube(path, factors=None) -> HistCube:
    """Load a cube file.  The format stores |Y| flat; pass `factors` to
    restore a product structure (their product must equal |Y|)."""
    data = _read_file(path)
    if len(data) < 20 or data[:4] != CUBE_MAGIC:
        raise FormatError(f"{path}: not a cube file")
    version, width, height, nvals = struct.unpack("<IIII", data[4:20])
    if version != 1:
        raise FormatError(f"{path}: unsupported cube version {version}")
    need = 20 + width * height * nvals * 8
    if len(data) != need:
        raise FormatError(f"{path}: expected {need} bytes, found {len(data)}")
    cube = np.frombuffer(data[20:], dtype="<f8").reshape(nvals, width, height)
    values = ValueSpace(tuple(factors) if factors else (nvals,))
    if values.size != nvals:
        raise FormatError(f"{path}: factors {factors} do not match {nvals} levels")
    return HistCube(Grid(width, height), values, cube)


# ----------------------------------------------------- classifier bundle

def _pack_str(s: str | None) -> bytes:
    if s is None:
        return struct.pack("<B", 0)
    raw = s.encode("utf-8")
    return struct.pack("<BI", 1, len(raw)) + raw


def _unpack_str(data: bytes, pos: int):
    (present,) = struct.unpack_from("<B", data, pos)
    pos += 1
    if not present:
        return None, pos
    (n,) = struct.unpack_from("<I", data, pos)
    pos += 4
    return data[pos:pos + n].decode("utf-8"), pos + n


def write_classifier(path, clf: SubspaceClassifier):
    parts = [CLASSIFIER_MAGIC,
             struct.pack("<III", 1, clf.num_classes, clf.num_values)]
    for k in range(clf.num_classes):
        d = clf.directions[k]
        parts.append(struct.pack("<I", d.shape[0]))
        parts.append(np.ascontiguousarray(clf.means[k], dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(clf.singular_values[k], dtype="<f8").tobytes())
        parts.append(np.ascontiguousarray(d, dtype="<f8").tobytes())
    parts.append(_pack_str(clf.window_spec))
    parts.append(_pack_str(clf.quantize_spec))
    parts.append(_pack_str(clf.mode))
    write_bytes_atomic(path, b"".join(parts))


def read_classifier(path) -> SubspaceClassifier:
    data = _read_file(path)
    if len(data) < 16 or data[:4] != CLASSIFIER_MAGIC:
        raise FormatError(f"{path}: not a classifier bundle")
    version, k, nvals = struct.unpack_from("<III", data, 4)
    if version != 1:
        raise FormatError(f"{path}: unsupported classifier version {version}")
    pos = 16
    means = np.empty((k, nvals))
    dirs = []
    svals = []
    try:
        for i in range(k):
            (nk,) = struct.unpack_from("<I", data, pos)
            pos += 4
            means[i] = np.frombuffer(data, dtype="<f8", count=nvals, offset=pos)
            pos += nvals * 8
            svals.append(np.frombuffer(data, dtype="<f8", count=nk, offset=pos).copy())
            pos += nk * 8
            dirs.append(np.frombuffer(data, dtype="<f8", count=nk * nvals,
                                      offset=pos).reshape(nk, nvals).copy())
            pos += nk * nvals * 8
        window_spec, pos = _unpack_str(data, pos)
        quantize_spec, pos = _unpack_str(data, pos)
        mode, pos = _unpack_str(data, pos)
    except (struct.error, ValueError) as exc:
        raise FormatError(f"{path}: truncated classifier bundle") from exc
    if pos != len(data):
        raise FormatError(f"{path}: trailing bytes in classifier bundle")
    return SubspaceClassifier(nvals, means, tuple(dirs), tuple(svals),
                              window_spec=window_spec, quantize_spec=quantize_spec,
                              mode=mode or "noncyclic")


# ----------------------------------------------------------- quantize spec

def parse_quantize_spec(spec: str, source: ValueSpace) -> Quantization:
    """Comma-separated per-factor entries: an integer or "drop".

    "8,drop,8" coarsens factors 1 and 3 to eight levels and removes the
    middle factor.
    """
    parts = [p.strip() for p in str(spec).split(",")]
    if len(parts) != len(source.factors):
        raise ValueError(f"quantize spec {spec!r} has {len(parts)} entries for "
                         f"{len(source.factors)} factors")
    entries: list[int | None] = []
    for p in parts:
        if p == "drop":
            entries.append(None)
        else:
            try:
                entries.append(int(p))
            except ValueError:
                raise ValueError(f"bad quantize entry {p!r} in {spec!r}") from None
    return Quantization(source, tuple(entries))


# ------------------------------------------------------------ model config

def _cfg(cond: bool, path: str, message: str):
    if not cond:
        raise ConfigError(f"{path}: {message}")


def _get(node: dict, key: str, path: str):
    _cfg(isinstance(node, dict), path, "expected an object")
    _cfg(key in node, path, f"missing key {key!r}")
    return node[key]


def _int_list(value, path: str) -> list[int]:
    _cfg(isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool)
                                         for v in value),
         path, "expected a list of integers")
    return value


def _float_list(value, path: str) -> list[float]:
    _cfg(isinstance(value, list) and all(isinstance(v, (int, float))
                                         and not isinstance(v, bool) for v in value),
         path, "expected a list of numbers")
    return [float(v) for v in value]


def _maps_array(value, grid: Grid, path: str) -> np.ndarray:
    _cfg(isinstance(value, list) and value, path, "expected a nonempty list of maps")
    rows = []
    for i, row in enumerate(value):
        flat = _int_list(row, f"{path}[{i}]")
        _cfg(len(flat) == grid.size, f"{path}[{i}]",
             f"map needs {grid.size} entries, found {len(flat)}")
        rows.append(np.asarray(flat, dtype=np.int8).reshape(grid.shape))
    return np.stack(rows)


def _blob_from_config(node: dict, grid: Grid, path: str) -> BlobDistribution:
    kind = _get(node, "kind", path)
    if kind == "blob_table":
        raw = _get(node, "blobs", path)
        _cfg(isinstance(raw, list) and raw, f"{path}.blobs", "expected a list of blobs")
        blobs = []
        for i, b in enumerate(raw):
            _cfg(isinstance(b, list) and b, f"{path}.blobs[{i}]",
                 "expected a nonempty list of [da, db] offsets")
            for off in b:
                _cfg(isinstance(off, list) and len(off) == 2, f"{path}.blobs[{i}]",
                     "offsets are [da, db] pairs")
            blobs.append(np.asarray(b, dtype=np.int64))
        probs = _float_list(_get(node, "probs", path), f"{path}.probs")
        return BlobTable(grid, blobs, probs)
    if kind == "disk_blobs":
        radii = _int_list(_get(node, "radii", path), f"{path}.radii")
        probs = _float_list(_get(node, "probs", path), f"{path}.probs")
        return DiskBlobs(grid, radii, probs)
    raise ConfigError(f"{path}.kind: unknown blob kind {kind!r}")


def _model_from_config(node: dict, grid: Grid, path: str) -> OcclusionModel:
    kind = _get(node, "kind", path)
    try:
        if kind == "table":
            n = _get(node, "num_labels", path)
            maps = _maps_array(_get(node, "maps", path), grid, f"{path}.maps")
            probs = _float_list(_get(node, "probs", path), f"{path}.probs")
            return TableModel(grid, int(n), maps, probs)
        if kind == "iid_spinner":
            probs = _float_list(_get(node, "probs", path), f"{path}.probs")
            return IIDSpinnerModel(grid, probs)
        if kind == "class_table":
            n = _get(node, "num_labels", path)
            reps = _maps_array(_get(node, "representatives", path), grid,
                               f"{path}.representatives")
            probs = _float_list(_get(node, "member_probs", path),
                                f"{path}.member_probs")
            return ClassTableModel(grid, int(n), reps, probs)
        if kind == "expansion":
            seed = _model_from_config(_get(node, "seed", path), grid, f"{path}.seed")
            blobs = _blob_from_config(_get(node, "blobs", path), grid, f"{path}.blobs")
            return ExpansionModel(seed, blobs)
        if kind == "overlay":
            bg = _model_from_config(_get(node, "background", path), grid,
                                    f"{path}.background")
            fg = _model_from_config(_get(node, "foreground", path), grid,
                                    f"{path}.foreground")
            sel = _model_from_config(_get(node, "selector", path), grid,
                                     f"{path}.selector")
            return OverlayModel(bg, fg, sel)
    except (ValueError, TypeError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc
    raise ConfigError(f"{path}.kind: unknown model kind {kind!r}")


def parse_model_config(source) -> tuple[Grid, OcclusionModel]:
    """Parse a model config from JSON text or an already-decoded dict.

    Shape:
        {"grid": [W, H], "model": <node>}
    where <node> is one of
        {"kind": "table", "num_labels": n, "maps": [[flat row-major labels]...],
         "probs": [...]}
        {"kind": "iid_spinner", "probs": [...]}
        {"kind": "class_table", "num_labels": n, "representatives": [[...]...],
         "member_probs": [...]}
        {"kind": "expansion", "seed": <node>, "blobs": <blob node>}
        {"kind": "overlay", "background": <node>, "foreground": <node>,
         "selector": <node>}
    and <blob node> is
        {"kind": "blob_table", "blobs": [[[da, db], ...], ...], "probs": [...]}
        {"kind": "disk_blobs", "radii": [...], "probs": [...]}
    """
    if isinstance(source, (str, bytes)):
        try:
            tree = json.loads(source)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    else:
        tree = source
    dims = _int_list(_get(tree, "grid", "$"), "$.grid")
    _cfg(len(dims) == 2, "$.grid", "expected [W, H]")
    grid = Grid(dims[0], dims[1])
    model = _model_from_config(_get(tree, "model", "$"), grid, "$.model")
    return grid, model


def _blob_to_config(dist: BlobDistribution) -> dict:
    if isinstance(dist, DiskBlobs):
        return {"kind": "disk_blobs", "radii": list(dist.radii),
                "probs": [float(p) for p in dist.probs]}
    if isinstance(dist, BlobTable):
        return {"kind": "blob_table",
                "blobs": [[[int(a), int(b)] for a, b in blob] for blob in dist.blobs],
                "probs": [float(p) for p in dist.probs]}
    raise TypeError(f"cannot serialize blob distribution {type(dist).__name__}")


def _model_to_config(model: OcclusionModel) -> dict:
    if isinstance(model, ClassTableModel):
        return {"kind": "class_table", "num_labels": model.num_labels,
                "representatives": [[int(v) for v in rep.reshape(-1)]
                                    for rep in model.representatives],
                "member_probs": [float(p) for p in model.member_probs]}
    if isinstance(model, TableModel):
        return {"kind": "table", "num_labels": model.num_labels,
                "maps": [[int(v) for v in m.reshape(-1)] for m in model.maps],
                "probs": [float(p) for p in model.probs]}
    if isinstance(model, IIDSpinnerModel):
        return {"kind": "iid_spinner", "probs": [float(p) for p in model.probs]}
    if isinstance(model, ExpansionModel):
        return {"kind": "expansion", "seed": _model_to_config(model.seed_model),
                "blobs": _blob_to_config(model.blob_dist)}
    if isinstance(model, OverlayModel):
        return {"kind": "overlay", "background": _model_to_config(model.background),
                "foreground": _model_to_config(model.foreground),
                "selector": _model_to_config(model.selector)}
    raise TypeError(f"cannot serialize model {type(model).__name__}")


def serialize_model_config(grid: Grid, model: OcclusionModel) -> dict:
    return {"grid": [grid.width, grid.height], "model": _model_to_config(model)}


def config_to_json(grid: Grid, model: OcclusionModel) -> str:
    return json.dumps(serialize_model_config(grid, model), indent=2, sort_keys=True)


# -------------------------------------------------------------- manifests

@dataclass
class RunManifest:
    """Reproducibility record for a CLI invocation that wrote files."""

    command: list[str]
    seed: int | None = None
    config_hash: str | None = None
    inputs: list[dict] = field(default_factory=list)
    outputs: list[dict] = field(default_factory=list)
    version: str = ""
    backend: str = ""
    wall_time_s: float = 0.0

    def add_input(self, path):
        self.inputs.append({"path": os.fspath(path), "sha256": sha256_file(path)})

    def add_output(self, path):
        self.outputs.append({"path": os.fspath(path), "sha256": sha256_file(path)})

    def to_json(self) -> str:
        body = {"command": self.command, "seed": self.seed,
                "config_hash": self.config_hash, "inputs": self.inputs,
                "outputs": self.outputs, "version": self.version,
                "backend": self.backend, "wall_time_s": self.wall_time_s}
        return json.dumps(body, indent=2, sort_keys=True)


def write_manifest(path, manifest: RunManifest):
    write_text_atomic(path, manifest.to_json() + "\n")


def read_manifest(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
