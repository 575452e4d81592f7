# denots/storage.py
"""On-disk formats.

* dataset CSV: ``# key=value`` provenance lines, then ``t,x_1..x_u,target``
  (``target_1..target_u`` for forecasting); a new sequence starts wherever
  ``t`` does not increase; missing values are the literal ``NaN``.
* manifest / metrics / study summaries: sorted, indented JSON.
* history: JSON lines, one object per epoch.
* weights: magic, version, config hash, JSON model header, shape table,
  raw little-endian float64 data and a trailing sha256.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

import numpy as np

from .autodiff import ParamSet
from .config import FieldKind, SolverConfig, TaskKind
from .dynamics import ScaleConfig
from .errors import DenotsError
from .interpolation import TimeSeries
from .model import DenotsModel, Standardizer

logger = logging.getLogger(__name__)

WEIGHTS_MAGIC = b"DNTSWGT\x00"
WEIGHTS_VERSION = 1
NORM_MEAN = "norm.mean"
NORM_STD = "norm.std"
SPLIT_NAMES = ("train", "val", "test")


# ---------------- Helpers ----------------
def sha256_of_file(path: Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as f:
        while True:
            b = f.read(1024 * 1024)
            if not b:
                break
            h.update(b)
    return h.hexdigest()


def _fmt(x: float) -> str:
    x = float(x)
    if math.isnan(x):
        return "NaN"
    return repr(x)


def _parse(s: str) -> float:
    return float("nan") if s.strip() in ("NaN", "nan", "") else float(s)


def _write_text(path: Path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    try:
        path.write_text(text, encoding="utf-8", newline="")
    except OSError as err:
        raise DenotsError(f"cannot write {path}: {err.strerror}") from None
    return path


def write_json(path: Path, payload: Mapping[str, Any], config_hash: Optional[str] = None) -> Path:
    data = dict(payload)
    if config_hash is not None:
        data["config_hash"] = config_hash
    return _write_text(path, json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def read_json(path: Path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def _cell(v: Any) -> Any:
    if isinstance(v, (int, float, str, np.floating, np.integer)):
        return v
    return json.dumps(_jsonable(v))


def write_csv_with_provenance(path: Path, header_kv: Mapping[str, Any], columns: Sequence[str],
                              rows: Iterable[Sequence[Any]]) -> Path:
    buf = io.StringIO()
    for k, v in header_kv.items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in r])
    return _write_text(path, buf.getvalue())


def read_csv_with_provenance(path: Path) -> tuple[dict[str, str], list[str], list[list[str]]]:
    meta: dict[str, str] = {}
    body: list[str] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# ") and "=" in line and not body:
            k, v = line[2:].split("=", 1)
            meta[k.strip()] = v.strip()
        elif line:
            body.append(line)
    reader = csv.reader(body)
    columns = next(reader, [])
    return meta, columns, [row for row in reader]


# ---------------- Datasets ----------------
def write_dataset_csv(path: Path, series: Sequence[TimeSeries], task: TaskKind,
                      meta: Mapping[str, Any]) -> Path:
    task = TaskKind(task)
    if not series:
        raise DenotsError("refusing to write an empty split")
    u = series[0].u
    forecast = task is TaskKind.FORECAST
    targets = [f"target_{i + 1}" for i in range(u)] if forecast else ["target"]
    columns = ["t", *(f"x_{i + 1}" for i in range(u)), *targets]
    nan_x = [float("nan")] * u

    def rows():
        for s in series:
            if forecast:
                merged = [(t, list(x), [float("nan")] * u) for t, x in zip(s.times, s.values)]
                merged += [(t, nan_x, list(y)) for t, y in zip(s.query_times, np.asarray(s.target))]
                for t, x, y in sorted(merged, key=lambda r: r[0]):
                    yield [float(t), *map(float, x), *map(float, y)]
            else:
                for t, x in zip(s.times, s.values):
                    yield [float(t), *map(float, x), s.target if isinstance(s.target, int) else float(s.target)]

    header = {**meta, "task": task.value, "u": u, "sequences": len(series)}
    return write_csv_with_provenance(path, header, columns, rows())


def read_dataset_csv(path: Path) -> tuple[dict[str, str], list[TimeSeries]]:
    meta, columns, rows = read_csv_with_provenance(path)
    task = TaskKind(meta.get("task", TaskKind.REGRESSION.value))
    u = sum(1 for c in columns if c.startswith("x_"))
    forecast = task is TaskKind.FORECAST
    classify = task in (TaskKind.BINARY, TaskKind.MULTICLASS)

    blocks: list[list[list[float]]] = []
    prev = math.inf
    for row in rows:
        vals = [_parse(v) for v in row]
        if vals[0] <= prev:
            blocks.append([])
        blocks[-1].append(vals)
        prev = vals[0]

    out = []
    for block in blocks:
        arr = np.asarray(block, dtype=np.float64)
        t, x, y = arr[:, 0], arr[:, 1:1 + u], arr[:, 1 + u:]
        if forecast:
            is_query = ~np.all(np.isnan(y), axis=1)
            out.append(TimeSeries(t[~is_query], x[~is_query], target=y[is_query], query_times=t[is_query]))
        else:
            target: Any = int(y[0, 0]) if classify else float(y[0, 0])
            out.append(TimeSeries(t, x, target=target))
    return meta, out


def write_manifest(path: Path, spec: Mapping[str, Any], seed: int, files: Mapping[str, Path],
                   sizes: Mapping[str, int], config_hash: str) -> Path:
    splits = {name: {"file": Path(p).name, "size": int(sizes[name]), "sha256": sha256_of_file(p)}
              for name, p in files.items()}
    return write_json(path, {"spec": spec, "seed": seed, "splits": splits}, config_hash)


def verify_manifest(path: Path) -> bool:
    """True when every split file listed exists with its recorded checksum."""
    path = Path(path)
    if not path.exists():
        return False
    manifest = read_json(path)
    for entry in manifest.get("splits", {}).values():
        f = path.parent / entry["file"]
        if not f.exists() or sha256_of_file(f) != entry["sha256"]:
            return False
    return True


def load_splits(manifest_path: Path) -> tuple[list[TimeSeries], ...]:
    """Read back the train, val and test files a valid manifest lists."""
    manifest_path = Path(manifest_path)
    if not verify_manifest(manifest_path):
        raise DenotsError(f"dataset manifest {manifest_path} is missing or does not match its files")
    listed = read_json(manifest_path)["splits"]
    out = []
    for name in SPLIT_NAMES:
        entry = listed[name]
        _, series = read_dataset_csv(manifest_path.parent / entry["file"])
        if len(series) != entry["size"]:
            raise DenotsError(f"split {name}: read {len(series)} sequences, manifest says {entry['size']}")
        out.append(series)
    return tuple(out)


# ---------------- History ----------------
class HistoryWriter:
    """Appends one JSON object per epoch; each line is flushed as written."""

    def __init__(self, path: Path, config_hash: str) -> None:
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text("", encoding="utf-8")
        self.config_hash = config_hash

    def __call__(self, record: Mapping[str, Any]) -> None:
        line = json.dumps(_jsonable({**record, "config_hash": self.config_hash}), sort_keys=True)
        with self.path.open("a", encoding="utf-8") as f:
            f.write(line + "\n")


def read_history(path: Path) -> list[dict]:
    """Records a HistoryWriter left behind, in epoch order; for inspecting finished runs."""
    return [json.loads(line) for line in Path(path).read_text(encoding="utf-8").splitlines() if line]


# ---------------- Weights ----------------
@dataclass(frozen=True)
class WeightsFile:
    model: DenotsModel
    config_hash: str
    header: dict


def _model_header(model: DenotsModel) -> dict:
    return {
        "kind": model.kind.value, "task": model.task.value,
        "input_size": model.input_size, "hidden_size": model.hidden_size, "out_dim": model.out_dim,
        "scale": {"D": model.scale.D, "M": model.scale.M},
        "solver": model.solver.model_dump(mode="json"),
        "dt_channel": model.dt_channel,
    }


def encode_weights(model: DenotsModel, config_hash: str) -> bytes:
    arrays = dict(model.params.items())
    if model.transform is not None:
        arrays[NORM_MEAN] = model.transform.mean
        arrays[NORM_STD] = model.transform.std
    header = json.dumps(_model_header(model), sort_keys=True).encode("utf-8")
    tag = config_hash.encode("ascii")[:16].ljust(16, b"\x00")

    out = bytearray()
    out += WEIGHTS_MAGIC
    out += struct.pack("<H", WEIGHTS_VERSION)
    out += tag
    out += struct.pack("<I", len(header)) + header
    out += struct.pack("<I", len(arrays))
    for name, arr in arrays.items():
        raw = name.encode("utf-8")
        out += struct.pack("<H", len(raw)) + raw
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
    for arr in arrays.values():
        out += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    out += hashlib.sha256(bytes(out)).digest()
    return bytes(out)


def decode_weights(blob: bytes) -> WeightsFile:
    if len(blob) < len(WEIGHTS_MAGIC) + 32 or not blob.startswith(WEIGHTS_MAGIC):
        raise DenotsError("not a denots weights file")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise DenotsError("weights file checksum mismatch")
    pos = len(WEIGHTS_MAGIC)
    (version,) = struct.unpack_from("<H", body, pos)
    pos += 2
    if version != WEIGHTS_VERSION:
        raise DenotsError(f"unsupported weights version {version}")
    config_hash = body[pos:pos + 16].rstrip(b"\x00").decode("ascii")
    pos += 16
    (hlen,) = struct.unpack_from("<I", body, pos)
    pos += 4
    header = json.loads(body[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    (count,) = struct.unpack_from("<I", body, pos)
    pos += 4
    table: list[tuple[str, tuple[int, ...]]] = []
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", body, pos)
        pos += 2
        name = body[pos:pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<B", body, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", body, pos)
        pos += 4 * ndim
        table.append((name, tuple(shape)))
    arrays: dict[str, np.ndarray] = {}
    for name, shape in table:
        n = int(np.prod(shape, dtype=np.int64))
        arrays[name] = np.frombuffer(body, dtype="<f8", count=n, offset=pos).reshape(shape).astype(np.float64)
        pos += 8 * n
    if pos != len(body):
        raise DenotsError("weights file has trailing bytes")

    transform = None
    if NORM_MEAN in arrays:
        transform = Standardizer(arrays.pop(NORM_MEAN), arrays.pop(NORM_STD))
    model = DenotsModel(
        kind=FieldKind(header["kind"]), task=TaskKind(header["task"]),
        input_size=header["input_size"], hidden_size=header["hidden_size"], out_dim=header["out_dim"],
        scale=ScaleConfig(header["scale"]["D"], header["scale"]["M"]),
        solver=SolverConfig.model_validate(header["solver"]),
        params=ParamSet(arrays), dt_channel=header["dt_channel"], transform=transform,
    )
    return WeightsFile(model, config_hash, header)


def save_weights(path: Path, model: DenotsModel, config_hash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_weights(model, config_hash))
    return path


def load_weights(path: Path) -> WeightsFile:
    try:
        blob = Path(path).read_bytes()
    except FileNotFoundError:
        raise DenotsError(f"weights file not found: {path}") from None
    return decode_weights(blob)


# ---------------- Studies ----------------
def write_study(out_dir: Path, name: str, config_hash: str, rows: Sequence[Mapping[str, Any]],
                summary: Mapping[str, Any]) -> tuple[Path, Path]:
    """``<name>-<hash>.csv`` with the raw points and ``<name>-<hash>.json`` with the summary."""
    out_dir = Path(out_dir)
    stem = f"{name}-{config_hash}"
    columns: list[str] = []
    for r in rows:
        columns += [k for k in r if k not in columns]
    csv_path = write_csv_with_provenance(
        out_dir / f"{stem}.csv", {"study": name, "config_hash": config_hash}, columns,
        ([_cell(r.get(c, "")) for c in columns] for r in rows))
    json_path = write_json(out_dir / f"{stem}.json", {"study": name, **summary}, config_hash)
    return csv_path, json_path


def render_svg(path: Path, curves: Mapping[str, tuple[Sequence[float], Sequence[float]]], *,
               xlabel: str, ylabel: str, title: str = "", logx: bool = False) -> Path:
    """Line chart via matplotlib (optional extra ``plot``)."""
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        raise DenotsError("SVG output needs matplotlib: pip install 'denots[plot]'") from None
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, (xs, ys) in curves.items():
        ax.plot(xs, ys, marker="o", label=label)
    if logx:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.legend()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
