"""File formats: embedding arrays, score CSVs, ratings tables, run manifests.

Embedding files are recognised by content first and extension second:

* ``.npy`` version 1.0 containers (magic ``\\x93NUMPY``), ``<f4`` or ``<f8``,
  C order, 2-D (1-D or 2-D inside an embedding directory);
* headerless CSV of reals (``.csv``);
* raw little-endian float32 (``.f32``/``.raw``/``.bin``) with a sidecar
  ``<file>.shape`` or ``<stem>.shape`` holding ``"N d"``.
"""

from __future__ import annotations

import ast
import csv
import hashlib
import json
import os
import struct
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .embedmat import EmbeddingSet
from .errors import InputError
from .kernel import KernelSpec
from .metric import ScoreRecord

__all__ = [
    "EmbeddingFileHeader",
    "RunManifest",
    "read_array",
    "read_embeddings",
    "write_embeddings",
    "read_embedding_dir",
    "load_embeddings",
    "write_scores",
    "read_scores",
    "read_ratings",
    "write_rows",
    "fmt17",
    "content_hash",
]

NPY_MAGIC = b"\x93NUMPY"
RAW_SUFFIXES = (".f32", ".raw", ".bin")
EMBEDDING_SUFFIXES = (".npy", ".csv") + RAW_SUFFIXES
SCORE_HEADER = ["metric", "value", "reference", "eval", "n_ref", "n_eval", "dim",
                "sigma", "scale", "alpha", "wall_ms"]
DTYPES = {"f32le": "<f4", "f64le": "<f8"}


@dataclass(frozen=True)
class EmbeddingFileHeader:
    dtype: str
    shape: tuple[int, ...]
    fortran_order: bool = False

    @property
    def itemsize(self) -> int:
        return 4 if self.dtype == "f32le" else 8

    @property
    def payload_bytes(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64)) * self.itemsize


def fmt17(v) -> str:
    """Round-trip-safe text for a float (17 significant digits); blank for None."""
    if v is None:
        return ""
    return format(float(v), ".17g")


@contextmanager
def _atomic_open(path: Path, mode: str = "w"):
    """Write to a temp file next to ``path`` and rename on success."""
    path = Path(path)
    if not str(path) or path.name == "":
        raise InputError("output path is empty")
    parent = path.parent
    try:
        parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=parent)
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc}") from exc
    try:
        kwargs = {"newline": ""} if "b" not in mode else {}
        with os.fdopen(fd, mode, **kwargs) as fh:
            yield fh
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


# --------------------------------------------------------------------------
# embedding arrays

def _parse_npy(raw: bytes, path: Path) -> np.ndarray:
    if len(raw) < 10:
        raise InputError(f"{path}: file too short for an array header ({len(raw)} bytes)")
    major, minor = raw[6], raw[7]
    if major == 1:
        (hlen,), start = struct.unpack_from("<H", raw, 8), 10
    elif major in (2, 3):
        if len(raw) < 12:
            raise InputError(f"{path}: truncated header length at byte offset 8")
        (hlen,), start = struct.unpack_from("<I", raw, 8), 12
    else:
        raise InputError(f"{path}: unsupported array format version {major}.{minor} at byte offset 6")
    if len(raw) < start + hlen:
        raise InputError(f"{path}: header declares {hlen} bytes at offset {start}, "
                         f"only {len(raw) - start} present")
    text = raw[start:start + hlen].decode("latin1")
    try:
        header = ast.literal_eval(text.strip())
        descr, fortran, shape = header["descr"], header["fortran_order"], tuple(header["shape"])
    except (ValueError, SyntaxError, KeyError, TypeError) as exc:
        raise InputError(f"{path}: malformed header text at byte offset {start}: {text.strip()!r}") from exc
    kinds = {v: k for k, v in DTYPES.items()}
    if descr not in kinds:
        raise InputError(f"{path}: unsupported element type {descr!r} (header at offset {start}); "
                         "expected '<f4' or '<f8'")
    if fortran:
        raise InputError(f"{path}: column-major (fortran_order) arrays are not supported")
    if not all(isinstance(s, int) and s >= 0 for s in shape):
        raise InputError(f"{path}: invalid shape {shape}")
    hdr = EmbeddingFileHeader(kinds[descr], shape)
    offset = start + hlen
    have = len(raw) - offset
    if have != hdr.payload_bytes:
        raise InputError(f"{path}: payload at byte offset {offset} has {have} bytes, "
                         f"expected {hdr.payload_bytes} bytes for shape {shape} {descr}")
    return np.frombuffer(raw, dtype=descr, count=int(np.prod(shape, dtype=np.int64)),
                         offset=offset).reshape(shape)


def _npy_bytes(arr: np.ndarray, descr: str) -> bytes:
    arr = np.ascontiguousarray(arr, dtype=descr)
    header = "{'descr': '%s', 'fortran_order': False, 'shape': %r, }" % (descr, tuple(arr.shape))
    # Total header (magic + version + length + text + newline) padded to 64 bytes.
    pad = -(10 + len(header) + 1) % 64
    text = (header + " " * pad + "\n").encode("latin1")
    return NPY_MAGIC + b"\x01\x00" + struct.pack("<H", len(text)) + text + arr.tobytes()


def _sidecar(path: Path) -> Path | None:
    for cand in (path.with_name(path.name + ".shape"), path.with_suffix(".shape")):
        if cand.is_file():
            return cand
    return None


def _parse_raw(raw: bytes, path: Path) -> np.ndarray:
    side = _sidecar(path)
    if side is None:
        raise InputError(f"{path}: raw float32 file needs a sidecar {path.name}.shape with 'N d'")
    try:
        n, d = (int(t) for t in side.read_text().split())
    except ValueError as exc:
        raise InputError(f"{side}: expected two integers 'N d'") from exc
    expected = n * d * 4
    if len(raw) != expected:
        raise InputError(f"{path}: payload at byte offset 0 has {len(raw)} bytes, "
                         f"expected {expected} bytes for shape ({n}, {d}) float32")
    return np.frombuffer(raw, dtype="<f4").reshape(n, d)


def _parse_csv(path: Path) -> np.ndarray:
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise InputError(f"{path}: cannot parse CSV of reals: {exc}") from exc
    if arr.size == 0:
        raise InputError(f"{path}: CSV contains no values")
    return arr


def read_array(path) -> np.ndarray:
    """Read an array of any rank from a supported embedding file."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    if raw[:6] == NPY_MAGIC:
        arr = _parse_npy(raw, path)
    elif path.suffix.lower() == ".npy":
        raise InputError(f"{path}: missing array magic bytes at offset 0")
    elif path.suffix.lower() in RAW_SUFFIXES:
        arr = _parse_raw(raw, path)
    elif path.suffix.lower() == ".csv":
        arr = _parse_csv(path)
    else:
        raise InputError(f"{path}: unrecognised embedding format (expected .npy, .csv or raw .f32)")
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(arr))[0]
        raise InputError(f"{path}: non-finite value at index {tuple(int(i) for i in bad)}")
    return arr


def read_embeddings(path) -> EmbeddingSet:
    """Read one ``(N, d)`` embedding file; the label is the file stem."""
    path = Path(path)
    arr = read_array(path)
    if arr.ndim != 2:
        raise InputError(f"{path}: expected a rank-2 array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InputError(f"{path}: empty array of shape {arr.shape}")
    return EmbeddingSet(arr, label=path.stem, source=str(path))


def write_embeddings(emb: EmbeddingSet, path, dtype: str | None = None) -> None:
    """Write an embedding set; the format follows the path suffix.

    ``dtype`` is ``"f32le"`` or ``"f64le"`` (default: the set's own precision).
    CSV always holds 17 significant digits, which reproduces either precision.
    """
    if path is None or str(path) == "":
        raise InputError("output path is empty")
    path = Path(path)
    if dtype is None:
        dtype = "f32le" if emb.data.dtype == np.float32 else "f64le"
    if dtype not in DTYPES:
        raise InputError(f"dtype must be one of {sorted(DTYPES)}, got {dtype!r}")
    suffix = path.suffix.lower()
    data = emb.data.astype(DTYPES[dtype])
    if suffix == ".csv":
        with _atomic_open(path, "w") as fh:
            for row in data.astype(np.float64):
                fh.write(",".join(fmt17(v) for v in row) + "\n")
    elif suffix in RAW_SUFFIXES:
        if dtype != "f32le":
            raise InputError("raw embedding files are float32 only")
        with _atomic_open(path, "wb") as fh:
            fh.write(np.ascontiguousarray(data).tobytes())
        with _atomic_open(path.with_name(path.name + ".shape"), "w") as fh:
            fh.write(f"{data.shape[0]} {data.shape[1]}\n")
    else:
        with _atomic_open(path, "wb") as fh:
            fh.write(_npy_bytes(data, DTYPES[dtype]))


def read_embedding_dir(directory, frame_level: bool = False) -> EmbeddingSet:
    """One row per embedding file, in lexicographic file-name order.

    Rank-1 files contribute their vector. Rank-2 files (frames x d) are
    averaged over frames, or contribute every frame when ``frame_level``.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"{directory} is not a directory")
    files = sorted((p for p in directory.iterdir()
                    if p.is_file() and p.suffix.lower() in EMBEDDING_SUFFIXES
                    and not p.name.startswith(".")), key=lambda p: p.name)
    if not files:
        raise InputError(f"{directory}: no embedding files found")
    rows, dims = [], {}
    for f in files:
        arr = read_array(f)
        if arr.ndim == 1:
            arr = arr[None, :]
        elif arr.ndim != 2:
            raise InputError(f"{f}: expected rank 1 or 2, got shape {arr.shape}")
        if arr.shape[0] == 0 or arr.shape[1] == 0:
            raise InputError(f"{f}: empty array of shape {arr.shape}")
        dims.setdefault(arr.shape[1], []).append(f.name)
        if frame_level:
            rows.append(arr.astype(np.float64))
        else:
            rows.append(arr.mean(axis=0, dtype=np.float64)[None, :])
    if len(dims) > 1:
        detail = "; ".join(f"d={d}: {', '.join(names)}" for d, names in sorted(dims.items()))
        raise InputError(f"{directory}: embedding files disagree on dimension ({detail})")
    return EmbeddingSet(np.concatenate(rows, axis=0), label=directory.name, source=str(directory))


def load_embeddings(path, frame_level: bool = False) -> EmbeddingSet:
    """File or directory, whichever ``path`` is."""
    path = Path(path)
    if path.is_dir():
        return read_embedding_dir(path, frame_level=frame_level)
    if not path.exists():
        raise InputError(f"{path} does not exist")
    return read_embeddings(path)


# --------------------------------------------------------------------------
# score CSVs

def _score_row(r: ScoreRecord) -> list[str]:
    return [r.metric, fmt17(r.value), r.reference_label, r.eval_label, str(r.n_ref),
            str(r.n_eval), str(r.dim),
            fmt17(r.kernel.sigma) if r.kernel else "",
            fmt17(r.kernel.scale) if r.kernel else "",
            fmt17(r.alpha), fmt17(r.wall_ms)]


def write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """Comma-separated, ``\\n`` line ends, no quoting; atomically replaced."""
    with _atomic_open(Path(path), "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = [str(c) for c in row]
            if any("," in c or "\n" in c for c in cells):
                raise InputError(f"CSV cell contains a separator: {cells}")
            fh.write(",".join(cells) + "\n")


def write_scores(records: Sequence[ScoreRecord], path) -> None:
    if not records:
        raise InputError("no score records to write")
    write_rows(path, SCORE_HEADER, (_score_row(r) for r in records))


def _opt(text: str) -> float | None:
    return float(text) if text != "" else None


def read_scores(path) -> list[ScoreRecord]:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != SCORE_HEADER:
                raise InputError(f"{path}: not a score CSV (header {reader.fieldnames})")
            out = []
            for i, row in enumerate(reader, start=2):
                try:
                    kernel = (KernelSpec(float(row["sigma"]), float(row["scale"]))
                              if row["sigma"] else None)
                    out.append(ScoreRecord(row["metric"], float(row["value"]), row["reference"],
                                           row["eval"], int(row["n_ref"]), int(row["n_eval"]),
                                           int(row["dim"]), kernel, _opt(row["alpha"]),
                                           _opt(row["wall_ms"])))
                except (ValueError, TypeError) as exc:
                    raise InputError(f"{path}: line {i}: {exc}") from exc
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    return out


def _read_table(path: Path) -> tuple[list[str], list[dict[str, str]]]:
    try:
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            rows = [{k.strip(): (v or "").strip() for k, v in r.items()} for r in reader]
            return [h.strip() for h in (reader.fieldnames or [])], rows
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _read_metric_scores(path: Path, metric: str) -> dict[str, float]:
    header, rows = _read_table(path)
    if header == SCORE_HEADER:
        picked = [(r["eval"], r["value"]) for r in rows if r["metric"] == metric]
        if not picked:
            raise InputError(f"{path}: no '{metric}' rows in score CSV")
    elif header[:2] == ["system_id", "metric_score"]:
        picked = [(r["system_id"], r["metric_score"]) for r in rows]
    else:
        raise InputError(f"{path}: expected a score CSV or 'system_id,metric_score' header")
    out: dict[str, float] = {}
    for sid, val in picked:
        if sid in out:
            raise InputError(f"{path}: duplicate score for system {sid!r}")
        try:
            out[sid] = float(val)
        except ValueError as exc:
            raise InputError(f"{path}: score for {sid!r} is not a number: {val!r}") from exc
    return out


def read_ratings(ratings_path, scores_path=None, metric: str = "kad"):
    """Build a RatingsTable.

    ``ratings_path`` has either ``system_id,metric_score,human_rating`` or
    ``system_id,human_rating``; the latter is joined on system id with
    ``scores_path`` (a score CSV, keyed by its ``eval`` column, or a
    ``system_id,metric_score`` CSV).
    """
    from .study import RatingsTable

    ratings_path = Path(ratings_path)
    header, rows = _read_table(ratings_path)
    try:
        if header == ["system_id", "metric_score", "human_rating"] and scores_path is None:
            triples = [(r["system_id"], float(r["metric_score"]), float(r["human_rating"]))
                       for r in rows]
        elif header[:1] == ["system_id"] and "human_rating" in header:
            if scores_path is None:
                raise InputError(f"{ratings_path}: no metric_score column and no scores file given")
            scores = _read_metric_scores(Path(scores_path), metric)
            ratings = {r["system_id"]: float(r["human_rating"]) for r in rows}
            missing_s = sorted(set(ratings) - set(scores))
            missing_r = sorted(set(scores) - set(ratings))
            if missing_s or missing_r:
                parts = []
                if missing_s:
                    parts.append(f"no score for: {', '.join(missing_s)}")
                if missing_r:
                    parts.append(f"no rating for: {', '.join(missing_r)}")
                raise InputError("unmatched system_id values; " + "; ".join(parts))
            triples = [(s, scores[s], ratings[s]) for s in sorted(ratings)]
        else:
            raise InputError(f"{ratings_path}: expected header 'system_id,human_rating' "
                             "or 'system_id,metric_score,human_rating'")
    except ValueError as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"{ratings_path}: non-numeric value: {exc}") from exc
    return RatingsTable(tuple(triples))


# --------------------------------------------------------------------------
# manifests

def content_hash(path) -> str:
    """SHA-256 of a file, or of the sorted (name, digest) list of a directory."""
    path = Path(path)
    h = hashlib.sha256()
    if path.is_dir():
        for p in sorted(path.rglob("*")):
            if p.is_file():
                h.update(f"{p.relative_to(path).as_posix()}\0{content_hash(p)}\n".encode())
        return h.hexdigest()
    with path.open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    """Reproducibility record written next to every output CSV."""

    command_line: str
    seed: int
    inputs: list[tuple[str, str]] = field(default_factory=list)
    config: dict[str, str] = field(default_factory=dict)
    tool_version: str = __version__
    timestamp: str = field(
        default_factory=lambda: datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ"))

    @classmethod
    def for_inputs(cls, command_line: str, seed: int, paths: Iterable, **config) -> "RunManifest":
        inputs = [(str(p), content_hash(p)) for p in paths]
        return cls(command_line, seed, inputs, {k: str(v) for k, v in config.items()})

    def to_dict(self) -> dict[str, str | int]:
        out: dict[str, str | int] = {
            "tool_version": self.tool_version,
            "command_line": self.command_line,
            "seed": self.seed,
            "timestamp": self.timestamp,
        }
        for i, (p, digest) in enumerate(self.inputs):
            out[f"input.{i}.path"] = p
            out[f"input.{i}.sha256"] = digest
        for k, v in self.config.items():
            out[f"config.{k}"] = v
        return out

    def write(self, output_path) -> Path:
        target = Path(str(output_path) + ".manifest.json")
        with _atomic_open(target, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=False)
            fh.write("\n")
        return target
