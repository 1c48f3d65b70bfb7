"""On-disk formats: field snapshots, control files, event and energy logs, manifests.

Every writer goes through :func:`atomic_write`, so a crash never leaves a
half-written file under the final name.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .noise import Control, DomainError
from .spectral import SpectralField, TorusGrid

SFLD_MAGIC = "sfld"
SFLD_VERSION = 1


class FormatError(ValueError):
    """Malformed input file; ``line`` and ``column`` are 1-based when known."""

    def __init__(self, message, path=None, line=None, column=None):
        where = str(path) if path is not None else "<input>"
        if line is not None:
            where += f":{line}:{column}"
        super().__init__(f"{where}: {message}")
        self.path, self.line, self.column = path, line, column


def atomic_write(path, data: bytes | str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


# ------------------------------------------------------------------ snapshots

def encode_field(u: SpectralField, name: str = "u", t: float = 0.0) -> bytes:
    """Header line of JSON, then (re, im) float64 pairs over the full spectrum.

    Wavevectors run in C order over (k1, k2, k3) with FFT index layout, and the
    three components of each wavevector are contiguous.
    """
    header = {"format": SFLD_MAGIC, "version": SFLD_VERSION, "n": u.grid.n, "name": name, "t": float(t)}
    full = np.moveaxis(u.full_coeffs(), 0, -1)
    body = np.ascontiguousarray(full).astype("<c16").tobytes()
    return (json.dumps(header, sort_keys=True) + "\n").encode("ascii") + body


def decode_field(data: bytes, path=None) -> tuple[SpectralField, dict]:
    nl = data.find(b"\n")
    if nl < 0:
        raise FormatError("missing header line", path)
    try:
        header = json.loads(data[:nl].decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad header: {exc}", path, 1, getattr(exc, "colno", 1)) from None
    if not isinstance(header, dict) or header.get("format") != SFLD_MAGIC:
        raise FormatError("not a field snapshot", path)
    n = header.get("n")
    if not isinstance(n, int) or n < 2 or n % 2:
        raise FormatError(f"grid size must be a positive even integer, got {n!r}", path)
    body = data[nl + 1:]
    expected = n**3 * 3 * 16
    if len(body) != expected:
        raise FormatError(f"payload has {len(body)} bytes, expected {expected}", path)
    full = np.frombuffer(body, dtype="<c16").reshape(n, n, n, 3)
    grid = TorusGrid(n)
    return SpectralField.from_full_coeffs(grid, np.moveaxis(full, -1, 0).astype(np.complex128)), header


def write_field(path, u: SpectralField, name: str = "u", t: float = 0.0):
    atomic_write(path, encode_field(u, name, t))


def read_field(path) -> tuple[SpectralField, dict]:
    return decode_field(Path(path).read_bytes(), path)


# ------------------------------------------------------------------- controls

def _locate(text: str, needle_path):
    """Best-effort line/column of a JSON value given its key path."""
    pos = 0
    for key in needle_path:
        if isinstance(key, str):
            i = text.find(f'"{key}"', pos)
            if i < 0:
                break
            pos = i
        else:
            # skip to the key-th element of the array starting at pos
            i = text.find("[", pos)
            if i < 0:
                break
            depth, count, j = 0, 0, i + 1
            pos = j
            while j < len(text):
                ch = text[j]
                if ch == "[":
                    depth += 1
                elif ch == "]":
                    if depth == 0:
                        break
                    depth -= 1
                elif ch == "," and depth == 0:
                    count += 1
                    if count == key:
                        pos = j + 1
                        break
                j += 1
            while pos < len(text) and text[pos] in " \n\r\t":
                pos += 1
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return line, col


def control_from_obj(obj, text: str | None = None, path=None) -> Control:
    """Build a Control from {time_grid, marks, values (J x K, row-major)}."""
    if not isinstance(obj, dict):
        raise FormatError("control must be a JSON object", path, 1, 1)
    for key in ("time_grid", "marks", "values"):
        if key not in obj:
            raise FormatError(f"missing key {key!r}", path)
    tg, K, vals = obj["time_grid"], obj["marks"], obj["values"]
    if not isinstance(K, int) or isinstance(K, bool) or K < 1:
        raise FormatError(f"marks must be a positive integer, got {K!r}", path)
    if not isinstance(tg, list) or len(tg) < 2:
        raise FormatError("time_grid needs at least two points", path)
    J = len(tg) - 1
    if not isinstance(vals, list):
        raise FormatError("values must be an array", path)
    flat = vals
    if all(isinstance(r, list) for r in vals):
        if len(vals) != J or any(len(r) != K for r in vals):
            raise FormatError(f"values must be {J} x {K}", path)
        flat = [x for r in vals for x in r]
    elif len(vals) != J * K:
        raise FormatError(f"values must hold {J * K} entries, got {len(vals)}", path)
    for i, x in enumerate(flat):
        if not isinstance(x, (int, float)) or isinstance(x, bool):
            j, k = divmod(i, K)
            line, col = _locate(text, ["values", j, k] if flat is not vals else ["values", i]) if text else (None, None)
            raise FormatError(f"cell (interval {j}, mark {k}) is not a number: {x!r}", path, line, col)
    values = np.asarray(flat, dtype=float).reshape(J, K)
    try:
        return Control(np.asarray(tg, dtype=float), values)
    except DomainError as exc:
        line = col = None
        neg = np.argwhere(values < 0)
        if text and neg.size:
            j, k = (int(x) for x in neg[0])
            line, col = _locate(text, ["values", j, k] if flat is not vals else ["values", j * K + k])
        raise FormatError(str(exc), path, line, col) from None


def parse_control(text: str, path=None) -> Control:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(exc.msg, path, exc.lineno, exc.colno) from None
    return control_from_obj(obj, text, path)


def read_control(path) -> Control:
    return parse_control(Path(path).read_text(), path)


def control_to_obj(g: Control) -> dict:
    return {"time_grid": [float(x) for x in g.time_grid], "marks": g.K,
            "values": [[float(x) for x in row] for row in g.values]}


def write_control(path, g: Control):
    atomic_write(path, canonical_json(control_to_obj(g)))


# ---------------------------------------------------------------- event logs

def _num(x) -> str:
    return repr(float(x))


def events_csv(sample_or_events) -> str:
    """CSV with columns t, mark_index (from a PoissonSample or JumpEvent list)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "mark_index"])
    for t, k in _event_pairs(sample_or_events):
        w.writerow([_num(t), int(k)])
    return buf.getvalue()


def _event_pairs(obj):
    if hasattr(obj, "times"):
        return zip(obj.times, obj.marks)
    return ((e.time, e.mark) for e in obj)


def read_events_csv(path) -> list[tuple[float, int]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["t", "mark_index"]:
        raise FormatError("expected header t,mark_index", path, 1, 1)
    out = []
    for i, row in enumerate(rows[1:], start=2):
        try:
            out.append((float(row[0]), int(row[1])))
        except (ValueError, IndexError):
            raise FormatError(f"bad event row {row!r}", path, i, 1) from None
    return out


def events_jsonl(events) -> str:
    lines = []
    for e in events:
        rec = {"t": float(e.time), "mark": int(e.mark),
               "pre_h1": None if not np.isfinite(e.pre_h1) else float(e.pre_h1),
               "post_h1": None if not np.isfinite(e.post_h1) else float(e.post_h1)}
        lines.append(json.dumps(rec, sort_keys=True))
    return "".join(line + "\n" for line in lines)


def energy_csv(traj) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "H1_sq", "cum_H2_sq", "jump_flag"])
    for t, e, c, f in traj.energy_rows():
        w.writerow([_num(t), _num(e), _num(c), int(f)])
    return buf.getvalue()


def read_energy_csv(path) -> np.ndarray:
    data = np.genfromtxt(path, delimiter=",", names=True)
    return np.atleast_1d(data)


# ------------------------------------------------------------------ manifests

def content_hash(obj) -> str:
    """sha256 of the canonical JSON encoding, prefixed like a git object id."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")
    return "sha256:" + hashlib.sha256(blob).hexdigest()


def file_digest(path) -> str:
    return "sha256:" + hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_trajectory(outdir, traj, name: str = "u", prefix: str = "") -> list[str]:
    """Energy CSV, JSONL event log, event CSV and one .sfld per snapshot."""
    outdir = Path(outdir)
    written = []

    def put(rel, data):
        atomic_write(outdir / rel, data)
        written.append(rel)

    put(f"{prefix}energy.csv", energy_csv(traj))
    put(f"{prefix}events.jsonl", events_jsonl(traj.events))
    put(f"{prefix}events.csv", events_csv(traj.events))
    for i, (t, f) in enumerate(zip(traj.times, traj.fields)):
        put(f"{prefix}snapshots/{name}_{i:05d}.sfld", encode_field(f, name, t))
    return written


def write_manifest(outdir, command: str, config: dict, seeds: dict, files: list[str], extra=None):
    """Manifest holding the resolved config, seeds and digests of every output."""
    outdir = Path(outdir)
    from . import __version__

    # the destination is not an input; leaving it out keeps relocated reruns byte-identical
    config = {k: v for k, v in config.items() if k != "out"}
    body = {
        "command": command,
        "version": __version__,
        "config": config,
        "seeds": seeds,
        "input_hash": content_hash({"command": command, "config": config, "seeds": seeds}),
        "files": {rel: file_digest(outdir / rel) for rel in sorted(files)},
    }
    if extra:
        body.update(extra)
    atomic_write(outdir / "manifest.json", canonical_json(body))
    return body
