"""File formats: PGM images, raw arrays, text matrices, JSON descriptors and CSV tables."""

from __future__ import annotations

import base64
import csv
import json
from pathlib import Path

import numpy as np

from .operators import (
    AnalysisOperator,
    MeasurementSystem,
    measurement_from_descriptor,
    operator_from_descriptor,
)

PHASE_FIELDS = ["sigma", "delta", "rho", "m", "l", "p", "trials", "successes", "rate"]
SNR_FIELDS = ["N", "L", "m", "algorithm", "snr_db", "status"]


def write_pgm(path, img, bits: int = 8, vmin=None, vmax=None) -> None:
    """Write a grayscale binary PGM, mapping ``[vmin, vmax]`` linearly to the full range."""
    img = np.asarray(img, dtype=float)
    if img.ndim != 2:
        raise ValueError("PGM images must be 2-D")
    if bits not in (8, 16):
        raise ValueError("bits must be 8 or 16")
    lo = float(img.min()) if vmin is None else float(vmin)
    hi = float(img.max()) if vmax is None else float(vmax)
    maxval = 255 if bits == 8 else 65535
    scaled = np.zeros_like(img) if hi <= lo else (np.clip(img, lo, hi) - lo) / (hi - lo)
    data = np.rint(scaled * maxval).astype(">u1" if bits == 8 else ">u2")
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        f.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary PGM as an integer array."""
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos].decode("ascii"))
    if tokens[0] != "P5":
        raise ValueError("only binary PGM (P5) is supported")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    dtype = ">u1" if maxval < 256 else ">u2"
    return np.frombuffer(raw[pos + 1 :], dtype=dtype, count=w * h).reshape(h, w).astype(np.int64)


def save_array(path, arr) -> None:
    np.save(path, np.asarray(arr))


def load_array(path) -> np.ndarray:
    """Load a ``.npy`` file, or whitespace-separated text otherwise."""
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path)
    return np.loadtxt(path, ndmin=1)


def write_matrix_text(path, A) -> None:
    np.savetxt(path, np.atleast_2d(A), fmt="%.17g")


def read_matrix_text(path) -> np.ndarray:
    return np.loadtxt(path, ndmin=2)


def _default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_json(path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True, default=_default)
        f.write("\n")


def read_json(path):
    with open(path) as f:
        return json.load(f)


def encode_vector(v) -> str:
    return base64.b64encode(np.asarray(v, dtype="<f8").tobytes()).decode("ascii")


def decode_vector(s: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype="<f8").copy()


def _resolve(base: Path, ref) -> Path:
    p = Path(ref)
    return p if p.is_absolute() else base / p


def save_operator(directory, omega: AnalysisOperator, name: str = "operator") -> Path:
    """Write a JSON descriptor, plus ``<name>.txt`` holding the matrix for dense operators."""
    directory = Path(directory)
    desc = omega.to_descriptor()
    if omega.kind == "dense":
        write_matrix_text(directory / f"{name}.txt", omega.matrix)
        desc["matrix"] = f"{name}.txt"
    path = directory / f"{name}.json"
    write_json(path, desc)
    return path


def load_operator(path) -> AnalysisOperator:
    path = Path(path)
    desc = read_json(path)
    matrix = None
    if desc.get("matrix") is not None:
        matrix = read_matrix_text(_resolve(path.parent, desc["matrix"]))
    return operator_from_descriptor(desc, matrix)


def save_measurement(directory, M: MeasurementSystem, name: str = "measurement") -> Path:
    directory = Path(directory)
    desc = M.to_descriptor()
    if M.matrix is not None:
        write_matrix_text(directory / f"{name}.txt", M.matrix)
        desc["matrix"] = f"{name}.txt"
    path = directory / f"{name}.json"
    write_json(path, desc)
    return path


def load_measurement(path) -> MeasurementSystem:
    path = Path(path)
    desc = read_json(path)
    matrix = None
    if desc.get("matrix") is not None:
        matrix = read_matrix_text(_resolve(path.parent, desc["matrix"]))
    return measurement_from_descriptor(desc, matrix)


def load_problem(path):
    """Read a problem descriptor and return ``(omega, M, y)``.

    The descriptor names the operator and measurement descriptor files and
    gives ``y`` either as a file path (``"y"``) or inline (``"y_base64"``,
    little-endian float64).
    """
    path = Path(path)
    desc = read_json(path)
    omega = load_operator(_resolve(path.parent, desc["operator"]))
    M = load_measurement(_resolve(path.parent, desc["measurement"]))
    if "y_base64" in desc:
        y = decode_vector(desc["y_base64"])
    else:
        y = load_array(_resolve(path.parent, desc["y"]))
    return omega, M, y


def write_result(directory, result, name: str = "result") -> Path:
    """Write ``x_hat`` as ``.npy``, the trace as CSV and a JSON summary."""
    directory = Path(directory)
    save_array(directory / f"{name}_x.npy", result.x_hat)
    write_trace_csv(directory / f"{name}_trace.csv", result.trace)
    summary = {
        "x_hat": f"{name}_x.npy",
        "trace": f"{name}_trace.csv",
        "cosupport": result.cosupport.tolist(),
        "cosparsity": len(result.cosupport),
        "status": result.status,
        "iterations": result.iterations,
        "flags": result.flags,
    }
    path = directory / f"{name}.json"
    write_json(path, summary)
    return path


def write_trace_csv(path, trace) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iteration", "removed", "rows"])
        for k, rows in enumerate(trace, start=1):
            rows = np.asarray(rows).tolist()
            w.writerow([k, len(rows), " ".join(map(str, rows))])


def write_csv(path, rows, fieldnames) -> None:
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fieldnames)
        w.writeheader()
        for row in rows:
            w.writerow(row)


def read_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def write_phase_csv(path, grid) -> None:
    write_csv(path, grid.rows(), PHASE_FIELDS)


def write_snr_csv(path, records) -> None:
    rows = (
        {
            "N": r.n,
            "L": r.lines,
            "m": r.m,
            "algorithm": r.algorithm,
            "snr_db": r.snr_db,
            "status": r.status,
        }
        for r in records
    )
    write_csv(path, rows, SNR_FIELDS)
