"""CSV and JSON readers/writers used by the command-line tool."""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .inference import FitResult, ModelSpec, model_from_report

FIT_FORMAT = "toruscopula-fit"
FIT_VERSION = 1


class InputError(ValueError):
    """Malformed or unusable input file."""


def _read_rows(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such file")
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [(i + 1, row) for i, row in enumerate(csv.reader(fh)) if any(c.strip() for c in row)]
    if not rows:
        raise InputError(f"{path}: no data rows")
    header = [c.strip() for c in rows[0][1]]
    body = rows[1:]
    if not body:
        raise InputError(f"{path}: no data rows")
    return header, body


def _parse_numbers(path, header, body) -> np.ndarray:
    out = np.empty((len(body), len(header)))
    for r, (line, row) in enumerate(body):
        if len(row) != len(header):
            raise InputError(f"{path}: line {line}: expected {len(header)} values, got {len(row)}")
        for c, cell in enumerate(row):
            try:
                out[r, c] = float(cell)
            except ValueError:
                raise InputError(f"{path}: line {line}: cannot parse {cell.strip()!r} as a number") from None
            if not np.isfinite(out[r, c]):
                raise InputError(f"{path}: line {line}: non-finite value {cell.strip()!r}")
    return out


def read_wide_csv(path, degrees: bool = False) -> np.ndarray:
    """One replicate per row, one angle per column; returns (n, K) radians."""
    header, body = _read_rows(path)
    data = _parse_numbers(path, header, body)
    return np.deg2rad(data) if degrees else data


def read_spatial_csv(path, degrees: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Long format ``x, y, angle[, angle2, ...]``.

    Returns locations (K, 2) and angles (K, m), one column per replicate.
    """
    header, body = _read_rows(path)
    lower = [h.lower() for h in header]
    if len(header) < 3 or lower[0] != "x" or lower[1] != "y":
        raise InputError(f"{path}: spatial files need columns x, y, angle")
    data = _parse_numbers(path, header, body)
    angles = data[:, 2:]
    return data[:, :2], (np.deg2rad(angles) if degrees else angles)


def read_locations_csv(path) -> np.ndarray:
    header, body = _read_rows(path)
    if [h.lower() for h in header[:2]] != ["x", "y"]:
        raise InputError(f"{path}: location files need columns x, y")
    return _parse_numbers(path, header, body)[:, :2]


def format_number(v: float) -> str:
    return f"{float(v):.17g}"


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else format_number(v) for v in row])


def distance_hash(distances: np.ndarray) -> str:
    d = np.ascontiguousarray(np.round(np.asarray(distances, dtype=float), 10), dtype="<f8")
    return hashlib.sha256(d.tobytes()).hexdigest()


def fit_to_dict(result: FitResult, spec: ModelSpec, dim: int, shared_margin: bool,
                locations: np.ndarray | None = None) -> dict:
    doc = {
        "format": FIT_FORMAT,
        "version": FIT_VERSION,
        "family": spec.family if isinstance(spec.family, str) else list(spec.family),
        "structure": spec.structure,
        "shared_margin": shared_margin,
        "dim": dim,
        "n": result.n_obs,
        "scale": "rho, mu, log_kappa",
        "estimates": result.estimates,
        "standard_errors": result.standard_errors,
        "log_likelihood": result.log_likelihood,
        "converged": result.converged,
        "iterations": result.iterations,
        "gradient_norm": result.grad_norm,
        "initializer": result.initializer,
        "initial_log_likelihood": result.initial_log_likelihood,
        "message": result.message,
    }
    if spec.structure == "expdecay":
        doc["distance_hash"] = distance_hash(spec.distances)
        if locations is not None:
            doc["locations"] = np.asarray(locations).tolist()
    return doc


def save_fit(path, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_fit(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise InputError(f"{path}: no such model file")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON ({exc})") from None
    if doc.get("format") != FIT_FORMAT:
        raise InputError(f"{path}: not a fitted-model document")
    if doc.get("version") != FIT_VERSION:
        raise InputError(f"{path}: unsupported model version {doc.get('version')}")
    return doc


def model_from_fit(doc: dict, distances: np.ndarray | None = None):
    """Rebuild the fitted :class:`CopulaModel`; spatial fits need the distance matrix."""
    family = doc["family"]
    spec = ModelSpec(doc["structure"], family if isinstance(family, str) else tuple(family), distances)
    if spec.structure == "expdecay" and distance_hash(distances) != doc.get("distance_hash"):
        raise InputError("site layout does not match the one the model was fitted on")
    return model_from_report(spec, doc["dim"], doc["shared_margin"], doc["estimates"])
