"""Deterministic CSV/JSON writers and readers, and the run manifest."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .chain import CouplingMatrix
from .drive import ScanResult
from .quantum import config_index, config_label


def to_jsonable(obj):
    """Plain JSON types; non-finite floats become null."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def _with_ext(stem: Path, ext: str) -> Path:
    # stems may contain dots (e.g. a detuning), so append rather than replace
    return stem.parent / (stem.name + ext)


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(to_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path: str | Path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"missing file: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path} is empty")
    return rows[0], rows[1:]


# ---------------------------------------------------------------- couplings

def write_couplings(stem: str | Path, couplings: CouplingMatrix, stderrs=None) -> list[Path]:
    """Long-form CSV (i, j, J_kHz[, stderr_kHz]) for i < j plus a JSON matrix."""
    stem = Path(stem)
    pairs = couplings.pairs()
    vals = couplings.pair_vector()
    header = ["i", "j", "J_kHz"]
    rows = [[i, j, v] for (i, j), v in zip(pairs, vals)]
    if stderrs is not None:
        header.append("stderr_kHz")
        rows = [r + [float(s)] for r, s in zip(rows, stderrs)]
    doc = {"n_ions": couplings.n_ions, "units": "kHz", "values": couplings.values}
    if stderrs is not None:
        doc["stderrs"] = CouplingMatrix.from_pair_vector(couplings.n_ions, stderrs).values
    return [write_csv(_with_ext(stem, ".csv"), header, rows), write_json(_with_ext(stem, ".json"), doc)]


def read_couplings(path: str | Path) -> CouplingMatrix:
    path = Path(path)
    if path.suffix == ".json":
        if not path.exists():
            raise FileNotFoundError(f"missing file: {path}")
        return CouplingMatrix(np.array(json.loads(path.read_text())["values"], dtype=float))
    header, rows = read_csv(path)
    n = max([int(r[1]) for r in rows], default=0) + 1
    m = np.zeros((n, n))
    for r in rows:
        i, j, v = int(r[0]), int(r[1]), float(r[2])
        m[i, j] = m[j, i] = v
    return CouplingMatrix(m)


# -------------------------------------------------------------------- scans

def write_scan(stem: str | Path, scan: ScanResult) -> list[Path]:
    """CSV with one population and one error column per tracked state, plus metadata JSON."""
    stem = Path(stem)
    labels = scan.labels()
    header = ["freq_kHz"] + [f"P_{lab}" for lab in labels] + [f"err_{lab}" for lab in labels]
    rows = [[f, *p, *e] for f, p, e in zip(scan.freq_grid, scan.populations, scan.errors)]
    meta = dict(scan.metadata)
    meta.update(initial_config=config_label(scan.initial_config, scan.n_spins), tracked=labels)
    return [write_csv(_with_ext(stem, ".csv"), header, rows), write_json(_with_ext(stem, ".json"), meta)]


def read_scan(path: str | Path, initial: str | None = None) -> ScanResult:
    """Load a scan CSV; the initial configuration comes from the JSON sidecar unless given."""
    path = Path(path)
    header, rows = read_csv(path)
    labels = [h[2:] for h in header if h.startswith("P_")]
    if not labels:
        raise ValueError(f"{path} has no population columns")
    meta = {}
    side = path.with_suffix(".json")
    if side.exists():
        meta = json.loads(side.read_text())
    initial = initial or meta.get("initial_config")
    if initial is None:
        raise ValueError(f"initial configuration unknown for {path}; no sidecar and none given")
    data = np.array([[float(v) for v in r] for r in rows])
    k = len(labels)
    return ScanResult(data[:, 0], [config_index(lab) for lab in labels], data[:, 1:1 + k], data[:, 1 + k:1 + 2 * k],
                      len(labels[0]), config_index(initial), meta)


# ----------------------------------------------------------------- manifest

def sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir: str | Path, config: dict, outputs: list[Path], version: str,
                   command: list[str] | None = None) -> Path:
    """Resolved config, artifact version and a hash of every output file."""
    out_dir = Path(out_dir)
    doc = {
        "artifact": "ionspec",
        "version": version,
        "config": config,
        "command": command or [],
        "outputs": {str(Path(p).relative_to(out_dir)): sha256(p) for p in sorted(set(outputs))},
    }
    return write_json(out_dir / "manifest.json", doc)
