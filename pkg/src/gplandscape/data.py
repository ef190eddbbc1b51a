"""Datasets: Schwefel benchmark, CSV ingestion, splitting and standardization.

Randomness comes from ``numpy.random.default_rng(seed)`` (PCG64 bit generator
with SeedSequence seeding), which numpy guarantees to be stream-stable across
platforms for a given integer seed.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import zipfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHWEFEL_CONST = 418.9829
CONTAINER_VERSION = 1


@dataclass(frozen=True, eq=False)
class Dataset:
    """Inputs ``X`` (n x d) and targets ``y`` in model space.

    The standardization metadata maps model space back to raw units:
    ``raw = value * scale + mean``.  Identity metadata means the arrays are
    already raw.
    """

    X: np.ndarray
    y: np.ndarray
    x_mean: np.ndarray = None
    x_scale: np.ndarray = None
    y_mean: float = 0.0
    y_scale: float = 1.0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] != y.size:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.size} entries")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset contains non-finite entries")
        d = X.shape[1]
        xm = np.zeros(d) if self.x_mean is None else np.asarray(self.x_mean, dtype=float)
        xs = np.ones(d) if self.x_scale is None else np.asarray(self.x_scale, dtype=float)
        if np.any(xs <= 0) or not self.y_scale > 0:
            raise ValueError("standardization scales must be > 0")
        for name, arr in (("X", X), ("y", y), ("x_mean", xm), ("x_scale", xs)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def transform_X(self, X_raw) -> np.ndarray:
        return (np.atleast_2d(np.asarray(X_raw, dtype=float)) - self.x_mean) / self.x_scale

    def transform_y(self, y_raw) -> np.ndarray:
        return (np.asarray(y_raw, dtype=float) - self.y_mean) / self.y_scale

    def inverse_y(self, y_model) -> np.ndarray:
        return np.asarray(y_model, dtype=float) * self.y_scale + self.y_mean

    def raw_X(self) -> np.ndarray:
        return self.X * self.x_scale + self.x_mean

    def raw_y(self) -> np.ndarray:
        return self.inverse_y(self.y)

    def with_arrays(self, X, y) -> "Dataset":
        return Dataset(X, y, self.x_mean, self.x_scale, self.y_mean, self.y_scale,
                       dict(self.provenance))


def schwefel(x) -> np.ndarray | float:
    """Schwefel function; ``x`` has shape (..., d)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    d = x.shape[-1]
    out = SCHWEFEL_CONST * d - np.sum(x * np.sin(np.sqrt(np.abs(x))), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def schwefel_dataset(d: int = 3, n: int = 400, low: float = -100.0,
                     high: float = 100.0, seed: int = 0) -> Dataset:
    """``n`` uniform points in ``[low, high]**d`` labelled by the Schwefel function."""
    if not low < high:
        raise ValueError(f"need low < high, got [{low}, {high}]")
    if n < 2:
        raise ValueError("need at least 2 points")
    rng = np.random.default_rng(seed)
    X = rng.uniform(low, high, size=(n, d))
    return Dataset(X, schwefel(X), provenance={
        "source": "schwefel", "d": d, "n": n, "low": low, "high": high, "seed": seed,
    })


def load_csv(path, target_column: str, delimiter: str = ",") -> Dataset:
    """Read a numeric CSV with a header row.

    Rows with any missing or non-numeric field are dropped; the count is
    recorded in ``provenance["dropped_rows"]``.
    """
    raw = Path(path).read_bytes()
    reader = csv.reader(io.StringIO(raw.decode("utf-8")), delimiter=delimiter)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ValueError(f"{path}: empty file") from None
    if target_column not in header:
        raise KeyError(f"{path}: target column {target_column!r} not in header {header}")
    t = header.index(target_column)
    rows, dropped = [], 0
    for rec in reader:
        if not rec:
            continue
        try:
            vals = [float(v) for v in rec]
        except ValueError:
            dropped += 1
            continue
        if len(vals) != len(header) or not all(math.isfinite(v) for v in vals):
            dropped += 1
            continue
        rows.append(vals)
    if not rows:
        raise ValueError(f"{path}: no usable rows")
    A = np.array(rows)
    X = np.delete(A, t, axis=1)
    features = [h for i, h in enumerate(header) if i != t]
    return Dataset(X, A[:, t], provenance={
        "source": "csv",
        "path": str(path),
        "sha256": hashlib.sha256(raw).hexdigest(),
        "target": target_column,
        "features": features,
        "dropped_rows": dropped,
    })


def split(dataset: Dataset, test_fraction: float = 0.2, seed: int = 0,
          standardize_features: bool = True,
          standardize_targets: bool = True) -> tuple[Dataset, Dataset]:
    """Seeded shuffle split; standardization fitted on the training part only."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    X, y = dataset.raw_X(), dataset.raw_y()
    n = X.shape[0]
    n_test = int(round(test_fraction * n))
    if n_test < 1 or n - n_test < 2:
        raise ValueError(f"degenerate split of {n} points at fraction {test_fraction}")
    perm = np.random.default_rng(seed).permutation(n)
    test_idx, train_idx = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    Xtr, ytr = X[train_idx], y[train_idx]
    d = X.shape[1]
    if standardize_features:
        xm = Xtr.mean(axis=0)
        xs = Xtr.std(axis=0)
        xs = np.where(xs > 0, xs, 1.0)
    else:
        xm, xs = np.zeros(d), np.ones(d)
    if standardize_targets:
        ym = float(ytr.mean())
        ys = float(ytr.std())
        ys = ys if ys > 0 else 1.0
    else:
        ym, ys = 0.0, 1.0
    prov = dict(dataset.provenance, split_seed=seed, test_fraction=test_fraction)

    def make(idx, part):
        return Dataset((X[idx] - xm) / xs, (y[idx] - ym) / ys, xm, xs, ym, ys,
                       dict(prov, part=part, indices=[int(i) for i in idx]))

    return make(train_idx, "train"), make(test_idx, "test")


def save_dataset(dataset: Dataset, target) -> None:
    """Write a versioned ``.npz`` container: arrays plus a JSON metadata blob.

    ``target`` is a path or a binary file object.  Zip entries carry a fixed
    timestamp so equal datasets give byte-identical files.
    """
    meta = {
        "format": "gplandscape-dataset",
        "version": CONTAINER_VERSION,
        "y_mean": dataset.y_mean,
        "y_scale": dataset.y_scale,
        "provenance": dataset.provenance,
    }
    arrays = {
        "X": dataset.X, "y": dataset.y, "x_mean": dataset.x_mean, "x_scale": dataset.x_scale,
        "meta": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8),
    }
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            item = io.BytesIO()
            np.lib.format.write_array(item, np.ascontiguousarray(arr), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0)),
                        item.getvalue())
    if hasattr(target, "write"):
        target.write(buf.getvalue())
    else:
        Path(target).write_bytes(buf.getvalue())


def load_dataset(path) -> Dataset:
    with np.load(path) as z:
        meta = json.loads(z["meta"].tobytes().decode())
        if meta.get("format") != "gplandscape-dataset":
            raise ValueError(f"{path}: not a dataset container")
        if meta["version"] > CONTAINER_VERSION:
            raise ValueError(f"{path}: container version {meta['version']} is newer than supported")
        return Dataset(z["X"], z["y"], z["x_mean"], z["x_scale"], meta["y_mean"],
                       meta["y_scale"], meta["provenance"])
