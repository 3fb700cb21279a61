"""Principal component analysis and the offset model built on it.

The offset model freezes one plane normal per beam (learned from historical
runs) and describes each run by the three plane offsets.  Those offset vectors
vary mostly along a few directions, so a single measured point per beam,
projected onto the leading components, is enough to pin down all three planes.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (DuplicateBeam, InsufficientRuns, IoError, MissingBeam,
                     NonFiniteData, ParseError, TooFewSamples)
from .geometry import BEAM_IDS, Plane, fit_plane, intersect_planes
from .linalg import canonical_sign, jacobi_eigh


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # rows are orthonormal components, leading first
    explained_variance: np.ndarray
    explained_ratio: np.ndarray

    def project(self, x, n_components=None):
        k = len(self.components) if n_components is None else n_components
        return (np.asarray(x, dtype=float) - self.mean) @ self.components[:k].T

    def reconstruct(self, coeffs, n_components=None):
        k = len(self.components) if n_components is None else n_components
        return self.mean + np.asarray(coeffs) @ self.components[:k]


def fit_pca(data):
    """PCA of an ``(n, d)`` sample matrix via Jacobi diagonalisation of the
    sample covariance (divisor ``n - 1``)."""
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] < 1:
        raise ValueError(f"expected an (n, d) matrix, got shape {x.shape}")
    if len(x) < 2:
        raise TooFewSamples(f"PCA needs at least 2 samples, got {len(x)}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteData("PCA input contains NaN or infinite values")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (len(x) - 1)
    w, v = jacobi_eigh(cov)
    w = np.clip(w, 0.0, None)
    comps = np.array([canonical_sign(v[:, j]) for j in range(v.shape[1])])
    total = w.sum()
    ratio = w / total if total > 0 else np.full_like(w, 1.0 / len(w))
    return PcaModel(mean, comps, w, ratio)


@dataclass(frozen=True)
class OffsetPcaModel:
    normals: np.ndarray  # (3, 3), row i is the learned normal of beam i + 1
    offset_pca: PcaModel
    n_components_retained: int = 1
    training_run_ids: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if self.n_components_retained not in (1, 2, 3):
            raise ValueError("n_components_retained must be 1, 2 or 3")


def fit_offset_model(runs, n_components=1):
    """Learn per-beam normals and the PCA of per-run plane offsets."""
    if len(runs) < 2:
        raise InsufficientRuns(f"offset model needs at least 2 runs, got {len(runs)}")
    if n_components not in (1, 2, 3):
        raise ValueError("n_components must be 1, 2 or 3")
    normals = []
    for beam in BEAM_IDS:
        fitted = [fit_plane(run.beam_points(beam)).normal for run in runs]
        # canonical orientation can flip between runs when a component is near zero
        ref = fitted[0]
        acc = sum(n if n @ ref >= 0 else -n for n in fitted)
        normals.append(canonical_sign(acc / np.linalg.norm(acc)))
    normals = np.array(normals)
    offsets = np.array([[np.mean(run.beam_points(b) @ normals[b - 1]) for b in BEAM_IDS]
                        for run in runs])
    return OffsetPcaModel(normals, fit_pca(offsets), n_components,
                          tuple(str(r.run_id) for r in runs))


def one_point_per_beam(points):
    """Order plane points by beam id, requiring exactly one per beam."""
    by_beam = {}
    for p in points:
        if p.beam_id in by_beam:
            raise DuplicateBeam(f"more than one point for beam {p.beam_id}")
        by_beam[p.beam_id] = p
    missing = [b for b in BEAM_IDS if b not in by_beam]
    if missing:
        raise MissingBeam(f"no point for beam(s) {missing}")
    return [by_beam[b] for b in BEAM_IDS]


def predict_pca(model, points):
    """Compensation point from one measured point per beam."""
    pts = one_point_per_beam(points)
    d = np.array([model.normals[i] @ p.point for i, p in enumerate(pts)])
    k = model.n_components_retained
    d_hat = model.offset_pca.reconstruct(model.offset_pca.project(d, k), k)
    return intersect_planes(*(Plane(model.normals[i], d_hat[i]) for i in range(3)))


# persistence


def _floats(a):
    return np.asarray(a, dtype=float).tolist()


def offset_model_to_dict(model):
    p = model.offset_pca
    return {
        "kind": "pca",
        "normals": _floats(model.normals),
        "mean": _floats(p.mean),
        "components": _floats(p.components),
        "explained_variance": _floats(p.explained_variance),
        "explained_ratio": _floats(p.explained_ratio),
        "n_components_retained": model.n_components_retained,
        "training_run_ids": list(model.training_run_ids),
    }


def offset_model_from_dict(d):
    try:
        pca = PcaModel(*(np.array(d[k], dtype=float) for k in
                         ("mean", "components", "explained_variance", "explained_ratio")))
        return OffsetPcaModel(np.array(d["normals"], dtype=float), pca,
                              int(d["n_components_retained"]), tuple(d.get("training_run_ids", ())))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed PCA model: {exc}") from exc


def save_offset_model(model, path):
    try:
        with open(path, "w") as fh:
            json.dump(offset_model_to_dict(model), fh, indent=2)
            fh.write("\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc.strerror or exc}") from exc
