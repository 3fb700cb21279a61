"""Synthetic ground truth for the disturbed experiment.

The correlation amplitude seen by beam ``i`` at control setting ``v`` is
``|b_i . (E + M v)|``: the projection onto the beam axis of the residual field,
i.e. stray field ``E`` plus the field ``M v`` produced by the controls.  Its
zero set is a plane with normal along ``M^T b_i``, and the three planes meet at
the compensation point ``v* = -M^-1 E``.

Measurement noise is applied to the located minimum: a measured plane point is
the exact line/plane intersection displaced along the scan line so that its
orthogonal distance to the true plane is Gaussian with std ``noise_sigma``.
"""

import csv
import hashlib
import io
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import (InvalidBeam, InvalidConfig, IoError, LineParallelToPlane,
                     OutOfBounds, ParseError)
from .geometry import BEAM_IDS, Plane, PlanePoint, as_vec3, check_beam

CSV_HEADER = ("run_id", "beam_id", "px", "py", "pz")


def rng_from(seed):
    """Generator from an int seed, a SeedSequence, or an existing Generator."""
    return np.random.default_rng(seed)


@dataclass
class ScenarioConfig:
    """Distribution over scenarios (one draw = one noise manifestation)."""

    # every beam has a large projection on the dominant stray-field axis (x)
    beams: list = field(default_factory=lambda: [[0.9, 0.436, 0.0], [0.6, -0.4, 0.69], [0.6, -0.4, -0.69]])
    beam_mode: str = "fixed"  # fixed | perturbed
    beam_jitter: float = 0.02
    coupling: list = field(default_factory=lambda: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    coupling_mode: str = "fixed"  # fixed | random
    coupling_jitter: float = 0.05
    stray_mean: list = field(default_factory=lambda: [0.0, 0.0, 0.0])
    stray_spread: float = 600.0
    dominance: float = 0.89
    dominant_axis: int = 0
    noise_sigma: float = 54.0
    half_width: float = 2000.0
    scan_fraction: float = 0.5

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise InvalidConfig(f"unknown scenario config key(s): {', '.join(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def to_dict(self):
        return asdict(self)

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def validate(self):
        if self.beam_mode not in ("fixed", "perturbed"):
            raise InvalidConfig(f"beam_mode must be 'fixed' or 'perturbed', got {self.beam_mode!r}")
        if self.coupling_mode not in ("fixed", "random"):
            raise InvalidConfig(f"coupling_mode must be 'fixed' or 'random', got {self.coupling_mode!r}")
        if np.shape(self.beams) != (3, 3) or np.shape(self.coupling) != (3, 3):
            raise InvalidConfig("beams and coupling must be 3x3")
        if np.shape(self.stray_mean) != (3,):
            raise InvalidConfig("stray_mean must be a 3-vector")
        if not 0.0 <= self.dominance <= 1.0:
            raise InvalidConfig("dominance must lie in [0, 1]")
        if self.dominant_axis not in (0, 1, 2):
            raise InvalidConfig("dominant_axis must be 0, 1 or 2")
        if self.noise_sigma < 0 or self.stray_spread < 0 or self.half_width <= 0:
            raise InvalidConfig("noise_sigma and stray_spread must be >= 0, half_width > 0")
        if not 0.0 < self.scan_fraction <= 1.0:
            raise InvalidConfig("scan_fraction must lie in (0, 1]")


@dataclass(frozen=True)
class ScanLine:
    origin: np.ndarray
    direction: np.ndarray


class TrapScenario:
    """One fixed disturbance together with the apparatus geometry."""

    def __init__(self, beams, coupling, stray_field, noise_sigma=54.0,
                 bounds=((-2000.0,) * 3, (2000.0,) * 3), scan_fraction=0.5):
        beams = np.array(beams, dtype=float)
        coupling = np.array(coupling, dtype=float)
        if beams.shape != (3, 3) or coupling.shape != (3, 3):
            raise InvalidConfig("beams and coupling must be 3x3")
        norms = np.linalg.norm(beams, axis=1)
        if np.any(norms == 0):
            raise InvalidConfig("beam directions must be nonzero")
        beams = beams / norms[:, None]
        gram = np.abs(beams @ beams.T)
        if np.any(gram[np.triu_indices(3, 1)] >= 0.999):
            raise InvalidConfig("beams must be pairwise non-collinear")
        if abs(np.linalg.det(coupling)) <= 1e-6:
            raise InvalidConfig("coupling matrix is not invertible")
        if noise_sigma < 0:
            raise InvalidConfig("noise_sigma must be >= 0")
        lo, hi = (np.array(b, dtype=float) for b in bounds)
        if lo.shape != (3,) or hi.shape != (3,) or np.any(hi <= lo):
            raise InvalidConfig("bounds must be two 3-vectors with lo < hi")
        self.beams = beams
        self.coupling = coupling
        self.stray_field = as_vec3(stray_field)
        self.noise_sigma = float(noise_sigma)
        self.bounds = (lo, hi)
        self.scan_fraction = float(scan_fraction)
        # rows are M^T b_i; signal of beam i is |gradient_i . v + b_i . E|
        self.gradients = beams @ coupling
        self.slopes = np.linalg.norm(self.gradients, axis=1)
        self.truth = np.linalg.solve(coupling, -self.stray_field)
        if not self.contains(self.truth):
            raise InvalidConfig("true compensation point lies outside the bounds")
        for arr in (self.beams, self.coupling, self.gradients, self.slopes, self.truth):
            arr.setflags(write=False)

    def contains(self, v):
        lo, hi = self.bounds
        return bool(np.all(v >= lo) and np.all(v <= hi))

    def true_plane(self, beam_id):
        i = check_beam(beam_id) - 1
        return Plane(self.gradients[i] / self.slopes[i],
                     -(self.beams[i] @ self.stray_field) / self.slopes[i])

    def summary(self):
        lo, hi = self.bounds
        return {"noise_sigma": self.noise_sigma, "bounds": [lo.tolist(), hi.tolist()]}

    def __eq__(self, other):
        if not isinstance(other, TrapScenario):
            return NotImplemented
        return (np.array_equal(self.beams, other.beams)
                and np.array_equal(self.coupling, other.coupling)
                and np.array_equal(self.stray_field, other.stray_field)
                and self.noise_sigma == other.noise_sigma
                and all(np.array_equal(a, b) for a, b in zip(self.bounds, other.bounds))
                and self.scan_fraction == other.scan_fraction)

    __hash__ = None


def stray_field_std(config):
    """Per-axis std of the stray-field distribution."""
    rest = np.sqrt((1.0 - config.dominance) / 2.0)
    sd = np.full(3, rest)
    sd[config.dominant_axis] = np.sqrt(config.dominance)
    return config.stray_spread * sd


def sample_scenario(config, seed, max_tries=1000):
    """Draw one scenario; a deterministic function of ``(config, seed)``.

    Stray fields whose compensation point would fall outside the bounds are
    redrawn from the same stream.
    """
    config.validate()
    rng = rng_from(seed)
    beams = np.array(config.beams, dtype=float)
    if config.beam_mode == "perturbed":
        beams = beams / np.linalg.norm(beams, axis=1, keepdims=True)
        beams = beams + config.beam_jitter * rng.standard_normal((3, 3))
    coupling = np.array(config.coupling, dtype=float)
    if config.coupling_mode == "random":
        coupling = coupling + config.coupling_jitter * rng.standard_normal((3, 3))
    if abs(np.linalg.det(coupling)) <= 1e-6:
        raise InvalidConfig("coupling matrix is not invertible")
    sd = stray_field_std(config)
    half = config.half_width
    bounds = ((-half,) * 3, (half,) * 3)
    mean = np.array(config.stray_mean, dtype=float)
    for _ in range(max_tries):
        stray = mean + sd * rng.standard_normal(3)
        truth = np.linalg.solve(coupling, -stray)
        if np.all(np.abs(truth) <= half):
            return TrapScenario(beams, coupling, stray, config.noise_sigma, bounds,
                                config.scan_fraction)
    raise InvalidConfig("could not draw a stray field with compensation point inside the bounds")


def _noiseless_signal(scenario, i, controls):
    return np.abs(controls @ scenario.gradients[i] + scenario.beams[i] @ scenario.stray_field)


def correlation_signal(scenario, beam_id, control, seed=None):
    """Correlation amplitude for one beam at one control setting.

    The additive noise has std ``noise_sigma * |M^T b_i|``, i.e. ``noise_sigma``
    once converted to distance from the beam's plane.
    """
    i = check_beam(beam_id) - 1
    v = as_vec3(control)
    if not scenario.contains(v):
        raise OutOfBounds(f"control {v.tolist()} outside scenario bounds")
    value = float(_noiseless_signal(scenario, i, v))
    if scenario.noise_sigma > 0:
        value += scenario.noise_sigma * scenario.slopes[i] * rng_from(seed).standard_normal()
    return value


def correlation_signals(scenario, beam_id, controls, rng):
    """Vectorised :func:`correlation_signal` over an ``(m, 3)`` array of controls."""
    i = check_beam(beam_id) - 1
    controls = np.asarray(controls, dtype=float)
    lo, hi = scenario.bounds
    if np.any(controls < lo) or np.any(controls > hi):
        raise OutOfBounds("some controls lie outside scenario bounds")
    values = _noiseless_signal(scenario, i, controls)
    if scenario.noise_sigma > 0:
        values = values + scenario.noise_sigma * scenario.slopes[i] * rng.standard_normal(len(values))
    return values


def measure_plane_point(scenario, beam_id, scan_line, seed=None):
    """Locate the signal minimum along a scan line.

    The returned point sits on the line; its orthogonal distance from the true
    plane is Gaussian with std ``noise_sigma``.
    """
    i = check_beam(beam_id) - 1
    origin = as_vec3(scan_line.origin)
    direction = as_vec3(scan_line.direction)
    direction = direction / np.linalg.norm(direction)
    plane = scenario.true_plane(beam_id)
    cos = float(plane.normal @ direction)
    if abs(cos) <= 1e-6:
        raise LineParallelToPlane(f"scan line is parallel to the plane of beam {i + 1}")
    t = (plane.offset - plane.normal @ origin) / cos
    if scenario.noise_sigma > 0:
        t += scenario.noise_sigma / abs(cos) * rng_from(seed).standard_normal()
    return PlanePoint(i + 1, origin + t * direction)


def random_scan_line(scenario, beam_id, rng):
    """Scan line along the beam axis through a uniform point of the centred sub-box."""
    i = check_beam(beam_id) - 1
    lo, hi = scenario.bounds
    centre = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo) * scenario.scan_fraction
    origin = centre + rng.uniform(-1.0, 1.0, 3) * half
    return ScanLine(origin, scenario.beams[i].copy())


def measure_points(scenario, beam_id, count, rng):
    """``count`` plane points for one beam along random scan lines."""
    return [measure_plane_point(scenario, beam_id, random_scan_line(scenario, beam_id, rng), rng)
            for _ in range(count)]


@dataclass
class CompensationRun:
    run_id: str
    points: list
    truth: np.ndarray = None
    noise_sigma: float = None
    bounds: list = None
    seed: int = None
    config_hash: str = None

    def beam_points(self, beam_id):
        return np.array([p.point for p in self.points if p.beam_id == beam_id]).reshape(-1, 3)

    def counts(self):
        return {b: sum(p.beam_id == b for p in self.points) for b in BEAM_IDS}

    def __len__(self):
        return len(self.points)


def split_per_beam(points_per_beam):
    if np.ndim(points_per_beam) == 0:
        counts = [int(points_per_beam)] * 3
    else:
        counts = [int(c) for c in points_per_beam]
    if len(counts) != 3 or min(counts) < 1:
        raise InvalidConfig(f"points_per_beam must be >= 1 for every beam, got {points_per_beam!r}")
    return counts


def generate_compensation_run(scenario, points_per_beam, seed, run_id="run"):
    """Measure ``points_per_beam`` plane points per beam and record the truth.

    ``points_per_beam`` may be an int or three per-beam counts.
    """
    counts = split_per_beam(points_per_beam)
    rng = rng_from(seed)
    points = []
    for beam_id, count in zip(BEAM_IDS, counts):
        points.extend(measure_points(scenario, beam_id, count, rng))
    lo, hi = scenario.bounds
    return CompensationRun(
        run_id=str(run_id),
        points=points,
        truth=scenario.truth.copy(),
        noise_sigma=scenario.noise_sigma,
        bounds=[lo.tolist(), hi.tolist()],
        seed=seed if isinstance(seed, int) else None,
    )


# serialization


def run_to_csv(run):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for p in run.points:
        w.writerow([run.run_id, p.beam_id, *(repr(float(c)) for c in p.point)])
    return buf.getvalue()


def runs_from_csv(text, source="<string>"):
    """Parse CSV text into runs keyed by ``run_id`` (file order preserved)."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(h.strip() for h in rows[0]) != CSV_HEADER:
        raise ParseError(f"{source}:1: expected header {','.join(CSV_HEADER)}")
    runs = {}
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 5:
            raise ParseError(f"{source}:{lineno}: expected 5 fields, got {len(row)}")
        try:
            beam = int(row[1])
            xyz = [float(c) for c in row[2:]]
            point = PlanePoint(beam, xyz)
        except (ValueError, InvalidBeam) as exc:
            raise ParseError(f"{source}:{lineno}: {exc}") from exc
        runs.setdefault(row[0], CompensationRun(row[0], [])).points.append(point)
    return list(runs.values())


def metadata_path(csv_path):
    p = Path(csv_path)
    return p.with_name(p.stem + ".meta.json")


def write_run(run, csv_path):
    csv_path = Path(csv_path)
    meta = {
        "run_id": run.run_id,
        "truth": None if run.truth is None else [float(c) for c in run.truth],
        "noise_sigma": run.noise_sigma,
        "bounds": run.bounds,
        "seed": run.seed,
        "config_hash": run.config_hash,
        "points_per_beam": {str(k): v for k, v in run.counts().items()},
    }
    try:
        csv_path.parent.mkdir(parents=True, exist_ok=True)
        csv_path.write_text(run_to_csv(run))
        metadata_path(csv_path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {csv_path}: {exc.strerror or exc}") from exc


def read_runs(csv_path):
    """Read every run stored in a CSV file, attaching sidecar metadata if present."""
    csv_path = Path(csv_path)
    try:
        text = csv_path.read_text()
    except OSError as exc:
        raise IoError(f"cannot read {csv_path}: {exc.strerror or exc}") from exc
    runs = runs_from_csv(text, str(csv_path))
    meta_file = metadata_path(csv_path)
    if meta_file.exists() and len(runs) == 1:
        try:
            meta = json.loads(meta_file.read_text())
        except ValueError as exc:
            raise ParseError(f"{meta_file}: invalid metadata: {exc}") from exc
        run = runs[0]
        if meta.get("truth") is not None:
            run.truth = as_vec3(meta["truth"])
        run.noise_sigma = meta.get("noise_sigma")
        run.bounds = meta.get("bounds")
        run.seed = meta.get("seed")
        run.config_hash = meta.get("config_hash")
    return runs
