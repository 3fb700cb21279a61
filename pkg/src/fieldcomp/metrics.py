"""Accuracy metric and measurement accounting for the method benchmark.

Every predictor sees the scenario only through a :class:`CountingProbe`,
which forwards measurement calls to the simulator and tallies them.  The
tally is compared with the predictor's declared cost on every call.
"""

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from . import ann, pca, simulator
from .errors import ConfigError, FieldCompError
from .geometry import BEAM_IDS, fit_plane, intersect_planes

log = logging.getLogger(__name__)

K = 3
METHODS = ("grid", "planes", "pca", "ann9", "ann4")
BENCHMARK_HEADER = ("method", "n_measurements", "amortized_training_measurements",
                    "sigma", "containment_68", "n_trials", "seed")
DETAIL_HEADER = ("method", "n_measurements", "scenario_index", "sigma", "containment_68",
                 "rms_error", "n_trials")


class CountingProbe:
    """Measurement access to a scenario that counts every simulator call.

    Exposes the apparatus geometry a predictor may legitimately know (bounds,
    beam axes) but not the stray field or the true compensation point.
    """

    def __init__(self, scenario):
        self._scenario = scenario
        self.count = 0

    @property
    def bounds(self):
        return self._scenario.bounds

    @property
    def beams(self):
        return self._scenario.beams

    def signals(self, beam_id, controls, rng):
        controls = np.atleast_2d(controls)
        self.count += len(controls)
        return simulator.correlation_signals(self._scenario, beam_id, controls, rng)

    def measure(self, beam_id, scan_line, rng):
        self.count += 1
        return simulator.measure_plane_point(self._scenario, beam_id, scan_line, rng)

    def random_line(self, beam_id, rng):
        return simulator.random_scan_line(self._scenario, beam_id, rng)

    def probe_line(self, beam_id):
        """Fixed single-measurement line: through the box centre along the beam."""
        lo, hi = self.bounds
        return simulator.ScanLine(0.5 * (lo + hi), self.beams[beam_id - 1].copy())


class AuditError(FieldCompError, AssertionError):
    pass


@dataclass
class Predictor:
    """A prediction procedure with its declared per-prediction measurement cost."""

    method: str
    n_measurements: int
    procedure: object  # callable(probe, rng) -> Vec3
    amortized_training_measurements: int = 0
    label: str = None

    def __post_init__(self):
        if self.n_measurements < 1:
            raise ValueError("n_measurements must be >= 1")
        if self.label is None:
            self.label = f"{self.method}@{self.n_measurements}"

    def predict_counted(self, scenario, seed):
        probe = CountingProbe(scenario)
        result = np.asarray(self.procedure(probe, np.random.default_rng(seed)), dtype=float)
        if probe.count != self.n_measurements:
            raise AuditError(f"{self.label}: declared {self.n_measurements} measurements, "
                             f"used {probe.count}")
        return result, probe.count

    def __call__(self, scenario, seed):
        return self.predict_counted(scenario, seed)[0]


# predictors


def _grid_search(probe, n_per_axis, rng, jitter=False):
    lo, hi = probe.bounds
    if jitter:
        # cell-centred lattice with a random sub-cell shift per axis
        frac = (np.arange(n_per_axis)[:, None] + rng.uniform(size=3)) / n_per_axis
        axes = [lo[a] + frac[:, a] * (hi[a] - lo[a]) for a in range(3)]
    else:
        axes = [np.linspace(lo[a], hi[a], n_per_axis) for a in range(3)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    total = np.zeros(len(grid))
    for beam in BEAM_IDS:
        total += probe.signals(beam, grid, rng)
    return grid[int(np.argmin(total))]


def grid_search(scenario, n_per_axis, seed, jitter=False):
    """Argmin of the summed three-beam signal over an ``n^3`` lattice.

    Uses ``3 * n_per_axis**3`` signal measurements.  With ``jitter`` the lattice
    is shifted by a random fraction of a cell on each axis, so repeated searches
    spread over the quantisation cell instead of returning the same node.
    """
    if n_per_axis < 2:
        raise ValueError("n_per_axis must be >= 2")
    return _grid_search(CountingProbe(scenario), n_per_axis, np.random.default_rng(seed), jitter)


def _planes(probe, rng, per_beam):
    planes = []
    for beam, count in zip(BEAM_IDS, per_beam):
        pts = [probe.measure(beam, probe.random_line(beam, rng), rng).point for _ in range(count)]
        planes.append(fit_plane(np.array(pts)))
    return intersect_planes(*planes)


def _single_points(probe, rng):
    return [probe.measure(b, probe.probe_line(b), rng) for b in BEAM_IDS]


def _pca(probe, rng, model):
    return pca.predict_pca(model, _single_points(probe, rng))


def _ann9(probe, rng, net):
    return ann.predict_ann(net, _single_points(probe, rng))


def _ann4(probe, rng, net, beam):
    return ann.predict_ann(net, probe.measure(beam, probe.probe_line(beam), rng))


def _grid(probe, rng, n_per_axis, jitter):
    return _grid_search(probe, n_per_axis, rng, jitter)


def grid_predictor(n_per_axis, jitter=True):
    return Predictor("grid", 3 * n_per_axis ** 3,
                     partial(_grid, n_per_axis=n_per_axis, jitter=jitter))


def plane_predictor(n_measurements):
    if n_measurements < 9 or n_measurements % 3:
        raise ConfigError(f"plane model needs a multiple of 3 measurements >= 9, got {n_measurements}")
    per_beam = [n_measurements // 3] * 3
    return Predictor("planes", n_measurements, partial(_planes, per_beam=per_beam))


def pca_predictor(model, training_measurements=0):
    return Predictor("pca", 3, partial(_pca, model=model), training_measurements)


def ann9_predictor(net, training_measurements=0):
    return Predictor("ann9", 3, partial(_ann9, net=net), training_measurements)


def ann4_predictor(net, beam=1, training_measurements=0):
    return Predictor("ann4", 1, partial(_ann4, net=net, beam=beam), training_measurements)


def efficiency_factor(n_measurements, points_per_line, k=K):
    """``a`` in the linear benchmark ``a * n * k``."""
    return n_measurements / (points_per_line * k)


# sigma


@dataclass
class SigmaEstimate:
    sigma: float
    n_trials: int
    mean_prediction: np.ndarray
    containment_68: float
    rms_error: float = float("nan")
    audited_measurements: int = None


def sigma_of(predictions, truth=None):
    """RMS Euclidean deviation of predictions from their mean, plus the
    fraction within that radius of ``truth``."""
    x = np.asarray(predictions, dtype=float)
    mean = x.mean(axis=0)
    sigma = float(np.sqrt(np.mean(np.sum((x - mean) ** 2, axis=1))))
    if truth is None:
        return sigma, float("nan"), float("nan")
    err = np.linalg.norm(x - truth, axis=1)
    return sigma, float(np.mean(err <= sigma)), float(np.sqrt(np.mean(err ** 2)))


def estimate_sigma(predictor, scenario, n_trials, base_seed):
    """Repeat a prediction on one scenario with seeds ``base_seed + j``.

    Any failing trial propagates; nothing is dropped.
    """
    if n_trials < 2:
        raise ValueError("n_trials must be >= 2")
    preds = []
    audited = None
    for j in range(n_trials):
        if isinstance(predictor, Predictor):
            x, audited = predictor.predict_counted(scenario, base_seed + j)
        else:
            x = predictor(scenario, base_seed + j)
        preds.append(np.asarray(x, dtype=float))
    preds = np.array(preds)
    sigma, contained, rms = sigma_of(preds, scenario.truth)
    return SigmaEstimate(sigma, n_trials, preds.mean(axis=0), contained, rms, audited)


# benchmark


DEFAULT_METHODS = ["grid@81", "grid@375", "grid@1536", "grid@5184", "grid@24000",
                   "planes@9", "planes@24", "pca@3", "ann9@3", "ann4@1"]
DEFAULT_HISTORY = [20, 20, 20, 20, 19, 19, 19]


@dataclass
class BenchmarkConfig:
    methods: list = field(default_factory=lambda: list(DEFAULT_METHODS))
    n_trials: int = 500
    n_scenarios: int = 20
    history_points: list = field(default_factory=lambda: list(DEFAULT_HISTORY))
    pca_components: int = 1
    ann4_beam: int = 1
    grid_jitter: bool = True
    ann: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data):
        unknown = sorted(set(data) - set(cls.__dataclass_fields__))
        if unknown:
            raise ConfigError(f"unknown benchmark config key(s): {', '.join(unknown)}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def to_dict(self):
        return {name: getattr(self, name) for name in self.__dataclass_fields__}

    def parsed_methods(self):
        out = []
        for entry in self.methods:
            name, _, budget = str(entry).partition("@")
            if name not in METHODS:
                raise ConfigError(f"unknown method {entry!r} in benchmark config (known: {', '.join(METHODS)})")
            try:
                budget = int(budget) if budget else None
            except ValueError:
                raise ConfigError(f"bad measurement budget in {entry!r}") from None
            fixed = {"pca": 3, "ann9": 3, "ann4": 1}
            if name in fixed:
                if budget not in (None, fixed[name]):
                    raise ConfigError(f"{name} uses exactly {fixed[name]} measurement(s); got {entry!r}")
                budget = fixed[name]
            elif name == "grid":
                n = round((budget or 0) / 3) ** (1 / 3) if budget else 0
                n = int(round(n))
                if budget is None or n < 2 or 3 * n ** 3 != budget:
                    raise ConfigError(f"grid budget must be 3*n^3 with n >= 2; got {entry!r}")
            elif budget is None:
                raise ConfigError(f"{entry!r} needs a measurement budget")
            out.append((name, budget))
        return out

    def validate(self):
        self.parsed_methods()
        if self.n_trials < 2 or self.n_scenarios < 1:
            raise ConfigError("n_trials must be >= 2 and n_scenarios >= 1")
        if len(self.history_points) < 3 or min(self.history_points) < 9:
            raise ConfigError("history_points needs >= 3 runs of >= 9 points each")
        if self.ann4_beam not in BEAM_IDS:
            raise ConfigError("ann4_beam must be 1, 2 or 3")
        ann.Hyperparams.from_dict(self.ann)


@dataclass
class ScalingPoint:
    method: str
    n_measurements: int
    sigma: float
    containment_68: float = float("nan")
    n_trials: int = 0
    amortized_training_measurements: int = 0
    seed: int = 0
    per_scenario: list = field(default_factory=list)  # SigmaEstimate per held-out scenario
    audited_measurements: int = None

    @property
    def label(self):
        return f"{self.method}@{self.n_measurements}"


def history_split(points):
    """Split a run's point count over the three beams as evenly as possible."""
    base, extra = divmod(int(points), 3)
    return [base + (b < extra) for b in range(3)]


@dataclass
class ScenarioFamily:
    """Historical runs for one scenario seed plus the held-out evaluation scenario."""

    scenarios: list
    runs: list
    held_out: int

    @property
    def training_runs(self):
        return [r for i, r in enumerate(self.runs) if i != self.held_out]

    @property
    def evaluation_scenario(self):
        return self.scenarios[self.held_out]


def make_family(scenario_config, history_points, base_seed, index):
    """Draw len(history_points) scenarios and one compensation run per scenario.

    Run ``index % n_runs`` is held out (leave-one-run-out across scenario seeds).
    """
    seq = np.random.SeedSequence([int(base_seed), int(index)])
    n = len(history_points)
    kids = seq.spawn(2 * n)
    scenarios = [simulator.sample_scenario(scenario_config, kids[i]) for i in range(n)]
    runs = []
    for i, pts in enumerate(history_points):
        run = simulator.generate_compensation_run(scenarios[i], history_split(pts), kids[n + i],
                                                  run_id=f"s{index}r{i}")
        runs.append(run)
    return ScenarioFamily(scenarios, runs, index % n)


def train_models(family, config, seed, methods=("pca", "ann9", "ann4"), hidden=None):
    """Fit the learned predictors on a family's training runs."""
    runs = family.training_runs
    n_train = sum(len(r) for r in runs)
    hyper = ann.Hyperparams.from_dict(config.ann)
    if hidden is not None:
        hyper.hidden = list(hidden)
    out = {}
    if "pca" in methods:
        out["pca"] = pca_predictor(pca.fit_offset_model(runs, config.pca_components), n_train)
    if "ann9" in methods:
        net, _ = ann.train(ann.training_set_from_runs(runs, "nine"), hyper, seed)
        out["ann9"] = ann9_predictor(net, n_train)
    if "ann4" in methods:
        net, _ = ann.train(ann.training_set_from_runs(runs, "four"), hyper, seed)
        out["ann4"] = ann4_predictor(net, config.ann4_beam, n_train)
    return out


def _trial_base(base_seed, index):
    return int(base_seed) + 1_000_000 * (index + 1)


def _scenario_estimates(config, base_seed, scenario_config, index, methods, learned):
    family = make_family(scenario_config, config.history_points, base_seed, index)
    models = train_models(family, config, seed=int(base_seed) + index, methods=learned)
    scenario = family.evaluation_scenario
    out = {}
    for m, b in methods:
        if m == "grid":
            pred = grid_predictor(round((b / 3) ** (1 / 3)), config.grid_jitter)
        elif m == "planes":
            pred = plane_predictor(b)
        else:
            pred = models[m]
        est = estimate_sigma(pred, scenario, config.n_trials, _trial_base(base_seed, index))
        out[(m, b)] = (est, pred.amortized_training_measurements)
        log.debug("scenario %d %s@%d sigma=%.2f", index, m, b, est.sigma)
    return out


def run_scaling_benchmark(config, base_seed, scenario_config=None, progress=None, workers=1):
    """Estimate sigma for every configured (method, budget) on held-out scenarios.

    Returns one :class:`ScalingPoint` per configured method; ``sigma`` is the
    median over scenario seeds and ``containment_68`` the mean.  Scenario seeds
    are independent, so ``workers > 1`` spreads them over processes without
    changing the result.
    """
    scenario_config = scenario_config or simulator.ScenarioConfig()
    methods = config.parsed_methods()
    learned = tuple(sorted({m for m, _ in methods if m in ("pca", "ann9", "ann4")}))
    job = partial(_scenario_estimates, config, base_seed, scenario_config,
                  methods=methods, learned=learned)
    indices = range(config.n_scenarios)
    per_scenario = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for done, res in enumerate(pool.map(job, indices), start=1):
                per_scenario.append(res)
                if progress:
                    progress(done, config.n_scenarios)
    else:
        for s in indices:
            per_scenario.append(job(s))
            if progress:
                progress(s + 1, config.n_scenarios)
    points = []
    for m, b in methods:
        ests = [res[(m, b)][0] for res in per_scenario]
        points.append(ScalingPoint(
            method=m, n_measurements=b,
            sigma=float(np.median([e.sigma for e in ests])),
            containment_68=float(np.mean([e.containment_68 for e in ests])),
            n_trials=config.n_trials,
            amortized_training_measurements=per_scenario[-1][(m, b)][1],
            seed=int(base_seed), per_scenario=ests,
            audited_measurements=ests[-1].audited_measurements))
    return points


def _fmt(x):
    return repr(float(x))


def benchmark_csv(points):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCHMARK_HEADER)
    for p in points:
        w.writerow([p.method, p.n_measurements, p.amortized_training_measurements,
                    _fmt(p.sigma), _fmt(p.containment_68), p.n_trials, p.seed])
    return buf.getvalue()


def detail_csv(points):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DETAIL_HEADER)
    for p in points:
        for i, e in enumerate(p.per_scenario):
            w.writerow([p.method, p.n_measurements, i, _fmt(e.sigma), _fmt(e.containment_68),
                        _fmt(e.rms_error), e.n_trials])
    return buf.getvalue()


def per_scenario_sigmas(points, label):
    for p in points:
        if p.label == label:
            return np.array([e.sigma for e in p.per_scenario])
    raise KeyError(label)
