import numpy as np
import pytest

from fieldcomp.errors import (InvalidBeam, InvalidConfig, LineParallelToPlane, OutOfBounds,
                              ParseError)
from fieldcomp.geometry import fit_plane, intersect_planes, plane_residual
from fieldcomp.pca import fit_pca
from fieldcomp.simulator import (CSV_HEADER, ScanLine, ScenarioConfig, TrapScenario,
                                 correlation_signal, generate_compensation_run,
                                 measure_plane_point, read_runs, run_to_csv, runs_from_csv,
                                 sample_scenario, write_run)

SKEW_BEAMS = [[0.9, 0.3, 0.1], [0.2, 1.0, -0.3], [0.1, 0.4, 1.0]]
SKEW_COUPLING = [[1.0, 0.2, -0.1], [0.15, 0.9, 0.1], [0.0, -0.2, 1.1]]


def skew_scenario(noise=0.0):
    return TrapScenario(SKEW_BEAMS, SKEW_COUPLING, [300.0, -150.0, 80.0], noise_sigma=noise)


def test_zero_variance_scenario_sits_at_mean():
    cfg = ScenarioConfig(beams=np.eye(3).tolist(), stray_spread=0.0, stray_mean=[100.0, -50.0, 20.0])
    s = sample_scenario(cfg, 7)
    np.testing.assert_array_equal(s.stray_field, [100.0, -50.0, 20.0])
    np.testing.assert_allclose(s.truth, [-100.0, 50.0, -20.0])


def test_sample_scenario_deterministic(default_config):
    assert sample_scenario(default_config, 3) == sample_scenario(default_config, 3)
    assert sample_scenario(default_config, 3) != sample_scenario(default_config, 4)
    cfg = ScenarioConfig(beam_mode="perturbed", coupling_mode="random")
    assert sample_scenario(cfg, 11) == sample_scenario(cfg, 11)


def test_stray_field_dominance_statistics(default_config):
    fields = np.array([sample_scenario(default_config, s).stray_field for s in range(1000)])
    ratio = fit_pca(fields).explained_ratio[0]
    assert 0.85 <= ratio <= 0.93


def test_sampled_scenarios_satisfy_invariants():
    cfg = ScenarioConfig(beam_mode="perturbed", coupling_mode="random")
    for seed in range(50):
        s = sample_scenario(cfg, seed)
        np.testing.assert_allclose(np.linalg.norm(s.beams, axis=1), 1.0)
        gram = np.abs(s.beams @ s.beams.T)[np.triu_indices(3, 1)]
        assert np.all(gram < 0.999)
        assert abs(np.linalg.det(s.coupling)) > 1e-6
        assert s.contains(s.truth)


@pytest.mark.parametrize("kwargs", [
    dict(beams=[[1, 0, 0], [1, 0, 0], [0, 0, 1]]),
    dict(coupling=[[1, 0, 0], [0, 1, 0], [0, 0, 0]]),
    dict(beam_mode="wobbly"),
])
def test_invalid_configs(kwargs):
    with pytest.raises(InvalidConfig):
        sample_scenario(ScenarioConfig(**kwargs), 0)


def test_unknown_config_key_rejected():
    with pytest.raises(InvalidConfig, match="nosie_sigma"):
        ScenarioConfig.from_dict({"nosie_sigma": 3})


def test_correlation_signal_examples(axis_scenario):
    assert correlation_signal(axis_scenario, 1, (-5, 0, 0), seed=0) == 0.0
    assert correlation_signal(axis_scenario, 1, (-3, 0, 0), seed=0) == 2.0
    with pytest.raises(InvalidBeam):
        correlation_signal(axis_scenario, 4, (0, 0, 0))
    with pytest.raises(OutOfBounds):
        correlation_signal(axis_scenario, 1, (5000, 0, 0))


def test_signal_vanishes_only_at_truth():
    s = skew_scenario()
    for beam in (1, 2, 3):
        assert correlation_signal(s, beam, s.truth) == pytest.approx(0.0, abs=1e-9)
    off = s.truth + np.array([10.0, 0, 0])
    assert sum(correlation_signal(s, b, off) for b in (1, 2, 3)) > 1.0


def test_signal_noise_scaled_to_distance():
    s = TrapScenario(SKEW_BEAMS, SKEW_COUPLING, [300.0, -150.0, 80.0], noise_sigma=54.0)
    plane = s.true_plane(2)
    far = s.truth + 500.0 * plane.normal
    vals = np.array([correlation_signal(s, 2, far, seed=k) for k in range(4000)])
    # in distance units the noise std is noise_sigma
    assert np.std(vals / s.slopes[1]) == pytest.approx(54.0, rel=0.05)
    assert np.mean(vals / s.slopes[1]) == pytest.approx(500.0, abs=3.0)


def test_measure_plane_point_noiseless():
    s = TrapScenario(np.eye(3), np.eye(3), [-5.0, 0.0, 0.0], noise_sigma=0.0)
    p = measure_plane_point(s, 1, ScanLine(np.zeros(3), np.array([1.0, 0, 0])))
    np.testing.assert_allclose(p.point, [5, 0, 0])
    assert p.beam_id == 1
    with pytest.raises(LineParallelToPlane):
        measure_plane_point(s, 1, ScanLine(np.zeros(3), np.array([0.0, 1, 0])))
    with pytest.raises(InvalidBeam):
        measure_plane_point(s, 0, ScanLine(np.zeros(3), np.array([1.0, 0, 0])))


def test_measure_plane_point_noise_calibration():
    s = TrapScenario(np.eye(3), np.eye(3), [-5.0, 0.0, 0.0], noise_sigma=54.0)
    rng = np.random.default_rng(0)
    line = ScanLine(np.zeros(3), np.array([1.0, 0, 0]))
    xs = np.array([measure_plane_point(s, 1, line, rng).point[0] for _ in range(10_000)])
    assert 52.5 <= np.std(xs, ddof=1) <= 55.5


def test_oblique_noise_is_orthogonal_distance():
    s = skew_scenario(noise=54.0)
    rng = np.random.default_rng(1)
    plane = s.true_plane(3)
    line = ScanLine(np.array([100.0, -40.0, 0.0]), np.array([0.3, 0.2, 1.0]))
    r = np.array([plane_residual(plane, measure_plane_point(s, 3, line, rng).point)
                  for _ in range(20_000)])
    assert abs(np.mean(r)) < 1.5
    assert np.std(r) == pytest.approx(54.0, rel=0.03)
    # Gaussian shape: excess kurtosis near zero
    z = (r - r.mean()) / r.std()
    assert abs(np.mean(z ** 4) - 3.0) < 0.15


def test_generate_run_shapes(default_config):
    s = sample_scenario(default_config, 1)
    run = generate_compensation_run(s, 8, seed=5)
    assert len(run) == 24 and run.counts() == {1: 8, 2: 8, 3: 8}
    run = generate_compensation_run(s, 1, seed=5)
    assert len(run) == 3 and run.counts() == {1: 1, 2: 1, 3: 1}
    run = generate_compensation_run(s, [7, 7, 6], seed=5)
    assert run.counts() == {1: 7, 2: 7, 3: 6}
    with pytest.raises(InvalidConfig):
        generate_compensation_run(s, 0, seed=5)


def test_generate_run_deterministic(default_config):
    s = sample_scenario(default_config, 1)
    a = generate_compensation_run(s, 5, seed=9)
    b = generate_compensation_run(s, 5, seed=9)
    assert run_to_csv(a) == run_to_csv(b)


def test_noiseless_round_trip_recovers_truth():
    s = skew_scenario()
    run = generate_compensation_run(s, 3, seed=2)
    planes = [fit_plane(run.beam_points(b)) for b in (1, 2, 3)]
    np.testing.assert_allclose(intersect_planes(*planes), s.truth, atol=1e-6)


def test_noiseless_locus_normal_is_coupled_beam():
    s = skew_scenario()
    run = generate_compensation_run(s, 6, seed=4)
    M, B = np.array(SKEW_COUPLING), np.array(SKEW_BEAMS)
    for b in (1, 2, 3):
        expected = M.T @ (B[b - 1] / np.linalg.norm(B[b - 1]))
        expected /= np.linalg.norm(expected)
        normal = fit_plane(run.beam_points(b)).normal
        assert min(np.abs(normal - expected).max(), np.abs(normal + expected).max()) < 1e-9


def test_default_scenario_noise_calibration(default_config):
    s = sample_scenario(default_config, 0)
    run = generate_compensation_run(s, 4000, seed=0)
    r = [plane_residual(s.true_plane(p.beam_id), p.point) for p in run.points]
    assert np.std(r) == pytest.approx(54.0, rel=0.03)


def test_csv_round_trip(tmp_path, default_config):
    s = sample_scenario(default_config, 2)
    run = generate_compensation_run(s, [3, 4, 5], seed=1, run_id="r7")
    path = tmp_path / "r7.csv"
    write_run(run, path)
    text = path.read_text()
    assert text.splitlines()[0] == ",".join(CSV_HEADER)
    back = read_runs(path)[0]
    assert run_to_csv(back) == text
    np.testing.assert_array_equal(back.truth, run.truth)
    assert back.noise_sigma == 54.0


def test_csv_parse_errors():
    with pytest.raises(ParseError, match=":1:"):
        runs_from_csv("a,b,c\n")
    with pytest.raises(ParseError, match=":2:"):
        runs_from_csv("run_id,beam_id,px,py,pz\nr,5,1,2,3\n")
