from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aggsort.cli import data_path
from aggsort.dataset import Lithology, REPORT_ORDER
from aggsort.simulator import config, experiment, pipeline, report, scene
from aggsort.simulator.config import SimConfig
from aggsort.simulator.experiment import GraspModel, ReplayError, parse_replay, run_experiment, tally_replay
from aggsort.simulator.pipeline import TRANSITIONS, Phase
from aggsort.simulator.report import CategoryRow, SortReport, pct, render_report

QUIET = SimConfig(seed=3, box_noise_px=0.0, grasp_model="always")


# -- config -----------------------------------------------------------------


def test_streams_are_independent_and_reproducible():
    a, b = config.streams(5), config.streams(5)
    assert set(a) == set(config.STREAMS)
    draws = {k: a[k].random(4).tolist() for k in a}
    assert draws == {k: b[k].random(4).tolist() for k in b}
    assert len({tuple(v) for v in draws.values()}) == len(draws)
    assert config.streams(6)["scene"].random() != config.streams(5)["scene"].random()


def test_config_parse_and_format_round_trip():
    cfg = config.parse_config("seed = 9\ncounts = 1 2 3 4\nfidelity = stereo\ndepth_noise_m = 0.001\nclamp_sizes = yes\n")
    assert cfg.seed == 9 and cfg.counts == (1, 2, 3, 4) and cfg.fidelity == "stereo" and cfg.clamp_sizes
    assert config.parse_config(config.format_config(cfg)) == cfg


def test_config_rejects_bad_values():
    with pytest.raises(ValueError, match="unknown config keys"):
        config.parse_config("colour = red\n")
    with pytest.raises(ValueError):
        config.parse_config("fidelity = lidar\n")
    with pytest.raises(ValueError):
        config.parse_config("counts = 1 2 3\n")
    with pytest.raises(ValueError):
        config.parse_config("clamp_sizes = maybe\n")


def test_load_config_resolves_relative_paths(tmp_path):
    (tmp_path / "c.txt").write_text("1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n")
    (tmp_path / "sim.txt").write_text("confusion = c.txt\n")
    cfg = config.load_config(tmp_path / "sim.txt")
    assert cfg.confusion == str(tmp_path / "c.txt")
    assert config.load_config(data_path("sim_default.txt")).counts == (10, 10, 10, 10)


# -- scene ------------------------------------------------------------------


@given(st.integers(0, 10_000))
@settings(max_examples=25)
def test_scene_sizes_and_no_overlap(seed):
    s = scene.generate_scene(np.random.default_rng(seed))
    assert [s.count(l) for l in REPORT_ORDER] == [10, 10, 10, 10]
    for a in s.aggregates:
        assert 1.0 - 1e-9 <= a.diagonal_cm <= 4.0 + 1e-9
        assert a.bounds()[0][2] == pytest.approx(s.plane_z)
    lo = np.array([a.bounds()[0][:2] for a in s.aggregates])
    hi = np.array([a.bounds()[1][:2] for a in s.aggregates])
    for i in range(len(lo)):
        for j in range(i + 1, len(lo)):
            assert np.any(hi[i] <= lo[j]) or np.any(hi[j] <= lo[i])


def test_size_range_is_enforced_unless_clamped():
    rng = np.random.default_rng(0)
    with pytest.raises(scene.SceneError):
        scene.generate_scene(rng, size_range_cm=(0.5, 4.0))
    s = scene.generate_scene(rng, (2, 0, 0, 0), size_range_cm=(0.5, 6.0), clamp=True)
    assert all(1.0 <= a.diagonal_cm <= 4.0 + 1e-9 for a in s.aggregates)
    with pytest.raises(scene.SceneError):
        scene.generate_scene(rng, (1, 1, 1))


# -- grasp model and replay -------------------------------------------------


def test_grasp_models():
    step = GraspModel("step", threshold_cm=1.5, p_small=0.8, p_large=1.0)
    assert step.probability(1.49) == 0.8 and step.probability(1.5) == 1.0
    assert GraspModel("always").probability(0.1) == 1.0
    logi = GraspModel("logistic", mid_cm=1.2, slope=8.0)
    assert logi.probability(1.2) == pytest.approx(0.5)
    assert logi.probability(3.0) > 0.99
    with pytest.raises(ValueError):
        GraspModel("magic")
    rng = np.random.default_rng(0)
    hits = sum(step(1.0, rng) for _ in range(5000)) / 5000
    assert abs(hits - 0.8) < 0.03


def test_replay_parsing_errors():
    assert parse_replay("# c\nsandstone 0 sandstone\nH yes SH\n")[1].reported is Lithology.LIMESTONE
    for bad in ("sandstone 0\n", "basalt 1 granite\n", "granite maybe granite\n"):
        with pytest.raises(ReplayError):
            parse_replay(bad)


def test_replay_fixture_counts():
    attempts = experiment.load_replay(data_path("grasping_replay.txt"))
    assert len(attempts) == 40
    rep = tally_replay(attempts)
    assert rep.row(Lithology.SANDSTONE).grasp_rate == 90
    assert rep.row(Lithology.GRANITE).accuracy == 90
    assert rep.overall_mean == Fraction(195, 2)


# -- report -----------------------------------------------------------------


def test_pct_formatting():
    assert pct(Fraction(100)) == "100"
    assert pct(Fraction(195, 2)) == "97.5"
    assert pct(Fraction(200, 3)) == "66.7"
    assert pct(Fraction(1, 20)) == "0.1"  # half rounds away from zero
    assert pct(None) == "-"


def test_report_csv_round_trip():
    rows = (CategoryRow(Lithology.LIMESTONE, 3, 2, 3), CategoryRow(Lithology.MARBLE, 7, 7, 6))
    rep = SortReport(rows)
    text = render_report(rep, "csv")
    assert text.splitlines()[0] == ",".join(report.COLUMNS)
    assert report.parse_report_csv(text) == rep
    with pytest.raises(ValueError):
        report.parse_report_csv(text.replace("marble (D),7,7,100", "marble (D),7,7,90"))


def test_empty_report_is_header_only():
    assert render_report(SortReport(()), "csv") == ",".join(report.COLUMNS) + "\n"
    assert render_report(SortReport(())).count("\n") == 1
    with pytest.raises(ValueError):
        render_report(SortReport(()), "xml")


def test_category_row_validation():
    with pytest.raises(ValueError):
        CategoryRow(Lithology.GRANITE, 3, 4, 0)
    with pytest.raises(ValueError):
        CategoryRow(Lithology.GRANITE, 3, 0, 5)


# -- pipeline ---------------------------------------------------------------


def _phases(cfg):
    seen = []
    res = run_experiment(cfg, on_step=lambda s: seen.append(s))
    return res, seen


def test_transitions_follow_graph_and_conserve():
    res, states = _phases(SimConfig(seed=4, counts=(3, 3, 3, 3)))
    phases = [Phase.LOAD_ENV] + [s.phase for s in states]
    for a, b in zip(phases, phases[1:]):
        assert b in TRANSITIONS[a], f"{a} -> {b}"
    assert phases[-1] is Phase.DONE
    assert all(s.conserved() for s in states)
    final = res.final_state
    assert not final.remaining
    assert final.binned + len(final.dropped) + len(final.skipped) == 12


def test_zero_noise_run_sorts_everything_into_right_bins():
    res, _ = _phases(QUIET.with_(counts=(4, 4, 4, 4)))
    final = res.final_state
    for lith in REPORT_ORDER:
        ids = final.bin_contents(lith)
        assert len(ids) == 4
        assert all(res.scene.aggregate(i).lithology is lith for i in ids)
    truth = {a.ident: a.centroid for a in res.scene.aggregates}
    assert max(np.linalg.norm(np.asarray(p) - truth[i]) for i, p in final.localized) < 1e-9


def test_misclassification_routes_to_reported_bin(tmp_path):
    m = np.eye(4)
    m[1] = [1, 0, 0, 0]  # every granite reported as limestone
    (tmp_path / "c.txt").write_text("\n".join(" ".join(str(v) for v in r) for r in m) + "\n")
    res = run_experiment(QUIET.with_(counts=(0, 3, 0, 0), confusion=str(tmp_path / "c.txt")))
    rep = res.report
    assert rep.row(Lithology.GRANITE).correctly_classified == 0
    assert len(res.final_state.bin_contents(Lithology.LIMESTONE)) == 3


def test_small_particles_can_drop():
    cfg = SimConfig(seed=1, counts=(5, 5, 5, 5), box_noise_px=0.0, grasp_model="step", grasp_p_small=0.0,
                    grasp_threshold_cm=4.1)
    res = run_experiment(cfg)
    assert res.report.grasp_successes == 0
    assert len(res.final_state.dropped) == res.report.attempted


def test_stereo_fidelity_runs():
    res = run_experiment(SimConfig(seed=2, counts=(1, 1, 1, 1), fidelity="stereo", grasp_model="always"))
    assert res.conserved_every_step
    assert res.report.attempted >= 3


def test_step_after_done_is_noop():
    res = run_experiment(QUIET.with_(counts=(1, 0, 0, 0)))
    pcfg = experiment.build_pipeline_config(QUIET)
    rngs = config.streams(0)
    again = pipeline.step_pipeline(res.final_state, res.scene, pcfg,
                                   pipeline.Rngs(rngs["detection"], rngs["grasp"], rngs["depth"]))
    assert again is res.final_state


def test_max_steps_is_enforced():
    with pytest.raises(pipeline.PipelineError):
        run_experiment(QUIET.with_(max_steps=3))


def test_same_seed_same_report_and_log():
    a = run_experiment(SimConfig(seed=8, counts=(3, 3, 3, 3)))
    b = run_experiment(SimConfig(seed=8, counts=(3, 3, 3, 3)))
    assert render_report(a.report) == render_report(b.report)
    assert a.final_state.log == b.final_state.log


# -- sensing ----------------------------------------------------------------

from aggsort.geometry import RigidTransform  # noqa: E402
from aggsort.kinematics import jetarm  # noqa: E402
from aggsort.simulator import sensing  # noqa: E402


def _single(center_xy, size=(2.0, 1.5, 1.0), plane_z=-0.10, lith=Lithology.GRANITE):
    c = (center_xy[0], center_xy[1], plane_z + size[2] / 200)
    agg = scene.AggregateSpec(0, lith, size, RigidTransform.from_rt(None, c))
    return scene.Scene((agg,), plane_z, scene.default_bins(0.2588))


def _survey_q(pcfg, xyz):
    return pipeline._camera_q(pcfg, xyz, (0.0,) * 5)


def test_same_seed_same_scene():
    a = scene.generate_scene(np.random.default_rng(3))
    b = scene.generate_scene(np.random.default_rng(3))
    assert all(x.true_size == y.true_size and x.pose.allclose(y.pose, 0) for x, y in zip(a.aggregates, b.aggregates))


def test_on_axis_aggregate_hits_principal_point():
    pcfg = experiment.build_pipeline_config(QUIET)
    q = _survey_q(pcfg, (0.12, 0.02, 0.10))
    cam = sensing.camera_pose(pcfg.chain, q, pcfg.sensor.T_CE)
    sc = _single(cam.translation[:2])
    (s,) = sensing.sense(sc, [0], pcfg.chain, q, pcfg.sensor, np.random.default_rng(0))
    intr = pcfg.sensor.intrinsics
    np.testing.assert_allclose(s.detection.center, (intr.cx, intr.cy), atol=1e-9)
    assert s.depth == pytest.approx(cam.translation[2] - sc.aggregates[0].top_center[2], abs=1e-12)


def test_aggregate_behind_camera_is_absent():
    pcfg = experiment.build_pipeline_config(QUIET)
    q = _survey_q(pcfg, (0.12, 0.0, 0.10))
    sc = _single((0.12, 0.0), plane_z=0.2)
    assert sensing.sense(sc, [0], pcfg.chain, q, pcfg.sensor, np.random.default_rng(0)) == []


def test_stereo_depth_within_one_disparity_quantum():
    cfg = QUIET.with_(fidelity="stereo")
    pcfg = experiment.build_pipeline_config(cfg)
    q = _survey_q(pcfg, (0.12, 0.0, 0.10))
    cam = sensing.camera_pose(pcfg.chain, q, pcfg.sensor.T_CE)
    sc = _single(cam.translation[:2], size=(3.0, 2.5, 1.0))
    (s,) = sensing.sense(sc, [0], pcfg.chain, q, pcfg.sensor, np.random.default_rng(0))
    fb = pcfg.sensor.intrinsics.fx * pcfg.sensor.rig.baseline
    z_true = cam.translation[2] - sc.aggregates[0].top_center[2]
    d = fb / z_true
    assert fb / (d + 1) <= s.depth <= fb / (d - 1)


def test_search_self_loop_and_detect_to_localize():
    pcfg = experiment.build_pipeline_config(QUIET)
    rngs = config.streams(0)
    r = pipeline.Rngs(rngs["detection"], rngs["grasp"], rngs["depth"])
    # one aggregate visible only from the last survey point
    sc = _single((0.09 + 0.0, 0.15 + 0.03))
    st_ = pipeline.step_pipeline(pipeline.initial_state(sc), sc, pcfg, r)
    assert st_.phase is Phase.SEARCH
    st_ = pipeline.step_pipeline(st_, sc, pcfg, r)
    assert st_.phase is Phase.SEARCH and "nothing" in st_.log[-1]
    while st_.phase is not Phase.DETECT:
        st_ = pipeline.step_pipeline(st_, sc, pcfg, r)
    st_ = pipeline.step_pipeline(st_, sc, pcfg, r)
    assert st_.phase is Phase.LOCALIZE and st_.target is not None
    st_ = pipeline.step_pipeline(st_, sc, pcfg, r)
    assert st_.phase is Phase.MEASURE and st_.target.centroid_base is not None
    while st_.phase is not Phase.PLACE:
        st_ = pipeline.step_pipeline(st_, sc, pcfg, r)
    assert st_.binned == 0
    st_ = pipeline.step_pipeline(st_, sc, pcfg, r)
    assert st_.binned == 1 and not st_.remaining and st_.conserved()


@given(st.floats(0, 5), st.floats(0, 5))
def test_grasp_probability_monotone(a, b):
    lo, hi = sorted((a, b))
    for m in (GraspModel("step"), GraspModel("logistic"), GraspModel("always")):
        assert 0 <= m.probability(lo) <= m.probability(hi) <= 1
