import math

import pytest
from scipy import stats

from schreierwalks import simulate
from schreierwalks.actions import PSI, THOMPSON, CombVertex, PlaneVertex
from schreierwalks.dyadic import DyadicRational
from schreierwalks.measures import GroupMeasure, dirac, example1_measure, example2_measure, uniform_measure
from schreierwalks.schreier import SAVCHUK_CUT, EndClass, SchreierGraph, component_label, savchuk_end_class
from schreierwalks.simulate import (
    WalkConfig,
    WalkError,
    WalkSetup,
    classify_end,
    component_change_stats,
    exit_measure,
    green_estimate,
    inverse_system_check,
    records_csv,
    run_walks,
    sign_flip_profile,
    stabilized_fraction,
    thompson_exit_measure,
    trajectory_seed,
    wilson_interval,
)

d = DyadicRational.parse

CONFIGS = {
    "thompson": lambda: WalkConfig(
        "thompson", d("5/8"), 3000, 6, 1, uniform_measure(THOMPSON), radii=(1, 3), cuts=("savchuk",)
    ),
    "thompson_words": lambda: WalkConfig(
        "thompson",
        d("3/4"),
        2000,
        6,
        2,
        GroupMeasure([("AAB", 0.3), ("B'A'", 0.3), ("", 0.1), ("A", 0.15), ("B", 0.15)]),
        radii=(2,),
        cuts=("savchuk", [d("1/2"), d("5/8")]),
    ),
    "psi": lambda: WalkConfig("psi", CombVertex(0, 0), 2000, 6, 3, example1_measure(), radii=(1, 3)),
    "psi_prime": lambda: WalkConfig(
        "psi_prime", PlaneVertex(0, 0, 0), 2000, 6, 4, example2_measure(1.1, 5), radii=(1, 2)
    ),
    "counterexample": lambda: WalkConfig("counterexample", 2, 5000, 6, 5, radii=(1, 4)),
}


@pytest.mark.parametrize("name", sorted(CONFIGS))
def test_compiled_engine_matches_python_reference(name):
    cfg = CONFIGS[name]()
    fast = run_walks(cfg, threads=1)
    slow = run_walks(cfg, threads=1, engine="python")
    assert [r.to_dict() for r in fast] == [r.to_dict() for r in slow]


def test_long_plane_jumps_use_the_analytic_path(monkeypatch):
    # with every jump handled as one L-shaped segment the reference still agrees
    cfg = CONFIGS["psi_prime"]()
    fast = run_walks(cfg, threads=1)
    monkeypatch.setattr(simulate, "_PY_LETTER_JUMP", 0)
    slow = run_walks(cfg, threads=1, engine="python")
    assert [r.to_dict() for r in fast] == [r.to_dict() for r in slow]


ORACLE_CONFIGS = {
    "thompson": CONFIGS["thompson"],
    "psi": CONFIGS["psi"],
    # lighter tail keeps the breadth-first oracle small
    "psi_prime": lambda: WalkConfig(
        "psi_prime", PlaneVertex(0, 0, 0), 500, 6, 4, example2_measure(1.9, 5), radii=(1, 2)
    ),
}


@pytest.mark.parametrize("name", sorted(ORACLE_CONFIGS))
def test_distances_and_labels_against_graph_oracles(name):
    cfg = ORACLE_CONFIGS[name]()
    setup = WalkSetup(cfg)
    action = setup.action
    g = SchreierGraph(action)
    for r in run_walks(cfg, threads=1, setup=setup):
        for j, pos in enumerate(r.positions):
            assert r.distances[j] == action.distance(cfg.start, pos)
            for lv, rec in zip(setup.levels, r.levels):
                lab = rec.labels[j]
                if pos in lv.cut:
                    assert lab is None
                else:
                    assert lab == component_label(g, pos, lv.cut).anchor


def test_savchuk_labels_name_the_tree_class():
    cfg = CONFIGS["thompson"]()
    for r in run_walks(cfg, threads=1):
        lv = r.level("savchuk")
        for pos, lab in zip(r.positions, lv.labels):
            if pos not in SAVCHUK_CUT:
                assert simulate.SAVCHUK_GATES[d(lab)] == savchuk_end_class(pos)


def test_dirac_measures_are_deterministic_translations():
    # a single atom a walks up one tooth; the empty word never moves
    cfg = WalkConfig("psi", CombVertex(0, 0), 100, 2, 0, dirac("a"), radii=(3,), checkpoints=(1, 10, 100))
    for r in run_walks(cfg, threads=1):
        assert r.positions == [CombVertex(0, 1), CombVertex(0, 10), CombVertex(0, 100)]
        assert r.levels[0].first_exit == 4 and r.levels[0].changes == 0
    still = WalkConfig("thompson", d("3/4"), 50, 2, 0, dirac(""))
    for r in run_walks(still, threads=1):
        assert r.start_visits == 51 and r.last_start_visit == 50


def test_counterexample_flip_bookkeeping():
    cfg = CONFIGS["counterexample"]()
    for r in run_walks(cfg, threads=1):
        assert r.total_flips == len(r.flip_times)
        assert r.sign_flips == sorted(r.sign_flips)
        for t, f in zip(r.checkpoints, r.sign_flips):
            assert f == sum(1 for s in r.flip_times if s <= t)
        assert r.distances == [abs(x - 2) for x in r.positions]
    prof = sign_flip_profile(run_walks(cfg, threads=1))
    assert len(prof["median_flips"]) == len(cfg.checkpoints)


def test_simple_z_never_flips():
    cfg = WalkConfig("simple_z", 0, 1000, 4, 1)
    assert all(r.total_flips == 0 for r in run_walks(cfg, threads=1))


def test_results_do_not_depend_on_threads_or_batch_size():
    cfg = CONFIGS["psi"]()
    base = records_csv(run_walks(cfg, threads=1))
    for th in (2, 5):
        assert records_csv(run_walks(cfg, threads=th)) == base
    bigger = WalkConfig("psi", CombVertex(0, 0), 2000, 9, 3, example1_measure(), radii=(1, 3))
    assert [r.to_dict() for r in run_walks(bigger, threads=3)[:6]] == [r.to_dict() for r in run_walks(cfg, threads=1)]
    assert trajectory_seed(3, 0) != trajectory_seed(3, 1) != trajectory_seed(4, 1)


def test_sampled_steps_follow_the_measure():
    # one-step positions from (0,0) under the drifted measure
    n = 20000
    cfg = WalkConfig("psi", CombVertex(0, 0), 1, n, 6, example1_measure(), checkpoints=(1,))
    counts = {}
    for r in run_walks(cfg):
        counts[r.positions[0]] = counts.get(r.positions[0], 0) + 1
    expected = {CombVertex(0, 1): 0.375, CombVertex(0, -1): 0.125, CombVertex(-1, 0): 0.25, CombVertex(1, 0): 0.25}
    assert set(counts) == set(expected)
    for v, p in expected.items():
        assert abs(counts[v] / n - p) <= 4 * math.sqrt(p * (1 - p) / n)


def test_invalid_configs():
    with pytest.raises(WalkError):
        WalkConfig("thompson", d("3/4"), 10, 1, measure=example1_measure())
    with pytest.raises(WalkError):
        WalkSetup(WalkConfig("psi", CombVertex(0, 0), 10, 1, measure=example1_measure(), cuts=("savchuk",)))
    with pytest.raises(WalkError):
        WalkConfig("thompson", DyadicRational(3, 1), 10, 1, measure=uniform_measure(THOMPSON))
    with pytest.raises(WalkError):
        WalkConfig("counterexample", 0, 10, 1, checkpoints=(5,))
    with pytest.raises(WalkError):
        WalkConfig("psi", CombVertex(0, 0), 10, 1, measure=example2_measure())
    with pytest.raises(WalkError):
        run_walks(CONFIGS["psi"](), engine="gpu")


def test_wilson_interval_against_closed_form():
    for k, n in ((0, 50), (7, 40), (999, 1000)):
        z = stats.norm.ppf(0.975)
        ph = k / n
        centre = (ph + z * z / (2 * n)) / (1 + z * z / n)
        half = z / (1 + z * z / n) * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n))
        lo, hi = wilson_interval(k, n)
        assert lo == pytest.approx(max(0.0, centre - half), abs=1e-12)
        assert hi == pytest.approx(min(1.0, centre + half), abs=1e-12)


def test_exit_measure_and_classification():
    cfg = CONFIGS["thompson"]()
    recs = run_walks(cfg)
    em = thompson_exit_measure(recs)
    names = {c["name"] for c in em.classes}
    assert names == {e.value for e in EndClass if e is not EndClass.Unresolved}
    assert sum(c["count"] for c in em.classes) + em.unresolved == len(recs)
    for r in recs:
        c = classify_end(r, "savchuk")
        assert isinstance(c, EndClass)
    assert 0 <= stabilized_fraction(recs, 0) <= 1
    generic = exit_measure(recs, lambda r: classify_end(r, "ball:3"))
    assert generic.total == len(recs)


def test_inverse_system_on_nested_balls():
    cfg = WalkConfig("psi", CombVertex(0, 0), 3000, 40, 8, example1_measure(), radii=(2, 4))
    setup = WalkSetup(cfg)
    out = inverse_system_check(run_walks(cfg, setup=setup), setup)
    assert out["checked"] > 0 and out["consistent"] == out["checked"]


def test_green_estimate_and_change_stats():
    mu = example1_measure()
    g = green_estimate(PSI, mu, CombVertex(0, 0), 200, 500, seed=1)
    assert g.mean >= 1.0 and g.lower_bound_only
    cfg = WalkConfig("psi", CombVertex(0, 0), 500, 50, 2, mu, radii=(2,))
    s = component_change_stats(run_walks(cfg), "ball:2", g, mu, 13)
    assert s.bound == pytest.approx(g.mean * 13 * 1.0)
    assert s.exited <= 50


def test_records_csv_layout():
    cfg = CONFIGS["psi"]()
    recs = run_walks(cfg)
    text = records_csv(recs).splitlines()
    assert text[0] == ",".join(simulate.CSV_HEADER)
    assert len(text) == 1 + len(recs) * len(cfg.checkpoints)
    summary = simulate.summary(recs, WalkSetup(cfg))
    assert [lv["name"] for lv in summary["levels"]] == ["ball:1", "ball:3"]
