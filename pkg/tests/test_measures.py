import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from schreierwalks.actions import PSI, PSI_PRIME, THOMPSON, CombVertex, PlaneVertex
from schreierwalks.chains import InducedKernel, simple_walk
from schreierwalks.dyadic import DyadicRational
from schreierwalks.measures import (
    GroupMeasure,
    MeasureError,
    RadialZ2,
    convolution_power_support,
    dirac,
    example1_measure,
    example2_measure,
    first_moment,
    inverse_measure,
    sphere_point,
    step_distribution,
    uniform_measure,
)
from schreierwalks.schreier import SchreierGraph
from schreierwalks.words import Word


def test_presets_are_normalized():
    for mu in (example1_measure(), example2_measure(), uniform_measure(THOMPSON), dirac("ab")):
        assert abs(mu.total_mass() - 1.0) <= 1e-12


def test_unnormalized_or_bad_atoms_rejected():
    with pytest.raises(MeasureError):
        GroupMeasure([("a", 0.5)])
    with pytest.raises(MeasureError):
        GroupMeasure([("a", 1.5), ("b", -0.5)])
    with pytest.raises(MeasureError):
        GroupMeasure([("a", 1.0)], family_weight=0.2)


def test_atoms_are_reduced_and_merged():
    mu = GroupMeasure([("aa'b", 0.25), ("b", 0.25), ("", 0.5)])
    assert mu.mass("b") == 0.5
    assert mu.mass("") == 0.5
    assert len(mu.words) == 2


def test_first_moments():
    assert first_moment(example1_measure()) == pytest.approx(1.0, abs=1e-15)
    assert first_moment(dirac("abab'")) == 4
    # E|z|_1 for P(|z|_1 = k) = k^-(1+a)/zeta(1+a) is zeta(a)/zeta(1+a)
    for a in (1.2, 1.5, 1.9):
        exact = special.zeta(a) / special.zeta(1 + a)
        assert first_moment(example2_measure(a, R=50)) == pytest.approx(0.5 + 0.5 * exact, rel=1e-12)


def test_tail_bracket_contains_exact_tail():
    for a, R in ((1.5, 10), (1.5, 1000), (1.1, 100)):
        fam = RadialZ2(a, R)
        lo, hi = fam.tail_first_moment_bracket()
        exact = special.zeta(a, R + 1) / special.zeta(1 + a)
        assert lo <= exact <= hi


def test_inverse_is_an_involution():
    mu = GroupMeasure([("ab", 0.3), ("b'", 0.2), ("a'a'b", 0.5)])
    inv = inverse_measure(mu)
    assert inv.mass("b'a'") == pytest.approx(0.3)
    assert inv.mass("b") == pytest.approx(0.2)
    back = inverse_measure(inv)
    assert dict(back.atoms) == pytest.approx(dict(mu.atoms))
    fam = example2_measure()
    assert inverse_measure(fam).family is fam.family


def test_json_round_trip():
    for mu in (example1_measure(), example2_measure(1.3, 40)):
        back = GroupMeasure.from_json(mu.to_json())
        assert back.to_dict() == mu.to_dict()
    with pytest.raises(MeasureError):
        GroupMeasure.from_dict({"atoms": [], "weird": 1})


def test_sampling_frequencies_within_four_standard_errors():
    mu = example1_measure()
    n = 10**6
    idx = mu.sample_indices(np.random.default_rng(11), n)
    counts = np.bincount(idx, minlength=len(mu.words))
    for c, p in zip(counts, mu.probs):
        assert abs(c / n - p) <= 4 * math.sqrt(p * (1 - p) / n)


def test_scalar_and_vector_sampling_share_a_stream():
    mu = example1_measure()
    a = mu.sample_indices(np.random.default_rng(3), 100)
    rng = np.random.default_rng(3)
    assert [mu.sample_index(rng) for _ in range(100)] == a.tolist()


@given(st.integers(1, 500))
def test_sphere_points_enumerate_the_l1_sphere(k):
    pts = [sphere_point(k, j) for j in range(4 * k)]
    assert len(set(pts)) == 4 * k
    assert all(abs(x) + abs(y) == k for x, y in pts)


def test_radial_sampler_matches_exact_radius_law():
    # small R so the rejection tail is exercised on a large share of draws
    a, R, n = 1.5, 3, 200_000
    fam = RadialZ2(a, R)
    rng = np.random.default_rng(7)
    radii = np.array([fam.sample_radius(rng) for _ in range(n)])
    z = special.zeta(1 + a)
    for k in range(1, 30):
        p = k ** -(1 + a) / z
        assert abs(np.mean(radii == k) - p) <= 4 * math.sqrt(p * (1 - p) / n), k
    p_tail = special.zeta(1 + a, 30) / z
    assert abs(np.mean(radii >= 30) - p_tail) <= 4 * math.sqrt(p_tail * (1 - p_tail) / n)


def test_radial_atoms_sum_to_head_mass():
    fam = RadialZ2(1.5, 20)
    head = math.fsum(p for _, p in fam.atoms())
    assert head == pytest.approx(1.0 - fam.tail_mass, abs=1e-14)
    assert fam.atom_prob((3, -2)) == pytest.approx(fam.C * 5 ** -3.5)
    assert fam.word_of((2, -1)) == Word.parse("bbc'")


def _column_sums(action, measure, center):
    """Column sums of the induced kernel over the radius-4 ball, computed by
    summing rows over a ball large enough to hold every predecessor."""
    g = SchreierGraph(action)
    reach = max(len(w) for w in measure.words)
    inner = g.ball(center, 4)
    cols = {y: [] for y in inner}
    kern = InducedKernel(action, measure)
    for x in g.ball(center, 4 + reach):
        for y, p in kern.transitions(x):
            if y in cols:
                cols[y].append(p)
    return {y: math.fsum(ps) for y, ps in cols.items()}


@pytest.mark.parametrize(
    "action,measure,center",
    [
        (THOMPSON, uniform_measure(THOMPSON), DyadicRational.parse("5/8")),
        (THOMPSON, GroupMeasure([("AB", 0.5), ("B'", 0.3), ("", 0.2)]), DyadicRational.parse("3/4")),
        (PSI, example1_measure(), CombVertex(0, 0)),
        (PSI_PRIME, GroupMeasure([("a", 0.25), ("a'", 0.25), ("bc", 0.25), ("c'b'", 0.25)]), PlaneVertex(0, 0, 0)),
    ],
)
def test_induced_kernels_are_doubly_stochastic(action, measure, center):
    for y, s in _column_sums(action, measure, center).items():
        assert abs(s - 1.0) <= 1e-12, y


def test_step_distribution_on_thompson():
    summary = step_distribution(simple_walk(THOMPSON), DyadicRational.parse("1/2"), 2)
    assert summary.masses.tolist() == [0.5, 0.5, 0.0]
    assert summary.tail(1) == 0.5
    heavy = step_distribution(InducedKernel(PSI, GroupMeasure([("aaa", 0.5), ("b", 0.5)])), CombVertex(0, 0), 2)
    assert heavy.beyond == 0.5


def test_convolution_support_of_uniform_free_measure():
    # reduced words of length 0 and 2 over {a, b}: 1 + 4*3
    sup = convolution_power_support(uniform_measure(PSI), 2)
    assert len(sup.powers[2]) == 13
    assert len(sup.union()) == 17
    assert convolution_power_support(uniform_measure(PSI), 6, cap=50).truncated
    with pytest.raises(MeasureError):
        convolution_power_support(example2_measure(), 2)
