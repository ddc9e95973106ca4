"""Small worked cases for individual operations."""

import math

import numpy as np
import pytest

from schreierwalks.actions import PSI, PSI_PRIME, THOMPSON, PlaneVertex, apply_word, orbit_path
from schreierwalks.chains import (
    BirthDeathChain,
    CounterexampleChain,
    LineWalk,
    TableKernel,
    counterexample_params,
    exact_green_birthdeath,
    mc_green,
    simple_walk,
)
from schreierwalks.dyadic import DyadicRational
from schreierwalks.measures import (
    GroupMeasure,
    convolution_power_support,
    dirac,
    example1_measure,
    example2_measure,
    first_moment,
    inverse_measure,
    step_distribution,
    uniform_measure,
)
from schreierwalks.schreier import (
    SAVCHUK_CUT,
    EndClass,
    SchreierGraph,
    component_label,
    embed_branch,
    export_csv,
    savchuk_end_class,
    verify_embedding,
)
from schreierwalks.words import GeneratorLetter, Word, reduce_word

d = DyadicRational.parse
A, B = GeneratorLetter("A"), GeneratorLetter("B")


def test_generator_and_word_cases():
    assert THOMPSON.apply(d("3/8"), A) == d("3/16")
    assert apply_word(d("3/4"), Word([A, A.inverse()])) == d("3/4")
    assert orbit_path(d("3/4"), Word([B, B])) == [d("3/4"), d("5/8"), d("9/16")]
    assert reduce_word(Word.parse("abb'a")) == Word.parse("aa")
    assert reduce_word(Word.parse("aa'")) == Word()
    assert reduce_word(Word.parse("ABA'")) == Word.parse("ABA'")


def test_neighbours_ball_and_distance_around_three_quarters():
    g = SchreierGraph(THOMPSON)
    nb = {(str(l), str(w)) for l, w in g.neighbors(d("3/4"))}
    assert nb == {("A", "1/2^1"), ("A'", "7/2^3"), ("B", "5/2^3"), ("B'", "7/2^3")}
    assert g.ball(d("3/4"), 0) == {d("3/4")}
    assert g.ball(d("3/4"), 1) == {d("3/4"), d("1/2"), d("5/8"), d("7/8")}
    # brute force: close the radius-1 ball under all four letters
    brute = {THOMPSON.apply(v, l) for v in g.ball(d("3/4"), 1) for l in THOMPSON.letters()}
    assert g.ball(d("3/4"), 2) == brute | g.ball(d("3/4"), 1)
    assert THOMPSON.distance(d("3/4"), d("3/4")) == 0
    assert THOMPSON.distance(d("3/4"), d("5/8")) == 1
    assert THOMPSON.distance(d("3/4"), d("9/16")) == 2


def test_component_and_end_class_cases():
    g = SchreierGraph(THOMPSON)
    assert component_label(g, d("13/16"), SAVCHUK_CUT).anchor == "13/2^4"
    assert component_label(g, d("15/16"), SAVCHUK_CUT).anchor == component_label(g, d("7/8"), SAVCHUK_CUT).anchor
    assert savchuk_end_class(d("13/16")) is EndClass.LeftBranch
    assert savchuk_end_class(d("9/16")) is EndClass.RightBranch
    assert savchuk_end_class(d("3/8")) is EndClass.Ray58
    assert savchuk_end_class(d("1/2")) is EndClass.RayTowardsZero
    assert savchuk_end_class(d("15/16")) is EndClass.RayTowardsOne
    assert embed_branch(d("11/16"), "LeftIntoRight") == d("21/32")
    zero = verify_embedding(0, "LeftIntoRight")
    assert zero.checked == 1 and zero.violations == []
    assert verify_embedding(5, "RightIntoLeft").violations == []
    assert export_csv(g, d("3/4"), 0).count("\n") == 1  # header only, no edge leaves the single node


def test_measure_cases():
    assert first_moment(dirac("")) == 0
    assert first_moment(uniform_measure(THOMPSON)) == 1
    inv = inverse_measure(example1_measure())
    assert inv.mass("a") == 0.125 and inv.mass("a'") == 0.375 and inv.mass("b") == 0.25
    assert inverse_measure(dirac("A")).mass("A'") == 1.0
    sym = uniform_measure(PSI)
    assert dict(inverse_measure(sym).atoms) == dict(sym.atoms)
    mu = GroupMeasure([("ab", 0.6), ("b'", 0.4)])
    assert first_moment(inverse_measure(mu)) == first_moment(mu)
    ex2 = example2_measure()
    assert ex2.mass("a") == 0.25 and ex2.family_weight == pytest.approx(0.5)
    fam = ex2.family
    for z, p in fam.atoms(6):
        assert fam.atom_prob((-z[0], -z[1])) == p
    rng = np.random.default_rng(0)
    assert all(dirac("A").sample(rng) == Word([A]) for _ in range(10))


def test_convolution_cases():
    assert convolution_power_support(dirac("A"), 3).powers[3] == {Word.parse("AAA")}
    ex1 = example1_measure()
    products = {reduce_word(u + v) for u in ex1.words for v in ex1.words}
    assert convolution_power_support(ex1, 2).powers[2] == products
    assert len(ex1.words) ** 2 == 16


def test_step_distribution_cases():
    s = step_distribution(simple_walk(PSI_PRIME), PlaneVertex(0, 0, 0), 3)
    assert s.tail(1) == pytest.approx(1.0, abs=1e-15) and s.masses[0] == 0.0
    chain = CounterexampleChain.standard()
    for n in (2, 3, 10):
        assert step_distribution(chain, n, 2 * n).masses[2 * n] == counterexample_params(n)[0]


def test_birth_death_cases():
    bd = BirthDeathChain.reflected(CounterexampleChain.standard())
    k = np.arange(0, 1000)
    up, down, stay = bd.probs(k)
    assert down[0] == 0 and np.allclose(up + down + stay, 1.0, atol=1e-15, rtol=0)
    const = BirthDeathChain.constant(0.3, 0.3)
    assert np.allclose(const.resistances(50)[1:], const.resistances(50)[1])
    g = exact_green_birthdeath(bd, 5)
    assert g.lo <= g.mid <= g.hi and g.rel_width < 1e-6


def test_transition_masses_sum_to_one():
    up, down, flip = CounterexampleChain.standard().tables(10**6)
    total = up + down + flip
    assert np.max(np.abs(total[2:] - 1.0)) <= 4.5e-16  # two ulps
    assert dict(CounterexampleChain.standard().transitions(0)) == {-1: 0.5, 1: 0.5}


def test_green_estimator_cases():
    absorbing = TableKernel({0: {0: 1.0}})
    est = mc_green(absorbing, 0, 20, 37)
    assert est.mean == 38 and est.se == 0
    # recurrent simple walk: visits grow like sqrt(2 h / pi)
    for h in (10**3, 10**4):
        est = mc_green(LineWalk(), 0, 4000, h, seed=3)
        assert est.mean == pytest.approx(math.sqrt(2 * h / math.pi), rel=0.1)
