import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from schreierwalks import _kernels
from schreierwalks.actions import (
    PSI,
    PSI_PRIME,
    THOMPSON,
    ActionError,
    CombVertex,
    PlaneVertex,
    action_for,
    apply_generator,
    apply_word,
    orbit_path,
)
from schreierwalks.dyadic import DyadicRational
from schreierwalks.schreier import SchreierGraph
from schreierwalks.words import GeneratorLetter, Word

F = Fraction


def oracle_A(t):
    # piecewise-linear definition, evaluated with Fractions
    if t <= F(1, 2):
        return t / 2
    if t <= F(3, 4):
        return t - F(1, 4)
    return 2 * t - 1


def oracle_B(t):
    if t <= F(1, 2):
        return t
    if t <= F(3, 4):
        return t / 2 + F(1, 4)
    if t <= F(7, 8):
        return t - F(1, 8)
    return 2 * t - 1


def random_dyadic(rng, max_exp=40):
    e = rng.randint(1, max_exp)
    return DyadicRational(2 * rng.randrange(2 ** (e - 1)) + 1, e)


@given(st.integers(1, 60).flatmap(lambda e: st.tuples(st.just(e), st.integers(0, 2 ** (e - 1) - 1))))
def test_thompson_generators_match_piecewise_oracle(pair):
    e, k = pair
    t = DyadicRational(2 * k + 1, e)
    f = t.to_fraction()
    assert THOMPSON.apply(t, GeneratorLetter("A")).to_fraction() == oracle_A(f)
    assert THOMPSON.apply(t, GeneratorLetter("B")).to_fraction() == oracle_B(f)


def test_generators_are_bijections_on_random_points():
    rng = random.Random(5)
    for action, sample in (
        (THOMPSON, lambda: random_dyadic(rng)),
        (PSI, lambda: CombVertex(rng.randint(-50, 50), rng.choice([0, rng.randint(-50, 50)]))),
        (
            PSI_PRIME,
            lambda: PlaneVertex(rng.randint(-50, 50), *rng.choice([(0, 0), (rng.randint(-9, 9), rng.randint(-9, 9))])),
        ),
    ):
        for _ in range(10_000):
            v = sample()
            for l in action.letters():
                w = action.apply(v, l)
                assert action.apply(w, l.inverse()) == v


def test_thompson_images_stay_in_unit_interval():
    rng = random.Random(1)
    for _ in range(2000):
        v = random_dyadic(rng)
        for l in THOMPSON.letters():
            assert THOMPSON.apply(v, l).in_unit_interval()


def test_invalid_points_rejected():
    with pytest.raises(ActionError):
        THOMPSON.apply(DyadicRational(3, 1), GeneratorLetter("A"))
    with pytest.raises(ActionError):
        THOMPSON.apply(DyadicRational(0), GeneratorLetter("A"))
    with pytest.raises(ActionError):
        THOMPSON.apply(DyadicRational(1, 1), GeneratorLetter("C"))
    with pytest.raises(ActionError):
        PSI.apply(PlaneVertex(0, 0, 0), GeneratorLetter("a"))
    with pytest.raises(ActionError):
        action_for("3/4")


def test_words_act_left_to_right():
    t = DyadicRational.parse("3/4")
    # A then B: 3/4 -> 1/2 -> 1/2
    assert apply_word(t, "AB") == DyadicRational.parse("1/2")
    # B then A: 3/4 -> 5/8 -> 3/8
    assert apply_word(t, "BA") == DyadicRational.parse("3/8")
    assert apply_word(t, "") == t
    assert orbit_path(t, "BA") == [t, DyadicRational.parse("5/8"), DyadicRational.parse("3/8")]
    assert apply_generator(t, ("A", True)) == DyadicRational.parse("7/8")


@settings(max_examples=200)
@given(st.lists(st.tuples(st.sampled_from("AB"), st.booleans()), max_size=40), st.integers(0, 10**6))
def test_word_then_inverse_is_identity(ls, seed):
    v = random_dyadic(random.Random(seed))
    w = Word(GeneratorLetter(*x) for x in ls)
    assert apply_word(apply_word(v, w), w.inverse()) == v


def test_comb_actions():
    assert PSI.apply(CombVertex(2, 0), GeneratorLetter("b")) == CombVertex(1, 0)
    assert PSI.apply(CombVertex(2, 3), GeneratorLetter("b")) == CombVertex(2, 3)
    assert PSI.apply(CombVertex(2, 3), GeneratorLetter("a", True)) == CombVertex(2, 2)
    assert PSI_PRIME.apply(PlaneVertex(0, 0, 0), GeneratorLetter("a", True)) == PlaneVertex(1, 0, 0)
    assert PSI_PRIME.apply(PlaneVertex(0, 1, 0), GeneratorLetter("a")) == PlaneVertex(0, 1, 0)
    assert PSI_PRIME.apply(PlaneVertex(0, 1, 0), GeneratorLetter("c")) == PlaneVertex(0, 1, 1)
    assert PSI.decode("(3,-2)") == CombVertex(3, -2)
    assert PSI_PRIME.decode("(1, 2, 3)") == PlaneVertex(1, 2, 3)
    with pytest.raises(ActionError):
        PSI.decode("(1,2,3)")


@pytest.mark.parametrize("action,center", [(THOMPSON, DyadicRational(3, 2)), (PSI, CombVertex(1, 2)), (PSI_PRIME, PlaneVertex(0, 1, -1))])
def test_closed_form_distance_matches_bfs(action, center):
    g = SchreierGraph(action)
    dist = g.ball_distances(center, 7)
    rng = random.Random(2)
    for v in rng.sample(sorted(dist, key=str), min(300, len(dist))):
        assert action.distance(center, v) == dist[v]
        assert action.distance(v, center) == dist[v]


def test_thompson_parent_map_is_a_tree_rooted_at_five_eighths():
    root = DyadicRational(5, 3)
    assert THOMPSON.parent(root) is None
    g = SchreierGraph(THOMPSON)
    dist = g.ball_distances(root, 9)
    for v, d in dist.items():
        assert THOMPSON.depth(v) == d


def _stack(v):
    bits = format(v.numerator, "b").zfill(v.exponent)
    return np.array([int(b) for b in reversed(bits)], dtype=np.uint8)


def _from_stack(s, L):
    return DyadicRational(int("".join(str(s[j]) for j in range(L - 1, -1, -1)), 2), L)


def test_compiled_digit_stack_walk_matches_exact_action():
    rng = random.Random(3)
    letters = THOMPSON.letters()
    for start in (DyadicRational(5, 3), DyadicRational(1, 1), DyadicRational(255, 8)):
        v = start
        buf = np.zeros(5000, dtype=np.uint8)
        s0 = _stack(v)
        buf[: len(s0)] = s0
        L = len(s0)
        for _ in range(2000):
            code = rng.randrange(4)
            v = THOMPSON.apply(v, letters[code])
            L = _kernels.dyadic_apply(buf, L, code)
            assert _from_stack(buf, L) == v
            p = THOMPSON.parent(v)
            pc = _kernels.dyadic_parent_code(buf, L)
            assert (p is None and pc == -1) or THOMPSON.letter_code(p[1]) == pc
