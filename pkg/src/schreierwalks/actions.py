"""The three group actions: Thompson's F on dyadics, F2 on the comb, Z*Z^2 on the plane comb.

Words act on points left to right: ``apply_word(x, "AB")`` is ``B(A(x))``.
"""

from __future__ import annotations

import re
from typing import NamedTuple, Sequence, Union

from .dyadic import DyadicRational
from .words import GeneratorLetter, Word, reduce_word

__all__ = [
    "ActionError",
    "CombVertex",
    "PlaneVertex",
    "ActionPoint",
    "ThompsonAction",
    "PsiAction",
    "PsiPrimeAction",
    "THOMPSON",
    "PSI",
    "PSI_PRIME",
    "ACTIONS",
    "action_for",
    "apply_generator",
    "apply_word",
    "orbit_path",
    "reduce_word",
]


class ActionError(ValueError):
    """Point outside the domain of the action, or unknown letter."""


class CombVertex(NamedTuple):
    """Vertex of the comb graph: spine vertices have ``offset == 0``."""

    level: int
    offset: int

    def __str__(self):
        return f"({self.level},{self.offset})"


class PlaneVertex(NamedTuple):
    """Vertex of the plane comb: a Z^2 plane hangs at every spine level."""

    level: int
    x: int
    y: int

    def __str__(self):
        return f"({self.level},{self.x},{self.y})"


ActionPoint = Union[DyadicRational, CombVertex, PlaneVertex]

_HALF = DyadicRational(1, 1)
_QUARTER = DyadicRational(1, 2)
_EIGHTH = DyadicRational(1, 3)
_ONE = DyadicRational(1, 0)


def _le(t: DyadicRational, num: int, exp: int) -> bool:
    # t <= num / 2**exp
    return (t.numerator << exp) <= (num << t.exponent)


class _Action:
    name: str = ""
    alphabet: tuple[str, ...] = ()
    point_type: type = object

    def letters(self) -> list[GeneratorLetter]:
        """All letters and inverses, in the fixed neighbour order."""
        out = []
        for s in self.alphabet:
            out.append(GeneratorLetter(s, False))
            out.append(GeneratorLetter(s, True))
        return out

    def letter_code(self, letter: GeneratorLetter) -> int:
        try:
            return 2 * self.alphabet.index(letter.symbol) + int(letter.inverted)
        except ValueError:
            raise ActionError(f"letter {letter} not in alphabet {self.alphabet}") from None

    def apply(self, point, letter: GeneratorLetter):
        raise NotImplementedError

    def validate(self, point) -> None:
        if not isinstance(point, self.point_type):
            raise ActionError(f"{point!r} is not a point of the {self.name} action")

    def apply_word(self, point, word: Sequence[GeneratorLetter]):
        self.validate(point)
        for letter in word:
            point = self.apply(point, letter)
        return point

    def encode(self, point) -> str:
        return str(point)


class ThompsonAction(_Action):
    """Standard generators of F acting on dyadic rationals in (0, 1)."""

    name = "thompson"
    alphabet = ("A", "B")
    point_type = DyadicRational

    def validate(self, point) -> None:
        if not isinstance(point, DyadicRational):
            raise ActionError(f"{point!r} is not a dyadic rational")
        if not point.in_unit_interval():
            raise ActionError(f"{point} is outside (0, 1)")

    def apply(self, t: DyadicRational, letter: GeneratorLetter) -> DyadicRational:
        self.validate(t)
        s, inv = letter
        if s == "A":
            if not inv:
                if _le(t, 1, 1):
                    return t.half()
                if _le(t, 3, 2):
                    return t - _QUARTER
                return t.double() - _ONE
            if _le(t, 1, 2):
                return t.double()
            if _le(t, 1, 1):
                return t + _QUARTER
            return (t + _ONE).half()
        if s == "B":
            if _le(t, 1, 1):
                return t
            if not inv:
                if _le(t, 3, 2):
                    return t.half() + _QUARTER
                if _le(t, 7, 3):
                    return t - _EIGHTH
                return t.double() - _ONE
            if _le(t, 5, 3):
                return t.double() - _HALF
            if _le(t, 3, 2):
                return t + _EIGHTH
            return (t + _ONE).half()
        raise ActionError(f"letter {letter} not in alphabet {self.alphabet}")

    def decode(self, text: str) -> DyadicRational:
        p = DyadicRational.parse(text)
        self.validate(p)
        return p

    # The Schreier graph is a tree (loops and double edges aside). Rooting it
    # at 5/8, with 3/4 hanging below 5/8, every vertex has a unique parent
    # reached by one generator.
    ROOT = DyadicRational(5, 3)

    def parent(self, v: DyadicRational) -> tuple[DyadicRational, GeneratorLetter] | None:
        """Parent of ``v`` in the rooted tree and the letter ``l`` with ``v.l == parent``."""
        self.validate(v)
        n, e = v.numerator, v.exponent
        # compare v against k/8 via 8n vs k 2^e
        n8 = n << 3
        one = 1 << e
        if n8 == 5 * one:
            return None
        if n8 == 6 * one:
            letter = GeneratorLetter("B", False)
        elif n8 <= 4 * one:
            letter = GeneratorLetter("A", True)
        elif n8 >= 7 * one:
            letter = GeneratorLetter("A", False)
        elif n8 < 6 * one:
            letter = GeneratorLetter("B", True)
        else:
            letter = GeneratorLetter("A", False)
        return self.apply(v, letter), letter

    def path_to_root(self, v: DyadicRational) -> list[tuple[DyadicRational, GeneratorLetter | None]]:
        """``[(v, l0), (v.l0, l1), ..., (5/8, None)]``: the geodesic to the root."""
        out = []
        step = self.parent(v)
        while step is not None:
            out.append((v, step[1]))
            v = step[0]
            step = self.parent(v)
        out.append((v, None))
        return out

    def depth(self, v: DyadicRational) -> int:
        return len(self.path_to_root(v)) - 1

    def distance(self, u: DyadicRational, v: DyadicRational) -> int:
        """Tree distance via the lowest common ancestor."""
        anc = {}
        for i, (w, _) in enumerate(self.path_to_root(u)):
            anc[w] = i
        steps = 0
        while v not in anc:
            v = self.parent(v)[0]
            steps += 1
        return steps + anc[v]


class PsiAction(_Action):
    """F2 = <a, b> on the comb: ``a`` moves right along a horizontal line,
    ``b`` moves a spine vertex one level up (level - 1) and fixes the rest.

    Levels are numbered top to bottom, as the comb is drawn.
    """

    name = "psi"
    alphabet = ("a", "b")
    point_type = CombVertex

    def apply(self, v: CombVertex, letter: GeneratorLetter) -> CombVertex:
        self.validate(v)
        s, inv = letter
        if s == "a":
            return CombVertex(v.level, v.offset + (-1 if inv else 1))
        if s == "b":
            if v.offset != 0:
                return v
            return CombVertex(v.level + (1 if inv else -1), 0)
        raise ActionError(f"letter {letter} not in alphabet {self.alphabet}")

    def decode(self, text: str) -> CombVertex:
        nums = _ints(text, 2)
        return CombVertex(*nums)

    def distance(self, u: CombVertex, v: CombVertex) -> int:
        if u.level == v.level:
            return abs(u.offset - v.offset)
        return abs(u.offset) + abs(u.level - v.level) + abs(v.offset)


class PsiPrimeAction(_Action):
    """Z*Z^2 = <a> * <b, c> on the plane comb: ``a`` moves spine vertices one
    level up and fixes the rest; ``b`` and ``c`` translate inside the plane."""

    name = "psi_prime"
    alphabet = ("a", "b", "c")
    point_type = PlaneVertex

    def apply(self, v: PlaneVertex, letter: GeneratorLetter) -> PlaneVertex:
        self.validate(v)
        s, inv = letter
        d = -1 if inv else 1
        if s == "a":
            if v.x or v.y:
                return v
            return PlaneVertex(v.level - d, 0, 0)
        if s == "b":
            return PlaneVertex(v.level, v.x + d, v.y)
        if s == "c":
            return PlaneVertex(v.level, v.x, v.y + d)
        raise ActionError(f"letter {letter} not in alphabet {self.alphabet}")

    def decode(self, text: str) -> PlaneVertex:
        return PlaneVertex(*_ints(text, 3))

    def distance(self, u: PlaneVertex, v: PlaneVertex) -> int:
        if u.level == v.level:
            return abs(u.x - v.x) + abs(u.y - v.y)
        return abs(u.x) + abs(u.y) + abs(u.level - v.level) + abs(v.x) + abs(v.y)


def _ints(text: str, n: int) -> tuple[int, ...]:
    m = re.fullmatch(r"\s*\(?\s*(-?\d+(?:\s*,\s*-?\d+)*)\s*\)?\s*", text)
    if m is None:
        raise ActionError(f"cannot parse vertex {text!r}")
    nums = tuple(int(x) for x in m.group(1).split(","))
    if len(nums) != n:
        raise ActionError(f"expected {n} coordinates in {text!r}")
    return nums


THOMPSON = ThompsonAction()
PSI = PsiAction()
PSI_PRIME = PsiPrimeAction()
ACTIONS = {a.name: a for a in (THOMPSON, PSI, PSI_PRIME)}


def action_for(point) -> _Action:
    if isinstance(point, DyadicRational):
        return THOMPSON
    if isinstance(point, CombVertex):
        return PSI
    if isinstance(point, PlaneVertex):
        return PSI_PRIME
    raise ActionError(f"{point!r} is not an action point")


def apply_generator(point: ActionPoint, letter: GeneratorLetter) -> ActionPoint:
    return action_for(point).apply(point, GeneratorLetter(*letter))


def apply_word(point: ActionPoint, word) -> ActionPoint:
    if isinstance(word, str):
        word = Word.parse(word)
    return action_for(point).apply_word(point, word)


def orbit_path(point: ActionPoint, word) -> list[ActionPoint]:
    """``[x, x.s1, x.s1s2, ..., x.w]``."""
    if isinstance(word, str):
        word = Word.parse(word)
    act = action_for(point)
    act.validate(point)
    path = [point]
    for letter in word:
        point = act.apply(point, letter)
        path.append(point)
    return path
