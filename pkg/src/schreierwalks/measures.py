"""Probability measures on the acting groups."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np
from scipy import special

from .actions import _Action
from .words import GeneratorLetter, Word, reduce_word

NORMALIZATION_TOL = 1e-12
# input measures may carry rounding from text formats; beyond this we refuse
_INPUT_TOL = 1e-9
# largest radius the tail sampler will return; Z^2 coordinates stay well inside int64
_MAX_TAIL_RADIUS = 2**52


class MeasureError(ValueError):
    pass


class RadialZ2:
    """Symmetric measure on Z^2 - {0} with ``mu(z) = C |z|_1^-(2+alpha)``.

    Radii ``k = |z|_1`` up to ``R`` are tabulated exactly; the law of the
    radius beyond ``R`` is sampled by rejection from a Pareto proposal, so
    no truncation error enters the samples. The site on the l1-sphere of
    radius ``k`` is uniform among its ``4k`` points.
    """

    kind = "radial_z2"

    def __init__(self, alpha: float = 1.5, R: int = 1000, symbols: tuple[str, str] = ("b", "c")):
        if not 1.0 < alpha < 2.0:
            raise MeasureError(f"alpha must lie in (1, 2), got {alpha}")
        if R < 1:
            raise MeasureError("R must be >= 1")
        self.alpha = float(alpha)
        self.R = int(R)
        self.symbols = symbols
        s = 1.0 + self.alpha
        self.zeta = float(special.zeta(s))
        k = np.arange(1, self.R + 1, dtype=np.float64)
        self.radial = k ** (-s) / self.zeta  # P(|z|_1 = k)
        self.radial_cdf = np.cumsum(self.radial)
        # the tail beyond R is the designated remainder atom
        self.tail_mass = 1.0 - math.fsum(self.radial)
        self.radial_cdf[-1] = 1.0 - self.tail_mass
        self.C = 1.0 / (4.0 * self.zeta)
        self.reject_const = ((self.R + 2.0) / (self.R + 1.0)) ** s

    def atom_prob(self, z: tuple[int, int]) -> float:
        n = abs(z[0]) + abs(z[1])
        if n == 0:
            return 0.0
        return self.C * n ** (-(2.0 + self.alpha))

    def atoms(self, radius: int | None = None):
        """Yield ``(z, prob)`` for ``0 < |z|_1 <= radius`` (default ``R``)."""
        radius = self.R if radius is None else radius
        for k in range(1, radius + 1):
            p = self.C * k ** (-(2.0 + self.alpha))
            for j in range(4 * k):
                yield sphere_point(k, j), p

    def word_of(self, z: tuple[int, int]) -> Word:
        b, c = self.symbols
        x, y = z
        return Word([GeneratorLetter(b, x < 0)] * abs(x) + [GeneratorLetter(c, y < 0)] * abs(y))

    def first_moment(self) -> float:
        head = math.fsum(np.arange(1, self.R + 1) * self.radial)
        tail = float(special.zeta(self.alpha, self.R + 1)) / self.zeta
        return head + tail

    def first_moment_error_bound(self) -> float:
        # fsum head is exact to rounding; Hurwitz zeta is accurate to a few ulps
        return 64 * np.finfo(float).eps * max(1.0, self.first_moment())

    def tail_first_moment_bracket(self) -> tuple[float, float]:
        """Euler-Maclaurin bracket for the tail ``sum_{k>R} k * P(k)``."""
        a, R = self.alpha, self.R
        f = (R + 1.0) ** (-a)
        lo = (R + 1.0) ** (1 - a) / (a - 1) + f / 2
        hi = (R + 0.5) ** (1 - a) / (a - 1)
        return lo / self.zeta, hi / self.zeta

    def sample_radius(self, rng) -> int:
        u = rng.random()
        if u < self.radial_cdf[-1]:
            return int(np.searchsorted(self.radial_cdf, u, side="right")) + 1
        s = 1.0 + self.alpha
        while True:
            y = (self.R + 1.0) * (1.0 - rng.random()) ** (-1.0 / self.alpha)
            v = rng.random()
            if y >= _MAX_TAIL_RADIUS:
                continue
            k = math.floor(y)
            q = -k * math.expm1((1.0 - s) * math.log1p(1.0 / k)) / (s - 1.0)
            if v * self.reject_const * q <= 1.0:
                return k

    def sample_point(self, rng) -> tuple[int, int]:
        k = self.sample_radius(rng)
        j = min(int(rng.random() * 4 * k), 4 * k - 1)
        return sphere_point(k, j)

    def sample(self, rng) -> Word:
        return self.word_of(self.sample_point(rng))

    def to_dict(self, weight: float) -> dict:
        return {"kind": self.kind, "alpha": self.alpha, "R": self.R, "weight": weight}


def sphere_point(k: int, j: int) -> tuple[int, int]:
    """The ``j``-th of the ``4k`` points with ``|x| + |y| = k``."""
    q, i = divmod(j, k)
    if q == 0:
        return (k - i, i)
    if q == 1:
        return (-i, k - i)
    if q == 2:
        return (-(k - i), -i)
    return (i, -(k - i))


class GroupMeasure:
    """Finitely many atoms plus an optional countable family carrying mass ``family_weight``.

    Atoms are stored reduced and merged. Sampling draws one uniform to pick
    an atom (the family, if any, sits in the last slot) and the family
    draws further uniforms of its own.
    """

    def __init__(self, atoms: Iterable = (), family: RadialZ2 | None = None, family_weight: float = 0.0):
        merged: dict[Word, float] = {}
        for w, p in atoms:
            if isinstance(w, str):
                w = Word.parse(w)
            p = float(p)
            if not p > 0:
                raise MeasureError(f"atom {w} has non-positive mass {p}")
            w = reduce_word(w)
            merged[w] = merged.get(w, 0.0) + p
        if family is None and family_weight:
            raise MeasureError("family weight given without a family")
        if family is not None and not family_weight > 0:
            raise MeasureError("family needs positive weight")
        total = math.fsum(list(merged.values()) + [float(family_weight)])
        if abs(total - 1.0) > _INPUT_TOL:
            raise MeasureError(f"measure is not normalized: total mass {total!r}")
        self.words = tuple(merged)
        probs = np.array([merged[w] for w in self.words], dtype=np.float64)
        if len(probs) and family is None:
            # the largest atom absorbs the rounding defect
            i = int(np.argmax(probs))
            probs[i] += 1.0 - total
        self.probs = probs
        self.family = family
        self.family_weight = float(family_weight)
        if family is not None and len(probs):
            self.family_weight = 1.0 - math.fsum(probs)
        weights = list(self.probs) + ([self.family_weight] if family is not None else [])
        self.cdf = np.cumsum(weights)
        self.cdf[-1] = 1.0
        if abs(self.total_mass() - 1.0) > NORMALIZATION_TOL:
            raise MeasureError("normalization failed")

    def total_mass(self) -> float:
        return math.fsum(list(self.probs) + [self.family_weight])

    @property
    def atoms(self) -> list[tuple[Word, float]]:
        return list(zip(self.words, self.probs.tolist()))

    @property
    def finite(self) -> bool:
        return self.family is None

    def mass(self, w) -> float:
        if isinstance(w, str):
            w = Word.parse(w)
        w = reduce_word(w)
        for ww, p in zip(self.words, self.probs):
            if ww == w:
                return float(p)
        return 0.0

    def alphabet(self) -> set[str]:
        out = {l.symbol for w in self.words for l in w}
        if self.family is not None:
            out.update(self.family.symbols)
        return out

    def sample_index(self, rng) -> int:
        u = rng.random()
        return min(int(np.searchsorted(self.cdf, u, side="right")), len(self.cdf) - 1)

    def sample(self, rng) -> Word:
        """One increment; deterministic given the generator state."""
        i = self.sample_index(rng)
        if i == len(self.words):
            return self.family.sample(rng)
        return self.words[i]

    def sample_indices(self, rng, size: int) -> np.ndarray:
        """Vectorized atom indices; the same stream as repeated :meth:`sample_index`
        for finite measures."""
        if not self.finite:
            raise MeasureError("vectorized sampling needs a finite measure")
        u = rng.random(size)
        return np.minimum(np.searchsorted(self.cdf, u, side="right"), len(self.cdf) - 1)

    def to_dict(self) -> dict:
        out = {"atoms": [{"word": str(w), "prob": float(p)} for w, p in zip(self.words, self.probs)]}
        if self.family is not None:
            out["family"] = self.family.to_dict(self.family_weight)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, data: dict) -> "GroupMeasure":
        unknown = set(data) - {"atoms", "family"}
        if unknown:
            raise MeasureError(f"unknown keys in measure: {sorted(unknown)}")
        atoms = [(a["word"], a["prob"]) for a in data.get("atoms", [])]
        fam = data.get("family")
        if fam is None:
            return cls(atoms)
        if fam.get("kind") != RadialZ2.kind:
            raise MeasureError(f"unknown family kind {fam.get('kind')!r}")
        return cls(atoms, RadialZ2(fam["alpha"], fam["R"]), fam["weight"])

    @classmethod
    def from_json(cls, text: str) -> "GroupMeasure":
        return cls.from_dict(json.loads(text))

    def __repr__(self):
        parts = [f"{w}:{p:.6g}" for w, p in zip(self.words, self.probs)]
        if self.family is not None:
            parts.append(f"{self.family.kind}(alpha={self.family.alpha}, R={self.family.R}):{self.family_weight:.6g}")
        return "GroupMeasure(" + ", ".join(parts) + ")"


def word_length(w: Word) -> int:
    return len(reduce_word(w))


def first_moment(mu: GroupMeasure) -> float:
    """``sum mu(g) |g|`` with ``|g|`` the reduced word length."""
    if abs(mu.total_mass() - 1.0) > NORMALIZATION_TOL:
        raise MeasureError("measure is not normalized")
    head = math.fsum(p * len(w) for w, p in zip(mu.words, mu.probs))
    if mu.family is not None:
        head += mu.family_weight * mu.family.first_moment()
    return head


def inverse_measure(mu: GroupMeasure) -> GroupMeasure:
    """``g -> mu(g^-1)``. The radial family is symmetric, so it is kept as is."""
    return GroupMeasure(
        [(w.inverse(), p) for w, p in zip(mu.words, mu.probs)],
        mu.family,
        mu.family_weight if mu.family is not None else 0.0,
    )


def sample(mu: GroupMeasure, rng) -> Word:
    return mu.sample(rng)


def dirac(w="") -> GroupMeasure:
    return GroupMeasure([(w, 1.0)])


def uniform_measure(action: _Action) -> GroupMeasure:
    letters = action.letters()
    return GroupMeasure([(Word([l]), 1.0 / len(letters)) for l in letters])


def example1_measure() -> GroupMeasure:
    """Drifted measure on F2 acting on the comb: a 3/8, a^-1 1/8, b and b^-1 1/4 each."""
    return GroupMeasure([("a", 0.375), ("a'", 0.125), ("b", 0.25), ("b'", 0.25)])


def heavy_tail_z2(alpha: float = 1.5, R: int = 1000) -> GroupMeasure:
    return GroupMeasure([], RadialZ2(alpha, R), 1.0)


def example2_measure(alpha: float = 1.5, R: int = 1000) -> GroupMeasure:
    """``1/4 (delta_a + delta_a^-1) + 1/2 mu`` on Z*Z^2 with the radial Z^2 measure ``mu``."""
    return GroupMeasure([("a", 0.25), ("a'", 0.25)], RadialZ2(alpha, R), 0.5)


@dataclass
class StepDistributionSummary:
    center: object
    masses: np.ndarray  # sigma_x(n) for n = 0..radius
    radius: int
    beyond: float  # transition mass farther than radius

    def tail(self, n: int) -> float:
        """``sigma_x([n, inf))``."""
        return math.fsum(self.masses[n:]) + self.beyond


def step_distribution(kernel, x, radius: int) -> StepDistributionSummary:
    """Transition mass from ``x`` grouped by graph distance ``d(x, y)``."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    masses = np.zeros(radius + 1)
    beyond = []
    for y, p in kernel.transitions(x):
        d = kernel.distance(x, y)
        if d <= radius:
            masses[d] += p
        else:
            beyond.append(p)
    return StepDistributionSummary(x, masses, radius, math.fsum(beyond))


@dataclass
class ConvolutionSupport:
    powers: dict  # j -> frozenset of reduced words in supp(mu^{*j})
    truncated: bool

    def union(self) -> frozenset:
        out = set()
        for s in self.powers.values():
            out |= s
        return frozenset(out)


def convolution_power_support(mu: GroupMeasure, k: int, cap: int = 100_000) -> ConvolutionSupport:
    """Reduced supports of ``mu^{*j}`` for ``j = 1..k``; stops and flags when
    more than ``cap`` words would be stored."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if not mu.finite:
        raise MeasureError("support enumeration needs a finite measure")
    base = [w for w in mu.words]
    powers = {1: frozenset(base)}
    total = len(base)
    current = powers[1]
    for j in range(2, k + 1):
        nxt = set()
        for u in current:
            for v in base:
                nxt.add(reduce_word(u + v))
        total += len(nxt)
        if total > cap:
            return ConvolutionSupport(powers, True)
        powers[j] = frozenset(nxt)
        current = powers[j]
    return ConvolutionSupport(powers, False)
