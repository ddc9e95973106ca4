"""Formal words over a generator alphabet."""

from __future__ import annotations

from typing import Iterable, NamedTuple


class GeneratorLetter(NamedTuple):
    symbol: str
    inverted: bool = False

    def inverse(self) -> "GeneratorLetter":
        return GeneratorLetter(self.symbol, not self.inverted)

    def __str__(self):
        return self.symbol + ("'" if self.inverted else "")


class Word(tuple):
    """Immutable sequence of :class:`GeneratorLetter`.

    Serialized form concatenates the letters and marks inverses with an
    apostrophe, e.g. ``"ABA'"``; the empty word is ``""``.
    """

    def __new__(cls, letters: Iterable[GeneratorLetter] = ()):
        return super().__new__(cls, (GeneratorLetter(*l) for l in letters))

    @classmethod
    def parse(cls, text: str) -> "Word":
        letters = []
        for ch in text.strip():
            if ch == "'":
                if not letters or letters[-1].inverted:
                    raise ValueError(f"misplaced inverse mark in {text!r}")
                letters[-1] = letters[-1].inverse()
            elif ch.isalpha():
                letters.append(GeneratorLetter(ch, False))
            elif ch.isspace():
                continue
            else:
                raise ValueError(f"bad character {ch!r} in word {text!r}")
        return cls(letters)

    def __add__(self, other):
        return Word(tuple.__add__(self, tuple(other)))

    def inverse(self) -> "Word":
        """Reverse the word and invert each letter."""
        return Word(l.inverse() for l in reversed(self))

    def __str__(self):
        return "".join(str(l) for l in self)

    def __repr__(self):
        return f"Word({str(self)!r})"


def reduce_word(word: Iterable[GeneratorLetter]) -> Word:
    """Cancel adjacent letter/inverse pairs until none remain.

    For free groups this is the normal form. For groups with relations it
    only gives an upper bound on word length.
    """
    out: list[GeneratorLetter] = []
    for l in word:
        l = GeneratorLetter(*l)
        if out and out[-1].symbol == l.symbol and out[-1].inverted != l.inverted:
            out.pop()
        else:
            out.append(l)
    return Word(out)


def word(text: str) -> Word:
    return Word.parse(text)
