"""Random walks on Schreier graphs: Thompson's group F on dyadic rationals,
free-product actions on combs, and a transient chain on Z with unbounded
sign flips."""

__version__ = "0.1.0"
