"""Lazily generated Schreier graphs, balls, cut-set components and the
five-way end decomposition of the dyadic Schreier graph of F."""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import threading
from collections import deque
from dataclasses import dataclass
from typing import Iterable

from .actions import THOMPSON, ActionPoint, _Action
from .dyadic import DyadicRational, dyadic
from .words import GeneratorLetter, Word

DEFAULT_CAP = 10_000
MAX_CAP = 1_000_000


class SchreierGraph:
    """Schreier graph of ``action`` for its standard generating set.

    Adjacency is generated on demand and memoized. Every vertex has exactly
    ``2 * len(alphabet)`` incident half-edges, loops and multi-edges included.
    """

    def __init__(self, action: _Action, basepoint: ActionPoint | None = None):
        self.action = action
        self.letters = action.letters()
        self.basepoint = basepoint
        self._adj: dict = {}
        self._partitions: dict = {}
        self._lock = threading.Lock()

    def encode(self, v) -> str:
        return self.action.encode(v)

    def neighbors(self, v) -> list[tuple[GeneratorLetter, ActionPoint]]:
        nb = self._adj.get(v)
        if nb is None:
            self.action.validate(v)
            nb = [(l, self.action.apply(v, l)) for l in self.letters]
            with self._lock:
                self._adj[v] = nb
        return nb

    def ball(self, center, r: int) -> set:
        return set(self.ball_distances(center, r))

    def ball_distances(self, center, r: int, avoid: frozenset = frozenset()) -> dict:
        """Breadth-first distances from ``center`` up to ``r``, never entering ``avoid``."""
        if r < 0:
            raise ValueError("radius must be non-negative")
        dist = {center: 0}
        frontier = [center]
        for d in range(1, r + 1):
            nxt = []
            for v in frontier:
                for _, w in self.neighbors(v):
                    if w not in dist and w not in avoid:
                        dist[w] = d
                        nxt.append(w)
            frontier = nxt
            if not frontier:
                break
        return dist

    def graph_distance(self, u, v, cap: int) -> int | None:
        """Bidirectional BFS distance, or ``None`` when it exceeds ``cap``."""
        if u == v:
            return 0
        seen_u, seen_v = {u: 0}, {v: 0}
        fu, fv = [u], [v]
        du = dv = 0
        while fu and fv and du + dv < cap:
            # grow the smaller frontier
            if len(fu) <= len(fv):
                du += 1
                nxt = []
                for x in fu:
                    for _, y in self.neighbors(x):
                        if y in seen_v:
                            return du + seen_v[y]
                        if y not in seen_u:
                            seen_u[y] = du
                            nxt.append(y)
                fu = nxt
            else:
                dv += 1
                nxt = []
                for x in fv:
                    for _, y in self.neighbors(x):
                        if y in seen_u:
                            return dv + seen_u[y]
                        if y not in seen_v:
                            seen_v[y] = dv
                            nxt.append(y)
                fv = nxt
        return None

    def edges(self, vertices: Iterable) -> list[tuple[ActionPoint, GeneratorLetter, ActionPoint]]:
        """Edges ``v -s-> v.s`` with both ends in ``vertices`` (positive letters only),
        sorted by source encoding then letter."""
        vs = set(vertices)
        out = []
        for v in vs:
            for l, w in self.neighbors(v):
                if not l.inverted and w in vs:
                    out.append((v, l, w))
        out.sort(key=lambda e: (self.encode(e[0]), e[1].symbol, self.encode(e[2])))
        return out

    def partition(self, cut, cap: int = DEFAULT_CAP) -> "CutPartition":
        key = frozenset(cut)
        part = self._partitions.get(key)
        if part is None or part.cap < cap:
            part = CutPartition(self, key, cap)
            with self._lock:
                self._partitions[key] = part
        return part


@dataclass(frozen=True)
class Exhaustion:
    """Nested balls ``K_n = B(basepoint, radii[n])`` with strictly increasing radii."""

    basepoint: object
    radii: tuple

    def __post_init__(self):
        radii = tuple(int(r) for r in self.radii)
        if any(r < 0 for r in radii) or list(radii) != sorted(set(radii)):
            raise ValueError(f"radii must be non-negative and strictly increasing, got {self.radii}")
        object.__setattr__(self, "radii", radii)

    def __len__(self):
        return len(self.radii)

    def level(self, graph: SchreierGraph, n: int) -> frozenset:
        return frozenset(graph.ball(self.basepoint, self.radii[n]))


def cut_id(graph: SchreierGraph, cut: Iterable) -> str:
    names = sorted(graph.encode(v) for v in cut)
    return hashlib.sha256("\n".join(names).encode()).hexdigest()[:12]


@dataclass(frozen=True)
class ComponentLabel:
    """Component of the complement of a finite cut set, named by its anchor:
    the least boundary vertex (neighbour of the cut) in the component, under
    string order of the serialized vertices."""

    cut: str
    anchor: str

    def to_json(self, vertex: str) -> str:
        return json.dumps({"vertex": vertex, "cut": self.cut, "anchor": self.anchor})


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        p = self.parent
        while p[i] != i:
            p[i] = p[p[i]]
            i = p[i]
        return i

    def union(self, i, j):
        i, j = self.find(i), self.find(j)
        if i != j:
            self.parent[max(i, j)] = min(i, j)


class CutPartition:
    """Boundary vertices of a cut grouped by connectivity in the complement.

    Groups are found by one multi-source BFS from all boundary vertices,
    visiting at most ``cap`` vertices; searches that meet are merged.
    Components touching the cut only through paths longer than the explored
    region stay split; this is the finite-exhaustion approximation.
    """

    def __init__(self, graph: SchreierGraph, cut: frozenset, cap: int):
        if not cut:
            raise ValueError("cut set must be non-empty")
        self.graph = graph
        self.cut = cut
        self.cap = cap
        self.cut_id = cut_id(graph, cut)
        boundary = set()
        for k in cut:
            for _, w in graph.neighbors(k):
                if w not in cut:
                    boundary.add(w)
        self.boundary = sorted(boundary, key=graph.encode)
        uf = _UnionFind(len(self.boundary))
        owner = {v: i for i, v in enumerate(self.boundary)}
        queue = deque(self.boundary)
        while queue and len(owner) < cap:
            v = queue.popleft()
            ov = owner[v]
            for _, w in graph.neighbors(v):
                if w in cut:
                    continue
                ow = owner.get(w)
                if ow is None:
                    owner[w] = ov
                    queue.append(w)
                elif uf.find(ow) != uf.find(ov):
                    uf.union(ow, ov)
        self.exhausted = not queue
        blocks: dict[int, list] = {}
        for i, v in enumerate(self.boundary):
            blocks.setdefault(uf.find(i), []).append(v)
        self.anchor_of_root = {
            root: min(graph.encode(v) for v in members) for root, members in blocks.items()
        }
        self.labels: dict = {
            v: ComponentLabel(self.cut_id, self.anchor_of_root[uf.find(o)]) for v, o in owner.items()
        }

    @property
    def anchors(self) -> list[str]:
        return sorted(set(self.anchor_of_root.values()))

    def boundary_label(self, v) -> ComponentLabel:
        return self.labels[v]

    def lookup(self, v, cap: int) -> ComponentLabel | None:
        lab = self.labels.get(v)
        if lab is not None:
            return lab
        seen = {v}
        queue = deque([v])
        found = None
        while queue and len(seen) <= cap:
            x = queue.popleft()
            for _, w in self.graph.neighbors(x):
                if w in self.cut or w in seen:
                    continue
                lab = self.labels.get(w)
                if lab is not None:
                    found = lab
                    break
                seen.add(w)
                queue.append(w)
            if found is not None:
                break
        if found is None:
            return None
        for x in seen:
            self.labels[x] = found
        return found


def component_label(
    graph: SchreierGraph, v, cut: Iterable, cap: int = DEFAULT_CAP, max_cap: int = MAX_CAP
) -> ComponentLabel | None:
    """Label of the component of ``graph - cut`` containing ``v``.

    Searches outward from ``v`` until it meets a labelled vertex. The search
    budget doubles from ``cap`` up to ``max_cap``; ``None`` means unresolved.
    """
    cut = frozenset(cut)
    if v in cut:
        raise ValueError(f"{graph.encode(v)} lies in the cut set")
    part = graph.partition(cut, min(cap, max_cap))
    while True:
        lab = part.lookup(v, cap)
        if lab is not None or cap >= max_cap:
            return lab
        cap = min(2 * cap, max_cap)


# --- the dyadic Schreier graph of F -----------------------------------------


class EndClass(enum.Enum):
    LeftBranch = "LeftBranch"
    RightBranch = "RightBranch"
    Ray58 = "Ray58"
    RayTowardsOne = "RayTowardsOne"
    RayTowardsZero = "RayTowardsZero"
    Unresolved = "Unresolved"


SAVCHUK_CUT = frozenset({dyadic(5, 3), dyadic(3, 2)})

# boundary vertex of the cut {5/8, 3/4} -> class of its component
SAVCHUK_GATES = {
    dyadic(13, 4): EndClass.LeftBranch,
    dyadic(9, 4): EndClass.RightBranch,
    dyadic(3, 3): EndClass.Ray58,
    dyadic(7, 3): EndClass.RayTowardsOne,
    dyadic(1, 1): EndClass.RayTowardsZero,
}


def savchuk_end_class(v: DyadicRational) -> EndClass:
    """Which of the five components of the graph minus {5/8, 3/4} contains ``v``.

    Follows parent links towards the root; the last vertex before the cut
    names the component.
    """
    THOMPSON.validate(v)
    if v in SAVCHUK_CUT:
        raise ValueError(f"{v} lies in the cut set")
    while True:
        p, _ = THOMPSON.parent(v)
        if p in SAVCHUK_CUT:
            return SAVCHUK_GATES[v]
        v = p


class Direction(enum.Enum):
    LeftIntoRight = "LeftIntoRight"
    RightIntoLeft = "RightIntoLeft"


_EMBED = {
    Direction.LeftIntoRight: (dyadic(13, 4), dyadic(25, 5), EndClass.LeftBranch),
    Direction.RightIntoLeft: (dyadic(9, 4), dyadic(11, 4), EndClass.RightBranch),
}


def parse_direction(d) -> Direction:
    if isinstance(d, Direction):
        return d
    key = str(d).replace("-", "").replace("_", "").lower()
    for member in Direction:
        if member.value.lower() == key:
            return member
    raise ValueError(f"unknown direction {d!r}")


def branch_word(v: DyadicRational, root: DyadicRational) -> Word:
    """Word ``w`` with ``root.w == v`` following the tree geodesic; ``v`` must
    lie below ``root``."""
    letters = []
    while v != root:
        step = THOMPSON.parent(v)
        if step is None or step[0] in SAVCHUK_CUT:
            raise ValueError(f"{v} is not in the branch rooted at {root}")
        v, l = step
        letters.append(l.inverse())
    return Word(reversed(letters))


def embed_branch(v: DyadicRational, direction) -> DyadicRational:
    """Image of ``v`` under the label-preserving embedding of one branch into the other."""
    direction = parse_direction(direction)
    root, image_root, _ = _EMBED[direction]
    w = branch_word(v, root)
    x = image_root
    for l in w:
        x = THOMPSON.apply(x, l)
        if x in SAVCHUK_CUT:
            raise ValueError(f"image path of {v} leaves the target branch")
    return x


@dataclass
class EmbeddingReport:
    direction: str
    radius: int
    checked: int
    edges_checked: int
    violations: list
    injective: bool

    def to_dict(self):
        return {
            "direction": self.direction,
            "radius": self.radius,
            "checked": self.checked,
            "edges_checked": self.edges_checked,
            "violations": self.violations,
            "injective": self.injective,
        }


def verify_embedding(radius: int, direction, graph: SchreierGraph | None = None) -> EmbeddingReport:
    """Check ``embed(v).s == embed(v.s)`` on every branch edge within ``radius`` of the branch root."""
    direction = parse_direction(direction)
    if radius < 0:
        raise ValueError("radius must be non-negative")
    g = graph or SchreierGraph(THOMPSON)
    root = _EMBED[direction][0]
    ball = g.ball_distances(root, radius, avoid=SAVCHUK_CUT)
    images = {v: embed_branch(v, direction) for v in ball}
    violations = []
    edges = 0
    for v in sorted(ball, key=g.encode):
        for l, w in g.neighbors(v):
            if w in SAVCHUK_CUT:
                continue
            edges += 1
            img_w = images[w] if w in images else embed_branch(w, direction)
            lhs = THOMPSON.apply(images[v], l)
            if lhs != img_w:
                violations.append({"vertex": str(v), "letter": str(l), "got": str(lhs), "expected": str(img_w)})
    injective = len(set(images.values())) == len(images)
    return EmbeddingReport(direction.value, radius, len(ball), edges, violations, injective)


# --- export ------------------------------------------------------------------

THOMPSON_STYLE = {"A": "dashed", "B": "solid"}


def export_dot(graph: SchreierGraph, center, radius: int, style: dict | None = None) -> str:
    """DOT digraph of the ball, edges ``v -> v.s`` labelled by generator."""
    if style is None:
        style = THOMPSON_STYLE if graph.action is THOMPSON else {}
    verts = sorted(graph.ball(center, radius), key=graph.encode)
    lines = [f"digraph {graph.action.name} {{"]
    for v in verts:
        name = graph.encode(v)
        lines.append(f'  "{name}" [label="{name}"];')
    for v, l, w in graph.edges(verts):
        attrs = f'label="{l.symbol}"'
        if l.symbol in style:
            attrs += f", style={style[l.symbol]}"
        lines.append(f'  "{graph.encode(v)}" -> "{graph.encode(w)}" [{attrs}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_csv(graph: SchreierGraph, center, radius: int) -> str:
    """Edge list ``source,letter,target``; comb vertices are quoted since they contain commas."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["source", "letter", "target"])
    for v, l, w in graph.edges(graph.ball(center, radius)):
        writer.writerow([graph.encode(v), l.symbol, graph.encode(w)])
    return buf.getvalue()

