"""The walk engine: induced random walks on Schreier graphs and chains on Z.

Each trajectory gets its own generator seed derived from the master seed
and its index, so results do not depend on how trajectories are spread over
threads. Two engines produce identical records: a compiled one for real
runs and a plain Python one that works on exact points and serves as a
reference.

Component tracking is crossing based. While the walk sits in a cut set it
has no component; when a step ends outside the cut after leaving it, the
component is the one of the boundary vertex through which it last left.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from . import _kernels
from .actions import ACTIONS, THOMPSON, CombVertex, PlaneVertex, _Action
from .chains import CounterexampleChain, MCEstimate
from .dyadic import DyadicRational
from .measures import GroupMeasure, first_moment
from .schreier import (
    DEFAULT_CAP,
    SAVCHUK_CUT,
    SAVCHUK_GATES,
    EndClass,
    Exhaustion,
    SchreierGraph,
    component_label,
)
from .words import GeneratorLetter

Z_CHAINS = {"counterexample": CounterexampleChain.standard, "simple_z": CounterexampleChain.symmetric}
STABLE_FRACTION = 0.75  # no cut visit after this fraction of the run
UNRESOLVED = "Unresolved"
# Python engine: Z^2 jumps up to this length are walked letter by letter
_PY_LETTER_JUMP = 100_000


class WalkError(ValueError):
    pass


@dataclass
class WalkConfig:
    """One batch of independent trajectories.

    ``action`` is ``thompson``, ``psi``, ``psi_prime`` (induced walks of
    ``measure``) or a chain on Z (``counterexample``, ``simple_z``).
    Exhaustion levels are the balls of the given ``radii`` around the start
    followed by the explicit ``cuts`` (``"savchuk"`` names {5/8, 3/4}).
    """

    action: str
    start: object
    steps: int
    trajectories: int
    seed: int = 0
    measure: GroupMeasure | None = None
    radii: tuple = ()
    cuts: tuple = ()
    checkpoints: tuple | None = None
    touch_cap: int = 256
    component_cap: int = DEFAULT_CAP

    def __post_init__(self):
        self.radii = tuple(int(r) for r in self.radii)
        self.cuts = tuple(self.cuts)
        if self.checkpoints is None:
            self.checkpoints = default_checkpoints(self.steps)
        self.checkpoints = tuple(int(c) for c in self.checkpoints)
        self.validate()

    @property
    def is_chain(self) -> bool:
        return self.action in Z_CHAINS

    def validate(self) -> None:
        if self.steps < 1 or self.trajectories < 1:
            raise WalkError("steps and trajectories must be >= 1")
        if list(self.checkpoints) != sorted(set(self.checkpoints)):
            raise WalkError("checkpoints must be strictly increasing")
        if self.checkpoints and (self.checkpoints[0] < 0 or self.checkpoints[-1] > self.steps):
            raise WalkError("checkpoints must lie in [0, steps]")
        if self.steps not in self.checkpoints:
            raise WalkError("the final step must be a checkpoint")
        try:
            Exhaustion(self.start, self.radii)
        except ValueError as e:
            raise WalkError(str(e)) from None
        if self.is_chain:
            if not isinstance(self.start, (int, np.integer)):
                raise WalkError("chains on Z start at an integer")
            if self.cuts:
                raise WalkError("chains on Z only support ball exhaustions")
            return
        if self.action not in ACTIONS:
            raise WalkError(f"unknown action {self.action!r}")
        act = ACTIONS[self.action]
        try:
            act.validate(self.start)
        except ValueError as e:
            raise WalkError(f"invalid start point: {e}") from None
        if self.measure is None:
            raise WalkError("induced walks need a measure")
        extra = self.measure.alphabet() - set(act.alphabet)
        if extra:
            raise WalkError(f"measure uses letters {sorted(extra)} outside the alphabet {act.alphabet}")
        if self.measure.family is not None and self.action != "psi_prime":
            raise WalkError("the radial Z^2 family only acts on the plane comb")


def default_checkpoints(steps: int) -> tuple:
    out = []
    k = 1
    while k < steps:
        out.append(k)
        k *= 2
    out.append(steps)
    return tuple(out)


def trajectory_seed(master: int, index: int) -> int:
    """32-bit seed of trajectory ``index``, independent of batch layout."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=(int(index),))
    return int(ss.generate_state(1, np.uint32)[0])


# --- records -----------------------------------------------------------------------


@dataclass
class LevelRecord:
    """Cut-set statistics of one trajectory for one exhaustion level.

    ``labels`` holds, per checkpoint, the anchor of the current component,
    ``None`` inside the cut, ``"?"`` when the exit vertex had no label.
    """

    name: str
    touches: int
    touch_times: list
    first_exit: int  # -1: never outside
    last_touch: int  # -1: never inside
    changes: int  # component changes after the first exit
    labels: list

    @property
    def final(self):
        return self.labels[-1]

    def stabilized(self, steps: int) -> bool:
        return self.final not in (None, "?") and self.last_touch <= STABLE_FRACTION * steps


@dataclass
class TrajectoryRecord:
    index: int
    seed: int
    steps: int
    checkpoints: list
    positions: list
    distances: list
    start_visits: int
    last_start_visit: int
    levels: list
    sign_flips: list | None = None
    flip_times: list | None = None
    total_flips: int | None = None

    def level(self, name_or_index) -> LevelRecord:
        if isinstance(name_or_index, int):
            return self.levels[name_or_index]
        for lv in self.levels:
            if lv.name == name_or_index:
                return lv
        raise KeyError(name_or_index)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["positions"] = [encode_point(p) for p in self.positions]
        return d


def encode_point(p) -> str:
    return str(p)


# --- exhaustion levels ----------------------------------------------------------------


@dataclass
class Level:
    name: str
    cut: frozenset
    anchors: list  # label id -> anchor string
    anchor_points: list  # label id -> boundary vertex
    boundary: dict  # boundary vertex -> label id
    start_in_cut: bool
    init_label: int
    radius: int | None = None


class WalkSetup:
    """Everything derived from a config once and shared by all trajectories."""

    def __init__(self, config: WalkConfig):
        self.config = config
        if config.is_chain:
            self.chain = Z_CHAINS[config.action]()
            self.graph = None
            self.action = None
            self.levels = self._chain_levels()
            nmax = abs(int(config.start)) + config.steps + 1
            self.up, self.down, self.flip = self.chain.tables(nmax)
            return
        self.action: _Action = ACTIONS[config.action]
        self.graph = SchreierGraph(self.action, config.start)
        self.levels = self._graph_levels()
        self._measure_arrays()
        self._level_arrays()

    # levels
    def _chain_levels(self) -> list[Level]:
        x0 = int(self.config.start)
        out = []
        for r in self.config.radii:
            cut = frozenset(range(x0 - r, x0 + r + 1))
            lo, hi = x0 - r - 1, x0 + r + 1
            out.append(Level(f"ball:{r}", cut, [str(lo), str(hi)], [lo, hi], {lo: 0, hi: 1}, True, -1, r))
        return out

    def _graph_levels(self) -> list[Level]:
        cfg = self.config
        ex = Exhaustion(cfg.start, cfg.radii)
        specs = [(f"ball:{r}", ex.level(self.graph, n), r) for n, r in enumerate(ex.radii)]
        for c in cfg.cuts:
            if c == "savchuk":
                if self.action is not THOMPSON:
                    raise WalkError("the savchuk cut belongs to the dyadic action")
                specs.append(("savchuk", SAVCHUK_CUT, None))
            else:
                cut = frozenset(c)
                for v in cut:
                    self.action.validate(v)
                specs.append((f"cut:{len(specs)}", cut, None))
        out = []
        for name, cut, r in specs:
            part = self.graph.partition(cut, cfg.component_cap)
            anchors = part.anchors
            index = {a: i for i, a in enumerate(anchors)}
            points = [None] * len(anchors)
            boundary = {}
            for v in part.boundary:
                a = part.boundary_label(v).anchor
                boundary[v] = index[a]
                if self.graph.encode(v) == a:
                    points[index[a]] = v
            inside = cfg.start in cut
            init = -1
            if not inside:
                lab = component_label(self.graph, cfg.start, cut, cfg.component_cap)
                init = index[lab.anchor] if lab is not None else -2
            out.append(Level(name, cut, anchors, points, boundary, inside, init, r))
        return out

    # arrays for the compiled engine
    def _codes(self, letter: GeneratorLetter) -> int:
        name = self.action.name
        if name == "thompson":
            return self.action.letter_code(letter)
        if name == "psi":
            return {
                ("a", False): _kernels.XP,
                ("a", True): _kernels.XM,
                ("b", False): _kernels.VERT,
                ("b", True): _kernels.VERT_INV,
            }[tuple(letter)]
        return {
            ("a", False): _kernels.VERT,
            ("a", True): _kernels.VERT_INV,
            ("b", False): _kernels.XP,
            ("b", True): _kernels.XM,
            ("c", False): _kernels.YP,
            ("c", True): _kernels.YM,
        }[tuple(letter)]

    def _measure_arrays(self) -> None:
        mu = self.config.measure
        self.cdf = np.ascontiguousarray(mu.cdf, dtype=np.float64)
        ptr = [0]
        codes = []
        for w in mu.words:
            codes.extend(self._codes(l) for l in w)
            ptr.append(len(codes))
        if mu.family is not None:
            ptr.append(len(codes))  # the family slot carries no letters
        self.atom_ptr = np.array(ptr, dtype=np.int64)
        self.atom_codes = np.array(codes, dtype=np.int8)
        fam = mu.family
        self.has_family = fam is not None
        self.head_cdf = fam.radial_cdf if fam is not None else np.ones(1)
        self.fam = (float(fam.R), fam.alpha, fam.reject_const) if fam is not None else (1.0, 1.5, 1.0)

    def key(self, v) -> int:
        if isinstance(v, DyadicRational):
            if v.exponent > 62:
                return -1
            return (1 << v.exponent) | v.numerator
        l, x, y = comb_coords(v)
        b = _kernels.COMB_BIAS
        if abs(l) >= b or abs(x) >= b or abs(y) >= b:
            return -1
        return ((l + b) << 42) | ((x + b) << 21) | (y + b)

    def _level_arrays(self) -> None:
        cut_keys, cut_ptr, cut_xyz = [], [0], []
        bnd_keys, bnd_labels, bnd_ptr = [], [], [0]
        maxlen = 0
        for lv in self.levels:
            keyed = []
            for v in lv.cut:
                k = self.key(v)
                if k < 0:
                    raise WalkError(f"cut vertex {v} is too far out for the compiled engine")
                keyed.append((k, v))
            keyed.sort()
            cut_keys.extend(k for k, _ in keyed)
            if self.action.name != "thompson":
                cut_xyz.extend(comb_coords(v) for _, v in keyed)
            cut_ptr.append(len(cut_keys))
            bk = sorted((self.key(v), lab) for v, lab in lv.boundary.items())
            bnd_keys.extend(k for k, _ in bk)
            bnd_labels.extend(lab for _, lab in bk)
            bnd_ptr.append(len(bnd_keys))
            if self.action.name == "thompson":
                maxlen = max([maxlen] + [v.exponent for v in lv.cut] + [v.exponent for v in lv.boundary])
        i64 = lambda a: np.array(a, dtype=np.int64)
        self.cut_keys, self.cut_ptr = i64(cut_keys), i64(cut_ptr)
        self.cut_xyz = np.array(cut_xyz, dtype=np.int64).reshape(-1, 3)
        self.bnd_keys, self.bnd_labels, self.bnd_ptr = i64(bnd_keys), i64(bnd_labels), i64(bnd_ptr)
        self.maxlen = maxlen
        if maxlen > 62:
            raise WalkError("cut vertices need exponents <= 62")
        if self.action.name == "thompson":
            start = self.config.start
            path = THOMPSON.path_to_root(start)
            if max(v.exponent for v, _ in path) > 62:
                raise WalkError("start point too deep for the compiled engine")
            anc = sorted((self.key(v), i) for i, (v, _) in enumerate(path))
            self.anc_keys = i64([k for k, _ in anc])
            self.anc_depth = i64([d for _, d in anc])
            self.start_key = self.key(start)

    def new_state(self):
        n = len(self.levels)
        return _kernels.new_state(
            n,
            np.array([lv.init_label for lv in self.levels], dtype=np.int64),
            [lv.start_in_cut for lv in self.levels],
            self.config.touch_cap,
        )

    def label_name(self, level: int, lab: int):
        if lab == -1:
            return None
        if lab < 0:
            return "?"
        return self.levels[level].anchors[lab]


def comb_coords(v) -> tuple[int, int, int]:
    if isinstance(v, CombVertex):
        return (v.level, v.offset, 0)
    return (v.level, v.x, v.y)


def _from_coords(action_name: str, c) -> object:
    if action_name == "psi":
        return CombVertex(int(c[0]), int(c[1]))
    return PlaneVertex(int(c[0]), int(c[1]), int(c[2]))


def _stack_of(v: DyadicRational) -> np.ndarray:
    bits = np.array([int(b) for b in format(v.numerator, "b").zfill(v.exponent)], dtype=np.uint8)
    return np.ascontiguousarray(bits[::-1])


def _dyadic_of(bits: np.ndarray) -> DyadicRational:
    msb = bits[::-1]
    packed = np.packbits(msb)
    n = int.from_bytes(packed.tobytes(), "big") >> (8 * len(packed) - len(msb))
    return DyadicRational(n, len(msb))


def _level_records(setup: WalkSetup, st, tt, ck_label) -> list[LevelRecord]:
    out = []
    for i, lv in enumerate(setup.levels):
        n = int(st[i, 4])
        times = [int(x) for x in tt[i, : min(n, tt.shape[1])]]
        labels = [setup.label_name(i, int(ck_label[c, i])) for c in range(ck_label.shape[0])]
        out.append(LevelRecord(lv.name, n, times, int(st[i, 2]), int(st[i, 3]), int(st[i, 5]), labels))
    return out


# --- compiled engine ------------------------------------------------------------------


def _compiled(setup: WalkSetup, index: int) -> TrajectoryRecord:
    cfg = setup.config
    seed = trajectory_seed(cfg.seed, index)
    cks = np.array(cfg.checkpoints, dtype=np.int64)
    st, tt = setup.new_state()
    if cfg.is_chain:
        radii = np.array([lv.radius for lv in setup.levels], dtype=np.int64)
        pos, flips, labels, ftimes, nflips, visits, last = _kernels.walk_zchain(
            seed, cfg.steps, int(cfg.start), setup.up, setup.down, setup.flip, cks, radii, st, tt, cfg.touch_cap
        )
        x0 = int(cfg.start)
        return TrajectoryRecord(
            index,
            seed,
            cfg.steps,
            list(cfg.checkpoints),
            [int(p) for p in pos],
            [abs(int(p) - x0) for p in pos],
            int(visits),
            int(last),
            _level_records(setup, st, tt, labels),
            [int(f) for f in flips],
            [int(f) for f in ftimes[: min(nflips, cfg.touch_cap)]],
            int(nflips),
        )
    if setup.action.name == "thompson":
        snap, lens, dists, labels, visits, last = _kernels.walk_dyadic(
            seed,
            cfg.steps,
            _stack_of(cfg.start),
            setup.cdf,
            setup.atom_ptr,
            setup.atom_codes,
            cks,
            setup.cut_keys,
            setup.cut_ptr,
            setup.bnd_keys,
            setup.bnd_labels,
            setup.bnd_ptr,
            setup.maxlen,
            setup.start_key,
            setup.anc_keys,
            setup.anc_depth,
            st,
            tt,
        )
        positions = []
        off = 0
        for L in lens:
            positions.append(_dyadic_of(snap[off : off + L]))
            off += L
    else:
        R, alpha, rej = setup.fam
        pos, dists, labels, visits, last = _kernels.walk_comb(
            seed,
            cfg.steps,
            np.array(comb_coords(cfg.start), dtype=np.int64),
            setup.cdf,
            setup.atom_ptr,
            setup.atom_codes,
            setup.has_family,
            setup.head_cdf,
            R,
            alpha,
            rej,
            cks,
            setup.cut_keys,
            setup.cut_ptr,
            setup.cut_xyz,
            setup.bnd_keys,
            setup.bnd_labels,
            setup.bnd_ptr,
            st,
            tt,
        )
        positions = [_from_coords(setup.action.name, p) for p in pos]
    return TrajectoryRecord(
        index,
        seed,
        cfg.steps,
        list(cfg.checkpoints),
        positions,
        [int(d) for d in dists],
        int(visits),
        int(last),
        _level_records(setup, st, tt, labels),
    )


# --- reference engine -------------------------------------------------------------------


class _Tracker:
    """Python mirror of the compiled cut-set bookkeeping."""

    def __init__(self, setup: WalkSetup):
        self.setup = setup
        self.levels = setup.levels
        n = len(self.levels)
        self.cap = setup.config.touch_cap
        self.inside = [lv.start_in_cut for lv in self.levels]
        self.label = [lv.init_label for lv in self.levels]
        self.first_exit = [-1 if lv.start_in_cut else 0 for lv in self.levels]
        self.last_touch = [0 if lv.start_in_cut else -1 for lv in self.levels]
        self.touches = [1 if lv.start_in_cut else 0 for lv in self.levels]
        self.times = [[0] if lv.start_in_cut and self.cap > 0 else [] for lv in self.levels]
        self.changes = [0] * n
        self.pend = [None] * n

    def touch(self, i, t):
        if self.last_touch[i] != t:
            if len(self.times[i]) < self.cap:
                self.times[i].append(t)
            self.touches[i] += 1
            self.last_touch[i] = t
        self.inside[i] = True

    def outside(self, i, t, lab):
        if lab != self.label[i]:
            if self.label[i] >= 0:
                self.changes[i] += 1
            self.label[i] = lab
        if self.first_exit[i] < 0:
            self.first_exit[i] = t
        self.inside[i] = False

    def vertex(self, t, v):
        for i, lv in enumerate(self.levels):
            if v in lv.cut:
                self.touch(i, t)
            elif self.inside[i]:
                self.pend[i] = lv.boundary.get(v, -2)
                self.inside[i] = False

    def commit(self, t):
        for i in range(len(self.levels)):
            if not self.inside[i] and self.pend[i] is not None:
                self.outside(i, t, self.pend[i])
            self.pend[i] = None

    def current(self):
        return [-1 if self.inside[i] else self.label[i] for i in range(len(self.levels))]

    def records(self, ck_labels) -> list[LevelRecord]:
        out = []
        for i, lv in enumerate(self.levels):
            labels = [self.setup.label_name(i, row[i]) for row in ck_labels]
            out.append(
                LevelRecord(
                    lv.name,
                    self.touches[i],
                    list(self.times[i]),
                    self.first_exit[i],
                    self.last_touch[i],
                    self.changes[i],
                    labels,
                )
            )
        return out


def _plane_path_exit(lv: Level, v: PlaneVertex, dx: int, dy: int):
    """(touched, exit vertex or None) for the L-shaped path of a long jump."""
    ax = abs(dx)
    total = ax + abs(dy)
    x1, y1 = v.x + dx, v.y + dy
    last = 0
    for c in lv.cut:
        if c.level != v.level:
            continue
        idx = 0
        if c.y == v.y and min(v.x, x1) <= c.x <= max(v.x, x1):
            idx = abs(c.x - v.x)
        elif c.x == x1 and min(v.y, y1) <= c.y <= max(v.y, y1):
            idx = ax + abs(c.y - v.y)
        last = max(last, idx)
    if last == 0 or last == total:
        return last > 0, None, last
    n = last + 1
    sx = 1 if dx > 0 else -1
    sy = 1 if dy > 0 else -1
    if n <= ax:
        return True, PlaneVertex(v.level, v.x + sx * n, v.y), last
    return True, PlaneVertex(v.level, x1, v.y + sy * (n - ax)), last


def _reference(setup: WalkSetup, index: int) -> TrajectoryRecord:
    cfg = setup.config
    seed = trajectory_seed(cfg.seed, index)
    rs = np.random.RandomState(seed)
    tr = _Tracker(setup)
    cks = set(cfg.checkpoints)
    positions, dists, ck_labels, flips_at = [], [], [], []
    visits, last_visit = 1, 0
    start = cfg.start
    v = start

    def snapshot(t):
        positions.append(v)
        if cfg.is_chain:
            dists.append(abs(v - start))
            flips_at.append(nflips)
        else:
            dists.append(setup.action.distance(start, v))
        ck_labels.append(tr.current())

    nflips = 0
    flip_times = []
    if 0 in cks:
        snapshot(0)
    if cfg.is_chain:
        for t in range(1, cfg.steps + 1):
            n = abs(v)
            sgn = 1 if v >= 0 else -1
            u = rs.random_sample()
            if u < setup.flip[n]:
                v = -v
                if len(flip_times) < cfg.touch_cap:
                    flip_times.append(t)
                nflips += 1
            elif u < setup.flip[n] + setup.up[n]:
                v = sgn * (n + 1)
            else:
                v = sgn * (n - 1)
            for i, lv in enumerate(setup.levels):
                if abs(v - start) <= lv.radius:
                    tr.touch(i, t)
                else:
                    tr.outside(i, t, 1 if v > start else 0)
            if v == start:
                visits += 1
                last_visit = t
            if t in cks:
                snapshot(t)
        return TrajectoryRecord(
            index,
            seed,
            cfg.steps,
            list(cfg.checkpoints),
            positions,
            dists,
            visits,
            last_visit,
            tr.records(ck_labels),
            flips_at,
            flip_times,
            nflips,
        )
    act = setup.action
    mu = cfg.measure
    fam = mu.family
    b, c = (fam.symbols if fam is not None else ("b", "c"))
    for t in range(1, cfg.steps + 1):
        i = mu.sample_index(rs)
        if i == len(mu.words):
            dx, dy = fam.sample_point(rs)
            if abs(dx) + abs(dy) <= _PY_LETTER_JUMP:
                for letter in fam.word_of((dx, dy)):
                    v = act.apply(v, letter)
                    tr.vertex(t, v)
            else:
                for k, lv in enumerate(setup.levels):
                    touched, exit_v, _ = _plane_path_exit(lv, v, dx, dy)
                    if touched:
                        tr.touch(k, t)
                        if exit_v is not None:
                            tr.pend[k] = lv.boundary.get(exit_v, -2)
                            tr.inside[k] = False
                    elif tr.inside[k]:
                        first = PlaneVertex(v.level, v.x + (1 if dx > 0 else -1), v.y) if dx else PlaneVertex(
                            v.level, v.x, v.y + (1 if dy > 0 else -1)
                        )
                        tr.pend[k] = lv.boundary.get(first, -2)
                        tr.inside[k] = False
                v = PlaneVertex(v.level, v.x + dx, v.y + dy)
        else:
            for letter in mu.words[i]:
                v = act.apply(v, letter)
                tr.vertex(t, v)
        tr.commit(t)
        if v == start:
            visits += 1
            last_visit = t
        if t in cks:
            snapshot(t)
    return TrajectoryRecord(
        index, seed, cfg.steps, list(cfg.checkpoints), positions, dists, visits, last_visit, tr.records(ck_labels)
    )


def run_walks(
    config: WalkConfig, threads: int | None = None, engine: str = "compiled", setup: WalkSetup | None = None
) -> list[TrajectoryRecord]:
    """Run all trajectories of ``config``; records come back sorted by index."""
    setup = setup or WalkSetup(config)
    fn = {"compiled": _compiled, "python": _reference}.get(engine)
    if fn is None:
        raise WalkError(f"unknown engine {engine!r}")
    threads = threads or os.cpu_count() or 1
    idx = range(config.trajectories)
    if threads == 1:
        return [fn(setup, i) for i in idx]
    if engine == "compiled":
        fn(setup, 0)  # compile once before the pool starts
    with ThreadPoolExecutor(max_workers=threads) as pool:
        records = list(pool.map(lambda i: fn(setup, i), idx))
    return sorted(records, key=lambda r: r.index)


# --- analysis ---------------------------------------------------------------------------


def classify_end(record: TrajectoryRecord, level=-1):
    """Anchor of the component the trajectory settled in at ``level``, or
    ``"Unresolved"``. The ``savchuk`` level maps to :class:`EndClass`."""
    lv = record.level(level)
    if not lv.stabilized(record.steps):
        return EndClass.Unresolved if lv.name == "savchuk" else UNRESOLVED
    if lv.name == "savchuk":
        return SAVCHUK_GATES[DyadicRational.parse(lv.final)]
    return lv.final


def stabilized_fraction(records, level=-1) -> float:
    return sum(r.level(level).stabilized(r.steps) for r in records) / len(records)


@dataclass
class ExitMeasureEstimate:
    classes: list  # [{name, count, lo, hi}] excluding Unresolved
    unresolved: int
    total: int
    nontrivial: bool

    def count(self, name) -> int:
        name = getattr(name, "value", name)
        for c in self.classes:
            if c["name"] == name:
                return c["count"]
        return self.unresolved if name == UNRESOLVED else 0

    def to_dict(self) -> dict:
        return {"classes": self.classes, "unresolved": self.unresolved, "total": self.total, "nontrivial": self.nontrivial}


def wilson_interval(k: int, n: int) -> tuple[float, float]:
    ci = stats.binomtest(k, n).proportion_ci(confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def exit_measure(records, classifier=None, names=None) -> ExitMeasureEstimate:
    """Empirical law of the settled component with 95% Wilson intervals."""
    if not records:
        raise WalkError("no records")
    classifier = classifier or classify_end
    counts: dict = {}
    unresolved = 0
    for r in records:
        c = classifier(r)
        c = getattr(c, "value", c)
        if c == UNRESOLVED:
            unresolved += 1
        else:
            counts[c] = counts.get(c, 0) + 1
    for n in names or ():
        counts.setdefault(getattr(n, "value", n), 0)
    n = len(records)
    classes = []
    for name in sorted(counts):
        lo, hi = wilson_interval(counts[name], n)
        classes.append({"name": name, "count": counts[name], "lo": lo, "hi": hi})
    positive = sum(1 for c in classes if c["lo"] > 0)
    return ExitMeasureEstimate(classes, unresolved, n, positive >= 2)


def thompson_exit_measure(records, level="savchuk") -> ExitMeasureEstimate:
    names = [e for e in EndClass if e is not EndClass.Unresolved]
    return exit_measure(records, lambda r: classify_end(r, level), names)


def green_estimate(action: _Action, measure: GroupMeasure, start, trials: int, horizon: int, seed: int = 0, threads=None) -> MCEstimate:
    """Visits to ``start`` within ``horizon`` steps (a lower bound for the Green function)."""
    cfg = WalkConfig(action.name, start, horizon, trials, seed, measure, checkpoints=(horizon,))
    recs = run_walks(cfg, threads)
    v = np.array([r.start_visits for r in recs], dtype=np.float64)
    se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else float("nan")
    return MCEstimate(float(v.mean()), se, len(v), horizon, True)


@dataclass
class ComponentChangeStats:
    mean: float
    se: float
    exited: int
    bound: float
    green: float
    cut_size: int
    first_moment: float

    @property
    def ok(self) -> bool:
        return self.mean <= self.bound + 3 * self.se

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ok"] = self.ok
        return d


def component_change_stats(records, level, green: MCEstimate, measure: GroupMeasure, cut_size: int) -> ComponentChangeStats:
    """Mean component changes after the first exit against ``G |K| first moment``."""
    vals = [r.level(level).changes for r in records if r.level(level).first_exit >= 0]
    if not vals:
        raise WalkError("no trajectory leaves the cut set")
    v = np.array(vals, dtype=np.float64)
    se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    m1 = first_moment(measure)
    return ComponentChangeStats(float(v.mean()), se, len(v), green.mean * cut_size * m1, green.mean, cut_size, m1)


def sign_flip_profile(records) -> dict:
    """Per-checkpoint medians and means of cumulative sign flips and of |position|."""
    if not records or records[0].sign_flips is None:
        raise WalkError("sign flips exist only for chains on Z")
    F = np.array([r.sign_flips for r in records], dtype=np.float64)
    P = np.abs(np.array([r.positions for r in records], dtype=np.float64))
    return {
        "checkpoints": list(records[0].checkpoints),
        "median_flips": np.median(F, axis=0).tolist(),
        "mean_flips": F.mean(axis=0).tolist(),
        "median_abs_position": np.median(P, axis=0).tolist(),
    }


def revisit_profile(records) -> dict:
    """Fraction of trajectories that visit the start again after each checkpoint."""
    cks = records[0].checkpoints
    return {
        "checkpoints": list(cks),
        "fraction": [sum(r.last_start_visit > t for r in records) / len(records) for t in cks],
    }


def inverse_system_check(records, setup: WalkSetup) -> dict:
    """On trajectories stabilized at two nested ball levels, the finer anchor
    must lie in the coarser settled component."""
    balls = [i for i, lv in enumerate(setup.levels) if lv.radius is not None]
    balls.sort(key=lambda i: setup.levels[i].radius)
    checked = consistent = 0
    for r in records:
        for a, b in zip(balls, balls[1:]):
            la, lb = r.levels[a], r.levels[b]
            if not (la.stabilized(r.steps) and lb.stabilized(r.steps)):
                continue
            checked += 1
            coarse, fine = setup.levels[a], setup.levels[b]
            point = fine.anchor_points[fine.anchors.index(lb.final)]
            if setup.graph is None:
                got = coarse.anchors[1 if point > setup.config.start else 0]
            else:
                lab = component_label(setup.graph, point, coarse.cut, setup.config.component_cap)
                got = lab.anchor if lab is not None else None
            consistent += got == la.final
    return {"checked": checked, "consistent": consistent}


# --- output ---------------------------------------------------------------------------


CSV_HEADER = ["trajectory", "step", "position", "distance", "component_anchor", "sign_flips"]


def records_csv(records, level=-1) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        lv = r.level(level) if r.levels else None
        for j, t in enumerate(r.checkpoints):
            anchor = "" if lv is None or lv.labels[j] is None else lv.labels[j]
            flips = "" if r.sign_flips is None else r.sign_flips[j]
            w.writerow([r.index, t, encode_point(r.positions[j]), r.distances[j], anchor, flips])
    return buf.getvalue()


def summary(records, setup: WalkSetup) -> dict:
    cfg = setup.config
    out: dict = {
        "action": cfg.action,
        "steps": cfg.steps,
        "trajectories": cfg.trajectories,
        "seed": cfg.seed,
        "stable_fraction_threshold": STABLE_FRACTION,
        "levels": [],
        "revisits": revisit_profile(records),
    }
    for i, lv in enumerate(setup.levels):
        em = thompson_exit_measure(records, i) if lv.name == "savchuk" else exit_measure(records, lambda r: classify_end(r, i))
        ch = [r.levels[i].changes for r in records if r.levels[i].first_exit >= 0]
        out["levels"].append(
            {
                "name": lv.name,
                "cut_size": len(lv.cut),
                "anchors": lv.anchors,
                "stabilized": stabilized_fraction(records, i),
                "exit_measure": em.to_dict(),
                "mean_changes_after_exit": float(np.mean(ch)) if ch else None,
            }
        )
    if len(setup.levels) > 1:
        out["inverse_system"] = inverse_system_check(records, setup)
    if cfg.is_chain:
        out["sign_flips"] = sign_flip_profile(records)
    d = np.array([r.distances for r in records], dtype=np.float64)
    out["mean_distance"] = d.mean(axis=0).tolist()
    return out
