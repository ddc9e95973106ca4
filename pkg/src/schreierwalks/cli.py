"""Command-line entry point: ``schreierwalks <command> [flags]``.

Commands write their outputs plus a ``manifest.json`` (command, resolved
config, seed, version, SHA-256 of every output) into ``--out``. Exit codes:
0 success, 1 a built-in check failed, 2 usage or config error (a JSON error
object goes to stderr).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .actions import ACTIONS, ActionError
from .chains import (
    BirthDeathChain,
    CounterexampleChain,
    IntegerLine,
    exact_green_birthdeath,
    expected_sign_flips,
    first_moment_series,
    mc_green_birthdeath,
    transience_series,
    uniform_irreducibility,
)
from .measures import (
    GroupMeasure,
    MeasureError,
    RadialZ2,
    dirac,
    example1_measure,
    example2_measure,
    uniform_measure,
)
from .schreier import SchreierGraph, export_csv, export_dot, parse_direction, verify_embedding
from .simulate import Z_CHAINS, WalkConfig, WalkError, WalkSetup, records_csv, run_walks, summary


class ConfigError(ValueError):
    pass


EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2

_SECTIONS = {
    "action": {"name", "start"},
    "measure": {"preset", "file", "atoms", "alpha", "R", "family_weight"},
    "walk": {"steps", "trajectories", "seed", "radii", "cuts", "checkpoints", "touch_cap", "component_cap"},
    "output": {"level", "records"},
}


# --- config ----------------------------------------------------------------------


def _check_keys(data: dict, allowed: set, where: str) -> None:
    unknown = set(data) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


def load_measure(section: dict, base: Path, action_name: str) -> GroupMeasure:
    _check_keys(section, _SECTIONS["measure"], "[measure]")
    given = [k for k in ("preset", "file", "atoms") if k in section]
    if len(given) != 1:
        raise ConfigError("[measure] needs exactly one of preset, file, atoms")
    if "file" in section:
        path = base / section["file"]
        if not path.is_file():
            raise ConfigError(f"measure file not found: {path}")
        return GroupMeasure.from_json(path.read_text())
    if "atoms" in section:
        atoms = [(a["word"], a["prob"]) for a in section["atoms"]]
        if "alpha" in section:
            fam = RadialZ2(section["alpha"], section.get("R", 1000))
            return GroupMeasure(atoms, fam, section.get("family_weight", 1.0 - math.fsum(p for _, p in atoms)))
        return GroupMeasure(atoms)
    preset = section["preset"]
    if preset == "uniform":
        return uniform_measure(ACTIONS[action_name])
    if preset == "example1":
        return example1_measure()
    if preset == "example2":
        return example2_measure(section.get("alpha", 1.5), section.get("R", 1000))
    if preset == "identity":
        return dirac("")
    raise ConfigError(f"unknown measure preset {preset!r}")


def load_config(path: str, seed: int | None = None) -> tuple[WalkConfig, dict]:
    """Parse a TOML run file into a :class:`WalkConfig` and the resolved dict."""
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = tomllib.loads(p.read_text())
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"invalid TOML: {e}") from None
    _check_keys(data, set(_SECTIONS), "config")
    for name, allowed in _SECTIONS.items():
        _check_keys(data.get(name, {}), allowed, f"[{name}]")
    act = data.get("action", {})
    if "name" not in act:
        raise ConfigError("[action] name is required")
    name = act["name"]
    walk = dict(data.get("walk", {}))
    if seed is not None:
        walk["seed"] = seed
    for key in ("steps", "trajectories"):
        if key not in walk:
            raise ConfigError(f"[walk] {key} is required")
    try:
        if name in Z_CHAINS:
            start = int(act.get("start", 0))
            measure = None
            if "measure" in data:
                raise ConfigError("chains on Z take no measure")
            cuts = ()
        elif name in ACTIONS:
            action = ACTIONS[name]
            if "start" not in act:
                raise ConfigError("[action] start is required")
            start = action.decode(str(act["start"]))
            measure = load_measure(data.get("measure", {}), p.parent, name)
            cuts = tuple(
                c if c == "savchuk" else frozenset(action.decode(s) for s in c) for c in walk.get("cuts", ())
            )
        else:
            raise ConfigError(f"unknown action {name!r}")
        cfg = WalkConfig(
            name,
            start,
            int(walk["steps"]),
            int(walk["trajectories"]),
            int(walk.get("seed", 0)),
            measure,
            tuple(walk.get("radii", ())),
            cuts,
            tuple(walk["checkpoints"]) if "checkpoints" in walk else None,
            int(walk.get("touch_cap", 256)),
            int(walk.get("component_cap", 10_000)),
        )
    except (ActionError, MeasureError, WalkError, KeyError, TypeError) as e:
        raise ConfigError(str(e)) from None
    resolved = {
        "action": {"name": name, "start": str(start)},
        "measure": None if measure is None else measure.to_dict(),
        "walk": {
            "steps": cfg.steps,
            "trajectories": cfg.trajectories,
            "seed": cfg.seed,
            "radii": list(cfg.radii),
            "cuts": [c if c == "savchuk" else sorted(str(v) for v in c) for c in cfg.cuts],
            "checkpoints": list(cfg.checkpoints),
            "touch_cap": cfg.touch_cap,
            "component_cap": cfg.component_cap,
        },
        "output": dict(data.get("output", {})),
    }
    return cfg, resolved


# --- outputs ---------------------------------------------------------------------


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"


@dataclass
class RunManifest:
    """What was run and digests of what it wrote; rerunning reproduces the digests."""

    command: str
    config: dict
    seed: int | None
    version: str
    outputs: dict

    def to_json(self) -> str:
        return _dump(asdict(self))

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls(**json.loads(Path(path).read_text()))

    def verify(self, directory) -> list[str]:
        """Names of outputs in ``directory`` whose SHA-256 no longer matches."""
        d = Path(directory)
        return [
            name
            for name, digest in self.outputs.items()
            if not (d / name).is_file() or hashlib.sha256((d / name).read_bytes()).hexdigest() != digest
        ]


class _Outputs:
    def __init__(self, out: str | None):
        self.dir = Path(out) if out else None
        self.files: dict[str, str] = {}
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def write(self, name: str, text: str, echo: bool = False) -> None:
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()
        if self.dir is not None:
            (self.dir / name).write_text(text)
        if echo or self.dir is None:
            sys.stdout.write(text)

    def manifest(self, command: str, config: dict, seed) -> None:
        m = RunManifest(command, config, seed, __version__, dict(sorted(self.files.items())))
        if self.dir is not None:
            (self.dir / "manifest.json").write_text(m.to_json())


def _right_ray_fraction(records, level=-1) -> float:
    """Share of trajectories settled in a component that starts on a right half-line."""
    from .simulate import classify_end, UNRESOLVED

    n = 0
    for r in records:
        a = classify_end(r, level)
        if a != UNRESOLVED and ACTIONS["psi"].decode(a).offset > 0:
            n += 1
    return n / len(records)


# --- commands ----------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg, resolved = load_config(args.config, args.seed)
    setup = WalkSetup(cfg)
    records = run_walks(cfg, args.threads, setup=setup)
    out = _Outputs(args.out)
    level = resolved["output"].get("level", -1)
    if resolved["output"].get("records", True):
        out.write("records.csv", records_csv(records, level))
    summ = summary(records, setup)
    if cfg.action == "psi" and setup.levels:
        summ["right_ray_fraction"] = _right_ray_fraction(records, level)
    out.write("summary.json", _dump(summ), echo=args.out is not None and args.verbose)
    out.manifest("simulate", resolved, cfg.seed)
    return EXIT_OK


def counterexample_report(N: int, trials: int, horizon: int, seed: int, green_N: int = 10**7) -> dict:
    chain = CounterexampleChain.standard()
    bd = BirthDeathChain.reflected(chain)
    report = {
        "N": N,
        "first_moment": first_moment_series(N, chain).to_dict(),
        "transience": transience_series(bd, N).to_dict(),
        "sign_flips": expected_sign_flips(N, chain).to_dict(),
    }
    ui = uniform_irreducibility(chain, IntegerLine(), 1, 0, 1000, lambda x: abs(x) >= 2)
    report["uniform_irreducibility"] = {"c": ui.c, "K": ui.k_max, "edges": ui.edges, "failures": len(ui.failures)}
    table = []
    for n in range(1, 11):
        g = exact_green_birthdeath(bd, n, green_N)
        row = {"n": n, "exact_lo": g.lo, "exact_hi": g.hi}
        if trials > 0:
            est = mc_green_birthdeath(bd, n, trials, seed + n, level=2 * n + horizon, N=green_N)
            row.update({"mc_mean": est.mean, "mc_se": est.se, "rel_error": abs(est.mean - g.mid) / g.mid})
        table.append(row)
    report["green"] = table
    return report


def cmd_counterexample(args) -> int:
    if args.N < 2:
        raise ConfigError("N must be >= 2")
    report = counterexample_report(args.N, args.trials, args.horizon, args.seed or 0)
    out = _Outputs(args.out)
    out.write("certificates.json", _dump(report))
    out.manifest(
        "counterexample", {"N": args.N, "trials": args.trials, "horizon": args.horizon}, args.seed or 0
    )
    verdicts = (report["first_moment"]["verdict"], report["transience"]["verdict"], report["sign_flips"]["verdict"])
    sys.stderr.write(f"conditions (moment, transience, flips): {', '.join(verdicts)}\n")
    ok = verdicts == ("Converges", "Converges", "Diverges")
    if args.trials > 0:
        ok = ok and all(r["rel_error"] < 0.05 for r in report["green"])
    return EXIT_OK if ok else EXIT_CHECK


def cmd_graph(args) -> int:
    if args.radius < 0:
        raise ConfigError("radius must be >= 0")
    if args.action not in ACTIONS:
        raise ConfigError(f"unknown action {args.action!r}")
    action = ACTIONS[args.action]
    default_center = {"thompson": "3/4", "psi": "(0,0)", "psi_prime": "(0,0,0)"}[args.action]
    try:
        center = action.decode(args.center or default_center)
    except (ActionError, ValueError) as e:
        raise ConfigError(str(e)) from None
    g = SchreierGraph(action)
    out = _Outputs(args.out)
    if args.format == "dot":
        out.write("graph.dot", export_dot(g, center, args.radius))
    else:
        out.write("graph.csv", export_csv(g, center, args.radius))
    out.manifest("graph", {"action": args.action, "center": str(center), "radius": args.radius, "format": args.format}, None)
    return EXIT_OK


def cmd_embed_check(args) -> int:
    if args.radius < 0:
        raise ConfigError("radius must be >= 0")
    try:
        direction = parse_direction(args.direction)
    except ValueError as e:
        raise ConfigError(str(e)) from None
    rep = verify_embedding(args.radius, direction)
    out = _Outputs(args.out)
    out.write("embedding.json", _dump(rep.to_dict()))
    out.manifest("embed-check", {"radius": args.radius, "direction": direction.value}, None)
    return EXIT_OK if not rep.violations and rep.injective else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (overrides the config)")
    common.add_argument("--threads", type=int, default=os.cpu_count(), help="worker threads")
    common.add_argument("--out", default=None, help="output directory (default: print to stdout)")

    p = argparse.ArgumentParser(prog="schreierwalks", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="run walks from a TOML config")
    s.add_argument("--config", required=True)
    s.add_argument("--verbose", action="store_true", help="also print the summary")
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("counterexample", parents=[common], help="certificates for the chain on Z")
    c.add_argument("--N", type=int, default=10**6, help="series length")
    c.add_argument("--trials", type=int, default=10**5, help="Monte Carlo trials per Green value (0: none)")
    c.add_argument("--horizon", type=int, default=16, help="absorption level offset: level = 2n + horizon")
    c.set_defaults(func=cmd_counterexample)

    g = sub.add_parser("graph", parents=[common], help="export a ball of a Schreier graph")
    g.add_argument("--action", default="thompson", choices=sorted(ACTIONS))
    g.add_argument("--center", default=None)
    g.add_argument("--radius", type=int, default=4)
    g.add_argument("--format", choices=("dot", "csv"), default="dot")
    g.set_defaults(func=cmd_graph)

    e = sub.add_parser("embed-check", parents=[common], help="verify a branch embedding")
    e.add_argument("--radius", type=int, default=12)
    e.add_argument("--direction", default="LeftIntoRight")
    e.set_defaults(func=cmd_embed_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        return args.func(args)
    except ConfigError as e:
        sys.stderr.write(json.dumps({"error": "config", "message": str(e)}) + "\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
