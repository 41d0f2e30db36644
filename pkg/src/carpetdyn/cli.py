"""Command-line front end.

    carpetdyn periodic --config cfg.json --seed 0 --out runs/periodic
    carpetdyn build    --config cfg.json --seed 0 --out runs/build
    carpetdyn render   --config cfg.json --seed 0 --out runs/render
    carpetdyn mixing   --config cfg.json --seed 0 --out runs/mixing
    carpetdyn spec     --config cfg.json --seed 0 --out runs/spec

Each run writes ``config.json`` (the parsed config with defaults filled in),
``run.json`` (command and seed) and its results into ``--out``.  Outputs
depend only on (config, seed).  Exit status: 0 success, 1 a verdict failed,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from fractions import Fraction
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import measure, render, speclab, toral, tower

EXIT_OK, EXIT_VERDICT, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configs


@dataclass(frozen=True)
class StageSource:
    """Either a stage file or parameters to build one."""

    path: Optional[str] = None
    max_period: int = 6
    depth: int = 1
    r0: float = 0.05


@dataclass(frozen=True)
class PeriodicConfig:
    matrix: List[List[int]] = field(default_factory=lambda: [[2, 1], [1, 1]])
    periods: List[int] = field(default_factory=lambda: list(range(1, 9)))
    list_points_up_to: int = 4


@dataclass(frozen=True)
class BuildConfig:
    matrix: List[List[int]] = field(default_factory=lambda: [[2, 1], [1, 1]])
    max_period: int = 8
    depth: int = 10
    r0: float = 0.05
    grid: int = 64
    delta: float = 0.0625
    density_depths: Optional[List[int]] = None


@dataclass(frozen=True)
class RenderConfig:
    stage: str = "stage.json"
    format: str = "png"
    size: int = 1024
    orbits: int = 0
    orbit_steps: int = 200
    phase_portrait: bool = False
    phase_orbit: int = 0


@dataclass(frozen=True)
class MixingConfig:
    matrix: List[List[int]] = field(default_factory=lambda: [[2, 1], [1, 1]])
    k: List[int] = field(default_factory=lambda: [1, 0])
    l: Optional[List[int]] = None
    n_max: int = 20
    birkhoff_n: int = 100000
    observable: str = "cos2pix"
    birkhoff_tol: float = 0.005
    stage: StageSource = field(default_factory=lambda: StageSource(max_period=10, depth=5))
    samples: int = 100000
    depth_grid: int = 3


@dataclass(frozen=True)
class SpecConfig:
    matrix: List[List[int]] = field(default_factory=lambda: [[2, 1], [1, 1]])
    control_epsilons: List[float] = field(default_factory=lambda: [0.2, 0.1])
    control_instances: int = 20
    control_max_len: int = 4
    grid: int = 32
    saddle_draws: int = 10000
    saddle_b: float = 2.0
    saddle_epsilon: float = 0.08
    stage: StageSource = field(default_factory=StageSource)
    visit_starts: int = 200
    visit_steps: int = 2000
    visit_tolerance: float = 0.05
    alpha: float = 0.09
    delta: float = 0.0002
    contradiction_starts: int = 200
    contradiction_length: int = 500
    adversarial_length: int = 6


COMMANDS = {
    "periodic": PeriodicConfig,
    "build": BuildConfig,
    "render": RenderConfig,
    "mixing": MixingConfig,
    "spec": SpecConfig,
}


def _check_type(name: str, value, tp):
    """Light type check for the field kinds used in the configs."""
    tp_s = str(tp)
    if tp_s.startswith("Optional["):
        if value is None:
            return value
        tp = tp_s = tp_s[len("Optional["):-1]
    elif value is None:
        raise ConfigError(f"field '{name}': must not be null")
    if tp in (int, "int") or tp_s == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"field '{name}': expected an integer, got {value!r}")
    elif tp_s == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"field '{name}': expected a number, got {value!r}")
        return float(value)
    elif tp_s == "bool":
        if not isinstance(value, bool):
            raise ConfigError(f"field '{name}': expected true/false, got {value!r}")
    elif tp_s == "str":
        if not isinstance(value, str):
            raise ConfigError(f"field '{name}': expected a string, got {value!r}")
    elif "List[List[int]]" in tp_s:
        if not (isinstance(value, list) and all(isinstance(r, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in r) for r in value)):
            raise ConfigError(f"field '{name}': expected a list of integer lists, got {value!r}")
    elif "List[int]" in tp_s:
        if not (isinstance(value, list) and all(isinstance(v, int) and not isinstance(v, bool) for v in value)):
            raise ConfigError(f"field '{name}': expected a list of integers, got {value!r}")
    elif "List[float]" in tp_s:
        if not (isinstance(value, list) and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value)):
            raise ConfigError(f"field '{name}': expected a list of numbers, got {value!r}")
        return [float(v) for v in value]
    return value


def from_dict(cls, doc, prefix: str = ""):
    """Build a config dataclass from a JSON object, naming any bad field."""
    if not isinstance(doc, dict):
        raise ConfigError(f"{prefix or 'config'}: expected a JSON object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(doc) - set(fields))
    if unknown:
        raise ConfigError(f"unknown field '{prefix}{unknown[0]}'")
    kw = {}
    for name, f in fields.items():
        if name not in doc:
            continue
        v = doc[name]
        if f.type in ("StageSource",) or f.type is StageSource:
            kw[name] = from_dict(StageSource, v, prefix=f"{prefix}{name}.")
        else:
            kw[name] = _check_type(prefix + name, v, f.type)
    return cls(**kw)


def to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def parse_config(cls, text: str):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from None
    return from_dict(cls, doc)


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def _matrix(cfg) -> toral.ToralAutomorphism:
    m = cfg.matrix
    if len(m) != 2 or any(len(r) != 2 for r in m):
        raise ConfigError("field 'matrix': expected a 2x2 integer matrix")
    try:
        return toral.ToralAutomorphism.from_matrix(toral.IntMatrix2.from_rows(m))
    except ValueError as e:
        raise ConfigError(f"field 'matrix': {e}") from None


def _write_csv(path: Path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), newline="")


def _load_stage(src: StageSource, aut: toral.ToralAutomorphism, base: Path) -> tower.CarpetStage:
    if src.path:
        p = Path(src.path)
        if not p.is_absolute():
            p = base / p
        if not p.exists():
            raise ConfigError(f"field 'stage.path': stage file {str(p)!r} not found")
        return tower.CarpetStage.loads(p.read_text())
    return tower.build_stage(tower.plan_orbits(aut, src.max_period), src.depth, src.r0)


# ---------------------------------------------------------------------------
# commands; each returns an exit code


def cmd_periodic(cfg: PeriodicConfig, seed: int, out: Path, base: Path) -> int:
    aut = _matrix(cfg)
    rows, pts_rows, ok = [], [], True
    for n in cfg.periods:
        if n < 1:
            raise ConfigError(f"field 'periods': period {n} must be >= 1")
        try:
            pts = toral.periodic_points(aut, n)
            lf = toral.lefschetz_count(aut, n)
        except toral.MatrixOverflowError as e:
            raise toral.MatrixOverflowError(f"period {n}: {e}") from None
        exact = toral.exact_period_points(aut, n)
        match = len(pts) == lf
        ok &= match
        rows.append([n, len(pts), lf, "yes" if match else "no", len(exact), len(exact) // n])
        if n <= cfg.list_points_up_to:
            for p in pts:
                pts_rows.append([n, toral.point_to_str(p), toral.minimal_period(aut, p)])
    _write_csv(out / "periodic.csv", ["period", "count", "lefschetz", "match", "exact_period_points", "exact_period_orbits"], rows)
    _write_csv(out / "points.csv", ["period", "point", "minimal_period"], pts_rows)
    (out / "report.json").write_text(dumps({"ok": ok, "periods": cfg.periods}))
    return EXIT_OK if ok else EXIT_VERDICT


def cmd_build(cfg: BuildConfig, seed: int, out: Path, base: Path) -> int:
    aut = _matrix(cfg)
    plan = tower.plan_orbits(aut, cfg.max_period)
    try:
        stage = tower.build_stage(plan, cfg.depth, cfg.r0)
    except tower.InsufficientOrbits as e:
        raise ConfigError(str(e)) from None
    (out / "stage.json").write_text(stage.dumps())
    rep = tower.carpet_invariants(stage, grid=cfg.grid, delta=cfg.delta, depths=cfg.density_depths)
    (out / "invariants.json").write_text(dumps(rep))
    return EXIT_OK if rep["ok"] else EXIT_VERDICT


def cmd_render(cfg: RenderConfig, seed: int, out: Path, base: Path) -> int:
    if cfg.format not in ("png", "svg"):
        raise ConfigError(f"field 'format': unsupported format {cfg.format!r}")
    p = Path(cfg.stage)
    if not p.is_absolute():
        p = base / p
    if not p.exists():
        raise ConfigError(f"field 'stage': stage file {str(p)!r} not found")
    stage = tower.CarpetStage.loads(p.read_text())
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    orbits = []
    if cfg.orbits:
        starts = tower.sample_regular(stage, rng, cfg.orbits)
        for xy in starts.xy:
            orbits.append(render.orbit_positions(stage, xy, cfg.orbit_steps))
    (out / f"stage.{cfg.format}").write_bytes(render.render_stage(stage, cfg.size, cfg.format, orbits))
    if cfg.phase_portrait:
        if not 0 <= cfg.phase_orbit < stage.depth:
            raise ConfigError(f"field 'phase_orbit': stage has no blown orbit {cfg.phase_orbit}")
        (out / f"phase.{cfg.format}").write_bytes(render.render_phase_portrait(stage, cfg.phase_orbit, cfg.size // 2, cfg.format))
    return EXIT_OK


_OBSERVABLES = {
    "cos2pix": (lambda p: math.cos(2 * math.pi * p[0]), 0.0),
    "one": (lambda p: 1.0, 1.0),
    "disc": (lambda p: 1.0 if (p[0] - 0.5) ** 2 + (p[1] - 0.5) ** 2 < 0.04 else 0.0, math.pi * 0.04),
}


def cmd_mixing(cfg: MixingConfig, seed: int, out: Path, base: Path) -> int:
    aut = _matrix(cfg)
    if cfg.observable not in _OBSERVABLES:
        raise ConfigError(f"field 'observable': expected one of {sorted(_OBSERVABLES)}")
    seeds = np.random.SeedSequence(seed).spawn(2)
    k = tuple(cfg.k)
    l = tuple(cfg.l) if cfg.l is not None else k
    corr = []
    for n in range(0, cfg.n_max + 1):
        c = measure.character_correlation(aut, k, l, n)
        corr.append([n, c.real, c.imag])
    _write_csv(out / "correlations.csv", ["n", "re", "im"], corr)
    nonzero = [n for n, re, im in corr if n >= 1 and (re != 0 or im != 0)]

    f, target = _OBSERVABLES[cfg.observable]
    start = tuple(float(v) for v in np.random.default_rng(seeds[0]).random(2))
    step = measure.torus_step(aut)
    x, running, series = start, [], []
    checkpoints = sorted({int(round(10 ** e)) for e in np.arange(1, math.log10(cfg.birkhoff_n) + 1e-9, 0.5)} | {cfg.birkhoff_n})
    vals = []
    for j in range(cfg.birkhoff_n):
        vals.append(f(x))
        x = step(x)
        if j + 1 in checkpoints:
            series.append([j + 1, math.fsum(vals) / (j + 1)])
    avg = series[-1][1]
    _write_csv(out / "birkhoff.csv", ["n", "average"], series)

    stage = _load_stage(cfg.stage, aut, base)
    support = measure.nu_support_evidence(stage, cfg.samples, cfg.depth_grid, seed=int(seeds[1].generate_state(1)[0]))
    support.pop("counts")
    birk_ok = abs(avg - target) <= cfg.birkhoff_tol
    rep = {
        "correlations": {"k": list(k), "l": list(l), "n_max": cfg.n_max, "nonzero_n": nonzero, "ok": l != k or not nonzero},
        "birkhoff": {"observable": cfg.observable, "start": list(start), "n": cfg.birkhoff_n, "average": avg, "target": target, "ok": birk_ok},
        "support": support,
        "note": "correlation decay and equidistribution are evidence of mixing, not a proof",
    }
    rep["ok"] = bool(rep["correlations"]["ok"] and birk_ok and support["all_positive"])
    (out / "mixing.json").write_text(dumps(rep))
    return EXIT_OK if rep["ok"] else EXIT_VERDICT


def cmd_spec(cfg: SpecConfig, seed: int, out: Path, base: Path) -> int:
    aut = _matrix(cfg)
    ss = np.random.SeedSequence(seed).spawn(5)
    rep = {}

    rng = np.random.default_rng(ss[0])
    controls = []
    for eps in cfg.control_epsilons:
        N = speclab.gap_for_epsilon(aut, eps)
        found = 0
        for _ in range(cfg.control_instances):
            inst = speclab.random_instance(rng, eps, N, max_len=cfg.control_max_len)
            found += speclab.trace_search(speclab.TorusSystem(aut), inst, cfg.grid).found
        controls.append({"epsilon": eps, "gap_N": N, "instances": cfg.control_instances, "found": found})
    rep["controls"] = {"rows": controls, "ok": all(c["found"] == c["instances"] for c in controls)}

    rng = np.random.default_rng(ss[1])
    model = speclab.SaddleModel.from_b(cfg.saddle_b, cfg.saddle_epsilon)
    eps_b = float(model.epsilon_box)
    bad, ms = 0, []
    for _ in range(cfg.saddle_draws):
        p = rng.uniform(-eps_b, eps_b)
        q = rng.uniform(-1, 1) * abs(p)
        if q == 0:
            continue
        m, ok = speclab.saddle_exit_time(model, p, q)
        bad += not ok
        ms.append(m)
    wm, wok = speclab.saddle_exit_time(speclab.SaddleModel(Fraction(1, 2), Fraction(2), Fraction(8, 100)), Fraction(8, 100), Fraction(8, 10000))
    rep["saddle"] = {
        "draws": cfg.saddle_draws,
        "failures": bad,
        "max_m": max(ms) if ms else 0,
        "worked_instance": {"a": "1/2", "b": "2", "epsilon": "2/25", "p": "2/25", "q": "1/1250", "m": wm, "bound_ok": wok},
        "ok": bad == 0 and wm == 3 and wok,
    }

    stage = _load_stage(cfg.stage, aut, base)
    if stage.depth < 1:
        raise ConfigError("field 'stage': the carpet experiments need depth >= 1")
    setup = speclab.saddle_setup(stage)
    u, s = speclab.periodic_regular_point(stage, setup)
    W = speclab.BallRegion(u.xy, speclab.clear_radius(stage, setup, u.xy))
    rng = np.random.default_rng(ss[2])
    half = cfg.visit_starts // 2
    starts = tower.PointBatch.concat(
        [tower.sample_regular(stage, rng, cfg.visit_starts - half), speclab.sample_near_leaf(stage, setup, rng, half)]
    )
    vf = speclab.visit_fraction(stage, starts, cfg.visit_steps, setup.U, W, setup.D, power=setup.power, tol=cfg.visit_tolerance)
    per = vf.pop("per_start")
    _write_csv(
        out / "visits.csv",
        ["start", "fraction", "returns", "excursions", "max_excursion_fraction"],
        [[i, p["fraction"], p["returns"], p["excursions"], p["max_excursion_fraction"]] for i, p in enumerate(per)],
    )
    rep["setup"] = setup.to_json()
    rep["visit"] = vf

    ce = speclab.contradiction_experiment(
        stage, cfg.alpha, u, cfg.delta, setup, starts=cfg.contradiction_starts, length=cfg.contradiction_length,
        seed=int(ss[3].generate_state(1)[0]),
    )
    rep["contradiction"] = ce

    adv = speclab.adversarial_trace(stage, setup, u, length=cfg.adversarial_length, grid=cfg.grid)
    rows = []
    for g in adv["gaps"]:
        for t, d in enumerate(g.pop("defect_series")):
            rows.append([g["gap"], t, d])
    _write_csv(out / "adversarial_defects.csv", ["gap", "constrained_time", "distance"], rows)
    rep["adversarial"] = adv
    rep["ok"] = bool(rep["controls"]["ok"] and rep["saddle"]["ok"] and vf["ok"] and ce["ok"] and adv["ok"])
    (out / "spec.json").write_text(dumps(rep))
    return EXIT_OK if rep["ok"] else EXIT_VERDICT


HANDLERS = {
    "periodic": cmd_periodic,
    "build": cmd_build,
    "render": cmd_render,
    "mixing": cmd_mixing,
    "spec": cmd_spec,
}


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="carpetdyn", description="Blown-up cat map experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON config; omitted fields take defaults")
        p.add_argument("--seed", type=_u64, default=0)
        p.add_argument("--out", type=Path, required=True)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    cls = COMMANDS[args.command]
    try:
        if args.config is not None:
            if not args.config.exists():
                raise ConfigError(f"config file {str(args.config)!r} not found")
            cfg = parse_config(cls, args.config.read_text())
            base = args.config.parent
        else:
            cfg = cls()
            base = Path(".")
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "config.json").write_text(dumps(to_dict(cfg)))
        (args.out / "run.json").write_text(dumps({"command": args.command, "seed": args.seed}))
        return HANDLERS[args.command](cfg, args.seed, args.out, base)
    except (
        ConfigError,
        tower.ScheduleInfeasible,
        toral.MatrixOverflowError,
        toral.NotHyperbolicError,
        render.UnsupportedFormat,
    ) as e:
        print(f"carpetdyn {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
