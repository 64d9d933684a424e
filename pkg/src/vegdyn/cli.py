"""Command-line experiment runner.

Usage::

    vegdyn <task|recipe> --config <path> --out <dir> [--seed S] [--set k=v ...]

Tasks run one solver or analysis from a JSON configuration. Recipes are
preset configurations for the standard desk-scale experiments; for a recipe
the configuration file is optional and is merged over the recipe's defaults.
Every run writes its CSV artifacts and a ``manifest.json`` into the output
directory.

Exit status: 0 on success, 2 on configuration errors, 3 when a solver aborts
numerically (artifacts written so far keep a ``.partial`` suffix).
"""
from __future__ import annotations

import argparse
import copy
import csv
import json
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import __version__, analysis, gke, meanfield, qsd, ssa
from .model import PHI_DEFAULT, ModelValidationError, SigmoidParams, build_model

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------

NUM, INT, STR, BOOL, ANY = "number", "integer", "string", "boolean", "any"
NUMS, INTS, LIST, GRID = "number list", "integer list", "list", "grid"

SIGMOID = {"lo": NUM, "hi": NUM, "center": NUM, "slope": NUM}
BLOCK = {"lo": NUM, "hi": NUM, "law": ANY}

SCHEMA: dict = {
    "task": STR,
    "model": {"family": STR, "mu": NUM, "nu": NUM, "phi": SIGMOID, "omega": SIGMOID,
              "states": LIST, "transitions": LIST},
    "domain": {"type": STR, "M": INT, "weights": NUMS, "L": NUM, "measure": STR, "a": NUM, "b": NUM,
               "boundary": STR},
    "kernels": {"jbar": NUM, "beta": NUM, "sigma": NUM, "W_matrix": LIST, "J_matrix": LIST},
    "initial": {"law": ANY, "blocks": [BLOCK], "per_patch": LIST, "assignment": STR},
    "sim": {"N": INT, "t_end": NUM, "seed": INT, "replicas": INT, "snapshot_times": GRID,
            "max_events": INT, "record_events": BOOL},
    "gke": {"h": NUM, "nodes": INT, "boundary": STR, "t_end": NUM, "snapshot_times": GRID},
    "meanfield": {"location": NUM, "replicas": INT, "checkpoints": GRID},
    "qsd": {"N_list": INTS, "jbar_grid": GRID, "time_scale": STR, "tol": NUM},
    "equilibria": {"jbar_grid": GRID},
    "basin": {"jbar": NUMS, "N": INT, "t_end": NUM, "fractions": GRID, "seeds": INT},
    "converge": {"N_list": INTS, "replicas": INT, "t_end": NUM, "h": NUM, "exclude_absorbed": BOOL},
    "chaos": {"N": INT, "site_pairs": INT, "t": NUM, "replicas": INT},
    "fronts": {"threshold": NUM, "forest_side": STR},
    "sweep": {"jbar": NUMS},
    "periods": {"state": STR, "window": NUMS, "hysteresis": NUM},
}

MODEL_SECTIONS = ("model", "domain", "kernels")

# Sections (and keys inside them) a task cannot run without.
REQUIRED = {
    "simulate": {"model": (), "domain": (), "kernels": (), "sim": ("N", "t_end")},
    "gke": {"model": (), "domain": (), "kernels": (), "gke": ("t_end",)},
    "meanfield": {"model": (), "domain": (), "kernels": (), "gke": ("t_end",), "meanfield": ("checkpoints",)},
    "qsd": {"qsd": ("N_list", "jbar_grid")},
    "equilibria": {"equilibria": ("jbar_grid",)},
    "converge": {"model": (), "domain": (), "kernels": (), "converge": ("N_list", "t_end")},
    "chaos": {"model": (), "domain": (), "kernels": (), "chaos": ("N", "t")},
    "fronts": {"model": (), "domain": (), "kernels": (), "gke": ("t_end", "snapshot_times")},
}

# Defaults filled into task sections that are present in the configuration.
SECTION_DEFAULTS = {
    "sim": {"seed": 0, "replicas": 1, "snapshot_times": [], "max_events": 50_000_000, "record_events": True},
    "gke": {"h": 0.01, "nodes": 200},
    "meanfield": {"location": 0.0, "replicas": 10_000},
    "qsd": {"time_scale": "printed", "tol": 1e-10},
    "converge": {"replicas": 20, "h": 1e-3, "exclude_absorbed": False},
    "chaos": {"site_pairs": 3, "replicas": 1000},
    "fronts": {"threshold": 0.5, "forest_side": "right"},
    "periods": {"state": "F", "hysteresis": 0.02},
}

# Sections a target reads even when the configuration leaves them out.
IMPLIED_SECTIONS = {"fronts": ("fronts",), "fig4": ("periods",), "fig5_pinning": ("fronts",)}


class ConfigError(Exception):
    def __init__(self, problems):
        self.problems = [problems] if isinstance(problems, str) else list(problems)
        super().__init__("; ".join(self.problems))


def _type_ok(value, kind) -> bool:
    is_num = isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind == ANY:
        return True
    if kind == NUM:
        return is_num
    if kind == INT:
        return isinstance(value, int) and not isinstance(value, bool)
    if kind == STR:
        return isinstance(value, str)
    if kind == BOOL:
        return isinstance(value, bool)
    if kind == LIST:
        return isinstance(value, list)
    if kind == NUMS:
        return isinstance(value, list) and all(_type_ok(v, NUM) for v in value)
    if kind == INTS:
        return isinstance(value, list) and all(_type_ok(v, INT) for v in value)
    if kind == GRID:
        if isinstance(value, dict):
            return set(value) == {"start", "stop", "num"} and _type_ok(value["num"], INT) and \
                _type_ok(value["start"], NUM) and _type_ok(value["stop"], NUM)
        return _type_ok(value, NUMS)
    raise AssertionError(kind)


def _validate(node, schema, path, problems):
    if isinstance(schema, list):
        if not isinstance(node, list):
            problems.append(f"{path}: expected a list")
            return
        for i, item in enumerate(node):
            _validate(item, schema[0], f"{path}[{i}]", problems)
        return
    if isinstance(schema, dict):
        if not isinstance(node, dict):
            problems.append(f"{path or '<root>'}: expected an object")
            return
        for key, value in node.items():
            sub = f"{path}.{key}" if path else key
            if key not in schema:
                problems.append(f"{sub}: unknown key")
            else:
                _validate(value, schema[key], sub, problems)
        return
    if not _type_ok(node, schema):
        problems.append(f"{path}: expected {schema}, got {json.dumps(node)}")


def validate_config(cfg) -> None:
    """Raise ConfigError listing every unknown key or mistyped value."""
    problems: list[str] = []
    _validate(cfg, SCHEMA, "", problems)
    if problems:
        raise ConfigError(problems)


def grid_values(spec) -> list[float]:
    """Expand a grid given as a list or as {start, stop, num}."""
    if isinstance(spec, dict):
        return [float(v) for v in np.linspace(spec["start"], spec["stop"], spec["num"])]
    return [float(v) for v in spec]


def load_config(path) -> dict:
    """Parse a JSON configuration file; errors carry line/column diagnostics."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc
    if not text.strip():
        raise ConfigError(f"{path}: configuration is empty")
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return cfg


def apply_override(cfg: dict, assignment: str) -> None:
    """Apply one ``dotted.key=value`` override; the value is parsed as JSON when possible."""
    if "=" not in assignment:
        raise ConfigError(f"--set {assignment!r}: expected key=value")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigError(f"--set {assignment!r}: malformed key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    node = cfg
    for p in parts[:-1]:
        child = node.setdefault(p, {})
        if not isinstance(child, dict):
            raise ConfigError(f"--set {key}: {p} is not a section")
        node = child
    node[parts[-1]] = value


def deep_merge(base: dict, top: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in top.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(target: str, cfg: dict, overrides=(), seed=None) -> dict:
    """Recipe defaults, then the file, then overrides and seed; validated and defaulted."""
    if target in RECIPES:
        cfg = deep_merge(RECIPES[target].defaults, cfg)
    else:
        cfg = copy.deepcopy(cfg)
    for ov in overrides:
        apply_override(cfg, ov)
    if seed is not None:
        cfg.setdefault("sim", {})["seed"] = int(seed)
    cfg.setdefault("sim", {}).setdefault("seed", 0)
    cfg["task"] = target
    validate_config(cfg)
    for section in IMPLIED_SECTIONS.get(target, ()):
        cfg.setdefault(section, {})
    for section, defaults in SECTION_DEFAULTS.items():
        if section in cfg:
            cfg[section] = {**defaults, **cfg[section]}
    if target in REQUIRED:
        missing = []
        for section, keys in REQUIRED[target].items():
            if section not in cfg:
                missing.append(f"{section}: section required by task {target!r}")
                continue
            missing.extend(f"{section}.{k}: required by task {target!r}" for k in keys if k not in cfg[section])
        if missing:
            raise ConfigError(missing)
    return cfg


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _model(cfg):
    try:
        return build_model({k: cfg[k] for k in (*MODEL_SECTIONS, "initial") if k in cfg})
    except ModelValidationError as exc:
        raise ConfigError(list(exc.problems)) from exc


def _phi(cfg) -> SigmoidParams:
    raw = cfg.get("model", {}).get("phi")
    return SigmoidParams(**{**PHI_DEFAULT.__dict__, **raw}) if raw else PHI_DEFAULT


def _grid(model, cfg):
    g = cfg.get("gke", {})
    if model.measure.is_discrete:
        return gke.make_grid(model.measure)
    return gke.make_grid(model.measure, g.get("nodes", 200), g.get("boundary", model.boundary))


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(x) -> str:
    return repr(float(x))


def _snapshot_times(cfg, t_end):
    times = grid_values(cfg["sim"].get("snapshot_times", []))
    return [t for t in times if t <= t_end + 1e-12]


def _occupancy_rows(times, fractions, labels):
    for t, row in zip(times, fractions):
        for lab, f in zip(labels, row):
            yield [_fmt(t), lab, _fmt(f)]


class Run:
    """Collects artifacts of one invocation."""

    def __init__(self, out: Path):
        self.out = out
        self.artifacts: list[str] = []

    def path(self, name: str) -> Path:
        self.artifacts.append(name)
        return self.out / name


class Aborted(Exception):
    def __init__(self, message, partials):
        super().__init__(message)
        self.partials = partials  # list of (file name, writer callable)


def _integrate(model, grid, cfg, every_step=False, name="field.csv"):
    """GKE run over [0, gke.t_end]; snapshots at gke.snapshot_times unless ``every_step``."""
    g = cfg["gke"]
    t_end = g["t_end"]
    snapshot_times = None
    if not every_step and "snapshot_times" in g:
        snapshot_times = grid_values(g["snapshot_times"])
    try:
        return gke.integrate(model, grid, None, g["h"], t_end, snapshot_times=snapshot_times)
    except gke.NumericalAbort as exc:
        partial = exc.partial
        raise Aborted(str(exc), [(name, partial.to_csv)] if partial is not None else []) from exc


def _simulate(model, N, t_end, seed, snaps, cfg, name="events.csv"):
    sim = cfg.get("sim", {})
    try:
        return ssa.simulate(model, N, t_end, seed, snapshot_times=snaps,
                            max_events=sim.get("max_events", 50_000_000),
                            record_events=sim.get("record_events", True))
    except ssa.EventCapExceeded as exc:
        raise Aborted(str(exc), [(name, exc.trajectory.to_csv)]) from exc


# ---------------------------------------------------------------------------
# Tasks
# ---------------------------------------------------------------------------


def task_simulate(cfg, run: Run):
    model = _model(cfg)
    sim = cfg["sim"]
    snaps = _snapshot_times(cfg, sim["t_end"])
    root = ssa.seed_sequence(sim["seed"])
    reps = sim["replicas"]
    for r in range(reps):
        tag = "" if reps == 1 else f"_r{r:03d}"
        seed = root if reps == 1 else ssa.replica_seed(root, r)
        traj = _simulate(model, sim["N"], sim["t_end"], seed, snaps, cfg, f"events{tag}.csv")
        if sim["record_events"]:
            traj.to_csv(run.path(f"events{tag}.csv"))
        if snaps:
            traj.snapshots_to_csv(run.path(f"snapshots{tag}.csv"))
            fr = analysis.snapshot_fractions(traj, model.K)
            _write_rows(run.path(f"occupancy{tag}.csv"), ["t", "state", "fraction"],
                        _occupancy_rows(traj.snapshot_times, fr, model.states.labels))


def task_gke(cfg, run: Run):
    model = _model(cfg)
    series = _integrate(model, _grid(model, cfg), cfg)
    series.to_csv(run.path("field.csv"))


def task_meanfield(cfg, run: Run):
    model = _model(cfg)
    grid = _grid(model, cfg)
    mf = cfg["meanfield"]
    checkpoints = grid_values(mf["checkpoints"])
    series = _integrate(model, grid, cfg, every_step=True)
    sched = meanfield.RateSchedule.from_series(model, series)
    r = mf["location"]
    occ = meanfield.ensemble_occupancy(sched, r, mf["replicas"], checkpoints, cfg["sim"]["seed"])
    occ.to_csv(run.path("occupancy.csv"))
    node = sched.node(r)
    rows = []
    for t in occ.times:
        k = int(np.argmin(np.abs(series.times - t)))
        rows.extend([_fmt(series.times[k]), lab, _fmt(series.values[k, node, j])]
                    for j, lab in enumerate(model.states.labels))
    _write_rows(run.path("gke_reference.csv"), ["t", "state", "probability"], rows)


def task_qsd(cfg, run: Run):
    q = cfg["qsd"]
    try:
        res = qsd.qsd_sweep(q["N_list"], grid_values(q["jbar_grid"]), _phi(cfg), q["time_scale"], q["tol"])
    except qsd.ConvergenceError as exc:
        raise Aborted(str(exc), []) from exc
    except ValueError as exc:
        raise ConfigError(f"qsd: {exc}") from exc
    res.to_csv(run.path("rho.csv"))
    res.qsd_to_csv(run.path("qsd.csv"))
    _write_rows(run.path("log_rho.csv"), ["N", "jbar", "log_rho"],
                ([r.N, _fmt(r.jbar), _fmt(r.log_rho)] for r in res.rows))


def task_equilibria(cfg, run: Run):
    res = analysis.bifurcation_sweep(grid_values(cfg["equilibria"]["jbar_grid"]), _phi(cfg))
    res.to_csv(run.path("branches.csv"))
    _write_rows(run.path("bifurcations.csv"), ["kind", "jbar"],
                [["saddle_node", _fmt(j)] for j in res.saddle_nodes]
                + [["transcritical", _fmt(res.transcritical)]])
    if "basin" in cfg:
        _basins(cfg, run)


def _basins(cfg, run: Run):
    b = cfg["basin"]
    rows, summary = [], []
    root = ssa.seed_sequence(cfg["sim"]["seed"])
    for i, jb in enumerate(b["jbar"]):
        survey = analysis.basin_survey(jb, b["N"], b["t_end"], grid_values(b["fractions"]), b["seeds"],
                                       ssa.replica_seed(root, i), _phi(cfg))
        for k, p in enumerate(survey.fractions):
            rows.extend([_fmt(jb), _fmt(p), s, _fmt(g)] for s, g in enumerate(survey.end_grass[k]))
        split = survey.split_point() if len(survey.stable) > 1 else None
        unstable = [u for u in survey.unstable if 0 < u < 1]
        summary.append([_fmt(jb), "" if split is None else _fmt(split),
                        ";".join(_fmt(u) for u in unstable), ";".join(_fmt(s) for s in survey.stable)])
    _write_rows(run.path("endstates.csv"), ["jbar", "initial_grass", "seed", "final_grass"], rows)
    _write_rows(run.path("basins.csv"), ["jbar", "split_point", "unstable_roots", "stable_roots"], summary)


def task_converge(cfg, run: Run):
    model = _model(cfg)
    c = cfg["converge"]
    res = analysis.convergence_study(model, c["N_list"], c["replicas"], c["t_end"], cfg["sim"]["seed"],
                                     h=c["h"], n_nodes=cfg.get("gke", {}).get("nodes", 200),
                                     exclude_absorbed=c["exclude_absorbed"])
    res.to_csv(run.path("convergence.csv"))
    _write_rows(run.path("slope.csv"), ["slope", "ci_low", "ci_high"],
                [[_fmt(res.slope), _fmt(res.ci[0]), _fmt(res.ci[1])]])


def task_chaos(cfg, run: Run):
    model = _model(cfg)
    c = cfg["chaos"]
    res = analysis.pairwise_correlation(model, c["N"], c["site_pairs"], c["t"], c["replicas"], cfg["sim"]["seed"])
    rows = []
    for p, (i, j) in enumerate(res.pairs):
        for k, lab in enumerate(model.states.labels):
            v = res.correlations[p, k]
            rows.append([p, int(i), int(j), lab, "" if not np.isfinite(v) else _fmt(v)])
    _write_rows(run.path("correlations.csv"), ["pair", "site_i", "site_j", "state", "correlation"], rows)
    _write_rows(run.path("chaos_summary.csv"), ["max_abs_correlation", "skipped"],
                [[_fmt(res.max_abs), len(res.skipped)]])


def _front_rows(series, model, threshold):
    kF = model.index("F")
    out = []
    for t, P in zip(series.times, series.values):
        out.append((float(t), analysis.front_position(P[:, kF], series.grid.nodes, threshold)))
    return out


def task_fronts(cfg, run: Run):
    model = _model(cfg)
    if model.measure.is_discrete:
        raise ConfigError("fronts: needs a continuous domain")
    f = cfg["fronts"]
    series = _integrate(model, _grid(model, cfg), cfg)
    series.to_csv(run.path("field.csv"))
    fronts = _front_rows(series, model, f["threshold"])
    _write_rows(run.path("fronts.csv"), ["t", "front"],
                ([_fmt(t), "" if x is None else _fmt(x)] for t, x in fronts))
    speed = analysis.wave_speed([t for t, _ in fronts], [x for _, x in fronts], f["forest_side"])
    _write_rows(run.path("wave_speed.csv"), ["speed"], [["" if speed is None else _fmt(speed)]])


TASKS = {
    "simulate": task_simulate,
    "gke": task_gke,
    "meanfield": task_meanfield,
    "qsd": task_qsd,
    "equilibria": task_equilibria,
    "converge": task_converge,
    "chaos": task_chaos,
    "fronts": task_fronts,
}

# ---------------------------------------------------------------------------
# Recipes
# ---------------------------------------------------------------------------


class Recipe:
    def __init__(self, defaults: dict, runner, description: str):
        self.defaults = defaults
        self.runner = runner
        self.description = description


def _jbar_tag(jb: float) -> str:
    return f"{jb:g}".replace(".", "p")


def recipe_fig2(cfg, run: Run):
    task_equilibria(cfg, run)


def recipe_fig3(cfg, run: Run):
    task_qsd(cfg, run)


def recipe_fig4(cfg, run: Run):
    model = _model(cfg)
    grid = _grid(model, cfg)
    series = _integrate(model, grid, cfg, name="gke_field.csv")
    series.to_csv(run.path("gke_field.csv"))
    sim = cfg["sim"]
    snaps = _snapshot_times(cfg, sim["t_end"])
    traj = _simulate(model, sim["N"], sim["t_end"], ssa.seed_sequence(sim["seed"]), snaps, cfg)
    fr = analysis.snapshot_fractions(traj, model.K)
    _write_rows(run.path("ssa_occupancy.csv"), ["t", "state", "fraction"],
                _occupancy_rows(traj.snapshot_times, fr, model.states.labels))
    p = cfg["periods"]
    k = model.index(p["state"])
    window = tuple(p.get("window", (0.0, sim["t_end"])))
    gke_pe = analysis.estimate_period(series.values[:, 0, k], series.times, window)
    ssa_pe = analysis.estimate_period(fr[:, k], traj.snapshot_times, window, hysteresis=p["hysteresis"])
    rows = [["gke", "" if gke_pe is None else _fmt(gke_pe.period), "" if gke_pe is None else len(gke_pe.spacings)],
            ["ssa", "" if ssa_pe is None else _fmt(ssa_pe.period), "" if ssa_pe is None else len(ssa_pe.spacings)]]
    _write_rows(run.path("periods.csv"), ["source", "period", "cycles"], rows)


def recipe_fig5_waves(cfg, run: Run):
    sim = cfg["sim"]
    snaps = _snapshot_times(cfg, sim["t_end"])
    root = ssa.seed_sequence(sim["seed"])
    for i, jb in enumerate(cfg["sweep"]["jbar"]):
        sub = deep_merge(cfg, {"kernels": {"jbar": jb}})
        model = _model(sub)
        tag = _jbar_tag(jb)
        series = _integrate(model, _grid(model, sub), sub, name=f"gke_jbar{tag}.csv")
        series.to_csv(run.path(f"gke_jbar{tag}.csv"))
        traj = _simulate(model, sim["N"], sim["t_end"], ssa.replica_seed(root, i), snaps, sub,
                         name=f"ssa_jbar{tag}.csv")
        traj.snapshots_to_csv(run.path(f"ssa_jbar{tag}.csv"))


def recipe_fig5_pinning(cfg, run: Run):
    model = _model(cfg)
    grid = _grid(model, cfg)
    series = _integrate(model, grid, cfg, name="gke_field.csv")
    series.to_csv(run.path("gke_field.csv"))
    f = cfg["fronts"]
    fronts = _front_rows(series, model, f["threshold"])
    _write_rows(run.path("fronts.csv"), ["t", "front"],
                ([_fmt(t), "" if x is None else _fmt(x)] for t, x in fronts))
    # Zero-dispersal branches at each node's site density, next to the final GKE profile.
    jbar = cfg["kernels"]["jbar"]
    q = model.measure.density(grid.nodes)
    kG = model.index("G")
    rows = []
    for x, qk, g in zip(grid.nodes, q, series.values[-1][:, kG]):
        roots = analysis.equilibria_2state(jbar, _phi(cfg), float(qk))
        stable = ";".join(_fmt(p.grass) for p in roots if p.stability == "stable")
        unstable = ";".join(_fmt(p.grass) for p in roots if p.stability == "unstable")
        rows.append([_fmt(x), _fmt(qk), _fmt(g), stable, unstable])
    _write_rows(run.path("zero_dispersal.csv"), ["pos", "density", "gke_grass", "stable_grass", "unstable_grass"], rows)
    sim = cfg["sim"]
    snaps = _snapshot_times(cfg, sim["t_end"])
    traj = _simulate(model, sim["N"], sim["t_end"], ssa.seed_sequence(sim["seed"]), snaps, cfg)
    traj.snapshots_to_csv(run.path("ssa_snapshots.csv"))


RECIPES = {
    "fig2": Recipe(
        {
            "model": {"family": "gf"},
            "equilibria": {"jbar_grid": {"start": 0.05, "stop": 2.0, "num": 391}},
            "basin": {"jbar": [0.4, 0.7, 1.0], "N": 1000, "t_end": 100.0,
                      "fractions": {"start": 0.1, "stop": 0.9, "num": 9}, "seeds": 10},
            "sim": {"seed": 0},
        },
        recipe_fig2,
        "two-state bifurcation branches and single-patch SSA end states (N=1000)",
    ),
    "fig3": Recipe(
        {
            "model": {"family": "gf"},
            "qsd": {"N_list": [250, 500, 1000], "jbar_grid": {"start": 0.2, "stop": 1.2, "num": 21}},
        },
        recipe_fig3,
        "absorption rate and quasi-stationary distribution sweeps",
    ),
    "fig4": Recipe(
        {
            "model": {"family": "gstf"},
            "domain": {"type": "patches", "M": 1},
            "kernels": {"jbar": 0.25, "beta": 0.4},
            "initial": {"law": {"G": 0.4, "S": 0.2, "T": 0.2, "F": 0.2}},
            "gke": {"h": 0.01, "t_end": 500.0, "snapshot_times": {"start": 0.0, "stop": 500.0, "num": 1001}},
            "sim": {"N": 3000, "t_end": 500.0, "record_events": False,
                    "snapshot_times": {"start": 0.0, "stop": 500.0, "num": 1001}},
            "periods": {"state": "T", "window": [100.0, 500.0]},
        },
        recipe_fig4,
        "four-state single-patch oscillations: GKE and SSA (N=3000)",
    ),
    "fig5_waves": Recipe(
        {
            "model": {"family": "gf"},
            "domain": {"type": "ring", "L": 5.0},
            "kernels": {"sigma": 0.05},
            "initial": {"law": {"G": 1.0, "F": 0.0}, "blocks": [{"lo": 1.0, "hi": 2.5, "law": {"G": 0.0, "F": 1.0}}]},
            "gke": {"h": 0.05, "nodes": 200, "t_end": 500.0,
                    "snapshot_times": {"start": 0.0, "stop": 500.0, "num": 101}},
            "sim": {"N": 1000, "t_end": 200.0, "record_events": False,
                    "snapshot_times": {"start": 0.0, "stop": 200.0, "num": 41}},
            "sweep": {"jbar": [0.5, 0.9, 1.25]},
        },
        recipe_fig5_waves,
        "invasion waves on a ring of length 5 (GKE and SSA, N=1000)",
    ),
    "fig5_pinning": Recipe(
        {
            "model": {"family": "gf"},
            "domain": {"type": "interval", "L": 1.0, "measure": "trapezoid", "a": 0.4, "b": 1.2,
                       "boundary": "reflecting"},
            "kernels": {"jbar": 1.1, "sigma": 0.02},
            "initial": {"law": {"G": 1.0, "F": 0.0}, "blocks": [{"lo": 0.0, "hi": 0.45, "law": {"G": 0.0, "F": 1.0}}]},
            "gke": {"h": 0.05, "nodes": 200, "t_end": 500.0,
                    "snapshot_times": {"start": 0.0, "stop": 500.0, "num": 101}},
            "sim": {"N": 2000, "t_end": 100.0, "record_events": False,
                    "snapshot_times": {"start": 0.0, "stop": 100.0, "num": 21}},
            "fronts": {"threshold": 0.5, "forest_side": "left"},
        },
        recipe_fig5_pinning,
        "front pinning on a trapezoidal site density (GKE and SSA, N=2000)",
    ),
}

# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _versions() -> dict:
    out = {"vegdyn": __version__, "python": platform.python_version()}
    for pkg in ("numpy", "scipy", "numba"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _write_manifest(out: Path, target, cfg, run: Run, started, wall, status, message=None):
    manifest = {
        "target": target,
        "kind": "recipe" if target in RECIPES else "task",
        "status": status,
        "config": cfg,
        "seed": cfg.get("sim", {}).get("seed"),
        "versions": _versions(),
        "artifacts": run.artifacts,
        "started_at": started,
        "wall_time_s": wall,
    }
    if message:
        manifest["message"] = message
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def build_parser() -> argparse.ArgumentParser:
    names = sorted(TASKS) + sorted(RECIPES)
    p = argparse.ArgumentParser(prog="vegdyn", description="Stochastic vegetation model experiments.")
    p.add_argument("target", choices=names, metavar="task|recipe",
                   help="one of: " + ", ".join(names))
    p.add_argument("--config", help="JSON configuration (optional for recipes)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help="overrides sim.seed")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="dotted-path override, e.g. sim.N=500 (repeatable)")
    return p


def run(target: str, config_path, out_dir, overrides=(), seed=None) -> int:
    """Run one task or recipe; returns the process exit status."""
    try:
        if config_path is None:
            if target not in RECIPES:
                raise ConfigError(f"task {target!r} needs --config")
            raw = {}
        else:
            raw = load_config(config_path)
        cfg = resolve_config(target, raw, overrides, seed)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"vegdyn: config error: {p}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    r = Run(out)
    runner = RECIPES[target].runner if target in RECIPES else TASKS[target]
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    t0 = time.perf_counter()
    try:
        runner(cfg, r)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"vegdyn: config error: {p}", file=sys.stderr)
        return EXIT_CONFIG
    except Aborted as exc:
        for name, writer in exc.partials:
            writer(out / f"{name}.partial")
            r.artifacts.append(f"{name}.partial")
        _write_manifest(out, target, cfg, r, started, time.perf_counter() - t0, "numerical_abort", str(exc))
        print(f"vegdyn: numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    _write_manifest(out, target, cfg, r, started, time.perf_counter() - t0, "ok")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return run(args.target, args.config, args.out, args.overrides, args.seed)


if __name__ == "__main__":
    sys.exit(main())
