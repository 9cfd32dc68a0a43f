"""Command-line front end: generate spaces, profile dimensions, build and
verify measures, and run the three Cantor-type scenarios end to end.

Every command writes into ``--out`` and finishes with ``manifest.json``,
which lists each produced file with its sha256.  Outputs depend only on the
configuration, so reruns are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import re
import sys
import time
import warnings
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ConfigError, PreconditionError
from .nets import (
    ScaleBaseWarning,
    build_hierarchy,
    check_child_bounds,
    check_exponents,
    choose_scale_base,
    hierarchy_document,
)
from .packing import curve_knee, fit_lower_dimension, fit_upper_dimension, packing_profile, scan_dimension
from .scenarios import LOG2_LOG3, LOG2_LOG9, LOG5_LOG9, SCENARIOS, branching_measure, scenario_space
from .space import (
    PseudoMetricSpace,
    default_scale_cap,
    generate_cantor,
    load_space,
    space_document,
    to_fraction,
    union_spaces,
)
from .transfer import TransferConstants, build_measure, measure_document
from .verify import (
    doubling_constant,
    fit_measure_lower,
    fit_measure_upper,
    ratio_profile,
    report_document,
    transport_bound_check,
    verify_measure,
)

EXIT_OK, EXIT_UNEXPECTED, EXIT_CONFIG, EXIT_PRECONDITION = 0, 1, 2, 3

# Scenario expectations used only to annotate the demo table.
EXPECTED_DIMENSIONS = {
    "cantor": (LOG2_LOG3, LOG2_LOG3),
    "disjoint": (LOG2_LOG3, LOG2_LOG9),
    "touching": (LOG2_LOG3, LOG2_LOG9),
}


# -- output helpers ----------------------------------------------------------


class Output:
    """Collects the files written by one command and emits the manifest."""

    def __init__(self, root):
        if root is None:
            raise ConfigError("--out is required")
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: list[Path] = []

    def _track(self, path: Path):
        if path not in self.files:
            self.files.append(path)
        return path

    def json(self, name: str, doc) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=1, default=_jsonable) + "\n")
        return self._track(path)

    def csv(self, name: str, header, rows) -> Path:
        path = self.root / name
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
        return self._track(path)

    def manifest(self) -> Path:
        entries = []
        for path in sorted(self.files):
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            entries.append({"file": path.relative_to(self.root).as_posix(), "sha256": digest})
        path = self.root / "manifest.json"
        path.write_text(json.dumps({"files": entries}, indent=1) + "\n")
        return path


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _jsonable(v):
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (Fraction, Path)):
        return str(v)
    raise TypeError(f"cannot serialize {type(v).__name__}")


_LOG_RATIO = re.compile(r"^\s*log\(?\s*([0-9.]+)\s*\)?\s*/\s*log\(?\s*([0-9.]+)\s*\)?\s*$")


def parse_real(value, name: str) -> float:
    """Accept numbers, fractions such as ``1/3`` and ratios such as ``log5/log9``."""
    if value is None:
        raise ConfigError(f"{name} is required")
    if isinstance(value, (int, float)):
        return float(value)
    m = _LOG_RATIO.match(str(value))
    if m:
        num, den = float(m.group(1)), float(m.group(2))
        if num <= 0 or den <= 0 or den == 1:
            raise ConfigError(f"{name}: invalid logarithm ratio {value!r}")
        return math.log(num) / math.log(den)
    try:
        return float(to_fraction(value))
    except (ValueError, ZeroDivisionError, ConfigError):
        raise ConfigError(f"{name}: cannot parse {value!r} as a number") from None


def _load(path) -> PseudoMetricSpace:
    if path is None:
        raise ConfigError("--space is required")
    return load_space(path)


# -- gen ---------------------------------------------------------------------


_PIECE = re.compile(r"^cantor:([^:]+):([^:]+):\[([^,\]]+),([^\]]+)\]$")


def parse_piece(text: str, level: int | None):
    """``cantor:RATIO:DEPTH:[a,b]``; DEPTH may use ``L`` (e.g. ``2L``) for --level."""
    m = _PIECE.match(text.replace(" ", ""))
    if not m:
        raise ConfigError(f"cannot parse piece {text!r}; expected cantor:RATIO:DEPTH:[a,b]")
    ratio, depth, a, b = m.groups()
    if "L" in depth:
        if level is None:
            raise ConfigError(f"{text!r} uses L but --level was not given")
        factor = depth.replace("L", "").replace("*", "") or "1"
        try:
            depth_value = int(factor) * level
        except ValueError:
            raise ConfigError(f"bad depth {depth!r} in {text!r}") from None
    else:
        try:
            depth_value = int(depth)
        except ValueError:
            raise ConfigError(f"bad depth {depth!r} in {text!r}") from None
    return generate_cantor(ratio, depth_value, (to_fraction(a), to_fraction(b)))


def cmd_gen(cfg, out: Output):
    kind = cfg.kind
    level = None if cfg.level is None else int(cfg.level)
    extra = {}
    if kind == "cantor":
        if cfg.ratio is None or level is None:
            raise ConfigError("gen cantor needs --ratio and --level")
        interval = tuple(to_fraction(v) for v in (cfg.interval or ("0", "1")))
        space = generate_cantor(cfg.ratio, level, interval)
    elif kind == "union":
        if not cfg.pieces:
            raise ConfigError("gen union needs at least one cantor:RATIO:DEPTH:[a,b] piece")
        space = parse_piece(cfg.pieces[0], level)
        for text in cfg.pieces[1:]:
            space = union_spaces(space, parse_piece(text, level))
    elif kind in SCENARIOS:
        if level is None:
            raise ConfigError(f"gen {kind} needs --level")
        space, pieces = scenario_space(kind, level)
        nu = branching_measure(space, pieces)
        extra["branching_measure.json"] = {
            "masses": {str(space.ids[i]): float(nu[i]) for i in range(space.n)},
            "ids": list(space.ids),
            "metadata": {"kind": "branching", "scenario": kind, "level": level},
        }
    else:
        raise ConfigError(f"unknown generator {kind!r}; choose cantor, union, {', '.join(SCENARIOS)}")
    out.json("space.json", space_document(space))
    for name, doc in extra.items():
        out.json(name, doc)
    return f"{space.n} points, c_d={space.c_d:g}, diameter={space.diameter:g}"


# -- dims --------------------------------------------------------------------


def dimension_summary(space: PseudoMetricSpace, radii: str, mode: str, resolution: float, gamma_max: float, oracle_cap: int):
    """Packing profile, both fit curves and their knees."""
    prof = packing_profile(space, radii, mode, oracle_cap=oracle_cap)
    k, _ = prof.arrays()
    k_max = float(k.max()) if len(k) else 1.0
    upper = scan_dimension(prof, "upper", resolution, gamma_max)
    lower = scan_dimension(prof, "lower", resolution, gamma_max)
    return {
        "profile": prof,
        "upper_curve": upper,
        "lower_curve": lower,
        "upper_knee": curve_knee(upper, "upper", k_max),
        "lower_knee": curve_knee(lower, "lower", k_max),
        "k_max": k_max,
    }


def cmd_dims(cfg, out: Output):
    space = _load(cfg.space)
    res = parse_real(cfg.resolution, "resolution")
    gmax = parse_real(cfg.gamma_max, "gamma_max")
    d = dimension_summary(space, cfg.radii, cfg.mode, res, gmax, int(cfg.oracle_cap))
    prof = d["profile"]
    out.csv(
        "profile.csv",
        ["center", "r_small", "r_big", "k", "count", "exact"],
        ((space.ids[o.center], o.r_small, o.r_big, o.k, o.count, int(o.exact)) for o in prof),
    )
    out.csv("upper_curve.csv", ["gamma", "c"], d["upper_curve"])
    out.csv("lower_curve.csv", ["gamma", "c"], d["lower_curve"])
    out.json(
        "dims.json",
        {
            "size": space.n,
            "c_d": space.c_d,
            "diameter": space.diameter,
            "scale_cap": prof.scale_cap,
            "radii_policy": prof.policy,
            "mode": prof.mode,
            "all_exact": prof.all_exact,
            "observations": len(prof),
            "k_max": d["k_max"],
            "resolution": res,
            "upper_knee": d["upper_knee"],
            "lower_knee": d["lower_knee"],
        },
    )
    return f"upper knee {d['upper_knee']:.4g}, lower knee {d['lower_knee']:.4g}"


# -- measure -----------------------------------------------------------------


def resolve_scale_base(space, cfg, s_prime, t_prime):
    """Explicit --a, or the smallest admissible base from fitted constants."""
    s = None if cfg.s is None else parse_real(cfg.s, "s")
    t = None if cfg.t is None else parse_real(cfg.t, "t")
    if s is not None or t is not None:
        if s is None or t is None:
            raise ConfigError("give both --s and --t, or neither")
        check_exponents(s, t, s_prime, t_prime)
    elif not s_prime >= t_prime >= 0:
        raise ConfigError(f"need s' >= t' >= 0, got s'={s_prime}, t'={t_prime}")
    override = None if cfg.a is None else parse_real(cfg.a, "a")
    if override is not None and s is None:
        return override, []
    if s is None:
        raise ConfigError("without --a, --s and --t are needed to choose the scale base")
    prof = packing_profile(space, "dyadic", "exact", oracle_cap=int(cfg.oracle_cap))
    c_s = fit_upper_dimension(prof, s).c
    c_t = fit_lower_dimension(prof, t).c
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", ScaleBaseWarning)
        a = choose_scale_base(space.c_d, s, t, s_prime, t_prime, c_s, c_t, override=override)
    return a, [str(w.message) for w in caught]


def step_document(report) -> dict:
    doc = {k: v for k, v in vars(report).items() if k != "witnesses"}
    doc["passed"] = report.passed
    doc["witnesses"] = {k: list(v) for k, v in report.witnesses.items()}
    return doc


def cmd_measure(cfg, out: Output):
    space = _load(cfg.space)
    s_prime = parse_real(cfg.s_prime, "s_prime")
    t_prime = parse_real(cfg.t_prime, "t_prime")
    a, notes = resolve_scale_base(space, cfg, s_prime, t_prime)
    for note in notes:
        print(f"warning: {note}", file=sys.stderr)
    h = build_hierarchy(space, a, normalized=cfg.normalized)
    k = TransferConstants.from_exponents(a, space.c_d, s_prime, t_prime)
    build = build_measure(h, k, order=cfg.order, seed=cfg.seed)
    doc = measure_document(build)
    doc["metadata"]["scale_base_warnings"] = notes
    out.json("measure.json", doc)
    ids = space.ids
    out.csv(
        "transfers.csv",
        ["step", "source", "dest", "amount", "distance", "level", "kind"],
        ((r.step, ids[r.source], ids[r.dest], r.amount, r.distance, r.level, r.kind) for r in build.log),
    )
    out.json("steps.json", [step_document(s) for s in build.steps])
    out.json("hierarchy.json", hierarchy_document(h))
    return f"A={a:g}, depth {h.depth}, steps passed: {build.passed}"


# -- verify ------------------------------------------------------------------


def load_measure(path, space: PseudoMetricSpace) -> np.ndarray:
    """Masses in point-index order; points missing from the file get zero."""
    if path is None:
        raise ConfigError("--measure is required")
    doc = json.loads(Path(path).read_text())
    masses = doc.get("masses") if isinstance(doc, dict) else None
    if not isinstance(masses, dict):
        raise ConfigError("measure document needs a 'masses' mapping from point id to mass")
    known = {str(pid) for pid in space.ids}
    unknown = sorted(set(masses) - known)
    if unknown:
        raise ConfigError(f"measure names points not in the space: {unknown[:5]}")
    mass = np.array([float(masses.get(str(pid), 0.0)) for pid in space.ids])
    if (mass < 0).any() or not np.isfinite(mass).all():
        raise ConfigError("masses must be finite and nonnegative")
    return mass


def cmd_verify(cfg, out: Output):
    space = _load(cfg.space)
    mass = load_measure(cfg.measure, space)
    cap = default_scale_cap(space, normalized=False) if cfg.scale_cap is None else parse_real(cfg.scale_cap, "scale_cap")
    gu = parse_real(cfg.gamma_upper, "gamma_upper")
    gl = parse_real(cfg.gamma_lower, "gamma_lower")
    cu = None if cfg.claimed_upper is None else parse_real(cfg.claimed_upper, "claimed_upper")
    cl = None if cfg.claimed_lower is None else parse_real(cfg.claimed_lower, "claimed_lower")
    rep = verify_measure(mass, space, cap, gu, gl, cu, cl)
    out.json("report.json", report_document(rep, space.ids))
    out.csv("ratio_plot.csv", ["k", "min_ratio", "max_ratio"], rep.plot_data)
    return (
        f"upper C={rep.u_fit.c:.6g} at {gu:.4g}, lower C={rep.l_fit.c:.6g} at {gl:.4g}, "
        f"doubling {rep.doubling_constant:.6g}, passed: {rep.passed}"
    )


# -- demo --------------------------------------------------------------------


def scenario_level(name: str, level: int) -> int:
    """Unions double the depth of one piece, so they run at half the level."""
    if name == "cantor" or level == 0:
        return level
    return max(1, level // 2)


def run_scenario(name: str, level: int, cfg) -> dict:
    space, pieces = scenario_space(name, level)
    res = parse_real(cfg.resolution, "resolution")
    dims = dimension_summary(space, "dyadic", "exact", res, parse_real(cfg.gamma_max, "gamma_max"), int(cfg.oracle_cap))
    a = parse_real(cfg.a if cfg.a is not None else 9, "a")
    s_prime = parse_real(cfg.s_prime if cfg.s_prime is not None else LOG5_LOG9, "s_prime")
    t_prime = parse_real(cfg.t_prime if cfg.t_prime is not None else LOG2_LOG9, "t_prime")
    h = build_hierarchy(space, a, normalized=cfg.normalized)
    children = check_child_bounds(h, s_prime, t_prime)
    k = TransferConstants.from_exponents(a, space.c_d, s_prime, t_prime)
    build = build_measure(h, k, order=cfg.order, seed=cfg.seed)
    transport = transport_bound_check(build.snapshots, build.measure, k, h.space)
    cap = default_scale_cap(space, normalized=False)
    prof = ratio_profile(build.measure, space, cap)
    nu = branching_measure(space, pieces)
    up, lo = EXPECTED_DIMENSIONS[name]
    return {
        "space": space,
        "build": build,
        "nu": nu,
        "row": {
            "scenario": name,
            "level": level,
            "size": space.n,
            "c_d": space.c_d,
            "upper_knee": dims["upper_knee"],
            "lower_knee": dims["lower_knee"],
            "expected_upper": up,
            "expected_lower": lo,
            "scale_base": a,
            "depth": h.depth,
            "child_histogram": " ".join(f"{c}:{n}" for c, n in children.histogram().items()),
            "child_bounds_ok": children.passed,
            "steps_passed": build.passed,
            "transport_ok": transport.passed,
            "mu_upper_c": fit_measure_upper(prof, s_prime).c,
            "mu_lower_c": fit_measure_lower(prof, t_prime).c,
            "mu_doubling": doubling_constant(build.measure, space, cap),
            "nu_doubling": doubling_constant(nu, space, cap),
        },
    }


def cmd_demo(cfg, out: Output):
    start = time.perf_counter()
    level = int(cfg.level if cfg.level is not None else 6)
    if level < 0:
        raise ConfigError("level must be >= 0")
    rows = []
    for name in ("cantor", "disjoint", "touching"):
        result = run_scenario(name, scenario_level(name, level), cfg)
        rows.append(result["row"])
        space = result["space"]
        out.json(f"{name}/space.json", space_document(space))
        out.json(f"{name}/measure.json", measure_document(result["build"]))
        out.json(
            f"{name}/branching_measure.json",
            {"masses": {str(space.ids[i]): float(v) for i, v in enumerate(result["nu"])}, "ids": list(space.ids)},
        )
    header = list(rows[0])
    out.csv("summary.csv", header, ([r[h] for h in header] for r in rows))

    trend = []
    for lv in cfg.trend_levels:
        space, pieces = scenario_space("touching", int(lv))
        nu = branching_measure(space, pieces)
        trend.append((int(lv), space.n, doubling_constant(nu, space, default_scale_cap(space, normalized=False))))
    out.csv("nu_trend.csv", ["level", "size", "doubling_constant"], trend)
    values = [t[2] for t in trend]
    growing = len(values) > 1 and all(b > a for a, b in zip(values, values[1:]))
    out.json(
        "summary.json",
        {"level": level, "scenarios": rows, "nu_trend": trend, "nu_non_doubling_trend": growing},
    )
    elapsed = time.perf_counter() - start
    for r in rows:
        print(
            f"{r['scenario']:>9} L={r['level']} n={r['size']}: knees {r['upper_knee']:.3f}/{r['lower_knee']:.3f} "
            f"(expect {r['expected_upper']:.3f}/{r['expected_lower']:.3f}), children {r['child_histogram']}, "
            f"mu U={r['mu_upper_c']:.4g} L={r['mu_lower_c']:.4g} doubling {r['mu_doubling']:.4g}, "
            f"nu doubling {r['nu_doubling']:.4g}"
        )
    print(f"nu doubling over levels {[t[0] for t in trend]}: {[round(v, 4) for v in values]}"
          f"{' (growing: not doubling)' if growing else ''}")
    print(f"elapsed {elapsed:.1f}s (budget {cfg.budget:g}s)", file=sys.stderr)
    if cfg.budget is not None and elapsed > cfg.budget:
        raise BudgetExceeded(f"demo took {elapsed:.1f}s, over the {cfg.budget:g}s budget")
    return "demo complete"


class BudgetExceeded(RuntimeError):
    pass


# -- argument parsing --------------------------------------------------------


COMMANDS = {"gen": cmd_gen, "dims": cmd_dims, "measure": cmd_measure, "verify": cmd_verify, "demo": cmd_demo}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="doubling", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="JSON file whose keys mirror the command-line options")
    sub = p.add_subparsers(dest="command")

    def common(sp):
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--config", help=argparse.SUPPRESS)
        sp.add_argument("--oracle-cap", type=int, default=24)

    g = sub.add_parser("gen", help="generate a space file")
    g.add_argument("kind", nargs="?", help="cantor, union, cantor/disjoint/touching scenario")
    g.add_argument("pieces", nargs="*", help="union pieces cantor:RATIO:DEPTH:[a,b]")
    g.add_argument("--ratio")
    g.add_argument("--level", type=int)
    g.add_argument("--interval", nargs=2)
    common(g)

    d = sub.add_parser("dims", help="packing profile and dimension fit curves")
    d.add_argument("--space")
    d.add_argument("--radii", choices=("dyadic", "spectrum"), default="dyadic")
    d.add_argument("--mode", choices=("exact", "greedy"), default="exact")
    d.add_argument("--resolution", default=0.01)
    d.add_argument("--gamma-max", default=1.5)
    common(d)

    def exponents(sp):
        sp.add_argument("--a", help="scale base A (skips the automatic choice)")
        sp.add_argument("--s-prime")
        sp.add_argument("--t-prime")
        sp.add_argument("--raw", dest="normalized", action="store_false", help="keep distances unscaled")
        sp.add_argument("--order", choices=("lex", "random"), default="lex")
        sp.add_argument("--seed", type=int, default=0)

    m = sub.add_parser("measure", help="build a measure with two-sided ball bounds")
    m.add_argument("--space")
    m.add_argument("--s")
    m.add_argument("--t")
    exponents(m)
    common(m)

    v = sub.add_parser("verify", help="fit ball-ratio constants of a measure")
    v.add_argument("--space")
    v.add_argument("--measure")
    v.add_argument("--gamma-upper")
    v.add_argument("--gamma-lower")
    v.add_argument("--claimed-upper")
    v.add_argument("--claimed-lower")
    v.add_argument("--scale-cap")
    common(v)

    dm = sub.add_parser("demo", help="run the cantor, disjoint and touching scenarios")
    dm.add_argument("--level", type=int, default=6)
    dm.add_argument("--resolution", default=0.01)
    dm.add_argument("--gamma-max", default=1.5)
    dm.add_argument("--trend-levels", type=int, nargs="*", default=[2, 3, 4, 5])
    dm.add_argument("--budget", type=float, default=60.0)
    exponents(dm)
    dm.set_defaults(normalized=False)
    common(dm)
    return p


def parse_config(argv):
    """Parse flags, filling anything not given from the --config file."""
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config is None:
        cfg = parser.parse_args(argv)
        if cfg.command is None:
            raise ConfigError("no command given; use gen, dims, measure, verify or demo")
        return cfg
    try:
        file_cfg = json.loads(Path(known.config).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(file_cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    file_cfg = {k.replace("-", "_"): v for k, v in file_cfg.items()}
    argv = list(argv)
    command = next((a for a in argv if a in COMMANDS), None) or file_cfg.pop("command", None)
    file_cfg.pop("command", None)
    if command not in COMMANDS:
        raise ConfigError(f"config names unknown command {command!r}")
    if command not in argv:
        # subcommand flags may follow --config, so the name goes right after it
        i = argv.index("--config") if "--config" in argv else -1
        cut = i + 2 if i >= 0 else 0
        argv = argv[:cut] + [command] + argv[cut:]
    sub = parser._subparsers._group_actions[0].choices[command]
    valid = {a.dest for a in sub._actions}
    unknown = sorted(set(file_cfg) - valid)
    if unknown:
        raise ConfigError(f"unknown config keys for {command}: {unknown}")
    sub.set_defaults(**file_cfg)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
        out = Output(cfg.out)
        message = COMMANDS[cfg.command](cfg, out)
        out.manifest()
    except ConfigError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: cannot read {exc.filename}", file=sys.stderr)
        return EXIT_CONFIG
    except json.JSONDecodeError as exc:
        print(f"error: malformed JSON input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PreconditionError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except SystemExit as exc:
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001
        print(f"error: unexpected {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_UNEXPECTED
    print(message)
    return EXIT_OK
