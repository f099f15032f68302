"""Command-line front end.

Every subcommand reads either an instance config (``--config``) or a
built-in example (``--example`` with ``--n``) and writes CSV tables and JSON
verdicts into the output directory (``--out``, else ``$LIPQGH_OUT``, else
``./lipqgh-out``).  Floats are written with 17 significant digits and every
CSV row carries a solver status.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import catalog
from .convex_opt import SolverConfig
from .cstar_analysis import (epsilon_curve, f_leibniz_equivalence_check, leibniz_constant_lower, limit_subspace,
                             limit_system, state_space_shape)
from .metric_geometry import coupling_defect, hausdorff_states
from .opsys_core import MatrixStar, OperatorSubsystem, State
from .seminorm import LipNormedSystem, evaluate, from_dict

SUBCOMMANDS = ("radius", "rho", "hausdorff", "dist-bound", "epsilon-curve", "leibniz", "limit-system", "shape",
               "example")
EXAMPLES = ("two-by-two", "flattening-triangle", "tail-weighted")
OUT_ENV = "LIPQGH_OUT"


class ConfigError(ValueError):
    """Schema violation; the message starts with the offending path."""


# ------------------------------------------------------------------ output

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return str(v)


def write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating, float)):
        return float(o)
    return o


def write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


# ------------------------------------------------------------------ config

def _complex_list(v, path):
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 1:
        return arr.astype(complex)
    if arr.ndim == 2 and arr.shape[1] == 2:
        return arr[:, 0] + 1j * arr[:, 1]
    raise ConfigError(f"{path}: expected a list of numbers or of [re, im] pairs")


def parse_state(d, amb: MatrixStar, path: str) -> State:
    if d == "tracial" or (isinstance(d, dict) and d.get("kind") == "tracial"):
        return State.tracial(amb)
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: expected an object")
    try:
        if "vector" in d:
            blk = int(d.get("block", 0))
            if not 0 <= blk < len(amb.block_dims):
                raise ConfigError(f"{path}.block: no block {blk}")
            vec = _complex_list(d["vector"], f"{path}.vector")
            if vec.shape[0] != amb.block_dims[blk]:
                raise ConfigError(f"{path}.vector: length {vec.shape[0]} does not match block size "
                                  f"{amb.block_dims[blk]}")
            return State.point(amb, blk, vec)
        if "rho" in d:
            if len(d["rho"]) != len(amb.block_dims):
                raise ConfigError(f"{path}.rho: expected {len(amb.block_dims)} density blocks")
            rho = []
            for i, (r, k) in enumerate(zip(d["rho"], amb.block_dims)):
                a = np.asarray(r, dtype=float)
                if a.shape == (k, k, 2):
                    a = a[..., 0] + 1j * a[..., 1]
                elif a.shape != (k, k):
                    raise ConfigError(f"{path}.rho[{i}]: expected a {k}x{k} matrix")
                rho.append(a)
            return State(amb, rho)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    raise ConfigError(f"{path}: a state needs 'vector', 'rho' or 'tracial'")


def load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON at line {exc.lineno} column {exc.colno}") from None
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object")
    return data


def build_instance(data: dict) -> tuple[LipNormedSystem, dict]:
    """Lip-normed system and task records from a parsed config."""
    for key in ("system", "seminorm"):
        if key not in data:
            raise ConfigError(f"config: missing key {key!r}")
    try:
        S = OperatorSubsystem.from_dict(data["system"], name=data.get("name"))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        raise ConfigError(msg if msg.startswith("system") else f"system: {msg}") from None
    try:
        L = from_dict(data["seminorm"])
        evaluate(L, S.unit)
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        raise ConfigError(msg if msg.startswith("seminorm") else f"seminorm: {msg}") from None
    wit = []
    for i, w in enumerate(data.get("witnesses", [])):
        x = _complex_list(w, f"witnesses[{i}]")
        if x.shape[0] != S.ambient.size:
            raise ConfigError(f"witnesses[{i}]: length {x.shape[0]} does not match ambient size {S.ambient.size}")
        wit.append(x)
    leib = data.get("leibniz")
    leibniz = None
    if leib is not None:
        if not isinstance(leib, (int, float)):
            raise ConfigError("leibniz: expected a number")
        leibniz = (lambda R, c=float(leib): c)
    tasks = {}
    for i, t in enumerate(data.get("tasks", [])):
        if not isinstance(t, dict) or t.get("task") not in SUBCOMMANDS:
            raise ConfigError(f"tasks[{i}].task: expected one of {list(SUBCOMMANDS)}")
        tasks[t["task"]] = t
    X = LipNormedSystem(S, L, name=data.get("name", "instance"), leibniz=leibniz, witnesses=wit)
    return X, tasks


def parse_grid(text: str) -> np.ndarray:
    try:
        a, b, k = text.split(":")
        a, b, k = float(a), float(b), int(k)
    except ValueError:
        raise ConfigError(f"--grid: expected 'r0:r1:steps', got {text!r}") from None
    if k < 1 or b < a or (k > 1 and b == a):
        raise ConfigError("--grid: need r0 < r1 and steps >= 1")
    return np.linspace(a, b, k) if k > 1 else np.array([a])


def parse_ns(text: str):
    try:
        ns = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--n: expected a comma separated list, got {text!r}") from None
    if not ns or min(ns) <= 0:
        raise ConfigError("--n: parameters must be positive")
    return [int(v) if v.is_integer() else v for v in ns]


# ------------------------------------------------------------------ helpers

def _solver(args, data=None) -> SolverConfig:
    d = dict((data or {}).get("solver", {}))
    if args.seed is not None:
        d["seed"] = int(args.seed)
    if args.tol is not None:
        d["support_tol"] = d["projection_tol"] = float(args.tol)
    try:
        return SolverConfig.from_dict(d)
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        raise ConfigError(msg if msg.startswith("solver") else f"solver: {msg}") from None


def _member(name: str, n, cutoff: int) -> LipNormedSystem:
    if name == "tail-weighted":
        return catalog.tail_weighted(n, cutoff)
    return catalog.family_members(name, [n])[0].system


def _pair(name: str, n, cutoff: int):
    if name == "two-by-two":
        return catalog.two_by_two_pair(n)
    if name == "flattening-triangle":
        return catalog.triangle_pair(n)
    return catalog.tail_weighted_pair(n, cutoff)


def _systems(args):
    """``[(label, n, system)]`` from the config or the example sweep, plus task records and solver."""
    if args.config:
        data = load_config(args.config)
        X, tasks = build_instance(data)
        return [(X.name, None, X)], tasks, _solver(args, data)
    if not args.example:
        raise ConfigError("input: give --config PATH or --example NAME")
    return ([(f"{args.example}", n, _member(args.example, n, args.cutoff)) for n in args.ns], {},
            _solver(args))


def _require_example(args):
    if not args.example:
        raise ConfigError(f"{args.command}: needs --example NAME (one of {list(EXAMPLES)})")


def _grid_for(args, name, task):
    if args.grid:
        return parse_grid(args.grid)
    if task and "grid" in task:
        return parse_grid(str(task["grid"]))
    if name in catalog.FAMILY_GRIDS:
        return np.asarray(catalog.FAMILY_GRIDS[name])
    return np.array([0.5, 1.0, 1.5, 2.0])


# ------------------------------------------------------------ subcommands

def cmd_radius(args, out: Path):
    systems, _, cfg = _systems(args)
    rows = []
    for label, n, X in systems:
        iv = X.radius_interval
        rows.append([label, n, iv.lo, iv.hi, iv.method, iv.status])
    return [write_csv(out / "radius.csv", ["system", "n", "radius_lower", "radius_upper", "method", "status"], rows)]


def cmd_rho(args, out: Path):
    from .metric_geometry import rho_states

    systems, tasks, cfg = _systems(args)
    rows = []
    for label, n, X in systems:
        amb = X.ambient
        task = tasks.get("rho", {})
        if "states" in task:
            states = [parse_state(s, amb, f"tasks.rho.states[{i}]") for i, s in enumerate(task["states"])]
        else:
            rng = np.random.default_rng(cfg.seed)
            states = [State.random(amb, rng, pure=True) for _ in range(4)]
        pairs = task.get("pairs") or [[i, j] for i in range(len(states)) for j in range(i + 1, len(states))]
        for k, pr in enumerate(pairs):
            if len(pr) != 2 or not all(0 <= int(v) < len(states) for v in pr):
                raise ConfigError(f"tasks.rho.pairs[{k}]: indices out of range")
            res = rho_states(X, states[int(pr[0])], states[int(pr[1])], cfg)
            rows.append([label, n, int(pr[0]), int(pr[1]), res.lower, res.upper, res.status])
    return [write_csv(out / "rho.csv", ["system", "n", "i", "j", "rho_lower", "rho_upper", "status"], rows)]


def cmd_dist_bound(args, out: Path):
    _require_example(args)
    cfg = _solver(args)
    rows = []
    for n in args.ns:
        cd = coupling_defect(_pair(args.example, n, args.cutoff), config=cfg)
        rows.append([args.example, n, cd.lower, cd.upper, cd.status])
    return [write_csv(out / "dist_bound.csv", ["system", "n", "dist_lower", "dist_bound", "status"], rows)]


def cmd_hausdorff(args, out: Path):
    _require_example(args)
    cfg = _solver(args)
    rows = []
    for n in args.ns:
        hb = hausdorff_states(_pair(args.example, n, args.cutoff), seed=cfg.seed, config=cfg)
        rows.append([args.example, n, hb.lower, hb.upper, hb.status])
    return [write_csv(out / "hausdorff.csv", ["system", "n", "hausdorff_lower", "hausdorff_upper", "status"], rows)]


def cmd_epsilon(args, out: Path):
    systems, tasks, cfg = _systems(args)
    rows = []
    for label, n, X in systems:
        grid = _grid_for(args, args.example, tasks.get("epsilon-curve"))
        c = epsilon_curve(X, grid, seed=cfg.seed, config=cfg)
        for r, lo, up, st in zip(c.r, c.lower, c.upper, c.status):
            rows.append([label, n, r, lo, up, st])
    return [write_csv(out / "epsilon_curve.csv", ["system", "n", "r", "eps_lower", "eps_upper", "status"], rows)]


def cmd_leibniz(args, out: Path):
    systems, tasks, cfg = _systems(args)
    task = tasks.get("leibniz", {})
    rows = []
    for label, n, X in systems:
        lower = leibniz_constant_lower(X, samples=int(task.get("samples", 8)), seed=cfg.seed)
        upper = X.leibniz(X.R) if X.leibniz is not None else None
        r0 = float(task.get("r0", lower * (1 - 1e-3) if lower > 1 else 1.0))
        check = f_leibniz_equivalence_check(X, r0, samples=int(task.get("samples", 8)), seed=cfg.seed, config=cfg)
        status = "converged" if upper is not None and upper - lower <= 1e-6 * max(1.0, upper) else "gap_open"
        rows.append([label, n, lower, upper, r0, "undecided" if check is None else check, status])
    header = ["system", "n", "leibniz_lower", "leibniz_upper", "r0", "f_leibniz_check", "status"]
    return [write_csv(out / "leibniz.csv", header, rows)]


def _verdict(args, cfg):
    F = catalog.family(args.example, ns=args.ns, cutoff=args.cutoff)
    grid = parse_grid(args.grid) if args.grid else None
    v = limit_system(F, eps_grid=grid, seed=cfg.seed, config=cfg)
    rec = v.to_dict()
    rec.update({"example": args.example, "n": list(args.ns), "consistent": v.consistent,
                "limit_dim": v.limit_subspace.dim})
    if args.example == "tail-weighted":
        rec["cutoff"] = args.cutoff
    return rec


def cmd_limit(args, out: Path):
    _require_example(args)
    cfg = _solver(args)
    return [write_json(out / "limit_system.json", _verdict(args, cfg))]


def cmd_shape(args, out: Path):
    if args.config:
        data = load_config(args.config)
        if "system" not in data:
            raise ConfigError("config: missing key 'system'")
        try:
            S = OperatorSubsystem.from_dict(data["system"])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"system: {exc}") from None
        label = data.get("name", "instance")
    else:
        _require_example(args)
        F = catalog.family(args.example, ns=args.ns, cutoff=args.cutoff)
        S, _ = limit_subspace(F.system, F.blowups)
        label = f"{args.example}[limit]"
    tab = state_space_shape(S, directions=args.directions)
    k = tab.directions.shape[1] if tab.directions.ndim == 2 else 0
    header = ["system"] + [f"m{i}" for i in range(k)] + ["support"] + [f"x{i}" for i in range(k)] + ["shape", "status"]
    rows = []
    for m, h, x in zip(tab.directions, tab.support, tab.argmax):
        rows.append([label, *m, h, *x, tab.kind, "converged"])
    summary = {"system": label, "shape": tab.kind, "extreme_points": tab.extreme_points.tolist()
               if tab.kind != "disc" else [], "radius": tab.radius, "directions": int(len(tab.directions))}
    return [write_csv(out / "shape.csv", header, rows), write_json(out / "shape.json", summary)]


HELP = {
    "radius": "radius bounds of the state space",
    "rho": "Monge-Kantorovich distance between two states",
    "hausdorff": "bounds on the Hausdorff distance between bridged state spaces",
    "dist-bound": "coupling-defect upper bound on the family distance",
    "epsilon-curve": "certified enclosure of the Leibniz defect curve",
    "leibniz": "sampled lower bound on the Leibniz constant and the equivalence check",
    "limit-system": "limit subspace and inheritance verdict of a family",
    "shape": "shape of the state space from support functions",
}

STAGES = ("radius", "dist-bound", "hausdorff", "epsilon-curve", "leibniz", "limit-system")


def cmd_example(args, out: Path):
    name = args.name
    if name not in EXAMPLES:
        raise ConfigError(f"example: unknown example {name!r}; expected one of {list(EXAMPLES)}")
    args.example = name
    stages = [args.stage] if args.stage else list(STAGES)
    for s in stages:
        if s not in STAGES:
            raise ConfigError(f"example: unknown stage {s!r}; expected one of {list(STAGES)}")
    cfg = _solver(args)
    written = []
    if any(s in stages for s in ("radius", "dist-bound", "hausdorff", "leibniz")):
        rows = []
        for n in args.ns:
            X = _member(name, n, args.cutoff)
            row = [name, n]
            status = []
            if "radius" in stages:
                iv = X.radius_interval
                row += [iv.lo, iv.hi]
                status.append(iv.status)
            if "dist-bound" in stages:
                cd = coupling_defect(_pair(name, n, args.cutoff), config=cfg)
                row += [cd.lower, cd.upper]
                status.append(cd.status)
            if "hausdorff" in stages:
                hb = hausdorff_states(_pair(name, n, args.cutoff), seed=cfg.seed, config=cfg)
                row += [hb.lower, hb.upper]
                status.append("converged" if hb.upper - hb.lower <= 1e-6 else "gap_open")
            if "leibniz" in stages:
                row += [leibniz_constant_lower(X, samples=8, seed=cfg.seed)]
            row.append("converged" if all(s == "converged" for s in status) else
                       next(s for s in status if s != "converged"))
            rows.append(row)
        header = ["system", "n"]
        if "radius" in stages:
            header += ["radius_lower", "radius_upper"]
        if "dist-bound" in stages:
            header += ["dist_lower", "dist_bound"]
        if "hausdorff" in stages:
            header += ["hausdorff_lower", "hausdorff_upper"]
        if "leibniz" in stages:
            header += ["leibniz_lower"]
        header.append("status")
        written.append(write_csv(out / f"{name}_summary.csv", header, rows))
    if "epsilon-curve" in stages:
        grid = _grid_for(args, name, None)
        rows = []
        for n in args.ns:
            c = epsilon_curve(_member(name, n, args.cutoff), grid, seed=cfg.seed, config=cfg)
            rows += [[name, n, r, lo, up, st] for r, lo, up, st in zip(c.r, c.lower, c.upper, c.status)]
        written.append(write_csv(out / f"{name}_epsilon_curve.csv",
                                 ["system", "n", "r", "eps_lower", "eps_upper", "status"], rows))
    if "limit-system" in stages:
        written.append(write_json(out / f"{name}_limit_system.json", _verdict(args, cfg)))
    return written


HANDLERS = {"radius": cmd_radius, "rho": cmd_rho, "hausdorff": cmd_hausdorff, "dist-bound": cmd_dist_bound,
            "epsilon-curve": cmd_epsilon, "leibniz": cmd_leibniz, "limit-system": cmd_limit, "shape": cmd_shape,
            "example": cmd_example}


# ------------------------------------------------------------------ parser

def _common(p: argparse.ArgumentParser, with_input=True):
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./lipqgh-out)")
    p.add_argument("--seed", type=int, default=None, help="random seed for sampling and searches")
    p.add_argument("--tol", type=float, default=None, help="solver gap tolerance used for status flags")
    p.add_argument("--n", dest="n", default="1,2,4,8", help="comma separated family parameters")
    p.add_argument("--cutoff", type=int, default=catalog.DEFAULT_CUTOFF, help="truncation K for tail-weighted")
    p.add_argument("--grid", default=None, help="r grid as 'r0:r1:steps'")
    if with_input:
        p.add_argument("--config", default=None, help="instance config (JSON)")
        p.add_argument("--example", choices=EXAMPLES, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lipqgh", description="Lip-normed operator systems at finite dimension.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        if name == "example":
            p = sub.add_parser(name, help="run the analysis pipeline on a built-in family")
            p.add_argument("name", help=f"one of {', '.join(EXAMPLES)}")
            p.add_argument("stage", nargs="?", default=None, help=f"restrict to one of {', '.join(STAGES)}")
            _common(p, with_input=False)
        else:
            p = sub.add_parser(name, help=HELP[name])
            _common(p)
            if name == "shape":
                p.add_argument("--directions", type=int, default=64)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    # ``example NAME --n 4 STAGE``: a stage given after the flags
    if args.command == "example" and args.stage is None and len(extra) == 1 and not extra[0].startswith("-"):
        args.stage, extra = extra[0], []
    if extra:
        parser.error(f"unrecognized arguments: {' '.join(extra)}")
    out = Path(args.out or os.environ.get(OUT_ENV) or "lipqgh-out")
    try:
        args.ns = parse_ns(args.n)
        if args.grid:
            parse_grid(args.grid)
        files = HANDLERS[args.command](args, out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for f in files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
