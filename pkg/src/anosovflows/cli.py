"""Config-driven command line: run verifiers, export fields as CSV, list the registries.

Config files are YAML::

    model:
      name: cat_suspension
      params: {}
    seed: 0
    splitting: {T: 10.0, step: 0.01}
    verifiers:
      - metric1
      - id: domination
        grid: 3
        T: 20.0
    output:
      report: report.json
      verbosity: 1
    exports:
      - field: r_u
        grid: 8
        path: r_u.csv

Exit status: 0 when every verdict passes, 1 when any verdict is fail or
inconclusive, 2 on a configuration or evaluation error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import yaml

from . import __version__
from .contact import coframe_from_splitting, induced_growth_rates
from .dynamics import DEFAULT_STEP, domination_report
from .errors import AnosovFlowsError, ConfigError
from .fields import contact_volume, divergence
from .manifolds import MODELS, build_model
from .verifiers import VERIFIERS, _base_report, get_splitting, run_verifier

EXPORT_FIELDS = ("contact", "div", "domination", "r_s", "r_u")
EXPORT_CHUNK = 64  # fixed so results do not depend on the worker count

# (kind, low, high, low_inclusive) per numeric option
_RANGES = {
    "grid": ("int", 1, 64, True),
    "n_random": ("int", 0, 100_000, True),
    "seed": ("int", 0, 2**32 - 1, True),
    "T": ("float", 0.0, 1000.0, False),
    "step": ("float", 0.0, 1.0, False),
    "delta": ("float", 0.0, 0.1, False),
    "scale": ("float", 0.0, 1e6, False),
    "n_samples": ("int", 4, 4096, True),
    "verbosity": ("int", 0, 2, True),
}
_TOL_RANGE = ("float", 0.0, 1.0, False)


@dataclass
class VerifierSpec:
    id: str
    grid: int | None = None
    n_random: int | None = None
    seed: int | None = None
    options: dict = field(default_factory=dict)


@dataclass
class ExportSpec:
    field: str
    path: str | None
    grid: int = 8
    form: str = "alpha_plus"
    T: float = 30.0
    step: float = DEFAULT_STEP


@dataclass
class RunConfig:
    model: str
    params: dict
    seed: int = 0
    splitting: dict = field(default_factory=dict)
    verifiers: list = field(default_factory=list)
    report: str | None = None
    verbosity: int = 1
    include_runtime: bool = False
    exports: list = field(default_factory=list)

    def describe(self) -> dict:
        return {
            "model": {"name": self.model, "params": dict(self.params)},
            "seed": self.seed,
            "splitting": dict(self.splitting),
            "verifiers": [
                {"id": v.id, "grid": v.grid, "n_random": v.n_random, "seed": v.seed, "options": v.options}
                for v in self.verifiers
            ],
        }


# parsing ----------------------------------------------------------------------------


class _Located:
    """Parsed YAML data plus the node tree, for line numbers in diagnostics."""

    def __init__(self, text: str, source: str):
        self.source = source
        try:
            self.node = yaml.compose(text, Loader=yaml.SafeLoader)
            self.data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f"line {mark.line + 1}" if mark is not None else "unknown line"
            raise ConfigError(f"{source}: {where}: malformed YAML: {getattr(exc, 'problem', exc)}") from None

    def line(self, path) -> int | None:
        node = self.node
        best = node.start_mark.line + 1 if node is not None else None
        for key in path:
            if isinstance(node, yaml.MappingNode):
                nxt = next((v for k, v in node.value if k.value == key), None)
                if nxt is None:
                    break
                node = nxt
            elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
                node = node.value[key]
            else:
                break
            best = node.start_mark.line + 1
        return best

    def error(self, path, message: str) -> ConfigError:
        name = "".join(f"[{k}]" if isinstance(k, int) else (f".{k}" if i else str(k)) for i, k in enumerate(path))
        line = self.line(path)
        where = f"line {line}, " if line is not None else ""
        return ConfigError(f"{self.source}: {where}field {name or '<root>'}: {message}")


def _number(doc: _Located, path, value, kind: str, lo, hi, lo_incl: bool):
    if isinstance(value, bool):
        raise doc.error(path, f"expected a number, got {value!r}")
    if isinstance(value, str):
        try:
            value = float(value)
        except ValueError:
            raise doc.error(path, f"expected a number, got {value!r}") from None
    if not isinstance(value, (int, float)) or not np.isfinite(value):
        raise doc.error(path, f"expected a number, got {value!r}")
    if kind == "int":
        if float(value) != int(value):
            raise doc.error(path, f"expected an integer, got {value!r}")
        value = int(value)
    else:
        value = float(value)
    ok_lo = value >= lo if lo_incl else value > lo
    if not (ok_lo and value <= hi):
        bracket = "[" if lo_incl else "("
        raise doc.error(path, f"value {value!r} outside {bracket}{lo}, {hi}]")
    return value


def _option(doc: _Located, path, name: str, value):
    if name in _RANGES:
        return _number(doc, path, value, *_RANGES[name])
    if name.endswith("tol"):
        return _number(doc, path, value, *_TOL_RANGE)
    if name == "which":
        if value not in ("alpha_plus", "alpha_minus"):
            raise doc.error(path, "expected alpha_plus or alpha_minus")
        return value
    if name in ("T_values", "s_values"):
        if not isinstance(value, list) or not value:
            raise doc.error(path, "expected a non-empty list of numbers")
        lo_incl = name == "T_values"
        return [_number(doc, [*path, i], v, "float", 0.0, 1000.0, lo_incl) for i, v in enumerate(value)]
    raise doc.error(path, f"no validation rule for option {name!r}")


def _mapping(doc: _Located, path, value, allowed):
    if value is None:
        value = {}
    if not isinstance(value, dict):
        raise doc.error(path, "expected a mapping")
    unknown = sorted(set(value) - set(allowed), key=str)
    if unknown:
        raise doc.error([*path, unknown[0]], f"unknown key; expected one of {sorted(allowed)}")
    return value


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Validate a YAML config; every problem raises ConfigError naming the line and field."""
    doc = _Located(text, source)
    top = _mapping(doc, [], doc.data, ("model", "seed", "splitting", "verifiers", "output", "exports"))
    if "model" not in top:
        raise doc.error(["model"], "required")
    model = _mapping(doc, ["model"], top["model"], ("name", "params"))
    name = model.get("name")
    if name not in MODELS:
        raise doc.error(["model", "name"], f"unknown model {name!r}; choose from {sorted(MODELS)}")
    params = _mapping(doc, ["model", "params"], model.get("params"), MODELS[name][1])
    params = {k: v for k, v in params.items()}

    cfg = RunConfig(model=name, params=params)
    if "seed" in top:
        cfg.seed = _number(doc, ["seed"], top["seed"], *_RANGES["seed"])
    split = _mapping(doc, ["splitting"], top.get("splitting"), ("T", "step"))
    cfg.splitting = {k: _option(doc, ["splitting", k], k, v) for k, v in split.items()}

    entries = top.get("verifiers") or []
    if not isinstance(entries, list):
        raise doc.error(["verifiers"], "expected a list")
    for i, entry in enumerate(entries):
        path = ["verifiers", i]
        if isinstance(entry, str):
            entry = {"id": entry}
        if not isinstance(entry, dict) or "id" not in entry:
            raise doc.error(path, "expected a verifier id or a mapping with an id")
        vid = entry["id"]
        if vid not in VERIFIERS:
            raise doc.error([*path, "id"] if len(entry) > 1 else path,
                            f"unknown verifier {vid!r}; choose from {sorted(VERIFIERS)}")
        info = VERIFIERS[vid]
        allowed = ("id", "grid", "n_random", "seed", *info.options)
        _mapping(doc, path, entry, allowed)
        spec = VerifierSpec(vid)
        for key, value in entry.items():
            if key == "id":
                continue
            value = _option(doc, [*path, key], key, value)
            if key in ("grid", "n_random", "seed"):
                setattr(spec, key, value)
            if key in info.options:
                spec.options[key] = value
        cfg.verifiers.append(spec)

    out = _mapping(doc, ["output"], top.get("output"), ("report", "verbosity", "include_runtime"))
    if out.get("report") is not None:
        if not isinstance(out["report"], str):
            raise doc.error(["output", "report"], "expected a path")
        cfg.report = out["report"]
    if "verbosity" in out:
        cfg.verbosity = _option(doc, ["output", "verbosity"], "verbosity", out["verbosity"])
    if "include_runtime" in out:
        if not isinstance(out["include_runtime"], bool):
            raise doc.error(["output", "include_runtime"], "expected true or false")
        cfg.include_runtime = out["include_runtime"]

    exports = top.get("exports") or []
    if not isinstance(exports, list):
        raise doc.error(["exports"], "expected a list")
    for i, entry in enumerate(exports):
        path = ["exports", i]
        entry = _mapping(doc, path, entry, ("field", "path", "grid", "form", "T", "step"))
        if entry.get("field") not in EXPORT_FIELDS:
            raise doc.error([*path, "field"], f"unknown field {entry.get('field')!r}; choose from {list(EXPORT_FIELDS)}")
        spec = ExportSpec(entry["field"], entry.get("path"))
        if spec.path is not None and not isinstance(spec.path, str):
            raise doc.error([*path, "path"], "expected a path")
        for key in ("grid", "T", "step"):
            if key in entry:
                setattr(spec, key, _option(doc, [*path, key], key, entry[key]))
        if "form" in entry:
            spec.form = _option(doc, [*path, "form"], "which", entry["form"])
        cfg.exports.append(spec)
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, path)


# running ----------------------------------------------------------------------------


def _run_one(spec: VerifierSpec, model, flow, cfg: RunConfig):
    info = VERIFIERS[spec.id]
    grid = spec.grid if spec.grid is not None else info.sample[0]
    n_random = spec.n_random if spec.n_random is not None else info.sample[1]
    seed = spec.seed if spec.seed is not None else cfg.seed
    points = model.sample_points(grid, n_random, seed)
    options = dict(spec.options)
    if "seed" in info.options:
        options.setdefault("seed", seed)
    split_params = {**cfg.splitting, "seed": cfg.seed}
    try:
        rep = run_verifier(spec.id, model, flow, points, options, split_params)
    except Exception as exc:  # an unexpected failure must still surface as an error report
        rep = _base_report(spec.id, model)
        rep.error = f"{type(exc).__name__}: {exc}"
    rep.provenance["points"] = {"grid": grid, "n_random": n_random, "seed": seed}
    return rep


def run_reports(cfg: RunConfig, workers: int = 1):
    """Verification reports in config order; the worker count only changes scheduling."""
    model, flow = build_model(cfg.model, cfg.params)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda s: _run_one(s, model, flow, cfg), cfg.verifiers))


def exit_code(reports) -> int:
    if any(r.error is not None for r in reports):
        return 2
    return 0 if all(r.verdict == "pass" for r in reports) else 1


def report_document(cfg: RunConfig, reports, include_runtime: bool = False) -> dict:
    counts = {v: sum(r.verdict == v for r in reports) for v in ("pass", "fail", "inconclusive")}
    return {
        "tool": "anosovflows",
        "tool_version": __version__,
        "config": cfg.describe(),
        "summary": {**counts, "errors": sum(r.error is not None for r in reports), "exit_code": exit_code(reports)},
        "reports": [r.to_dict(include_runtime) for r in reports],
    }


def dumps_report(doc: dict) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


# exports ----------------------------------------------------------------------------


def field_values(name: str, model, flow, points, *, form="alpha_plus", T=30.0, step=DEFAULT_STEP, seed=0,
                 split_params=None):
    """Values of a named computable field at ``points``."""
    if name in ("r_s", "r_u"):
        split = get_splitting(model, flow, **{**(split_params or {}), "seed": seed})
        rates = induced_growth_rates(coframe_from_splitting(split.E_s, split.E_u, flow.X, model), flow.X)
        return (rates.r_s if name == "r_s" else rates.r_u)(points)
    if name == "div":
        Omega = flow.invariant_volume if flow.invariant_volume is not None else model.reference_volume()
        return divergence(flow.X, Omega)(points)
    if name == "contact":
        if form not in flow.forms:
            raise ConfigError(f"model {model.name} provides no form {form!r}")
        return contact_volume(flow.forms[form])(points)
    if name == "domination":
        dr = domination_report(model, flow, points, T, step, seed=seed)
        return dr.r_u - dr.r_s
    raise ConfigError(f"unknown field {name!r}")


def export_rows(spec: ExportSpec, model, flow, cfg: RunConfig, workers: int = 1):
    """Grid points (row-major, x slowest) and the field values there."""
    pts = model.grid(spec.grid)
    chunks = [pts[i:i + EXPORT_CHUNK] for i in range(0, len(pts), EXPORT_CHUNK)]

    def work(chunk):
        return np.asarray(
            field_values(spec.field, model, flow, chunk, form=spec.form, T=spec.T, step=spec.step, seed=cfg.seed,
                         split_params=cfg.splitting),
            dtype=float,
        ).reshape(-1)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        vals = np.concatenate(list(pool.map(work, chunks)))
    return pts, vals


def format_csv(points, values) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "y", "z", "value"])
    for p, v in zip(points, values):
        w.writerow([repr(float(c)) for c in (*p, v)])
    return buf.getvalue()


def _write(path: str | None, text: str):
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _do_exports(cfg, model, flow, workers, out=None) -> int:
    if out is not None and len(cfg.exports) != 1:
        raise ConfigError("--out with export needs exactly one entry under exports")
    for spec in cfg.exports:
        pts, vals = export_rows(spec, model, flow, cfg, workers)
        _write(out if out is not None else spec.path, format_csv(pts, vals))
    return 0


# commands ---------------------------------------------------------------------------


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg.seed = args.seed
    if args.workers < 1:
        raise ConfigError("--workers must be at least 1")
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    if not cfg.verifiers:
        raise ConfigError(f"{args.config}: field verifiers: at least one verifier is required")
    model, flow = build_model(cfg.model, cfg.params)
    reports = run_reports(cfg, args.workers)
    include_runtime = cfg.include_runtime or args.include_runtime
    _write(args.out if args.out is not None else cfg.report, dumps_report(report_document(cfg, reports, include_runtime)))
    if cfg.verbosity >= 1:
        for r in reports:
            extra = f" ({r.error})" if r.error else (f" failed: {', '.join(r.failed_checks())}" if r.failed_checks() else "")
            print(f"{r.theorem_id}: {'error' if r.error else r.verdict}{extra}", file=sys.stderr)
    code = exit_code(reports)
    if cfg.exports:
        _do_exports(cfg, model, flow, args.workers)
    return code


def cmd_export(args) -> int:
    cfg = _load(args)
    if not cfg.exports:
        raise ConfigError(f"{args.config}: field exports: at least one export is required")
    model, flow = build_model(cfg.model, cfg.params)
    return _do_exports(cfg, model, flow, args.workers, args.out)


def list_models() -> str:
    lines = []
    for name in sorted(MODELS):
        params = MODELS[name][1]
        desc = ", ".join(f"{k}={params[k]!r}" for k in sorted(params)) or "no parameters"
        lines.append(f"{name}: {desc}")
    return "\n".join(lines) + "\n"


def list_verifiers() -> str:
    lines = []
    for vid in sorted(VERIFIERS):
        info = VERIFIERS[vid]
        line = f"{vid}: {info.target}; options: {', '.join(sorted(info.options))}"
        if info.requires:
            line += f"; requires: {', '.join(info.requires)}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anosovflows", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("run", "run the configured verifiers and write a JSON report"),
                        ("export", "write configured fields on a grid as CSV")]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, metavar="PATH")
        p.add_argument("--workers", type=int, default=1, metavar="N")
        p.add_argument("--seed", type=int, default=None, metavar="N", help="overrides the config seed")
        p.add_argument("--out", default=None, metavar="PATH", help="output path; - for stdout")
        if name == "run":
            p.add_argument("--include-runtime", action="store_true", help="record wall-clock time per report")
    sub.add_parser("list-models", help="built-in models and their default parameters")
    sub.add_parser("list-verifiers", help="registered verifiers and what they check")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-models":
        sys.stdout.write(list_models())
        return 0
    if args.command == "list-verifiers":
        sys.stdout.write(list_verifiers())
        return 0
    try:
        return cmd_run(args) if args.command == "run" else cmd_export(args)
    except (ConfigError, AnosovFlowsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
