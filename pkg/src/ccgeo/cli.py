"""``ccgeo`` command-line entry point.

Each subcommand writes one JSON document (or CSV table) whose header echoes
the seed, arithmetic mode and every tolerance used. Floats are written with
17 significant digits and outputs are replaced atomically, so a rerun with
the same arguments reproduces the file byte for byte.

Exit status: 0 on success (undecided verdicts included), 1 on parse or
validation errors, 2 when a required estimate did not converge.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import re
import sys
import tempfile
import warnings
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .structures import CATALOG, StructureError, StructureWarning, check_relations, free33_relation_table, resolve_structure

EXIT_OK, EXIT_INVALID, EXIT_UNCONVERGED = 0, 1, 2
DEFAULT_STRUCTURE = "heisenberg1"


class CliError(Exception):
    """Validation failure reported with exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# serialization


def _float_text(v: float) -> str:
    if math.isnan(v):
        return '"nan"'
    if math.isinf(v):
        return '"inf"' if v > 0 else '"-inf"'
    return format(v, ".17g")


def _plain(obj):
    """Convert numpy, rational and tuple values into JSON-ready Python objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if obj is None or isinstance(obj, str):
        return obj
    if hasattr(obj, "to_json"):
        return _plain(obj.to_json())
    # Fraction, mpq and other exact scalars
    return str(obj)


def dumps(obj, indent: int = 2) -> str:
    """JSON text with floats at 17 significant digits and sorted keys."""

    def write(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{_string(k)}: {write(o[k], level + 1)}" for k in sorted(o)]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, list):
            if not o:
                return "[]"
            if all(not isinstance(v, (dict, list)) for v in o):
                return "[" + ", ".join(write(v, level + 1) for v in o) + "]"
            return "[\n" + ",\n".join(pad + write(v, level + 1) for v in o) + "\n" + end + "]"
        if isinstance(o, bool):
            return "true" if o else "false"
        if o is None:
            return "null"
        if isinstance(o, int):
            return str(o)
        if isinstance(o, float):
            return _float_text(o)
        return _string(o)

    return write(_plain(obj), 0) + "\n"


def _string(s) -> str:
    import json

    return json.dumps(str(s), ensure_ascii=False)


def _csv_text(header: dict, columns: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    for key in sorted(header):
        value = header[key]
        if isinstance(value, dict):
            for sub in sorted(value):
                buf.write(f"# {key}.{sub}={_cell(value[sub])}\n")
        else:
            buf.write(f"# {key}={_cell(value)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _cell(v) -> str:
    v = _plain(v)
    if isinstance(v, float):
        return _float_text(v).strip('"')
    if isinstance(v, bool):
        return "true" if v else "false"
    return "" if v is None else str(v)


def write_atomic(path: str | Path, text: str) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# argument helpers


def parse_point(text: str, n: int, mode: str) -> list:
    """Comma-separated coordinates; one value (or ``v...v``) is repeated ``n`` times."""
    text = text.strip()
    m = re.fullmatch(r"(.+?)\.\.\.(.+)", text)
    if m and m.group(1) == m.group(2):
        text = m.group(1)
    tokens = [t.strip() for t in text.split(",") if t.strip()]
    if len(tokens) == 1:
        tokens = tokens * n
    if len(tokens) != n:
        raise CliError(f"point needs {n} coordinates, got {len(tokens)}")
    try:
        if mode == "exact":
            return [Fraction(t) for t in tokens]
        return [float(t) for t in tokens]
    except (ValueError, ZeroDivisionError) as exc:
        raise CliError(f"bad coordinate in {text!r}: {exc}") from exc


def parse_floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise CliError(f"bad number list {text!r}") from exc


def _structure(args):
    if args.structure is None:
        args.structure = DEFAULT_STRUCTURE
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StructureWarning)
        return resolve_structure(args.structure)


def _header(args, **tolerances) -> dict:
    return {
        "command": args.command,
        "structure": getattr(args, "structure", None),
        "seed": args.seed,
        "mode": args.mode,
        "version": __version__,
        "tolerances": tolerances,
    }


class Output:
    """What a subcommand produced: a JSON payload, optional CSV table and exit status."""

    def __init__(self, header: dict, result, columns=None, rows=None, status: int = EXIT_OK):
        self.header = header
        self.result = result
        self.columns = columns
        self.rows = rows
        self.status = status

    def render(self, emit: str) -> str:
        if emit == "csv":
            if self.columns is None:
                raise CliError(f"{self.header['command']} has no CSV form; use --emit json")
            return _csv_text(self.header, self.columns, self.rows)
        return dumps({**self.header, "result": self.result})


# ---------------------------------------------------------------------------
# subcommands


def cmd_catalog(args) -> Output:
    from .structures import catalog

    name = args.name or args.structure
    args.structure = name
    if name is None:
        return Output(_header(args), {"models": sorted(CATALOG)}, ["model"], [[m] for m in sorted(CATALOG)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", StructureWarning)
        s = catalog(name) if name in CATALOG else resolve_structure(name)
    if s.name == "free33":
        table = free33_relation_table()
    elif s.lie_constants:
        table = {(i + 1, j + 1): {l + 1: c for l, c in img.items()} for (i, j), img in s.lie_constants.items()}
    else:
        table = {}
    rel = [{**r, "status": "exact-pass" if r["holds"] else "exact-fail"} for r in check_relations(s, table)]
    result = {"structure": s.to_json(), "relations": rel, "dimension": s.n}
    rows = [[r["pair"][0], r["pair"][1], r["expected"], r["status"]] for r in rel]
    return Output(_header(args), result, ["i", "j", "expected", "status"], rows)


def cmd_bracket(args) -> Output:
    from .involutivity import bracket_form

    s = _structure(args)
    for idx in (args.i, args.j):
        if not 1 <= idx <= s.n:
            raise CliError(f"field index {idx} outside 1..{s.n}")
    field = s.bracket(args.i - 1, args.j - 1)
    result = {"pair": [args.i, args.j], "components": [c.to_expression() for c in field.components], "terms": field.to_json()}
    if args.point is not None:
        pt = parse_point(args.point, s.n, args.mode)
        s.check_point(np.array([float(v) for v in pt]))
        result["bracket_form"] = bracket_form(s, pt).to_json()
    return Output(_header(args), result)


def cmd_involutivity(args) -> Output:
    from .involutivity import NONINVOLUTIVE_THRESHOLD, NULL_THRESHOLD, h_noninvolutive_at, minimal_noninvolutive_order

    s = _structure(args)
    pt = parse_point(args.point, s.n, args.mode)
    s.check_point(np.array([float(v) for v in pt]))
    tol = {"null_threshold": NULL_THRESHOLD, "noninvolutive_threshold": NONINVOLUTIVE_THRESHOLD, "restarts": args.restarts}
    if args.h is None:
        out = minimal_noninvolutive_order(s, pt, restarts=args.restarts, seed=args.seed)
        result = {"order": out["order"], "status": out["status"], "verdicts": [v.to_json() for v in out["verdicts"]]}
    else:
        v = h_noninvolutive_at(s, pt, args.h, restarts=args.restarts, seed=args.seed)
        result = v.to_json()
        if not v.non_involutive and v.verdict == "involutive-at-x":
            result["verdict"] = "not h-non-involutive"
        result["raw_verdict"] = v.verdict
    return Output(_header(args, **tol), result)


def cmd_step(args) -> Output:
    from .structures import hormander_step

    s = _structure(args)
    pt = parse_point(args.point, s.n, args.mode)
    out = hormander_step(s, pt, max_step=args.max_step, tol=args.tol)
    rows = [[i + 1, r] for i, r in enumerate(out["ranks"])]
    return Output(_header(args, rank_tol=args.tol, max_step=args.max_step), out, ["length", "rank"], rows)


def _distance_fn(args, s):
    from .metrics import cc_distance, eta_distance

    if args.metric == "cc":
        return lambda x, y, prev: cc_distance(s, x, y, budget=args.budget, seed=args.seed, warm_start=prev)
    return lambda x, y, prev: eta_distance(s, x, y, args.eta, budget=args.budget, seed=args.seed)


def cmd_ballbox(args) -> Output:
    from .flows import DEFAULT_STEP, ExpChart, ballbox_exponent_fit

    s = _structure(args)
    base = [float(v) for v in parse_point(args.base, s.n, "float")]
    lo, hi, count = args.scales
    scales = np.geomspace(lo, hi, int(count))
    chart = ExpChart(s, base)
    fit = ballbox_exponent_fit(chart, args.direction, _distance_fn(args, s), scales)
    status = EXIT_UNCONVERGED if fit["slope"] is None else EXIT_OK
    rows = [[r["tau"], r["dist_lower"], r["dist_upper"]] for r in fit["rows"]]
    header = _header(args, integrator_step=DEFAULT_STEP, endpoint_tol=1e-6, budget=args.budget, metric=args.metric)
    return Output(header, fit, ["tau", "dist_lower", "dist_upper"], rows, status)


def _pair_points(args, s):
    x = [float(v) for v in parse_point(args.x, s.n, "float")]
    y = [float(v) for v in parse_point(args.y, s.n, "float")]
    return x, y


def _estimate_output(args, est, **tol) -> Output:
    result = est.to_json()
    status = EXIT_OK if est.converged else EXIT_UNCONVERGED
    rows = [[est.lower, est.upper, est.width, est.method, est.status]]
    return Output(_header(args, **tol), result, ["lower", "upper", "width", "method", "status"], rows, status)


def cmd_ccdist(args) -> Output:
    from .metrics import cc_distance
    from .metrics.cc import ENDPOINT_TOL

    s = _structure(args)
    x, y = _pair_points(args, s)
    est = cc_distance(s, x, y, budget=args.budget, seed=args.seed, restarts=args.restarts)
    return _estimate_output(args, est, endpoint_tol=ENDPOINT_TOL, budget=args.budget, restarts=args.restarts)


def cmd_etadist(args) -> Output:
    from .metrics import eta_distance

    s = _structure(args)
    x, y = _pair_points(args, s)
    est = eta_distance(s, x, y, args.eta, budget=args.budget, seed=args.seed, restarts=args.restarts, max_evals=args.max_evals)
    return _estimate_output(args, est, eta=args.eta, budget=args.budget, restarts=args.restarts, max_evals=args.max_evals)


def cmd_squeeze(args) -> Output:
    from .metrics import squeeze_audit

    s = _structure(args)
    rep = squeeze_audit(s, args.metric, args.eta, region=args.region, pairs=args.pairs, bands=args.bands,
                        mode=args.pair_mode, seed=args.seed, jobs=args.jobs)
    rows = [[b["band_lo"], b["band_hi"], b["fitted_C"], b["pairs_used"]] for b in rep["bands"]]
    status = EXIT_UNCONVERGED if not any(b["pairs_used"] for b in rep["bands"]) else EXIT_OK
    header = _header(args, eta=args.eta, region=args.region, bands=args.bands, metric=args.metric)
    return Output(header, rep, ["band_lo", "band_hi", "fitted_C", "pairs_used"], rows, status)


def cmd_tangency(args) -> Output:
    from .metrics import cc_distance
    from .tangency import box_counting_dimension, contact_set, hausdorff_premeasure, resolve_surface

    s = _structure(args)
    surf = resolve_surface(args.surface)
    cloud = contact_set(s, surf, grid=args.grid, tau=args.tau)
    result = cloud.to_json()
    result["surface"] = surf.name
    result["dimension"] = box_counting_dimension(cloud.points).to_json() if len(cloud) else None
    if args.premeasure and len(cloud):
        emb = surf.embed(cloud.points)

        def metric(a, b):
            return cc_distance(s, a, b, seed=args.seed)

        result["premeasure"] = [
            hausdorff_premeasure(emb, metric, 2.0, d).to_json() for d in parse_floats(args.premeasure)
        ]
    dim = surf.dim
    rows = [list(p) + [d] for p, d in zip(cloud.points.tolist(), cloud.deltas.tolist())]
    columns = [f"q{i + 1}" for i in range(dim)] + ["delta"]
    return Output(_header(args, tau=args.tau, grid=args.grid), result, columns, rows)


def cmd_jacobian(args) -> Output:
    from .tangency import DEGENERATE_MD, SeminormSample, metric_jacobian

    try:
        sample = SeminormSample.read_csv(args.seminorm)
    except OSError as exc:
        raise CliError(f"cannot read {args.seminorm}: {exc}") from exc
    value = metric_jacobian(sample, args.m)
    result = {"jacobian": value, "m": args.m, "directions": len(sample.values),
              "degenerate": bool(np.any(sample.values <= DEGENERATE_MD)), "symmetric": sample.symmetric()}
    return Output(_header(args, degenerate_threshold=DEGENERATE_MD), result, ["m", "directions", "jacobian"],
                  [[args.m, len(sample.values), value]])


def cmd_report(args) -> Output:
    from .acceptance import run_all, summary_rows

    only = [int(v) for v in args.only.split(",")] if args.only else None
    rep = run_all(seed=args.seed, jobs=args.jobs, only=only, timings=getattr(args, "timings", None))
    rows = summary_rows(rep)
    rep["summary"] = rows
    table = [[r["id"], r["title"], r["status"], ";".join(r["failed_checks"])] for r in rows]
    return Output(_header(args), rep, ["id", "title", "status", "failed_checks"], table)


COMMANDS = {
    "catalog": cmd_catalog,
    "bracket": cmd_bracket,
    "involutivity": cmd_involutivity,
    "step": cmd_step,
    "ballbox": cmd_ballbox,
    "ccdist": cmd_ccdist,
    "etadist": cmd_etadist,
    "squeeze": cmd_squeeze,
    "tangency": cmd_tangency,
    "jacobian": cmd_jacobian,
    "report": cmd_report,
}


def _scales(text):
    vals = [float(v) for v in text.split(",")]
    if len(vals) != 3 or vals[0] <= 0 or vals[1] <= vals[0] or vals[2] < 2:
        raise argparse.ArgumentTypeError("expected lo,hi,count with 0 < lo < hi and count >= 2")
    return vals


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--structure", help=f"catalog name or TOML file (default {DEFAULT_STRUCTURE})")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--emit", choices=("json", "csv"), default="json")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes")
    common.add_argument("--mode", choices=("exact", "float"), default="exact", help="arithmetic for point inputs")

    parser = _Parser(prog="ccgeo", description="Distributions, bracket forms and anisotropic metrics.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("catalog", parents=[common], help="describe a model and check its relations")
    p.add_argument("--name")

    p = sub.add_parser("bracket", parents=[common], help="bracket of two frame fields")
    p.add_argument("--i", type=int, required=True)
    p.add_argument("--j", type=int, required=True)
    p.add_argument("--point")

    p = sub.add_parser("involutivity", parents=[common], help="h-non-involutivity verdict at a point")
    p.add_argument("--h", type=int)
    p.add_argument("--point", default="0")
    p.add_argument("--restarts", type=int, default=64)

    p = sub.add_parser("step", parents=[common], help="Hörmander step at a point")
    p.add_argument("--point", default="0")
    p.add_argument("--max-step", type=int, default=6)
    p.add_argument("--tol", type=float, default=1e-9)

    p = sub.add_parser("ballbox", parents=[common], help="ball-box exponent along a frame direction")
    p.add_argument("--direction", type=int, required=True)
    p.add_argument("--base", default="0")
    p.add_argument("--scales", type=_scales, default=[1e-3, 1e-1, 8.0])
    p.add_argument("--metric", choices=("cc", "eta"), default="cc")
    p.add_argument("--eta", type=float, default=2.0)
    p.add_argument("--budget", type=int, default=12)

    for name, helptext, budget in (("ccdist", "CC distance bracket", 12), ("etadist", "eta-box distance bracket", 4)):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--x", required=True)
        p.add_argument("--y", required=True)
        p.add_argument("--budget", type=int, default=budget)
        p.add_argument("--restarts", type=int, default=4)
        if name == "etadist":
            p.add_argument("--eta", type=float, default=2.0)
            p.add_argument("--max-evals", type=int, default=60)

    p = sub.add_parser("squeeze", parents=[common], help="squeezedness audit")
    p.add_argument("--metric", choices=("cc", "eta", "euclidean"), default="cc")
    p.add_argument("--eta", type=float, default=2.0)
    p.add_argument("--pairs", type=int, default=32)
    p.add_argument("--bands", type=int, default=4)
    p.add_argument("--region", type=float, default=0.2)
    p.add_argument("--pair-mode", choices=("mixed", "axis", "vertical", "horizontal"), default="mixed")

    p = sub.add_parser("tangency", parents=[common], help="contact cloud of a graph surface")
    p.add_argument("--surface", default="saddle", help="built-in surface name or TOML file")
    p.add_argument("--grid", type=int, default=401)
    p.add_argument("--tau", type=float, default=1e-6)
    p.add_argument("--premeasure", help="comma-separated covering scales for the d_V premeasure")

    p = sub.add_parser("jacobian", parents=[common], help="metric Jacobian of a sampled seminorm")
    p.add_argument("--seminorm", required=True, help="CSV with columns u1..um,value")
    p.add_argument("--m", type=int, required=True)

    p = sub.add_parser("report", parents=[common], help="run the acceptance suite")
    p.add_argument("--only", help="comma-separated criterion ids")
    return parser


def run(argv=None, timings: dict | None = None) -> int:
    """Execute one subcommand; ``timings`` collects per-criterion seconds for ``report``."""
    parser = build_parser()
    args = parser.parse_args(argv)
    args.timings = timings
    if args.jobs < 1:
        parser.error("--jobs must be at least 1")
    try:
        out = COMMANDS[args.command](args)
        text = out.render(args.emit)
    except (CliError, StructureError, ValueError, OSError) as exc:
        print(f"ccgeo {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    if out.status == EXIT_UNCONVERGED:
        print(f"ccgeo {args.command}: a required estimate did not converge", file=sys.stderr)
    return out.status


def main(argv=None) -> None:
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
