"""``bl`` command-line front end."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import replace
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .core import DEFAULT_TOL, BLDatum, Tolerances, datum_from_json, parse_json_text, validate_datum
from .errors import BLError, DatumParseError
from .finiteness import FinitenessStatus, check_scaling, general_finiteness, rank_one_polytope
from .gaussian import GaussianInput, fixed_point_solve
from .heatflow import (
    Direction,
    GridField,
    KernelSpec,
    MonotonicityTrace,
    PointMassList,
    assert_monotone,
    evolve_geometric_heat,
    extreme_gaussian,
    gaussian_mixture,
    geometric_times,
    heat_extension_norm_trace,
    log_concave_trace,
    sliding_gaussian_trace,
    strictly_monotone,
)
from .structure import (
    Extremisability,
    SearchBudget,
    classify_extremisability,
    decompose,
    factorized_constant,
    search_critical_subspaces,
)

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_ERROR, EXIT_UNDETERMINED = 0, 1, 2
VERBS = ("validate", "finiteness", "constant", "extremiser", "structure", "polytope", "heatflow")


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bl", description="Analyze Brascamp-Lieb data: finiteness, gaussian constants, structure, heat flows.")
    p.add_argument("--version", action="version", version=f"bl {__version__}")
    p.add_argument("verb", choices=VERBS)
    p.add_argument("input", help="datum JSON file (heatflow: experiment JSON file)")
    p.add_argument("--tol", type=float, default=DEFAULT_TOL.rank_tol, help="rank tolerance (default %(default)g)")
    p.add_argument("--stat-tol", type=float, default=DEFAULT_TOL.stat_tol, help="stationarity tolerance (default %(default)g)")
    p.add_argument("--max-iter", type=int, default=None, help="solver iteration cap (default: from the budget)")
    p.add_argument("--budget", choices=("small", "default", "large"), default="default")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--csv", help="heatflow: write the trace as CSV to this path")
    p.add_argument("--gnuplot", help="heatflow: write a gnuplot script plotting the CSV")
    p.add_argument("--timings", action="store_true", help="include wall-clock timings (breaks byte-identical output)")
    return p


# ---------------------------------------------------------------------------
# report plumbing


def _jsonable(x: Any) -> Any:
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


class _Context:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.tol = Tolerances(rank_tol=args.tol, stat_tol=args.stat_tol)
        budget = SearchBudget.preset(args.budget)
        if args.max_iter is not None:
            budget = replace(budget, solver_max_iter=args.max_iter)
        self.budget = budget
        # direct solves get a generous cap unless the small preset is asked for
        if args.max_iter is not None:
            self.max_iter = args.max_iter
        else:
            self.max_iter = budget.solver_max_iter if args.budget == "small" else 10000

    def settings(self) -> dict[str, Any]:
        return {
            "tolerances": self.tol.to_dict(),
            "budget": {"preset": self.args.budget, **self.budget.to_dict()},
            "seed": self.args.seed,
            "max_iter": self.max_iter,
        }


def _fmt(v: Any) -> str:
    if v is None:
        return "none"
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


def _rows(label: str, basis: Sequence[Sequence[float]]) -> list[str]:
    out = [f"{label}:"]
    for row in basis:
        out.append("  [" + ", ".join(f"{x + 0.0:.10g}" for x in row) + "]")  # + 0.0 drops negative zeros
    return out


# ---------------------------------------------------------------------------
# verbs; each returns (status, exit code, payload, text lines)


def _verb_validate(datum: BLDatum, ctx: _Context):
    rep = validate_datum(datum, ctx.tol)
    ok, lhs, rhs = check_scaling(datum)
    payload = {**rep.to_dict(), "scaling": {"holds": ok, "lhs": lhs, "rhs": rhs}}
    lines = [
        f"ranks: {list(rep.ranks)} (target dims {list(rep.target_dims)})",
        f"surjective: {rep.all_surjective}",
        f"non-degenerate: {rep.non_degenerate} (common kernel dim {rep.common_kernel.dim})",
        f"scaling: {ok} ({lhs} vs {rhs:.12g})",
    ]
    if rep.zero_exponent_maps:
        lines.append(f"zero-exponent maps (1-based): {[j + 1 for j in rep.zero_exponent_maps]}")
    return ("Valid" if rep.ok else "Invalid"), (EXIT_OK if rep.ok else EXIT_ERROR), payload, lines


def _verb_finiteness(datum: BLDatum, ctx: _Context):
    v = general_finiteness(datum, ctx.budget, ctx.tol, ctx.args.seed)
    payload = v.to_dict()
    lines = []
    if v.certificate is not None:
        c = payload["certificate"]
        lines.append(f"certificate: {c['kind']}")
        if "blg_value" in c:
            lines.append(f"BL_g = {c['blg_value']:.6g}")
    if v.witness is not None:
        w = payload["witness"]
        lines.append(f"witness: {w['kind']}")
        if w["kind"] == "ScalingFailure":
            lines.append(f"  dim H = {w['lhs']} but sum p_j dim H_j = {w['rhs']:.12g}")
        else:
            lines.append(f"  dim V = {w['dim']} > sum p_j dim(B_j V) = {w['weighted_image_dim']:.12g}")
            lines += _rows("witness subspace basis rows", w["basis"])
    if v.status is FinitenessStatus.UNDETERMINED:
        lines.append(f"budget report: stages {v.report.get('stages')}, candidates examined {v.report.get('candidates_examined')}")
    code = EXIT_UNDETERMINED if v.status is FinitenessStatus.UNDETERMINED else EXIT_OK
    return v.status.value, code, payload, lines


def _verb_constant(datum: BLDatum, ctx: _Context):
    ok, lhs, rhs = check_scaling(datum)
    if not ok:
        payload = {"blg_value": float("inf"), "reason": "scaling fails", "lhs": lhs, "rhs": rhs}
        return "Infinite", EXIT_OK, payload, [f"scaling fails ({lhs} vs {rhs:.12g}); the constant is infinite"]
    d = datum.normalized()
    out = fixed_point_solve(d, tol=ctx.tol, max_iter=ctx.max_iter)
    payload: dict[str, Any] = {"solve": out.to_dict(include_trace=False)}
    if out.converged:
        return "Converged", EXIT_OK, {**payload, "blg_value": out.blg_value}, [
            f"BL_g = {out.blg_value:.6g}",
            f"value: {out.blg_value!r}",
            f"iterations: {out.iterations}, residual {out.residual:.3e}",
        ]
    fc = factorized_constant(d, ctx.budget, ctx.tol)
    payload["factorization"] = fc.to_dict()
    lines = [f"solver: {out.status.value} after {out.iterations} iterations ({out.note})"]
    if fc.value is None:
        return out.status.value, EXIT_UNDETERMINED, {**payload, "blg_value": None}, lines + ["no value within budget"]
    if math.isinf(fc.value):
        return "Infinite", EXIT_OK, {**payload, "blg_value": fc.value}, lines + ["dimension violation found; the constant is infinite"]
    return "Factorized", EXIT_OK, {**payload, "blg_value": fc.value}, lines + [
        f"BL_g = {fc.value:.6g}",
        f"value: {fc.value!r} (product over {len(fc.pieces)} pieces of a critical flag)",
    ]


def _verb_extremiser(datum: BLDatum, ctx: _Context):
    d = datum.normalized()
    out = fixed_point_solve(d, tol=ctx.tol, max_iter=ctx.max_iter)
    payload = out.to_dict(include_trace=False)
    lines = [f"iterations: {out.iterations}, residual {out.residual:.3e}, cond(M) {out.cond_M:.3e}"]
    if out.converged:
        lines.insert(0, f"BL_g = {out.blg_value:.6g}")
        for j, a in enumerate(out.extremiser):
            lines += _rows(f"A_{j + 1}", a.tolist())
        return out.status.value, EXIT_OK, payload, lines
    if out.degeneration_subspace is not None:
        lines += _rows("degeneration subspace basis rows", out.degeneration_subspace.basis.T.tolist())
    return out.status.value, EXIT_UNDETERMINED, payload, lines


def _verb_structure(datum: BLDatum, ctx: _Context):
    d = datum.normalized()
    search = search_critical_subspaces(d, ctx.budget, ctx.tol)
    dec = decompose(d, ctx.budget, ctx.tol, ctx.args.seed)
    payload: dict[str, Any] = {"critical_search": search.to_dict(), "decomposition": dec.to_dict()}
    lines = [f"components: {dec.count} (dims {[V.dim for V, _ in dec.components]}, method {dec.method})"]
    if search.report is not None:
        lines.append(f"critical subspace: dim {search.report.subspace.dim}, defect {search.report.defect:.3g}, source {search.report.source.value}")
        lines += _rows("critical subspace basis rows", search.report.subspace.basis.T.tolist())
    else:
        lines.append(f"no critical subspace among {search.candidates_examined} candidates")
    ok, lhs, rhs = check_scaling(d)
    if not ok:
        payload["extremisability"] = {"status": "NotApplicable", "reason": f"scaling fails ({lhs} vs {rhs})"}
        return "NotApplicable", EXIT_OK, payload, lines + ["extremisability: not applicable (scaling fails)"]
    verdict = classify_extremisability(d, ctx.budget, ctx.tol, ctx.args.seed)
    payload["extremisability"] = verdict.to_dict()
    lines.append(f"extremisability: {verdict.status.value}")
    code = EXIT_UNDETERMINED if verdict.status is Extremisability.UNDETERMINED else EXIT_OK
    return verdict.status.value, code, payload, lines


def _verb_polytope(datum: BLDatum, ctx: _Context):
    poly = rank_one_polytope(datum, ctx.tol)
    lines = [f"vertices ({len(poly.vertices)}):"] + ["  (" + ",".join(map(str, v)) + ")" for v in poly.vertices]
    lines.append("H-representation:")
    lines += ["  " + ln for ln in poly.h_representation().splitlines()]
    return "Computed", EXIT_OK, {**poly.to_dict(), "h_representation": poly.h_representation()}, lines


# heatflow experiment files -------------------------------------------------


def _field_from_descriptor(desc: Any, dim: int, path: str, half_width: float, points: int) -> GridField:
    if not isinstance(desc, dict) or "kind" not in desc:
        raise DatumParseError("input descriptor must be an object with a 'kind'", path)
    kind = desc["kind"]
    if kind == "bumps":
        comps = []
        for i, c in enumerate(desc.get("components", [])):
            centre = c.get("centre", [0.0] * dim)
            if len(centre) != dim:
                raise DatumParseError(f"centre has {len(centre)} entries, expected {dim}", f"{path}.components[{i}].centre")
            comps.append((float(c.get("weight", 1.0)), centre, float(c["width"])))
        if not comps:
            raise DatumParseError("bumps need at least one component", path)
        return GridField.from_function(gaussian_mixture(comps), dim, half_width, points)
    if kind == "extreme":
        return GridField.from_function(extreme_gaussian, dim, half_width, points)
    if kind == "grid":
        return GridField(np.asarray(desc["values"], dtype=float), float(desc["half_width"]))
    raise DatumParseError(f"unknown input kind {kind!r} (bumps, extreme, grid)", path)


def _masses(obj: Any, path: str) -> PointMassList:
    if not isinstance(obj, list) or not obj:
        raise DatumParseError("point masses must be a nonempty list", path)
    pts, wts = [], []
    for i, e in enumerate(obj):
        if not isinstance(e, dict) or "point" not in e:
            raise DatumParseError("point mass needs 'point' (and optional 'weight')", f"{path}[{i}]")
        pt = e["point"]
        pts.append(pt if isinstance(pt, list) else [pt])
        wts.append(float(e.get("weight", 1.0)))
    return PointMassList(np.array(pts, dtype=float), np.array(wts))


def _times(obj: Any) -> np.ndarray:
    if obj is None:
        return geometric_times()
    if isinstance(obj, dict):
        return geometric_times(float(obj.get("t0", 0.05)), float(obj.get("ratio", 1.3)), int(obj.get("count", 25)))
    return np.asarray(obj, dtype=float)


def _kernel(obj: Any, path: str) -> KernelSpec:
    kind = obj.get("kind") if isinstance(obj, dict) else None
    if kind == "exponential":
        return KernelSpec.exponential(float(obj.get("rate", 1.0)), int(obj.get("dim", 1)))
    if kind == "gaussian":
        return KernelSpec.gaussian(np.asarray(obj["matrix"], dtype=float))
    if kind == "tabulated":
        return KernelSpec.tabulated(GridField(np.asarray(obj["values"], dtype=float), float(obj["half_width"])))
    raise DatumParseError("kernel kind must be exponential, gaussian or tabulated", path)


def run_heatflow(spec: dict[str, Any]) -> tuple[MonotonicityTrace, Direction, dict[str, Any]]:
    mode = spec.get("mode")
    if mode == "geometric":
        datum = datum_from_json(spec["datum"], "$.datum")
        grid = spec.get("grid", {})
        half = float(grid.get("half_width", 60.0))
        tpts = int(grid.get("target_points", 512))
        fields = [
            _field_from_descriptor(d, k, f"$.inputs[{j}]", half, tpts)
            for j, (d, k) in enumerate(zip(spec.get("inputs", []), datum.target_dims))
        ]
        trace = evolve_geometric_heat(datum, fields, _times(spec.get("times")), grid.get("points"))
        extra = {"limit": trace.limit, "final_over_limit": float(trace.values[-1] / trace.limit)}
        return trace, Direction.NON_DECREASING, extra
    if mode == "sliding":
        datum = datum_from_json(spec["datum"], "$.datum")
        A = GaussianInput(tuple(np.atleast_2d(np.asarray(a, dtype=float)) for a in spec["A"]))
        masses = [_masses(m, f"$.masses[{j}]") for j, m in enumerate(spec["masses"])]
        trace = sliding_gaussian_trace(datum, A, masses, np.asarray(spec["s_values"], dtype=float))
        return trace, Direction.NON_INCREASING, {}
    if mode == "log_concave":
        trace = log_concave_trace(_kernel(spec.get("kernel"), "$.kernel"), _masses(spec.get("masses"), "$.masses"), float(spec["p"]), _times(spec.get("times")))
        return trace, Direction.NON_INCREASING, {}
    if mode == "heat_extension":
        trace = heat_extension_norm_trace(_masses(spec.get("masses"), "$.masses"), float(spec["p"]), _times(spec.get("times")))
        return trace, Direction.NON_DECREASING, {"strictly_increasing": trace.meta["strictly_increasing"]}
    raise DatumParseError("mode must be geometric, sliding, log_concave or heat_extension", "$.mode")


_GNUPLOT = """# plot of {label}: Q(t) with error bars
set datafile separator ','
set key autotitle columnhead
set logscale x
set xlabel 't'
set ylabel 'Q(t)'
plot '{csv}' using 1:2:3 with yerrorlines title '{label}'
"""


def _verb_heatflow(spec: dict[str, Any], ctx: _Context):
    trace, direction, extra = run_heatflow(spec)
    check = assert_monotone(trace, direction)
    payload = {
        "mode": spec.get("mode"),
        "check": check.to_dict(),
        "strict": strictly_monotone(trace, direction),
        "trace": trace.to_dict(),
        **extra,
    }
    lines = [
        f"mode: {spec.get('mode')}, {len(trace.times)} samples, t in [{trace.times[0]:.4g}, {trace.times[-1]:.4g}]",
        f"monotone {direction.value}: {'pass' if check.passed else 'FAIL'} (violations {check.violations}, worst {check.worst_violation:.3e})",
        f"Q first/last: {trace.values[0]:.10g} / {trace.values[-1]:.10g}, max error bound {trace.error_bound.max():.3e}",
    ]
    if trace.limit is not None:
        lines.append(f"limit prod (int f_j)^p_j = {trace.limit:.10g}")
    if ctx.args.csv:
        with open(ctx.args.csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(trace.to_csv())
        lines.append(f"csv: {ctx.args.csv}")
    if ctx.args.gnuplot:
        csv_name = ctx.args.csv or "trace.csv"
        with open(ctx.args.gnuplot, "w", encoding="utf-8") as fh:
            fh.write(_GNUPLOT.format(label=trace.label, csv=csv_name))
        lines.append(f"gnuplot: {ctx.args.gnuplot}")
    return ("Pass" if check.passed else "Fail"), (EXIT_OK if check.passed else EXIT_ERROR), payload, lines


_VERBS: dict[str, Callable] = {
    "validate": _verb_validate,
    "finiteness": _verb_finiteness,
    "constant": _verb_constant,
    "extremiser": _verb_extremiser,
    "structure": _verb_structure,
    "polytope": _verb_polytope,
}


# ---------------------------------------------------------------------------
# entry points


def run(argv: Sequence[str] | None = None) -> tuple[int, dict[str, Any], str]:
    """Parse ``argv``, run the verb and return ``(exit code, report, rendered output)``."""
    return execute(build_parser().parse_args(argv))


def execute(args: argparse.Namespace) -> tuple[int, dict[str, Any], str]:
    ctx = _Context(args)
    report: dict[str, Any] = {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "bl", "version": __version__},
        "verb": args.verb,
        "input": os.path.basename(args.input),
        **ctx.settings(),
    }
    started = time.perf_counter()
    with open(args.input, encoding="utf-8") as fh:
        text = fh.read()
    if args.verb == "heatflow":
        spec = parse_json_text(text)
        if not isinstance(spec, dict):
            raise DatumParseError("experiment file must be a JSON object", "$")
        if "datum" in spec:
            report["datum"] = datum_from_json(spec["datum"], "$.datum").digest()
        status, code, payload, lines = _verb_heatflow(spec, ctx)
    else:
        datum = datum_from_json(parse_json_text(text))
        report["datum"] = datum.digest()
        status, code, payload, lines = _VERBS[args.verb](datum, ctx)
    report["status"] = status
    report["exit_code"] = code
    report["result"] = payload
    if args.timings:
        report["timings"] = {"wall_seconds": time.perf_counter() - started}
    report = _jsonable(report)
    return code, report, render(report, lines, args.format)


def render(report: dict[str, Any], lines: Sequence[str], fmt: str) -> str:
    if fmt == "json":
        return json.dumps(report, indent=2) + "\n"
    head = [f"bl {report['verb']} {report['input']} (version {report['tool']['version']})"]
    if "datum" in report:
        d = report["datum"]
        head.append(f"datum: n={d['dim']} target_dims={d['target_dims']} exponents={[_fmt(p) for p in d['exponents']]}")
        head.append(f"datum sha256: {d['sha256']}")
    t = report["tolerances"]
    head.append("tolerances: " + " ".join(f"{k}={_fmt(v)}" for k, v in t.items()))
    head.append("budget: " + " ".join(f"{k}={v}" for k, v in report["budget"].items()))
    head.append(f"seed: {report['seed']}")
    head.append(f"status: {report['status']}")
    tail = [f"timings: {report['timings']['wall_seconds']:.3f} s"] if "timings" in report else []
    return "\n".join(head + list(lines) + tail) + "\n"


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        code, _, text = execute(args)
    except KeyError as exc:
        print(f"bl: error: missing key {exc.args[0]!r} in {args.input}", file=sys.stderr)
        return EXIT_ERROR
    except (BLError, OSError, TypeError, ValueError) as exc:
        print(f"bl: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
