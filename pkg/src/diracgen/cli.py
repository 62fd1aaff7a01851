"""Batch front end: load problem files, run the pipelines, emit reports.

Problem files are JSON (schema documented in the README, versioned by the
``format_version`` field).  Machine-readable output is line-delimited
JSON with sorted keys, so a fixed input file and seed produce
byte-identical reports.  A human-readable summary goes to stderr.

Exit codes: 0 all checks pass, 1 verification failure, 2 input error,
3 numerical breakdown.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys

import numpy as np

from .calculus import OneForm, PontryaginSection, VectorField
from .dirac import (
    DiracStructure,
    InfinitesimalAction,
    PoissonBivector,
    QuotientMap,
    constant_rank_scan,
    descending_generators,
    graph_of_poisson,
    is_closed,
    pushforward_check,
)
from .distribution import GeneralizedDistribution, check_bracket_hypothesis
from .errors import (
    DiracgenError,
    InputError,
    NumericalBreakdownError,
    VerificationError,
)
from .invariant_gen import FoliatedProblem, run as run_invariant
from .report import Report
from .symexpr import Chart, parse

FORMAT_VERSION = 1

EXIT_PASS = 0
EXIT_VERIFICATION = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


# -- problem file loading ---------------------------------------------------


def _require(block: dict, key: str, where: str):
    if key not in block:
        raise InputError(f"{where}: missing required key '{key}'")
    return block[key]


def load_problem(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read problem file: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(data, dict):
        raise InputError(f"{path}: top level must be an object")
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise InputError(
            f"{path}: unsupported format_version {version!r} (expected {FORMAT_VERSION})"
        )
    data["_raw_text"] = text
    return data


def _chart_from(block: dict, where: str = "chart") -> Chart:
    names = tuple(_require(block, "names", where))
    k = int(block.get("k", 0))
    box = block.get("box")
    if box is not None:
        box = tuple(tuple(float(v) for v in pair) for pair in box)
    try:
        if box is None:
            return Chart(coord_names=names, leaf_count=k)
        return Chart(coord_names=names, leaf_count=k, box=box)
    except DiracgenError as exc:
        raise InputError(f"{where}: {exc}") from exc


def _expr(text, chart: Chart, where: str):
    try:
        return parse(str(text), chart)
    except InputError as exc:
        raise InputError(f"{where}: {exc}") from exc


def _section_from(block: dict, chart: Chart, where: str) -> PontryaginSection:
    vec = _require(block, "vector", where)
    form = _require(block, "form", where)
    if len(vec) != chart.n or len(form) != chart.n:
        raise InputError(f"{where}: vector and form need {chart.n} components each")
    return PontryaginSection(
        VectorField(chart, tuple(_expr(c, chart, f"{where}.vector[{i}]") for i, c in enumerate(vec))),
        OneForm(chart, tuple(_expr(c, chart, f"{where}.form[{i}]") for i, c in enumerate(form))),
    )


def _section_list(blocks, chart: Chart, where: str) -> tuple[PontryaginSection, ...]:
    return tuple(
        _section_from(b, chart, f"{where}[{i}]") for i, b in enumerate(blocks)
    )


def _action_from(data: dict, chart: Chart) -> InfinitesimalAction | None:
    block = data.get("action")
    if block is None:
        return None
    gens = []
    for i, coeffs in enumerate(_require(block, "generators", "action")):
        if len(coeffs) != chart.n:
            raise InputError(f"action.generators[{i}]: needs {chart.n} components")
        gens.append(
            VectorField(
                chart,
                tuple(
                    _expr(c, chart, f"action.generators[{i}][{j}]")
                    for j, c in enumerate(coeffs)
                ),
            )
        )
    constants = block.get("structure_constants")
    if constants is not None:
        constants = tuple(tuple(tuple(float(v) for v in row) for row in mat) for mat in constants)
    return InfinitesimalAction(chart, tuple(gens), constants)


def _poisson_from(data: dict, chart: Chart) -> PoissonBivector | None:
    block = data.get("poisson")
    if block is None:
        return None
    if len(block) != chart.n or any(len(row) != chart.n for row in block):
        raise InputError(f"poisson: components must form an {chart.n} x {chart.n} matrix")
    comps = tuple(
        tuple(_expr(c, chart, f"poisson[{i}][{j}]") for j, c in enumerate(row))
        for i, row in enumerate(block)
    )
    return PoissonBivector(chart, comps)


def _quotient_from(data: dict, chart: Chart) -> QuotientMap | None:
    block = data.get("quotient")
    if block is None:
        return None
    target = _chart_from(_require(block, "target", "quotient"), "quotient.target")
    comps = tuple(
        _expr(c, chart, f"quotient.components[{i}]")
        for i, c in enumerate(_require(block, "components", "quotient"))
    )
    try:
        return QuotientMap(chart, target, comps)
    except DiracgenError as exc:
        raise InputError(f"quotient: {exc}") from exc


def _numerics(data: dict, args) -> dict:
    block = dict(data.get("numerics") or {})
    out = {
        "tol": block.get("tol", 1e-7),
        "ode_step": block.get("ode_step"),
        "quad_step": block.get("quad_step"),
        "samples": block.get("samples", 32),
        "seed": block.get("seed", 0),
    }
    if args.tol is not None:
        out["tol"] = args.tol
    if args.ode_step is not None:
        out["ode_step"] = args.ode_step
    if args.quad_step is not None:
        out["quad_step"] = args.quad_step
    if args.samples is not None:
        out["samples"] = args.samples
    if args.seed is not None:
        out["seed"] = args.seed
    out["tol"] = float(out["tol"])
    out["samples"] = int(out["samples"])
    out["seed"] = int(out["seed"])
    for key in ("ode_step", "quad_step"):
        if out[key] is not None:
            out[key] = float(out[key])
    return out


# -- output -----------------------------------------------------------------

_STAGE_BY_PREFIX = [
    ("bracket-hypothesis", "hypotheses"),
    ("frame-spans", "Step 3"),
    ("frame-leaf-invariance", "Step 2"),
    ("correction", "Step 4"),
    ("corrected-leaf-invariance", "Step 4"),
    ("lagrangian", "validity"),
    ("courant-closure", "validity"),
    ("action-", "validity"),
    ("quotient-", "validity"),
    ("constant-rank", "rank scan"),
    ("supplied-family", "rank scan"),
    ("frame-forms-action", "descending"),
    ("frame-vectors-preserve", "descending"),
    ("annihilator-frame", "descending"),
    ("pushed-", "pushforward"),
    ("reduced-", "pushforward"),
    ("fiber-", "pushforward"),
]


def _stage_for(check: str) -> str:
    for prefix, stage in _STAGE_BY_PREFIX:
        if check.startswith(prefix):
            return stage
    return ""


class _Emitter:
    """Write line-delimited JSON records to the output stream and a short
    human-readable summary to stderr."""

    def __init__(self, output_path: str | None):
        if output_path:
            self._fh = open(output_path, "w", encoding="utf-8")
            self._owned = True
        else:
            self._fh = sys.stdout
            self._owned = False

    def close(self):
        if self._owned:
            self._fh.close()

    def line(self, obj: dict):
        self._fh.write(json.dumps(obj, sort_keys=True, default=float))
        self._fh.write("\n")

    def provenance(self, command: str, raw_text: str, numerics: dict):
        digest = hashlib.sha256(raw_text.encode("utf-8")).hexdigest()
        self.line(
            {
                "record": "provenance",
                "command": command,
                "input_sha256": digest,
                "format_version": FORMAT_VERSION,
                **{k: numerics[k] for k in sorted(numerics)},
            }
        )

    def checks(self, report: Report):
        for r in report:
            if not r.stage:
                r.stage = _stage_for(r.check)
            self.line({"record": "check", **r.as_dict()})
            mark = "pass" if r.passed else "FAIL"
            print(
                f"[{mark}] {r.check}: worst residual {r.worst_residual:.3e} (tol {r.tol:.1e})",
                file=sys.stderr,
            )

    def verdict(self, passed: bool, failed_stage: str = ""):
        code = EXIT_PASS if passed else EXIT_VERIFICATION
        obj = {"record": "verdict", "passed": passed, "exit_code": code}
        if failed_stage:
            obj["failed_stage"] = failed_stage
        self.line(obj)
        print("verdict:", "pass" if passed else f"FAIL ({failed_stage or 'checks'})", file=sys.stderr)
        return code


def _sample_points(chart: Chart, numerics: dict):
    return chart.sample_points(seed=numerics["seed"], n_random=numerics["samples"], margin=0.1)


def _foliated_problem(data: dict, chart: Chart, numerics: dict) -> FoliatedProblem:
    sections = data.get("sections") or {}
    gens = sections.get("D")
    if not gens:
        raise InputError("sections.D: a spanning family is required")
    generators = _section_list(gens, chart, "sections.D")
    extra = sections.get("extra")
    if extra is not None:
        extra = _section_from(extra, chart, "sections.extra")
    try:
        return FoliatedProblem(
            chart=chart,
            generators=generators,
            extra=extra,
            ode_step=numerics["ode_step"],
            quad_step=numerics["quad_step"],
            tol=numerics["tol"],
        )
    except (VerificationError, NumericalBreakdownError):
        raise
    except InputError:
        raise


def _validate_leaf_annihilation(sections, chart: Chart, samples, where: str):
    """Reject sections whose form has components on the leaf differentials."""
    for i, s in enumerate(sections):
        worst = 0.0
        for m in samples[:8]:
            vals = s.form(m)[: chart.leaf_count]
            worst = max(worst, float(np.abs(vals).max(initial=0.0)))
        if worst > 1e-12:
            raise InputError(
                f"{where}[{i}]: form has a component on a leaf differential "
                f"(magnitude {worst:.3e}); sections must annihilate the leaf fields"
            )


# -- commands ---------------------------------------------------------------


def cmd_check(data: dict, args) -> int:
    numerics = _numerics(data, args)
    chart = _chart_from(_require(data, "chart", "problem"))
    samples = _sample_points(chart, numerics)
    out = _Emitter(args.output)
    try:
        out.provenance("check", data["_raw_text"], numerics)
        report = Report()
        sections = data.get("sections") or {}
        action = _action_from(data, chart)
        tol = numerics["tol"]

        gens_block = sections.get("D")
        if gens_block:
            gens = _section_list(gens_block, chart, "sections.D")
            if chart.leaf_count > 0:
                _validate_leaf_annihilation(gens, chart, samples, "sections.D")
            extra = sections.get("extra")
            if extra is not None:
                extra = _section_from(extra, chart, "sections.extra")
                _validate_leaf_annihilation([extra], chart, samples, "sections.extra")
            if chart.leaf_count > 0:
                theta = GeneralizedDistribution(
                    chart,
                    tuple(
                        PontryaginSection.from_vector(VectorField.coordinate(chart, l))
                        for l in range(chart.leaf_count)
                    ),
                )
                D = GeneralizedDistribution(chart, gens)
                report.extend(check_bracket_hypothesis(D, theta, extra, samples, tol))

        pi = _poisson_from(data, chart)
        if pi is not None:
            D_pi = graph_of_poisson(pi, samples)
            report.extend(D_pi.validate(samples))
            report.extend(is_closed(D_pi, samples, tol))
        dirac_block = data.get("dirac")
        if dirac_block is not None:
            D_d = DiracStructure(chart, _section_list(dirac_block, chart, "dirac"))
            report.extend(D_d.validate(samples))
        if action is not None:
            report.extend(action.validate(samples))
            quotient = _quotient_from(data, chart)
            if quotient is not None:
                report.extend(quotient.validate(action, samples, tol))
        out.checks(report)
        return out.verdict(report.passed)
    finally:
        out.close()


def cmd_invariant_generators(data: dict, args) -> int:
    numerics = _numerics(data, args)
    chart = _chart_from(_require(data, "chart", "problem"))
    samples = _sample_points(chart, numerics)
    problem = _foliated_problem(data, chart, numerics)
    out = _Emitter(args.output)
    try:
        out.provenance("invariant-generators", data["_raw_text"], numerics)
        result = run_invariant(problem, samples=samples)
        out.checks(result.report)
        for m in samples:
            F = result.frame(m)
            rec = {
                "record": "frame",
                "point": [float(v) for v in m],
                "columns": [[float(v) for v in col] for col in F.T],
            }
            if result.combined is not None:
                rec["combined"] = [float(v) for v in result.combined(m)]
            out.line(rec)
        if args.dump_intermediates:
            from .invariant_gen import build_B, build_H, compute_Pi

            for m in samples:
                rec = {
                    "record": "intermediates",
                    "point": [float(v) for v in m],
                    "H": [[float(v) for v in row] for row in build_H(problem, m)],
                    "B": [[float(v) for v in row] for row in build_B(problem, m)],
                }
                if problem.extra is not None:
                    rec["Pi"] = [float(v) for v in compute_Pi(problem, m)]
                out.line(rec)
        return out.verdict(result.report.passed)
    finally:
        out.close()


def cmd_dirac_reduce(data: dict, args) -> int:
    numerics = _numerics(data, args)
    chart = _chart_from(_require(data, "chart", "problem"))
    samples = _sample_points(chart, numerics)
    tol = numerics["tol"]
    action = _action_from(data, chart)
    if action is None:
        raise InputError("dirac-reduce needs an action block")
    quotient = _quotient_from(data, chart)
    if quotient is None:
        raise InputError("dirac-reduce needs a quotient block")
    pi = _poisson_from(data, chart)
    dirac_block = data.get("dirac")
    if pi is not None:
        D = graph_of_poisson(pi, samples)
    elif dirac_block is not None:
        D = DiracStructure(chart, _section_list(dirac_block, chart, "dirac"))
    else:
        raise InputError("dirac-reduce needs a poisson or dirac block")
    sections = data.get("sections") or {}
    dkperp = sections.get("dkperp")
    if not dkperp:
        raise InputError("sections.dkperp: a spanning family of the intersection is required")
    family = _section_list(dkperp, chart, "sections.dkperp")

    out = _Emitter(args.output)
    try:
        out.provenance("dirac-reduce", data["_raw_text"], numerics)

        validity = Report()
        validity.extend(D.validate(samples))
        validity.extend(action.validate(samples))
        validity.extend(quotient.validate(action, samples, tol))
        out.checks(validity)
        if not validity.passed:
            return out.verdict(False, "validity")

        scan_record, _ = constant_rank_scan(D, action, samples)
        scan = Report([scan_record])
        out.checks(scan)
        if not scan.passed:
            return out.verdict(False, "rank scan")

        problem = FoliatedProblem(
            chart=chart,
            generators=family,
            ode_step=numerics["ode_step"],
            quad_step=numerics["quad_step"],
            tol=tol,
        )
        result = descending_generators(D, action, problem, samples=samples, tol=tol)
        out.checks(result.report)
        if not result.report.passed:
            return out.verdict(False, "descending")

        pushed = pushforward_check(
            D, action, quotient, result, samples=samples, tol=max(tol, 1e-6),
            seed=numerics["seed"],
        )
        out.checks(pushed)
        if args.dump_intermediates:
            from .dirac import push_frame

            for m in samples:
                Xbar, abar, _ = push_frame(quotient, result.frame, m, tol)
                out.line(
                    {
                        "record": "pushed-frame",
                        "point": [float(v) for v in m],
                        "target_point": [float(v) for v in quotient(m)],
                        "vectors": [[float(v) for v in col] for col in Xbar.T],
                        "forms": [[float(v) for v in col] for col in abar.T],
                    }
                )
        if not pushed.passed:
            return out.verdict(False, "pushforward")
        return out.verdict(True)
    finally:
        out.close()


# -- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diracgen",
        description="Invariant generators and Dirac reduction on explicit charts",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("check", cmd_check),
        ("invariant-generators", cmd_invariant_generators),
        ("dirac-reduce", cmd_dirac_reduce),
    ):
        p = sub.add_parser(name)
        p.add_argument("problem", help="path to a JSON problem file")
        p.add_argument("--tol", type=float, default=None)
        p.add_argument("--ode-step", type=float, default=None)
        p.add_argument("--quad-step", type=float, default=None)
        p.add_argument("--samples", type=int, default=None, help="number of random sample points")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--dump-intermediates", action="store_true")
        p.add_argument("--output", default=None, help="write machine-readable report here")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        data = load_problem(args.problem)
        return args.fn(data, args)
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericalBreakdownError as exc:
        stage = f" [{exc.stage}]" if getattr(exc, "stage", None) else ""
        print(f"numerical breakdown{stage}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except VerificationError as exc:
        stage = f" [{exc.stage}]" if getattr(exc, "stage", None) else ""
        print(f"verification failure{stage}: {exc}", file=sys.stderr)
        return EXIT_VERIFICATION


if __name__ == "__main__":
    sys.exit(main())
