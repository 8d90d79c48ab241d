"""Command-line front end.

Exit codes: 0 success, 2 usage or input validation error, 3 model domain error.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
from dataclasses import replace

from . import __version__
from .cohort import (
    COLUMNS,
    CohortRecord,
    check_paper_table,
    builtin_baselines,
    evaluate_cohort,
    trend_association,
)
from .errors import EVLError, InputError, InsufficientData, ModelError
from .ingest import (
    bundled_table_path,
    estimate_lux,
    fmt_number,
    load_config,
    near_work_coefficient,
    parse_baselines,
    parse_observations,
    parse_printed_table,
    resolve_lux,
)
from .model import (
    ElongationMode,
    ModelConfig,
    NearWorkObservation,
    balance_crossing_axial_length,
    balance_crossing_time,
    evaluate_observation,
)
from .pnm import read_pnm

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DOMAIN = 3

EVAL_COLUMNS = ("m", "a", "v", "al", "ar", "vr", "o", "class")
COHORT_COLUMNS = ("subject_id", "age", "group", "n", "t_min", "lux", "pupil_mm", "distance_m",
                  "aberrations", "ser") + EVAL_COLUMNS
ERROR_COLUMNS = ("subject_id", "line", "error", "message")
CHECK_COLUMNS = ("row", "mode", "column", "recomputed", "printed", "deviation", "flag")
SWEEP_COLUMNS = ("m", "al", "ar", "vr", "o", "class")


class UsageError(Exception):
    pass


def _full(x) -> str:
    return repr(float(x))


def _short(x) -> str:
    return f"{x:.4f}"


def _err(exc: BaseException) -> str:
    return f"{type(exc).__name__}: {exc}"


def _eval_values(ev):
    return (ev.m, ev.a, ev.v, ev.al, ev.ar, ev.vr, ev.o)


# --- argument plumbing ------------------------------------------------------

def _common_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="FILE", help="key=value model configuration file")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--mode", choices=("literal", "unit"),
                   help="elongation coefficient: n as printed (literal) or 1 (unit)")
    p.add_argument("--theta", type=float, help="imbalance threshold in (0, 1)")
    return p


def _observation_parent() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--age", type=float, help="subject age in years (selects the baseline group)")
    nw = p.add_mutually_exclusive_group()
    nw.add_argument("--near-work", help="reading, writing or phone")
    nw.add_argument("--n", type=float, help="numeric near-work coefficient")
    p.add_argument("--t", type=float, help="near-work duration (minutes)")
    light = p.add_mutually_exclusive_group()
    light.add_argument("--lux", type=float, help="ambient lighting (lux)")
    light.add_argument("--image", help="PGM/PPM environment image to estimate lux from")
    p.add_argument("--pupil", type=float, help="pupil size (mm)")
    p.add_argument("--distance", type=float, help="viewing distance (m)")
    p.add_argument("--aberrations", type=float, help="aberration count")
    p.add_argument("--ser", type=float, help="measured SER (diopter), optional")
    p.add_argument("--baselines", metavar="FILE", help="baseline CSV (default: built-in table)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_parent()
    obsp = _observation_parent()
    parser = argparse.ArgumentParser(prog="evl", description="Environmental visual load model")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("eval", parents=[common, obsp], help="evaluate one observation")

    c = sub.add_parser("cohort", parents=[common], help="evaluate an observation CSV")
    c.add_argument("--observations", required=True, metavar="FILE")
    src = c.add_mutually_exclusive_group()
    src.add_argument("--baselines", metavar="FILE")
    src.add_argument("--builtin", action="store_true", help="use the built-in baselines (default)")
    c.add_argument("--out", required=True, metavar="DIR")
    c.add_argument("--workers", type=int, default=1)

    k = sub.add_parser("check-table", parents=[common],
                       help="recompute the published cohort table and flag deviations")
    k.add_argument("--table", metavar="FILE", help="table transcription (default: bundled)")
    k.add_argument("--baselines", metavar="FILE")
    for col in COLUMNS:
        k.add_argument(f"--tol-{col.lower()}", type=float, metavar="X",
                       help=f"match tolerance for {col}")
    k.add_argument("--out", metavar="DIR", help="also write report.md and report.csv here")

    s = sub.add_parser("sweep", parents=[common, obsp], help="parameter sweep as plot-ready CSV")
    s.add_argument("--variable", required=True, choices=("t", "d", "L"))
    s.add_argument("--start", type=float, required=True)
    s.add_argument("--stop", type=float, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--mark-crossing", action="store_true",
                   help="add al_star and t_star columns")

    x = sub.add_parser("lux", parents=[common], help="estimate lux from a PGM/PPM image")
    x.add_argument("image")
    x.add_argument("--gain", type=float)
    x.add_argument("--offset", type=float)
    return parser


def _config(args) -> ModelConfig:
    try:
        cfg = load_config(args.config) if args.config else ModelConfig()
        changes = {}
        if args.mode:
            changes["elongation_mode"] = ElongationMode.parse(args.mode)
        if args.theta is not None:
            changes["theta"] = args.theta
        return replace(cfg, **changes) if changes else cfg
    except OSError as exc:
        raise UsageError(f"cannot read config: {exc}") from exc
    except (EVLError, ValueError) as exc:
        raise UsageError(_err(exc)) from exc


def _baselines(path):
    if not path:
        return builtin_baselines()
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_baselines(fh.read())
    except OSError as exc:
        raise UsageError(f"cannot read baselines: {exc}") from exc
    except EVLError as exc:
        raise UsageError(_err(exc)) from exc


def _observation(args, cfg, skip=()):
    """Build an observation from flags; names in ``skip`` get a placeholder."""
    missing = []
    if args.near_work is not None:
        try:
            n = near_work_coefficient(args.near_work)
        except InputError as exc:
            raise UsageError(_err(exc)) from exc
    elif args.n is not None:
        n = args.n
    else:
        missing.append("--near-work/--n")
        n = None

    lux = None
    if "L" not in skip:
        if args.lux is not None:
            lux = args.lux
        elif args.image:
            try:
                lux = estimate_lux(read_pnm(args.image), cfg)
            except OSError as exc:
                raise UsageError(f"cannot read image: {exc}") from exc
        else:
            missing.append("--lux/--image")

    vals = {}
    for name, flag in (("t", "--t"), ("p", "--pupil"), ("d", "--distance"), ("w", "--aberrations")):
        value = getattr(args, {"p": "pupil", "d": "distance", "w": "aberrations"}.get(name, name))
        if value is None and name not in skip:
            missing.append(flag)
        vals[name] = value
    if args.age is None:
        missing.append("--age")
    if missing:
        raise UsageError("missing required option(s): " + ", ".join(missing))
    return NearWorkObservation(n=n, t=vals["t"] if vals["t"] is not None else 0.0,
                               l=lux if lux is not None else 1.0, p=vals["p"],
                               d=vals["d"] if vals["d"] is not None else 0.0,
                               w=vals["w"], ser=args.ser)


def _lookup(table, age):
    try:
        return table.lookup(age)
    except InputError as exc:
        raise UsageError(_err(exc)) from exc


def _write_csv(stream, header, rows):
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)


# --- subcommands ------------------------------------------------------------

def cmd_eval(args, out) -> int:
    cfg = _config(args)
    table = _baselines(args.baselines)
    obs = _observation(args, cfg)
    baseline = _lookup(table, args.age)
    ev = evaluate_observation(baseline, obs, cfg)
    if args.format == "csv":
        _write_csv(out, EVAL_COLUMNS, [[_full(x) for x in _eval_values(ev)] + [ev.balance.value]])
    else:
        labels = ("M", "A", "V", "AL", "AR", "VR", "O")
        for label, value in zip(labels, _eval_values(ev)):
            print(f"{label:<6}{_short(value)}", file=out)
        print(f"{'class':<6}{ev.balance.value}", file=out)
    return EXIT_OK


def _trend_text(evaluated) -> str:
    pairs = [(ev.o, row.ser) for row, group, ev in evaluated if row.ser is not None]
    groups = [group for row, group, ev in evaluated if row.ser is not None]
    try:
        tr = trend_association(pairs, groups)
    except InsufficientData as exc:
        return f"n_pairs: {len(pairs)}\nrho: InsufficientData ({exc})\n"
    lines = [f"n_pairs: {tr.n_pairs}", f"rho: {_full(tr.rho)}", f"direction: {tr.direction_label}"]
    for label, g in tr.groups.items():
        grho = "n/a" if g.rho is None else _short(g.rho)
        lines.append(f"group {label}: count={g.count} mean_o={_short(g.mean_o)} "
                     f"mean_ser={_short(g.mean_ser)} rho={grho}")
    return "\n".join(lines) + "\n"


def cmd_cohort(args, out) -> int:
    cfg = _config(args)
    table = _baselines(args.baselines)
    try:
        with open(args.observations, encoding="utf-8") as fh:
            rows = parse_observations(fh.read())
    except OSError as exc:
        raise UsageError(f"cannot read observations: {exc}") from exc
    except EVLError as exc:
        raise UsageError(_err(exc)) from exc

    base_dir = os.path.dirname(os.path.abspath(args.observations))
    evaluated, failures = [], []
    pending = []
    for row in rows:
        try:
            lux = resolve_lux(row, cfg, base_dir)
        except (EVLError, OSError) as exc:
            failures.append((row, exc))
            continue
        pending.append((row, CohortRecord(row.subject_id, row.age, row.to_observation(lux))))

    result = evaluate_cohort([rec for _, rec in pending], table, cfg, workers=args.workers)
    errors_by_index = {e.index: e.error for e in result.errors}
    evals = iter(result.evaluations)
    for i, (row, rec) in enumerate(pending):
        if i in errors_by_index:
            failures.append((row, errors_by_index[i]))
        else:
            _, ev = next(evals)
            evaluated.append((row, table.lookup(row.age).label, ev, rec.obs.l))
    failures.sort(key=lambda f: f[0].line)

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "evaluations.csv"), "w", newline="", encoding="utf-8") as fh:
        _write_csv(fh, COHORT_COLUMNS, [
            [row.subject_id, fmt_number(row.age), group, fmt_number(row.n), fmt_number(row.t),
             _full(lux), fmt_number(row.p), fmt_number(row.d), fmt_number(row.w),
             "" if row.ser is None else fmt_number(row.ser)]
            + [_full(x) for x in _eval_values(ev)] + [ev.balance.value]
            for row, group, ev, lux in evaluated])
    with open(os.path.join(args.out, "errors.csv"), "w", newline="", encoding="utf-8") as fh:
        _write_csv(fh, ERROR_COLUMNS, [[row.subject_id, row.line, type(exc).__name__, str(exc)]
                                       for row, exc in failures])
    trend = _trend_text([(row, group, ev) for row, group, ev, _ in evaluated])
    with open(os.path.join(args.out, "trend.txt"), "w", encoding="utf-8") as fh:
        fh.write(trend)

    print(f"evaluated: {len(evaluated)}", file=out)
    print(f"errors: {len(failures)}", file=out)
    out.write(trend)
    if rows and not evaluated:
        return EXIT_DOMAIN
    return EXIT_OK


def render_markdown(report) -> str:
    lines = ["| row | mode | column | recomputed | printed | deviation | flag |",
             "|---:|---|---|---:|---:|---:|---|"]
    for e in report.entries:
        lines.append(f"| {e.row} | {e.mode.value} | {e.column} | {e.recomputed:.4f} | "
                     f"{e.printed:g} | {e.deviation:.4f} | {e.flag} |")
    lines.append("")
    tol = ", ".join(f"{c}={report.tolerances[c]:g}" for c in COLUMNS)
    lines.append(f"Tolerances: {tol}")
    lines.append("")
    for row in report.rows:
        modes = [m.value for m in report.modes_matching(row)] or ["none"]
        n_dev = len([e for e in report.select(row=row) if not e.match])
        lines.append(f"- row {row}: fully matching modes: {', '.join(modes)}; deviations: {n_dev}")
    return "\n".join(lines) + "\n"


def render_report_csv(report) -> str:
    buf = io.StringIO()
    _write_csv(buf, CHECK_COLUMNS, [
        [e.row, e.mode.value, e.column, _full(e.recomputed), _full(e.printed),
         _full(e.deviation), e.flag] for e in report.entries])
    return buf.getvalue()


def cmd_check_table(args, out) -> int:
    cfg = _config(args)
    table = _baselines(args.baselines)
    path = args.table or bundled_table_path()
    try:
        with open(path, encoding="utf-8") as fh:
            rows = parse_printed_table(fh.read())
    except OSError as exc:
        raise UsageError(f"cannot read table: {exc}") from exc
    except EVLError as exc:
        raise UsageError(_err(exc)) from exc
    tolerances = {c: getattr(args, f"tol_{c.lower()}") for c in COLUMNS
                  if getattr(args, f"tol_{c.lower()}") is not None}
    try:
        report = check_paper_table(rows, table, tolerances, cfg)
    except InputError as exc:
        raise UsageError(_err(exc)) from exc
    md, csv_text = render_markdown(report), render_report_csv(report)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "report.md"), "w", encoding="utf-8") as fh:
            fh.write(md)
        with open(os.path.join(args.out, "report.csv"), "w", encoding="utf-8") as fh:
            fh.write(csv_text)
    out.write(csv_text if args.format == "csv" else md)
    return EXIT_OK


def sweep_values(start: float, stop: float, steps: int) -> list[float]:
    if not start < stop:
        raise UsageError(f"sweep needs start < stop, got {start} and {stop}")
    if steps < 2:
        raise UsageError(f"sweep needs at least 2 steps, got {steps}")
    span = stop - start
    return [start + span * i / (steps - 1) for i in range(steps - 1)] + [stop]


def cmd_sweep(args, out) -> int:
    cfg = _config(args)
    table = _baselines(args.baselines)
    values = sweep_values(args.start, args.stop, args.steps)
    fixed = _observation(args, cfg, skip=(args.variable,))
    baseline = _lookup(table, args.age)
    field = {"t": "t", "d": "d", "L": "l"}[args.variable]

    header = (args.variable,) + SWEEP_COLUMNS
    if args.mark_crossing:
        header += ("al_star", "t_star")
    rows = []
    for x in values:
        obs = replace(fixed, **{field: x})
        ev = evaluate_observation(baseline, obs, cfg)
        row = [_full(x)] + [_full(v) for v in (ev.m, ev.al, ev.ar, ev.vr, ev.o)] + [ev.balance.value]
        if args.mark_crossing:
            al_star = (balance_crossing_axial_length(ev.m, obs.d, cfg.theta)
                       if ev.m > 0 else None)
            t_star = balance_crossing_time(baseline, obs, cfg) if ev.m > 0 else None
            row += ["" if al_star is None else _full(al_star),
                    "" if t_star is None else _full(t_star)]
        rows.append(row)
    _write_csv(out, header, rows)
    return EXIT_OK


def cmd_lux(args, out) -> int:
    cfg = _config(args)
    changes = {}
    if args.gain is not None:
        changes["luminance_gain"] = args.gain
    if args.offset is not None:
        changes["luminance_offset"] = args.offset
    cfg = replace(cfg, **changes) if changes else cfg
    try:
        img = read_pnm(args.image)
    except OSError as exc:
        raise UsageError(f"cannot read image: {exc}") from exc
    lux = estimate_lux(img, cfg)
    if args.format == "csv":
        _write_csv(out, ("width", "height", "mean", "lux"),
                   [[img.width, img.height, _full(img.mean), _full(lux)]])
    else:
        print(f"{_short(lux)} lux ({img.width}x{img.height}, mean luminance {_short(img.mean)})",
              file=out)
    return EXIT_OK


COMMANDS = {
    "eval": cmd_eval,
    "cohort": cmd_cohort,
    "check-table": cmd_check_table,
    "sweep": cmd_sweep,
    "lux": cmd_lux,
}


def main(argv=None, out=None, err=None) -> int:
    out = out if out is not None else sys.stdout
    err = err if err is not None else sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"evl {args.command}: error: {exc}", file=err)
        return EXIT_USAGE
    except InputError as exc:
        print(f"evl {args.command}: error: {_err(exc)}", file=err)
        return EXIT_USAGE
    except ModelError as exc:
        print(f"evl {args.command}: domain error: {_err(exc)}", file=err)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
