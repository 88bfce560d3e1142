"""Config parsing and CSV / markdown persistence."""
from dataclasses import fields
import math
from pathlib import Path

from . import __version__
from .errors import ConfigError, DomainError
from .harness import ExperimentSpec, OracleReport, parse_data

CONFIG_KEYS = ("kind", "levels", "T", "t_query", "steps", "data", "norms", "seed", "out_csv", "out_report")


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


def _names(text):
    return tuple(v.strip() for v in text.split(",") if v.strip())


_CONVERT = {
    "kind": str.strip,
    "levels": _ints,
    "T": float,
    "t_query": float,
    "steps": _ints,
    "data": str.strip,
    "norms": _names,
    "seed": int,
    "out_csv": str.strip,
    "out_report": str.strip,
}


def _check_field(key, value):
    if key in ("levels", "steps") and any(b <= a for a, b in zip(value, value[1:])):
        raise DomainError(f"{key} must ascend")
    if key == "levels" and any(not 0 <= v <= 7 for v in value):
        raise DomainError("levels must lie in 0..7")
    if key == "steps" and any(v < 1 for v in value):
        raise DomainError("steps must be positive")
    if key == "T" and not value > 0:
        raise DomainError("T must be > 0")
    if key == "t_query" and not value > 0:
        raise DomainError("t_query must be > 0")
    if key == "data":
        parse_data(value)


def parse_config(text, overrides=None):
    """Parse ``key = value`` lines (``#`` comments) into a validated spec.

    ``overrides`` (already typed values) replace file entries; they are how the
    CLI merges inline flags into a config file.
    """
    values, where = {}, {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in values:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        try:
            values[key] = _CONVERT[key](value)
            _check_field(key, values[key])
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}", lineno) from None
        where[key] = lineno
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown key {key!r}")
        try:
            _check_field(key, value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {exc}") from None
        values[key] = value
        where.pop(key, None)
    if "kind" not in values:
        raise ConfigError("missing required key 'kind'")
    try:
        return ExperimentSpec(**values)
    except DomainError as exc:
        line = where.get("t_query") if "t_query" in str(exc) else where.get("kind") if "kind" in str(exc) else None
        raise ConfigError(str(exc), line) from None


def format_number(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return format(float(x), ".17g")


def _norm_column(norm):
    return "err_" + norm.replace("-", "_")


def csv_lines(report):
    if isinstance(report, OracleReport):
        lines = ["check,value,bound,passed"]
        lines += [f"{c.name},{format_number(c.value)},{format_number(c.bound)},{int(c.passed)}" for c in report.checks]
        return lines
    if not report.rows:
        raise DomainError("refusing to write an empty report")
    norms = list(report.rows[0].errors)
    lines = [",".join([report.index_name, report.scale_name] + [_norm_column(n) for n in norms])]
    for row in report.rows:
        lines.append(",".join([str(row.index), format_number(row.scale)] + [format_number(row.errors[n]) for n in norms]))
    for norm in norms:
        fit = report.slopes.get(norm)
        lines.append(f"slope_{norm.replace('-', '_')},{format_number(None if fit is None else fit.slope)}")
    return lines


def write_csv(report, path):
    lines = csv_lines(report)
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path):
    """Inverse of :func:`write_csv` for experiment reports.

    Returns ``(header, rows, slopes)``; rows are lists of floats (index first).
    """
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    rows, slopes = [], {}
    for line in lines[1:]:
        cells = line.split(",")
        if cells[0].startswith("slope_"):
            slopes[cells[0][len("slope_"):]] = float(cells[1])
        else:
            rows.append([int(cells[0])] + [float(c) for c in cells[1:]])
    return header, rows, slopes


def _spec_echo(spec):
    parts = []
    for f in fields(spec):
        value = getattr(spec, f.name)
        if value is None or value == ():
            continue
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        parts.append(f"{f.name} = {value}")
    return parts


def report_markdown(reports):
    if not reports:
        raise DomainError("no reports to write")
    out = ["# evolab convergence report", "", f"tool version: evolab {__version__}", ""]
    for rep in reports:
        out += [f"## {rep.kind}", "", "config:", "", "```"] + _spec_echo(rep.spec) + ["```", ""]
        if isinstance(rep, OracleReport):
            out += ["### checks", ""]
            for c in rep.checks:
                mark = "x" if c.passed else " "
                extra = f" ({c.detail})" if c.detail else ""
                out.append(f"- [{mark}] {c.name}: {format_number(c.value)} vs {format_number(c.bound)}{extra}")
            out += ["", f"overall: {'PASS' if rep.passed else 'FAIL'}", ""]
            continue
        norms = list(rep.rows[0].errors) if rep.rows else []
        out.append("| " + " | ".join([rep.index_name, rep.scale_name] + norms) + " |")
        out.append("|" + "---|" * (2 + len(norms)))
        for row in rep.rows:
            cells = [str(row.index), f"{row.scale:.6g}"] + [f"{row.errors[n]:.6e}" for n in norms]
            out.append("| " + " | ".join(cells) + " |")
        out.append("")
        verdicts = rep.verdicts()
        for norm in norms:
            fit = rep.slopes.get(norm)
            slope = "n/a" if fit is None else f"{fit.slope:.4f} (residual {fit.residual:.3g})"
            line = f"- slope {norm}: {slope}"
            if norm in verdicts:
                lo, hi = verdicts[norm][1]
                line += f" -- window [{lo}, {hi}]: {'PASS' if verdicts[norm][2] else 'FAIL'}"
            out.append(line)
        for note in rep.notes:
            out.append(f"- note: {note}")
        table = rep.tables.get("theta_rho")
        if table:
            out += ["", "| theta | rho | max constant |", "|---|---|---|"]
            out += [f"| {r['theta']:g} | {r['rho']:g} | {r['max_constant']:.6e} |" for r in table]
        out.append("")
    return "\n".join(out)


def write_report(reports, path):
    Path(path).write_text(report_markdown(reports) + "\n")
