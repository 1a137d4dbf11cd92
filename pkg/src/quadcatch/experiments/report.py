"""Report serialisation: CSV rows, a JSON document and a plain-text table."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import List, Optional, Union

from ..errors import InvalidInputError
from .runner import EpisodeRow, Report

FORMATS = ("csv", "json", "table")

CSV_FIELDS = (
    "index", "method", "caught", "catch_error", "mean_power", "diverged", "t_trigger",
    "n_plans", "x_catch_x", "x_catch_y", "x_catch_z", "plane_z", "below_floor", "noise_seed",
)
_FLOAT_FIELDS = ("catch_error", "mean_power", "plane_z")


def format_percent(caught: int, n: int) -> str:
    return f"{100.0 * caught / n:.1f}"


def _num(v: Optional[float]):
    # JSON has no NaN; missing values are null
    return None if v is None or (isinstance(v, float) and not math.isfinite(v)) else v


def _summary_dicts(report: Report) -> List[dict]:
    out = []
    for s in report.summaries():
        out.append(
            {
                "method": s.method,
                "caught": s.caught,
                "n": s.n,
                "rate": f"{s.caught}/{s.n}",
                "success_percent": format_percent(s.caught, s.n),
                "mean_power_w": _num(s.mean_power),
            }
        )
    return out


def report_to_dict(report: Report) -> dict:
    rows = []
    for r in report.rows:
        d = r.to_dict()
        for k in _FLOAT_FIELDS:
            d[k] = _num(d[k])
        rows.append(d)
    return {
        "scenario": report.scenario,
        "seed": report.seed,
        "settings": dict(report.settings),
        "summary": _summary_dicts(report),
        "rows": rows,
    }


def report_from_dict(d: dict) -> Report:
    try:
        rows = []
        for r in d["rows"]:
            r = dict(r)
            for k in _FLOAT_FIELDS:
                r[k] = math.nan if r[k] is None else float(r[k])
            r["x_catch"] = None if r["x_catch"] is None else tuple(r["x_catch"])
            rows.append(EpisodeRow(**r))
        return Report(d["scenario"], int(d["seed"]), rows, dict(d.get("settings", {})))
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"malformed report: {exc}") from None


def _csv_text(report: Report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in report.rows:
        xc = r.x_catch if r.x_catch is not None else ("", "", "")
        w.writerow(
            [r.index, r.method, int(r.caught), repr(r.catch_error), repr(r.mean_power), int(r.diverged),
             "" if r.t_trigger is None else repr(r.t_trigger), r.n_plans, *xc, repr(r.plane_z),
             int(r.below_floor), r.noise_seed]
        )
    return buf.getvalue()


def _table_text(report: Report) -> str:
    lines = [f"scenario {report.scenario}  seed {report.seed}"]
    for k, v in report.settings.items():
        lines.append(f"  {k}: {v}")
    lines.append("")
    lines.append(f"{'method':<10}{'caught':>10}{'success [%]':>14}{'mean power [W]':>17}")
    for s in _summary_dicts(report):
        p = "-" if s["mean_power_w"] is None else f"{s['mean_power_w']:.2f}"
        lines.append(f"{s['method']:<10}{s['rate']:>10}{s['success_percent']:>14}{p:>17}")
    diverged = sum(r.diverged for r in report.rows)
    if diverged:
        lines.append(f"({diverged} diverged episodes counted as failures)")
    return "\n".join(lines) + "\n"


def render(report: Report, fmt: str = "table") -> str:
    if fmt == "csv":
        return _csv_text(report)
    if fmt == "json":
        return json.dumps(report_to_dict(report), indent=2) + "\n"
    if fmt == "table":
        return _table_text(report)
    raise InvalidInputError(f"unknown report format {fmt!r}; expected one of {FORMATS}")


def emit_report(report: Report, fmt: str = "table", path: Union[str, Path, None] = None) -> str:
    """Render ``report`` and write it to ``path`` when given.

    Raises:
        OSError: the destination cannot be written.
    """
    text = render(report, fmt)
    if path is not None:
        Path(path).write_text(text)
    return text


def read_report(path: Union[str, Path]) -> Report:
    """Load a report written with ``fmt="json"``."""
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidInputError(f"{path}: not a JSON report ({exc})") from None
    return report_from_dict(d)
