"""Render tradeoff curves as CSV text and verification results as a plain-text report."""

import csv
import io
from dataclasses import dataclass

from src.binary import BinaryTradeoffPoint
from src.enumeration import TradeoffCurve
from src.ib_baseline import IBPoint
from src.probability import DecoderMap
from src.subproblem import Status

BINARY_CURVE_HEADER = ["p2", "error_probability", "mutual_information_bits"]
SWEEP_HEADER = ["budget", "mutual_information_bits", "achieved_cost", "decoder_map", "status"]
IB_SWEEP_HEADER = ["beta", "mutual_information_bits", "achieved_cost", "converged"]


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str


def _format_number(value) -> str:
    """9 significant digits; missing values are empty."""
    if value is None:
        return ""
    return format(float(value), ".9g")


def _format_decoder(decoder: DecoderMap | None, labels: tuple[str, ...]) -> str:
    if decoder is None:
        return ""
    return decoder.render(labels)


def _to_csv(header: list[str], rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def render_binary_curve(points: list[BinaryTradeoffPoint]) -> str:
    rows = [
        {
            "p2": _format_number(p.p2),
            "error_probability": _format_number(p.pe),
            "mutual_information_bits": _format_number(p.mi),
        }
        for p in points
    ]
    return _to_csv(BINARY_CURVE_HEADER, rows)


def render_sweep(curve: TradeoffCurve, labels: tuple[str, ...]) -> str:
    rows = []
    for point in curve.points:
        optimal = point.status is Status.OPTIMAL
        rows.append({
            "budget": _format_number(point.budget),
            "mutual_information_bits": _format_number(point.mi if optimal else None),
            "achieved_cost": _format_number(point.achieved_budget if optimal else None),
            "decoder_map": _format_decoder(point.decoder if optimal else None, labels),
            "status": point.status.value,
        })
    return _to_csv(SWEEP_HEADER, rows)


def render_ib_sweep(points: list[IBPoint]) -> str:
    rows = [
        {
            "beta": _format_number(p.beta),
            "mutual_information_bits": _format_number(p.mi),
            "achieved_cost": _format_number(p.cost),
            "converged": "true" if p.converged else "false",
        }
        for p in points
    ]
    return _to_csv(IB_SWEEP_HEADER, rows)


def parse_csv(text: str) -> list[dict]:
    """Read back a CSV written by the render_* functions (values stay strings)."""
    return list(csv.DictReader(io.StringIO(text)))


def render_verify(title: str, rows: list[tuple[str, str, str]], checks: list[Check]) -> str:
    """Side-by-side table of (quantity, solver, oracle) followed by one PASS/FAIL line per check."""
    width = max([len(r[0]) for r in rows] + [8])
    lines = [title, "", f"{'':<{width}}  {'solver':>16}  {'oracle':>16}"]
    for name, solver, oracle in rows:
        lines.append(f"{name:<{width}}  {solver:>16}  {oracle:>16}")
    lines.append("")
    for check in checks:
        lines.append(f"[{'PASS' if check.passed else 'FAIL'}] {check.name}: {check.detail}")
    failed = sum(not c.passed for c in checks)
    lines.append("")
    lines.append("All checks passed." if not failed else f"{failed} check(s) failed.")
    return "\n".join(lines) + "\n"
