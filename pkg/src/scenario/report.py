"""Rendering run reports for people (text) and for CI (JSON)."""

from pathlib import Path
from typing import Iterable, List, Union

from ..models.scenario import RunReport


def render_json(report: RunReport) -> str:
    return report.model_dump_json(indent=2)


def render_text(report: RunReport, events: bool = False) -> str:
    lines: List[str] = [
        f"scenario {report.scenario} (seed {report.seed}, {report.imsc_mode} registry)",
        f"ran {report.final_time}s of virtual time, {report.chain_height} blocks",
        "",
        "checks:",
    ]
    for check in report.checks:
        mark = "PASS" if check.passed else ("info" if check.informational else "FAIL")
        lines.append(f"  [{mark}] {check.name}" + (f": {check.witness}" if check.witness else ""))

    if report.transfers:
        lines += ["", "transfers:"]
        for transfer in report.transfers:
            extra = []
            if transfer.escalations:
                extra.append(f"{transfer.escalations} escalations")
            if transfer.proofs_of_censorship:
                extra.append(f"{transfer.proofs_of_censorship} proofs of censorship")
            if transfer.collusion_claim_status:
                extra.append(f"collusion claim {transfer.collusion_claim_status}")
            if transfer.error:
                extra.append(transfer.error)
            lines.append(
                f"  {transfer.id}: {transfer.sender} -> {transfer.receiver} {transfer.amount} "
                f"{transfer.outcome or 'unfinished in ' + transfer.phase}"
                + (f" ({'; '.join(extra)})" if extra else "")
            )

    lines += ["", "supplies:"]
    for name, supply in report.supplies.items():
        lines.append(f"  {name}: t_i={supply.t_i} t_s={supply.t_s} version={supply.version} "
                     f"snapshots={supply.snapshots}")
    lines += ["", "balances:"]
    lines += [f"  {name}: {balance}" for name, balance in report.balances.items()]
    lines += ["", f"registry: {', '.join(report.registry) or '(empty)'}"]

    if report.censorship:
        lines += ["", "censorship requests:"]
        for entry in report.censorship:
            state = "proof of censorship" if entry.proof_of_censorship else (entry.status or "pending")
            lines.append(f"  {entry.instance}#{entry.index} {entry.kind} at {entry.submitted_at}: {state}")

    if events:
        lines += ["", "events:"]
        lines += [f"  {event}" for event in report.events]

    failures = report.failures()
    lines += ["", "PASS" if not failures else f"FAIL: {', '.join(check.name for check in failures)}"]
    return "\n".join(lines)


def summarize(reports: Iterable[RunReport]) -> str:
    """One line per run, for the corpus command."""
    return "\n".join(
        f"{'PASS' if report.passed else 'FAIL'}  {report.scenario}"
        + ("" if report.passed else f"  ({', '.join(check.name for check in report.failures())})")
        for report in reports
    )


def write_report(report: RunReport, path: Union[str, Path]) -> Path:
    """Write the JSON form; a ``.txt`` suffix selects the text form instead."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = render_text(report, events=True) if path.suffix == ".txt" else render_json(report)
    path.write_text(body + "\n", encoding="utf-8")
    return path
