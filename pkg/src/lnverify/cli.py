"""Command-line driver.

Exit status: 0 when every selected property holds (or the command simply
succeeded), 1 when a violation was found, 2 on usage or internal errors.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import export
from .config import ModelConfig, load_config
from .explorer import ProtocolModel, ReplayError, StateSpaceBudgetExceeded, explore, peak_memory_kb
from .properties import PropertyId, check
from .scenarios import SCENARIOS, run_scenario
from .settlement import SettlementError

OK, VIOLATION, ERROR = 0, 1, 2
PROPERTY_IDS = [p.value for p in PropertyId]


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model")
    g.add_argument("--config", type=Path, help="key=value file with model settings")
    g.add_argument("--max-htlcs", type=int)
    g.add_argument("--buffer-capacity", type=int)
    g.add_argument("--csv-delay", type=int)
    g.add_argument("--cltv-expiry", type=int)
    g.add_argument("--state-cap", type=int)
    p.add_argument("--deterministic", action="store_true", help="zero timings and memory figures in output")
    p.add_argument("--out", type=Path, help="output file (or directory for verify)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lnverify", description="Model-check the channel payment protocol.")
    sub = parser.add_subparsers(dest="command", required=True)

    v = sub.add_parser("verify", help="check properties and write counterexamples")
    v.add_argument("--property", nargs="+", choices=PROPERTY_IDS, default=PROPERTY_IDS, metavar="ID",
                   help=f"one or more of {', '.join(PROPERTY_IDS)} (default: all)")
    v.add_argument("--format", choices=("plain", "jsonl"), default="plain")
    _add_model_flags(v)

    e = sub.add_parser("explore", help="visit every reachable state and report")
    e.add_argument("--format", choices=("plain", "jsonl"), default="plain")
    _add_model_flags(e)

    r = sub.add_parser("replay", help="run an attack scenario or re-run a saved trace")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", choices=SCENARIOS)
    src.add_argument("--from-file", type=Path, help="jsonl trace written by verify or export")
    r.add_argument("--format", choices=("plain", "jsonl"), default="plain")
    _add_model_flags(r)

    x = sub.add_parser("export", help="write the FSM, a trace or a report")
    x.add_argument("artifact", choices=("fsm", "trace", "report"))
    x.add_argument("--format", choices=("dot", "jsonl", "plain"), default="plain")
    x.add_argument("--property", choices=PROPERTY_IDS, help="trace: counterexample of this property")
    x.add_argument("--scenario", choices=SCENARIOS, help="trace: the scripted run of this scenario")
    _add_model_flags(x)
    return parser


def resolve_config(args: argparse.Namespace) -> ModelConfig:
    """Defaults, then the config file, then explicit flags."""
    cfg = load_config(args.config) if args.config else ModelConfig()
    return cfg.with_overrides(
        max_htlcs=args.max_htlcs,
        buffer_capacity=args.buffer_capacity,
        csv_delay=args.csv_delay,
        cltv_expiry=args.cltv_expiry,
        state_cap=args.state_cap,
    )


def _emit(text: str, out: Optional[Path]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def cmd_verify(args, cfg: ModelConfig) -> int:
    out_dir = args.out or Path("lnverify-out")
    model = ProtocolModel(cfg)
    rows, status = [], OK
    for pid in dict.fromkeys(args.property):
        v = check(pid, model=model)
        row = {
            "property": pid,
            "verdict": "holds" if v.holds else "violated",
            "states": v.states,
            "elapsed_s": 0.0 if args.deterministic else round(v.elapsed, 3),
            "trace_file": None,
            "trace_length": None,
        }
        if not v.holds:
            status = VIOLATION
            out_dir.mkdir(parents=True, exist_ok=True)
            path = out_dir / f"{pid}-counterexample.jsonl"
            path.write_text(export.trace_jsonl(v.counterexample))
            row["trace_file"] = str(path)
            cex = v.counterexample
            row["trace_length"] = len(cex) if hasattr(cex, "events") else len(cex.stem) + len(cex.cycle)
        rows.append(row)
    if args.format == "jsonl":
        sys.stdout.write(export.report_jsonl(rows))
    else:
        for r in rows:
            line = f"{r['property']:<12} {r['verdict'].upper():<9} states={r['states']} elapsed={r['elapsed_s']:.3f}s"
            if r["trace_file"]:
                line += f" trace={r['trace_file']} ({r['trace_length']} events)"
            print(line)
        print(f"peak_memory_kb={0 if args.deterministic else peak_memory_kb()}")
    return status


def cmd_explore(args, cfg: ModelConfig) -> int:
    report = explore(cfg)
    d = export.exploration_dict(report, args.deterministic)
    text = export.report_jsonl(d) if args.format == "jsonl" else export.report_plain(d)
    _emit(text, args.out)
    return OK if report.deadlock_free else VIOLATION


def _payout_plain(run) -> str:
    p = run.payout
    lines = [f"scenario: {run.name}", f"protocol events: {len(run.trace)}", run.trace.describe()]
    lines += [f"note: {n}" for n in run.notes]
    lines.append(f"settlement ({p.scenario.value}): closed with {p.confirmed_commitment}")
    for s in p.timeline:
        lines.append(f"  {s.step:2d}. [h={s.height}] {s.description}")
    for label, err in p.rejected:
        lines.append(f"rejected: {label} ({err})")
    lines.append("balances: " + ", ".join(f"{r.value}={v}" for r, v in p.balances.items()))
    lines.append(f"total blocks: {p.total_blocks}")
    return "\n".join(lines) + "\n"


def cmd_replay(args, cfg: ModelConfig) -> int:
    if args.from_file:
        trace = export.load_trace(args.from_file.read_text(), ProtocolModel(cfg))
        text = export.trace_jsonl(trace) if args.format == "jsonl" else export.trace_plain(trace)
        _emit(text, args.out)
        return OK
    run = run_scenario(args.scenario, cfg)
    if args.format == "jsonl":
        text = export.report_jsonl({"scenario": run.name, "events": len(run.trace), "notes": run.notes,
                                    **run.payout.as_dict()})
    else:
        text = _payout_plain(run)
    _emit(text, args.out)
    return OK


def cmd_export(args, cfg: ModelConfig) -> int:
    fmt = args.format
    if args.artifact == "fsm":
        text = {"dot": export.fsm_dot, "jsonl": export.fsm_jsonl, "plain": export.fsm_plain}[fmt]()
    elif args.artifact == "trace":
        if fmt == "dot" or bool(args.property) == bool(args.scenario):
            raise UsageError("export trace needs exactly one of --property/--scenario and a jsonl or plain format")
        if args.property:
            v = check(args.property, cfg)
            if v.counterexample is None:
                raise UsageError(f"{args.property} holds; there is no counterexample to export")
            trace = v.counterexample
        else:
            trace = run_scenario(args.scenario, cfg).trace
        text = export.trace_jsonl(trace) if fmt == "jsonl" else export.trace_plain(trace)
    else:
        if fmt == "dot":
            raise UsageError("reports are exported as jsonl or plain")
        d = export.exploration_dict(explore(cfg), args.deterministic)
        text = export.report_jsonl(d) if fmt == "jsonl" else export.report_plain(d)
    _emit(text, args.out)
    return OK


class UsageError(Exception):
    pass


COMMANDS = {"verify": cmd_verify, "explore": cmd_explore, "replay": cmd_replay, "export": cmd_export}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](args, cfg)
    except (UsageError, ValueError, KeyError, OSError, ReplayError, StateSpaceBudgetExceeded, SettlementError) as exc:
        print(f"lnverify: error: {exc}", file=sys.stderr)
        return ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
