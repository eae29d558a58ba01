"""Command-line entry point: ``smob params | run | bench | verify``.

Exit codes: 0 ok, 1 verification failure, 2 parameter error, 3 I/O error.
Every subcommand accepts ``--config FILE``, a JSON object whose keys are the
long flag names (dashes or underscores); flags given on the command line win.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import jsonschema

from smob.bench import (
    DEFAULT_REPETITIONS,
    OPERATIONS,
    BenchReport,
    bench_from_outcome,
    emit_report,
    environment_record,
    measure_sizes,
    pin_to_one_cpu,
    run_transaction_bench,
    time_operation,
    validate_report,
)
from smob.errors import OrchestrationError, ParameterError, SmobError, VerificationError
from smob.fhe import Context, Scheme, make_params
from smob.transactions import (
    KINDS,
    Parties,
    WorkloadSpec,
    oracle_total,
    run_transaction,
    verify_outcome,
)
from smob.transport import make_network

EXIT_OK, EXIT_VERIFY, EXIT_PARAM, EXIT_IO = 0, 1, 2, 3
SCHEME_NAMES = ("bfv", "bgv", "ckks")
PRESET_NAMES = ("desk", "paper")

log = logging.getLogger("smob")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _csv_list(allowed):
    def parse(text):
        items = [x.strip().lower() for x in str(text).split(",") if x.strip()]
        bad = [x for x in items if x not in allowed]
        if bad or not items:
            raise argparse.ArgumentTypeError(
                f"expected a comma list from {', '.join(allowed)}; got {text!r}")
        return items
    return parse


def _numbers(text):
    try:
        return [json.loads(x) for x in str(text).split(",") if x.strip()]
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="smob", description="Encrypted smart-mobility transactions.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("params", help="print the parameter sets of a preset")
    p.add_argument("--preset", choices=PRESET_NAMES, default="desk")
    p.add_argument("--scheme", choices=SCHEME_NAMES, default=None)
    p.add_argument("--plain-modulus", type=int, default=None)
    p.add_argument("--config")

    r = sub.add_parser("run", help="run one transaction and write its report")
    r.add_argument("--transaction", choices=KINDS, default="t1")
    r.add_argument("--scheme", choices=SCHEME_NAMES, default="bfv")
    r.add_argument("--providers", type=int, default=2)
    r.add_argument("--preset", choices=PRESET_NAMES, default="desk")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--transport", choices=("inproc", "tcp"), default="inproc")
    r.add_argument("--host", default="127.0.0.1", help="TCP listener address")
    r.add_argument("--base-port", type=int, default=0, help="first TCP port (0 = ephemeral)")
    r.add_argument("--prices", type=_numbers, default=None,
                   help="comma list of provider prices (default: drawn from --seed)")
    r.add_argument("--discount", type=float, default=None)
    r.add_argument("--bonus", type=float, default=None)
    r.add_argument("--plain-modulus", type=int, default=None)
    r.add_argument("--audit-mode", choices=("readable", "content"), default="readable")
    r.add_argument("--out", default=None, help="report path (default: stdout)")
    r.add_argument("--config")

    b = sub.add_parser("bench", help="time operations and transactions")
    b.add_argument("--schemes", type=_csv_list(SCHEME_NAMES), default=list(SCHEME_NAMES))
    b.add_argument("--transactions", type=_csv_list(KINDS), default=list(KINDS))
    b.add_argument("--operations", type=_csv_list(OPERATIONS), default=list(OPERATIONS))
    b.add_argument("--reps", type=int, default=DEFAULT_REPETITIONS)
    b.add_argument("--providers", type=int, default=2)
    b.add_argument("--preset", choices=PRESET_NAMES, default="desk")
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--transport", choices=("inproc", "tcp"), default="inproc")
    b.add_argument("--cores", type=int, default=1, help="cores billed in the cost estimate")
    b.add_argument("--out", default="smob-report.json")
    b.add_argument("--csv", default=None, help="also write the flattened CSV here")
    b.add_argument("--plotdata", default=None, help="also write per-figure tables to this dir")
    b.add_argument("--no-pin", action="store_true", help="do not pin the process to one CPU")
    b.add_argument("--config")

    v = sub.add_parser("verify", help="check a report against the schema and its verdicts")
    v.add_argument("--in", dest="input", required=True)
    v.add_argument("--config")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    try:
        config = json.loads(Path(args.config).read_text())
    except OSError:
        raise
    except json.JSONDecodeError as exc:
        raise _UsageError(f"config {args.config}: {exc}") from exc
    if not isinstance(config, dict):
        raise _UsageError("config file must hold a JSON object")
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in subparser._actions}
    defaults = {}
    for key, value in config.items():
        dest = "input" if key == "in" else key.replace("-", "_")
        if dest not in known or dest in ("help", "config"):
            raise _UsageError(f"config key {key!r} is not a flag of '{args.command}'")
        if dest in ("schemes", "transactions", "operations") and isinstance(value, str):
            value = [x.strip().lower() for x in value.split(",")]
        defaults[dest] = value
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


# --------------------------------------------------------------------------
# commands


def cmd_params(args) -> int:
    schemes = [args.scheme] if args.scheme else list(SCHEME_NAMES)
    out = {}
    for s in schemes:
        kw = {"plain_modulus": args.plain_modulus} if s != "ckks" else {}
        out[s] = make_params(s, args.preset, **kw).describe()
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def _workload(args, scheme: Scheme) -> WorkloadSpec:
    base = WorkloadSpec.random(scheme, args.providers, seed=args.seed, preset=args.preset)
    prices = args.prices if args.prices is not None else base.prices
    discount = base.discount if args.discount is None else args.discount
    bonus = base.bonus if args.bonus is None else args.bonus
    if scheme is not Scheme.CKKS:
        vals = [*prices, discount, bonus]
        if any(float(x) != int(x) for x in vals):
            raise ParameterError("BFV/BGV workloads take integer cents")
        prices, discount, bonus = [int(x) for x in prices], int(discount), int(bonus)
    if len(prices) != args.providers:
        raise ParameterError(f"{len(prices)} prices given for {args.providers} providers")
    return WorkloadSpec(prices, discount, bonus, scheme, args.preset)


def _context(scheme: Scheme, preset: str, plain_modulus=None) -> Context:
    kw = {"plain_modulus": plain_modulus} if plain_modulus and scheme is not Scheme.CKKS else {}
    return Context(make_params(scheme, preset, **kw))


def cmd_run(args) -> int:
    scheme = Scheme.parse(args.scheme)
    if args.providers < 1:
        raise ParameterError("--providers must be at least 1")
    w = _workload(args, scheme)
    ctx = _context(scheme, args.preset, args.plain_modulus)
    net_kw = {"host": args.host, "base_port": args.base_port} if args.transport == "tcp" else {}
    with Parties.create(ctx, args.providers, make_network(args.transport, **net_kw),
                        args.seed) as parties:
        outcome = run_transaction(args.transaction, parties, w, audit_mode=args.audit_mode)
    verdict = verify_outcome(outcome, w, ctx.params.plain_modulus)
    report = BenchReport(environment_record())
    report.params[f"{scheme.label}/{args.preset}"] = ctx.params.describe()
    report.transactions.append(bench_from_outcome(outcome, args.preset, args.providers,
                                                  args.transport, verdict.ok))
    report.sizes.append(measure_sizes(scheme, args.preset, args.seed, ctx))
    data = report.to_dict()
    data["runs"] = [{
        "kind": outcome.kind, "scheme": scheme.label, "transaction_id": outcome.txid.hex(),
        "workload": {"prices": w.prices, "discount": w.discount, "bonus": w.bonus},
        "total": outcome.total, "oracle": oracle_total(w, ctx.params.plain_modulus),
        "verdict": {"ok": verdict.ok, "check": verdict.check, "detail": verdict.detail},
        "audit_records": [r.to_dict() for r in outcome.audit.records],
    }]
    if args.out:
        emit_report(data, "json", args.out)
    else:
        validate_report(data)
        sys.stdout.write(json.dumps(data, indent=2, sort_keys=True) + "\n")
    status = "ok" if verdict.ok else f"FAILED ({verdict.check}: {verdict.detail})"
    print(f"{outcome.kind} {scheme.label} P={args.providers}: total={outcome.total} {status}",
          file=sys.stderr)
    return EXIT_OK if verdict.ok else EXIT_VERIFY


def cmd_bench(args) -> int:
    if args.reps < 1 or args.providers < 1 or args.cores < 1:
        raise ParameterError("--reps, --providers and --cores must be at least 1")
    pinned = "" if args.no_pin else pin_to_one_cpu()
    report = BenchReport(environment_record(pinned), cost_inputs={"cores": args.cores})
    for name in args.schemes:
        scheme = Scheme.parse(name)
        ctx = _context(scheme, args.preset)
        report.params[f"{name}/{args.preset}"] = ctx.params.describe()
        for op in args.operations:
            log.info("timing %s/%s x%d", name, op, args.reps)
            report.operations.append(time_operation(
                op, scheme, args.preset, args.reps, args.seed,
                None if op == "context_creation" else ctx))
        for kind in args.transactions:
            log.info("transaction %s/%s x%d", kind, name, args.reps)
            report.transactions.append(run_transaction_bench(
                kind, scheme, args.preset, args.providers, args.reps, args.seed,
                args.transport, ctx))
        report.sizes.append(measure_sizes(scheme, args.preset, args.seed, ctx))
    written = emit_report(report, "json", args.out)
    if args.csv:
        written += emit_report(report, "csv", args.csv)
    if args.plotdata:
        written += emit_report(report, "plotdata", args.plotdata)
    for path in written:
        print(path, file=sys.stderr)
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        data = json.loads(Path(args.input).read_text())
    except json.JSONDecodeError as exc:
        print(f"not a JSON report: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    try:
        validate_report(data)
    except jsonschema.ValidationError as exc:
        print(f"schema violation: {exc.message}", file=sys.stderr)
        return EXIT_VERIFY
    problems = [f"{t['kind']}/{t['scheme']} not verified"
                for t in data["transactions"] if not t["verified"]]
    if data["audit"]["violations"]:
        problems.append(f"{data['audit']['violations']} audit violation(s)")
    for p in problems:
        print(p, file=sys.stderr)
    print(f"{len(data['transactions'])} transaction aggregate(s), "
          f"{data['audit']['messages']} audited message(s): "
          + ("FAILED" if problems else "ok"))
    return EXIT_VERIFY if problems else EXIT_OK


COMMANDS = {"params": cmd_params, "run": cmd_run, "bench": cmd_bench, "verify": cmd_verify}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except _UsageError as exc:
        print(f"smob: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except OSError as exc:
        print(f"smob: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ParameterError, ValueError) as exc:
        print(f"smob: parameter error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except (VerificationError, OrchestrationError) as exc:
        print(f"smob: verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY
    except OSError as exc:
        print(f"smob: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except SmobError as exc:
        print(f"smob: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
