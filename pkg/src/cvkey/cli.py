"""Command-line front end.

    cvkey rate --eta 0.5 --delta 0.2 --optimize-kappa --protocol rr-ps
    cvkey figure 4 --delta 0 --out fig4.csv
    cvkey verify --suite all --seed 7

Exit codes: 0 success, 1 failed verification, 2 invalid arguments,
3 quadrature non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__
from .channel import ChannelParams
from .keyrate import (
    ConvergenceError,
    ECKind,
    ECModel,
    ProtocolSpec,
    QuadratureSettings,
    RateBreakdown,
    key_rate,
)
from .optimizer import FixedKappa, OptimizeKappa, SweepSpec, optimize_kappa, run_sweep

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2
EXIT_NONCONVERGENCE = 3

PROTOCOLS = ("dr", "dr-ps", "rr", "rr-ps", "2way", "2way-ps")

DELTAS_FINE = (0.0, 0.02, 0.04, 0.06, 0.08, 0.1)

# figure number -> (excess-noise values, protocol labels, error correction)
FIGURES = {
    1: ((0.02,), ("dr-ps", "rr", "rr-ps"), "ideal"),
    2: (DELTAS_FINE, ("dr-ps", "rr"), "ideal"),
    3: ((0.0, 0.1, 0.2, 0.3), ("dr-ps", "rr-ps"), "ideal"),
    4: (DELTAS_FINE, ("2way-ps", "dr-ps"), "ideal"),
    5: (DELTAS_FINE, ("2way-ps", "rr-ps"), "cascade"),
}


class UsageError(Exception):
    pass


def fmt(x) -> str:
    """Floats with 17 significant digits; everything else via str."""
    if isinstance(x, float):
        return format(x, ".17g")
    if isinstance(x, bool):
        return "true" if x else "false"
    return str(x)


@dataclass
class RunConfig:
    """Everything a run depends on, serializable as flat ``key = value`` text."""

    subcommand: str
    eta: float | None = None
    delta: float | None = None
    kappa: float | None = None
    optimize_kappa: tuple[float, float] | None = None
    protocols: list[str] = field(default_factory=list)
    ec: str = "ideal"
    nodes: int = 200
    figure: int | None = None
    deltas: list[float] | None = None
    loss_step: float = 0.02
    format: str = "csv"
    out: str | None = None

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if value is None:
                continue
            if isinstance(value, (list, tuple)):
                value = ",".join(fmt(v) for v in value)
            else:
                value = fmt(value)
            lines.append(f"{f.name} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        raw = _parse_kv(text)
        kwargs = {}
        for f in fields(cls):
            if f.name not in raw:
                continue
            v = raw[f.name]
            if f.name in ("eta", "delta", "kappa", "loss_step"):
                kwargs[f.name] = float(v)
            elif f.name in ("nodes", "figure"):
                kwargs[f.name] = int(v)
            elif f.name == "optimize_kappa":
                lo, hi = (float(x) for x in v.split(","))
                kwargs[f.name] = (lo, hi)
            elif f.name == "protocols":
                kwargs[f.name] = [x for x in v.split(",") if x]
            elif f.name == "deltas":
                kwargs[f.name] = [float(x) for x in v.split(",") if x]
            else:
                kwargs[f.name] = v
        return cls(**kwargs)

    def as_dict(self) -> dict:
        d = asdict(self)
        if d["optimize_kappa"] is not None:
            d["optimize_kappa"] = list(d["optimize_kappa"])
        return d


def _parse_kv(text: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _config_argv(path: str) -> list[str]:
    """Turn a flat config file into flag tokens; later command-line flags win."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    argv = []
    for key, value in _parse_kv(text).items():
        flag = "--" + key.replace("_", "-")
        low = value.lower()
        if low in ("true", "yes", "on"):
            argv.append(flag)
        elif low in ("false", "no", "off", ""):
            continue
        else:
            argv.append(f"{flag}={value}")
    return argv


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _kappa_bounds(text: str) -> tuple[float, float]:
    vals = _float_list(text)
    if len(vals) != 2 or not 0 < vals[0] < vals[1]:
        raise argparse.ArgumentTypeError("expected LO,HI with 0 < LO < HI")
    return vals[0], vals[1]


def _ec_model(text: str) -> ECModel:
    if text == "ideal":
        return ECModel(ECKind.IDEAL)
    if text == "cascade":
        return ECModel(ECKind.CASCADE_FIT)
    if text.startswith("file:"):
        path = text[5:]
        try:
            rows = Path(path).read_text(encoding="utf-8").splitlines()
        except OSError as exc:
            raise UsageError(f"cannot read efficiency table {path}: {exc}") from None
        points = []
        for row in csv.reader(r for r in rows if r.strip() and not r.lstrip().startswith("#")):
            try:
                points.append((float(row[0]), float(row[1])))
            except (ValueError, IndexError):
                continue  # header or malformed line
        try:
            return ECModel(ECKind.CUSTOM, tuple(points))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    raise UsageError(f"--ec must be ideal, cascade or file:<path>, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvkey", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file; flags given here override it")
    common.add_argument("--nodes", type=int, default=200, help="Gauss-Legendre nodes per panel")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--ec", default="ideal", help="ideal | cascade | file:<csv of e,f>")

    rate = sub.add_parser("rate", parents=[common], help="key rate at one parameter point")
    rate.add_argument("--eta", type=float, required=True)
    rate.add_argument("--delta", type=float, required=True)
    kap = rate.add_mutually_exclusive_group(required=True)
    kap.add_argument("--kappa", type=float)
    kap.add_argument(
        "--optimize-kappa",
        nargs="?",
        const=(0.1, 3.0),
        type=_kappa_bounds,
        metavar="LO,HI",
        help="optimize the modulation variance (default bounds 0.1,3)",
    )
    rate.add_argument("--protocol", choices=PROTOCOLS, required=True)

    fig = sub.add_parser("figure", parents=[common], help="data behind one of the rate-vs-loss figures")
    fig.add_argument("figure", type=int, choices=sorted(FIGURES))
    fig.add_argument("--delta", type=_float_list, help="comma-separated excess-noise subset")
    fig.add_argument("--loss-step", type=float, default=0.02)
    fig.add_argument("--kappa", type=float, help="fixed kappa instead of optimizing")

    ver = sub.add_parser("verify", help="oracle cross-check suites")
    ver.add_argument("--suite", choices=("gram", "mc", "quadrature", "all"), default="all")
    ver.add_argument("--seed", type=int, default=7)
    ver.add_argument("--samples", type=int, default=1_000_000, help="Monte-Carlo sample count")
    ver.add_argument("--gram-samples", type=int, default=100_000)
    return parser


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


RATE_COLUMNS = (
    "eta",
    "delta",
    "protocol",
    "ec",
    "kappa",
    "rate",
    "mutual_info",
    "eve_info",
    "ec_penalty",
    "ps_survival",
    "quadrature_error_estimate",
    "nodes",
    "kappa_boundary",
)


def cmd_rate(args, cfg: RunConfig) -> int:
    ec = _ec_model(args.ec)
    protocol = ProtocolSpec.from_label(args.protocol, ec)
    quad = QuadratureSettings(nodes=args.nodes)
    boundary = False
    try:
        if args.optimize_kappa is not None:
            ChannelParams(args.eta, args.delta, 1.0)  # validate before the search
            opt = optimize_kappa(args.eta, args.delta, protocol, args.optimize_kappa, quad=quad)
            kappa, bd, boundary = opt.kappa, opt.breakdown, opt.boundary
        else:
            kappa = args.kappa
            bd = key_rate(ChannelParams(args.eta, args.delta, kappa), protocol, quad)
        code = EXIT_OK
    except ConvergenceError as exc:
        print(f"cvkey: {exc}", file=sys.stderr)
        bd, code = exc.breakdown, EXIT_NONCONVERGENCE
        kappa = args.kappa if args.kappa is not None else float("nan")
    row = [args.eta, args.delta, protocol.label, ec.label, float(kappa)]
    row += [bd.rate, bd.mutual_info, bd.eve_info, bd.ec_penalty, bd.ps_survival]
    row += [bd.quadrature_error_estimate, bd.nodes, boundary]
    if args.format == "csv":
        text = _csv_text(RATE_COLUMNS, [row])
    else:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "cvkey_version": __version__,
            "config": cfg.as_dict(),
            "result": dict(zip(RATE_COLUMNS, row)),
            "converged": code == EXIT_OK,
        }
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    _emit(text, args.out)
    return code


FIGURE_COLUMNS = ("loss", "delta", "protocol", "kappa", "rate")


def figure_spec(number: int, deltas=None, loss_step: float = 0.02, kappa=None, nodes: int = 200) -> SweepSpec:
    default_deltas, labels, ec_name = FIGURES[number]
    if not 0 < loss_step <= 0.98:
        raise UsageError("--loss-step must lie in (0, 0.98]")
    n_steps = int(0.98 / loss_step + 1e-9)  # never step past 0.98
    losses = [round(i * loss_step, 12) for i in range(n_steps + 1)]
    ec = _ec_model(ec_name)
    return SweepSpec(
        eta_grid=tuple(round(1.0 - loss, 12) for loss in losses),
        delta_list=tuple(deltas if deltas else default_deltas),
        protocols=tuple(ProtocolSpec.from_label(lab, ec) for lab in labels),
        kappa_policy=FixedKappa(kappa) if kappa is not None else OptimizeKappa(),
        quad=QuadratureSettings(nodes=nodes),
    )


def _protocol_name(p: ProtocolSpec) -> str:
    return p.label if p.ec_model.kind is ECKind.IDEAL else f"{p.label}:{p.ec_model.label}"


def cmd_figure(args, cfg: RunConfig) -> int:
    spec = figure_spec(args.figure, args.delta, args.loss_step, args.kappa, args.nodes)
    result = run_sweep(spec)
    code = EXIT_OK
    table = []
    for r in result.rows:
        if r.error:
            print(f"cvkey: eta={r.eta} delta={r.delta} {_protocol_name(r.protocol)}: {r.error}", file=sys.stderr)
            code = EXIT_NONCONVERGENCE if "ConvergenceError" in r.error else max(code, EXIT_FAILED)
        table.append([round(1.0 - r.eta, 12), r.delta, _protocol_name(r.protocol), float(r.kappa), r.rate])
    if args.format == "csv":
        text = _csv_text(FIGURE_COLUMNS, table)
    else:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "cvkey_version": __version__,
            "config": cfg.as_dict(),
            "metadata": result.metadata,
            "rows": [dict(zip(FIGURE_COLUMNS, r)) for r in table],
        }
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    _emit(text, args.out)
    return code


def cmd_verify(args) -> int:
    from . import verify

    results = []
    if args.suite in ("gram", "all"):
        results += verify.check_gram(seed=args.seed, n=args.gram_samples)
    if args.suite in ("mc", "all"):
        results += verify.check_mc(samples=args.samples, seed=args.seed)
    if args.suite in ("quadrature", "all"):
        results += verify.check_quadrature()
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILED


def _run_config(args) -> RunConfig:
    if args.subcommand == "rate":
        return RunConfig(
            "rate",
            eta=args.eta,
            delta=args.delta,
            kappa=args.kappa,
            optimize_kappa=args.optimize_kappa,
            protocols=[args.protocol],
            ec=args.ec,
            nodes=args.nodes,
            format=args.format,
            out=args.out,
        )
    return RunConfig(
        "figure",
        kappa=args.kappa,
        protocols=list(FIGURES[args.figure][1]),
        ec=FIGURES[args.figure][2],
        nodes=args.nodes,
        figure=args.figure,
        deltas=args.delta,
        loss_step=args.loss_step,
        format=args.format,
        out=args.out,
    )


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        # splice config-file flags in right after the subcommand
        pre = argparse.ArgumentParser(add_help=False)
        pre.add_argument("--config")
        known, _ = pre.parse_known_args(argv)
        if known.config and argv:
            argv = argv[:1] + _config_argv(known.config) + argv[1:]
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code) if exc.code is not None else EXIT_OK
        if args.subcommand == "verify":
            return cmd_verify(args)
        if args.nodes < 2:
            raise UsageError("--nodes must be >= 2")
        cfg = _run_config(args)
        if args.subcommand == "rate":
            ChannelParams(args.eta, args.delta, args.kappa if args.kappa is not None else 1.0)
            return cmd_rate(args, cfg)
        return cmd_figure(args, cfg)
    except (UsageError, ValueError, TypeError) as exc:
        print(f"cvkey: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
