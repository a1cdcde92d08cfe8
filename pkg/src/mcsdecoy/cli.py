"""Command-line front end.

    mcsdecoy stats --family mcs --c 1 --nu 0.53
    mcsdecoy scan --family mcs --c 1 --decoy-nu 0.196 --signal-nu 0.53 --lengths 0:150:5
    mcsdecoy optimize --families coherent,mcs:1,mcs:3
    mcsdecoy sweep-c --c-grid 1:5:0.1 --out sweep.csv

Options may also come from ``--config FILE`` holding ``key = value`` lines
(keys are long option names, dashes or underscores); flags win over the file.
Exit status: 0 success, 1 domain or I/O error, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from typing import Optional, Sequence

import numpy as np

from .channel import ChannelParams, observe, true_fock_stats
from .errors import McsDecoyError
from .keyrate import Protocol, ProtocolConfig, evaluate_point, key_rate
from .optimizer import COHERENT, OptimizationSpec, SourceFamily, optimize_point, optimized_secure_distance, sweep_c
from .photon_stats import (
    CoherentSource,
    McsSource,
    SqueezeParams,
    cached_distribution,
    mcs_from_c_nu,
    mean_photon_number,
    nu_for_mean,
)

SCAN_COLUMNS = ["L_km", "S_signal", "E_signal", "S1_true", "S1_lower", "e1_true", "e1_upper", "R_raw", "R_clamped"]
SWEEP_COLUMNS = ["c", "delta_L_2int", "delta_L_3int"]
OPTIMIZE_COLUMNS = ["family", "protocol", "secure_distance_km", "gap_km", "decoy_mean", "signal_mean"]
CURVE_COLUMNS = ["family", "protocol", "L_km", "R", "decoy_mean", "signal_mean"]


class UsageError(Exception):
    pass


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return f"{float(value):.12g}"


def render(columns: Sequence[str], rows: Sequence[Sequence], kind: str) -> str:
    if kind == "json":
        def conv(v):
            return v if v is None or isinstance(v, str) else float(fmt(v))
        return json.dumps([{c: conv(v) for c, v in zip(columns, row)} for row in rows], indent=1) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


def emit(text: str, path: Optional[str]) -> None:
    """Write atomically to ``path`` (temp file + rename), or to stdout."""
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".mcsdecoy-", suffix=".tmp")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` (stop inclusive) or a comma-separated list."""
    text = str(text).strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"grid must be start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise argparse.ArgumentTypeError(f"bad grid {text!r}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + k * step, 10) for k in range(count)]
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def parse_families(text: str) -> list[SourceFamily]:
    out = []
    for item in str(text).split(","):
        item = item.strip()
        if item == "coherent":
            out.append(COHERENT)
        elif item.startswith("mcs:"):
            out.append(SourceFamily(float(item[4:])))
        else:
            raise argparse.ArgumentTypeError(f"family must be 'coherent' or 'mcs:<c>', got {item!r}")
    return out


def parse_protocols(text: str) -> list[Protocol]:
    if text == "both":
        return [Protocol.TWO_INTENSITY, Protocol.THREE_INTENSITY]
    try:
        return [Protocol(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"protocol must be two_intensity, three_intensity or both") from None


def read_config(path: str) -> dict[str, str]:
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror or exc}") from None
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _common(p: argparse.ArgumentParser) -> None:
    d = ChannelParams()
    p.add_argument("--config", help="flat key = value file; flags override it")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--k-db", type=float, default=d.k_db_per_km, help="fiber loss, dB/km")
    p.add_argument("--eta-bob", type=float, default=d.eta_bob)
    p.add_argument("--s0", type=float, default=d.s0, help="dark count rate per pulse")
    p.add_argument("--e-det", type=float, default=d.e_det)
    p.add_argument("-v", "--verbose", action="store_true")


def _protocol_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--q", type=float, default=0.5, help="sifting factor")
    p.add_argument("--f-ec", type=float, default=1.2, help="error-correction inefficiency")


def _search_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--grid-points", type=int, default=30)
    p.add_argument("--refinement-rounds", type=int, default=2)
    p.add_argument("--decoy-mean-fixed", type=float, default=0.1, help="three-intensity decoy mean")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcsdecoy", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="photon-number distribution of one source")
    _common(p)
    p.add_argument("--family", choices=["coherent", "mcs"])
    p.add_argument("--mean", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--zeta", type=float)
    p.add_argument("--max-n", type=int)

    p = sub.add_parser("scan", help="bounds and key rate of a fixed source pair over fiber length")
    _common(p)
    _protocol_opts(p)
    p.add_argument("--family", choices=["coherent", "mcs"], default="coherent")
    p.add_argument("--protocol", choices=[x.value for x in Protocol], default=Protocol.TWO_INTENSITY.value)
    p.add_argument("--c", type=float)
    p.add_argument("--decoy-mean", type=float)
    p.add_argument("--signal-mean", type=float)
    p.add_argument("--decoy-nu", type=float)
    p.add_argument("--signal-nu", type=float)
    p.add_argument("--lengths", type=parse_grid, default=parse_grid("0:150:10"))

    p = sub.add_parser("optimize", help="optimised secure distances and gains over coherent light")
    _common(p)
    _protocol_opts(p)
    _search_opts(p)
    p.add_argument("--families", type=parse_families, default=parse_families("coherent,mcs:1,mcs:3"))
    p.add_argument("--protocol", type=parse_protocols, default=parse_protocols("both"))
    p.add_argument("--lengths", type=parse_grid, help="also write optimised rate curves on this grid")
    p.add_argument("--curves-out", help="path for the rate curves (default: stdout after the summary)")

    p = sub.add_parser("sweep-c", help="secure-distance gain versus c")
    _common(p)
    _protocol_opts(p)
    _search_opts(p)
    p.add_argument("--c-grid", type=parse_grid, default=parse_grid("1:5:0.5"))
    p.add_argument("--workers", type=int, default=1)
    return parser


def channel_from(args) -> ChannelParams:
    return ChannelParams(args.k_db, args.eta_bob, args.s0, args.e_det)


def _given(args, *names) -> list[str]:
    return [n for n in names if getattr(args, n, None) is not None]


def _source_for_stats(args):
    given = set(_given(args, "mean", "c", "nu", "alpha", "zeta"))
    if args.family is None:
        raise UsageError("--family is required")
    if args.family == "coherent":
        if given == {"mean"}:
            return CoherentSource(args.mean)
        if given == {"alpha"}:
            return CoherentSource(args.alpha**2)
        raise UsageError("coherent source takes exactly one of --mean or --alpha")
    if given == {"c", "nu"}:
        return mcs_from_c_nu(args.c, args.nu)
    if given == {"alpha", "zeta"}:
        return McsSource(args.alpha, SqueezeParams(args.zeta))
    if given == {"c", "mean"}:
        return mcs_from_c_nu(args.c, nu_for_mean(args.c, args.mean))
    raise UsageError("mcs source takes (--c, --nu), (--alpha, --zeta) or (--c, --mean)")


def cmd_stats(args) -> str:
    source = _source_for_stats(args)
    dist = cached_distribution(source)
    nmax = dist.truncation if args.max_n is None else args.max_n
    rows = [(n, dist[n]) for n in range(nmax + 1)]
    if args.format == "csv":
        print(f"mean photon number: {fmt(mean_photon_number(dist))}", file=sys.stderr)
    if args.format == "json":
        return json.dumps(
            {"mean": float(fmt(mean_photon_number(dist))), "rows": [{"n": n, "P_n": float(fmt(p))} for n, p in rows]},
            indent=1,
        ) + "\n"
    return render(["n", "P_n"], rows, "csv")


def _pair_for_scan(args):
    given = set(_given(args, "c", "decoy_mean", "signal_mean", "decoy_nu", "signal_nu"))
    if args.family == "coherent":
        if given != {"decoy_mean", "signal_mean"}:
            raise UsageError("coherent scan takes --decoy-mean and --signal-mean only")
        return CoherentSource(args.decoy_mean), CoherentSource(args.signal_mean)
    if given == {"c", "decoy_nu", "signal_nu"}:
        return mcs_from_c_nu(args.c, args.decoy_nu), mcs_from_c_nu(args.c, args.signal_nu)
    if given == {"c", "decoy_mean", "signal_mean"}:
        fam = SourceFamily(args.c)
        return fam.source(args.decoy_mean), fam.source(args.signal_mean)
    raise UsageError("mcs scan takes --c with (--decoy-nu, --signal-nu) or (--decoy-mean, --signal-mean)")


def scan_rows(pair, channel: ChannelParams, config: ProtocolConfig, lengths: Sequence[float]) -> list[list]:
    decoy, signal = pair
    s_dist = cached_distribution(signal)
    if not decoy.mean < signal.mean:
        raise UsageError("decoy mean photon number must be below the signal's")
    rows = []
    for L in lengths:
        s1_true, e1_true = true_fock_stats(channel, L, 1)[1]
        try:
            point = evaluate_point(pair, channel, config, L)
            obs, est, raw = point.signal_obs, point.estimate, point.rate
        except McsDecoyError as exc:
            logging.getLogger("mcsdecoy").warning("L=%g km: %s", L, exc)
            obs, est = observe(s_dist, channel, L), None
            raw = key_rate(config, obs, s_dist[1], None)
        s1l = est.s1_lower if est is not None else None
        e1u = est.e1_upper if est is not None else None
        rows.append([L, obs.gain, obs.qber, s1_true, s1l, e1_true, e1u, raw, max(raw, 0.0)])
    return rows


def cmd_scan(args) -> str:
    pair = _pair_for_scan(args)
    config = ProtocolConfig(args.protocol, args.q, args.f_ec)
    return render(SCAN_COLUMNS, scan_rows(pair, channel_from(args), config, args.lengths), args.format)


def _spec(args, protocol: Protocol, family: SourceFamily) -> OptimizationSpec:
    return OptimizationSpec(
        protocol=protocol,
        family=family,
        decoy_mean_fixed=args.decoy_mean_fixed if protocol is Protocol.THREE_INTENSITY else None,
        grid_points=args.grid_points,
        refinement_rounds=args.refinement_rounds,
        q=args.q,
        f_ec=args.f_ec,
    )


def cmd_optimize(args) -> str:
    channel = channel_from(args)
    summary, curves = [], []
    for protocol in args.protocol:
        base = optimized_secure_distance(_spec(args, protocol, COHERENT), channel)
        for fam in args.families:
            spec = _spec(args, protocol, fam)
            dist = base if fam == COHERENT else optimized_secure_distance(spec, channel)
            opt = optimize_point(spec, channel, dist)
            summary.append([fam.label, protocol.value, dist, dist - base, opt.decoy_mean, opt.signal_mean])
            for L in args.lengths or ():
                try:
                    o = optimize_point(spec, channel, L)
                    curves.append([fam.label, protocol.value, L, o.rate, o.decoy_mean, o.signal_mean])
                except McsDecoyError:
                    curves.append([fam.label, protocol.value, L, 0.0, None, None])
    text = render(OPTIMIZE_COLUMNS, summary, args.format)
    if args.lengths:
        curve_text = render(CURVE_COLUMNS, curves, args.format)
        if args.curves_out:
            emit(curve_text, args.curves_out)
        else:
            text += curve_text
    return text


def cmd_sweep_c(args) -> str:
    base = OptimizationSpec(
        decoy_mean_fixed=args.decoy_mean_fixed,
        grid_points=args.grid_points,
        refinement_rounds=args.refinement_rounds,
        q=args.q,
        f_ec=args.f_ec,
    )
    result = sweep_c(args.c_grid, channel_from(args), base, workers=args.workers)
    for row in result.rows:
        for tag, err in row.errors.items():
            logging.getLogger("mcsdecoy").warning("c=%g %s: %s", row.c, tag, err)
    rows = [[r.c, r.delta_l_2int, r.delta_l_3int] for r in result.rows]
    return render(SWEEP_COLUMNS, rows, args.format)


COMMANDS = {"stats": cmd_stats, "scan": cmd_scan, "optimize": cmd_optimize, "sweep-c": cmd_sweep_c}


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    values = read_config(args.config)
    sub = parser._subparsers._group_actions[0].choices[args.command]
    dests = {a.dest for a in sub._actions} - {"help", "config"}
    unknown = sorted(set(values) - dests)
    if unknown:
        raise UsageError(f"{args.config}: unknown keys {', '.join(unknown)}")
    for action in sub._actions:
        if action.dest in values and action.option_strings and action.nargs == 0:
            values[action.dest] = values[action.dest].lower() in ("1", "true", "yes", "on")
    sub.set_defaults(**values)
    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        print(f"mcsdecoy: usage error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        text = COMMANDS[args.command](args)
        emit(text, args.out)
    except UsageError as exc:
        print(f"mcsdecoy: usage error: {exc}", file=sys.stderr)
        return 2
    except (McsDecoyError, OSError) as exc:
        print(f"mcsdecoy: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"mcsdecoy: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
