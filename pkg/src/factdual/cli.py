"""Command-line entry point ``factdual``."""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .dickman import build_rho_table
from .distribution import psi2_many, psi_many, repeated_lpf_count, residue_counts, root_floor
from .duality import IDENTITY_IDS, PrimeCharFn, verify_identities
from .errors import ConfigError, ExperimentError, FactdualError
from .experiments import (
    DIST_HEADER,
    FAILURE_HEADER,
    SERIES_HEADER,
    ExperimentConfig,
    fmt_alpha,
    identity_rows,
    max_omega,
    parse_checkpoints,
    parse_side,
    parse_slices,
    rho_compare_rows,
    run_experiments,
)
from .fitting import fit_rates, load_series_csv
from .series import accumulate_series
from .sieve import DEFAULT_BLOCK_SIZE, iter_blocks

MAGIC = b"FDUAL001"
RECORD_DTYPE = np.dtype(
    [
        ("n", "<u8"),
        ("mu", "i1"),
        ("omega", "u1"),
        ("big_omega", "u1"),
        ("spf", "<u4"),
        ("lpf", "<u4"),
        ("p2_strict", "<u4"),
        ("p2_mult", "<u4"),
    ]
)


@contextlib.contextmanager
def _open_out(path, binary=False):
    if path in (None, "-"):
        yield sys.stdout.buffer if binary else sys.stdout
    else:
        with open(path, "wb" if binary else "w", newline=None if binary else "") as fh:
            yield fh


def _write_rows(path, header, rows):
    with _open_out(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _int(text: str) -> int:
    """Integers in plain or scientific notation (1e6)."""
    value = float(text) if any(c in text for c in "eE.") else int(text)
    if int(value) != value:
        raise argparse.ArgumentTypeError(f"{text} is not an integer")
    return int(value)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--block-size", type=_int, default=DEFAULT_BLOCK_SIZE)
    p.add_argument("--workers", type=int, default=None,
                   help="worker threads (FACTDUAL_WORKERS overrides)")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def block_records(block) -> np.ndarray:
    rec = np.empty(len(block), dtype=RECORD_DTYPE)
    rec["n"] = block.n
    for name in RECORD_DTYPE.names[1:]:
        rec[name] = getattr(block, name)
    return rec


def cmd_sieve(args) -> int:
    count = 0
    mertens = 1
    fh = open(args.out, "wb") if args.out else None
    try:
        if fh:
            fh.write(MAGIC)
        for block in iter_blocks(args.limit, args.block_size, args.workers):
            count += len(block)
            mertens += int(block.mu.astype(np.int64).sum())
            if fh:
                fh.write(block_records(block).tobytes())
    finally:
        if fh:
            fh.close()
    print(f"sieved {count} integers in [2, {args.limit}]; M({args.limit}) = {mertens}", file=sys.stderr)
    return 0


def cmd_verify(args) -> int:
    idents = list(IDENTITY_IDS) if args.identity == "all" else [args.identity]
    fs = [PrimeCharFn.parse(s) for s in (args.f or ["id"])]
    k_max = args.k if args.k is not None else max_omega(args.max_n) + 1
    reports = verify_identities(args.max_n, k_max, fs, idents, workers=args.workers)
    agg, fails = identity_rows(reports)
    _write_rows(args.out, FAILURE_HEADER, fails)
    bad = sum(1 for r in agg if not r[-1])
    print(f"{len(agg) - bad}/{len(agg)} identity checks passed", file=sys.stderr)
    return 1 if bad else 0


def cmd_series(args) -> int:
    cps = parse_checkpoints(args.checkpoints, args.limit)
    side = parse_side(args.side)
    slices = []
    if args.mod is not None:
        slices = parse_slices({"k": args.mod, "residues": args.residues, "side": side})
    table = accumulate_series(
        args.limit, slices, cps, args.block_size, args.workers,
        include_undefined=side == "second_largest",
    )
    _write_rows(args.out, SERIES_HEADER, table.rows())
    return 0


def cmd_dist(args) -> int:
    x = args.limit
    if args.stat == "nrep":
        rows = [(x, "nrep", "", "", repeated_lpf_count(x, args.block_size, args.workers))]
    elif args.stat in ("psi", "psi2"):
        if (args.y is None) == (args.alpha is None):
            raise ConfigError("give exactly one of --y or --alpha", fields=["y", "alpha"])
        if args.y is not None:
            y, label = args.y, ""
        else:
            y, label = root_floor(x, args.alpha), fmt_alpha(args.alpha)
        fn = psi_many if args.stat == "psi" else psi2_many
        rows = [(x, args.stat, y, label, fn(x, [y], args.block_size, args.workers)[0])]
    else:
        if args.mod is None:
            raise ConfigError("rescount needs --mod", fields=["mod"])
        side = "largest" if args.side == "P" else "second_largest"
        stat = "rescount_P" if args.side == "P" else "rescount_P2"
        table = residue_counts(x, args.mod, side, args.block_size, args.workers)
        rows = [(x, stat, args.mod, l, c) for l, c in enumerate(table.counts)]
        rows.append((x, stat, args.mod, "undef", table.undefined_count))
    _write_rows(args.out, DIST_HEADER, rows)
    return 0


def cmd_rho(args) -> int:
    rho = build_rho_table(args.alpha_max, args.step, richardson=args.richardson)
    rows = ((repr(float(a)), repr(float(v))) for a, v in zip(rho.grid, rho.values))
    _write_rows(args.out, ("alpha", "rho"), rows)
    return 0


def cmd_rho_compare(args) -> int:
    alphas = [a.strip() for a in args.alphas.split(",") if a.strip()]
    top = max(float(a) for a in alphas)
    rho = build_rho_table(max(16, int(top) + 1))
    rows = rho_compare_rows(args.limit, alphas, rho, args.block_size, args.workers)
    _write_rows(args.out, ("alpha", "psi_ratio", "rho2_alpha_times"), rows)
    return 0


_OVERRIDES = {
    "limit": "limit",
    "block_size": "block_size",
    "workers": "worker_count",
    "checkpoints": "checkpoints",
    "experiments": "experiments",
    "out_dir": "output_dir",
    "identity_max_n": "identity_max_n",
    "identity_k_max": "identity_k_max",
    "fs": "fs",
    "alphas": "alphas",
    "moduli": "moduli",
}


def cmd_run(args) -> int:
    raw: dict = {}
    if args.config:
        with open(args.config) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
    for attr, key in _OVERRIDES.items():
        v = getattr(args, attr)
        if v is not None:
            raw[key] = v
    if args.slice:
        raw["slices"] = list(args.slice)
    cfg = ExperimentConfig.from_dict(raw)
    try:
        result = run_experiments(cfg)
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"completed outputs: {', '.join(exc.completed) or 'none'}", file=sys.stderr)
        return 1
    for line in result.failures:
        print(f"FAIL {line}", file=sys.stderr)
    print(f"wrote {len(result.outputs)} outputs to {cfg.output_dir}", file=sys.stderr)
    return 0 if result.ok else 1


def cmd_report(args) -> int:
    src = Path(args.indir)
    sources = [("series.csv", "smallest"), ("series_largest.csv", "largest"),
               ("series_p2.csv", "second_largest")]
    reports = []
    for name, side in sources:
        path = src / name
        if path.exists():
            table = load_series_csv(path, side)
            reports.extend(fit_rates(table, experiment=name[:-4]))
    if not reports:
        raise ConfigError(f"no series CSV found in {src}", fields=["in"])
    with _open_out(args.out) as fh:
        json.dump([r.to_json() for r in reports], fh, indent=2)
        fh.write("\n")
    failed = [r.model for r in reports if r.verdict == "fail"]
    for model in failed:
        print(f"fit verdict fail: {model}", file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="factdual",
        description="Sieve multiplicative data, check prime-factor duality identities, run experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sieve", help="sieve [2, limit], optionally dumping binary records")
    p.add_argument("--limit", type=_int, required=True)
    p.add_argument("--out", default=None, help="binary dump path")
    _common(p)
    p.set_defaults(func=cmd_sieve)

    p = sub.add_parser("verify", help="check duality identities exactly")
    p.add_argument("--identity", choices=list(IDENTITY_IDS) + ["all"], default="all")
    p.add_argument("--max-n", type=_int, required=True)
    p.add_argument("--k", type=int, default=None, help="check every k from 1 to K")
    p.add_argument("--f", action="append", help="id | one | res:k,l | rand:seed (repeatable)")
    p.add_argument("--out", default=None, help="failure CSV (default stdout)")
    _common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("series", help="checkpointed Mertens-type sums")
    p.add_argument("--limit", type=_int, required=True)
    p.add_argument("--mod", type=int, default=None)
    p.add_argument("--residues", default="all")
    p.add_argument("--side", default="smallest", choices=["smallest", "largest", "p2"])
    p.add_argument("--checkpoints", default="pow10")
    p.add_argument("--out", default=None)
    _common(p)
    p.set_defaults(func=cmd_series)

    p = sub.add_parser("dist", help="smooth counts and residue distribution of P, P_2")
    p.add_argument("--limit", type=_int, required=True)
    p.add_argument("--stat", choices=["psi", "psi2", "nrep", "rescount"], required=True)
    p.add_argument("--y", type=_int, default=None)
    p.add_argument("--alpha", default=None)
    p.add_argument("--mod", type=int, default=None)
    p.add_argument("--side", choices=["P", "P2"], default="P")
    p.add_argument("--out", default=None)
    _common(p)
    p.set_defaults(func=cmd_dist)

    p = sub.add_parser("rho", help="tabulate the Dickman function")
    p.add_argument("--alpha-max", type=float, default=16)
    p.add_argument("--step", default="2^-10")
    p.add_argument("--richardson", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_rho)

    p = sub.add_parser("rho-compare", help="empirical Psi and Psi_2 against rho")
    p.add_argument("--limit", type=_int, required=True)
    p.add_argument("--alphas", default="1.5,2,2.5,3")
    p.add_argument("--out", default=None)
    _common(p)
    p.set_defaults(func=cmd_rho_compare)

    p = sub.add_parser("run", help="run experiments from a JSON config")
    p.add_argument("--config", default=None)
    p.add_argument("--limit", type=_int, default=None)
    p.add_argument("--block-size", type=_int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--checkpoints", default=None)
    p.add_argument("--experiments", type=lambda s: s.split(","), default=None)
    p.add_argument("--slice", action="append", help="K:RES[:SIDE], RES = all or l1,l2")
    p.add_argument("--out-dir", default=None)
    p.add_argument("--identity-max-n", type=_int, default=None)
    p.add_argument("--identity-k-max", type=int, default=None)
    p.add_argument("--fs", type=lambda s: s.split(";"), default=None, help="f specs separated by ;")
    p.add_argument("--alphas", type=lambda s: s.split(","), default=None)
    p.add_argument("--moduli", type=lambda s: [int(v) for v in s.split(",")], default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="fit convergence rates to series CSVs")
    p.add_argument("--in", dest="indir", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        if exc.fields:
            print(f"offending fields: {', '.join(exc.fields)}", file=sys.stderr)
        return 2
    except (FactdualError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
