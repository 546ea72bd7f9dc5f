"""
Config-driven experiment runs.

A run executes each listed experiment in order through the module that owns
it, writes flat CSV files into the output directory and finishes with
``manifest.json`` mapping every file to the operation that produced it. All
reductions are ordered, so outputs are byte-identical for any worker count.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional

from .dickman import build_rho_table, rho2_empirical_many, smooth_ratios
from .distribution import psi2_many, psi_many, repeated_lpf_count, residue_counts, root_floor
from .duality import PrimeCharFn, verify_identities
from .errors import ConfigError, DomainError, ExperimentError, FactdualError
from .series import (
    SIDES,
    SliceSpec,
    accumulate_series,
    default_checkpoints,
    exceptional_prime_series,
    floor_weighted_sum,
    frac_weighted_sum,
    pside_sums,
    sqrt_window_experiment,
)
from .sieve import DEFAULT_BLOCK_SIZE, LIMIT_CAP, factorize

BASE_EXPERIMENTS = ("identity-suite", "series", "dist", "rho", "sqrt-window")
DEFAULT_FS = ("id", "one", "res:3,1", "res:4,3", "rand:1", "rand:2", "rand:3")
DEFAULT_ALPHAS = ("1.5", "2", "2.5", "3")
# fractional-part sums cost a full pass per x
MAX_FRAC_CHECKPOINTS = 8

SERIES_HEADER = ("x", "stat", "k", "l", "value", "err_bound")
DIST_HEADER = ("x", "stat", "param1", "param2", "value")
IDENTITY_HEADER = ("identity", "n_lo", "n_hi", "k", "f", "lhs", "rhs", "passed")
FAILURE_HEADER = ("identity", "n", "k", "f", "lhs", "rhs")
SIDE_ALIASES = {"p": "smallest", "P": "largest", "p2": "second_largest", "P2": "second_largest"}

_FIELDS = (
    "limit",
    "block_size",
    "worker_count",
    "checkpoints",
    "slices",
    "experiments",
    "output_dir",
    "identity_max_n",
    "identity_k_max",
    "fs",
    "alphas",
    "dist_ys",
    "moduli",
    "rho_alpha_max",
    "rho_step",
    "rho_compare_limit",
)


def is_prime(p: int) -> bool:
    fac = factorize(p) if p >= 1 else []
    return p >= 2 and len(fac) == 1 and fac[0][1] == 1


def parse_checkpoints(spec, limit: int) -> list[int]:
    """``pow10`` | ``list:a,b,...`` | a list of integers."""
    if spec is None or spec == "pow10":
        return default_checkpoints(limit)
    if isinstance(spec, str):
        if not spec.startswith("list:"):
            raise ValueError(f"unknown checkpoint spec {spec!r}")
        spec = [v for v in spec[5:].split(",") if v.strip()]
    cps = [int(float(v)) if isinstance(v, str) and "e" in v else int(v) for v in spec]
    if not cps:
        raise ValueError("empty checkpoint list")
    if any(b <= a for a, b in zip(cps, cps[1:])):
        raise ValueError("checkpoints must be strictly increasing")
    if cps[0] < 1 or cps[-1] > limit:
        raise ValueError(f"checkpoints must lie in [1, {limit}]")
    return cps


def parse_side(side: str) -> str:
    side = SIDE_ALIASES.get(side, side)
    if side not in SIDES:
        raise ValueError(f"unknown side {side!r}")
    return side


def parse_slices(entry) -> list[SliceSpec]:
    """A slice entry is ``{"k", "residues" | "l", "side"}`` or the string ``K:RES[:SIDE]``.

    ``RES`` is ``all`` or comma-separated residues.
    """
    if isinstance(entry, str):
        parts = entry.split(":")
        if len(parts) not in (2, 3):
            raise ValueError(f"slice {entry!r} is not K:RES[:SIDE]")
        entry = {"k": parts[0], "residues": parts[1], "side": parts[2] if len(parts) == 3 else "smallest"}
    k = int(entry["k"])
    side = parse_side(entry.get("side", "smallest"))
    res = entry.get("residues", entry.get("l", "all"))
    if res == "all":
        ls = list(range(k)) if k >= 1 else []
    elif isinstance(res, (list, tuple)):
        ls = [int(v) for v in res]
    elif isinstance(res, str):
        ls = [int(v) for v in res.split(",") if v.strip()]
    else:
        ls = [int(res)]
    if k < 1:
        raise ValueError(f"modulus must be >= 1, got {k}")
    for l in ls:
        if not 0 <= l < k:
            raise ValueError(f"residue {l} not in [0, {k})")
    return [SliceSpec(k, l, side) for l in ls]


def parse_experiment(eid: str):
    """Return (kind, argument) for an experiment id, raising ValueError if malformed."""
    if eid in BASE_EXPERIMENTS:
        return eid, None
    head, sep, arg = eid.partition(":")
    if sep and head == "exceptional":
        p = int(arg)
        if not is_prime(p):
            raise ValueError(f"{p} is not prime")
        return head, p
    if sep and head == "kappa":
        try:
            return head, PrimeCharFn.parse(arg)
        except DomainError as exc:
            raise ValueError(str(exc)) from exc
    raise ValueError(f"unknown experiment id {eid!r}")


@dataclass
class ExperimentConfig:
    limit: int
    block_size: int = DEFAULT_BLOCK_SIZE
    worker_count: Optional[int] = None
    checkpoints: list = field(default_factory=list)
    slices: list = field(default_factory=list)
    experiments: list = field(default_factory=list)
    output_dir: str = "factdual-out"
    identity_max_n: Optional[int] = None
    identity_k_max: Optional[int] = None
    fs: list = field(default_factory=lambda: list(DEFAULT_FS))
    alphas: list = field(default_factory=lambda: list(DEFAULT_ALPHAS))
    dist_ys: list = field(default_factory=list)
    moduli: list = field(default_factory=lambda: [3, 4])
    rho_alpha_max: float = 16
    rho_step: str = "2^-10"
    rho_compare_limit: Optional[int] = None

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        """Validate ``raw``; every problem found is reported in one :class:`ConfigError`."""
        bad: dict[str, str] = {}
        unknown = sorted(set(raw) - set(_FIELDS))
        for key in unknown:
            bad[key] = "unknown field"
        limit = raw.get("limit")
        if not isinstance(limit, int) or isinstance(limit, bool) or limit < 2:
            if isinstance(limit, float) and limit.is_integer():
                limit = int(limit)
            else:
                bad["limit"] = "limit must be an integer >= 2"
                limit = None
        if limit is not None and limit > LIMIT_CAP:
            bad["limit"] = f"limit exceeds platform cap {LIMIT_CAP}"
        block_size = raw.get("block_size", DEFAULT_BLOCK_SIZE)
        if not isinstance(block_size, int) or block_size < 1:
            bad["block_size"] = "block_size must be a positive integer"
        workers = raw.get("worker_count")
        if workers is not None and (not isinstance(workers, int) or workers < 1):
            bad["worker_count"] = "worker_count must be a positive integer"

        cps = []
        if limit is not None and "limit" not in bad:
            try:
                cps = parse_checkpoints(raw.get("checkpoints", "pow10"), limit)
            except (ValueError, TypeError) as exc:
                bad["checkpoints"] = str(exc)
        slices: list[SliceSpec] = []
        for entry in raw.get("slices", []):
            try:
                slices.extend(parse_slices(entry))
            except (ValueError, TypeError, KeyError, DomainError) as exc:
                bad["slices"] = f"{entry!r}: {exc}"
        experiments = list(raw.get("experiments", []))
        if not experiments:
            bad["experiments"] = "no experiments listed"
        for eid in experiments:
            try:
                parse_experiment(str(eid))
            except ValueError as exc:
                bad["experiments"] = str(exc)
        fs = list(raw.get("fs", DEFAULT_FS))
        for spec in fs:
            try:
                PrimeCharFn.parse(spec)
            except DomainError as exc:
                bad["fs"] = str(exc)
        moduli = list(raw.get("moduli", [3, 4]))
        if any(not isinstance(k, int) or k < 1 for k in moduli):
            bad["moduli"] = "every modulus must be an integer >= 1"
        alphas = [str(a) for a in raw.get("alphas", DEFAULT_ALPHAS)]
        try:
            if any(Fraction(a) < 1 for a in alphas):
                bad["alphas"] = "alpha must be >= 1"
        except ValueError as exc:
            bad["alphas"] = str(exc)
        dist_ys = raw.get("dist_ys", [])
        if any(not isinstance(y, int) or y < 1 for y in dist_ys):
            bad["dist_ys"] = "y values must be integers >= 1"
        for key in ("identity_max_n", "identity_k_max", "rho_compare_limit"):
            v = raw.get(key)
            if v is not None and (not isinstance(v, int) or v < (2 if key != "identity_k_max" else 1)):
                bad[key] = f"{key} must be a positive integer"
        if bad:
            detail = "; ".join(f"{k}: {v}" for k, v in bad.items())
            raise ConfigError(f"invalid config ({detail})", fields=list(bad))
        return cls(
            limit=limit,
            block_size=block_size,
            worker_count=workers,
            checkpoints=cps,
            slices=slices,
            experiments=[str(e) for e in experiments],
            output_dir=str(raw.get("output_dir", "factdual-out")),
            identity_max_n=raw.get("identity_max_n"),
            identity_k_max=raw.get("identity_k_max"),
            fs=fs,
            alphas=alphas,
            dist_ys=list(dist_ys),
            moduli=moduli,
            rho_alpha_max=raw.get("rho_alpha_max", 16),
            rho_step=str(raw.get("rho_step", "2^-10")),
            rho_compare_limit=raw.get("rho_compare_limit"),
        )

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(raw)

    def describe(self) -> dict:
        """JSON-ready summary; the worker count is left out so manifests do not depend on it."""
        return {
            "limit": self.limit,
            "block_size": self.block_size,
            "checkpoints": self.checkpoints,
            "slices": [[s.k, s.l, s.side] for s in self.slices],
            "experiments": self.experiments,
            "fs": self.fs,
            "alphas": self.alphas,
        }


@dataclass
class OutputRecord:
    file: str
    experiment: str
    op: str
    anchor: str


@dataclass
class RunResult:
    outputs: list[OutputRecord]
    failures: list[str]

    @property
    def ok(self) -> bool:
        return not self.failures


def write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def fmt_alpha(a) -> str:
    return repr(float(Fraction(a)))


def fs_from_labels(labels) -> list[PrimeCharFn]:
    return [PrimeCharFn.parse(s) for s in labels]


def max_omega(n: int) -> int:
    """Largest omega(m) over m <= n (primorial count)."""
    count, prod, p = 0, 1, 2
    while True:
        if is_prime(p):
            if prod * p > n:
                return count
            prod *= p
            count += 1
        p += 1


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def identity_rows(reports):
    agg = [r for r in reports if not r.per_n]
    fails = [r for r in reports if r.per_n]
    agg_rows = [
        (r.identity, r.n_lo, r.n_hi, "" if r.k is None else r.k, r.f, r.lhs, r.rhs, int(r.passed))
        for r in agg
    ]
    fail_rows = [
        (r.identity, r.n_lo, "" if r.k is None else r.k, r.f, r.lhs, r.rhs) for r in fails
    ]
    return agg_rows, fail_rows


def _run_identity_suite(cfg: ExperimentConfig, out: Path, _arg):
    max_n = cfg.identity_max_n or min(cfg.limit, 10**5)
    k_max = cfg.identity_k_max or max_omega(max_n) + 1
    reports = verify_identities(max_n, k_max, fs_from_labels(cfg.fs), workers=cfg.worker_count)
    agg_rows, fail_rows = identity_rows(reports)
    write_csv(out / "identities.csv", IDENTITY_HEADER, agg_rows)
    write_csv(out / "identity_failures.csv", FAILURE_HEADER, fail_rows)
    files = [
        OutputRecord("identities.csv", "identity-suite", "duality.verify_identities",
                     "duality identities summed over 2 <= n <= max_n"),
        OutputRecord("identity_failures.csv", "identity-suite", "duality.verify_identities",
                     "per-n mismatches of the duality identities"),
    ]
    failures = [f"identity {r[0]} fails at n={r[1]} k={r[2]} f={r[3]}" for r in fail_rows]
    return files, failures


def series_files(cfg: ExperimentConfig, table, out: Path) -> list[OutputRecord]:
    """Write one long-format CSV per slice side; the smallest side carries the plain columns."""
    files = []
    rows = table.rows(side="smallest", unsliced=True)
    rows += _extra_series_rows(cfg)
    write_csv(out / "series.csv", SERIES_HEADER, rows)
    files.append(OutputRecord("series.csv", "series", "series.accumulate_series",
                              "M, m, M_omega, m_omega and smallest-factor slices"))
    for side, name in (("largest", "series_largest.csv"), ("second_largest", "series_p2.csv")):
        if any(key[0] == side for key in table.sliced):
            write_csv(out / name, SERIES_HEADER, table.rows(side=side, unsliced=False))
            files.append(OutputRecord(name, "series", "series.accumulate_series",
                                      f"sums sliced by the {side.replace('_', '-')} prime factor"))
    return files


def _extra_series_rows(cfg: ExperimentConfig):
    rows = []
    one = PrimeCharFn.one()
    for x in [c for c in cfg.checkpoints if c >= 2][-MAX_FRAC_CHECKPOINTS:]:
        floor = floor_weighted_sum(x, one, "omega", cfg.block_size, cfg.worker_count)
        rows.append((x, "floor_sum", "", "", str(floor), "0"))
        frac = frac_weighted_sum(x, None, None, cfg.block_size, cfg.worker_count)
        rows.append((x, "frac_sum", "", "", repr(frac.value), repr(frac.err_bound)))
    return rows


def _run_series(cfg: ExperimentConfig, out: Path, _arg):
    table = accumulate_series(
        cfg.limit,
        cfg.slices,
        cfg.checkpoints,
        cfg.block_size,
        cfg.worker_count,
        include_undefined=True,
    )
    return series_files(cfg, table, out), []


def dist_rows(x, ys, alphas, moduli, block_size, workers):
    rows = []
    alpha_ys = [root_floor(x, Fraction(a)) for a in alphas]
    all_ys = list(ys) + alpha_ys
    labels = [""] * len(ys) + [fmt_alpha(a) for a in alphas]
    if all_ys:
        for stat, fn in (("psi", psi_many), ("psi2", psi2_many)):
            for y, lab, v in zip(all_ys, labels, fn(x, all_ys, block_size, workers)):
                rows.append((x, stat, y, lab, v))
    rows.append((x, "nrep", "", "", repeated_lpf_count(x, block_size, workers)))
    for k in moduli:
        for side, stat in (("largest", "rescount_P"), ("second_largest", "rescount_P2")):
            table = residue_counts(x, k, side, block_size, workers)
            for l, c in enumerate(table.counts):
                rows.append((x, stat, k, l, c))
            rows.append((x, stat, k, "undef", table.undefined_count))
    return rows


def _run_dist(cfg: ExperimentConfig, out: Path, _arg):
    rows = dist_rows(cfg.limit, cfg.dist_ys, cfg.alphas, cfg.moduli, cfg.block_size, cfg.worker_count)
    write_csv(out / "dist.csv", DIST_HEADER, rows)
    return [OutputRecord("dist.csv", "dist", "distribution.psi/psi2/residue_counts",
                         "Psi(x, y), Psi_2(x, y), repeated largest factors, residue counts")], []


def rho_compare_rows(x, alphas, rho, block_size, workers):
    ratios = smooth_ratios(x, alphas, rho, block_size, workers)
    rho2 = rho2_empirical_many(x, alphas, block_size, workers)
    return [
        (fmt_alpha(a), repr(r), repr(float(Fraction(a)) * e))
        for a, r, e in zip(alphas, ratios, rho2)
    ]


def _run_rho(cfg: ExperimentConfig, out: Path, _arg):
    rho = build_rho_table(cfg.rho_alpha_max, cfg.rho_step)
    write_csv(out / "rho.csv", ("alpha", "rho"),
              ((repr(float(a)), repr(float(v))) for a, v in zip(rho.grid, rho.values)))
    x = cfg.rho_compare_limit or min(cfg.limit, 10**7)
    rows = rho_compare_rows(x, cfg.alphas, rho, cfg.block_size, cfg.worker_count)
    write_csv(out / "rho_compare.csv", ("alpha", "psi_ratio", "rho2_alpha_times"), rows)
    return [
        OutputRecord("rho.csv", "rho", "dickman.build_rho_table",
                     "rho(alpha) = 1 - integral_1^alpha rho(u - 1) du / u"),
        OutputRecord("rho_compare.csv", "rho", "dickman.smooth_ratio/rho2_empirical",
                     "Psi(x, x^(1/alpha)) ~ x rho(alpha); alpha Psi_2(x, x^(1/alpha)) / x bounded"),
    ], []


def _run_sqrt_window(cfg: ExperimentConfig, out: Path, _arg):
    x = cfg.limit
    s1, s2 = sqrt_window_experiment(x, cfg.block_size, cfg.worker_count)
    ref = x * math.log(2)
    write_csv(out / "sqrt_window.csv", ("x", "sum_P1", "sum_P2", "x_log2", "ratio"),
              [(x, s1, s2, repr(ref), repr(s1 / ref))])
    failures = [] if s2 == 0 else [f"sqrt-window: sum over P_2 is {s2}, expected 0"]
    return [OutputRecord("sqrt_window.csv", "sqrt-window", "series.sqrt_window_experiment",
                         "f = 1 on (sqrt x, x]: sum f(P) ~ x log 2, sum f(P_2) = 0")], failures


def _run_exceptional(cfg: ExperimentConfig, out: Path, p: int):
    points = exceptional_prime_series(p, cfg.limit, cfg.checkpoints, cfg.block_size, cfg.worker_count)
    rows = []
    for pt in points:
        rows.append((pt.x, "except_p", p, 0, repr(pt.sum_mu_omega.value), repr(pt.sum_mu_omega.err_bound)))
        rows.append((pt.x, "m_slice", p, 0, repr(pt.sum_mu.value), repr(pt.sum_mu.err_bound)))
    name = f"exceptional_{p}.csv"
    write_csv(out / name, SERIES_HEADER, rows)
    return [OutputRecord(name, f"exceptional:{p}", "series.exceptional_prime_series",
                         "sum of mu(n) omega(n) / n over p(n) = p")], []


def safe_label(label: str) -> str:
    return "".join(c if c.isalnum() else "_" for c in label).strip("_")


def _run_kappa(cfg: ExperimentConfig, out: Path, f: PrimeCharFn):
    pairs = pside_sums(cfg.limit, f, cfg.checkpoints, cfg.block_size, cfg.worker_count)
    k = f.k if f.kind == "residue" else ""
    l = f.l if f.kind == "residue" else ""
    rows = []
    for pr in pairs:
        rows.append((pr.x, "P1_avg", k, l, repr(pr.sum_P1 / pr.x), "0"))
        rows.append((pr.x, "P2_avg", k, l, repr(pr.sum_P2 / pr.x), "0"))
    name = f"kappa_{safe_label(f.label)}.csv"
    write_csv(out / name, SERIES_HEADER, rows)
    return [OutputRecord(name, f"kappa:{f.label}", "series.pside_average",
                         "averages of f(P(n)) and f(P_2(n)) over n <= x")], []


_RUNNERS: dict[str, Callable] = {
    "identity-suite": _run_identity_suite,
    "series": _run_series,
    "dist": _run_dist,
    "rho": _run_rho,
    "sqrt-window": _run_sqrt_window,
    "exceptional": _run_exceptional,
    "kappa": _run_kappa,
}


def write_manifest(out: Path, cfg: ExperimentConfig, outputs, failures, completed: bool):
    manifest = {
        "config": cfg.describe(),
        "completed": completed,
        "failures": failures,
        "outputs": [vars(o) for o in outputs],
    }
    with (out / "manifest.json").open("w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_experiments(cfg: ExperimentConfig) -> RunResult:
    """Run every experiment of ``cfg`` in order and write the manifest.

    An exception inside an experiment stops the run: the manifest is written
    with the outputs completed so far and :class:`ExperimentError` is raised.
    Check failures (an identity mismatch, say) do not stop the run; they are
    collected in the result.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    outputs: list[OutputRecord] = []
    failures: list[str] = []
    for eid in cfg.experiments:
        kind, arg = parse_experiment(eid)
        try:
            files, fails = _RUNNERS[kind](cfg, out, arg)
        except (FactdualError, ValueError, MemoryError, OSError) as exc:
            failures.append(f"{eid}: {exc}")
            write_manifest(out, cfg, outputs, failures, completed=False)
            raise ExperimentError(f"experiment {eid} failed: {exc}", [o.file for o in outputs]) from exc
        outputs.extend(files)
        failures.extend(fails)
    write_manifest(out, cfg, outputs, failures, completed=True)
    return RunResult(outputs, failures)
