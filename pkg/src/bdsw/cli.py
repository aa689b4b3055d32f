"""Command-line runner: ``bdsw run``, ``bdsw sweep`` and ``bdsw verify``.

Records go to stdout (or ``--out``) as JSON lines or CSV, one complete
record per line.  Exit codes: 0 success, 1 verification or key-agreement
failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import oracle
from .errors import AbortNoKey
from .pairstate import ChannelParams, Sampling
from .rates import RateInputs, key_rate, tagged_key_rate
from .session import Mode, SessionConfig, run_session

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SEED_ENV = "BDSW_SEED"

# fixed column order for spreadsheets
CSV_COLUMNS = (
    "seed", "mode", "n", "delta_b", "delta_p", "tag_fraction", "test_fraction",
    "sampling", "ec_slack", "pa_slack", "n_post_test", "ec_rounds", "pa_rounds",
    "key_length", "realized_rate", "formula_rate", "agreed", "abort_reason",
    "estimate_delta_b", "estimate_delta_p", "wall_time_ms", "key_hex",
    "transcript_sha256",
)


def _rate(text: str) -> float:
    v = float(text)
    if not 0.0 <= v < 0.5:
        raise argparse.ArgumentTypeError(f"error rate must lie in [0, 0.5), got {text}")
    return v


def _tag(text: str) -> float:
    v = float(text)
    if not 0.0 <= v < 1.0:
        raise argparse.ArgumentTypeError(f"tag fraction must lie in [0, 1), got {text}")
    return v


def _open_unit(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"test fraction must lie in (0, 1), got {text}")
    return v


def _count(minimum: int):
    def parse(text: str) -> int:
        v = int(text)
        if v < minimum:
            raise argparse.ArgumentTypeError(f"expected an integer >= {minimum}, got {text}")
        return v
    return parse


def _grid(kind):
    def parse(text: str) -> list[float]:
        values = [kind(part) for part in text.split(",") if part.strip()]
        if not values:
            raise argparse.ArgumentTypeError("empty grid")
        return values
    return parse


def formula_rate(delta_b: float, delta_p: float, delta: float) -> float | None:
    """Closed-form key fraction at the nominal rates; None past the tagged edge."""
    inp = RateInputs(delta_b, delta_p, delta)
    if delta == 0:
        return key_rate(inp)
    try:
        return tagged_key_rate(inp)[0]
    except AbortNoKey:
        return None


def _key_hex(bits) -> str:
    if not bits:
        return ""
    packed = np.packbits(np.array(bits, dtype=np.uint8), bitorder="little")
    return f"{len(bits)}:{packed.tobytes().hex()}"


def make_config(ns, delta_b, delta_p, delta, seed) -> SessionConfig:
    channel = ChannelParams(delta_b, delta_p, delta, sampling=Sampling(ns.sampling))
    return SessionConfig(n_raw=ns.n, channel=channel, mode=Mode(ns.mode),
                         test_fraction=ns.test_fraction, ec_slack=ns.ec_slack,
                         pa_slack=ns.pa_slack, seed=seed)


def run_record(cfg: SessionConfig) -> dict:
    """Execute one session and flatten it into a record."""
    t0 = time.perf_counter()
    r = run_session(cfg)
    ms = (time.perf_counter() - t0) * 1000.0
    ch = cfg.channel
    return {
        "seed": cfg.seed,
        "mode": cfg.mode.value,
        "n": cfg.n_raw,
        "delta_b": ch.delta_b,
        "delta_p": ch.delta_p,
        "tag_fraction": ch.tag_fraction,
        "test_fraction": cfg.test_fraction,
        "sampling": ch.sampling.value,
        "ec_slack": cfg.ec_slack,
        "pa_slack": cfg.pa_slack,
        "n_post_test": r.n_post_test,
        "ec_rounds": r.ec_rounds,
        "pa_rounds": r.pa_rounds,
        "key_length": r.key_length,
        "realized_rate": r.realized_rate,
        "formula_rate": formula_rate(ch.delta_b, ch.delta_p, ch.tag_fraction),
        "agreed": r.agreed,
        "abort_reason": None if r.abort_reason is None else r.abort_reason.value,
        "estimate_delta_b": None if math.isnan(r.estimates[0]) else r.estimates[0],
        "estimate_delta_p": None if math.isnan(r.estimates[1]) else r.estimates[1],
        "wall_time_ms": round(ms, 3),
        "key_hex": _key_hex(r.key_alice),
        "transcript_sha256": r.transcript.sha256(),
    }


def _execute(configs: list[SessionConfig], workers: int) -> list[dict]:
    if workers <= 1 or len(configs) <= 1:
        return [run_record(c) for c in configs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_record, configs))


def _emit(records: list[dict], fmt: str, out) -> None:
    if fmt == "jsonl":
        for rec in records:
            out.write(json.dumps(rec, sort_keys=False) + "\n")
        return
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for rec in records:
        writer.writerow({k: ("" if rec[k] is None else rec[k]) for k in CSV_COLUMNS})
    out.write(buf.getvalue())


def _resolve_seed(ns, parser) -> int:
    seed = ns.paired_seed if ns.paired_seed is not None else ns.seed
    if seed is None:
        env = os.environ.get(SEED_ENV)
        try:
            seed = int(env) if env is not None else 0
        except ValueError:
            parser.error(f"{SEED_ENV} must be an integer, got {env!r}")
    if not 0 <= seed < 2 ** 64:
        parser.error("seed must be a 64-bit unsigned value")
    return seed


def _write(records, ns) -> None:
    if ns.out:
        with open(ns.out, "w", encoding="utf-8", newline="\n") as fh:
            _emit(records, ns.format, fh)
    else:
        _emit(records, ns.format, sys.stdout)
        sys.stdout.flush()


def cmd_run(ns, parser) -> int:
    seed = _resolve_seed(ns, parser)
    configs = [make_config(ns, ns.delta_b, ns.delta_p, ns.tag_fraction, seed + i)
               for i in range(ns.runs)]
    records = _execute(configs, ns.runs)
    _write(records, ns)
    return EXIT_OK if all(r["agreed"] for r in records) else EXIT_FAIL


def cmd_sweep(ns, parser) -> int:
    seed = _resolve_seed(ns, parser)
    grid = list(itertools.product(ns.delta_b, ns.delta_p, ns.tag_fraction))
    configs = [make_config(ns, db, dp, d, seed + i)
               for db, dp, d in grid for i in range(ns.runs)]
    records = _execute(configs, ns.workers)
    _write(records, ns)
    print(summary_table(records), file=sys.stderr)
    return EXIT_OK if all(r["agreed"] for r in records) else EXIT_FAIL


def summary_table(records: list[dict]) -> str:
    """Formula against mean realized rate per grid point."""
    rows = {}
    for rec in records:
        key = (rec["delta_b"], rec["delta_p"], rec["tag_fraction"])
        rows.setdefault(key, []).append(rec)
    lines = [f"{'delta_b':>8} {'delta_p':>8} {'tag':>6} {'formula':>9} {'realized':>9} {'aborts':>6}"]
    for (db, dp, d), recs in rows.items():
        f = recs[0]["formula_rate"]
        realized = np.mean([r["realized_rate"] for r in recs])
        aborts = sum(r["abort_reason"] is not None for r in recs)
        fs = "n/a" if f is None else f"{f:.4f}"
        lines.append(f"{db:>8.4f} {dp:>8.4f} {d:>6.3f} {fs:>9} {realized:>9.4f} {aborts:>6}")
    return "\n".join(lines)


def cmd_verify(ns, parser) -> int:
    rng = np.random.default_rng(_resolve_seed(ns, parser))
    failures = 0

    bad = oracle.bicnot_mismatches()
    for (c, t), expected, got in bad:
        print(f"FAIL bicnot entry {c},{t}: oracle {expected}, algebra {got}")
    print(f"{'PASS' if not bad else 'FAIL'} bicnot truth table ({16 - len(bad)}/16)")
    failures += bool(bad)

    cases = agree = 0
    for i in range(ns.scripts):
        n = int(rng.integers(2, ns.max_pairs + 1))
        script = oracle.random_script(n, int(rng.integers(1, n)), rng)
        rep = oracle.exhaustive_protocol_check(n, script, max_pairs=ns.max_pairs)
        cases += rep.cases
        agree += rep.agreements
        if not rep.passed:
            print(f"FAIL exhaustive script {i} (n={n}): first mismatch {rep.mismatches[0][0]}")
    print(f"{'PASS' if cases == agree else 'FAIL'} exhaustive protocol ({agree}/{cases} cases)")
    failures += cases != agree

    sigma = math.sqrt(0.25 / ns.trials)
    worst = 0.0
    for _ in range(ns.channels):
        frac = oracle.tagged_phase_independence(oracle.random_pauli_channel(rng), ns.trials, rng)
        worst = max(worst, abs(frac - 0.5) / sigma)
    ok = worst <= 5.0
    print(f"{'PASS' if ok else 'FAIL'} tagged phase independence (worst {worst:.2f} sigma)")
    failures += not ok
    return EXIT_OK if failures == 0 else EXIT_FAIL


def _session_flags(p: argparse.ArgumentParser, grid: bool) -> None:
    rate = _grid(_rate) if grid else _rate
    tag = _grid(_tag) if grid else _tag
    p.add_argument("--n", type=_count(4), default=4096, help="raw pairs per session")
    p.add_argument("--delta-b", type=rate, default=[0.05] if grid else 0.05)
    p.add_argument("--delta-p", type=rate, default=[0.05] if grid else 0.05)
    p.add_argument("--tag-fraction", type=tag, default=[0.0] if grid else 0.0)
    p.add_argument("--test-fraction", type=_open_unit, default=0.5)
    p.add_argument("--mode", choices=[m.value for m in Mode], default="ent")
    p.add_argument("--sampling", choices=[s.value for s in Sampling], default="exact")
    p.add_argument("--ec-slack", type=_count(0), default=10)
    p.add_argument("--pa-slack", type=_count(0), default=10)
    p.add_argument("--seed", type=int, default=None, help=f"falls back to ${SEED_ENV}, then 0")
    p.add_argument("--paired-seed", type=int, default=None,
                   help="seed shared with a run in the other mode; overrides --seed")
    p.add_argument("--runs", type=_count(1), default=1, help="consecutive seeds to run")
    p.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
    p.add_argument("--out", default=None, help="write records here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bdsw", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _session_flags(sub.add_parser("run", help="run sessions at one parameter point"), grid=False)
    sweep = sub.add_parser("sweep", help="run a grid of parameter points")
    _session_flags(sweep, grid=True)
    sweep.add_argument("--workers", type=_count(1), default=1)
    verify = sub.add_parser("verify", help="run the brute-force oracles")
    verify.add_argument("--max-pairs", type=_count(2), default=3)
    verify.add_argument("--scripts", type=_count(1), default=20)
    verify.add_argument("--channels", type=_count(1), default=20)
    verify.add_argument("--trials", type=_count(1), default=100_000)
    verify.add_argument("--seed", type=int, default=None)
    verify.add_argument("--paired-seed", type=int, default=None, help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    if ns.command == "verify" and ns.max_pairs > oracle.MAX_PAIRS:
        parser.error(f"--max-pairs is capped at {oracle.MAX_PAIRS}")
    handler = {"run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify}[ns.command]
    return handler(ns, parser)


if __name__ == "__main__":
    sys.exit(main())
