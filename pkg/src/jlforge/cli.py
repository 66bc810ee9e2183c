"""Command-line front end: ``jlforge <command> [flags]``.

Every command writes records as CSV (default) or JSON to stdout or
``--output``.  Errors are reported on stderr as a JSON object
``{"error": ..., "message": ..., "exit_code": ...}``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import combinatorics as comb
from .codec import C_CODE, codec_decode, codec_encode, length_bound
from .core import EmbeddingSpec, InvalidArgument, Kind, ResourceLimit
from .estimator import allpairs_experiment, hard_tail, min_m_for, scaling_sweep
from .instances import family_is_disjoint, hard_family
from .transforms import embed

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_RESOURCE, EXIT_IO = 0, 1, 2, 3, 4

TAIL_FIELDS = ("transform", "epsilon", "m", "k", "trials", "failures", "p_hat", "ci_low", "ci_high", "seed", "wall_time_s")
_INT_FIELDS = {"m", "k", "trials", "failures", "seed"}
_STR_FIELDS = {"transform"}


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    args: argparse.Namespace
    output: str | None
    format: str


def fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def emit_records(rows, fmt: str = "csv", path=None, fields=None) -> str:
    """Render rows (dicts) as CSV or JSON and write them to ``path`` or return the text.

    ``fields`` fixes the column order; it defaults to the tail schema.
    """
    rows = [dict(r) for r in rows]
    fields = tuple(fields or (rows[0] if rows else TAIL_FIELDS))
    if any(set(r) != set(fields) for r in rows):
        raise InvalidArgument("rows must share one set of keys")
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([fmt_value(r[f]) for f in fields])
        text = buf.getvalue()
    elif fmt == "json":
        # json writes floats with repr, which round-trips exactly
        text = json.dumps([{f: _plain(r[f]) for f in fields} for r in rows], indent=1) + "\n"
    else:
        raise InvalidArgument(f"unknown format {fmt!r}")
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    return v


def _parse_cell(name: str, cell: str):
    if name in _STR_FIELDS:
        return cell
    if name in _INT_FIELDS:
        return int(cell)
    if cell in ("true", "false"):
        return cell == "true"
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return float(cell)
    except ValueError:
        return cell


def parse_records(text: str, fmt: str = "csv") -> list[dict]:
    """Inverse of emit_records."""
    if fmt == "json":
        return json.loads(text)
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        return []
    return [{name: _parse_cell(name, cell) for name, cell in zip(header, line)} for line in reader]


def tail_record(transform, est, k: int, seed: int, wall_time: float = 0.0) -> dict:
    return {
        "transform": Kind(transform).value, "epsilon": float(est.epsilon), "m": est.m, "k": k,
        "trials": est.trials, "failures": est.failures, "p_hat": est.p_hat, "ci_low": est.ci_low,
        "ci_high": est.ci_high, "seed": seed, "wall_time_s": float(wall_time),
    }


def sweep_record(row) -> dict:
    return {
        "transform": row.transform, "epsilon": float(row.epsilon), "m": row.m, "k": row.k_used,
        "trials": row.trials, "failures": row.failures, "p_hat": row.p_hat, "ci_low": row.ci_low,
        "ci_high": row.ci_high, "seed": row.seed, "wall_time_s": float(row.wall_time),
    }


def read_vector(path: str) -> np.ndarray:
    with open(path, encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    try:
        return np.array([float(ln) for ln in lines], dtype=np.float64)
    except ValueError as exc:
        raise InvalidArgument(f"bad vector file {path}: {exc}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma list of integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma list of numbers, got {text!r}") from None


def _positive(kind):
    def conv(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a {kind.__name__}, got {text!r}") from None
        if v <= 0:
            raise argparse.ArgumentTypeError(f"expected a positive value, got {text!r}")
        return v

    return conv


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text!r}")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    pos_int, pos_float = _positive(int), _positive(float)
    common = _Parser(add_help=False)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--output", default=None, help="write records here instead of stdout")
    transform = dict(choices=[k.value for k in Kind], default=Kind.TOEPLITZ.value)

    p = _Parser(prog="jlforge", description="Structured JL embeddings and their tails.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("embed", parents=[common], help="embed one vector")
    c.add_argument("--n", type=pos_int, required=True)
    c.add_argument("--m", type=pos_int, required=True)
    c.add_argument("--transform", **transform)
    c.add_argument("--seed", type=_nonneg_int, required=True)
    c.add_argument("--input", required=True, help="vector file, one value per line")

    c = sub.add_parser("tail", parents=[common], help="tail probability of the hard vector")
    c.add_argument("--eps", type=pos_float, required=True)
    c.add_argument("--m", type=pos_int, required=True)
    c.add_argument("--k", type=pos_int, required=True)
    c.add_argument("--trials", type=pos_int, required=True)
    c.add_argument("--seed", type=_nonneg_int, required=True)
    c.add_argument("--transform", **transform)
    c.add_argument("--sign-seed", type=_nonneg_int, default=0)
    c.add_argument("--timing", action="store_true", help="record wall time (output no longer reproducible)")

    c = sub.add_parser("sweep", parents=[common], help="tails over a grid of m")
    c.add_argument("--eps", type=pos_float, required=True)
    c.add_argument("--m-grid", type=_int_list, required=True)
    c.add_argument("--trials", type=pos_int, required=True)
    c.add_argument("--seed", type=_nonneg_int, required=True)
    c.add_argument("--transform", **transform)
    c.add_argument("--c0-grid", type=_float_list, default=[1.0])
    c.add_argument("--timing", action="store_true")

    c = sub.add_parser("min-m", parents=[common], help="smallest m meeting a failure budget")
    c.add_argument("--eps", type=pos_float, required=True)
    c.add_argument("--delta", type=pos_float, required=True)
    c.add_argument("--transform", **transform)
    c.add_argument("--trials", type=pos_int, default=10_000)
    c.add_argument("--seed", type=_nonneg_int, default=0)
    c.add_argument("--m-max", type=pos_int, default=4096)

    c = sub.add_parser("nvec", parents=[common], help="all-pairs experiment on shifted copies")
    c.add_argument("--n", type=pos_int, required=True)
    c.add_argument("--m", type=pos_int, required=True)
    c.add_argument("--k", type=pos_int, required=True)
    c.add_argument("--N", type=pos_int, required=True)
    c.add_argument("--C", type=pos_float, required=True)
    c.add_argument("--eps", type=pos_float, required=True)
    c.add_argument("--trials", type=pos_int, required=True)
    c.add_argument("--seed", type=_nonneg_int, required=True)
    c.add_argument("--transform", **transform)

    for name, text in (("gamma", "count even tuples exactly"), ("codec-check", "round-trip the cycle codec")):
        c = sub.add_parser(name, parents=[common], help=text)
        c.add_argument("--m", type=pos_int, required=True)
        c.add_argument("--s", type=pos_int, required=True)
        c.add_argument("--k", type=_nonneg_int, required=True)
        c.add_argument("--budget", type=pos_int, default=comb.DEFAULT_BUDGET)

    c = sub.add_parser("oracle-suite", parents=[common], help="run every exact identity on the default grid")
    c.add_argument("--budget", type=pos_int, default=comb.DEFAULT_BUDGET)
    return p


def _cmd_embed(a):
    x = read_vector(a.input)
    if x.size != a.n:
        raise InvalidArgument(f"vector file has {x.size} values, expected n={a.n}")
    y = embed(EmbeddingSpec(a.n, a.m, Kind(a.transform), a.seed), x)
    return [{"index": i + 1, "value": float(v)} for i, v in enumerate(y)], ("index", "value"), EXIT_OK


def _cmd_tail(a):
    started = time.perf_counter()
    est = hard_tail(a.k, a.m, a.eps, a.trials, a.seed, Kind(a.transform), a.sign_seed)
    wall = time.perf_counter() - started if a.timing else 0.0
    return [tail_record(a.transform, est, a.k, a.seed, wall)], TAIL_FIELDS, EXIT_OK


def _cmd_sweep(a):
    rows = scaling_sweep(Kind(a.transform), a.eps, a.m_grid, a.trials, a.seed, a.c0_grid, timing=a.timing)
    return [sweep_record(r) for r in rows if not r.skipped], TAIL_FIELDS, EXIT_OK


def _cmd_min_m(a):
    m = min_m_for(a.eps, a.delta, Kind(a.transform), a.trials, a.seed, a.m_max)
    rec = {"transform": a.transform, "epsilon": a.eps, "delta": a.delta, "m": "" if m is None else m,
           "found": m is not None, "m_max": a.m_max, "trials": a.trials, "seed": a.seed}
    return [rec], tuple(rec), EXIT_OK


def _cmd_nvec(a):
    fam = hard_family(a.k, a.n, a.m, a.C, a.N)
    disjoint = family_is_disjoint(fam)
    res = allpairs_experiment(fam, a.eps, a.trials, a.seed, Kind(a.transform))
    rec = {"transform": a.transform, "epsilon": a.eps, "n": a.n, "m": a.m, "k": a.k, "N": a.N, "C": a.C,
           "spacing": fam.spacing, "disjoint": disjoint, "trials": res.trials, "successes": res.successes,
           "success_fraction": res.success_fraction, "p_bar": res.p_bar, "predicted": res.predicted,
           "stderr": res.stderr, "seed": a.seed}
    return [rec], tuple(rec), EXIT_OK


def _cmd_gamma(a):
    p = comb.GammaParams(a.m, a.s, a.k)
    count = comb.enumerate_gamma(p, a.budget)
    rec = {"m": a.m, "s": a.s, "k": a.k, "count": count,
           "moment": str(Fraction(count, (a.s * a.m) ** a.k))}
    return [rec], tuple(rec), EXIT_OK


def codec_check(m: int, s: int, k: int, budget: int = comb.DEFAULT_BUDGET) -> dict:
    """Round-trip, injectivity and length bound over every tuple of 2k triples."""
    seen = set()
    tuples = round_trip = 0
    longest = 0
    for S in comb.iter_gamma(comb.GammaParams(m, s, 2 * k), budget):
        code = codec_encode(S, m, s, k)
        tuples += 1
        round_trip += codec_decode(code) == S
        seen.add(code.bits)
        longest = max(longest, len(code))
    bound = length_bound(m, s, k)
    ok = round_trip == tuples and len(seen) == tuples and longest <= bound
    return {"m": m, "s": s, "k": k, "tuples": tuples, "round_trip": round_trip, "distinct": len(seen),
            "max_length": longest, "bound": bound, "c_code": C_CODE, "ok": ok}


def _cmd_codec_check(a):
    rec = codec_check(a.m, a.s, a.k, a.budget)
    return [rec], tuple(rec), EXIT_OK if rec["ok"] else EXIT_FAILED


def oracle_point(p: comb.GammaParams, budget: int) -> dict:
    """All exact identities at one grid point; checks that exceed the budget are left blank."""
    rec = {"m": p.m, "s": p.s, "k": p.k, "gamma": "", "moment_identity": "", "half_size": "",
           "signatures": "", "sum_b_squared": "", "chain": "", "f_bound": "", "status": "ok"}
    try:
        gamma = comb.enumerate_gamma(p, budget)
    except ResourceLimit:
        rec["status"] = "skipped"
        return rec
    rec["gamma"] = gamma
    try:
        rec["moment_identity"] = comb.exact_moment(p, budget) * (p.s * p.m) ** p.k == gamma
    except ResourceLimit:
        pass
    if p.k % 2 == 0:
        try:
            rep = comb.cauchy_schwarz_check(p, budget)
        except ResourceLimit:
            pass
        else:
            rec.update(half_size=rep.half_size, signatures=rep.signatures, sum_b_squared=rep.sum_b_squared,
                       chain=rep.chain_holds, f_bound=rep.f_bound_holds)
    if any(rec[f] is False for f in ("moment_identity", "chain", "f_bound")):
        rec["status"] = "violated"
    return rec


def _cmd_oracle_suite(a):
    rows = [oracle_point(p, a.budget) for p in comb.default_grid()]
    status = EXIT_FAILED if any(r["status"] == "violated" for r in rows) else EXIT_OK
    return rows, tuple(rows[0]), status


COMMANDS = {
    "embed": _cmd_embed, "tail": _cmd_tail, "sweep": _cmd_sweep, "min-m": _cmd_min_m, "nvec": _cmd_nvec,
    "gamma": _cmd_gamma, "codec-check": _cmd_codec_check, "oracle-suite": _cmd_oracle_suite,
}


def _error(kind: str, message: str, code: int, stream) -> int:
    stream.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def parse_config(argv) -> RunConfig:
    args = build_parser().parse_args(argv)
    return RunConfig(args.command, args, args.output, args.format)


def run(config: RunConfig, stdout=None) -> int:
    stdout = stdout or sys.stdout
    rows, fields, status = COMMANDS[config.command](config.args)
    text = emit_records(rows, config.format, config.output, fields)
    if config.output is None:
        stdout.write(text)
    return status


def main(argv=None, stdout=None, stderr=None) -> int:
    stderr = stderr or sys.stderr
    try:
        return run(parse_config(argv), stdout)
    except UsageError as exc:
        return _error("usage", str(exc), EXIT_USAGE, stderr)
    except InvalidArgument as exc:
        return _error("invalid-argument", str(exc), EXIT_USAGE, stderr)
    except ResourceLimit as exc:
        return _error("resource-limit", str(exc), EXIT_RESOURCE, stderr)
    except OSError as exc:
        return _error("io", str(exc), EXIT_IO, stderr)


if __name__ == "__main__":
    sys.exit(main())
