"""Command-line surface: check, run, and audit transcripts.

Exit codes are stable API: 0 success, 1 I/O, 2 language/validation
(parse errors, rule violations, manifest problems), 3 runtime (bad
dataset bytes, index faults), 4 audit divergence.

`check` is purely static. `run` binds dataset files to the declared
names, replays, and writes every final matrix in the dataset wire
format plus a diff-friendly text summary (and optionally the trace,
one `opcode rows cols taint` line per record). `audit` generates
random datasets across ten content regimens - NA fractions 10..50%
and zero fractions 50..90% - and demands that every run of the same
transcript at the same dims produces the identical trace and the
identical operation counts.
"""

from __future__ import annotations

import argparse
import math
import random
import struct
import sys
from dataclasses import dataclass
from pathlib import Path

from .dataio import DataError, encode
from .evaluator import EvalError, execute
from .fixedpoint import F_NA, to_double
from .parser import ParseError, parse
from .validate import ValidationError, validate

EXIT_OK = 0
EXIT_IO = 1
EXIT_LANG = 2
EXIT_RUNTIME = 3
EXIT_DIVERGENCE = 4

_NA_DOUBLE = to_double(F_NA)

NA_FRACTIONS = (0.10, 0.20, 0.30, 0.40, 0.50)
ZERO_FRACTIONS = (0.50, 0.60, 0.70, 0.80, 0.90)


@dataclass(frozen=True)
class RunManifest:
    """Everything one replay needs; data binds by declared name."""

    dot_path: str
    data: tuple[tuple[str, str], ...]
    out_dir: str
    seed: int = 0
    trace_path: str | None = None


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load_program(path: str):
    """Returns (program, None) or (None, exit code) with stderr output."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        return None, _fail(EXIT_IO, f"cannot read {path}: {e}")
    try:
        return parse(text), None
    except ParseError as e:
        return None, _fail(EXIT_LANG, str(e))


def fmt_cell(v: float) -> str:
    """At most 8 decimal places; NA/NaN/Inf spelled out."""
    if math.isnan(v):
        low = struct.unpack("<II", struct.pack("<d", v))[0]
        return "NA" if low == 1954 else "NaN"
    if math.isinf(v):
        return "Inf" if v > 0 else "-Inf"
    text = f"{v:.8f}".rstrip("0").rstrip(".")
    return "0" if text in ("-0", "") else text


def _taint_name(t) -> str:
    return t.name.capitalize()


def cmd_check(dot_path: str) -> int:
    program, code = _load_program(dot_path)
    if program is None:
        return code
    try:
        validate(program, program.declared_datasets)
    except ValidationError as e:
        return _fail(EXIT_LANG, str(e))
    n = len(program.instrs)
    print(f"ok: {n} instructions, "
          f"{len(program.declared_datasets)} datasets")
    return EXIT_OK


def cmd_run(manifest: RunManifest) -> int:
    names = [n for n, _p in manifest.data]
    if len(set(names)) != len(names):
        return _fail(EXIT_LANG, "duplicate dataset binding")
    program, code = _load_program(manifest.dot_path)
    if program is None:
        return code
    declared = program.declared_datasets
    missing = sorted(set(declared) - set(names))
    if missing:
        return _fail(EXIT_LANG, f"dataset not bound: {', '.join(missing)}")
    extra = sorted(set(names) - set(declared))
    if extra:
        return _fail(EXIT_LANG,
                     f"dataset not declared in transcript: "
                     f"{', '.join(extra)}")
    try:
        tp = validate(program, declared)
    except ValidationError as e:
        return _fail(EXIT_LANG, str(e))

    blobs = {}
    for name, path in manifest.data:
        try:
            blobs[name] = Path(path).read_bytes()
        except OSError as e:
            return _fail(EXIT_IO, f"cannot read {path}: {e}")

    try:
        state = execute(tp, blobs, manifest.seed)
    except DataError as e:
        return _fail(EXIT_RUNTIME, str(e))
    except EvalError as e:
        return _fail(EXIT_RUNTIME, str(e))

    out = Path(manifest.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        lines = []
        for mid in sorted(state.matrices):
            b = state.matrices[mid]
            values = [to_double(c) for c in b.cells]
            (out / f"m{mid}.bin").write_bytes(
                encode(f"m{mid}", b.rows, b.cols, values))
            lines.append(f"${mid} {b.rows}x{b.cols} {_taint_name(b.taint)}")
            for r in range(b.rows):
                row = values[r * b.cols:(r + 1) * b.cols]
                lines.append(" ".join(fmt_cell(v) for v in row))
        for rid in sorted(state.registers):
            v, taint = state.registers[rid]
            lines.append(f"%{rid} = {fmt_cell(to_double(v))} "
                         f"{_taint_name(taint)}")
        (out / "summary.txt").write_text("\n".join(lines) + "\n",
                                         encoding="utf-8")
        if manifest.trace_path is not None:
            trace_lines = [
                f"{r.opcode} {r.shape[0]} {r.shape[1]} {_taint_name(r.taint)}"
                for r in state.trace]
            Path(manifest.trace_path).write_text(
                "\n".join(trace_lines) + "\n", encoding="utf-8")
    except OSError as e:
        return _fail(EXIT_IO, f"cannot write results: {e}")
    print(f"ok: {len(state.matrices)} matrices, "
          f"{len(state.registers)} registers, "
          f"{len(state.trace)} trace records")
    return EXIT_OK


def _regimen_blob(rng: random.Random, name: str, rows: int, cols: int,
                  kind: str, fraction: float) -> bytes:
    special = _NA_DOUBLE if kind == "na" else 0.0
    cells = [special if rng.random() < fraction else rng.uniform(-100.0, 100.0)
             for _ in range(rows * cols)]
    return encode(name, rows, cols, cells)


def cmd_audit(dot_path: str, rows: int, cols: int, trials: int,
              seed: int = 0) -> int:
    program, code = _load_program(dot_path)
    if program is None:
        return code
    names = sorted(program.declared_datasets)
    dims = {name: (rows, cols) for name in names}
    try:
        tp = validate(program, dims)
    except ValidationError as e:
        return _fail(EXIT_LANG, str(e))

    regimens = [("na", f) for f in NA_FRACTIONS] \
        + [("zero", f) for f in ZERO_FRACTIONS]
    rng = random.Random(seed)
    baseline = None
    base_oc = None
    runs = 0
    for kind, fraction in regimens:
        for trial in range(trials):
            blobs = {name: _regimen_blob(rng, name, rows, cols,
                                         kind, fraction)
                     for name in names}
            try:
                state = execute(tp, blobs, seed)
            except (DataError, EvalError) as e:
                return _fail(EXIT_RUNTIME, str(e))
            runs += 1
            label = f"regimen {kind} {int(fraction * 100)}%, trial {trial}"
            if baseline is None:
                baseline = state.trace
                base_oc = dict(state.oc)
                continue
            if state.trace != baseline:
                n = min(len(state.trace), len(baseline))
                ix = next((i for i in range(n)
                           if state.trace[i] != baseline[i]), n)
                a = baseline[ix] if ix < len(baseline) else "<end>"
                b = state.trace[ix] if ix < len(state.trace) else "<end>"
                return _fail(EXIT_DIVERGENCE,
                             f"trace divergence at record {ix} "
                             f"({label}): {a} vs {b}")
            if dict(state.oc) != base_oc:
                keys = set(base_oc) | set(state.oc)
                bad = sorted(k for k in keys
                             if base_oc.get(k, 0) != state.oc.get(k, 0))
                return _fail(EXIT_DIVERGENCE,
                             f"operation count divergence ({label}): "
                             f"{', '.join(bad)}")
    n_records = len(baseline) if baseline is not None else 0
    print(f"audit ok: {runs} runs, {n_records} trace records each")
    return EXIT_OK


def _build_argparser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="otvm",
        description="Check, run, and audit data-oblivious transcripts.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p_check = sub.add_parser("check", help="parse and validate a transcript")
    p_check.add_argument("dot", help="transcript file")

    p_run = sub.add_parser("run", help="replay a transcript on datasets")
    p_run.add_argument("dot", help="transcript file")
    p_run.add_argument("--data", action="append", default=[],
                       metavar="NAME=PATH", help="bind a dataset file")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--trace", default=None, metavar="PATH",
                       help="also write the observable trace")

    p_audit = sub.add_parser(
        "audit", help="probe trace independence across data regimens")
    p_audit.add_argument("dot", help="transcript file")
    p_audit.add_argument("--rows", type=int, required=True)
    p_audit.add_argument("--cols", type=int, required=True)
    p_audit.add_argument("--trials", type=int, required=True)
    p_audit.add_argument("--seed", type=int, default=0)
    return ap


def main(argv=None) -> int:
    args = _build_argparser().parse_args(argv)
    if args.cmd == "check":
        return cmd_check(args.dot)
    if args.cmd == "run":
        data = []
        for item in args.data:
            name, sep, path = item.partition("=")
            if not sep or not name or not path:
                return _fail(EXIT_LANG,
                             f"--data needs NAME=PATH, got {item!r}")
            data.append((name, path))
        manifest = RunManifest(args.dot, tuple(data), args.out,
                               args.seed, args.trace)
        return cmd_run(manifest)
    return cmd_audit(args.dot, args.rows, args.cols, args.trials, args.seed)


if __name__ == "__main__":
    sys.exit(main())
