"""Command-line surface: ``run``, ``gen``, ``fuzz`` and ``bench``.

Streams are text: a header ``n <N>`` followed by ``I u v`` / ``D u v`` / ``Q u v``
lines; ``#`` starts a comment.  ``run`` prints one ``1``/``0`` line per query.

Exit codes: 0 success, 1 mismatch or audit failure, 2 parse error, 3 contract error.
Every flag can also be set through an environment variable named
``DYNCONN_<FLAG>`` (for example ``DYNCONN_SEED`` or ``DYNCONN_BRANCHING_FACTOR``).
"""

from __future__ import annotations

import argparse
import json
import os
import random
import statistics
import sys
import time
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence, TextIO

from .connectivity import AUDIT_LEVELS, Engine, EngineConfig
from .errors import ContractError, InvariantViolation
from .graph_model import edge_key
from .oracle import OracleGraph

EXIT_OK, EXIT_MISMATCH, EXIT_PARSE, EXIT_CONTRACT = 0, 1, 2, 3
WORKLOADS = ("random", "churn", "split-heavy")
DEFAULT_MIX = (0.45, 0.25, 0.30)
FULL_AUDIT_LIMIT = 256

Op = tuple[str, int, int]


class ParseError(Exception):
    def __init__(self, line: int, msg: str) -> None:
        super().__init__(f"line {line}: {msg}")
        self.line = line


class RunFailure(Exception):
    def __init__(self, code: int, msg: str) -> None:
        super().__init__(msg)
        self.code = code


# ------------------------------------------------------------------ streams
@dataclass
class StreamFile:
    n: int
    ops: list[Op] = field(default_factory=list)
    lines: list[int] = field(default_factory=list)

    def dump(self) -> str:
        out = [f"n {self.n}"]
        out.extend(f"{c} {u} {v}" for c, u, v in self.ops)
        return "\n".join(out) + "\n"


def parse_stream(text: str | Iterable[str]) -> StreamFile:
    lines = text.splitlines() if isinstance(text, str) else list(text)
    stream: StreamFile | None = None
    for no, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if stream is None:
            if len(parts) != 2 or parts[0] != "n":
                raise ParseError(no, "expected header 'n <N>'")
            try:
                n = int(parts[1])
            except ValueError:
                raise ParseError(no, f"bad vertex count {parts[1]!r}") from None
            if n < 1:
                raise ParseError(no, "vertex count must be positive")
            stream = StreamFile(n)
            continue
        if len(parts) != 3 or parts[0] not in ("I", "D", "Q"):
            raise ParseError(no, f"expected 'I|D|Q u v', got {line!r}")
        try:
            u, v = int(parts[1]), int(parts[2])
        except ValueError:
            raise ParseError(no, f"bad vertex id in {line!r}") from None
        stream.ops.append((parts[0], u, v))
        stream.lines.append(no)
    if stream is None:
        raise ParseError(len(lines) + 1, "missing header 'n <N>'")
    return stream


# ---------------------------------------------------------------- workloads
def workload_ops(n: int, ops: int, rng: random.Random, workload: str = "random",
                 mix: Sequence[float] = DEFAULT_MIX) -> Iterator[Op]:
    """Random valid operations: deletes name live edges, inserts name absent ones."""
    if workload not in WORKLOADS:
        raise ContractError(f"unknown workload {workload!r}")
    check_mix(mix)
    live: list[tuple[int, int]] = []
    where: dict[tuple[int, int], int] = {}
    max_edges = n * (n - 1) // 2
    target = {"random": None, "churn": max(1, n), "split-heavy": max(1, n // 4)}[workload]

    def add(k: tuple[int, int]) -> None:
        where[k] = len(live)
        live.append(k)

    def drop(j: int) -> tuple[int, int]:
        k = live[j]
        last = live.pop()
        if last != k:
            live[j] = last
            where[last] = j
        del where[k]
        return k

    for _ in range(ops):
        r = rng.random()
        if n < 2:
            yield ("Q", 0, 0)
            continue
        if target is None:
            kind = "I" if r < mix[0] else "D" if r < mix[0] + mix[1] else "Q"
        else:
            q = mix[2]
            if r < q:
                kind = "Q"
            else:
                kind = "I" if len(live) < target else "D"
                if rng.random() < 0.1:
                    kind = "D" if kind == "I" else "I"
        if kind == "D" and not live:
            kind = "I"
        if kind == "I" and len(live) >= max_edges:
            kind = "D"
        if kind == "I":
            for _ in range(16):
                u, v = rng.sample(range(n), 2)
                k = edge_key(u, v)
                if k not in where:
                    add(k)
                    yield ("I", u, v)
                    break
            else:
                yield ("Q", *rng.sample(range(n), 2))
        elif kind == "D":
            j = len(live) - 1 - min(len(live) - 1, int(rng.expovariate(0.5))) if workload == "split-heavy" \
                else rng.randrange(len(live))
            yield ("D", *drop(j))
        else:
            yield ("Q", rng.randrange(n), rng.randrange(n))


def check_mix(mix: Sequence[float]) -> None:
    if len(mix) != 3 or any(x < 0 for x in mix) or abs(sum(mix) - 1.0) > 1e-9:
        raise ContractError(f"mix must be three non-negative fractions summing to 1, got {tuple(mix)}")


def cmd_gen(n: int, ops: int, mix: Sequence[float] = DEFAULT_MIX, seed: int = 0,
            workload: str = "random") -> StreamFile:
    rng = random.Random(seed)
    return StreamFile(n, list(workload_ops(n, ops, rng, workload, mix)))


# --------------------------------------------------------------------- run
def _percentiles(samples: list[float]) -> dict[str, float]:
    if not samples:
        return {}
    if len(samples) == 1:
        return {"p50": samples[0], "p90": samples[0], "p99": samples[0]}
    q = statistics.quantiles(samples, n=100, method="inclusive")
    return {"p50": q[49], "p90": q[89], "p99": q[98]}


def cmd_run(stream: StreamFile, seed: int = 0, config: EngineConfig | None = None,
            timing: bool = False) -> tuple[list[str], dict]:
    """Replay ``stream``; returns the query answers and a report.

    The report holds only deterministic fields unless ``timing`` is set.
    """
    config = config or EngineConfig()
    level = config.audit
    if level == "full" and stream.n > FULL_AUDIT_LIMIT:
        level = "cheap"
    eng = Engine(stream.n, seed, EngineConfig(**{**config.__dict__, "audit": "off"}))
    answers: list[str] = []
    counts = {"I": 0, "D": 0, "Q": 0}
    times: dict[str, list[float]] = {"I": [], "D": [], "Q": []}
    audits = 0
    for (c, u, v), line in zip(stream.ops, stream.lines or range(2, len(stream.ops) + 2)):
        t0 = time.perf_counter()
        try:
            if c == "I":
                eng.insert(u, v)
            elif c == "D":
                eng.delete(u, v)
            else:
                answers.append("1" if eng.connected(u, v) else "0")
        except ContractError as exc:
            raise RunFailure(EXIT_CONTRACT, f"line {line}: {exc}") from exc
        if timing:
            times[c].append(time.perf_counter() - t0)
        counts[c] += 1
        if level != "off" and c != "Q":
            rep = eng.validate(level)
            audits += 1
            if not rep:
                raise RunFailure(EXIT_MISMATCH, f"line {line}: audit failed: {rep.first}")
    report = {
        "seed": seed,
        "n": stream.n,
        "ops": counts,
        "audit": {"level": level, "runs": audits, "ok": True},
        "events": dict(sorted(eng.event_totals().items())),
        "config": {"branching_factor": config.branching_factor, "c1": config.c1, "c2": config.c2},
    }
    if timing:
        report["timing"] = {k: _percentiles(v) for k, v in times.items()}
    return answers, report


# -------------------------------------------------------------------- fuzz
def _sanitize(n: int, ops: Iterable[Op]) -> list[Op]:
    live: set[tuple[int, int]] = set()
    out = []
    for c, u, v in ops:
        if not (0 <= u < n and 0 <= v < n):
            continue
        k = edge_key(u, v)
        if c == "I":
            if u == v or k in live:
                continue
            live.add(k)
        elif c == "D":
            if k not in live:
                continue
            live.discard(k)
        out.append((c, u, v))
    return out


def replay_against_oracle(n: int, ops: Sequence[Op], seed: int, config: EngineConfig) -> str | None:
    """Return a description of the first disagreement (or audit failure), or None."""
    eng = Engine(n, seed, config)
    oracle = OracleGraph(n)
    try:
        for k, (c, u, v) in enumerate(ops):
            if c == "I":
                eng.insert(u, v)
                oracle.add_edge(u, v)
            elif c == "D":
                eng.delete(u, v)
                oracle.remove_edge(u, v)
            else:
                got, want = eng.connected(u, v), oracle.o_connected(u, v)
                if got != want:
                    return f"op {k}: Q {u} {v} answered {int(got)}, expected {int(want)}"
    except InvariantViolation as exc:
        return f"op {k}: audit failed: {exc}"
    return None


def minimize(n: int, ops: list[Op], seed: int, config: EngineConfig) -> list[Op]:
    """Greedy chunk removal keeping the disagreement alive."""
    cur = list(ops)
    chunk = max(1, len(cur) // 2)
    while chunk >= 1:
        j = 0
        while j < len(cur):
            cand = _sanitize(n, cur[:j] + cur[j + chunk:])
            if len(cand) < len(cur) and replay_against_oracle(n, cand, seed, config) is not None:
                cur = cand
            else:
                j += chunk
        if chunk == 1:
            break
        chunk //= 2
    return cur


def cmd_fuzz(n_max: int, rounds: int, seed: int = 0, ops: int = 2000, config: EngineConfig | None = None,
             mix: Sequence[float] = DEFAULT_MIX, workload: str = "random") -> tuple[dict, StreamFile | None]:
    """Differential rounds against the oracle; returns a report and a minimized counterexample."""
    config = config or EngineConfig()
    check_mix(mix)
    total_q = 0
    for r in range(rounds):
        rng = random.Random(f"fuzz:{seed}:{r}")
        n = rng.randint(2, max(2, n_max))
        script = list(workload_ops(n, ops, rng, workload, mix))
        total_q += sum(1 for c, _, _ in script if c == "Q")
        cfg = config
        if config.audit == "full" and n > FULL_AUDIT_LIMIT:
            cfg = EngineConfig(**{**config.__dict__, "audit": "cheap"})
        bad = replay_against_oracle(n, script, seed + r, cfg)
        if bad is not None:
            small = minimize(n, script, seed + r, cfg)
            report = {"seed": seed, "rounds": r + 1, "queries": total_q, "mismatch": bad,
                      "failing_round": r, "engine_seed": seed + r, "counterexample_ops": len(small)}
            return report, StreamFile(n, small)
    return {"seed": seed, "rounds": rounds, "queries": total_q, "mismatch": None}, None


# ------------------------------------------------------------------- bench
def cmd_bench(sizes: Sequence[int], ops: int = 20000, workload: str = "random", seed: int = 0,
              config: EngineConfig | None = None) -> list[dict]:
    """One row per size: per-op update and query time plus amortization counters."""
    config = config or EngineConfig()
    rows = []
    for n in sizes:
        rng = random.Random(f"bench:{seed}:{n}")
        script = list(workload_ops(n, ops, rng, workload))
        eng = Engine(n, seed, config)
        t_upd = t_q = 0.0
        n_upd = n_q = 0
        clock = time.perf_counter
        for c, u, v in script:
            t0 = clock()
            if c == "I":
                eng.insert(u, v)
            elif c == "D":
                eng.delete(u, v)
            else:
                eng.connected(u, v)
                t_q += clock() - t0
                n_q += 1
                continue
            t_upd += clock() - t0
            n_upd += 1
        ev = eng.event_totals()
        rows.append({
            "n": n,
            "updates": n_upd,
            "queries": n_q,
            "update_us": 1e6 * t_upd / max(1, n_upd),
            "query_us": 1e6 * t_q / max(1, n_q),
            "promotions": ev.get("promotions", 0),
            "upgrades": ev.get("upgrades", 0),
            "coverings": ev.get("sc_covered", 0),
            "max_edge_promotions": ev.get("max_edge_promotions", 0),
            "max_edge_upgrades": ev.get("max_edge_upgrades", 0),
            "d_max": eng.d_max,
        })
    return rows


BENCH_COLUMNS = ("n", "updates", "queries", "update_us", "query_us", "promotions", "upgrades", "coverings",
                 "max_edge_promotions", "max_edge_upgrades", "d_max")


def format_bench(rows: list[dict]) -> str:
    out = [",".join(BENCH_COLUMNS)]
    for r in rows:
        out.append(",".join(f"{r[c]:.3f}" if isinstance(r[c], float) else str(r[c]) for c in BENCH_COLUMNS))
    return "\n".join(out) + "\n"


# ------------------------------------------------------------------- argv
def _env(name: str, default):
    return os.environ.get("DYNCONN_" + name.upper().replace("-", "_"), default)


def _engine_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=int(_env("seed", 0)))
    p.add_argument("--audit", choices=AUDIT_LEVELS, default=_env("audit", "off"))
    p.add_argument("--branching-factor", type=int, default=int(_env("branching_factor", 8)))
    p.add_argument("--c1", type=int, default=int(_env("c1", 4)))
    p.add_argument("--c2", type=int, default=int(_env("c2", 8)))


def _config(a: argparse.Namespace) -> EngineConfig:
    return EngineConfig(branching_factor=a.branching_factor, c1=a.c1, c2=a.c2, audit=a.audit,
                        fault=getattr(a, "fault", None))


def _mix(text: str) -> tuple[float, float, float]:
    try:
        vals = tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad mix {text!r}") from None
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("mix needs three comma-separated fractions")
    return vals  # type: ignore[return-value]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dynconn", description="Dynamic connectivity engine tools")
    sub = ap.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="replay a stream and answer its queries")
    r.add_argument("stream", help="stream file, or - for standard input")
    r.add_argument("--report", help="write the JSON report here (default: standard error)")
    r.add_argument("--timing", action="store_true", help="include wall-clock percentiles in the report")
    _engine_args(r)

    g = sub.add_parser("gen", help="write a random valid stream")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--ops", type=int, required=True)
    g.add_argument("--mix", type=_mix, default=DEFAULT_MIX)
    g.add_argument("--seed", type=int, default=int(_env("seed", 0)))
    g.add_argument("--workload", choices=WORKLOADS, default=_env("workload", "random"))
    g.add_argument("--out", help="output file (default: standard output)")

    f = sub.add_parser("fuzz", help="differential test against the brute-force oracle")
    f.add_argument("--n-max", type=int, default=64)
    f.add_argument("--rounds", type=int, default=100)
    f.add_argument("--ops", type=int, default=2000)
    f.add_argument("--mix", type=_mix, default=DEFAULT_MIX)
    f.add_argument("--workload", choices=WORKLOADS, default=_env("workload", "random"))
    f.add_argument("--out", help="where to write a counterexample (default: standard output)")
    f.add_argument("--fault", choices=("flip-query",), default=_env("fault", None), help=argparse.SUPPRESS)
    _engine_args(f)

    b = sub.add_parser("bench", help="time random workloads at several sizes (CSV)")
    b.add_argument("--sizes", default="4096,262144")
    b.add_argument("--ops", type=int, default=20000)
    b.add_argument("--workload", choices=WORKLOADS, default=_env("workload", "random"))
    _engine_args(b)
    return ap


def _read(path: str, stdin: TextIO) -> str:
    if path == "-":
        return stdin.read()
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _write(path: str | None, text: str, stdout: TextIO) -> None:
    if path is None:
        stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def main(argv: Sequence[str] | None = None, stdin: TextIO | None = None, stdout: TextIO | None = None,
         stderr: TextIO | None = None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    a = build_parser().parse_args(argv)
    try:
        if a.cmd == "run":
            try:
                stream = parse_stream(_read(a.stream, stdin))
            except ParseError as exc:
                stderr.write(f"parse error: {exc}\n")
                return EXIT_PARSE
            answers, report = cmd_run(stream, a.seed, _config(a), timing=a.timing)
            stdout.write("".join(x + "\n" for x in answers))
            text = json.dumps(report, sort_keys=True, indent=2) + "\n"
            if a.report:
                _write(a.report, text, stdout)
            else:
                stderr.write(text)
            return EXIT_OK
        if a.cmd == "gen":
            _write(a.out, cmd_gen(a.n, a.ops, a.mix, a.seed, a.workload).dump(), stdout)
            return EXIT_OK
        if a.cmd == "fuzz":
            report, bad = cmd_fuzz(a.n_max, a.rounds, a.seed, a.ops, _config(a), a.mix, a.workload)
            stderr.write(json.dumps(report, sort_keys=True) + "\n")
            if bad is not None:
                _write(a.out, bad.dump(), stdout)
                return EXIT_MISMATCH
            return EXIT_OK
        if a.cmd == "bench":
            sizes = [int(x) for x in a.sizes.split(",") if x]
            stdout.write(format_bench(cmd_bench(sizes, a.ops, a.workload, a.seed, _config(a))))
            return EXIT_OK
    except RunFailure as exc:
        stderr.write(f"{exc}\n")
        return exc.code
    except ContractError as exc:
        stderr.write(f"error: {exc}\n")
        return EXIT_CONTRACT
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
