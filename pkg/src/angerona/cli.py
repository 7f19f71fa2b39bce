"""Command-line entry point.

Exit codes: 0 success, 1 rejection (program not acyclic, a denied query,
engine refusal), 2 bad input.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from fractions import Fraction
from pathlib import Path

from . import bench as B
from .bn import compile as compile_bn
from .core import desugar
from .enforcement import PDP, AtkModel, Journal, parse_db, parse_policy, run_session
from .errors import AngeronaError, NotAcyclic, NotNF, ParseError, ValidationError
from .grounding import relaxed_ground
from .inference import ENGINES, Model
from .syntax import parse_atom, parse_program


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read {path}: {e.strerror}")


def _literal(text: str, arity) -> tuple:
    atom, _, val = text.partition("=")
    val = val.strip().lower() or "true"
    if val not in ("true", "false"):
        raise ParseError(f"evidence value must be true or false, got {val!r}")
    return parse_atom(atom.strip(), arity), val == "true"


def _fmt(p) -> str:
    return f"{float(p):.12f}"


def cmd_parse(a) -> int:
    prog = parse_program(_read(a.program))
    if a.desugar:
        print(desugar(prog), end="")
    else:
        print(prog, end="")
    return 0


def cmd_infer(a) -> int:
    m = Model(_read(a.program))
    ar = m.core.arity
    ev = [_literal(e, ar) for e in a.evidence]
    if len(a.query) == 1:
        print(_fmt(m.prob(parse_atom(a.query[0], ar), ev, a.engine)))
        return 0
    targets = [parse_atom(q, ar) for q in a.query]
    if not targets:
        targets = sorted((x for x in m.grounding.atoms if not m.core.is_switch(x.pred)), key=str)
    for t in targets:
        print(f"{t}\t{_fmt(m.prob(t, ev, a.engine))}")
    return 0


def cmd_acyclic(a) -> int:
    m = Model(_read(a.program))
    rep = m.report
    if a.json:
        print(json.dumps(rep.to_json(), indent=1, ensure_ascii=False))
    else:
        print(rep.verdict)
        if rep.reason:
            print(f"reason: {rep.reason}")
        print("annotations: " + ", ".join(str(x) for x in rep.template))
        for c in rep.cycles:
            d = c.to_json()
            tail = d.get("guard") or "VIOLATION " + d.get("violation", "")
            print(f"  {d['kind']} {d['edges']}: {tail}")
    return 0 if rep.ok else 1


def cmd_ground(a) -> int:
    print(relaxed_ground(desugar(_read(a.program))).dump(), end="")
    return 0


def cmd_compile(a) -> int:
    m = Model(_read(a.program))
    if not m.report.ok:
        raise NotAcyclic(f"program is {m.report.verdict}: {m.report.reason or 'unguarded structure'}")
    bn = compile_bn(m.core, m.report, m.grounding)
    text = bn.dumps() + "\n"
    if a.out:
        Path(a.out).write_text(text, encoding="utf-8")
        print(f"{len(bn)} nodes written to {a.out}")
    else:
        print(text, end="")
    return 0


def cmd_check(a) -> int:
    atk = AtkModel(_read(a.attacker))
    ar = dict(atk.default.core.arity)
    pdp = PDP(atk, parse_policy(_read(a.policy), ar), a.engine)
    db = parse_db(_read(a.db))
    journal = Journal(a.journal, ar) if a.journal else None
    history = journal.load() if journal else []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = run_session(pdp, db, _read(a.queries).splitlines(), history, journal, a.audit)
    for d in out:
        line = d.line()
        if a.audit and d.beliefs is not None:
            bel = ", ".join(f"{k}={'n/a' if v is None else _fmt(v)}" for k, v in d.beliefs.items())
            line += f"\t[{d.user}] {bel}"
        print(line)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if any(d.error for d in out):
        return 2
    return 1 if any(d.permit is False for d in out) else 0


def cmd_gen(a) -> int:
    fam = B.FIG1 if a.fig1 else None
    n = 3 if a.fig1 else a.n
    w = B.gen_smokers(n, a.seed, Fraction(a.smoker_fraction), a.secrets, a.queries, a.user, fam)
    for k, p in w.write(a.out).items():
        print(f"{k}: {p}")
    return 0


def cmd_bench(a) -> int:
    results = []
    for n in a.n:
        w = B.gen_smokers(n, a.seed, secrets=a.secrets, queries=a.queries)
        results.append(B.run_bench(w, n, a.engine))
    text = B.bench_csv(results)
    if a.csv:
        Path(a.csv).write_text(text, encoding="utf-8")
    print(text, end="")
    timed = [r for r in results if r.query_ms]
    if len(timed) >= 2:
        k = B.fit_exponent([r.n for r in timed], [r.percentile(0.5) for r in timed])
        print(f"# latency exponent (p50 vs N): {k:.3f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="angerona", description="Probabilistic logic programs, poly-tree "
                                 "inference and belief-based query control.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    def prog(p, flag="--program"):
        p.add_argument(flag, required=True, metavar="FILE")
        return p

    p = prog(sub.add_parser("parse", help="parse a program and print it back"))
    p.add_argument("--desugar", action="store_true", help="print the switch-based core program")
    p.set_defaults(fn=cmd_parse)

    p = prog(sub.add_parser("infer", help="marginal or conditional probabilities"))
    p.add_argument("--query", action="append", default=[], metavar="ATOM")
    p.add_argument("--evidence", action="append", default=[], metavar="ATOM=true|false")
    p.add_argument("--engine", choices=ENGINES, default="auto")
    p.set_defaults(fn=cmd_infer)

    p = prog(sub.add_parser("acyclic", help="acyclicity report"))
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_acyclic)

    p = prog(sub.add_parser("ground", help="dump the relaxed grounding"))
    p.set_defaults(fn=cmd_ground)

    p = prog(sub.add_parser("compile", help="compile to a poly-tree network (JSON)"))
    p.add_argument("--out", metavar="FILE")
    p.set_defaults(fn=cmd_compile)

    p = prog(sub.add_parser("check", help="run a query log through the decision point"), "--attacker")
    p.add_argument("--policy", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--engine", choices=ENGINES, default="auto")
    p.add_argument("--audit", action="store_true", help="print secret beliefs after each step")
    p.add_argument("--journal", metavar="DIR", help="resume from and append to a per-user journal")
    p.set_defaults(fn=cmd_check)

    p = sub.add_parser("gen-smokers", help="generate a synthetic smokers workload")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--smoker-fraction", default="1/2")
    p.add_argument("--secrets", type=int, default=100)
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--user", default="mallory")
    p.add_argument("--fig1", action="store_true", help="the three-patient alice/bob/carl layout")
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(fn=cmd_gen)

    p = sub.add_parser("bench", help="time initialisation and per-query decisions")
    p.add_argument("--n", type=int, nargs="+", default=[250, 500, 1000, 2000])
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--secrets", type=int, default=100)
    p.add_argument("--queries", type=int, default=100)
    p.add_argument("--engine", choices=ENGINES, default="auto")
    p.add_argument("--csv", metavar="FILE")
    p.set_defaults(fn=cmd_bench)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ParseError, NotNF, ValidationError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except AngeronaError as e:
        print(f"rejected: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
