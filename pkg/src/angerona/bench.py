"""Synthetic smokers workloads and the timing harness."""

from __future__ import annotations

import csv
import io
import math
import statistics
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .enforcement import PDP, AtkModel, Event, parse_db, parse_policy, parse_query_line
from .rc import evaluate

MASK = (1 << 64) - 1

SMOKERS_RULES = """\
1/20::cancer(X) :- patient(X).
5/19::cancer(X) :- smokes(X).
3/14::cancer(Y) :- father(X,Y), cancer(X), mother(Z,Y), \\+cancer(Z).
3/14::cancer(Y) :- father(X,Y), \\+cancer(X), mother(Z,Y), cancer(Z).
3/7::cancer(Y) :- father(X,Y), cancer(X), mother(Z,Y), cancer(Z).
"""
RULE_PROBS = [Fraction(1, 20), Fraction(5, 19), Fraction(3, 14), Fraction(3, 14), Fraction(3, 7)]


class SplitMix64:
    """splitmix64 (Steele, Lea, Flood); byte-stable on every platform."""

    def __init__(self, seed: int):
        self.state = seed & MASK

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        return self.next() % n

    def chance(self, p: Fraction) -> bool:
        # exact comparison against a 64-bit uniform draw
        return self.next() * p.denominator < p.numerator * (1 << 64)


@dataclass
class Family:
    patients: list[str]
    smokes: list[str]
    father: list[tuple[str, str]] = field(default_factory=list)
    mother: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class Workload:
    program: str
    db: str
    policy: str
    queries: str

    def write(self, out: str | Path) -> dict[str, Path]:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        paths = {}
        for name, fn in [("program", "smokers.pl"), ("db", "db.facts"), ("policy", "policy.pol"), ("queries", "queries.log")]:
            p = out / fn
            p.write_text(getattr(self, name), encoding="utf-8")
            paths[name] = p
        return paths


FIG1 = Family(["alice", "bob", "carl"], ["bob", "carl"], [("bob", "carl")], [("alice", "carl")])


def smokers_program(fam: Family) -> str:
    lines = ["% smokers belief program"]
    lines += [f"patient({p})." for p in fam.patients]
    lines += [f"smokes({p})." for p in fam.smokes]
    lines += [f"father({x},{y})." for x, y in fam.father]
    lines += [f"mother({x},{y})." for x, y in fam.mother]
    return "\n".join(lines) + "\n" + SMOKERS_RULES


def random_family(n: int, rng: SplitMix64, smoker_fraction: Fraction = Fraction(1, 2),
                  max_tree: int = 24) -> Family:
    """Patients in birth order; a newborn gets a father and a mother from two
    different existing trees, so the parent links always form a poly-tree forest."""
    width = len(str(max(n - 1, 0)))
    names = [f"p{i:0{width}d}" for i in range(n)]
    root = list(range(n))
    size = [1] * n

    def find(x):
        while root[x] != x:
            root[x] = root[root[x]]
            x = root[x]
        return x

    male = [rng.chance(Fraction(1, 2)) for _ in range(n)]
    fam = Family(list(names), [])
    for i in range(n):
        if rng.chance(smoker_fraction):
            fam.smokes.append(names[i])
        if i < 2 or not rng.chance(Fraction(1, 2)):
            continue
        for _ in range(4):
            f, m = rng.below(i), rng.below(i)
            if not male[f] or male[m]:
                continue
            rf, rm = find(f), find(m)
            if rf == rm or size[rf] + size[rm] + 1 > max_tree:
                continue
            fam.father.append((names[f], names[i]))
            fam.mother.append((names[m], names[i]))
            root[rf] = root[rm] = i
            size[i] = size[rf] + size[rm] + 1
            break
    fam.father.sort()
    fam.mother.sort()
    return fam


def sample_cancer(fam: Family, rng: SplitMix64) -> set[str]:
    """Draw one world of the belief program; parents precede children."""
    smokes = set(fam.smokes)
    dad = {y: x for x, y in fam.father}
    mum = {y: x for x, y in fam.mother}
    sick: set[str] = set()
    for p in fam.patients:
        hit = rng.chance(RULE_PROBS[0])
        if rng.chance(RULE_PROBS[1]) and p in smokes:
            hit = True
        if p in dad and p in mum:
            cx, cz = dad[p] in sick, mum[p] in sick
            k = {(True, False): 2, (False, True): 3, (True, True): 4}.get((cx, cz))
            if k is not None and rng.chance(RULE_PROBS[k]):
                hit = True
        if hit:
            sick.add(p)
    return sick


def gen_smokers(n: int, seed: int = 0, smoker_fraction: Fraction = Fraction(1, 2), secrets: int = 100,
                queries: int = 100, user: str = "mallory", family: Family | None = None) -> Workload:
    if n < 1:
        raise ValueError("need at least one patient")
    rng = SplitMix64(seed)
    fam = family or random_family(n, rng, smoker_fraction)
    sick = sample_cancer(fam, rng)
    facts = ([f"patient({p})" for p in fam.patients] + [f"smokes({p})" for p in fam.smokes]
             + [f"father({x},{y})" for x, y in fam.father] + [f"mother({x},{y})" for x, y in fam.mother]
             + [f"cancer({p})" for p in sorted(sick)])
    pool = list(fam.patients)
    chosen = []
    for _ in range(min(secrets, len(pool))):
        chosen.append(pool.pop(rng.below(len(pool))))
    policy = [f"SECRET cancer({p}) FOR {user} THRESHOLD 1/2" for p in sorted(chosen)]
    qs = []
    links = fam.father + fam.mother
    for _ in range(queries):
        kind = rng.below(4)
        p = fam.patients[rng.below(len(fam.patients))]
        if kind == 0:
            qs.append(f"{user}: cancer({p})")
        elif kind == 1:
            qs.append(f"{user}: smokes({p})")
        elif kind == 2 and links:
            x, y = links[rng.below(len(links))]
            rel = "father" if (x, y) in fam.father else "mother"
            qs.append(f"{user}: {rel}({x},{y})")
        else:
            qs.append(f"{user}: patient({p})")
    text = lambda rows: "".join(r + "\n" for r in rows)
    return Workload(smokers_program(fam), text(facts), text(policy), text(qs))


# ---------------------------------------------------------------- timing


@dataclass
class BenchResult:
    n: int
    engine: str
    init_ms: float
    query_ms: list[float]
    decisions: list[str]

    def percentile(self, q: float) -> float | None:
        if not self.query_ms:
            return None
        xs = sorted(self.query_ms)
        return xs[min(len(xs) - 1, max(0, math.ceil(q * len(xs)) - 1))]

    def row(self) -> dict:
        fmt = lambda x: "" if x is None else f"{x:.3f}"
        return {"n": self.n, "engine": self.engine, "init_ms": f"{self.init_ms:.3f}", "queries": len(self.query_ms),
                "p50_query_ms": fmt(self.percentile(0.5)), "p95_query_ms": fmt(self.percentile(0.95)),
                "max_query_ms": fmt(max(self.query_ms) if self.query_ms else None)}


def run_bench(w: Workload, n: int, engine: str = "auto") -> BenchResult:
    t0 = time.perf_counter()
    atk = AtkModel(w.program)
    m = atk.default
    if engine != "oracle":
        m.tractable()  # ground + analyze + compile
        if m.bn is not None:
            m.engine
    arity = dict(m.core.arity)
    pdp = PDP(atk, parse_policy(w.policy, arity), engine)
    db = parse_db(w.db)
    init = (time.perf_counter() - t0) * 1000
    h, times, out = [], [], []
    for line in w.queries.splitlines():
        if not line.strip():
            continue
        q = parse_query_line(line, arity)
        t = time.perf_counter()
        ok = pdp.decide(h, q.user, q.sentence)
        times.append((time.perf_counter() - t) * 1000)
        res = evaluate(q.sentence, db) if ok else None
        h.append(Event(q.user, q.sentence, ok, res))
        out.append("DENY" if not ok else f"PERMIT {'TRUE' if res else 'FALSE'}")
    return BenchResult(n, engine, init, times, out)


def bench_csv(results: list[BenchResult]) -> str:
    buf = io.StringIO()
    cols = ["n", "engine", "init_ms", "queries", "p50_query_ms", "p95_query_ms", "max_query_ms"]
    wr = csv.DictWriter(buf, cols, lineterminator="\n")
    wr.writeheader()
    for r in results:
        wr.writerow(r.row())
    return buf.getvalue()


def fit_exponent(ns: list[int], ys: list[float]) -> float:
    """Least-squares slope of log y against log n."""
    lx = [math.log(n) for n in ns]
    ly = [math.log(max(y, 1e-9)) for y in ys]
    mx, my = statistics.fmean(lx), statistics.fmean(ly)
    num = sum((a - mx) * (b - my) for a, b in zip(lx, ly))
    den = sum((a - mx) ** 2 for a in lx)
    return num / den
