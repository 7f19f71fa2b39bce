"""Three programs, three verdicts: guarded recursion, an unguarded diamond,
and the smokers program that only passes after the rule transforms."""

from pathlib import Path

from angerona import analyze, desugar

FIX = Path(__file__).resolve().parent.parent / "tests" / "fixtures"
ex5 = (FIX / "example5.pl").read_text()

cases = {
    "ordered recursion": ex5,
    "same program plus e(1)": ex5 + "e(1).\n",
    "smokers": (FIX / "smokers.pl").read_text(),
}

for title, src in cases.items():
    rep = analyze(desugar(src))
    print(f"== {title}: {rep.verdict}")
    for c in rep.cycles:
        d = c.to_json()
        print("   ", d["kind"], d["edges"])
        print("      ", d.get("guard") or "VIOLATION " + d["violation"])
    if "alpha" in rep.extra:
        print("    kernels after merging dominated rules:")
        for k in rep.extra["alpha"].kernels:
            print("      ", k)
