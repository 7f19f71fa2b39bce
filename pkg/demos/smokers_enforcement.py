"""Walk mallory's four queries through the decision point and show how her
belief about each patient moves."""

from pathlib import Path

from angerona import PDP, AtkModel, parse_policy, run_session
from angerona.enforcement import parse_db

FIX = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

atk = AtkModel((FIX / "smokers.pl").read_text())
policy = parse_policy((FIX / "smokers.pol").read_text())
db = parse_db((FIX / "smokers.db").read_text())
log = (FIX / "smokers.log").read_text().splitlines()

print("secrets:")
for s in policy.secrets:
    print("  ", s)

for engine in ("polytree", "oracle"):
    print(f"\nengine={engine}")
    pdp = PDP(atk, policy, engine)
    for line, d in zip(log, run_session(pdp, db, log, audit=True)):
        beliefs = "  ".join(f"{k}={float(v):.4f}" for k, v in d.beliefs.items())
        print(f"  {line:<48} {d.line():<12} {beliefs}")

# a TRUE answer to either of the last two queries would settle a secret
# outright, so both are refused whatever the database actually holds
