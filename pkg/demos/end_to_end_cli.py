"""Run every CLI subcommand on a planted two-group corpus in a temporary directory."""

import json
import sys
import tempfile
from pathlib import Path

from valuealign.cli import main
from valuealign.synthetic import write_planted_run

work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="valuealign-"))
config = write_planted_run(work, seed=1)
print(f"planted run written to {work}\n")

for argv in (["build-codebook", "--config", str(config)],
             ["evaluate", "--config", str(config)],
             ["validate", "--cube", str(work / "out" / "evaluation" / "cube.jsonl"),
              "--similar", "A,A-heldout", "--out", str(work / "out" / "validation")],
             ["report", str(work / "out")]):
    print("$ valuealign " + " ".join(argv))
    if main(argv) != 0:
        sys.exit(1)
    print()

report = json.loads((work / "out" / "evaluation" / "report.json").read_text())
print("held-out samples against each reference (higher r = closer):")
for c in report["comparisons"]:
    if c["condition"] == "control" and c["group_b"].endswith("-heldout"):
        print(f"  {c['group_b']:10s} vs {c['group_a']}: r = {c['r']:.3f}")
