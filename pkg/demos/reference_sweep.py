"""
The reference eps-sweep
=======================

Runs the reference experiment through the same harness as the CLI
(``kdvlayer sweep``), then prints the report.  Takes about a minute.

Run:  python demos/reference_sweep.py [outdir]
"""
import json
import sys

from kdvlayer import harness

out = sys.argv[1] if len(sys.argv) > 1 else "out_reference"
cfg = harness.reference_config()
print(json.dumps(cfg, indent=2))
code = harness.run_sweep(cfg, out)
print(f"sweep exit code {code}\n")
harness.emit_report(out)
