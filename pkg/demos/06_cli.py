"""
Scenario runner
===============

The same pipelines run from JSON scenarios through the ``nucc`` command.
This script runs the bundled scenarios in-process and shows the report.
The equivalent shell command is ``nucc run demos/scenarios/lti_stabilize.json``.
"""

import json
import tempfile
from pathlib import Path

from nucc import cli

here = Path(__file__).parent / "scenarios"
print(cli.catalog_table())

with tempfile.TemporaryDirectory() as tmp:
    for name in ("kalman_classify", "lti_stabilize"):
        scenario = cli.load_scenario(here / f"{name}.json")
        report = cli.run(scenario, out=str(Path(tmp) / name))
        print(f"\n{name}: exit code {report['exit_code']}")
        for s in report["stages"]:
            print(f"  {s['stage']:<10} {s['status']:<6} {json.dumps(cli.jsonable(s.get('summary', {})))}")
        print("  artifacts:", ", ".join(report["artifacts"]))

# an invalid scenario is rejected before anything runs (exit code 2 on the command line)
try:
    cli.validate_scenario({"system": {"catalog": "lti_scalar"}, "pipeline": ["stabilize"]})
except cli.ScenarioError as exc:
    print("\nrejected:", exc)
