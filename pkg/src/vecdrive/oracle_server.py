"""Reference external-oracle server: the rule oracle behind the stdio
line protocol.

Run as ``python -m vecdrive.oracle_server``; each stdin line must be a
protocol request, each stdout line is the matching response. Useful as a
loopback fixture for the adapter and as a template for wiring a real
model into the protocol.
"""

from __future__ import annotations

import sys

from . import jsonio
from .oracle import Format, RuleOracle
from .scene import scenario_from_dict


def serve(stdin=None, stdout=None) -> None:
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    oracle = RuleOracle()
    for line in stdin:
        if not line.strip():
            continue
        request = jsonio.loads(line)
        scenario = scenario_from_dict(request["scenario"])
        format = Format.parse(request.get("format", "short"))
        decision = oracle.decide(scenario, format)
        rationale = (decision.rationale_long if format is Format.LONG
                     else decision.rationale_short)
        response = {
            "v": 1,
            "action": decision.action.value,
            "rationale": rationale,
            "hazard_ids": list(decision.hazard_ids),
        }
        stdout.write(jsonio.dumps(response) + "\n")
        stdout.flush()


if __name__ == "__main__":
    serve()
