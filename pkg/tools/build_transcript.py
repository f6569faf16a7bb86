"""Regenerate docs/golden_transcript.txt from the bundled toy config.

The transcript freezes one protocol conversation byte-for-byte: lines
starting with "> " are client requests, lines starting with "< " are the
server's responses.  Conformance tests replay the requests through a
fresh session and demand identical response bytes, so regenerate this
file (and commit the diff) whenever the protocol or the toy fixtures
deliberately change.
"""

from __future__ import annotations

from pathlib import Path

from gridarb.config import load_config
from gridarb.feeders import toy_dp_config_path
from gridarb.jsonio import dumps
from gridarb.server import ProtocolSession

OUT = Path(__file__).resolve().parent.parent / "docs" / "golden_transcript.txt"

# Dict entries are rendered through the canonical encoder so any conforming
# client that builds the same calls emits these exact bytes; the one string
# entry stays literal because it is deliberately not JSON.
REQUESTS = [
    {"cmd": "hello"},
    {"cmd": "reset", "payload": {"day": 0}},
    {"cmd": "step", "payload": {"action": [0.0]}},
    {"cmd": "step", "payload": {"action": [50.0]}},
    {"cmd": "step", "payload": {"action": [-50.0]}},
    "this line is not JSON",
    {"cmd": "warp"},
    {"cmd": "step", "payload": {"action": [1.0, 2.0]}},
    {"cmd": "reset", "payload": {"day": 5}},
    {"cmd": "close"},
]


def main() -> None:
    session = ProtocolSession(load_config(toy_dp_config_path()), seed=0)
    lines = []
    for request in REQUESTS:
        line = request if isinstance(request, str) else dumps(request)
        lines.append("> " + line)
        lines.append("< " + session.handle_line(line))
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {OUT} ({len(REQUESTS)} exchanges)")


if __name__ == "__main__":
    main()
