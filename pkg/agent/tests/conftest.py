"""Shared fixtures: real server processes the client tests talk to.

The servers are spawned once per session; that is safe because every
TCP connection gets its own fresh protocol session on the server side,
so tests cannot leak episode state into each other.
"""

import re
import subprocess
import sys
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parents[2]
TOY_CONFIG = REPO / "src" / "gridarb" / "data" / "config_toy.json"
TOY_DP_CONFIG = REPO / "src" / "gridarb" / "data" / "config_toy_dp.json"
GOLDEN = REPO / "docs" / "golden_transcript.txt"


def serve_argv(config=None, seed=0):
    """Argv list that runs the server on stdio (child-process transport)."""
    argv = [sys.executable, "-m", "gridarb.cli", "serve", "--seed", str(seed)]
    if config is not None:
        argv += ["--config", str(config)]
    return argv


def _spawn_tcp(config, seed):
    argv = [sys.executable, "-m", "gridarb.cli", "serve",
            "--port", "0", "--seed", str(seed)]
    if config is not None:
        argv += ["--config", str(config)]
    proc = subprocess.Popen(argv, stderr=subprocess.PIPE, encoding="utf-8")
    line = proc.stderr.readline()
    match = re.search(r"listening on ([\d.]+):(\d+)", line)
    if match is None:
        proc.terminate()
        raise RuntimeError(f"server did not announce a port: {line!r}")
    return proc, (match.group(1), int(match.group(2)))


@pytest.fixture(scope="session")
def toy_server():
    proc, address = _spawn_tcp(TOY_CONFIG, seed=0)
    yield address
    proc.terminate()
    proc.wait()


@pytest.fixture(scope="session")
def default_server():
    proc, address = _spawn_tcp(None, seed=0)
    yield address
    proc.terminate()
    proc.wait()
