"""Distribution-network topology and bus-admittance construction.

Networks are loaded from two CSV tables (nodes, lines), validated, and
reduced to the slack/PQ admittance partition the solvers consume.  All
solver math is in per-unit; line tables carrying ohms are converted at
load time using the node base voltage and a configured base MVA.

Canonical ordering: slack node first, remaining nodes by ascending id.
Lines are normalized to ``from_node < to_node`` and sorted, so loading
the same network from a permuted file yields a bit-identical partition.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    DisconnectedGraph,
    DuplicateLine,
    MalformedRow,
    MissingSlack,
    MultipleSlack,
    SingularPartition,
)

NODE_KINDS = ("slack", "pq")


@dataclass(frozen=True)
class Node:
    id: int
    kind: str  # "slack" or "pq"
    base_voltage: float  # volts, only used for per-unit conversion

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise MalformedRow(f"node {self.id}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class Line:
    from_node: int
    to_node: int
    resistance: float  # per-unit
    reactance: float  # per-unit
    current_limit: float = math.inf  # per-unit current magnitude bound

    def __post_init__(self):
        if self.from_node == self.to_node:
            raise MalformedRow(
                f"line ({self.from_node},{self.to_node}): from and to must differ")
        if self.resistance < 0:
            raise MalformedRow(
                f"line ({self.from_node},{self.to_node}): negative resistance")
        if self.resistance == 0.0 and self.reactance == 0.0:
            raise MalformedRow(
                f"line ({self.from_node},{self.to_node}): zero impedance")

    @property
    def admittance(self) -> complex:
        return 1.0 / complex(self.resistance, self.reactance)


@dataclass(frozen=True)
class NetworkModel:
    nodes: tuple[Node, ...]
    lines: tuple[Line, ...]
    slack_voltage: complex = 1.0 + 0.0j

    @property
    def slack_id(self) -> int:
        return next(n.id for n in self.nodes if n.kind == "slack")

    @property
    def pq_ids(self) -> tuple[int, ...]:
        return tuple(n.id for n in self.nodes if n.kind == "pq")

    @property
    def canonical_node_ids(self) -> tuple[int, ...]:
        """Slack first, then PQ nodes by ascending id."""
        return (self.slack_id,) + self.pq_ids


@dataclass(frozen=True, eq=False)
class AdmittancePartition:
    """Bus admittance split into PQ-block and PQ-to-slack coupling.

    ``y_dd`` is factorized once at construction; the LU is reused by every
    solve and batch on this partition.  Line endpoint indices refer to the
    canonical node order (slack at position 0, PQ nodes following), which is
    also the order of the voltage array in a solution.

    Attributes:
        slack_voltage: the fixed slack voltage V_0 the owning model declared.
    """

    y_dd: np.ndarray  # (n_pq, n_pq) complex
    y_ds: np.ndarray  # (n_pq,) complex, coupling to the slack node
    y_sd: np.ndarray  # (n_pq,) complex, slack row over PQ nodes
    y_ss: complex  # slack self-admittance
    ordering: dict[int, int]  # node id -> row of y_dd
    node_ids: tuple[int, ...]  # canonical order, slack first
    slack_id: int
    slack_voltage: complex
    line_from: np.ndarray  # (n_lines,) canonical positions
    line_to: np.ndarray  # (n_lines,)
    line_y: np.ndarray  # (n_lines,) complex series admittances
    lu: tuple = field(repr=False, default=None)

    @property
    def n_pq(self) -> int:
        return self.y_dd.shape[0]


def _read_rows(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise MalformedRow(f"{path}: empty file, expected a header row")
        return [dict(row) for row in reader]


def _parse_float(row_desc: str, name: str, raw) -> float:
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise MalformedRow(f"{row_desc}: field {name!r} is not numeric: {raw!r}")
    if not math.isfinite(value):
        raise MalformedRow(f"{row_desc}: field {name!r} is not finite")
    return value


def load_network(node_table_path, line_table_path, base_mva: float = 1.0,
                 slack_voltage: complex = 1.0 + 0.0j) -> NetworkModel:
    """Load and validate a network from node and line CSV tables.

    Node header: ``node_id,kind,base_kv``.  Line header either
    ``from_node,to_node,r_pu,x_pu[,i_max_pu]`` or the ohm variant
    ``from_node,to_node,r_ohm,x_ohm[,i_max_pu]``, converted to per-unit
    with Z_base = base_kv^2 / base_mva of the from-node.
    """
    node_rows = _read_rows(node_table_path)
    nodes = []
    base_kv = {}
    for i, row in enumerate(node_rows):
        desc = f"{node_table_path} row {i + 2}"
        try:
            nid = int(row["node_id"])
            kind = row["kind"].strip()
        except (KeyError, TypeError, ValueError, AttributeError):
            raise MalformedRow(f"{desc}: expected header node_id,kind,base_kv")
        if kind not in NODE_KINDS:
            raise MalformedRow(f"{desc}: unknown node kind {kind!r}")
        kv = _parse_float(desc, "base_kv", row.get("base_kv"))
        if nid in base_kv:
            raise MalformedRow(f"{desc}: duplicate node id {nid}")
        base_kv[nid] = kv
        nodes.append(Node(id=nid, kind=kind, base_voltage=kv * 1e3))

    slack_ids = [n.id for n in nodes if n.kind == "slack"]
    if not slack_ids:
        raise MissingSlack(f"{node_table_path}: no slack node declared")
    if len(slack_ids) > 1:
        raise MultipleSlack(
            f"{node_table_path}: multiple slack nodes {slack_ids}")
    if len(nodes) < 2:
        raise MalformedRow(f"{node_table_path}: need at least 2 nodes")
    ids = sorted(base_kv)
    if ids != list(range(1, len(ids) + 1)):
        raise MalformedRow(
            f"{node_table_path}: node ids must be contiguous 1..{len(ids)}, got {ids[:5]}...")

    line_rows = _read_rows(line_table_path)
    if line_rows:
        in_ohms = "r_ohm" in line_rows[0]
    else:
        in_ohms = False
    seen_pairs = {}
    lines = []
    for i, row in enumerate(line_rows):
        desc = f"{line_table_path} row {i + 2}"
        try:
            f, t = int(row["from_node"]), int(row["to_node"])
        except (KeyError, TypeError, ValueError):
            raise MalformedRow(f"{desc}: expected integer from_node,to_node")
        if f not in base_kv or t not in base_kv:
            raise MalformedRow(f"{desc}: line ({f},{t}) references unknown node")
        if in_ohms:
            r = _parse_float(desc, "r_ohm", row.get("r_ohm"))
            x = _parse_float(desc, "x_ohm", row.get("x_ohm"))
            z_base = base_kv[f] ** 2 / base_mva  # kV^2/MVA = ohm
            r, x = r / z_base, x / z_base
        else:
            r = _parse_float(desc, "r_pu", row.get("r_pu"))
            x = _parse_float(desc, "x_pu", row.get("x_pu"))
        raw_imax = row.get("i_max_pu")
        i_max = math.inf
        if raw_imax not in (None, ""):
            i_max = _parse_float(desc, "i_max_pu", raw_imax)
        pair = (min(f, t), max(f, t))
        if pair in seen_pairs:
            raise DuplicateLine(
                f"{desc}: pair {pair} already defined at row {seen_pairs[pair]}")
        seen_pairs[pair] = i + 2
        lines.append(Line(from_node=pair[0], to_node=pair[1],
                          resistance=r, reactance=x, current_limit=i_max))

    nodes.sort(key=lambda n: n.id)
    lines.sort(key=lambda l: (l.from_node, l.to_node))
    model = NetworkModel(nodes=tuple(nodes), lines=tuple(lines),
                         slack_voltage=complex(slack_voltage))
    _check_connected(model)
    return model


def _check_connected(model: NetworkModel) -> None:
    adjacency = {n.id: [] for n in model.nodes}
    for line in model.lines:
        adjacency[line.from_node].append(line.to_node)
        adjacency[line.to_node].append(line.from_node)
    seen = {model.slack_id}
    stack = [model.slack_id]
    while stack:
        for nb in adjacency[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    missing = sorted(set(adjacency) - seen)
    if missing:
        raise DisconnectedGraph(
            f"nodes unreachable from slack {model.slack_id}: {missing}")


def build_admittance(model: NetworkModel) -> AdmittancePartition:
    """Assemble the slack/PQ admittance partition and factorize the PQ block.

    Construction iterates lines in canonical order, so the result is
    independent of the order lines appeared in the source file.
    An islanded PQ subgraph surfaces here as SingularPartition; the
    graph-level connectivity check lives in load_network.
    """
    pq_ids = model.pq_ids
    ordering = {nid: i for i, nid in enumerate(pq_ids)}
    slack = model.slack_id
    n = len(pq_ids)

    y_dd = np.zeros((n, n), dtype=complex)
    y_ds = np.zeros(n, dtype=complex)
    y_sd = np.zeros(n, dtype=complex)
    y_ss = 0.0 + 0.0j
    for line in model.lines:
        y = line.admittance
        f, t = line.from_node, line.to_node
        for a, b in ((f, t), (t, f)):
            if a == slack:
                y_ss += y
                y_sd[ordering[b]] -= y
            else:
                i = ordering[a]
                y_dd[i, i] += y
                if b == slack:
                    y_ds[i] -= y
                else:
                    y_dd[i, ordering[b]] -= y

    with warnings.catch_warnings():
        # singularity is detected below and raised as SingularPartition
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu = scipy.linalg.lu_factor(y_dd)
    u_diag = np.abs(np.diag(lu[0]))
    if u_diag.min() <= 1e-13 * max(u_diag.max(), 1.0):
        raise SingularPartition(
            "PQ admittance block is numerically singular; "
            "an islanded PQ subgraph is the usual cause")

    position = {slack: 0}
    position.update({nid: i + 1 for nid, i in ordering.items()})
    line_from = np.array([position[l.from_node] for l in model.lines], dtype=np.intp)
    line_to = np.array([position[l.to_node] for l in model.lines], dtype=np.intp)
    line_y = np.array([l.admittance for l in model.lines], dtype=complex)

    for arr in (y_dd, y_ds, y_sd, line_from, line_to, line_y):
        arr.setflags(write=False)
    return AdmittancePartition(y_dd=y_dd, y_ds=y_ds, y_sd=y_sd, y_ss=y_ss,
                               ordering=ordering,
                               node_ids=(slack,) + pq_ids,
                               slack_id=slack,
                               slack_voltage=complex(model.slack_voltage),
                               line_from=line_from, line_to=line_to,
                               line_y=line_y, lu=lu)
