"""Windowed bipartite attribute graph and per-message neighborhoods.

Entity nodes (receivers and senders) sit on one side, value nodes on
the other; each message contributes one name-labeled edge from its
receiver to every attribute value it carries.  Identical values
collapse into a single node inside the window, which is what makes
coordinated behaviour (many messages sharing one IP) show up as degree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core_types import AttrValue, ControlMessage, EntityRef, canonical_value_key
from .nn_core import Mlp, forward


@dataclass(frozen=True)
class Edge:
    entity_key: str
    value_key: str
    attr_name: str
    msg_id: int
    ts: float


@dataclass
class AttributeGraph:
    t0: float
    t1: float
    entities: dict = field(default_factory=dict)   # entity key -> EntityRef
    values: dict = field(default_factory=dict)     # value key -> AttrValue
    edges: list = field(default_factory=list)
    in_degree: dict = field(default_factory=dict)  # value key -> edge count
    _senders: dict = field(default_factory=dict)   # value key -> set of sender keys

    def distinct_senders(self, value_key: str) -> int:
        return len(self._senders.get(value_key, ()))


def build_graph(
    messages: list[ControlMessage], t0: float | None = None, t1: float | None = None
) -> AttributeGraph:
    """Graph over one window slice; bounds default to the slice's span."""
    if t0 is None:
        t0 = min((m.ts for m in messages), default=0.0)
    if t1 is None:
        t1 = max((m.ts for m in messages), default=0.0) + 1e-9
    g = AttributeGraph(t0, t1)
    for msg in messages:
        if not (t0 <= msg.ts < t1) and msg.ts != t0:
            raise ValueError(f"message {msg.msg_id} at ts={msg.ts} outside window [{t0}, {t1})")
        for ent in (msg.recv, msg.send):
            g.entities.setdefault(ent.key, ent)
        for attr in msg.attrs:
            vkey = canonical_value_key(attr.value)
            g.values.setdefault(vkey, attr.value)
            g.edges.append(Edge(msg.recv.key, vkey, attr.name, msg.msg_id, msg.ts))
            g.in_degree[vkey] = g.in_degree.get(vkey, 0) + 1
            g._senders.setdefault(vkey, set()).add(msg.send.key)
    return g


@dataclass
class Neighborhood:
    """One message's triplets plus window-level degree features."""

    u: EntityRef
    triplets: list  # (attr name, value key, value), in attribute order
    topo: np.ndarray  # (n, 2): log1p(in-degree), log1p(distinct senders)


def neighborhood(graph: AttributeGraph, msg: ControlMessage) -> Neighborhood:
    if not (graph.t0 <= msg.ts < graph.t1) and msg.ts != graph.t0:
        raise ValueError(f"message {msg.msg_id} outside window [{graph.t0}, {graph.t1})")
    triplets = []
    topo = np.zeros((len(msg.attrs), 2))
    for i, attr in enumerate(msg.attrs):
        vkey = canonical_value_key(attr.value)
        if vkey not in graph.in_degree:
            raise ValueError(f"message {msg.msg_id} was not part of the window's graph")
        triplets.append((attr.name, vkey, attr.value))
        topo[i, 0] = math.log1p(graph.in_degree[vkey])
        topo[i, 1] = math.log1p(graph.distinct_senders(vkey))
    return Neighborhood(msg.recv, triplets, topo)


def iter_windows(messages: list[ControlMessage], width: float) -> list[tuple[float, float, list]]:
    """Tumbling windows [k*width, (k+1)*width), skipping empty ones."""
    if width <= 0:
        raise ValueError("window width must be > 0")
    buckets: dict[int, list[ControlMessage]] = {}
    for msg in sorted(messages, key=lambda m: (m.ts, m.msg_id)):
        buckets.setdefault(int(msg.ts // width), []).append(msg)
    return [(k * width, (k + 1) * width, msgs) for k, msgs in sorted(buckets.items())]


def mpnn_propagate(
    graph: AttributeGraph,
    states: dict,
    depth: int,
    phi: Mlp,
    psi: Mlp,
    edge_vec_fn,
) -> dict:
    """depth rounds of neighborhood aggregation with edge features.

    Each round: h'_n = phi([h_n, sum over incident edges of
    psi([h_m, edge_vec])]), edges taken in both directions.  depth=0 is
    the identity.  Exposed for propagation-depth experiments; the
    default pipeline covers depth 1 through its autoencoder stack.
    """
    node_keys = list(graph.entities.keys()) + list(graph.values.keys())
    for key in node_keys:
        if key not in states:
            raise ValueError(f"missing state for node {key!r}")
    if depth == 0:
        return dict(states)

    incident: dict[str, list[tuple[str, str]]] = {k: [] for k in node_keys}
    for edge in graph.edges:
        incident[edge.entity_key].append((edge.value_key, edge.attr_name))
        incident[edge.value_key].append((edge.entity_key, edge.attr_name))

    current = dict(states)
    for _ in range(depth):
        nxt = {}
        for key in node_keys:
            h = current[key]
            agg = np.zeros(psi.out_dim)
            for other_key, attr_name in incident[key]:
                e_vec = edge_vec_fn(attr_name)
                msg_vec, _ = forward(psi, np.concatenate([current[other_key], e_vec]))
                agg += msg_vec
            out, _ = forward(phi, np.concatenate([h, agg]))
            nxt[key] = out
        current = nxt
    return current


def dump_edges(graph: AttributeGraph) -> str:
    """Edge list as TSV: entity, attr name, value key, msg_id, ts."""
    lines = [
        f"{e.entity_key}\t{e.attr_name}\t{e.value_key}\t{e.msg_id}\t{e.ts!r}"
        for e in graph.edges
    ]
    return "\n".join(lines) + ("\n" if lines else "")
