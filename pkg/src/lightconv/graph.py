"""Block-graph data model, JSON document parser, executor, and cost analyzer.

A graph document is JSON:

    {
      "input_shape": [n, c, h, w],
      "nodes": [{"id": "a", "kind": "conv2d", "params": {...}, "seed": 7}, ...],
      "edges": [["a", "b"], ...]
    }

Graphs are acyclic with a single source (fed by the runtime input) and a
single sink. ``concat``/``add`` nodes take exactly two incoming edges, in
the order the edges appear in the document; every other kind takes one.
Node weights are materialized from the per-node seed at run time; an
optional weights directory of LTB1 files named ``<node id>.<group>.ltb``
overrides individual groups (vector parameters are stored as (1, C, 1, 1)).
An empty node list is the degenerate pass-through graph.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

from .blocks import GRAPH_KINDS, make_block
from .counting import count_macs
from .errors import GraphError, ShapeError
from .ltb import read_tensor
from .tensor import Tensor


@dataclass(frozen=True)
class GraphNode:
    id: str
    kind: str
    params: dict
    seed: int


@dataclass
class BlockGraph:
    """Validated graph with propagated shapes and a fixed evaluation order."""

    input_shape: tuple[int, int, int, int]
    nodes: list[GraphNode]
    edges: list[tuple[str, str]]
    order: list[str] = field(default_factory=list)
    inputs_of: dict[str, list[str]] = field(default_factory=dict)
    output_shapes: dict[str, tuple] = field(default_factory=dict)
    source: str | None = None
    sink: str | None = None

    @property
    def output_shape(self) -> tuple:
        if self.sink is None:
            return self.input_shape
        return self.output_shapes[self.sink]

    def node(self, node_id: str) -> GraphNode:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)


def _positive_shape(raw) -> tuple[int, int, int, int]:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise GraphError(f"input_shape must be a 4-element list, got {raw!r}")
    shape = []
    for d in raw:
        if not isinstance(d, int) or isinstance(d, bool) or d < 1:
            raise GraphError(f"input_shape entries must be positive integers, got {raw!r}")
        shape.append(d)
    return tuple(shape)


def _topological_order(ids, edges):
    incoming = {i: set() for i in ids}
    outgoing = {i: set() for i in ids}
    for src, dst in edges:
        incoming[dst].add(src)
        outgoing[src].add(dst)
    ready = [i for i in ids if not incoming[i]]
    order = []
    pending = {i: set(v) for i, v in incoming.items()}
    while ready:
        node = ready.pop(0)
        order.append(node)
        for nxt in sorted(outgoing[node]):
            pending[nxt].discard(node)
            if not pending[nxt]:
                ready.append(nxt)
    if len(order) != len(ids):
        cycle = sorted(i for i in ids if i not in order)
        raise GraphError(f"cycle involving nodes: {', '.join(cycle)}")
    return order


def parse_graph(document: str) -> BlockGraph:
    """Parse and fully validate a graph document.

    Shape propagation instantiates each node once, so every node's
    preconditions (channel bookkeeping, divisibility, kernel constraints)
    are enforced at parse time with the node id in the error message.
    """
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise GraphError(f"syntax error: {exc}") from exc
    if not isinstance(doc, dict):
        raise GraphError("document must be a JSON object")
    unknown_keys = set(doc) - {"input_shape", "nodes", "edges"}
    if unknown_keys:
        raise GraphError(f"unknown document keys: {sorted(unknown_keys)}")
    if "input_shape" not in doc:
        raise GraphError("missing input_shape")
    input_shape = _positive_shape(doc["input_shape"])

    raw_nodes = doc.get("nodes", [])
    if not isinstance(raw_nodes, list):
        raise GraphError("nodes must be a list")
    nodes = []
    seen = set()
    for entry in raw_nodes:
        if not isinstance(entry, dict):
            raise GraphError(f"node entries must be objects, got {entry!r}")
        node_id = entry.get("id")
        if not isinstance(node_id, str) or not node_id:
            raise GraphError(f"node missing a non-empty string id: {entry!r}")
        if node_id in seen:
            raise GraphError(f"duplicate node id '{node_id}'")
        seen.add(node_id)
        kind = entry.get("kind")
        if kind not in GRAPH_KINDS:
            raise GraphError(f"node '{node_id}': unknown kind {kind!r}")
        params = entry.get("params", {})
        if not isinstance(params, dict):
            raise GraphError(f"node '{node_id}': params must be an object")
        seed = entry.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise GraphError(f"node '{node_id}': seed must be an integer")
        extra = set(entry) - {"id", "kind", "params", "seed"}
        if extra:
            raise GraphError(f"node '{node_id}': unknown keys {sorted(extra)}")
        nodes.append(GraphNode(id=node_id, kind=kind, params=params, seed=seed))

    raw_edges = doc.get("edges", [])
    if not isinstance(raw_edges, list):
        raise GraphError("edges must be a list")
    edges = []
    for entry in raw_edges:
        if not isinstance(entry, (list, tuple)) or len(entry) != 2:
            raise GraphError(f"edges must be [src, dst] pairs, got {entry!r}")
        src, dst = entry
        for endpoint in (src, dst):
            if endpoint not in seen:
                raise GraphError(f"edge references unknown node '{endpoint}'")
        if src == dst:
            raise GraphError(f"self-loop on node '{src}'")
        if (src, dst) in edges:
            raise GraphError(f"duplicate edge {src!r} -> {dst!r}")
        edges.append((src, dst))

    graph = BlockGraph(input_shape=input_shape, nodes=nodes, edges=edges)
    if not nodes:
        if edges:
            raise GraphError("edges present but no nodes")
        return graph

    ids = [n.id for n in nodes]
    inputs_of = {i: [] for i in ids}
    out_degree = {i: 0 for i in ids}
    for src, dst in edges:
        inputs_of[dst].append(src)  # incoming order = document order
        out_degree[src] += 1

    order = _topological_order(ids, edges)  # raises on cycles, naming the nodes

    sources = [i for i in ids if not inputs_of[i]]
    sinks = [i for i in ids if not out_degree[i]]
    if len(sources) != 1:
        raise GraphError(f"graph must have exactly one source, found {sorted(sources)}")
    if len(sinks) != 1:
        raise GraphError(f"graph must have exactly one sink, found {sorted(sinks)}")

    by_id = {n.id: n for n in nodes}
    shapes = {}
    for node_id in order:
        node = by_id[node_id]
        arity = 2 if node.kind in ("concat", "add") else 1
        preds = inputs_of[node_id]
        if not preds:
            in_shapes = [input_shape]
        else:
            in_shapes = [shapes[p] for p in preds]
        if len(in_shapes) != arity:
            raise GraphError(
                f"node '{node_id}': kind '{node.kind}' needs {arity} input(s), "
                f"has {len(in_shapes)}"
            )
        try:
            block = make_block(node.kind, in_shapes, node.params, node.seed)
            shapes[node_id] = block.output_shape()
        except (ValueError, ShapeError) as exc:
            raise GraphError(f"node '{node_id}': {exc}") from exc

    graph.order = order
    graph.inputs_of = inputs_of
    graph.output_shapes = shapes
    graph.source = sources[0]
    graph.sink = sinks[0]
    return graph


def load_graph(path) -> BlockGraph:
    return parse_graph(Path(path).read_text(encoding="utf-8"))


def _materialize(graph: BlockGraph, node: GraphNode, in_shapes, weights_dir):
    block = make_block(node.kind, in_shapes, node.params, node.seed)
    if weights_dir is not None:
        base = Path(weights_dir)
        for group in block.param_groups():
            candidate = base / f"{node.id}.{group}.ltb"
            if candidate.exists():
                block.set_param(group, read_tensor(candidate).data)
    return block


def run_graph(graph: BlockGraph, input_tensor: Tensor, weights_dir=None) -> Tensor:
    """Evaluate the graph in topological order; deterministic given seeds."""
    if input_tensor.shape != graph.input_shape:
        raise ShapeError(
            f"input shaped {input_tensor.shape}, graph declares {graph.input_shape}"
        )
    if not graph.nodes:
        return input_tensor
    by_id = {n.id: n for n in graph.nodes}
    values: dict[str, Tensor] = {}
    for node_id in graph.order:
        node = by_id[node_id]
        preds = graph.inputs_of[node_id]
        inputs = [values[p] for p in preds] if preds else [input_tensor]
        block = _materialize(graph, node, [t.shape for t in inputs], weights_dir)
        values[node_id] = block.forward(*inputs)
    return values[graph.sink]


@dataclass(frozen=True)
class NodeCost:
    id: str
    kind: str
    output_shape: tuple
    params: int
    bias_params: int
    macs: int

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind,
            "output_shape": list(self.output_shape),
            "params": self.params,
            "bias_params": self.bias_params,
            "macs": self.macs,
        }


@dataclass
class GraphCostReport:
    """Per-node exact parameter/MAC counts plus their totals.

    Params come from enumerating the instantiated weight arrays; MACs from
    an instrumented forward pass at batch size 1 (counts are per sample).
    """

    entries: list[NodeCost]
    total_params: int
    total_bias_params: int
    total_macs: int

    def to_dict(self) -> dict:
        return {
            "nodes": [e.to_dict() for e in self.entries],
            "totals": {
                "params": self.total_params,
                "bias_params": self.total_bias_params,
                "macs": self.total_macs,
            },
            "mac_convention":
                "one multiply-accumulate per forward multiply, batch size 1; "
                "bias parameters reported separately",
        }

    def to_table(self) -> str:
        header = f"{'id':<14}{'kind':<18}{'output_shape':<22}{'params':>10}{'bias':>8}{'macs':>14}"
        lines = [header, "-" * len(header)]
        for e in self.entries:
            shape = "x".join(str(d) for d in e.output_shape)
            lines.append(
                f"{e.id:<14}{e.kind:<18}{shape:<22}{e.params:>10}{e.bias_params:>8}{e.macs:>14}"
            )
        lines.append("-" * len(header))
        lines.append(
            f"{'total':<14}{'':<18}{'':<22}{self.total_params:>10}"
            f"{self.total_bias_params:>8}{self.total_macs:>14}"
        )
        return "\n".join(lines)


def analyze_graph(graph: BlockGraph, weights_dir=None) -> GraphCostReport:
    """Count exact per-node parameters and MACs; totals are plain sums."""
    by_id = {n.id: n for n in graph.nodes}
    entries = []
    for node_id in graph.order:
        node = by_id[node_id]
        preds = graph.inputs_of[node_id]
        in_shapes = [graph.output_shapes[p] for p in preds] if preds else [graph.input_shape]
        # batch size 1 for costing: parameter and MAC counts are per sample
        in_shapes = [(1,) + tuple(s[1:]) for s in in_shapes]
        block = _materialize(graph, node, in_shapes, weights_dir)
        params, bias_params, macs = block.cost()
        out_shape = graph.output_shapes[node_id]
        entries.append(NodeCost(
            id=node.id, kind=node.kind, output_shape=out_shape,
            params=params, bias_params=bias_params, macs=macs,
        ))
    return GraphCostReport(
        entries=entries,
        total_params=sum(e.params for e in entries),
        total_bias_params=sum(e.bias_params for e in entries),
        total_macs=sum(e.macs for e in entries),
    )
