"""Topology-derived DAG for risk prediction.

Feature nodes (SS, SW per station; SI per section, one copy per input lag)
feed station and section risk nodes; those feed the risk node of every line
they belong to, and all line risk nodes feed the single global node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter
from typing import Mapping

from ..topology import Network

LEVELS = ("feature", "station_risk", "section_risk", "line_risk", "global_risk")
GLOBAL_NODE = "RN"


def feature_node(kind: str, entity: str, lag: int = 0) -> str:
    return f"{kind}:{entity}:t{lag}"


def risk_node(kind: str, entity: str | None = None) -> str:
    return GLOBAL_NODE if kind == "RN" else f"{kind}:{entity}"


@dataclass(frozen=True)
class NodeInfo:
    level: str
    lag: int | None = None  # 0 for time t, 1 for t - dt; None for risk nodes
    kind: str = ""
    entity: str | None = None


@dataclass(frozen=True)
class BNStructure:
    nodes: Mapping[str, NodeInfo]
    parents: Mapping[str, tuple[str, ...]]
    _order: tuple[str, ...] = field(default=(), init=False, repr=False, compare=False)

    def __post_init__(self):
        parents = {n: tuple(self.parents.get(n, ())) for n in self.nodes}
        object.__setattr__(self, "parents", parents)
        for n, ps in parents.items():
            for p in ps:
                if p not in self.nodes:
                    raise ValueError(f"parent {p!r} of {n!r} is not a node")
        try:
            order = tuple(TopologicalSorter(parents).static_order())
        except CycleError as exc:
            raise ValueError(f"structure has a cycle: {exc.args[1]}") from exc
        object.__setattr__(self, "_order", order)

    @property
    def roots(self) -> list[str]:
        return [n for n in self.nodes if not self.parents[n]]

    @property
    def non_roots(self) -> list[str]:
        return [n for n in self.topological_order() if self.parents[n]]

    def topological_order(self) -> tuple[str, ...]:
        return self._order

    def children(self, node: str) -> list[str]:
        return [n for n, ps in self.parents.items() if node in ps]

    def nodes_at(self, level: str) -> list[str]:
        return [n for n, info in self.nodes.items() if info.level == level]

    def to_dict(self) -> dict:
        return {
            "nodes": [
                {"id": n, "level": i.level, "lag": i.lag, "kind": i.kind, "entity": i.entity}
                for n, i in self.nodes.items()
            ],
            "parents": {n: list(ps) for n, ps in self.parents.items() if ps},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "BNStructure":
        nodes = {
            x["id"]: NodeInfo(level=x["level"], lag=x.get("lag"), kind=x.get("kind", ""), entity=x.get("entity"))
            for x in d["nodes"]
        }
        return cls(nodes, {n: tuple(ps) for n, ps in d.get("parents", {}).items()})


def build_structure(net: Network, lags: int = 1) -> BNStructure:
    """DAG for GBN1 (``lags=1``) or GBN2 (``lags=2``, features also at t - dt)."""
    if lags not in (1, 2):
        raise ValueError("lags must be 1 or 2")
    nodes: dict[str, NodeInfo] = {}
    parents: dict[str, tuple[str, ...]] = {}

    for lag in range(lags):
        for sid in net.stations:
            for kind in ("SS", "SW"):
                nodes[feature_node(kind, sid, lag)] = NodeInfo("feature", lag, kind, sid)
        for jid in net.sections:
            nodes[feature_node("SI", jid, lag)] = NodeInfo("feature", lag, "SI", jid)

    for sid in net.stations:
        n = risk_node("RS", sid)
        nodes[n] = NodeInfo("station_risk", None, "RS", sid)
        parents[n] = tuple(feature_node(k, sid, lag) for lag in range(lags) for k in ("SS", "SW"))
    for jid in net.sections:
        n = risk_node("RI", jid)
        nodes[n] = NodeInfo("section_risk", None, "RI", jid)
        parents[n] = tuple(feature_node("SI", jid, lag) for lag in range(lags))

    for lid in net.lines:
        n = risk_node("RL", lid)
        nodes[n] = NodeInfo("line_risk", None, "RL", lid)
        parents[n] = tuple(
            [risk_node("RS", s) for s in net.line_stations(lid)]
            + [risk_node("RI", j) for j in net.line_sections(lid)]
        )

    nodes[GLOBAL_NODE] = NodeInfo("global_risk", None, "RN", None)
    parents[GLOBAL_NODE] = tuple(risk_node("RL", lid) for lid in net.lines)
    return BNStructure(nodes, parents)
