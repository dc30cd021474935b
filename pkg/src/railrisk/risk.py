"""Saturations, consequence weights and the station/section/line/network risk hierarchy."""

from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .simulate import FlowSnapshot
from .topology import Network


@dataclass(frozen=True)
class LogisticParams:
    a: float = 6.0
    b: float = 7.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("logistic slope a must be > 0")


@dataclass(frozen=True)
class WeightRule:
    """Tiered consequence weights: ``weights[k]`` where k = #thresholds <= flow/capacity."""

    thresholds: tuple[float, ...] = (0.5, 0.8)
    weights: tuple[float, ...] = (1.0, 2.0, 4.0)

    def __post_init__(self):
        th, w = tuple(self.thresholds), tuple(self.weights)
        object.__setattr__(self, "thresholds", th)
        object.__setattr__(self, "weights", w)
        if len(w) != len(th) + 1:
            raise ValueError("need exactly one more weight than thresholds")
        if any(not 0 < t <= 1 for t in th) or any(b <= a for a, b in zip(th, th[1:])):
            raise ValueError("thresholds must be strictly ascending in (0, 1]")
        if any(x <= 0 for x in w) or any(b <= a for a, b in zip(w, w[1:])):
            raise ValueError("weights must be positive and strictly ascending")


@dataclass
class SaturationSnapshot:
    slot_index: int
    SS: dict[str, float]
    SW: dict[str, float]
    SI: dict[str, float]


@dataclass
class RiskSnapshot:
    slot_index: int
    RS: dict[str, float]
    RI: dict[str, float]
    RL: dict[str, float] = field(default_factory=dict)
    RN: float = 0.0


def logistic(x: float, params: LogisticParams = LogisticParams()) -> float:
    """1 / (1 + exp(-a*x + b)), evaluated without overflow for any finite x."""
    z = params.a * x - params.b
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def compute_saturations(flow: FlowSnapshot, net: Network) -> SaturationSnapshot:
    st, sec = net.stations, net.sections
    return SaturationSnapshot(
        slot_index=flow.slot_index,
        SS={i: flow.PS[i] / st[i].cs for i in flow.PS},
        SW={i: flow.PW[i] / st[i].cw for i in flow.PW},
        SI={j: flow.PI[j] / sec[j].ci for j in flow.PI},
    )


def consequence_weight(flow_value: float, capacity: float, rule: WeightRule = WeightRule()) -> float:
    if not capacity > 0:
        raise ValueError("capacity must be > 0")
    k = bisect.bisect_right(rule.thresholds, flow_value / capacity)
    return rule.weights[k]


def line_members(net: Network) -> dict[str, tuple[list[str], list[str]]]:
    """line id -> (member stations, member sections)."""
    return {lid: (net.line_stations(lid), net.line_sections(lid)) for lid in net.lines}


def assess(
    flow: FlowSnapshot,
    net: Network,
    rule: WeightRule = WeightRule(),
    params: LogisticParams = LogisticParams(),
    sw_scale: float = 1.0,
    members: dict | None = None,
) -> RiskSnapshot:
    """Risk values for one slot.

    ``sw_scale`` multiplies the dissipation time before the logistic (1 = literal).
    The stranded channel is weighted against one hour of dissipation capacity.
    """
    st, sec = net.stations, net.sections
    rs: dict[str, float] = {}
    for i, s in st.items():
        ps, pw = flow.PS[i], flow.PW[i]
        w1 = consequence_weight(ps, s.cs, rule)
        w2 = consequence_weight(pw, s.cw * 1.0, rule)
        rs[i] = w1 * logistic(ps / s.cs, params) + w2 * logistic(sw_scale * pw / s.cw, params)
    ri: dict[str, float] = {}
    for j, e in sec.items():
        pi = flow.PI[j]
        ri[j] = consequence_weight(pi, e.ci, rule) * logistic(pi / e.ci, params)

    if members is None:
        members = line_members(net)
    rl = {lid: math.fsum(rs[i] for i in m_st) + math.fsum(ri[j] for j in m_sec) for lid, (m_st, m_sec) in members.items()}
    rn = math.fsum(rs.values()) + math.fsum(ri.values())
    return RiskSnapshot(flow.slot_index, rs, ri, rl, rn)


def assess_series(
    flows: Iterable[FlowSnapshot],
    net: Network,
    rule: WeightRule = WeightRule(),
    params: LogisticParams = LogisticParams(),
    sw_scale: float = 1.0,
) -> list[RiskSnapshot]:
    members = line_members(net)
    return [assess(f, net, rule, params, sw_scale, members) for f in flows]


def overcount_mass(risk: RiskSnapshot, net: Network) -> float:
    """Risk of entities on more than one line, times the extra times line sums count them."""
    extra = 0.0
    for i, s in net.stations.items():
        n = len(s.line_ids)
        if n > 1:
            extra += (n - 1) * risk.RS[i]
    for j, lids in net.section_lines().items():
        if len(lids) > 1:
            extra += (len(lids) - 1) * risk.RI[j]
    return extra


RISK_HEADER = ["slot", "kind", "id", "risk"]


def write_risks_csv(risks: Sequence[RiskSnapshot], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RISK_HEADER)
        for r in risks:
            for i, v in r.RS.items():
                w.writerow([r.slot_index, "station", i, f"{v:.6f}"])
            for j, v in r.RI.items():
                w.writerow([r.slot_index, "section", j, f"{v:.6f}"])
            for k, v in r.RL.items():
                w.writerow([r.slot_index, "line", k, f"{v:.6f}"])
            w.writerow([r.slot_index, "global", "RN", f"{r.RN:.6f}"])


def read_risks_csv(path: str | Path) -> list[RiskSnapshot]:
    by_slot: dict[int, RiskSnapshot] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != RISK_HEADER:
            raise ValueError(f"{path}: expected header {','.join(RISK_HEADER)}")
        for slot, kind, eid, val in reader:
            r = by_slot.setdefault(int(slot), RiskSnapshot(int(slot), {}, {}, {}, 0.0))
            v = float(val)
            if kind == "station":
                r.RS[eid] = v
            elif kind == "section":
                r.RI[eid] = v
            elif kind == "line":
                r.RL[eid] = v
            elif kind == "global":
                r.RN = v
            else:
                raise ValueError(f"{path}: unknown entity kind {kind!r}")
    return [by_slot[k] for k in sorted(by_slot)]
