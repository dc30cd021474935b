"""Slot-level passenger flow simulation.

Demand is generated per 15-minute slot as an origin-destination batch and
assigned to precomputed shortest routes as a fluid. Station entry, station
use (entries, exits, transfers) and section throughput are capped by
capacity; whatever does not fit waits at a station as stranded passengers,
part of which dissipates out of the station each slot.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

from .topology import DEFAULT_TRANSFER_PENALTY, Network, all_routes

SLOTS_PER_DAY = 64
SLOT_HOURS = 0.25
DAY_START_HOUR = 6.5


@dataclass(frozen=True)
class DemandProfile:
    """Time-of-day demand shape.

    ``base_rate`` is persons/hour for a pair of unit-attraction stations off-peak.
    Peak centres and widths are in time-of-day slots (slot 0 is 06:30).
    """

    base_rate: float = 2.0
    peak_slots: tuple[float, float] = (6.0, 46.0)
    peak_widths: tuple[float, float] = (3.0, 4.0)
    peak_gains: tuple[float, float] = (4.0, 3.0)
    noise_sigma: float = 0.25
    attraction: Mapping[str, float] = field(
        default_factory=lambda: {"large": 3.0, "medium": 1.5, "small": 1.0}
    )

    def __post_init__(self):
        if not self.base_rate > 0:
            raise ValueError("base_rate must be > 0")
        if len(self.peak_slots) != len(self.peak_widths) or len(self.peak_slots) != len(self.peak_gains):
            raise ValueError("peak_slots, peak_widths and peak_gains must have equal length")
        if any(not w > 0 for w in self.peak_widths):
            raise ValueError("peak widths must be > 0")
        if any(g < 0 for g in self.peak_gains):
            raise ValueError("peak gains must be >= 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if any(v < 0 for v in self.attraction.values()):
            raise ValueError("attraction weights must be >= 0")

    def shape(self, slot_of_day: float) -> float:
        """Multiplier g(s) = 1 + sum of Gaussian peak bumps."""
        g = 1.0
        for c, w, a in zip(self.peak_slots, self.peak_widths, self.peak_gains):
            g += a * math.exp(-((slot_of_day - c) ** 2) / (2.0 * w * w))
        return g

    def to_dict(self) -> dict:
        return {
            "base_rate": self.base_rate,
            "peak_slots": list(self.peak_slots),
            "peak_widths": list(self.peak_widths),
            "peak_gains": list(self.peak_gains),
            "noise_sigma": self.noise_sigma,
            "attraction": dict(self.attraction),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DemandProfile":
        kw = dict(d)
        for key in ("peak_slots", "peak_widths", "peak_gains"):
            if key in kw:
                kw[key] = tuple(float(x) for x in kw[key])
        return cls(**kw)


@dataclass(frozen=True)
class ODBatch:
    """Demand for one slot. ``values[k]`` is persons/hour for ``pairs[k]``."""

    slot_index: int
    pairs: tuple[tuple[str, str], ...]
    values: np.ndarray

    @property
    def demand(self) -> dict[tuple[str, str], float]:
        return dict(zip(self.pairs, self.values.tolist()))

    @classmethod
    def from_demand(cls, slot_index: int, demand: Mapping[tuple[str, str], float], net: Network) -> "ODBatch":
        pairs = station_pairs(net)
        for (o, d), q in demand.items():
            if o == d:
                raise ValueError(f"demand pair has origin == destination ({o})")
            if q < 0:
                raise ValueError(f"negative demand for ({o}, {d})")
        values = np.array([float(demand.get(p, 0.0)) for p in pairs])
        return cls(slot_index, pairs, values)


@dataclass
class FlowSnapshot:
    """Flows in one slot: PS/PI in persons/hour, PW in persons waiting.

    ``attempted``, ``admitted`` and ``dissipated`` are per-station person counts for
    the slot; admitted is net of passengers pushed back to a station mid-route.
    """

    slot_index: int
    PS: dict[str, float]
    PW: dict[str, float]
    PI: dict[str, float]
    attempted: dict[str, float] = field(default_factory=dict)
    admitted: dict[str, float] = field(default_factory=dict)
    dissipated: dict[str, float] = field(default_factory=dict)


def station_pairs(net: Network) -> tuple[tuple[str, str], ...]:
    ids = list(net.stations)
    return tuple((o, d) for o in ids for d in ids if o != d)


class ODSeries(Sequence[ODBatch]):
    """Lazily generated batches; any batch can be drawn independently of the others."""

    def __init__(self, net: Network, profile: DemandProfile, days: int, seed: int):
        if days < 1:
            raise ValueError("days must be >= 1")
        self.profile = profile
        self.days = days
        self.seed = int(seed)
        self.pairs = station_pairs(net)
        attr = np.array([profile.attraction[net.stations[s].capacity_class] for s in net.stations])
        idx = {s: k for k, s in enumerate(net.stations)}
        o = np.array([idx[p[0]] for p in self.pairs], dtype=np.intp)
        d = np.array([idx[p[1]] for p in self.pairs], dtype=np.intp)
        self._pair_scale = profile.base_rate * attr[o] * attr[d]

    def __len__(self) -> int:
        return self.days * SLOTS_PER_DAY

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[k] for k in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        return ODBatch(i, self.pairs, self._values(i))

    def __iter__(self) -> Iterator[ODBatch]:
        for i in range(len(self)):
            yield self[i]

    def _values(self, slot_index: int) -> np.ndarray:
        g = self.profile.shape(slot_index % SLOTS_PER_DAY)
        values = self._pair_scale * g
        sigma = self.profile.noise_sigma
        if sigma > 0:
            rng = np.random.default_rng([self.seed, slot_index])
            z = rng.standard_normal(len(values))
            values = values * np.exp(sigma * z - 0.5 * sigma * sigma)
        return values


def generate_od(net: Network, profile: DemandProfile, days: int, seed: int) -> ODSeries:
    """``days * 64`` OD batches with mean-one lognormal noise per (pair, slot).

    Each slot draws from its own generator seeded by ``(seed, slot_index)``.
    """
    return ODSeries(net, profile, days, seed)


class FlowAssigner:
    """Precomputed routing plan for a network, applied one slot at a time."""

    def __init__(self, net: Network, transfer_penalty: float = DEFAULT_TRANSFER_PENALTY):
        self.net = net
        self.transfer_penalty = transfer_penalty
        self.station_ids = list(net.stations)
        self.section_ids = list(net.sections)
        st_idx = {s: k for k, s in enumerate(self.station_ids)}
        sec_idx = {s: k for k, s in enumerate(self.section_ids)}
        self.pairs = station_pairs(net)
        self.n_st = len(self.station_ids)
        self.n_sec = len(self.section_ids)
        self.cs = np.array([net.stations[s].cs for s in self.station_ids])
        self.cw = np.array([net.stations[s].cw for s in self.station_ids])
        self.ci = np.array([net.sections[s].ci for s in self.section_ids])
        self.origin = np.array([st_idx[o] for o, _ in self.pairs], dtype=np.intp)
        self.dests_per_origin = np.bincount(self.origin, minlength=self.n_st)

        routes = all_routes(net, transfer_penalty) if len(net.stations) > 1 else {}
        max_len = max((len(r) for r in routes.values()), default=0)
        hop_pairs = [[] for _ in range(max_len)]
        hop_sec = [[] for _ in range(max_len)]
        hop_from = [[] for _ in range(max_len)]
        hop_to = [[] for _ in range(max_len)]
        hop_uses = [[] for _ in range(max_len)]
        for p, pair in enumerate(self.pairs):
            route = routes[pair]
            for k, (sid, lid) in enumerate(route):
                sec = net.sections[sid]
                last = k == len(route) - 1
                # the arrival station is used by alighting or line-changing riders only
                uses = last or route[k + 1][1] != lid
                hop_pairs[k].append(p)
                hop_sec[k].append(sec_idx[sid])
                hop_from[k].append(st_idx[sec.from_station])
                hop_to[k].append(st_idx[sec.to_station])
                hop_uses[k].append(uses)
        self.hops = [
            (
                np.array(hop_pairs[k], dtype=np.intp),
                np.array(hop_sec[k], dtype=np.intp),
                np.array(hop_from[k], dtype=np.intp),
                np.array(hop_to[k], dtype=np.intp),
                np.array(hop_uses[k], dtype=bool),
            )
            for k in range(max_len)
        ]

    def carry_array(self, carryover: Mapping[str, float] | None) -> np.ndarray:
        arr = np.zeros(self.n_st)
        if carryover:
            idx = {s: k for k, s in enumerate(self.station_ids)}
            for s, v in carryover.items():
                if v < 0:
                    raise ValueError(f"carryover for {s} must be >= 0")
                arr[idx[s]] = v
        return arr

    def step(self, batch: ODBatch, carry: np.ndarray) -> tuple[FlowSnapshot, np.ndarray]:
        if batch.pairs != self.pairs and tuple(batch.pairs) != self.pairs:
            raise ValueError("batch pairs do not match the network")
        dt = SLOT_HOURS
        fresh_pair = np.asarray(batch.values, dtype=float) * dt
        fresh = np.bincount(self.origin, fresh_pair, minlength=self.n_st)
        attempted = carry + fresh
        admitted = np.minimum(attempted, self.cs * dt)
        stranded = attempted - admitted

        # stranded passengers share the destination mix of this slot's fresh demand
        with np.errstate(divide="ignore", invalid="ignore"):
            share = np.where(
                fresh[self.origin] > 0,
                fresh_pair / fresh[self.origin],
                1.0 / self.dests_per_origin[self.origin],
            )
        flow = admitted[self.origin] * share

        st_used = admitted.copy()
        sec_used = np.zeros(self.n_sec)
        cs_cap = self.cs * dt
        ci_cap = self.ci * dt
        pushback = np.zeros(self.n_st)
        pushback_origin = np.zeros(self.n_st)

        for pairs, sec, frm, to, uses in self.hops:
            f = flow[pairs]
            d_sec = np.bincount(sec, f, minlength=self.n_sec)
            rem_sec = np.maximum(ci_cap - sec_used, 0.0)
            s_sec = _scale(d_sec, rem_sec)
            f1 = f * s_sec[sec]

            to_u = to[uses]
            d_st = np.bincount(to_u, f1[uses], minlength=self.n_st)
            rem_st = np.maximum(cs_cap - st_used, 0.0)
            s_st = _scale(d_st, rem_st)
            f2 = f1.copy()
            f2[uses] *= s_st[to_u]

            sec_used += np.bincount(sec, f2, minlength=self.n_sec)
            st_used += np.bincount(to_u, f2[uses], minlength=self.n_st)
            lost = f - f2
            pushback += np.bincount(frm, lost, minlength=self.n_st)
            pushback_origin += np.bincount(self.origin[pairs], lost, minlength=self.n_st)
            flow[pairs] = f2

        stranded = stranded + pushback
        dissipated = np.minimum(stranded, self.cw * dt)
        new_carry = stranded - dissipated
        admitted_net = admitted - pushback_origin

        sts, secs = self.station_ids, self.section_ids
        snap = FlowSnapshot(
            slot_index=batch.slot_index,
            PS=dict(zip(sts, (np.minimum(st_used, cs_cap) / dt).tolist())),
            PW=dict(zip(sts, new_carry.tolist())),
            PI=dict(zip(secs, (np.minimum(sec_used, ci_cap) / dt).tolist())),
            attempted=dict(zip(sts, attempted.tolist())),
            admitted=dict(zip(sts, admitted_net.tolist())),
            dissipated=dict(zip(sts, dissipated.tolist())),
        )
        return snap, new_carry


def _scale(demand: np.ndarray, remaining: np.ndarray) -> np.ndarray:
    out = np.ones_like(demand)
    over = demand > remaining
    out[over] = remaining[over] / demand[over]
    return out


_ASSIGNERS: dict[tuple[int, float], FlowAssigner] = {}


def _assigner(net: Network, transfer_penalty: float) -> FlowAssigner:
    key = (id(net), float(transfer_penalty))
    a = _ASSIGNERS.get(key)
    if a is None or a.net is not net:
        a = FlowAssigner(net, transfer_penalty)
        _ASSIGNERS[key] = a
    return a


def assign_flows(
    net: Network,
    batch: ODBatch,
    carryover: Mapping[str, float] | None = None,
    transfer_penalty: float = DEFAULT_TRANSFER_PENALTY,
) -> tuple[FlowSnapshot, dict[str, float]]:
    """Assign one slot of demand; returns the snapshot and the stranded carryover."""
    a = _assigner(net, transfer_penalty)
    snap, carry = a.step(batch, a.carry_array(carryover))
    return snap, dict(zip(a.station_ids, carry.tolist()))


def run_simulation(
    net: Network,
    profile: DemandProfile,
    days: int,
    seed: int,
    transfer_penalty: float = DEFAULT_TRANSFER_PENALTY,
    od: Sequence[ODBatch] | None = None,
) -> list[FlowSnapshot]:
    """Fold ``assign_flows`` over all slots; carryover is cleared at the start of each day.

    ``od`` overrides the generated demand (used for injected test demand).
    """
    batches = od if od is not None else generate_od(net, profile, days, seed)
    a = _assigner(net, transfer_penalty)
    carry = np.zeros(a.n_st)
    out = []
    for batch in batches:
        if batch.slot_index % SLOTS_PER_DAY == 0:
            carry = np.zeros(a.n_st)
        snap, carry = a.step(batch, carry)
        out.append(snap)
    return out


SNAPSHOT_HEADER = ["slot", "kind", "id", "flow", "stranded"]


def write_snapshots_csv(snapshots: Sequence[FlowSnapshot], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SNAPSHOT_HEADER)
        for snap in snapshots:
            for sid, ps in snap.PS.items():
                w.writerow([snap.slot_index, "station", sid, f"{ps:.6f}", f"{snap.PW[sid]:.6f}"])
            for sid, pi in snap.PI.items():
                w.writerow([snap.slot_index, "section", sid, f"{pi:.6f}", ""])


def read_snapshots_csv(path: str | Path) -> list[FlowSnapshot]:
    by_slot: dict[int, FlowSnapshot] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != SNAPSHOT_HEADER:
            raise ValueError(f"{path}: expected header {','.join(SNAPSHOT_HEADER)}")
        for row in reader:
            slot, kind, eid, flow, stranded = row
            snap = by_slot.get(int(slot))
            if snap is None:
                snap = by_slot[int(slot)] = FlowSnapshot(int(slot), {}, {}, {})
            if kind == "station":
                snap.PS[eid] = float(flow)
                snap.PW[eid] = float(stranded)
            elif kind == "section":
                snap.PI[eid] = float(flow)
            else:
                raise ValueError(f"{path}: unknown entity kind {kind!r}")
    return [by_slot[k] for k in sorted(by_slot)]
