"""Rail network graph: stations, directed sections, lines, and routing."""

from __future__ import annotations

import heapq
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

CLASS_CAPACITY = {"large": 21600.0, "medium": 14400.0, "small": 7200.0}
CW_FRACTION = 0.25
DEFAULT_CI = 21600.0
DEFAULT_TRANSFER_PENALTY = 3.0

_ID_RE = re.compile(r"^[A-Za-z0-9_]+$")


class NetworkError(ValueError):
    """Raised when a topology file cannot be parsed or fails validation."""

    def __init__(self, message: str, violations: list[str] | None = None):
        self.violations = list(violations or [])
        if self.violations:
            message = message + ":\n  " + "\n  ".join(self.violations)
        super().__init__(message)


class NoPathError(RuntimeError):
    pass


@dataclass(frozen=True)
class Station:
    id: str
    name: str
    capacity_class: str
    cs: float
    cw: float
    line_ids: frozenset[str]

    @property
    def is_transfer(self) -> bool:
        return len(self.line_ids) >= 2


@dataclass(frozen=True)
class Section:
    id: str
    from_station: str
    to_station: str
    line_id: str
    ci: float


@dataclass(frozen=True)
class Line:
    id: str
    name: str
    station_sequence: tuple[str, ...]

    def consecutive_pairs(self) -> list[tuple[str, str]]:
        seq = self.station_sequence
        return [(seq[k], seq[k + 1]) for k in range(len(seq) - 1)]


@dataclass(frozen=True)
class Network:
    """Immutable network. Dict iteration order is the sorted id order."""

    stations: Mapping[str, Station]
    sections: Mapping[str, Section]
    lines: Mapping[str, Line]
    _pair_index: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "stations", dict(sorted(self.stations.items())))
        object.__setattr__(self, "sections", dict(sorted(self.sections.items())))
        object.__setattr__(self, "lines", dict(sorted(self.lines.items())))
        index = {}
        for sec in self.sections.values():
            index.setdefault((sec.from_station, sec.to_station), sec.id)
        object.__setattr__(self, "_pair_index", index)

    @property
    def n_stations(self) -> int:
        return len(self.stations)

    @property
    def n_sections(self) -> int:
        return len(self.sections)

    def section_between(self, u: str, v: str) -> str | None:
        return self._pair_index.get((u, v))

    def line_stations(self, line_id: str) -> list[str]:
        """Distinct stations of a line, in sequence order."""
        seen: dict[str, None] = {}
        for s in self.lines[line_id].station_sequence:
            seen.setdefault(s, None)
        return list(seen)

    def line_sections(self, line_id: str) -> list[str]:
        """Directed sections belonging to a line (both directions of every consecutive pair).

        A section shared by two lines' station sequences belongs to both.
        """
        out: dict[str, None] = {}
        for u, v in self.lines[line_id].consecutive_pairs():
            for a, b in ((u, v), (v, u)):
                sid = self.section_between(a, b)
                if sid is not None:
                    out.setdefault(sid, None)
        return list(out)

    def section_lines(self) -> dict[str, list[str]]:
        """Map section id -> sorted list of lines it belongs to."""
        result: dict[str, list[str]] = {sid: [] for sid in self.sections}
        for lid in self.lines:
            for sid in self.line_sections(lid):
                result[sid].append(lid)
        return result

    def to_dict(self) -> dict:
        return {
            "stations": [
                {
                    "id": s.id,
                    "name": s.name,
                    "class": s.capacity_class,
                    "cs": s.cs,
                    "cw": s.cw,
                    "lines": sorted(s.line_ids),
                }
                for s in self.stations.values()
            ],
            "sections": [
                {"id": s.id, "from": s.from_station, "to": s.to_station, "line": s.line_id, "ci": s.ci}
                for s in self.sections.values()
            ],
            "lines": [
                {"id": ln.id, "name": ln.name, "stations": list(ln.station_sequence)}
                for ln in self.lines.values()
            ],
        }


def network_from_dict(doc: Mapping) -> Network:
    """Build a Network from the topology JSON document, filling capacity defaults.

    Raises NetworkError on schema problems or invariant violations.
    """
    problems: list[str] = []
    for key in ("stations", "sections", "lines"):
        if key not in doc or not isinstance(doc[key], list):
            problems.append(f"top-level key {key!r} missing or not an array")
    if problems:
        raise NetworkError("malformed topology", problems)

    stations: dict[str, Station] = {}
    for raw in doc["stations"]:
        try:
            cls = raw.get("class", "small")
            if cls not in CLASS_CAPACITY:
                problems.append(f"station {raw.get('id')!r}: unknown class {cls!r}")
                cls_cap = CLASS_CAPACITY["small"]
            else:
                cls_cap = CLASS_CAPACITY[cls]
            cs = float(raw.get("cs", cls_cap))
            cw = float(raw.get("cw", CW_FRACTION * cs))
            st = Station(
                id=str(raw["id"]),
                name=str(raw.get("name", raw["id"])),
                capacity_class=cls,
                cs=cs,
                cw=cw,
                line_ids=frozenset(str(x) for x in raw.get("lines", [])),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            problems.append(f"station entry {raw!r}: {exc}")
            continue
        if st.id in stations:
            problems.append(f"duplicate station id {st.id!r}")
        stations[st.id] = st

    sections: dict[str, Section] = {}
    for raw in doc["sections"]:
        try:
            sec = Section(
                id=str(raw["id"]),
                from_station=str(raw["from"]),
                to_station=str(raw["to"]),
                line_id=str(raw["line"]),
                ci=float(raw.get("ci", DEFAULT_CI)),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            problems.append(f"section entry {raw!r}: {exc}")
            continue
        if sec.id in sections:
            problems.append(f"duplicate section id {sec.id!r}")
        sections[sec.id] = sec

    lines: dict[str, Line] = {}
    for raw in doc["lines"]:
        try:
            ln = Line(
                id=str(raw["id"]),
                name=str(raw.get("name", raw["id"])),
                station_sequence=tuple(str(x) for x in raw["stations"]),
            )
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            problems.append(f"line entry {raw!r}: {exc}")
            continue
        if ln.id in lines:
            problems.append(f"duplicate line id {ln.id!r}")
        lines[ln.id] = ln

    if problems:
        raise NetworkError("malformed topology", problems)
    net = Network(stations=stations, sections=sections, lines=lines)
    violations = validate_network(net)
    if violations:
        raise NetworkError("invalid topology", violations)
    return net


def load_network(path: str | Path) -> Network:
    try:
        text = Path(path).read_text(encoding="utf-8")
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise NetworkError(f"cannot parse {path}: top level must be an object")
    return network_from_dict(doc)


def dump_network(net: Network, path: str | Path) -> None:
    Path(path).write_text(json.dumps(net.to_dict(), indent=2) + "\n", encoding="utf-8")


def validate_network(net: Network) -> list[str]:
    """Return one human-readable description per violated invariant (empty if valid)."""
    v: list[str] = []
    for kind, ids in (("station", net.stations), ("section", net.sections), ("line", net.lines)):
        for eid in ids:
            if not _ID_RE.match(eid):
                v.append(f"{kind} id {eid!r} does not match [A-Za-z0-9_]+")

    for st in net.stations.values():
        if not st.cs > 0:
            v.append(f"station {st.id}: CS must be > 0 (got {st.cs})")
        if not st.cw > 0:
            v.append(f"station {st.id}: CW must be > 0 (got {st.cw})")
        if not st.line_ids:
            v.append(f"station {st.id}: line_ids must be non-empty")
        for lid in sorted(st.line_ids):
            if lid not in net.lines:
                v.append(f"station {st.id}: references unknown line {lid!r}")
            elif st.id not in net.lines[lid].station_sequence:
                v.append(f"station {st.id}: lists line {lid} but is not on its station sequence")

    for sec in net.sections.values():
        if sec.from_station not in net.stations:
            v.append(f"section {sec.id}: from station {sec.from_station!r} does not exist")
        if sec.to_station not in net.stations:
            v.append(f"section {sec.id}: to station {sec.to_station!r} does not exist")
        if sec.from_station == sec.to_station:
            v.append(f"section {sec.id}: from_station equals to_station")
        if not sec.ci > 0:
            v.append(f"section {sec.id}: CI must be > 0 (got {sec.ci})")
        line = net.lines.get(sec.line_id)
        if line is None:
            v.append(f"section {sec.id}: references unknown line {sec.line_id!r}")
        else:
            pairs = line.consecutive_pairs()
            if (sec.from_station, sec.to_station) not in pairs and (sec.to_station, sec.from_station) not in pairs:
                v.append(
                    f"section {sec.id}: {sec.from_station}->{sec.to_station} is not adjacent on line {sec.line_id}"
                )

    seen_pairs: dict[tuple[str, str], str] = {}
    for sec in net.sections.values():
        key = (sec.from_station, sec.to_station)
        if key in seen_pairs:
            v.append(f"section {sec.id}: duplicates directed pair of section {seen_pairs[key]}")
        else:
            seen_pairs[key] = sec.id

    for line in net.lines.values():
        seq = line.station_sequence
        if len(seq) < 2:
            v.append(f"line {line.id}: needs at least 2 stations")
        for s in seq:
            if s not in net.stations:
                v.append(f"line {line.id}: station {s!r} does not exist")
            elif line.id not in net.stations[s].line_ids:
                v.append(f"line {line.id}: station {s} does not list line {line.id}")
        for a, b in line.consecutive_pairs():
            if a == b:
                v.append(f"line {line.id}: station {a} repeated consecutively")
                continue
            for u, w in ((a, b), (b, a)):
                if (u, w) not in seen_pairs:
                    v.append(f"line {line.id}: missing directed section {u}->{w}")

    if net.stations and not v:
        if not _is_connected(net):
            v.append("network is not connected (undirected view)")
    return v


def _is_connected(net: Network) -> bool:
    adj: dict[str, set[str]] = {s: set() for s in net.stations}
    for sec in net.sections.values():
        adj[sec.from_station].add(sec.to_station)
        adj[sec.to_station].add(sec.from_station)
    start = next(iter(net.stations))
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for w in adj[u]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == len(net.stations)


def transfer_stations(net: Network) -> set[str]:
    return {sid for sid, st in net.stations.items() if st.is_transfer}


# ---------------------------------------------------------------------------
# routing
# ---------------------------------------------------------------------------

def _line_adjacency(net: Network) -> dict[str, list[tuple[str, str]]]:
    """station -> sorted list of (line, neighbour) rides available from it."""
    adj: dict[str, set[tuple[str, str]]] = {s: set() for s in net.stations}
    for lid, line in net.lines.items():
        for a, b in line.consecutive_pairs():
            adj[a].add((lid, b))
            adj[b].add((lid, a))
    return {s: sorted(x) for s, x in adj.items()}


def _routes_from(net: Network, origin: str, transfer_penalty: float, adj=None):
    """Single-source search over (station, line) states.

    Labels are (cost, station path, line path) and compare lexicographically, so
    the first label settled at a station is the cheapest route with the smallest
    station-id sequence.
    """
    if adj is None:
        adj = _line_adjacency(net)
    heap = [(0.0, (origin,), (lid,)) for lid in sorted(net.stations[origin].line_ids)]
    heapq.heapify(heap)
    settled_states: set[tuple[str, str]] = set()
    best: dict[str, tuple[float, tuple[str, ...], tuple[str, ...]]] = {}
    while heap:
        cost, path, lines = heapq.heappop(heap)
        here, line = path[-1], lines[-1]
        if (here, line) in settled_states:
            continue
        settled_states.add((here, line))
        if here not in best:
            best[here] = (cost, path, lines)
        for lid, nxt in adj[here]:
            if nxt in path:
                continue
            step = 1.0 if lid == line else 1.0 + transfer_penalty
            # a line change is only allowed at a station, so the first hop of a route
            # never pays for it
            if len(path) == 1:
                step = 1.0
            heapq.heappush(heap, (cost + step, path + (nxt,), lines + (lid,)))
    return best


def route_cost(path_lines: tuple[str, ...], transfer_penalty: float) -> float:
    """Cost of a ride given the line used for each hop (hops + penalty x line changes)."""
    changes = sum(1 for a, b in zip(path_lines, path_lines[1:]) if a != b)
    return len(path_lines) + transfer_penalty * changes


def shortest_route(
    net: Network,
    origin: str,
    dest: str,
    transfer_penalty: float = DEFAULT_TRANSFER_PENALTY,
) -> list[str]:
    """Cheapest route from origin to dest as an ordered list of section ids.

    Cost is the number of sections plus ``transfer_penalty`` per line change.
    Ties go to the lexicographically smallest sequence of station ids.
    """
    return [sid for sid, _ in route_with_lines(net, origin, dest, transfer_penalty)]


def route_with_lines(
    net: Network, origin: str, dest: str, transfer_penalty: float = DEFAULT_TRANSFER_PENALTY
) -> list[tuple[str, str]]:
    """Like shortest_route but pairs every section with the line ridden on it."""
    if origin not in net.stations:
        raise KeyError(f"unknown origin station {origin!r}")
    if dest not in net.stations:
        raise KeyError(f"unknown destination station {dest!r}")
    if origin == dest:
        raise ValueError("origin and destination must differ")
    if transfer_penalty < 0:
        raise ValueError("transfer_penalty must be non-negative")
    best = _routes_from(net, origin, transfer_penalty)
    if dest not in best:
        raise NoPathError(f"no path from {origin} to {dest}")
    return _label_to_route(net, best[dest])


def _label_to_route(net: Network, label) -> list[tuple[str, str]]:
    _, path, lines = label
    return [(net.section_between(a, b), lid) for a, b, lid in zip(path, path[1:], lines[1:])]


def all_routes(
    net: Network, transfer_penalty: float = DEFAULT_TRANSFER_PENALTY, origins: Iterable[str] | None = None
) -> dict[tuple[str, str], list[tuple[str, str]]]:
    """Routes with ride lines for every ordered station pair (one search per origin)."""
    adj = _line_adjacency(net)
    out: dict[tuple[str, str], list[tuple[str, str]]] = {}
    for o in origins if origins is not None else net.stations:
        best = _routes_from(net, o, transfer_penalty, adj)
        for d in net.stations:
            if d == o:
                continue
            if d not in best:
                raise NoPathError(f"no path from {o} to {d}")
            out[(o, d)] = _label_to_route(net, best[d])
    return out
