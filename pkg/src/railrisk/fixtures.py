"""Deterministic topology fixtures.

``chongqing`` reproduces the per-line node counts of the ten-line Chongqing
network (168 stations, 362 directed sections) with synthetic station names.
``toy`` is a 7-station, 2-line network with a single transfer station.
"""

from __future__ import annotations

from typing import Sequence, Union

from .topology import Network, network_from_dict

Token = Union[str, int]

# (line id, display name, ring?, layout). In a layout a string is a transfer
# station and an int is a run of that many line-local stations.
_CHONGQING_LAYOUT: list[tuple[str, str, bool, list[Token]]] = [
    ("L01", "Line 1", False, [3, "T06", 3, "T03", 4, "T01", 3, "T05", 3, "T04", 3]),
    ("L02", "Line 2", False, [4, "T08", 4, "T07", 3, "T01", 3, "T09", 3, "T10", 3]),
    (
        "L03",
        "Line 3",
        True,
        ["T15", "T02", "T14", 5, "T03", 5, "T07", 5, "T11", 5, "T12", 5, "T13", 6],
    ),
    ("L04", "Line 3 (Kong Gang)", False, ["T11", 6]),
    ("L05", "Line 4", False, [2, "T12", 2, "T16", 2]),
    ("L06", "Line 5", False, [3, "T08", 3, "T17", 2]),
    (
        "L07",
        "Line 6",
        False,
        [2, "T04", 2, "T10", 2, "T15", "T02", 2, "T16", 3, "T18", 3, "T19", 3, "T20", 3],
    ),
    ("L08", "Line 10", False, [3, "T06", 3, "T13", 2, "T18", 2, "T21", 2, "T22", 2]),
    (
        "L09",
        "Loop Line",
        False,
        [2, "T01", 2, "T05", 2, "T09", 2, "T17", 2, "T02", "T14", 3, "T20", 3, "T21", 2],
    ),
    ("L10", "International Expo Line", False, [1, "T19", 2, "T22", 1]),
]

_TOY_LAYOUT: list[tuple[str, str, bool, list[Token]]] = [
    ("A", "Line A", False, [2, "X", 1]),
    ("B", "Line B", False, [1, "X", 2]),
]


def _expand(line_id: str, layout: Sequence[Token], ring: bool) -> list[str]:
    seq: list[str] = []
    k = 0
    for tok in layout:
        if isinstance(tok, str):
            seq.append(tok)
        else:
            for _ in range(tok):
                k += 1
                seq.append(f"{line_id}_{k:02d}")
    if ring:
        seq.append(seq[0])
    return seq


def _local_class(station_id: str) -> str:
    k = int(station_id.rsplit("_", 1)[1])
    return "medium" if k % 3 == 0 else "small"


def build_from_layout(layout) -> dict:
    """Topology document for a layout; transfer stations are 'large'."""
    sequences = {lid: _expand(lid, toks, ring) for lid, _, ring, toks in layout}
    membership: dict[str, set[str]] = {}
    for lid, seq in sequences.items():
        for s in seq:
            membership.setdefault(s, set()).add(lid)

    stations = []
    for sid in sorted(membership):
        transfer = len(membership[sid]) >= 2
        cls = "large" if transfer else _local_class(sid)
        stations.append({"id": sid, "name": f"Station {sid}", "class": cls, "lines": sorted(membership[sid])})

    owner: dict[tuple[str, str], str] = {}
    for lid in sorted(sequences):
        seq = sequences[lid]
        for a, b in zip(seq, seq[1:]):
            owner.setdefault((a, b), lid)
            owner.setdefault((b, a), lid)
    sections = [
        {"id": f"{a}__{b}", "from": a, "to": b, "line": lid}
        for (a, b), lid in sorted(owner.items())
    ]
    lines = [{"id": lid, "name": name, "stations": sequences[lid]} for lid, name, _, _ in layout]
    return {"stations": stations, "sections": sections, "lines": lines}


def chongqing_document() -> dict:
    return build_from_layout(_CHONGQING_LAYOUT)


def toy_document() -> dict:
    return build_from_layout(_TOY_LAYOUT)


def chongqing_network() -> Network:
    return network_from_dict(chongqing_document())


def toy_network() -> Network:
    return network_from_dict(toy_document())


FIXTURES = {"toy": toy_document, "chongqing": chongqing_document}
