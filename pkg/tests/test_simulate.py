import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from railrisk.simulate import (
    SLOT_HOURS,
    SLOTS_PER_DAY,
    DemandProfile,
    ODBatch,
    assign_flows,
    generate_od,
    read_snapshots_csv,
    run_simulation,
    station_pairs,
    write_snapshots_csv,
)
from railrisk.topology import shortest_route

from conftest import line_net

DT = SLOT_HOURS


def _batch(net, demand, slot=0):
    return ODBatch.from_demand(slot, demand, net)


def test_thirty_days_of_batches(chongqing):
    od = generate_od(chongqing, DemandProfile(), 30, seed=1)
    assert len(od) == 1920
    assert od[1919].slot_index == 1919


def test_flat_noise_free_days_identical(toy):
    od = generate_od(toy, DemandProfile(noise_sigma=0.0, peak_gains=(0.0, 0.0)), 3, seed=5)
    for s in range(SLOTS_PER_DAY):
        assert np.array_equal(od[s].values, od[s + SLOTS_PER_DAY].values)
        assert np.array_equal(od[s].values, od[s + 2 * SLOTS_PER_DAY].values)


def test_seed_determinism(toy):
    prof = DemandProfile()
    a = [b.values for b in generate_od(toy, prof, 1, seed=7)]
    b = [b.values for b in generate_od(toy, prof, 1, seed=7)]
    c = [b.values for b in generate_od(toy, prof, 1, seed=8)]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not all(np.array_equal(x, y) for x, y in zip(a, c))


def test_expected_demand_formula(toy):
    prof = DemandProfile(base_rate=3.0, noise_sigma=0.0)
    od = generate_od(toy, prof, 1, seed=0)
    for s in (0, 6, 20, 46):
        for (o, d), q in od[s].demand.items():
            ci, cj = toy.stations[o].capacity_class, toy.stations[d].capacity_class
            g = 1 + sum(a * math.exp(-((s - c) ** 2) / (2 * w * w))
                        for c, w, a in zip(prof.peak_slots, prof.peak_widths, prof.peak_gains))
            assert q == pytest.approx(3.0 * prof.attraction[ci] * prof.attraction[cj] * g, rel=1e-12)


def test_noise_is_mean_one(toy):
    prof = DemandProfile(noise_sigma=0.5, peak_gains=(0.0, 0.0))
    od = generate_od(toy, prof, 40, seed=3)
    flat = generate_od(toy, DemandProfile(noise_sigma=0.0, peak_gains=(0.0, 0.0)), 1, seed=3)[0].values
    ratio = np.concatenate([od[k].values / flat for k in range(len(od))])
    # 40 days x 64 slots x 42 pairs draws; standard error of the mean is about 0.004
    assert abs(ratio.mean() - 1.0) < 0.02


def test_generation_is_order_independent(toy):
    od = generate_od(toy, DemandProfile(), 2, seed=11)
    forward = [od[k].values for k in range(len(od))]
    backward = [od[k].values for k in reversed(range(len(od)))][::-1]
    assert all(np.array_equal(x, y) for x, y in zip(forward, backward))


def test_profile_validation():
    with pytest.raises(ValueError):
        DemandProfile(base_rate=0.0)
    with pytest.raises(ValueError):
        DemandProfile(peak_widths=(0.0, 1.0))
    with pytest.raises(ValueError):
        DemandProfile(noise_sigma=-1.0)


def test_unconstrained_single_pair():
    net = line_net({"L": ["A", "B", "C"]})
    snap, carry = assign_flows(net, _batch(net, {("A", "C"): 100.0}))
    assert all(v == 0 for v in snap.PW.values())
    route = shortest_route(net, "A", "C")
    for sid, pi in snap.PI.items():
        assert pi == pytest.approx(100.0 if sid in route else 0.0, abs=1e-12)
    assert carry == {"A": 0.0, "B": 0.0, "C": 0.0}


def test_origin_over_capacity():
    net = line_net({"L": ["A", "B"]})
    cs, cw = net.stations["A"].cs, net.stations["A"].cw
    # demand per hour such that one slot brings 2 x CS x dt persons
    snap, carry = assign_flows(net, _batch(net, {("A", "B"): 2 * cs}))
    assert snap.admitted["A"] == pytest.approx(cs * DT)
    assert snap.PW["A"] == pytest.approx(cs * DT - cw * DT)
    assert carry["A"] == pytest.approx(cs * DT - cw * DT)


def test_pure_dissipation():
    net = line_net({"L": ["A", "B"]})
    snap, carry = assign_flows(net, _batch(net, {}), carryover={"A": 10.0})
    assert snap.PW["A"] == 0.0 and carry["A"] == 0.0
    # waiting passengers are admitted ahead of any dissipation
    assert snap.admitted["A"] == pytest.approx(10.0)


def test_section_clip_pushes_back_upstream():
    # a tight middle section forces excess back to its from-station
    doc_net = line_net({"L": ["A", "B", "C"]})
    net = doc_net.__class__(
        doc_net.stations,
        {k: (s.__class__(s.id, s.from_station, s.to_station, s.line_id, 400.0) if k == "B__C" else s)
         for k, s in doc_net.sections.items()},
        doc_net.lines,
    )
    snap, carry = assign_flows(net, _batch(net, {("A", "C"): 1000.0}))
    assert snap.PI["B__C"] == pytest.approx(400.0)
    assert snap.PI["A__B"] == pytest.approx(1000.0)
    pushed = (1000.0 - 400.0) * DT
    assert snap.PW["B"] == pytest.approx(max(pushed - net.stations["B"].cw * DT, 0.0))
    total_in = sum(snap.attempted.values())
    total_out = sum(snap.admitted.values()) + sum(carry.values()) + sum(snap.dissipated.values())
    assert total_out == pytest.approx(total_in, abs=1e-9)


def test_one_day_has_64_snapshots(toy):
    assert len(run_simulation(toy, DemandProfile(), 1, seed=0)) == 64


def test_zero_demand_all_zero(toy):
    pairs = station_pairs(toy)
    od = [ODBatch(s, pairs, np.zeros(len(pairs))) for s in range(SLOTS_PER_DAY)]
    for snap in run_simulation(toy, DemandProfile(), 1, seed=0, od=od):
        assert not any(snap.PS.values()) and not any(snap.PW.values()) and not any(snap.PI.values())


def test_peaks_follow_profile(toy):
    prof = DemandProfile(noise_sigma=0.0)
    snaps = run_simulation(toy, prof, 2, seed=0)
    total = np.array([sum(s.PI.values()) for s in snaps]).reshape(2, SLOTS_PER_DAY).mean(axis=0)
    morning = int(np.argmax(total[:26]))
    evening = 26 + int(np.argmax(total[26:]))
    assert abs(morning - prof.peak_slots[0]) <= 2
    assert abs(evening - prof.peak_slots[1]) <= 2


def test_capacity_and_conservation_under_overload(chongqing):
    prof = DemandProfile(base_rate=20.0, noise_sigma=0.5)
    snaps = run_simulation(chongqing, prof, 1, seed=4)
    st, sec = chongqing.stations, chongqing.sections
    for snap in snaps:
        assert all(v <= st[i].cs * (1 + 1e-12) for i, v in snap.PS.items())
        assert all(v <= sec[j].ci * (1 + 1e-12) for j, v in snap.PI.items())
        assert all(v >= 0 for v in snap.PW.values())
        lhs = math.fsum([*snap.admitted.values(), *snap.PW.values(), *snap.dissipated.values()])
        rhs = math.fsum(snap.attempted.values())
        # totals reach 1e7 persons here, so compare at relative float resolution
        assert abs(lhs - rhs) <= 1e-13 * rhs
    assert max(max(s.PW.values()) for s in snaps) > 0


def test_day_boundary_reset(toy):
    prof = DemandProfile(base_rate=4000.0, noise_sigma=0.0)
    snaps = run_simulation(toy, prof, 2, seed=0)
    od = generate_od(toy, prof, 2, seed=0)
    assert max(snaps[SLOTS_PER_DAY - 1].PW.values()) > 0
    fresh = {}
    for (o, _), q in od[SLOTS_PER_DAY].demand.items():
        fresh[o] = fresh.get(o, 0.0) + q * DT
    for sid, v in snaps[SLOTS_PER_DAY].attempted.items():
        assert v == pytest.approx(fresh[sid])


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 41), st.floats(0.0, 200000.0), st.floats(0.05, 1.0), st.floats(0.0, 3000.0))
def test_scaling_demand_down_never_increases_flows(pair, q, alpha, carry):
    # one active OD pair, so its single route is the only flow in the network
    net = line_net({"A": ["A1", "A2", "X", "A3"], "B": ["B1", "X", "B2", "B3"]})
    pairs = station_pairs(net)
    values = np.zeros(len(pairs))
    values[pair] = q
    origin = pairs[pair][0]
    s1, _ = assign_flows(net, ODBatch(0, pairs, values), {origin: carry})
    s2, _ = assign_flows(net, ODBatch(0, pairs, alpha * values), {origin: alpha * carry})
    tol = 1e-9 * (1 + q)
    assert all(s2.PS[i] <= s1.PS[i] + tol for i in s1.PS)
    assert all(s2.PI[j] <= s1.PI[j] + tol for j in s1.PI)
    assert all(s2.PW[i] <= s1.PW[i] + tol for i in s1.PW)


def test_snapshot_csv_round_trip(tmp_path, toy):
    snaps = run_simulation(toy, DemandProfile(), 1, seed=2)
    p = tmp_path / "snap.csv"
    write_snapshots_csv(snaps, p)
    assert p.read_text().splitlines()[0] == "slot,kind,id,flow,stranded"
    back = read_snapshots_csv(p)
    assert len(back) == 64
    for a, b in zip(snaps, back):
        assert a.slot_index == b.slot_index
        for i in a.PS:
            assert b.PS[i] == pytest.approx(a.PS[i], abs=5e-7)
            assert b.PW[i] == pytest.approx(a.PW[i], abs=5e-7)
        for j in a.PI:
            assert b.PI[j] == pytest.approx(a.PI[j], abs=5e-7)
    q = tmp_path / "snap2.csv"
    write_snapshots_csv(back, q)
    assert p.read_bytes() == q.read_bytes()
