import pytest

from railrisk.fixtures import chongqing_network, toy_network
from railrisk.topology import network_from_dict


def line_doc(lines: dict[str, list[str]], classes: dict[str, str] | None = None, **overrides) -> dict:
    """Topology document with both directed sections for every consecutive pair."""
    classes = classes or {}
    members: dict[str, set[str]] = {}
    sections: dict[tuple[str, str], dict] = {}
    for lid, seq in lines.items():
        for s in seq:
            members.setdefault(s, set()).add(lid)
        for a, b in zip(seq, seq[1:]):
            for u, v in ((a, b), (b, a)):
                sections.setdefault((u, v), {"id": f"{u}__{v}", "from": u, "to": v, "line": lid})
    stations = [
        {"id": s, "name": s, "class": classes.get(s, "large"), "lines": sorted(ls), **overrides.get(s, {})}
        for s, ls in sorted(members.items())
    ]
    return {
        "stations": stations,
        "sections": list(sections.values()),
        "lines": [{"id": lid, "name": lid, "stations": seq} for lid, seq in lines.items()],
    }


def line_net(lines, classes=None, **overrides):
    return network_from_dict(line_doc(lines, classes, **overrides))


@pytest.fixture(scope="session")
def chongqing():
    return chongqing_network()


@pytest.fixture(scope="session")
def toy():
    return toy_network()


@pytest.fixture(scope="session")
def default_run(chongqing):
    """The default seeded 30-day experiment, shared by every test that needs it."""
    import time

    from railrisk.predict import ExperimentConfig, run_experiment

    t0 = time.perf_counter()
    result = run_experiment(chongqing, ExperimentConfig())
    return result, time.perf_counter() - t0


_CRITERIA: dict[int, tuple[str, bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion checked by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num, text = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        ok = rep.passed
        prev = _CRITERIA.get(num)
        _CRITERIA[num] = (text, ok and (prev is None or prev[1]))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        text, ok = _CRITERIA[num]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {num:>2}: {text}")
