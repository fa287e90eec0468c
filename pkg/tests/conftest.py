import numpy as np
import pytest

from groupshapley.coalition import GroupPartition, UtilityTable, enumerate_proper_coalitions, full_mask


def labels(n):
    return tuple(f"G{j}" for j in range(n))


def random_table(rng, n, low=-10.0, high=10.0):
    part = GroupPartition(labels(n))
    masks = enumerate_proper_coalitions(part)
    return UtilityTable(part, dict(zip(masks, rng.uniform(low, high, len(masks)))), rng.uniform(low, high))


def table_from_function(n, g):
    return UtilityTable.from_function(GroupPartition(labels(n)), g)


def additive_table(addends):
    addends = np.asarray(addends, dtype=float)
    return table_from_function(len(addends), lambda m: float(sum(a for j, a in enumerate(addends) if m >> j & 1)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def toy_table():
    # six proper coalitions of three groups plus the grand value
    part = GroupPartition(("M1", "M2", "M3"))
    return UtilityTable(part, {1: 1.0, 2: 2.0, 3: 4.0, 4: 0.5, 5: 2.0, 6: 3.0}, 6.0)


__all__ = ["labels", "random_table", "table_from_function", "additive_table", "full_mask"]


# acceptance reporting: one pass/fail line per criterion in the terminal summary

_CRITERIA: dict[str, list[tuple[str, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.outcome != "passed"):
        return
    n, title = mark.args
    _CRITERIA.setdefault(f"{n}|{title}", []).append((item.name, rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA, key=lambda k: int(k.split("|")[0])):
        n, title = key.split("|", 1)
        runs = _CRITERIA[key]
        ok = all(o == "passed" for _, o in runs)
        failed = [name for name, o in runs if o != "passed"]
        line = f"criterion {n} ({title}): {'PASS' if ok else 'FAIL'}"
        if failed:
            line += f" [failing: {', '.join(failed)}]"
        terminalreporter.write_line(line)
