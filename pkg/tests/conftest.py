import itertools

import pytest

from bayesdefense.game import Leaf, Move, make_game
from bayesdefense.payoff import UtilityFunction
from bayesdefense.scenarios import make_scenario, scenario_game
from bayesdefense.system import Component, ComponentSystem


def bimatrix_game(row_pay, col_pay, rows=("T", "B"), cols=("L", "R")):
    """Simultaneous two-player game: the column player cannot see the row choice."""
    root = Move(1, "row", [
        (a, Move(2, "col", [(b, Leaf((row_pay[i][j], col_pay[i][j]))) for j, b in enumerate(cols)]))
        for i, a in enumerate(rows)])
    return make_game("bimatrix", [(1, "row"), (2, "col")], root)


def table_system(sizes):
    comps = tuple(Component(k + 1, f"c{k + 1}", tuple(f"a{j}" for j in range(n))) for k, n in enumerate(sizes))
    return ComponentSystem(comps)


def table_utility(system, values):
    joints = list(itertools.product(*(c.actions for c in system.ordered())))
    return UtilityFunction.from_table("u", system.ids, dict(zip(joints, values)))


@pytest.fixture(scope="session")
def tank_a1():
    return make_scenario("tank-a1")


@pytest.fixture(scope="session")
def tank_a2():
    return make_scenario("tank-a2")


@pytest.fixture(scope="session")
def routing_net():
    return make_scenario("routing").network


@pytest.fixture(scope="session")
def swat_mini_game():
    return scenario_game(make_scenario("swat-mini"))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
