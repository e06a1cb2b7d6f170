"""Single-tank walkthrough: build the game, look at payoff shares, watch the valve policy move.

Run with ``python3 notebooks/tank_walkthrough.py``.
"""

from bayesdefense.efg import serialize_efg
from bayesdefense.payoff import shapley
from bayesdefense.scenarios import make_scenario, scenario_game
from bayesdefense.solver import enumerate_pure_equilibria, policy_string, solve

tank = make_scenario("tank-a1")
base = tank.attacked.base

print("Shapley shares of the tank components")
for cid, value in shapley(base, tank.utility).values.items():
    print(f"  {base.component(cid).name:<10} {value:7.3f}")

print("\nValve policy as the pump becomes more likely to be compromised")
for k in range(11):
    p = k / 10
    game = scenario_game(tank.with_probs({"pump": p}))
    sol = solve(game)
    print(f"  p_pump={p:.1f}  valve: {policy_string(game, sol.profile, 1):<20} utility {sol.utility:6.2f}")

print("\nIndicator attack: the valve learns that readings are inverted")
inverted = make_scenario("tank-a2")
for p in (0.0, 0.5, 1.0):
    game = scenario_game(inverted.with_probs({"indicator": p}))
    count = len(enumerate_pure_equilibria(game))
    print(f"  p_indicator={p:.1f}  valve: {policy_string(game, solve(game).profile, 1):<20} "
          f"({count} pure equilibria)")

print("\nFirst lines of the tank game in Gambit format")
print("\n".join(serialize_efg(scenario_game(tank)).splitlines()[:6]))
