"""Routing under uncertain intermediaries: equilibrium versus shortest-path forwarding.

Prints a coarse text heat map of the equilibrium utility and of its gap to
the greedy baseline.  ``python3 notebooks/routing_sweep.py``
"""

from bayesdefense.routing import dp_solve, greedy_expected_utility
from bayesdefense.scenarios import make_scenario

net = make_scenario("routing").network
grid = [k / 10 for k in range(11)]

print("equilibrium expected utility (rows p_N2, columns p_N4)")
print("       " + " ".join(f"{p:5.1f}" for p in grid))
gaps = []
for p2 in grid:
    row = []
    for p4 in grid:
        n = net.with_probs({"N2": p2, "N4": p4})
        u = dp_solve(n).expected_utility
        row.append(u)
        gaps.append((u - greedy_expected_utility(n), p2, p4))
    print(f"{p2:5.1f}  " + " ".join(f"{u:5.2f}" for u in row))

best = max(gaps)
worst = min(gaps)
print(f"\nlargest gain over greedy {best[0]:.3f} at p_N2={best[1]}, p_N4={best[2]}")
print(f"largest shortfall        {worst[0]:.3f} at p_N2={worst[1]}, p_N4={worst[2]}")

sol = dp_solve(net)
print("\nat even odds the package travels", " -> ".join(sol.route))
for (node, ctx), options in sol.ties.items():
    print(f"  {node} is indifferent between {options} when the package arrives from {ctx.sender}")
