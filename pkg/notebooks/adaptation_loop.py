"""Monitor, analyse, plan and execute over a synthetic sensor trace.

A classifier watches the pump; from tick 12 an attack shifts its sensor
readings.  The nearest precomputed case decides what every component does.
``python3 notebooks/adaptation_loop.py``
"""

from bayesdefense.adaptation import run_loop
from bayesdefense.knowledge import build_grid
from bayesdefense.predictor import TrainConfig, synthetic_dataset, synthetic_trace, train

store = build_grid("tank-a1", step=0.1)
print(f"knowledge base: {len(store)} cases over components {store.components}")

x, labels = synthetic_dataset(1000, seed=0)
pump_clf = train(x, labels, TrainConfig(seed=0))
print(f"pump classifier held-out accuracy {pump_clf.metrics['holdout_accuracy']:.3f}")

trace, truth = synthetic_trace(20, attack_from=12, seed=4)
log = run_loop(trace, {store.components.index("pump"): pump_clf}, store)
print("\ntick  attacked  p_pump  case  valve  pump   indicator")
for entry, flag in zip(log, truth):
    valve, pump, indicator = entry.actions
    print(f"{entry.tick:4d}  {flag:8d}  {entry.p[1]:6.3f}  {entry.case_id:4d}  {valve:<5}  {pump:<5}  {indicator}")
