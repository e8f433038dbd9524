"""Build the detection-loss budget item by item and see where the squeezing goes."""
# %%
from opasqueeze import detection

module = detection.module_element(0.56)            # round-trip 1550 nm transmittance of the module
coupler = detection.coupler_element(0.45, 0.50)    # measured port vs ideal 50:50 split
detector = detection.detector_element(1.16, 1553.3)
elec = detection.electronic_element(clearance_db=16.99)

budget = detection.LossBudget((module, coupler, detector, elec))
for el in budget.elements:
    print(f"{el.name:12s} {100 * el.loss:6.2f} %   ({el.provenance})")
print(f"{'total':12s} {100 * budget.total():6.2f} %")

# %% loss that sits after the module; removing it recovers the module output
downstream = budget.without("module").total()
print(f"\ndownstream of the module: {100 * downstream:.2f} %")
print(f"detector QE: {detection.quantum_efficiency(1.16, 1553.3):.4f}")

# %% budgets are plain JSON, so they can be edited and reloaded
text = budget.to_json()
assert detection.LossBudget.from_json(text) == budget
print("\n" + text)
