"""Two names on one Poisson clock: closed forms, interaction rates and a
Monte Carlo cross-check of the simultaneous-default probability.

Run with ``python3 demos/shared_driver_walkthrough.py``.
"""

from pathlib import Path

import numpy as np

import corrcox as cc

SPEC = Path(__file__).with_name("specs") / "shared_driver.json"


def main():
    model = cc.load_spec(SPEC).model

    # Joint survival on a small horizon grid, both algebraic forms.
    print("t1    t2    nested           mobius")
    for t1, t2 in [(0.5, 0.5), (1.0, 2.0), (2.0, 1.0), (3.0, 3.0)]:
        a = cc.joint_survival(model, (t1, t2))
        b = cc.joint_survival_mobius(model, (t1, t2))
        print(f"{t1:<5} {t2:<5} {a:.14f} {b:.14f}")

    rates = cc.mo_rates(model)
    print("\ninteraction rates:", {str(cc.numerics.indices_from_mask(m)): r for m, r in rates.items()})
    print("P(tau1 = tau2) closed form:", cc.simultaneous_default_prob_mo(model))

    est = cc.mc_simultaneous_prob(model, paths=200_000, rng=7)
    for name, e in [("indicator", est.indicator), ("rao-blackwell", est.rao_blackwell)]:
        print(f"  {name:14s} {e.value:.5f} +- {e.stderr:.5f}")

    # One scenario, with its default times read off the path.
    path = cc.sample_path(model, horizon=5.0, rng=7, path_index=3)
    print("\nshocks on [0, 5]:", np.round(path.shock_times, 3))
    print("default times:   ", cc.extract_default_times(path))


if __name__ == "__main__":
    main()
