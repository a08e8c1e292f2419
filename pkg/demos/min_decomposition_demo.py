"""Gradual plus sudden default risk.

Each name defaults at the earlier of a deterministic-hazard clock and a
jump-driven one. Survival factorizes into the two parts, which the
simulation reproduces from independent thresholds.
"""

from pathlib import Path

import corrcox as cc

SPEC = Path(__file__).with_name("specs") / "min_decomposition.json"


def main():
    model = cc.load_spec(SPEC).model
    for t in [(0.5, 0.5), (1.0, 2.0), (3.0, 1.0)]:
        total = cc.min_decomposition_survival(model, t)
        jump = cc.joint_survival(model.jump_model, t)
        mc = cc.mc_min_decomposition(model, paths=200_000, rng=5, query=t)
        print(f"t={t}  total {total:.5f} = continuous {total / jump:.5f} x jump {jump:.5f};"
              f"  mc {mc.value:.5f} +- {mc.stderr:.5f}")


if __name__ == "__main__":
    main()
