"""Regenerate the shipped trained motor programs under data/programs/.

Each program is the result of the standard acquisition protocol: reset the
feedforward weights, then learn over 20 productions (deterministic, seed 0).
The 'example' target ships without a program on purpose.

Run after gen_tract_basis.py / gen_builtin_targets.py.
"""
import os

import numpy as np

from divakit.control import save_program
from divakit.engine import EngineConfig, produce_and_learn
from divakit.targets import resolve_target

OUT_DIR = os.path.normpath(os.path.join(os.path.dirname(__file__), "..", "src", "divakit", "data", "programs"))
TRAINED = ("i", "u", "e", "ae", "happy")


def main():
    os.makedirs(OUT_DIR, exist_ok=True)
    cfg = EngineConfig(seed=0, deterministic=True)
    for name in TRAINED:
        target = resolve_target(name)
        programs, traces = produce_and_learn(target, 20, cfg)
        final = np.linalg.norm(traces[-1].corrective, axis=1).mean()
        path = os.path.join(OUT_DIR, f"{name}.prog.csv")
        save_program(programs[-1], path)
        print(f"{name}: residual mean|corrective| {final:.2e} -> {path}")


if __name__ == "__main__":
    main()
