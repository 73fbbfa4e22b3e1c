"""Regenerate the built-in target files under data/targets/.

Window bounds are data, not measurements: for each vowel we search the
shipped tract basis for an articulation whose formants sit near classic
vowel values, then write regions around the formants that articulation
actually achieves (so every shipped target is reachable by construction).
'happy' strings an aspiration segment, 'ae', a closure, and 'i' in sequence;
'example' is an untrained mid-central placeholder.

Run after any change to the basis, then gen_pretrained_programs.py.
"""
import os

import numpy as np
from scipy.optimize import minimize

from divakit.targets import RegionWindow, SpeechTarget, serialize_target
from divakit.tract import load_basis, synth_sample_batch

OUT_DIR = os.path.normpath(os.path.join(os.path.dirname(__file__), "..", "src", "divakit", "data", "targets"))

VOWEL_GOALS = {"i": (290, 2100), "u": (320, 900), "e": (470, 1850), "ae": (650, 1650)}
FORMANT_TOL = 0.08
F0_WINDOW = (114.0, 126.0)
SOURCE_WINDOW = (0.9, 1.0)
VOWEL_MS = 400


def formants_of(shape, basis):
    art = np.concatenate([np.clip(shape, -3, 3), [0.0, 1.0, 1.0]])
    aud, _ = synth_sample_batch(art[None, :], basis)
    return aud[0, 1:]


def find_articulation(f1_goal, f2_goal, basis, seed=42):
    rng = np.random.default_rng(seed)
    samples = rng.uniform(-2.5, 2.5, (3000, 10))
    arts = np.column_stack([samples, np.zeros(3000), np.ones(3000), np.ones(3000)])
    aud, _ = synth_sample_batch(arts, basis)
    score = np.abs(aud[:, 1] - f1_goal) / f1_goal + 0.7 * np.abs(aud[:, 2] - f2_goal) / f2_goal
    start = samples[np.argmin(score)]

    def cost(shape):
        try:
            f = formants_of(shape, basis)
        except Exception:
            return 10.0
        return abs(f[0] - f1_goal) / f1_goal + 0.7 * abs(f[1] - f2_goal) / f2_goal

    res = minimize(cost, start, method="Nelder-Mead",
                   options={"maxiter": 600, "xatol": 1e-3, "fatol": 1e-5})
    shape = np.clip(res.x, -2.8, 2.8)
    return shape, formants_of(shape, basis)


def vowel_target(name, f123, duration=VOWEL_MS):
    lo, hi = 1 - FORMANT_TOL, 1 + FORMANT_TOL
    dims = {
        "F0": [RegionWindow(0, duration, *F0_WINDOW)],
        "F1": [RegionWindow(0, duration, f123[0] * lo, f123[0] * hi)],
        "F2": [RegionWindow(0, duration, f123[1] * lo, f123[1] * hi)],
        "F3": [RegionWindow(0, duration, f123[2] * lo, f123[2] * hi)],
        "pressure": [RegionWindow(0, duration, *SOURCE_WINDOW)],
        "voicing": [RegionWindow(0, duration, *SOURCE_WINDOW)],
    }
    return SpeechTarget(name, duration, 5, dims)


def happy_target(ae_f, i_f):
    lo, hi = 1 - FORMANT_TOL, 1 + FORMANT_TOL
    dims = {
        "F0": [RegionWindow(0, 600, *F0_WINDOW)],
        "F1": [RegionWindow(80, 300, ae_f[0] * lo, ae_f[0] * hi),
               RegionWindow(400, 560, i_f[0] * lo, i_f[0] * hi)],
        "F2": [RegionWindow(80, 300, ae_f[1] * lo, ae_f[1] * hi),
               RegionWindow(400, 560, i_f[1] * lo, i_f[1] * hi)],
        "voicing": [RegionWindow(0, 60, 0.0, 0.25),      # /h/ aspiration
                    RegionWindow(80, 300, 0.85, 1.0),    # /ae/
                    RegionWindow(320, 380, 0.0, 0.2),    # /p/ closure
                    RegionWindow(400, 600, 0.85, 1.0)],  # /i/
        "pressure": [RegionWindow(0, 300, 0.85, 1.0),
                     RegionWindow(320, 380, 0.0, 0.3),
                     RegionWindow(400, 600, 0.85, 1.0)],
        "PA6": [RegionWindow(320, 380, 0.7, 1.0)],       # lip closure for /p/
    }
    return SpeechTarget("happy", 600, 5, dims)


def main():
    basis = load_basis()
    os.makedirs(OUT_DIR, exist_ok=True)
    formants = {}
    for name, (g1, g2) in VOWEL_GOALS.items():
        shape, f = find_articulation(g1, g2, basis)
        formants[name] = f
        print(f"{name}: articulation formants {f.round(1)}")
        write(vowel_target(name, f))
    write(happy_target(formants["ae"], formants["i"]))
    neutral = formants_of(np.zeros(10), basis)
    write(vowel_target("example", neutral))
    print(f"wrote targets to {OUT_DIR}")


def write(target):
    path = os.path.join(OUT_DIR, f"{target.name}.target")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(serialize_target(target))


if __name__ == "__main__":
    main()
