"""Regenerate data/tract_basis.csv.

The shipped tract shape model is a smooth hand-designed fit, not a
measurement: a gently tapered neutral tube plus ten Gaussian bump modes whose
centers tile the tube from glottis to lips. Localized bumps give each shape
coordinate control over the constriction degree of one region, which is what
the place/formant control loops need; the exact numbers only have to be
smooth, full rank, and produce vowel-like formant ranges.
"""
import os

import numpy as np

S = 44
N_MODES = 10
OUT = os.path.join(os.path.dirname(__file__), "..", "src", "divakit", "data", "tract_basis.csv")


def build():
    x = (np.arange(S) + 0.5) / S  # 0 at glottis, 1 at lips
    # neutral tube: narrower near glottis and lips, widest mid-tract
    mean = 2.0 + 1.2 * np.sin(np.pi * x) - 0.4 * x
    centers = np.linspace(0.06, 0.94, N_MODES)
    width = 0.075
    modes = np.empty((S, N_MODES))
    for j, c in enumerate(centers):
        modes[:, j] = 0.85 * np.exp(-((x - c) / width) ** 2)
    return mean, modes


def main():
    mean, modes = build()
    assert np.linalg.matrix_rank(modes) == N_MODES
    header = "section_index,mean_area_cm2," + ",".join(f"b{j + 1}" for j in range(N_MODES))
    rows = [header]
    for i in range(S):
        rows.append(",".join([str(i), f"{mean[i]:.12g}"] + [f"{v:.12g}" for v in modes[i]]))
    path = os.path.normpath(OUT)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(rows) + "\n")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
