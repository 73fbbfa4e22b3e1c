"""Regenerate the golden regression WAV under data/golden/.

The golden file freezes one deterministic production of 'happy' (seed 1,
shipped trained program). Any code change that alters the rendered audio in
deterministic mode shows up as a nonzero max-abs-diff against this file.

Run last, after the basis / targets / programs generators.
"""
import os

from divakit import analysis
from divakit.control import load_program
from divakit.engine import EngineConfig, simulate
from divakit.targets import resolve_target

OUT = os.path.normpath(os.path.join(os.path.dirname(__file__), "..", "src", "divakit",
                                    "data", "golden", "happy_seed1.wav"))


def main():
    target = resolve_target("happy")
    program_path = os.path.join(os.path.dirname(__file__), "..", "src", "divakit",
                                "data", "programs", "happy.prog.csv")
    program = load_program(os.path.normpath(program_path), "happy")
    cfg = EngineConfig(seed=1, deterministic=True)
    trace = simulate(target, program, cfg)
    os.makedirs(os.path.dirname(OUT), exist_ok=True)
    analysis.write_wav(OUT, trace.audio, cfg.fs)
    print(f"wrote {OUT} ({len(trace.audio)} samples)")


if __name__ == "__main__":
    main()
