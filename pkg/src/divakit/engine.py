"""Discrete-time production loop: feedforward plus delayed sensory feedback.

Each frame reads and smooths the feedforward command, compares delayed sensory
states against the target at their emission time (so latency alone never
creates error), maps the errors through the damped pseudoinverse into a
corrective command, drives the tract, and records every signal. Iterating a
production and folding the recorded corrections back into the program is the
motor-learning protocol.
"""
import hashlib
import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from . import analysis
from .control import (
    ControlConfig,
    ErrorSignal,
    corrective_command,
    feedforward_read,
    learn_update,
    region_error,
    reset_program,
)
from .signals import DelayLine, FirFilter, Rng
from .targets import AUDITORY_DIMS, SOMATOSENSORY_DIMS
from .tract import ArticulatoryState, clamp_articulation, load_basis, synth_audio, synth_sample_batch

__all__ = ["EngineConfig", "Trace", "simulate", "produce_and_learn", "save_trace", "load_trace_csv"]

TRACE_COLUMNS = (
    ["t_ms"]
    + [f"m{i}" for i in range(1, 14)]
    + [f"ff{i}" for i in range(1, 14)]
    + [f"c{i}" for i in range(1, 14)]
    + ["aF0", "aF1", "aF2", "aF3"]
    + [f"s{i}" for i in range(1, 9)]
    + [f"eA{i}" for i in range(1, 5)]
    + [f"eS{i}" for i in range(1, 9)]
)

TRACE_GROUPS = {
    "motor": (1, 14),
    "feedforward": (14, 27),
    "corrective": (27, 40),
    "auditory": (40, 44),
    "somatosensory": (44, 52),
    "aud_error": (52, 56),
    "som_error": (56, 64),
}


@dataclass(frozen=True)
class EngineConfig:
    frame_period_ms: float = 5.0
    fs: int = 11025
    aud_delay: int = 15  # frames, 75 ms at the default frame period
    som_delay: int = 10  # frames, 50 ms
    control: ControlConfig = field(default_factory=ControlConfig)
    seed: int = 0
    deterministic: bool = False
    rng_constants: tuple = ()  # ((channel, value), ...) for deterministic mode

    def __post_init__(self):
        if self.frame_period_ms <= 0:
            raise ValueError("frame_period_ms must be positive")
        if self.fs < 8000:
            raise ValueError("fs must be >= 8000")
        if self.aud_delay < 0 or self.som_delay < 0:
            raise ValueError("delays must be >= 0")
        object.__setattr__(self, "rng_constants", tuple(self.rng_constants))

    def make_rng(self):
        return Rng(self.seed, self.deterministic, dict(self.rng_constants))

    def hash(self):
        blob = json.dumps(asdict(self), sort_keys=True, default=list)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


@dataclass
class Trace:
    """Per-frame recording of one production plus its rendered audio."""

    target_name: str
    frame_period_ms: float
    fs: int
    seed: int
    config_hash: str
    motor: np.ndarray          # (N, 13)
    feedforward: np.ndarray    # (N, 13) after smoothing
    corrective: np.ndarray     # (N, 13)
    auditory: np.ndarray       # (N, 4)
    somatosensory: np.ndarray  # (N, 8)
    aud_error: np.ndarray      # (N, 4)
    som_error: np.ndarray      # (N, 8)
    audio: np.ndarray
    iteration: int = 0
    extras: dict = field(default_factory=dict, repr=False)  # debug only, not serialized

    @property
    def n_frames(self):
        return self.motor.shape[0]

    @property
    def times_ms(self):
        return np.arange(self.n_frames) * self.frame_period_ms

    def matrix(self):
        """The trace as one (N, 64) array in the trace.csv column order."""
        return np.column_stack([
            self.times_ms, self.motor, self.feedforward, self.corrective,
            self.auditory, self.somatosensory, self.aud_error, self.som_error,
        ])


class _VectorDelay:
    """Per-component scalar delay lines carrying one sensory vector.

    The loop pushes the previous frame's state at the top of frame k, so a
    line of length delay - 1 hands back the state from exactly `delay` frames
    ago. Until real states arrive, the fill vector (the frame-0 prediction)
    comes back, so startup frames see a plausible state instead of zeros.
    delay == 0 behaves like delay == 1, one frame being the minimum causal
    sensory latency of the loop.
    """

    def __init__(self, delay, fill):
        self._lines = [DelayLine(max(0, delay - 1), fill=v) for v in fill]

    def step(self, prev_vec):
        return np.array([line.push(v) for line, v in zip(self._lines, prev_vec)])


def _predict_state(program, basis):
    art = clamp_articulation(program.frames[0])
    aud, som = synth_sample_batch(art[None, :], basis)
    return aud[0], som[0]


def simulate(target, program, cfg=None, basis=None):
    """Run one production of `target` driven by `program` and record a Trace."""
    cfg = cfg or EngineConfig()
    basis = basis or load_basis()
    fp = cfg.frame_period_ms
    if target.duration_ms % fp:
        raise ValueError(
            f"frame period {fp} ms does not divide target duration {target.duration_ms} ms"
        )
    n = int(target.duration_ms // fp)
    if program.n_frames != n:
        raise ValueError(
            f"program has {program.n_frames} frames, target needs {n}"
        )

    taps = cfg.control.smoothing_taps
    smoothers = [FirFilter(taps) for _ in range(13)]
    for sm, v in zip(smoothers, feedforward_read(program, 0.0)):
        for _ in range(len(taps) - 1):  # settle the FIR history, no onset transient
            sm.apply(v)

    aud0, som0 = _predict_state(program, basis)
    aud_delay = _VectorDelay(cfg.aud_delay, aud0)
    som_delay = _VectorDelay(cfg.som_delay, som0)

    rec = {k: np.zeros((n, dim)) for k, dim in
           (("motor", 13), ("feedforward", 13), ("corrective", 13),
            ("auditory", 4), ("somatosensory", 8), ("aud_error", 4), ("som_error", 8))}
    delayed_log = np.zeros((n, 4))

    # hold at t=0 with feedback active for a few delay cycles before recording
    # starts, so the loop (FIR history, delay lines, integrated feedback
    # command) is settled and the first frames see no startup transient
    preroll = 3 * cfg.aud_delay + cfg.som_delay + len(taps)
    prev_aud, prev_som = aud0, som0
    art_prev = ArticulatoryState.from_vector(clamp_articulation(program.frames[0]))
    fb = np.zeros(13)
    for j in range(preroll + n):
        k = j - preroll
        t = max(0.0, k * fp)
        ff = np.array([sm.apply(v) for sm, v in zip(smoothers, feedforward_read(program, t))])
        delayed_aud = aud_delay.step(prev_aud)
        delayed_som = som_delay.step(prev_som)
        err = ErrorSignal(
            region_error(delayed_aud, target, AUDITORY_DIMS, max(0.0, t - cfg.aud_delay * fp)),
            region_error(delayed_som, target, SOMATOSENSORY_DIMS, max(0.0, t - cfg.som_delay * fp)),
        )
        dm = corrective_command(art_prev, err, cfg.control, basis)
        # the corrective integrates into a persistent feedback command
        # (velocity-style control): a fresh positional correction each frame
        # limit-cycles at these loop delays, an integrated one settles inside
        # the target region
        fb = fb + cfg.control.fb_integration * dm
        motor = clamp_articulation(ff + fb)
        fb = motor - ff  # post-clamp, so the command never winds up
        aud, som = synth_sample_batch(motor[None, :], basis)
        prev_aud, prev_som = aud[0], som[0]
        art_prev = ArticulatoryState.from_vector(motor)
        if k >= 0:
            rec["motor"][k] = motor
            rec["feedforward"][k] = ff
            rec["corrective"][k] = fb
            rec["auditory"][k] = aud[0]
            rec["somatosensory"][k] = som[0]
            rec["aud_error"][k] = err.auditory
            rec["som_error"][k] = err.somatosensory
            delayed_log[k] = delayed_aud

    audio = synth_audio(rec["motor"], cfg.fs, fp, rng=cfg.make_rng(), basis=basis)
    return Trace(
        target_name=target.name,
        frame_period_ms=fp,
        fs=cfg.fs,
        seed=cfg.seed,
        config_hash=cfg.hash(),
        audio=audio,
        extras={"delayed_aud": delayed_log},
        **rec,
    )


def _delay_compensated(corrective, delay):
    """Shift the corrective record back to its emission frames before learning.

    A correction applied at frame k answered the state emitted at k - delay,
    so that is the program frame it should train; the tail frames hold the
    last correction.
    """
    if delay <= 0 or len(corrective) <= 1:
        return corrective
    delay = min(delay, len(corrective) - 1)
    return np.vstack([corrective[delay:], np.repeat(corrective[-1:], delay, axis=0)])


def produce_and_learn(target, n_iters, cfg=None, start=None, basis=None):
    """Iterate produce-then-update n_iters times from `start` (or a reset program).

    Returns (programs, traces): n_iters + 1 programs (including the start) and
    one trace per production, in order.
    """
    if n_iters < 0:
        raise ValueError("n_iters must be >= 0")
    cfg = cfg or EngineConfig()
    basis = basis or load_basis()
    program = start or reset_program(target, cfg.frame_period_ms)
    programs = [program]
    traces = []
    for i in range(n_iters):
        trace = simulate(target, programs[-1], cfg, basis)
        trace.iteration = i
        traces.append(trace)
        corrections = _delay_compensated(trace.corrective, cfg.aud_delay)
        programs.append(learn_update(programs[-1], corrections, cfg.control.learn_rate))
    return programs, traces


def save_trace(trace, out_dir, stem):
    """Write `<stem>_trace.csv`, `<stem>.wav`, and the metadata sidecar; return paths."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{stem}_trace.csv")
    wav_path = os.path.join(out_dir, f"{stem}.wav")
    meta_path = os.path.join(out_dir, f"{stem}_meta.json")
    mat = trace.matrix()
    with open(csv_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(TRACE_COLUMNS) + "\n")
        for row in mat:
            f.write(",".join(f"{v:.17g}" for v in row) + "\n")
    analysis.write_wav(wav_path, trace.audio, trace.fs)
    meta = {
        "target": trace.target_name,
        "seed": trace.seed,
        "config_hash": trace.config_hash,
        "iteration": trace.iteration,
        "frame_period_ms": trace.frame_period_ms,
        "fs": trace.fs,
    }
    with open(meta_path, "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")
    return csv_path, wav_path, meta_path


def load_trace_csv(path):
    """Trace matrix and column names from a trace.csv file."""
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip().split(",")
    if header != TRACE_COLUMNS:
        raise ValueError(f"{path} is not a trace.csv (unexpected columns)")
    mat = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return mat, header
