"""Feedback and feedforward control: region errors, damped-pseudoinverse
corrections, and the adaptive motor program with its learning update.
"""
from dataclasses import dataclass, field

import numpy as np

from . import tract
from .targets import AUDITORY_DIMS, SOMATOSENSORY_DIMS
from .tract import ART_HI, ART_LO, F0_BASE, clamp_articulation

__all__ = [
    "ControlConfig",
    "ErrorSignal",
    "ForwardProgram",
    "region_error",
    "corrective_command",
    "feedforward_read",
    "learn_update",
    "reset_program",
    "save_program",
    "load_program",
]


@dataclass(frozen=True)
class ControlConfig:
    g_aud: float = 1.0
    g_som: float = 0.5
    lambda_rel: float = 0.01    # Tikhonov damping as a fraction of sigma_max^2
    learn_rate: float = 0.5
    fd_eps: float = 1e-3
    smoothing_taps: tuple = (0.25, 0.5, 0.25)
    # per-frame integration rate of the corrective into the feedback command;
    # must stay well under 1/aud_delay or the delayed loop rings (0.05 is
    # tuned for the default 15-frame auditory delay)
    fb_integration: float = 0.05

    def __post_init__(self):
        if self.g_aud < 0 or self.g_som < 0:
            raise ValueError("gains must be >= 0")
        if not (0 < self.learn_rate <= 1):
            raise ValueError(f"learn_rate must be in (0, 1], got {self.learn_rate}")
        if self.lambda_rel <= 0:
            raise ValueError("lambda_rel must be > 0")
        if self.fd_eps <= 0:
            raise ValueError("fd_eps must be > 0")
        if not (0 < self.fb_integration <= 1):
            raise ValueError("fb_integration must be in (0, 1]")
        object.__setattr__(self, "smoothing_taps", tuple(float(b) for b in self.smoothing_taps))


@dataclass(frozen=True)
class ErrorSignal:
    auditory: np.ndarray       # 4, Hz toward the region
    somatosensory: np.ndarray  # 8, per-dimension units toward the region

    def __post_init__(self):
        object.__setattr__(self, "auditory", np.asarray(self.auditory, dtype=float))
        object.__setattr__(self, "somatosensory", np.asarray(self.somatosensory, dtype=float))
        if self.auditory.shape != (4,) or self.somatosensory.shape != (8,):
            raise ValueError("error signal must be 4 auditory + 8 somatosensory components")


@dataclass(frozen=True)
class ForwardProgram:
    """Frame-indexed articulatory command matrix, the learned feedforward weights."""

    target_name: str
    frames: np.ndarray  # (N, 13)
    frame_ms: float = 5.0

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=float)
        if frames.ndim != 2 or frames.shape[1] != 13:
            raise ValueError(f"program frames must be (N, 13), got {frames.shape}")
        if np.any(frames < ART_LO - 1e-12) or np.any(frames > ART_HI + 1e-12):
            raise ValueError("program frames violate articulatory clamps")
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def duration_ms(self):
        return self.n_frames * self.frame_ms


def region_error(state_vec, target, dims, time_ms):
    """Distance from each state component to its target region at `time_ms`.

    Positive below the region, negative above, zero inside or when the
    dimension is unconstrained.
    """
    state_vec = np.asarray(state_vec, dtype=float)
    if len(state_vec) != len(dims):
        raise ValueError(f"state has {len(state_vec)} components for {len(dims)} dims")
    err = np.zeros(len(dims))
    for i, (v, dim) in enumerate(zip(state_vec, dims)):
        region = target.region_at(dim, time_ms)
        if region is None:
            continue
        lo, hi = region
        if v < lo:
            err[i] = lo - v
        elif v > hi:
            err[i] = hi - v
    return err


def _damped_pinv_apply(jac, err, lambda_rel):
    """J^T (J J^T + lambda I)^-1 err with lambda = lambda_rel * sigma_max(J)^2."""
    if not np.any(err):
        return np.zeros(jac.shape[1])
    sigma_max = np.linalg.norm(jac, 2)
    if sigma_max == 0:
        return np.zeros(jac.shape[1])
    lam = lambda_rel * sigma_max**2
    gram = jac @ jac.T + lam * np.eye(jac.shape[0])
    return jac.T @ np.linalg.solve(gram, err)


def corrective_command(art, err, cfg, basis):
    """Articulatory correction mapping sensory errors through damped pseudoinverses."""
    if not (np.any(err.auditory) or np.any(err.somatosensory)):
        return np.zeros(13)
    if cfg.g_aud == 0 and cfg.g_som == 0:
        return np.zeros(13)
    j_aud, j_som = tract.jacobian_pair(art, basis, cfg.fd_eps)
    delta = cfg.g_aud * _damped_pinv_apply(j_aud, err.auditory, cfg.lambda_rel)
    delta = delta + cfg.g_som * _damped_pinv_apply(j_som, err.somatosensory, cfg.lambda_rel)
    return delta


def feedforward_read(program, time_ms):
    """Linear interpolation of the program at `time_ms`, clamped to valid commands."""
    if not (0 <= time_ms <= program.duration_ms):
        raise ValueError(f"time {time_ms} outside [0, {program.duration_ms}]")
    pos = time_ms / program.frame_ms
    k = int(pos)
    if k >= program.n_frames - 1:
        row = program.frames[-1]
    else:
        frac = pos - k
        row = (1 - frac) * program.frames[k] + frac * program.frames[k + 1]
    return clamp_articulation(row)


def learn_update(program, corrections, rate):
    """One batch weight update: frames + rate * corrections, clamped."""
    corrections = np.asarray(corrections, dtype=float)
    if corrections.shape != program.frames.shape:
        raise ValueError(
            f"corrections shape {corrections.shape} != program shape {program.frames.shape}"
        )
    frames = clamp_articulation(program.frames + rate * corrections)
    return ForwardProgram(program.target_name, frames, program.frame_ms)


def reset_program(target, frame_ms=None):
    """Naive starting program: neutral posture, source params at window midpoints."""
    frame_ms = frame_ms or target.frame_ms
    if target.duration_ms % frame_ms:
        raise ValueError(
            f"frame period {frame_ms} ms does not divide duration {target.duration_ms} ms"
        )
    n = int(target.duration_ms // frame_ms)
    frames = np.zeros((n, 13))
    for k in range(n):
        t = k * frame_ms
        f0_region = target.region_at("F0", t)
        if f0_region is not None:
            mid = 0.5 * (f0_region[0] + f0_region[1])
            frames[k, 10] = np.clip(np.log2(mid / F0_BASE), -1.0, 1.0)
        for col, dim in ((11, "pressure"), (12, "voicing")):
            region = target.region_at(dim, t)
            frames[k, col] = 0.5 * (region[0] + region[1]) if region is not None else 1.0
    return ForwardProgram(target.name, frames, float(frame_ms))


def save_program(program, path):
    """Write `<name>.prog.csv`: header then N rows of 13 values at 17 significant digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(",".join(f"m{i + 1}" for i in range(13)) + "\n")
        for row in program.frames:
            f.write(",".join(f"{v:.17g}" for v in row) + "\n")


def load_program(path, target_name, frame_ms=5.0):
    frames = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return ForwardProgram(target_name, frames, float(frame_ms))
