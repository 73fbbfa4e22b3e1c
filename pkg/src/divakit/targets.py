"""Speech-target regions: data model, plain-text format, and track-to-target building.

A target names, per sensory dimension, a list of [min, max] windows over the
utterance time-course. Between windows the bounds are linearly interpolated;
before the first and after the last window they are held. Dimensions with no
windows are unconstrained.
"""
import os
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "DIMENSIONS",
    "AUDITORY_DIMS",
    "SOMATOSENSORY_DIMS",
    "RegionWindow",
    "SpeechTarget",
    "FormantTrack",
    "TargetError",
    "parse_target",
    "serialize_target",
    "target_from_formant_track",
    "builtin_target_names",
    "builtin_targets",
    "load_target",
    "resolve_target",
]

AUDITORY_DIMS = ("F0", "F1", "F2", "F3")
SOMATOSENSORY_DIMS = ("PA1", "PA2", "PA3", "PA4", "PA5", "PA6", "pressure", "voicing")
DIMENSIONS = AUDITORY_DIMS + SOMATOSENSORY_DIMS

_BUILTIN_NAMES = ("i", "u", "e", "ae", "happy", "example")


class TargetError(ValueError):
    """Target text or structure violation, tagged with a diagnostic kind.

    Kinds: syntax, value, unknown_dim, time_order, min_max, out_of_range,
    overlap, ordering.
    """

    def __init__(self, kind, message, line=None, col=None):
        self.kind = kind
        self.line = line
        self.col = col
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", col {col}" if col is not None else "") + ")"
        super().__init__(f"{message}{loc}")


@dataclass(frozen=True)
class RegionWindow:
    t_start: float  # ms
    t_end: float    # ms
    lo: float
    hi: float

    def __post_init__(self):
        if not (self.t_start < self.t_end):
            raise TargetError("time_order", f"window start {self.t_start} must precede end {self.t_end}")
        if self.lo > self.hi:
            raise TargetError("min_max", f"window min {self.lo} exceeds max {self.hi}")


@dataclass(frozen=True)
class SpeechTarget:
    """Named set of per-dimension region windows over a production time-course."""

    name: str
    duration_ms: int
    frame_ms: int = 5
    dims: dict = field(default_factory=dict)  # dim name -> tuple of RegionWindow

    def __post_init__(self):
        if self.duration_ms <= 0:
            raise TargetError("value", f"duration_ms must be positive, got {self.duration_ms}")
        if self.frame_ms <= 0:
            raise TargetError("value", f"frame_ms must be positive, got {self.frame_ms}")
        clean = {}
        for dim, windows in self.dims.items():
            if dim not in DIMENSIONS:
                raise TargetError("unknown_dim", f"unknown dimension {dim!r}")
            ws = tuple(sorted(windows, key=lambda w: w.t_start))
            for w in ws:
                if w.t_start < 0 or w.t_end > self.duration_ms:
                    raise TargetError(
                        "out_of_range",
                        f"dim {dim}: window [{w.t_start}, {w.t_end}] outside [0, {self.duration_ms}]",
                    )
            for a, b in zip(ws, ws[1:]):
                # touching windows are rejected too: region bounds must stay continuous
                if b.t_start <= a.t_end:
                    raise TargetError(
                        "overlap",
                        f"dim {dim}: windows [{a.t_start}, {a.t_end}] and [{b.t_start}, {b.t_end}] overlap or touch",
                    )
            clean[dim] = ws
        object.__setattr__(self, "dims", clean)

    @property
    def n_frames(self):
        return self.duration_ms // self.frame_ms

    def region_at(self, dim, time_ms):
        """Bounds (lo, hi) for `dim` at `time_ms`, or None if unconstrained.

        Inside a window the window bounds apply; in a gap both bounds ramp
        linearly; outside the window span the nearest window's bounds hold.
        """
        if not (0 <= time_ms <= self.duration_ms):
            raise TargetError(
                "out_of_range", f"time {time_ms} outside [0, {self.duration_ms}]"
            )
        windows = self.dims.get(dim)
        if not windows:
            return None
        if time_ms <= windows[0].t_start:
            return (windows[0].lo, windows[0].hi)
        for i, w in enumerate(windows):
            if time_ms <= w.t_end:
                if time_ms >= w.t_start:
                    return (w.lo, w.hi)
                prev = windows[i - 1]
                frac = (time_ms - prev.t_end) / (w.t_start - prev.t_end)
                return (
                    prev.lo + frac * (w.lo - prev.lo),
                    prev.hi + frac * (w.hi - prev.hi),
                )
        last = windows[-1]
        return (last.lo, last.hi)


@dataclass(frozen=True)
class FormantTrack:
    """Pitch and formant trajectories sampled at strictly increasing times (ms)."""

    times: tuple
    f0: tuple
    f1: tuple
    f2: tuple
    f3: tuple

    def __post_init__(self):
        for name in ("times", "f0", "f1", "f2", "f3"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        n = len(self.times)
        if n == 0:
            raise TargetError("value", "formant track is empty")
        if any(len(getattr(self, k)) != n for k in ("f0", "f1", "f2", "f3")):
            raise TargetError("value", "formant track channels have unequal lengths")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise TargetError("value", "track times must be strictly increasing")
        for k in ("f0", "f1", "f2", "f3"):
            if any(v <= 0 for v in getattr(self, k)):
                raise TargetError("value", f"non-positive frequency in {k}")
        for a, b, c, d in zip(self.f0, self.f1, self.f2, self.f3):
            if not (a < b < c < d):
                raise TargetError("ordering", "track violates F0 < F1 < F2 < F3 at some sample")


def _fmt(x):
    return repr(float(x))


def serialize_target(target):
    """Canonical text form: fixed dimension order, windows sorted, repr floats."""
    lines = [f"target {target.name}", f"duration_ms {target.duration_ms}", f"frame_ms {target.frame_ms}"]
    for dim in DIMENSIONS:
        for w in target.dims.get(dim, ()):
            lines.append(
                f"dim {dim} window {_fmt(w.t_start)} {_fmt(w.t_end)} {_fmt(w.lo)} {_fmt(w.hi)}"
            )
    return "\n".join(lines) + "\n"


def _parse_number(tok, lineno, col, what):
    try:
        return float(tok)
    except ValueError:
        raise TargetError("syntax", f"expected a number for {what}, got {tok!r}", lineno, col) from None


def _parse_int(tok, lineno, col, what):
    try:
        return int(tok)
    except ValueError:
        raise TargetError("syntax", f"expected an integer for {what}, got {tok!r}", lineno, col) from None


def parse_target(text):
    """Parse the plain-text target format into a SpeechTarget.

    Grammar (one statement per line, '#' starts a comment):
        target <name>
        duration_ms <int>
        frame_ms <int>          (optional, default 5)
        dim <name> window <t0_ms> <t1_ms> <min> <max>
    """
    name = None
    duration = None
    frame_ms = None
    dims = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        toks = line.split()
        col = line.index(toks[0]) + 1
        key = toks[0]
        if key == "target":
            if name is not None:
                raise TargetError("syntax", "duplicate 'target' line", lineno, col)
            if len(toks) != 2:
                raise TargetError("syntax", "expected: target <name>", lineno, col)
            name = toks[1]
        elif key == "duration_ms":
            if name is None:
                raise TargetError("syntax", "'target' line must come first", lineno, col)
            if duration is not None:
                raise TargetError("syntax", "duplicate 'duration_ms' line", lineno, col)
            if len(toks) != 2:
                raise TargetError("syntax", "expected: duration_ms <int>", lineno, col)
            duration = _parse_int(toks[1], lineno, col, "duration_ms")
        elif key == "frame_ms":
            if duration is None:
                raise TargetError("syntax", "'frame_ms' must follow 'duration_ms'", lineno, col)
            if frame_ms is not None:
                raise TargetError("syntax", "duplicate 'frame_ms' line", lineno, col)
            if len(toks) != 2:
                raise TargetError("syntax", "expected: frame_ms <int>", lineno, col)
            frame_ms = _parse_int(toks[1], lineno, col, "frame_ms")
        elif key == "dim":
            if duration is None:
                raise TargetError("syntax", "'dim' lines must follow 'duration_ms'", lineno, col)
            if len(toks) != 7 or toks[2] != "window":
                raise TargetError(
                    "syntax", "expected: dim <name> window <t0> <t1> <min> <max>", lineno, col
                )
            dim = toks[1]
            if dim not in DIMENSIONS:
                raise TargetError(
                    "unknown_dim",
                    f"unknown dimension {dim!r} (expected one of {', '.join(DIMENSIONS)})",
                    lineno,
                    line.index(dim, 4) + 1,
                )
            numcols = [line.index(t, 4) + 1 for t in toks[3:]]
            t0 = _parse_number(toks[3], lineno, numcols[0], "window start")
            t1 = _parse_number(toks[4], lineno, numcols[1], "window end")
            lo = _parse_number(toks[5], lineno, numcols[2], "window min")
            hi = _parse_number(toks[6], lineno, numcols[3], "window max")
            if t0 >= t1:
                raise TargetError("time_order", f"dim {dim}: window start {t0} must precede end {t1}", lineno, col)
            if lo > hi:
                raise TargetError("min_max", f"dim {dim}: window min {lo} exceeds max {hi}", lineno, col)
            dims.setdefault(dim, []).append(RegionWindow(t0, t1, lo, hi))
        else:
            raise TargetError("syntax", f"unknown statement {key!r}", lineno, col)
    if name is None:
        raise TargetError("syntax", "missing 'target' line", 1, 1)
    if duration is None:
        raise TargetError("syntax", "missing 'duration_ms' line", 1, 1)
    return SpeechTarget(name=name, duration_ms=duration, frame_ms=frame_ms or 5, dims=dims)


# Relative spread below which a resampled track collapses to one window.
_SUSTAINED_SPREAD = 0.10


def target_from_formant_track(track, rel_tolerance, duration_ms, name="speech", frame_ms=5):
    """Build a target whose F0..F3 windows bound the track values by +-rel_tolerance.

    Sustained channels (relative spread below 10%) collapse to one window over
    the whole duration; varying channels get one window per 60 ms chunk with
    10 ms ramping gaps. Pressure and voicing always get a single [0.9, 1.0]
    window (sustained phonation).
    """
    if rel_tolerance < 0:
        raise TargetError("value", f"rel_tolerance must be >= 0, got {rel_tolerance}")
    duration_ms = int(duration_ms)
    n_frames = max(2, duration_ms // frame_ms)
    grid = np.linspace(0.0, duration_ms, n_frames)
    t = np.asarray(track.times)
    dims = {}
    for dim, values in zip(AUDITORY_DIMS, (track.f0, track.f1, track.f2, track.f3)):
        v = np.asarray(values)
        # map the track's own time span onto [0, duration]
        src_t = (t - t[0]) / (t[-1] - t[0]) * duration_ms if len(t) > 1 else np.array([0.0])
        resampled = np.interp(grid, src_t, v)
        mean = float(resampled.mean())
        spread = float(resampled.max() - resampled.min()) / mean
        if spread <= _SUSTAINED_SPREAD:
            windows = [RegionWindow(0.0, float(duration_ms), mean * (1 - rel_tolerance), mean * (1 + rel_tolerance))]
        else:
            windows = []
            chunk, gap = 60.0, 10.0
            t0 = 0.0
            while t0 < duration_ms:
                t1 = min(t0 + chunk, float(duration_ms))
                if t1 - t0 < frame_ms:
                    break
                sel = (grid >= t0) & (grid <= t1)
                seg = resampled[sel]
                windows.append(
                    RegionWindow(t0, t1, float(seg.min()) * (1 - rel_tolerance), float(seg.max()) * (1 + rel_tolerance))
                )
                t0 = t1 + gap
        dims[dim] = windows
    dims["pressure"] = [RegionWindow(0.0, float(duration_ms), 0.9, 1.0)]
    dims["voicing"] = [RegionWindow(0.0, float(duration_ms), 0.9, 1.0)]
    return SpeechTarget(name=name, duration_ms=duration_ms, frame_ms=frame_ms, dims=dims)


def _data_dir():
    override = os.environ.get("DIVAKIT_DATA")
    if override:
        return override
    return os.path.join(os.path.dirname(__file__), "data")


def load_target(path):
    with open(path, "r", encoding="utf-8") as f:
        return parse_target(f.read())


def builtin_target_names():
    return list(_BUILTIN_NAMES)


def builtin_targets():
    """The shipped targets: vowels i, u, e, ae, the word happy, and the untrained example."""
    return [resolve_target(n) for n in _BUILTIN_NAMES]


def resolve_target(ref):
    """Resolve a builtin name, a name under the data dir, or a file path."""
    base = _data_dir()
    candidates = []
    if os.path.sep not in str(ref) and not str(ref).endswith(".target"):
        candidates.append(os.path.join(base, "targets", f"{ref}.target"))
        candidates.append(os.path.join(os.path.dirname(__file__), "data", "targets", f"{ref}.target"))
    candidates.append(str(ref))
    for cand in candidates:
        if os.path.isfile(cand):
            return load_target(cand)
    raise TargetError("value", f"unknown target {ref!r}")
