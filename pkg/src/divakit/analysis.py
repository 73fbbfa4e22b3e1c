"""Validation instruments: normalized RMSE, audio diffs, spectrograms,
LPC formant and autocorrelation pitch extraction, and 16-bit WAV I/O.
"""
import wave
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AnalysisError",
    "SignalPair",
    "normalized_rmse",
    "max_abs_diff",
    "spectrogram",
    "lpc_formants",
    "pitch_track",
    "write_wav",
    "read_wav",
]


class AnalysisError(ValueError):
    pass


@dataclass(frozen=True)
class SignalPair:
    """Two same-shape signals plus the maximum possible amplitude of their class."""

    a: np.ndarray
    b: np.ndarray
    signal_range: float

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if a.shape != b.shape:
            raise AnalysisError(f"signal shapes differ: {a.shape} vs {b.shape}")
        if self.signal_range <= 0:
            raise AnalysisError(f"signal_range must be positive, got {self.signal_range}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)


def normalized_rmse(pair):
    """RMS of (a - b) as a percentage of the maximum possible amplitude."""
    diff = pair.a - pair.b
    return 100.0 * float(np.sqrt(np.mean(diff * diff))) / pair.signal_range


def max_abs_diff(wav_a, wav_b):
    """Largest absolute sample difference between two equal-length waveforms."""
    a = np.asarray(wav_a, dtype=float)
    b = np.asarray(wav_b, dtype=float)
    if a.shape != b.shape:
        raise AnalysisError(f"waveform lengths differ: {a.shape} vs {b.shape}")
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def spectrogram(wav, fs, win=256, hop=128):
    """Hann-windowed short-time Fourier magnitudes, shape (n_frames, win // 2 + 1)."""
    wav = np.asarray(wav, dtype=float)
    if win < hop or hop <= 0:
        raise AnalysisError(f"need win >= hop > 0, got win={win} hop={hop}")
    if len(wav) < win:
        raise AnalysisError(f"waveform ({len(wav)} samples) shorter than window ({win})")
    n_frames = (len(wav) - win) // hop + 1
    window = np.hanning(win)
    frames = np.stack([wav[i * hop:i * hop + win] * window for i in range(n_frames)])
    return np.abs(np.fft.rfft(frames, axis=1))


def _levinson_durbin(r, order):
    a = np.zeros(order + 1)
    a[0] = 1.0
    err = r[0]
    for i in range(1, order + 1):
        acc = r[i] + np.dot(a[1:i], r[i - 1:0:-1])
        k = -acc / err
        a[1:i + 1] = a[1:i + 1] + k * a[i - 1::-1][:i]
        err *= 1.0 - k * k
        if err <= 0:
            break
    return a


def _formants_from_lpc(a, fs, max_bandwidth):
    roots = np.roots(a)
    roots = roots[np.imag(roots) > 1e-8]
    freqs = np.angle(roots) * fs / (2 * np.pi)
    mags = np.abs(roots)
    bw = -fs / np.pi * np.log(np.maximum(mags, 1e-12))
    keep = (freqs > 90) & (freqs < fs / 2 - 50) & (bw < max_bandwidth)
    return np.sort(freqs[keep])


def lpc_formants(wav, fs, order=12, frame_ms=30.0, hop_ms=15.0,
                 max_bandwidth=500.0, energy_gate=0.1, preemphasis=0.0):
    """First three formants per voiced frame via autocorrelation LPC.

    Frames below `energy_gate` of the loudest frame RMS are skipped; a frame
    must yield at least three roots with bandwidth under `max_bandwidth` Hz
    to contribute. Returns an (n_voiced_frames, 3) array.
    """
    if not 8 <= order <= 20:
        raise AnalysisError(f"order must be in [8, 20], got {order}")
    wav = np.asarray(wav, dtype=float)
    emphasized = np.append(wav[0], wav[1:] - preemphasis * wav[:-1]) if preemphasis else wav
    win = int(fs * frame_ms / 1000)
    hop = int(fs * hop_ms / 1000)
    if len(emphasized) < win:
        raise AnalysisError("waveform shorter than one analysis frame")
    n_frames = (len(emphasized) - win) // hop + 1
    window = np.hamming(win)
    rms = np.array([np.sqrt(np.mean(emphasized[i * hop:i * hop + win] ** 2)) for i in range(n_frames)])
    gate = energy_gate * rms.max()
    if rms.max() < 1e-8 or not np.any(rms >= gate):
        raise AnalysisError("no voiced frames above the energy gate")
    out = []
    short = 0
    for i in range(n_frames):
        if rms[i] < gate:
            continue
        frame = emphasized[i * hop:i * hop + win] * window
        r = np.correlate(frame, frame, mode="full")[win - 1:win + order]
        if r[0] <= 0:
            continue
        a = _levinson_durbin(r, order)
        freqs = _formants_from_lpc(a, fs, max_bandwidth)
        if len(freqs) < 3:
            short += 1
            continue
        out.append(freqs[:3])
    if not out:
        raise AnalysisError(
            f"fewer than 3 qualifying formant roots in every voiced frame ({short} frames tried)"
        )
    return np.array(out)


def pitch_track(wav, fs, frame_ms=50.0, hop_ms=12.5, f_min=60.0, f_max=400.0,
                voicing_threshold=0.3):
    """Per-frame f0 from the normalized autocorrelation peak; NaN marks unvoiced.

    Returns (times_ms, f0_hz). The strongest autocorrelation lag inside the
    band wins; the biased (tapering) estimator favors the shortest true
    period, so a 240 Hz tone reports 240, not 120, while formant ringing
    stays below the fundamental's peak.
    """
    wav = np.asarray(wav, dtype=float)
    win = int(fs * frame_ms / 1000)
    hop = int(fs * hop_ms / 1000)
    lag_min = int(fs / f_max)
    lag_max = int(np.ceil(fs / f_min))
    if len(wav) < win:
        return np.array([]), np.array([])
    n_frames = (len(wav) - win) // hop + 1
    times = np.arange(n_frames) * hop_ms + frame_ms / 2
    f0 = np.full(n_frames, np.nan)
    for i in range(n_frames):
        frame = wav[i * hop:i * hop + win]
        frame = frame - frame.mean()
        r = np.correlate(frame, frame, mode="full")[win - 1:]
        if r[0] < 1e-10:
            continue
        r = r / r[0]
        hi = min(lag_max, win - 2)
        lag = lag_min + int(np.argmax(r[lag_min:hi]))
        if r[lag] < voicing_threshold:
            continue
        denom = r[lag - 1] - 2 * r[lag] + r[lag + 1]
        shift = 0.5 * (r[lag - 1] - r[lag + 1]) / denom if denom < 0 else 0.0
        f0[i] = fs / (lag + np.clip(shift, -0.5, 0.5))
    return times, f0


def write_wav(path, wav, fs):
    """Write a mono [-1, 1] waveform as 16-bit PCM."""
    samples = np.clip(np.asarray(wav, dtype=float), -1.0, 1.0)
    pcm = np.round(samples * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(fs))
        w.writeframes(pcm.tobytes())


def read_wav(path):
    """Read a mono 16-bit PCM WAV; returns (waveform in [-1, 1], fs)."""
    try:
        with wave.open(str(path), "rb") as w:
            if w.getnchannels() != 1:
                raise AnalysisError(f"{path}: expected mono, got {w.getnchannels()} channels")
            if w.getsampwidth() != 2 or w.getcomptype() != "NONE":
                raise AnalysisError(f"{path}: expected uncompressed 16-bit PCM")
            fs = w.getframerate()
            raw = w.readframes(w.getnframes())
    except (wave.Error, EOFError) as exc:
        raise AnalysisError(f"{path}: malformed WAV ({exc})") from exc
    return np.frombuffer(raw, dtype="<i2").astype(float) / 32767.0, fs
