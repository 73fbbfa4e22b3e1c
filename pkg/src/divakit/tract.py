"""Vocal-tract plant: articulatory state to sensory state and audio.

The tract shape is a linear combination of basis modes over 44 tube sections
(glottis at index 0, lips at the end). Auditory state (F0 and the first three
formant peaks of the chain-matrix transfer function) and somatosensory state
(six constriction-degree regions plus pressure and voicing) come from a fast
frequency-domain solve; audio comes from a time-domain reflection lattice fed
by a glottal pulse/noise source, so the two paths must agree on formants.
"""
import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .signals import Rng

__all__ = [
    "N_SHAPE",
    "N_SECTIONS",
    "ART_LO",
    "ART_HI",
    "ArticulatoryState",
    "AreaFunction",
    "AuditoryState",
    "SomatState",
    "TractBasis",
    "FormantError",
    "clamp_articulation",
    "load_basis",
    "area_function",
    "formants_from_area",
    "synth_sample",
    "synth_sample_batch",
    "jacobian",
    "synth_audio",
]

N_SHAPE = 10
N_SECTIONS = 44
SECTION_LENGTH_CM = 0.4
SPEED_OF_SOUND = 35000.0  # cm/s
F0_BASE = 120.0
AREA_FLOOR_CM2 = 0.05
A_OPEN_CM2 = 3.0  # constriction-degree normalization
WALL_LOSS = 2.0e-4  # Np/cm at 1 Hz, scaled by sqrt(f)

# articulatory vector layout: 10 shape coords, f0_param, pressure, voicing
ART_LO = np.array([-3.0] * N_SHAPE + [-1.0, 0.0, 0.0])
ART_HI = np.array([3.0] * N_SHAPE + [1.0, 1.0, 1.0])

DEFAULT_GRID = np.linspace(100.0, 5000.0, 246)

# six constriction regions from glottis to lips
_REGION_SLICES = [(g[0], g[-1] + 1) for g in np.array_split(np.arange(N_SECTIONS), 6)]


class FormantError(RuntimeError):
    """Resonance extraction failed (fewer than three usable peaks in band)."""


def clamp_articulation(vec):
    return np.clip(np.asarray(vec, dtype=float), ART_LO, ART_HI)


@dataclass(frozen=True)
class ArticulatoryState:
    shape: tuple  # 10 dimensionless articulator coordinates in [-3, 3]
    f0_param: float = 0.0  # [-1, 1], one octave down/up around 120 Hz
    pressure: float = 1.0
    voicing: float = 1.0

    def __post_init__(self):
        shape = tuple(float(v) for v in self.shape)
        if len(shape) != N_SHAPE:
            raise ValueError(f"shape must have {N_SHAPE} components, got {len(shape)}")
        object.__setattr__(self, "shape", shape)
        v = self.as_vector()
        if not np.all(np.isfinite(v)):
            raise ValueError("articulatory state must be finite")
        if np.any(v < ART_LO - 1e-12) or np.any(v > ART_HI + 1e-12):
            raise ValueError(f"articulatory state out of range: {v}")

    def as_vector(self):
        return np.array(list(self.shape) + [self.f0_param, self.pressure, self.voicing])

    @classmethod
    def neutral(cls):
        return cls(shape=(0.0,) * N_SHAPE)

    @classmethod
    def from_vector(cls, vec):
        vec = np.asarray(vec, dtype=float)
        return cls(shape=tuple(vec[:N_SHAPE]), f0_param=float(vec[10]),
                   pressure=float(vec[11]), voicing=float(vec[12]))


@dataclass(frozen=True)
class AreaFunction:
    areas: np.ndarray  # cm^2, glottis to lips
    section_length: float = SECTION_LENGTH_CM  # cm, uniform

    def __post_init__(self):
        a = np.asarray(self.areas, dtype=float)
        if a.ndim != 1 or not np.all(np.isfinite(a)) or np.any(a < 0):
            raise ValueError("areas must be a finite non-negative vector")
        object.__setattr__(self, "areas", a)

    @property
    def total_length(self):
        return len(self.areas) * self.section_length


@dataclass(frozen=True)
class AuditoryState:
    f0: float
    f1: float
    f2: float
    f3: float

    def as_vector(self):
        return np.array([self.f0, self.f1, self.f2, self.f3])


@dataclass(frozen=True)
class SomatState:
    place: tuple  # 6 constriction degrees in [0, 1], glottis to lips
    pressure: float
    voicing: float

    def as_vector(self):
        return np.array(list(self.place) + [self.pressure, self.voicing])


@dataclass(frozen=True)
class TractBasis:
    mean_area: np.ndarray  # (S,)
    modes: np.ndarray      # (S, 10)
    area_floor: float = AREA_FLOOR_CM2

    def __post_init__(self):
        mean = np.asarray(self.mean_area, dtype=float)
        modes = np.asarray(self.modes, dtype=float)
        if mean.shape != (N_SECTIONS,) or modes.shape != (N_SECTIONS, N_SHAPE):
            raise ValueError("basis must be mean (44,) and modes (44, 10)")
        if np.linalg.matrix_rank(modes) != N_SHAPE:
            raise ValueError("basis modes must have full column rank")
        if np.any(mean <= self.area_floor):
            raise ValueError("mean area must exceed the area floor everywhere")
        object.__setattr__(self, "mean_area", mean)
        object.__setattr__(self, "modes", modes)


def _default_basis_path():
    override = os.environ.get("DIVAKIT_DATA")
    if override:
        cand = os.path.join(override, "tract_basis.csv")
        if os.path.isfile(cand):
            return cand
    return os.path.join(os.path.dirname(__file__), "data", "tract_basis.csv")


@lru_cache(maxsize=4)
def _load_basis_cached(path):
    table = np.loadtxt(path, delimiter=",", skiprows=1)
    if table.shape[1] != 2 + N_SHAPE:
        raise ValueError(f"basis file must have {2 + N_SHAPE} columns")
    return TractBasis(mean_area=table[:, 1], modes=table[:, 2:])


def load_basis(path=None):
    """Load the tract basis CSV (packaged copy unless overridden)."""
    return _load_basis_cached(path or _default_basis_path())


def area_function(art, basis):
    """Tube areas for an articulation: floor(mean + modes . shape)."""
    raw = basis.mean_area + basis.modes @ np.asarray(art.shape)
    return AreaFunction(np.maximum(basis.area_floor, raw))


def _transfer_log_mag(areas, section_length, freqs):
    """log|U_lips/U_glottis| of the section chain at `freqs`.

    areas: (B, S); freqs: (F,) shared grid or (B, ...) per-item frequencies.
    Glottis-closed, lips-open termination: the transfer is 1/M22 of the
    product of per-section transmission matrices with small wall losses.
    """
    areas = np.atleast_2d(areas)
    f = np.asarray(freqs, dtype=float)
    per_item = f.ndim > 1
    flat = f.reshape(f.shape[0], -1) if per_item else f.reshape(1, -1)
    gamma_l = (WALL_LOSS * np.sqrt(flat) + 2j * np.pi * flat / SPEED_OF_SOUND) * section_length
    c = np.cosh(gamma_l)
    s = np.sinh(gamma_l)
    B = areas.shape[0]
    F = flat.shape[-1]
    m11 = np.ones((B, F), dtype=complex)
    m12 = np.zeros((B, F), dtype=complex)
    m21 = np.zeros((B, F), dtype=complex)
    m22 = np.ones((B, F), dtype=complex)
    inv_a = 1.0 / np.maximum(areas, 1e-6)
    for k in range(areas.shape[1]):
        z = inv_a[:, k:k + 1]  # impedance up to the shared rho*c factor
        zs = z * s
        s_over_z = s / z
        n11 = m11 * c + m12 * s_over_z
        n12 = m11 * zs + m12 * c
        n21 = m21 * c + m22 * s_over_z
        m22 = m21 * zs + m22 * c
        m11, m12, m21 = n11, n12, n21
    out = -np.log(np.abs(m22) + 1e-300)
    return out.reshape(f.shape) if per_item else out


def _parabolic_vertex(fm, f0, fp, ym, y0, yp):
    denom = ym - 2.0 * y0 + yp
    h = 0.5 * (fp - fm)
    shift = np.where(denom < -1e-12, 0.5 * h * (ym - yp) / np.where(denom == 0, 1.0, denom), 0.0)
    return f0 + np.clip(shift, -h, h)


def _formants_batch(areas, section_length, grid):
    """First three transfer-function peaks per area row, refined off-grid."""
    areas = np.atleast_2d(areas)
    B = areas.shape[0]
    y = _transfer_log_mag(areas, section_length, grid)
    y = y.reshape(B, -1)
    interior = (y[:, 1:-1] > y[:, :-2]) & (y[:, 1:-1] > y[:, 2:])
    peaks = np.zeros((B, 3))
    step = grid[1] - grid[0]
    for b in range(B):
        idx = np.nonzero(interior[b])[0] + 1
        if len(idx) < 3:
            raise FormantError(
                f"found {len(idx)} resonance peaks in [{grid[0]:.0f}, {grid[-1]:.0f}] Hz, need 3"
            )
        first = idx[:3]
        peaks[b] = _parabolic_vertex(
            grid[first - 1], grid[first], grid[first + 1],
            y[b, first - 1], y[b, first], y[b, first + 1],
        )
    # fixed refinement ladder keeps the estimate a smooth function of the areas,
    # which the finite-difference Jacobian relies on
    for h in (step / 6.0, step / 30.0, step / 150.0):
        probe = peaks[:, :, None] + np.array([-h, 0.0, h])
        vals = _transfer_log_mag(areas, section_length, probe.reshape(B, -1)).reshape(B, 3, 3)
        peaks = _parabolic_vertex(
            probe[:, :, 0], probe[:, :, 1], probe[:, :, 2],
            vals[:, :, 0], vals[:, :, 1], vals[:, :, 2],
        )
    return peaks


def formants_from_area(area_fn, grid=None):
    """First three resonance frequencies (Hz) of an area function."""
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
    areas = np.maximum(area_fn.areas, 1e-3)  # guard against zero-area divisions
    f = _formants_batch(areas[None, :], area_fn.section_length, grid)[0]
    return float(f[0]), float(f[1]), float(f[2])


def synth_sample_batch(arts, basis, grid=None):
    """Vectorized forward map: (B, 13) articulations -> auditory (B, 4), somatosensory (B, 8)."""
    grid = DEFAULT_GRID if grid is None else np.asarray(grid, dtype=float)
    arts = np.atleast_2d(np.asarray(arts, dtype=float))
    if not np.all(np.isfinite(arts)):
        raise ValueError("non-finite articulatory input")
    raw = basis.mean_area[None, :] + arts[:, :N_SHAPE] @ basis.modes.T
    floored = np.maximum(basis.area_floor, raw)
    f123 = _formants_batch(floored, SECTION_LENGTH_CM, grid)
    f0 = F0_BASE * np.exp2(arts[:, 10])
    aud = np.column_stack([f0, f123])
    place = np.empty((arts.shape[0], 6))
    for k, (a, b) in enumerate(_REGION_SLICES):
        # pre-floor areas so full closures register as constriction degree 1
        place[:, k] = np.clip(1.0 - raw[:, a:b].min(axis=1) / A_OPEN_CM2, 0.0, 1.0)
    som = np.column_stack([place, arts[:, 11], arts[:, 12]])
    return aud, som


def synth_sample(art, basis):
    """Auditory and somatosensory result of one articulatory state."""
    aud, som = synth_sample_batch(art.as_vector()[None, :], basis)
    return (
        AuditoryState(*(float(v) for v in aud[0])),
        SomatState(place=tuple(float(v) for v in som[0, :6]),
                   pressure=float(som[0, 6]), voicing=float(som[0, 7])),
    )


def jacobian_pair(art, basis, eps=1e-3):
    """Auditory (4x13) and somatosensory (8x13) Jacobians from one batched solve."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = art.as_vector()
    up = np.minimum(eps, ART_HI - x)
    dn = np.minimum(eps, x - ART_LO)
    batch = np.empty((26, 13))
    for d in range(13):
        batch[2 * d] = x
        batch[2 * d, d] += up[d]
        batch[2 * d + 1] = x
        batch[2 * d + 1, d] -= dn[d]
    aud, som = synth_sample_batch(batch, basis)
    if not (np.all(np.isfinite(aud)) and np.all(np.isfinite(som))):
        raise FormantError("non-finite forward evaluation in Jacobian")
    jacs = []
    for vals in (aud, som):
        jac = np.zeros((vals.shape[1], 13))
        for d in range(13):
            span = up[d] + dn[d]
            if span > 0:
                jac[:, d] = (vals[2 * d] - vals[2 * d + 1]) / span
        jacs.append(jac)
    return jacs[0], jacs[1]


def jacobian(art, space, basis, eps=1e-3):
    """Finite-difference sensitivity of the forward map at `art`.

    space 'auditory' gives a 4x13 matrix, 'somatosensory' 8x13. Central
    differences, falling back to one-sided steps at the clamp bounds.
    """
    if space not in ("auditory", "somatosensory"):
        raise ValueError(f"space must be 'auditory' or 'somatosensory', got {space!r}")
    j_aud, j_som = jacobian_pair(art, basis, eps)
    return j_aud if space == "auditory" else j_som


# time-domain lattice runs at an internal rate where one section equals one
# sample of one-way travel: f_int = c / section_length ~ 87.5 kHz; an integer
# oversampling of the audio rate (8 x 11025 = 88.2 kHz) lands within 0.8%
OVERSAMPLE = 8
GLOTTAL_REFLECTION = 0.97
LIP_REFLECTION = -0.9
LATTICE_DAMPING = 0.9995
JITTER_RANGE = 0.02
NOISE_GAIN = 0.25


def _frame_params(traj, basis):
    arts = np.array([a.as_vector() if isinstance(a, ArticulatoryState) else np.asarray(a, dtype=float)
                     for a in traj])
    raw = basis.mean_area[None, :] + arts[:, :N_SHAPE] @ basis.modes.T
    areas = np.maximum(basis.area_floor, raw)
    refl = (areas[:, :-1] - areas[:, 1:]) / (areas[:, :-1] + areas[:, 1:])
    f0 = F0_BASE * np.exp2(arts[:, 10])
    return refl, f0, arts[:, 11], arts[:, 12]


def synth_audio(trajectory, fs=11025, frame_period_ms=5.0, rng=None, basis=None,
                normalize=True):
    """Render a frame-indexed articulatory trajectory to a [-1, 1] waveform.

    Source: pressure * (voicing * glottal pulses at jittered f0 +
    (1 - voicing) * white noise * 0.25), filtered by the reflection lattice of
    the per-frame area functions with coefficients interpolated sample by
    sample. Peak normalization is skipped when the render is silent (or when
    `normalize` is False, which exposes the raw filter output).
    """
    if len(trajectory) == 0:
        raise ValueError("empty trajectory")
    if fs < 8000:
        raise ValueError(f"fs must be >= 8000, got {fs}")
    basis = basis or load_basis()
    rng = rng or Rng(0, deterministic=True)
    refl, f0s, press, voic = _frame_params(trajectory, basis)
    n_frames = len(f0s)
    n_out = int(round(n_frames * frame_period_ms * fs / 1000.0))
    n_int = n_out * OVERSAMPLE
    fs_int = fs * OVERSAMPLE
    spf = frame_period_ms * fs_int / 1000.0  # internal samples per frame

    # sample-rate interpolation of all frame parameters
    pos = np.minimum(np.arange(n_int) / spf, n_frames - 1.0)
    i0 = np.minimum(pos.astype(int), n_frames - 2) if n_frames > 1 else np.zeros(n_int, dtype=int)
    frac = (pos - i0) if n_frames > 1 else np.zeros(n_int)
    f0_t = f0s[i0] * (1 - frac) + f0s[np.minimum(i0 + 1, n_frames - 1)] * frac
    press_t = press[i0] * (1 - frac) + press[np.minimum(i0 + 1, n_frames - 1)] * frac
    voic_t = voic[i0] * (1 - frac) + voic[np.minimum(i0 + 1, n_frames - 1)] * frac
    refl_t = refl[i0] * (1 - frac[:, None]) + refl[np.minimum(i0 + 1, n_frames - 1)] * frac[:, None]

    # glottal pulse train: one impulse per period, each period jittered
    source = np.zeros(n_int)
    pos = 0.0
    while pos < n_int:
        i = int(pos)
        jitter = rng.uniform("jitter", -JITTER_RANGE, JITTER_RANGE)
        source[i] = press_t[i] * voic_t[i]
        pos += fs_int / (f0_t[i] * (1.0 + jitter))
    aspiration = press_t * (1.0 - voic_t) * NOISE_GAIN
    if np.any(aspiration > 0):
        noise = np.array([rng.uniform("noise", -1.0, 1.0) for _ in range(n_int)])
        source += aspiration * noise

    out_int = _lattice_filter(source, refl_t)
    # anti-alias and decimate back to the audio rate
    from scipy.signal import firwin, lfilter

    taps = firwin(129, 0.9 / OVERSAMPLE)
    filtered = lfilter(taps, 1.0, out_int)
    wave = filtered[64::OVERSAMPLE][:n_out]
    if len(wave) < n_out:
        wave = np.pad(wave, (0, n_out - len(wave)))
    peak = np.max(np.abs(wave))
    if normalize and peak > 1e-9:
        wave = wave / peak
    return wave


def _lattice_kernel(source, refl_t, g_refl, l_refl, damp):
    """Kelly-Lochbaum scattering of the source through time-varying reflections."""
    n = len(source)
    n_junc = refl_t.shape[1]
    n_sec = n_junc + 1
    right = np.zeros(n_sec)
    left = np.zeros(n_sec)
    new_right = np.zeros(n_sec)
    new_left = np.zeros(n_sec)
    out = np.empty(n)
    for i in range(n):
        out[i] = (1.0 + l_refl) * right[n_sec - 1]
        new_right[0] = g_refl * left[0] + source[i]
        for j in range(n_junc):
            w = refl_t[i, j] * (right[j] + left[j + 1])
            new_right[j + 1] = (right[j] - w) * damp
            new_left[j] = (left[j + 1] + w) * damp
        new_left[n_sec - 1] = l_refl * right[n_sec - 1]
        right, new_right = new_right, right
        left, new_left = new_left, left
    return out


try:  # optional acceleration; the fallback computes bit-identical doubles
    from numba import njit as _njit

    _lattice_jit = _njit(cache=True)(_lattice_kernel)
except ImportError:  # pragma: no cover
    _lattice_jit = None


def _lattice_filter(source, refl_t):
    args = (source, refl_t, GLOTTAL_REFLECTION, LIP_REFLECTION, LATTICE_DAMPING)
    if _lattice_jit is not None:
        return _lattice_jit(*args)
    return _lattice_kernel(*args)
