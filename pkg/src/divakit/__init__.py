"""divakit: articulatory speech synthesis with feedforward/feedback motor control.

A region-target speech production engine: a vocal-tract plant maps a 13-dim
articulatory state to auditory/somatosensory states and audio, a damped
Jacobian-pseudoinverse feedback loop corrects productions against per-
dimension target regions, and an iterative learning rule folds corrections
into the feedforward motor program.
"""
from .analysis import SignalPair, max_abs_diff, normalized_rmse
from .control import ControlConfig, ForwardProgram, learn_update, reset_program
from .engine import EngineConfig, Trace, produce_and_learn, simulate
from .signals import DelayLine, FirFilter, Rng
from .targets import (
    FormantTrack,
    RegionWindow,
    SpeechTarget,
    builtin_targets,
    parse_target,
    serialize_target,
    target_from_formant_track,
)
from .tract import (
    ArticulatoryState,
    AreaFunction,
    AuditoryState,
    SomatState,
    TractBasis,
    area_function,
    formants_from_area,
    jacobian,
    load_basis,
    synth_audio,
    synth_sample,
)

__version__ = "0.1.0"
