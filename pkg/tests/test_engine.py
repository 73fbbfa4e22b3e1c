import json

import numpy as np
import pytest

from divakit.control import ControlConfig, load_program, reset_program
from divakit.engine import (
    TRACE_COLUMNS,
    EngineConfig,
    load_trace_csv,
    produce_and_learn,
    save_trace,
    simulate,
)
from divakit.targets import AUDITORY_DIMS, RegionWindow, SpeechTarget, resolve_target
from divakit.tract import load_basis

BASIS = load_basis()


def open_target():
    """No constrained dimensions: every production is error-free."""
    return SpeechTarget("open", 200, 5, {})


def toy_target():
    return SpeechTarget("toy", 200, 5, {
        "F0": [RegionWindow(0, 200, 114, 126)],
        "F1": [RegionWindow(0, 200, 540, 640)],
        "pressure": [RegionWindow(0, 200, 0.9, 1.0)],
        "voicing": [RegionWindow(0, 200, 0.9, 1.0)],
    })


class TestSimulate:
    def test_open_loop_equivalence(self):
        # zero gains and identity smoothing: motor is exactly the program
        target = open_target()
        rng = np.random.default_rng(2)
        frames = np.clip(rng.normal(0, 0.8, (40, 13)), 0, 1)
        program = reset_program(target)
        program = program.__class__(program.target_name, np.clip(frames, -1, 1), 5.0)
        cfg = EngineConfig(control=ControlConfig(g_aud=0.0, g_som=0.0, smoothing_taps=(1.0,)))
        trace = simulate(target, program, cfg, BASIS)
        assert np.array_equal(trace.motor, program.frames)
        assert np.array_equal(trace.feedforward, program.frames)
        assert np.array_equal(trace.corrective, np.zeros((40, 13)))

    def test_deterministic_bitwise_repeat(self):
        target = toy_target()
        program = reset_program(target)
        cfg = EngineConfig(seed=1, deterministic=True)
        a = simulate(target, program, cfg, BASIS)
        b = simulate(target, program, cfg, BASIS)
        assert np.array_equal(a.matrix(), b.matrix())
        assert np.array_equal(a.audio, b.audio)

    def test_bookkeeping_lengths(self):
        target = SpeechTarget("v", 400, 5, {})
        trace = simulate(target, reset_program(target), EngineConfig(), BASIS)
        assert trace.n_frames == 80
        for name in ("motor", "feedforward", "corrective"):
            assert getattr(trace, name).shape == (80, 13)
        assert trace.auditory.shape == (80, 4)
        assert trace.somatosensory.shape == (80, 8)
        assert len(trace.audio) == round(0.4 * 11025)

    def test_frame_period_must_divide_duration(self):
        target = SpeechTarget("v", 401, 5, {})
        with pytest.raises(ValueError):
            simulate(target, reset_program(SpeechTarget("v", 400, 5, {})), EngineConfig(), BASIS)

    def test_program_length_validated(self):
        target = SpeechTarget("v", 400, 5, {})
        short = reset_program(SpeechTarget("v", 200, 5, {}))
        with pytest.raises(ValueError):
            simulate(target, short, EngineConfig(), BASIS)

    def test_delay_correctness(self):
        target = toy_target()
        cfg = EngineConfig(seed=0, deterministic=True)
        trace = simulate(target, reset_program(target), cfg, BASIS)
        delayed = trace.extras["delayed_aud"]
        d = cfg.aud_delay
        # the state recorded at frame n is consumed exactly d frames later
        for n in range(trace.n_frames - d):
            assert np.array_equal(delayed[n + d], trace.auditory[n])


class TestFixedPoint:
    def test_error_free_program_is_fixed(self):
        target = open_target()
        program = reset_program(target)
        cfg = EngineConfig(seed=3, deterministic=True)
        programs, traces = produce_and_learn(target, 3, cfg, start=program, basis=BASIS)
        for p in programs[1:]:
            assert np.array_equal(p.frames, program.frames)
        for t in traces[1:]:
            assert np.array_equal(t.matrix(), traces[0].matrix())
            assert np.array_equal(t.audio, traces[0].audio)

    def test_shipped_trained_program_nearly_fixed(self):
        target = resolve_target("u")
        program = load_program(
            __file__.replace("tests/test_engine.py", "src/divakit/data/programs/u.prog.csv"),
            "u",
        )
        cfg = EngineConfig(seed=0, deterministic=True)
        trace = simulate(target, program, cfg, BASIS)
        assert np.linalg.norm(trace.corrective, axis=1).mean() < 1e-4


class TestProduceAndLearn:
    def test_zero_iterations(self):
        target = toy_target()
        programs, traces = produce_and_learn(target, 0, EngineConfig(), basis=BASIS)
        assert len(programs) == 1 and traces == []

    def test_counts(self):
        target = toy_target()
        programs, traces = produce_and_learn(target, 4, EngineConfig(deterministic=True), basis=BASIS)
        assert len(programs) == 5
        assert len(traces) == 4
        assert [t.iteration for t in traces] == [0, 1, 2, 3]

    def test_learning_reduces_corrections(self):
        target = toy_target()
        programs, traces = produce_and_learn(target, 6, EngineConfig(deterministic=True), basis=BASIS)
        c = [np.linalg.norm(t.corrective, axis=1).mean() for t in traces]
        assert c[-1] < 0.2 * c[0]

    def test_monotone_improvement_across_vowels_and_seeds(self):
        # medians of mean corrective norm over 4 vowels x 5 seeds must be
        # non-increasing across iterations 1..5
        per_iteration = [[] for _ in range(5)]
        for name in ("i", "u", "e", "ae"):
            target = resolve_target(name)
            for seed in range(5):
                cfg = EngineConfig(seed=seed)
                _, traces = produce_and_learn(target, 5, cfg, basis=BASIS)
                for i, t in enumerate(traces):
                    per_iteration[i].append(np.linalg.norm(t.corrective, axis=1).mean())
        medians = [float(np.median(v)) for v in per_iteration]
        assert all(a >= b - 1e-12 for a, b in zip(medians, medians[1:])), medians


class TestTraceExport:
    def test_save_and_load_roundtrip(self, tmp_path):
        target = toy_target()
        cfg = EngineConfig(seed=1, deterministic=True)
        trace = simulate(target, reset_program(target), cfg, BASIS)
        csv_path, wav_path, meta_path = save_trace(trace, tmp_path, "toy")
        mat, cols = load_trace_csv(csv_path)
        assert cols == TRACE_COLUMNS
        assert np.array_equal(mat, trace.matrix())  # 17 significant digits round-trip
        meta = json.loads(open(meta_path).read())
        assert meta["target"] == "toy"
        assert meta["seed"] == 1
        assert meta["config_hash"] == cfg.hash()

    def test_load_rejects_non_trace(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError):
            load_trace_csv(path)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            EngineConfig(aud_delay=-1)
        with pytest.raises(ValueError):
            EngineConfig(frame_period_ms=0)
        with pytest.raises(ValueError):
            ControlConfig(learn_rate=0)

    def test_hash_stable_and_sensitive(self):
        a, b = EngineConfig(seed=1), EngineConfig(seed=1)
        assert a.hash() == b.hash()
        assert a.hash() != EngineConfig(seed=2).hash()