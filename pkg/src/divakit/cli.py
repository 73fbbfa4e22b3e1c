"""Command-line front door: produce/train targets, build targets from audio,
run the mimic pipeline, and compare recorded traces.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation error.
"""
import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone

import numpy as np

from . import analysis
from .analysis import AnalysisError, SignalPair, max_abs_diff, normalized_rmse
from .control import ControlConfig, load_program, reset_program, save_program
from .engine import (
    TRACE_GROUPS,
    EngineConfig,
    load_trace_csv,
    produce_and_learn,
    save_trace,
    simulate,
)
from .targets import (
    FormantTrack,
    TargetError,
    builtin_target_names,
    resolve_target,
    serialize_target,
    target_from_formant_track,
)

MOTOR_RANGE_DEFAULT = 6.0  # clamp span of a shape coordinate
GROUP_RANGES = {"auditory": 5000.0, "aud_error": 5000.0, "somatosensory": 1.0, "som_error": 1.0}


class CliError(Exception):
    def __init__(self, message, code=1):
        super().__init__(message)
        self.code = code


def _utcnow():
    return datetime.now(timezone.utc).isoformat()


def _write_manifest(out_dir, command, args, cfg, outputs):
    manifest = {
        "command": command,
        "args": {k: v for k, v in sorted(vars(args).items()) if k != "func"},
        "seed": cfg.seed if cfg else None,
        "config_hash": cfg.hash() if cfg else None,
        "outputs": sorted(os.path.relpath(p, out_dir) for p in outputs),
        "created_utc": _utcnow(),
    }
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True, default=str)
        f.write("\n")
    missing = [p for p in outputs if not os.path.isfile(p)]
    if missing:
        raise CliError(f"missing declared outputs: {missing}")
    return path


def _parse_config_file(path):
    """Key-value overrides, one `key = value` per line, '#' comments."""
    values = {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            for lineno, raw in enumerate(f, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise CliError(f"{path}:{lineno}: expected 'key = value'", code=2)
                key, _, val = line.partition("=")
                values[key.strip()] = val.strip()
    except OSError as exc:
        raise CliError(f"cannot read config file: {exc}", code=2) from exc
    return values


_CONTROL_KEYS = {"g_aud": float, "g_som": float, "lambda_rel": float, "learn_rate": float,
                 "fd_eps": float, "fb_integration": float}
_ENGINE_KEYS = {"frame_period_ms": float, "fs": int, "aud_delay": int, "som_delay": int}


def _build_config(args):
    overrides = _parse_config_file(args.config) if getattr(args, "config", None) else {}
    control_kwargs, engine_kwargs = {}, {}
    for key, val in overrides.items():
        if key in _CONTROL_KEYS:
            control_kwargs[key] = _CONTROL_KEYS[key](val)
        elif key in _ENGINE_KEYS:
            engine_kwargs[key] = _ENGINE_KEYS[key](val)
        elif key == "smoothing_taps":
            control_kwargs["smoothing_taps"] = tuple(float(v) for v in val.split(","))
        else:
            raise CliError(f"unknown config key {key!r}", code=2)
    try:
        return EngineConfig(
            seed=args.seed,
            deterministic=args.deterministic,
            control=ControlConfig(**control_kwargs),
            **engine_kwargs,
        )
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid configuration: {exc}", code=2) from exc


def _resolve_target_or_die(ref):
    try:
        return resolve_target(ref)
    except TargetError as exc:
        raise CliError(str(exc), code=2) from exc


def _program_search_paths(name):
    paths = []
    data = os.environ.get("DIVAKIT_DATA")
    if data:
        paths.append(os.path.join(data, "programs", f"{name}.prog.csv"))
    paths.append(os.path.join(os.path.dirname(__file__), "data", "programs", f"{name}.prog.csv"))
    return paths


def _load_trained_program(target, frame_ms):
    for path in _program_search_paths(target.name):
        if os.path.isfile(path):
            program = load_program(path, target.name, frame_ms)
            if program.n_frames * frame_ms == target.duration_ms:
                return program
    raise CliError(
        f"no trained program for target {target.name!r}; run with --reset to learn from scratch",
        code=2,
    )


def _produce_one(target_ref, rep, args):
    """One repetition of the produce protocol; returns rmse_by_iteration rows."""
    target = _resolve_target_or_die(target_ref)
    cfg = _build_config(args)
    if rep:
        cfg = EngineConfig(**{**_cfg_kwargs(cfg), "seed": cfg.seed + rep})
    out_dir = args.out if args.repetitions == 1 else os.path.join(args.out, f"rep{rep:02d}")
    os.makedirs(out_dir, exist_ok=True)
    start = None if args.reset else _load_trained_program(target, cfg.frame_period_ms)
    programs, traces = produce_and_learn(target, args.iterations, cfg, start=start)
    outputs = []
    for i, trace in enumerate(traces, start=1):
        stem = f"{target.name}_iter{i:02d}"
        outputs.extend(save_trace(trace, out_dir, stem))
        prog_path = os.path.join(out_dir, f"{stem}.prog.csv")
        save_program(programs[i], prog_path)
        outputs.append(prog_path)
    final = traces[-1].motor if traces else programs[-1].frames
    rows = [
        (rep, i + 1, normalized_rmse(SignalPair(traces[i].motor, final, args.range)))
        for i in range(len(traces))
    ]
    return out_dir, outputs, rows, cfg


def _cfg_kwargs(cfg):
    return {
        "frame_period_ms": cfg.frame_period_ms, "fs": cfg.fs,
        "aud_delay": cfg.aud_delay, "som_delay": cfg.som_delay,
        "control": cfg.control, "seed": cfg.seed,
        "deterministic": cfg.deterministic, "rng_constants": cfg.rng_constants,
    }


def cmd_produce(args):
    if args.iterations < 1:
        raise CliError("--iterations must be >= 1", code=2)
    os.makedirs(args.out, exist_ok=True)
    all_rows = []
    outputs = []
    cfg = None
    if args.repetitions == 1:
        _, outs, rows, cfg = _produce_one(args.target, 0, args)
        outputs.extend(outs)
        all_rows.extend(rows)
    else:
        with ProcessPoolExecutor(max_workers=min(args.repetitions, os.cpu_count() or 1)) as pool:
            futures = [pool.submit(_produce_one, args.target, rep, args)
                       for rep in range(args.repetitions)]
            for fut in futures:
                _, outs, rows, cfg = fut.result()
                outputs.extend(outs)
                all_rows.extend(rows)
    if args.repetitions > 1 or args.iterations > 1:
        rmse_path = os.path.join(args.out, "rmse_by_iteration.csv")
        with open(rmse_path, "w", encoding="utf-8", newline="\n") as f:
            f.write("repetition,iteration,rmse_percent\n")
            for rep, it, val in sorted(all_rows):
                f.write(f"{rep},{it},{val:.6f}\n")
        outputs.append(rmse_path)
    _write_manifest(args.out, "produce", args, cfg, outputs)
    print(f"produced {args.target}: {args.iterations} iteration(s), "
          f"{args.repetitions} repetition(s) -> {args.out}")
    return 0


def _track_from_wav(path):
    wav, fs = analysis.read_wav(path)
    times_p, f0 = analysis.pitch_track(wav, fs)
    voiced = np.isfinite(f0)
    if not np.any(voiced):
        raise CliError(f"{path}: no voiced frames, cannot extract a pitch track")
    formants = analysis.lpc_formants(wav, fs)
    n = min(len(formants), int(voiced.sum()))
    if n < 1:
        raise CliError(f"{path}: no usable analysis frames")
    # resample both extractions onto a common frame axis
    t = np.linspace(0.0, 1.0, n)
    f0_v = np.interp(t, np.linspace(0, 1, int(voiced.sum())), f0[voiced])
    cols = [np.interp(t, np.linspace(0, 1, len(formants)), formants[:, k]) for k in range(3)]
    times = t * max(1.0, (len(wav) / fs) * 1000.0)
    if n == 1:
        times = np.array([0.0])
    try:
        return FormantTrack(times=tuple(times), f0=tuple(f0_v),
                            f1=tuple(cols[0]), f2=tuple(cols[1]), f3=tuple(cols[2]))
    except TargetError as exc:
        raise CliError(f"{path}: extracted track invalid ({exc})") from exc


def _constant_track(spec_str, duration_ms):
    try:
        f0, f1, f2, f3 = (float(v) for v in spec_str.split(","))
    except ValueError:
        raise CliError(f"--formants must be 'f0,f1,f2,f3', got {spec_str!r}", code=2) from None
    return FormantTrack(times=(0.0, float(duration_ms)), f0=(f0, f0), f1=(f1, f1),
                        f2=(f2, f2), f3=(f3, f3))


def _make_target(args, name):
    if bool(args.from_wav) == bool(args.formants):
        raise CliError("exactly one of --from-wav / --formants is required", code=2)
    if args.from_wav:
        track = _track_from_wav(args.from_wav)
        wav, fs = analysis.read_wav(args.from_wav)
        duration = args.duration or int(round(len(wav) / fs * 1000 / 5) * 5)
        duration = max(200, min(1000, duration))
    else:
        track = _constant_track(args.formants, args.duration or 400)
        duration = args.duration or 400
    try:
        return target_from_formant_track(track, args.tolerance, duration, name=name)
    except TargetError as exc:
        raise CliError(str(exc), code=2) from exc


def cmd_make_target(args):
    name = os.path.splitext(os.path.basename(args.out))[0].replace(".target", "") or "speech"
    target = _make_target(args, name)
    with open(args.out, "w", encoding="utf-8", newline="\n") as f:
        f.write(serialize_target(target))
    print(f"wrote {args.out}")
    return 0


def cmd_mimic(args):
    stem = os.path.splitext(os.path.basename(args.wav))[0]
    os.makedirs(args.out, exist_ok=True)
    target = _make_target(argparse.Namespace(from_wav=args.wav, formants=None,
                                             tolerance=args.tolerance, duration=None),
                          name=stem)
    # learn against half-width regions so measurement spread on the rendered
    # audio still lands inside the written full-tolerance target
    inner = _make_target(argparse.Namespace(from_wav=args.wav, formants=None,
                                            tolerance=args.tolerance * 0.5, duration=None),
                         name=stem)
    cfg = _build_config(args)
    target_path = os.path.join(args.out, f"{stem}.target")
    with open(target_path, "w", encoding="utf-8", newline="\n") as f:
        f.write(serialize_target(target))
    programs, traces = produce_and_learn(inner, args.iterations, cfg)
    final_trace = simulate(inner, programs[-1], cfg)  # saved production, no further learning
    wav_path = os.path.join(args.out, f"{stem}_mimic.wav")
    analysis.write_wav(wav_path, final_trace.audio, cfg.fs)
    summary_path = os.path.join(args.out, "error_by_iteration.csv")
    with open(summary_path, "w", encoding="utf-8", newline="\n") as f:
        f.write("iteration,mean_aud_error_hz,mean_corrective_norm\n")
        for i, tr in enumerate([*traces, final_trace], start=1):
            f.write(f"{i},{np.abs(tr.aud_error).mean():.6f},"
                    f"{np.linalg.norm(tr.corrective, axis=1).mean():.6f}\n")
    _write_manifest(args.out, "mimic", args, cfg, [target_path, wav_path, summary_path])
    print(f"mimic of {args.wav}: {len(traces) + 1} productions, saved {wav_path}")
    return 0


def cmd_compare(args):
    try:
        mat_a, _ = load_trace_csv(args.trace_a)
        mat_b, _ = load_trace_csv(args.trace_b)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc), code=2) from exc
    if mat_a.shape != mat_b.shape:
        raise CliError(f"trace shapes differ: {mat_a.shape} vs {mat_b.shape}", code=2)
    sq_sum, count = 0.0, 0
    for group, (lo, hi) in TRACE_GROUPS.items():
        rng = GROUP_RANGES.get(group, args.range)
        val = normalized_rmse(SignalPair(mat_a[:, lo:hi], mat_b[:, lo:hi], rng))
        print(f"{group}: {val:.4f}%")
        diff = (mat_a[:, lo:hi] - mat_b[:, lo:hi]) / rng
        sq_sum += float(np.sum(diff * diff))
        count += diff.size
    overall = 100.0 * np.sqrt(sq_sum / count)
    print(f"overall: {overall:.4f}%")
    return 0


def cmd_targets(args):
    if args.action == "list":
        for name in builtin_target_names():
            print(name)
        return 0
    target = _resolve_target_or_die(args.name)
    sys.stdout.write(serialize_target(target))
    return 0


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=0, help="simulation seed")
    parser.add_argument("--deterministic", action="store_true",
                        help="pin all random tract perturbations to constants")
    parser.add_argument("--config", default=None, help="key-value config file with engine/control overrides")


def build_parser():
    parser = argparse.ArgumentParser(prog="divakit", description=__doc__)
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("targets", help="list or show speech targets")
    p.add_argument("action", choices=["list", "show"])
    p.add_argument("name", nargs="?", help="target name or file (for 'show')")
    p.set_defaults(func=cmd_targets)

    p = sub.add_parser("produce", help="produce a target, learning across iterations")
    p.add_argument("target", help="builtin name or target file path")
    p.add_argument("--iterations", type=int, default=1)
    p.add_argument("--reset", action="store_true", help="start from a reset motor program")
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--out", default=None, help="output directory (default produce_<target>)")
    p.add_argument("--range", type=float, default=MOTOR_RANGE_DEFAULT,
                   help="maximum motor amplitude for normalized RMSE")
    _add_common(p)
    p.set_defaults(func=cmd_produce)

    p = sub.add_parser("make-target", help="build a target file from audio or formant values")
    p.add_argument("--from-wav", default=None, help="extract pitch/formants from this WAV")
    p.add_argument("--formants", default=None, help="constant track 'f0,f1,f2,f3' in Hz")
    p.add_argument("--tolerance", type=float, default=0.08, help="relative window half-width")
    p.add_argument("--duration", type=int, default=None, help="target duration in ms")
    p.add_argument("--out", required=True, help="target file to write")
    p.set_defaults(func=cmd_make_target)

    p = sub.add_parser("mimic", help="learn to reproduce a recorded speech sample")
    p.add_argument("--wav", required=True)
    p.add_argument("--iterations", type=int, default=4, help="learning productions before the saved one")
    p.add_argument("--tolerance", type=float, default=0.08)
    p.add_argument("--out", default=None, help="output directory (default mimic_<stem>)")
    _add_common(p)
    p.set_defaults(func=cmd_mimic)

    p = sub.add_parser("compare", help="normalized RMSE between two trace.csv files")
    p.add_argument("trace_a")
    p.add_argument("trace_b")
    p.add_argument("--range", type=float, default=MOTOR_RANGE_DEFAULT,
                   help="maximum motor amplitude for the motor signal groups")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.cmd == "targets" and args.action == "show" and not args.name:
        parser.error("targets show requires a name")
    if args.cmd == "produce" and args.out is None:
        args.out = f"produce_{os.path.basename(args.target).replace('.target', '')}"
    if args.cmd == "mimic" and args.out is None:
        args.out = f"mimic_{os.path.splitext(os.path.basename(args.wav))[0]}"
    try:
        return args.func(args)
    except CliError as exc:
        print(f"divakit: {exc}", file=sys.stderr)
        return exc.code
    except (AnalysisError, TargetError) as exc:
        print(f"divakit: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports, not crashes
        print(f"divakit: internal error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
