"""Command-line entry points: simulate, train, evaluate, sweep, roc.

Configuration lives in a single INI-style file with sections ``[sim]``,
``[bench]``, ``[esn]``, ``[neural]``, and ``[detectors]``; ``--config
default`` (or omitting the flag) uses the built-in desk-scale benchmark
channel, so every subcommand works with zero files on disk.  Any key can be
overridden through the environment as ``MCDET_<SECTION>_<KEY>``, and the most
common knobs have dedicated flags (``--seed``, ``--tb``, ``--jobs``,
``--output``).

All artifacts land under the output directory together with a
``manifest.json`` listing each file and its sha256.  Commands exit nonzero on
any error and print a diagnostic naming the offending field where possible.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import classical, neural, reservoir
from .bench import (
    BenchConfig,
    accuracy_ber,
    desk_channel_config,
    roc,
    run_benchmark,
)
from .channel import InvalidConfigError, SimConfig, load_trace, run_sequence, save_trace
from .features import apply_zscore, extract_features, fit_zscore, save_features

_ENV_PREFIX = "MCDET"

_SIM_FIELDS = {
    "n_per_bit": int,
    "d_mol": float,
    "d_tx": float,
    "d_rx": float,
    "rx_radius": float,
    "k_f": float,
    "k_b": float,
    "t_sample": float,
    "t_phys": float,
    "domain_side": float,
    "t_b": float,
    "rng_seed": int,
}

_BENCH_FIELDS = {
    "n_seeds": int,
    "symbols_per_seed": int,
    "root_seed": int,
    "rc_size": int,
    "rc_isi_size": int,
    "spectral_radius": float,
    "leak_rate": float,
    "input_scaling": float,
    "washout": int,
    "ridge_lambda": float,
    "viterbi_memory": int,
    "nn_learning_rate": float,
    "nn_epochs": int,
    "nn_batch_size": int,
    "latency_repetitions": int,
}


def _parse_triple(text: str) -> tuple[float, float, float]:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected three comma-separated values, got {text!r}")
    return parts[0], parts[1], parts[2]


def read_config(path: str | None) -> dict[str, dict[str, str]]:
    """Raw (section -> key -> string) config with environment overrides."""
    sections: dict[str, dict[str, str]] = {}
    if path and path != "default":
        parser = configparser.ConfigParser()
        found = parser.read(path)
        if not found:
            raise FileNotFoundError(f"config file {path!r} not found")
        for section in parser.sections():
            sections[section.lower()] = {
                k.lower(): v for k, v in parser.items(section)
            }
    for key, value in os.environ.items():
        if not key.startswith(_ENV_PREFIX + "_"):
            continue
        rest = key[len(_ENV_PREFIX) + 1 :]
        section, _, name = rest.partition("_")
        if not name:
            continue
        sections.setdefault(section.lower(), {})[name.lower()] = value
    return sections


def build_sim_config(raw: dict[str, dict[str, str]], t_b: float | None, seed: int | None) -> SimConfig:
    """Channel config: desk-scale defaults overlaid with [sim] keys."""
    sim = dict(raw.get("sim", {}))
    base_tb = float(sim.pop("t_b", t_b if t_b is not None else 100.0))
    if t_b is not None:
        base_tb = t_b
    cfg = desk_channel_config(base_tb, rng_seed=0)
    updates: dict = {}
    for name, caster in _SIM_FIELDS.items():
        if name in sim:
            try:
                updates[name] = caster(sim.pop(name))
            except ValueError as exc:
                raise InvalidConfigError(name, f"unparseable value: {exc}")
    for name in ("tx_init", "rx_init"):
        if name in sim:
            updates[name] = _parse_triple(sim.pop(name))
    if sim:
        raise InvalidConfigError(next(iter(sim)), "unknown [sim] key")
    cfg = replace(cfg, **updates)
    if seed is not None:
        cfg = replace(cfg, rng_seed=seed)
    cfg.validate()
    return cfg


def build_bench_config(
    raw: dict[str, dict[str, str]],
    tb_list: tuple[float, ...] | None,
    seed: int | None,
) -> BenchConfig:
    bench_raw = dict(raw.get("bench", {}))
    updates: dict = {}
    for name, caster in _BENCH_FIELDS.items():
        if name in bench_raw:
            updates[name] = caster(bench_raw.pop(name))
    if "tb_list" in bench_raw:
        updates["tb_list"] = tuple(float(v) for v in bench_raw.pop("tb_list").split(","))
    if "split" in bench_raw:
        updates["split"] = tuple(float(v) for v in bench_raw.pop("split").split(","))
    if "detectors" in bench_raw:
        updates["detectors"] = tuple(
            d.strip() for d in bench_raw.pop("detectors").split(",") if d.strip()
        )
    elif "detectors" in raw and "enabled" in raw["detectors"]:
        updates["detectors"] = tuple(
            d.strip() for d in raw["detectors"]["enabled"].split(",") if d.strip()
        )
    if "measure_latencies" in bench_raw:
        updates["measure_latencies"] = bench_raw.pop("measure_latencies").lower() in (
            "1",
            "true",
            "yes",
        )
    if bench_raw:
        raise InvalidConfigError(next(iter(bench_raw)), "unknown [bench] key")
    overrides: dict = {}
    sim = raw.get("sim", {})
    for name, caster in _SIM_FIELDS.items():
        if name in sim and name not in ("t_b", "rng_seed"):
            overrides[name] = caster(sim[name])
    for name in ("tx_init", "rx_init"):
        if name in sim:
            overrides[name] = _parse_triple(sim[name])
    if overrides:
        updates["channel_overrides"] = overrides
    cfg = BenchConfig(**updates)
    if tb_list is not None:
        cfg = replace(cfg, tb_list=tb_list)
    if seed is not None:
        cfg = replace(cfg, root_seed=seed)
    if not cfg.detectors:
        raise InvalidConfigError("detectors", "at least one detector must be enabled")
    cfg.validate()
    return cfg


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def write_manifest(output_dir: Path, artifacts: list[Path]) -> Path:
    entries = {
        str(p.relative_to(output_dir)): _sha256(p)
        for p in sorted(artifacts)
        if p.is_file()
    }
    manifest = output_dir / "manifest.json"
    manifest.write_text(json.dumps({"artifacts": entries}, indent=2, sort_keys=True) + "\n")
    return manifest


def _parse_tb_flag(text: str | None) -> tuple[float, ...] | None:
    if text is None:
        return None
    return tuple(float(v) for v in text.split(","))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    raw = read_config(args.config)
    tb = float(args.tb) if args.tb else None
    cfg = build_sim_config(raw, tb, args.seed)
    if args.bits:
        if any(ch not in "01" for ch in args.bits):
            raise ValueError(f"--bits must be a 0/1 string, got {args.bits!r}")
        bits = np.array([int(ch) for ch in args.bits], dtype=np.int8)
    else:
        n = int(args.random)
        if n < 1:
            raise ValueError("--random must request at least one symbol")
        rng = np.random.default_rng(np.random.SeedSequence([cfg.rng_seed, 0xB175]))
        bits = rng.integers(0, 2, size=n).astype(np.int8)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    trace = run_sequence(cfg, bits)
    csv = save_trace(trace, out / "trace.csv")
    feats = save_features(extract_features(trace), out / "features.csv")
    write_manifest(out, [csv, Path(str(csv) + ".meta.json"), feats])
    print(f"wrote {csv} ({len(bits)} symbols, {len(trace.counts)} samples)")
    return 0


def _fit_models(bench: BenchConfig, trace, models_dir: Path) -> list[Path]:
    """Fit every enabled detector on one trace; returns written model files.

    The trace is treated as training data: the readout fits on the first 80%
    of symbols (minus washout) and decision thresholds tune on the last 20%.
    """
    feats = extract_features(trace)
    n = len(feats)
    n_fit = int(n * 0.8)
    fit_feats = feats.slice(0, n_fit)
    labels = feats.labels
    written: list[Path] = []
    models_dir.mkdir(parents=True, exist_ok=True)

    if "peak_fixed" in bench.detectors:
        model = classical.fit_fixed(fit_feats)
        p = models_dir / "peak_fixed.json"
        p.write_text(json.dumps({"threshold": model.threshold}) + "\n")
        written.append(p)
    if "adaptive_ema" in bench.detectors:
        model = classical.fit_ema(fit_feats)
        p = models_dir / "adaptive_ema.json"
        p.write_text(
            json.dumps({"threshold": model.threshold, "beta": model.beta, "i_init": model.i_init})
            + "\n"
        )
        written.append(p)
    if "map_viterbi" in bench.detectors:
        cir = classical.estimate_cir(fit_feats, bench.viterbi_memory)
        written.append(classical.save_cir(cir, models_dir / "map_viterbi.cir.csv"))
    for name, hidden, stream in (
        ("mlp", bench.mlp_hidden, 5),
        ("ann", bench.ann_hidden, 6),
    ):
        if name not in bench.detectors:
            continue
        windows, wlabels = neural.windowize(trace, trace.samples_per_symbol)
        mean = float(np.mean(windows[:n_fit]))
        std = float(np.std(windows[:n_fit])) or 1.0
        cfg = neural.MlpConfig(
            window=windows.shape[1],
            hidden=hidden,
            learning_rate=bench.nn_learning_rate,
            epochs=bench.nn_epochs,
            batch_size=bench.nn_batch_size,
            rng_seed=bench.root_seed + stream,
        )
        model = neural.train(
            neural.build(cfg), (windows[:n_fit] - mean) / std, wlabels[:n_fit]
        )
        p = models_dir / f"{name}.txt"
        neural.save_mlp(model, p)
        scale = models_dir / f"{name}.scale.json"
        scale.write_text(json.dumps({"mean": mean, "std": std}) + "\n")
        written.extend([p, scale])
    for name, size, stream, optimize in (
        ("rc", bench.rc_size, 3, False),
        ("rc_isi", bench.rc_isi_size, 4, True),
    ):
        if name not in bench.detectors:
            continue
        mean, std = fit_zscore(fit_feats)
        normalized = apply_zscore(feats, mean, std)
        rcfg = reservoir.ReservoirConfig(
            n_reservoir=size,
            spectral_radius=bench.spectral_radius,
            leak_rate=bench.leak_rate,
            input_scaling=bench.input_scaling,
            washout=bench.washout,
            ridge_lambda=bench.ridge_lambda,
            rng_seed=bench.root_seed + stream,
        )
        res = reservoir.init_reservoir(rcfg)
        states = reservoir.collect_states(res, normalized.u)
        readout = reservoir.train_readout(
            states[:n_fit], labels[:n_fit], rcfg, norm_mean=mean, norm_std=std
        )
        if optimize:
            scores_val = reservoir.score_states(states[n_fit:], readout)
            eta = reservoir.optimize_threshold(scores_val, labels[n_fit:])
            readout = replace(readout, threshold=eta)
        written.append(reservoir.save_model(res, readout, models_dir / f"{name}.esn.csv"))
    return written


def cmd_train(args) -> int:
    raw = read_config(args.config)
    bench = build_bench_config(raw, None, args.seed)
    trace = load_trace(args.trace)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    written = _fit_models(bench, trace, out / "models")
    write_manifest(out, written)
    for p in written:
        print(f"wrote {p}")
    return 0


def cmd_evaluate(args) -> int:
    raw = read_config(args.config)
    bench = build_bench_config(raw, None, args.seed)
    trace = load_trace(args.trace)
    feats = extract_features(trace)
    labels = feats.labels
    models = Path(args.models)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["detector,accuracy,ber"]
    for name in bench.detectors:
        if name == "peak_fixed" and (models / "peak_fixed.json").exists():
            eta = json.loads((models / "peak_fixed.json").read_text())["threshold"]
            pred = classical.detect_fixed(classical.FixedThresholdModel(eta), feats)
        elif name == "adaptive_ema" and (models / "adaptive_ema.json").exists():
            d = json.loads((models / "adaptive_ema.json").read_text())
            pred = classical.detect_ema(
                classical.EmaModel(d["threshold"], d["beta"], d["i_init"]), feats
            )
        elif name == "map_viterbi" and (models / "map_viterbi.cir.csv").exists():
            cir = classical.load_cir(models / "map_viterbi.cir.csv")
            pred = classical.detect_viterbi(feats, cir)
        elif name in ("mlp", "ann") and (models / f"{name}.txt").exists():
            model = neural.load_mlp(models / f"{name}.txt")
            scale = json.loads((models / f"{name}.scale.json").read_text())
            windows, _ = neural.windowize(trace, model.config.window)
            scores = neural.predict(model, (windows - scale["mean"]) / scale["std"])
            pred = neural.decide(scores)
        elif name in ("rc", "rc_isi") and (models / f"{name}.esn.csv").exists():
            res, readout = reservoir.load_model(models / f"{name}.esn.csv")
            normalized = apply_zscore(feats, readout.norm_mean, readout.norm_std)
            scores = reservoir.predict_scores(res, readout, normalized.u)
            pred = reservoir.decide_with_threshold(scores, readout.threshold)
        else:
            raise FileNotFoundError(f"no model file for detector {name!r} in {models}")
        acc, ber = accuracy_ber(pred, labels)
        lines.append(f"{name},{acc:.10g},{ber:.10g}")
    report = out / "evaluation.csv"
    report.write_text("\n".join(lines) + "\n")
    write_manifest(out, [report])
    print("\n".join(lines))
    return 0


def cmd_sweep(args) -> int:
    raw = read_config(args.config)
    bench = build_bench_config(raw, _parse_tb_flag(args.tb), args.seed)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)

    def progress(t_b, seed_idx):
        print(f"completed cell t_b={t_b:g} seed={seed_idx}", flush=True)

    report = run_benchmark(
        bench, output_dir=out, resume=args.resume, jobs=args.jobs, progress=progress
    )
    artifacts = [p for p in out.rglob("*") if p.is_file() and p.name != "manifest.json"]
    write_manifest(out, artifacts)
    print(f"wrote {out / 'report.csv'} ({len(report.rows)} rows)")
    return 0


def cmd_roc(args) -> int:
    raw = read_config(args.config)
    trace = load_trace(args.trace)
    feats = extract_features(trace)
    res, readout = reservoir.load_model(args.model)
    normalized = apply_zscore(feats, readout.norm_mean, readout.norm_std)
    scores = reservoir.predict_scores(res, readout, normalized.u)
    curve = roc(scores, feats.labels)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    lines = ["fpr,tpr,threshold"]
    for fpr, tpr, thr in curve.points:
        lines.append(f"{fpr:.10g},{tpr:.10g},{thr:.10g}")
    path = out / "roc.csv"
    path.write_text("\n".join(lines) + "\n")
    write_manifest(out, [path])
    print(f"wrote {path} (auc {curve.auc:.4f})")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcdet",
        description=(
            "Simulate a mobile molecular-communication channel and benchmark "
            "symbol detectors on it."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default="default", help="INI config path or 'default'")
        p.add_argument("--seed", type=int, default=None, help="override the root seed")
        p.add_argument("--output", default="mcdet_out", help="output directory")

    p = sub.add_parser("simulate", help="simulate a trace for a bit sequence")
    common(p)
    p.add_argument("--bits", help="explicit 0/1 string to transmit")
    p.add_argument("--random", type=int, default=100, help="number of random symbols")
    p.add_argument("--tb", help="symbol interval in seconds")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="fit enabled detectors on a trace")
    common(p)
    p.add_argument("--trace", required=True, help="trace CSV written by simulate")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score fitted models against a trace")
    common(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--models", required=True, help="models directory from train")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="run the full multi-detector benchmark")
    common(p)
    p.add_argument("--tb", help="comma-separated symbol intervals")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep cells")
    p.add_argument("--resume", action="store_true", help="reuse completed cells")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("roc", help="ROC curve of a trained readout on a trace")
    common(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--model", required=True, help="esn model file")
    p.set_defaults(func=cmd_roc)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
