"""Command-line pipeline: simulate, quantize, estimate, train, evaluate.

Every subcommand takes --config/--seed/--out; all randomness derives from
the single seed, so identical invocations produce byte-identical outputs.
Reports are machine-readable (JSON/CSV); binary artifacts follow the
fixed formats of their modules and get a small provenance sidecar.
"""

import argparse
import hashlib
import json
import os
import sys

import numpy as np

from . import __version__
from .arrays import (
    ArrayConfig,
    SourceScene,
    build_linear_model,
    generate_snapshots,
    load_scene,
    read_snapshots,
    save_scene,
    true_covariance,
    write_snapshots,
)
from .bounds import BoundParams, covariance_error_norms, layer_error_bound, write_sweep_csv
from .music import find_peaks, match_peaks, music_spectrum, power_spectrum, write_spectrum_csv
from .quantization import (
    DynamicRangeError,
    estimate_covariance,
    quantize_snapshot_file,
    read_one_bit,
    write_one_bit,
)
from .solvers import (
    ListaParams,
    TrainingDiverged,
    TrainOptions,
    default_penalty,
    ista_solve,
    lista_forward,
    make_scene_sampler,
    make_training_set,
    read_checkpoint,
    sample_measurement,
    train,
    write_checkpoint,
    write_dataset,
)


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


_DEFAULTS = {
    "array": {
        "sensor_count": 8,
        "spacing_ratio": 0.5,
        "grid_start": -60.0,
        "grid_stop": 60.0,
        "grid_step": 1.0,
    },
    "scene": {
        "num_sources": 2,
        "noise_variance": 0.1,
        "source_power": 1.0,
        "power_range": None,
        "min_separation_deg": None,
        "doas_deg": None,
    },
    "snapshots": {"count": 10000},
    "dither": {"policy": "margin", "margin": 1.2, "scale": None},
    "solver": {"kind": "lista", "depth": 10, "ista_iterations": 2000, "ista_penalty": 0.001},
    "training": {
        "num_scenes": 2000,
        "num_val": 400,
        "noise_copies": 2,
        "epochs": 50,
        "batch_size": 32,
        "learning_rate": 1e-4,
        "weight_structure": "dictionary_gain",
        "average_checkpoints": 1,
        "noise_known": True,
    },
    "bounds": {
        "sparsity": 2,
        "amplitude": 1.0 / 12.0,
        "layer_decay": 0.1,
        "probability_margin": 0.01,
        "prefactor": 2.0,
    },
    "evaluation": {"num_scenes": 50, "tolerance_cells": 1, "music_on": "onebit"},
}


def _merge(defaults, override):
    out = {}
    for key, value in defaults.items():
        if isinstance(value, dict):
            out[key] = _merge(value, override.get(key, {}) if override else {})
        else:
            out[key] = override.get(key, value) if override else value
    if override:
        unknown = set(override) - set(defaults)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return out


class ExperimentConfig:
    """Validated experiment settings plus the seed and output directory."""

    def __init__(self, raw, seed=None, output_dir=None):
        known_top = set(_DEFAULTS) | {"seed", "output_dir"}
        unknown = set(raw) - known_top
        if unknown:
            raise ConfigError(f"unknown config sections: {sorted(unknown)}")
        merged = {k: _merge(_DEFAULTS[k], raw.get(k)) for k in _DEFAULTS}
        if seed is None:
            seed = raw.get("seed")
        if seed is None:
            raise ConfigError("a seed is required (config 'seed' or --seed); "
                              "implicit entropy is not allowed")
        if output_dir is None:
            output_dir = raw.get("output_dir", "out")
        self.sections = merged
        self.seed = int(seed)
        self.output_dir = str(output_dir)
        try:
            self.array = ArrayConfig.from_dict(merged["array"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        self._validate()

    def _validate(self):
        scn = self.sections["scene"]
        if scn["num_sources"] < 1 or scn["num_sources"] >= self.array.sensor_count:
            raise ConfigError("scene.num_sources must satisfy 1 <= K < sensor_count")
        if scn["noise_variance"] < 0:
            raise ConfigError("scene.noise_variance must be nonnegative")
        if self.sections["snapshots"]["count"] < 1:
            raise ConfigError("snapshots.count must be at least 1")
        dth = self.sections["dither"]
        if dth["policy"] not in ("margin", "fixed"):
            raise ConfigError("dither.policy must be 'margin' or 'fixed'")
        if dth["policy"] == "fixed" and not dth.get("scale"):
            raise ConfigError("dither.policy 'fixed' requires dither.scale")
        tr = self.sections["training"]
        if tr["num_val"] <= 0 or tr["num_val"] >= tr["num_scenes"]:
            raise ConfigError("training.num_val must be a proper subset of num_scenes")
        if self.sections["solver"]["depth"] < 1:
            raise ConfigError("solver.depth must be at least 1")
        ev = self.sections["evaluation"]
        if ev["music_on"] not in ("onebit", "exact", "sample"):
            raise ConfigError("evaluation.music_on must be onebit, exact, or sample")
        if self.sections["solver"]["kind"] not in ("lista", "ista", "music"):
            raise ConfigError("solver.kind must be lista, ista, or music")

    def config_hash(self):
        canon = json.dumps(self.sections, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def provenance(self):
        return {"config_hash": self.config_hash(), "seed": self.seed}

    def sub_seeds(self):
        """Named integer sub-seeds derived from the master seed."""
        state = np.random.SeedSequence(self.seed).generate_state(6, dtype=np.uint64)
        names = ("dataset", "training", "evaluation", "simulate", "dither", "sweep")
        return {name: int(state[i]) for i, name in enumerate(names)}

    def scene_sampler(self):
        scn = self.sections["scene"]
        return make_scene_sampler(
            self.array,
            num_sources=scn["num_sources"],
            noise_variance=scn["noise_variance"],
            power_value=scn["source_power"],
            power_range=scn["power_range"],
            min_separation_deg=scn["min_separation_deg"],
        )

    def fixed_scene(self, rng):
        """Scene from explicit config DoAs when given, else one sampler draw."""
        scn = self.sections["scene"]
        if scn["doas_deg"] is not None:
            k = len(scn["doas_deg"])
            powers = np.full(k, scn["source_power"])
            return SourceScene.on_grid(self.array, scn["doas_deg"], powers,
                                       scn["noise_variance"])
        return self.scene_sampler()(rng)

    def dither_kwargs(self):
        dth = self.sections["dither"]
        if dth["policy"] == "fixed":
            return {"dither_margin": None, "dither_fixed": float(dth["scale"])}
        return {"dither_margin": float(dth["margin"]), "dither_fixed": None}

    def linear_model(self):
        m = self.array.sensor_count
        sigma = self.sections["scene"]["noise_variance"]
        if not self.sections["training"]["noise_known"]:
            sigma = 0.0
        return build_linear_model(self.array, sigma, np.zeros(2 * m * m))


def load_config(path, seed=None, output_dir=None):
    if path is None:
        raw = {}
    else:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    return ExperimentConfig(raw, seed=seed, output_dir=output_dir)


def _write_sidecar(path, config):
    with open(path + ".meta.json", "w") as fh:
        json.dump(config.provenance(), fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def evaluate_scenes(config, params, model, num_scenes=None, seed=None):
    """Run the configured solver and MUSIC on freshly sampled scenes.

    The primary solver is config solver.kind: the trained network
    (``params``), plain ISTA, or MUSIC itself. Returns per-scene records
    with peak lists, match flags, and angle errors; the solver and the
    MUSIC baseline see identical one-bit covariance estimates.
    """
    ev = config.sections["evaluation"]
    kind = config.sections["solver"]["kind"]
    count = ev["num_scenes"] if num_scenes is None else num_scenes
    # success is measured in grid-cell units against each target's grid cell
    # (the sub-cell snap residual is model error by construction); reported
    # angle errors are against the continuous true DoAs
    tol = ev["tolerance_cells"] * config.array.grid_step + 1e-9
    grid = config.array.grid_angles()
    seed = config.sub_seeds()["evaluation"] if seed is None else seed
    rng = np.random.default_rng(seed)
    sampler = config.scene_sampler()
    k = config.sections["scene"]["num_sources"]
    n = config.sections["snapshots"]["count"]
    if kind == "lista" and params is None:
        raise ConfigError("solver.kind 'lista' needs trained parameters")
    records = []
    for _ in range(count):
        scene = sampler(rng)
        snapped = grid[scene.grid_support]
        snap_seed = int(rng.integers(2**63))
        dith_seed = int(rng.integers(2**63))
        _, c, scale, est = sample_measurement(
            config.array, scene, n, snap_seed, dith_seed,
            noise_known=config.sections["training"]["noise_known"],
            **config.dither_kwargs(),
        )
        if ev["music_on"] == "exact":
            music_input = true_covariance(scene, config.array)
        elif ev["music_on"] == "sample":
            snaps = generate_snapshots(scene, config.array, n, snap_seed)
            music_input = (snaps.data @ snaps.data.conj().T) / n
        else:
            music_input = est.matrix
        m_spec = music_spectrum(music_input, k, config.array)
        m_peaks = find_peaks(m_spec, k)
        music_ok, _ = match_peaks(snapped, m_peaks, tol)
        _, music_err = match_peaks(scene.true_doas_deg, m_peaks, np.inf)
        if kind == "lista":
            final, _ = lista_forward(params, model, c)
            solver_spec = power_spectrum(final, config.array, kind="lista")
        elif kind == "ista":
            slv = config.sections["solver"]
            nu = ista_solve(model, c, slv["ista_penalty"], slv["ista_iterations"])
            solver_spec = power_spectrum(nu, config.array, kind="ista")
        else:
            solver_spec = m_spec
        solver_peaks = find_peaks(solver_spec, k)
        solver_ok, _ = match_peaks(snapped, solver_peaks, tol)
        _, solver_err = match_peaks(scene.true_doas_deg, solver_peaks, np.inf)
        records.append({
            "scene": scene,
            "measurement": c,
            "dither_scale": scale,
            "estimate": est,
            "solver_spectrum": solver_spec,
            "solver_peaks": solver_peaks,
            "solver_ok": solver_ok,
            "solver_errors": solver_err,
            "music_spectrum": m_spec,
            "music_peaks": m_peaks,
            "music_ok": music_ok,
            "music_errors": music_err,
        })
    return records


def run_reproduction(config, variant="a"):
    """Full pipeline: dataset, training, evaluation, bounds, report bundle.

    Writes checkpoint.lsta, spectrum_lista.csv / spectrum_music.csv for
    the first evaluated scene, bounds.csv, and summary.json into the
    output directory; returns the summary dict.
    """
    os.makedirs(config.output_dir, exist_ok=True)
    seeds = config.sub_seeds()
    tr = config.sections["training"]
    n = config.sections["snapshots"]["count"]
    depth = config.sections["solver"]["depth"]
    model = config.linear_model()

    report = None
    params = None
    if config.sections["solver"]["kind"] == "lista":
        dataset = make_training_set(
            config.array,
            config.scene_sampler(),
            size=tr["num_scenes"],
            num_snapshots=n,
            seed=seeds["dataset"],
            num_val=tr["num_val"],
            noise_known=tr["noise_known"],
            noise_copies=tr["noise_copies"],
            **config.dither_kwargs(),
        )
        penalty = default_penalty(model, dataset)
        init = ListaParams.ista_init(model, penalty, depth)
        options = TrainOptions(
            learning_rate=tr["learning_rate"],
            batch_size=tr["batch_size"],
            epochs=tr["epochs"],
            weight_structure=tr["weight_structure"],
            average_checkpoints=tr["average_checkpoints"],
        )
        report = train(dataset, init, options, model=model, seed=seeds["training"])
        params = report.params
        ckpt_path = os.path.join(config.output_dir, "checkpoint.lsta")
        write_checkpoint(ckpt_path, params)
        _write_sidecar(ckpt_path, config)

    records = evaluate_scenes(config, params, model, seed=seeds["evaluation"])
    first = records[0]
    write_spectrum_csv(
        os.path.join(config.output_dir, "spectrum_lista.csv"),
        first["solver_spectrum"], provenance=config.provenance(),
    )
    write_spectrum_csv(
        os.path.join(config.output_dir, "spectrum_music.csv"),
        first["music_spectrum"], provenance=config.provenance(),
    )

    cov_max, cov_fro = covariance_error_norms(
        true_covariance(first["scene"], config.array), first["estimate"].matrix
    )

    scales = [r["dither_scale"] for r in records if r["dither_scale"] > 0]
    bound_values = []
    if scales:
        bp = config_bound_params(config, float(np.median(scales)))
        bound_values = [layer_error_bound(i, bp) for i in range(depth + 1)]
        write_sweep_csv(
            os.path.join(config.output_dir, "bounds.csv"),
            "layer", list(range(depth + 1)), None, None, None, bound_values,
            provenance=config.provenance(),
        )

    summary = {
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "variant": variant,
        "peaks": [{"angle_deg": a, "value": v} for a, v in first["solver_peaks"]],
        "doa_errors_deg": [float(e) for e in first["solver_errors"]],
        "cov_error": {"max": cov_max, "fro": cov_fro},
        "losses": {
            "train": report.train_losses if report else [],
            "val": report.val_losses if report else [],
        },
        "bound": bound_values,
        "bound_axis_note": (
            "bound is indexed by network layer; the loss curves are indexed "
            "by training epoch"
        ),
        "best_epoch": report.best_epoch if report else None,
        "lista_success_rate": float(np.mean([r["solver_ok"] for r in records])),
        "music_success_rate": float(np.mean([r["music_ok"] for r in records])),
        "num_eval_scenes": len(records),
    }
    _write_json(os.path.join(config.output_dir, "summary.json"), summary)
    return summary


def config_bound_params(config, dither_scale):
    b = config.sections["bounds"]
    return BoundParams(
        sparsity=int(b["sparsity"]),
        amplitude=float(b["amplitude"]),
        layer_decay=float(b["layer_decay"]),
        probability_margin=float(b["probability_margin"]),
        prefactor=float(b["prefactor"]),
        dither_scale=float(dither_scale),
        sensor_count=config.array.sensor_count,
        num_snapshots=int(config.sections["snapshots"]["count"]),
    )


def _cmd_simulate(config, args):
    os.makedirs(config.output_dir, exist_ok=True)
    rng = np.random.default_rng(config.sub_seeds()["simulate"])
    scene = config.fixed_scene(rng)
    n = config.sections["snapshots"]["count"]
    snaps = generate_snapshots(scene, config.array, n, int(rng.integers(2**63)))
    scene_path = os.path.join(config.output_dir, "scene.json")
    save_scene(scene_path, config.array, scene)
    _write_sidecar(scene_path, config)
    snap_path = os.path.join(config.output_dir, "snapshots.obda")
    write_snapshots(snap_path, snaps)
    _write_sidecar(snap_path, config)
    print(f"wrote {snap_path} ({config.array.sensor_count} sensors x {n} snapshots)")
    return 0


def _cmd_quantize(config, args):
    os.makedirs(config.output_dir, exist_ok=True)
    snaps = read_snapshots(args.input)
    kw = config.dither_kwargs()
    bits = quantize_snapshot_file(
        snaps, margin=kw["dither_margin"], fixed_scale=kw["dither_fixed"],
        seed=config.sub_seeds()["dither"],
    )
    out_path = os.path.join(config.output_dir, "onebit.ob1b")
    write_one_bit(out_path, bits)
    _write_sidecar(out_path, config)
    print(f"wrote {out_path} (scale {bits.scale:.6g})")
    return 0


def _cmd_covest(config, args):
    os.makedirs(config.output_dir, exist_ok=True)
    bits = read_one_bit(args.input)
    est = estimate_covariance(bits)
    cov_path = os.path.join(config.output_dir, "covariance.npy")
    np.save(cov_path, est.matrix)
    _write_sidecar(cov_path, config)
    if args.truth:
        cfg_truth, scene = load_scene(args.truth)
        reference = true_covariance(scene, cfg_truth)
        cov_max, cov_fro = covariance_error_norms(reference, est.matrix)
        csv_path = os.path.join(config.output_dir, "covest.csv")
        with open(csv_path, "w") as fh:
            fh.write(f"# config_hash={config.config_hash()} seed={config.seed}\n")
            fh.write("metric,value\n")
            fh.write(f"max_norm,{cov_max:.17g}\n")
            fh.write(f"frobenius,{cov_fro:.17g}\n")
        print(f"wrote {csv_path} (max {cov_max:.4g}, fro {cov_fro:.4g})")
    else:
        print(f"wrote {cov_path}")
    return 0


def _cmd_train(config, args):
    os.makedirs(config.output_dir, exist_ok=True)
    seeds = config.sub_seeds()
    tr = config.sections["training"]
    dataset = make_training_set(
        config.array, config.scene_sampler(), size=tr["num_scenes"],
        num_snapshots=config.sections["snapshots"]["count"], seed=seeds["dataset"],
        num_val=tr["num_val"], noise_known=tr["noise_known"],
        noise_copies=tr["noise_copies"], **config.dither_kwargs(),
    )
    if args.save_dataset:
        ds_path = os.path.join(config.output_dir, "dataset.dset")
        write_dataset(ds_path, dataset)
        _write_sidecar(ds_path, config)
    model = config.linear_model()
    penalty = default_penalty(model, dataset)
    init = ListaParams.ista_init(model, penalty, config.sections["solver"]["depth"])
    options = TrainOptions(
        learning_rate=tr["learning_rate"], batch_size=tr["batch_size"],
        epochs=tr["epochs"], weight_structure=tr["weight_structure"],
        average_checkpoints=tr["average_checkpoints"],
    )
    report = train(dataset, init, options, model=model, seed=seeds["training"])
    ckpt_path = os.path.join(config.output_dir, "checkpoint.lsta")
    write_checkpoint(ckpt_path, report.params)
    _write_sidecar(ckpt_path, config)
    _write_json(os.path.join(config.output_dir, "training_report.json"), {
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "losses": {"train": report.train_losses, "val": report.val_losses},
        "best_epoch": report.best_epoch,
    })
    print(f"wrote {ckpt_path} (best epoch {report.best_epoch}, "
          f"val loss {min(report.val_losses):.6g})")
    return 0


def _cmd_eval(config, args):
    os.makedirs(config.output_dir, exist_ok=True)
    params = read_checkpoint(args.model)
    model = config.linear_model()
    records = evaluate_scenes(config, params, model)
    first = records[0]
    write_spectrum_csv(os.path.join(config.output_dir, "spectrum_lista.csv"),
                       first["solver_spectrum"], provenance=config.provenance())
    summary = {
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "peaks": [{"angle_deg": a, "value": v} for a, v in first["solver_peaks"]],
        "doa_errors_deg": [float(e) for e in first["solver_errors"]],
        "lista_success_rate": float(np.mean([r["solver_ok"] for r in records])),
        "music_success_rate": float(np.mean([r["music_ok"] for r in records])),
        "num_eval_scenes": len(records),
    }
    _write_json(os.path.join(config.output_dir, "summary.json"), summary)
    print(f"evaluated {len(records)} scenes: "
          f"lista {summary['lista_success_rate']:.2f}, "
          f"music {summary['music_success_rate']:.2f}")
    return 0


def _cmd_music(config, args):
    os.makedirs(config.output_dir, exist_ok=True)
    rng = np.random.default_rng(config.sub_seeds()["simulate"])
    scene = config.fixed_scene(rng)
    k = scene.num_sources
    if args.exact_covariance or config.sections["evaluation"]["music_on"] == "exact":
        matrix = true_covariance(scene, config.array)
    else:
        n = config.sections["snapshots"]["count"]
        _, _, _, est = sample_measurement(
            config.array, scene, n, int(rng.integers(2**63)), int(rng.integers(2**63)),
            **config.dither_kwargs(),
        )
        matrix = est.matrix
    spec = music_spectrum(matrix, k, config.array)
    peaks = find_peaks(spec, k)
    csv_path = os.path.join(config.output_dir, "spectrum_music.csv")
    write_spectrum_csv(csv_path, spec, provenance=config.provenance())
    _write_json(os.path.join(config.output_dir, "music_peaks.json"), {
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "true_doas_deg": [float(x) for x in scene.true_doas_deg],
        "peaks": [{"angle_deg": a, "value": v} for a, v in peaks],
    })
    print(f"wrote {csv_path}")
    return 0


def _cmd_bounds(config, args):
    os.makedirs(config.output_dir, exist_ok=True)
    rng = np.random.default_rng(config.sub_seeds()["sweep"])
    scene = config.fixed_scene(rng)
    n = config.sections["snapshots"]["count"]
    _, _, scale, _ = sample_measurement(
        config.array, scene, n, int(rng.integers(2**63)), int(rng.integers(2**63)),
        **config.dither_kwargs(),
    )
    depth = config.sections["solver"]["depth"]
    bp = config_bound_params(config, scale)
    values = list(range(depth + 1))
    bounds_vals = [layer_error_bound(i, bp) for i in values]
    csv_path = os.path.join(config.output_dir, "bounds.csv")
    write_sweep_csv(csv_path, "layer", values, None, None, None, bounds_vals,
                    provenance=config.provenance())
    print(f"wrote {csv_path} (dither scale {scale:.6g})")
    return 0


def _cmd_repro(config, args):
    summary = run_reproduction(config, variant=args.variant)
    print(f"fig2{args.variant}: lista success {summary['lista_success_rate']:.2f}, "
          f"music success {summary['music_success_rate']:.2f}, "
          f"best epoch {summary['best_epoch']}")
    return 0


# built-in variant settings; the checked-in configs/fig2*.json files carry
# the same values plus a pinned seed
_FIG2_COMMON = {
    "scene": {"min_separation_deg": 4.0},
    "training": {"epochs": 100, "average_checkpoints": 10},
}
_FIG2_OVERRIDES = {
    "a": _FIG2_COMMON,
    "b": {
        "array": {"sensor_count": 16},
        "scene": {"num_sources": 3, "min_separation_deg": 4.0},
        "training": _FIG2_COMMON["training"],
        "bounds": {"sparsity": 3},
    },
    "c": _FIG2_COMMON,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="onebit-doa",
        description="One-bit DoA estimation: dithered quantization, covariance "
                    "recovery, and sparse grid-power estimation with a trained "
                    "unrolled shrinkage network plus ISTA/MUSIC baselines.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON experiment configuration")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--out", help="output directory (overrides config)")

    p = sub.add_parser("simulate", help="sample a scene and write snapshots")
    common(p)
    p = sub.add_parser("quantize", help="one-bit quantize a snapshot file")
    common(p)
    p.add_argument("--input", required=True, help="snapshot .obda file")
    p = sub.add_parser("covest", help="covariance estimate from a one-bit file")
    common(p)
    p.add_argument("--input", required=True, help="one-bit .ob1b file")
    p.add_argument("--truth", help="scene.json for error reporting")
    p = sub.add_parser("train", help="build a dataset and train the network")
    common(p)
    p.add_argument("--save-dataset", action="store_true", help="also write dataset.dset")
    p = sub.add_parser("eval", help="evaluate a trained checkpoint on fresh scenes")
    common(p)
    p.add_argument("--model", required=True, help="checkpoint .lsta file")
    p = sub.add_parser("music", help="MUSIC pseudospectrum for one scene")
    common(p)
    p.add_argument("--exact-covariance", action="store_true",
                   help="run on the exact covariance instead of the one-bit estimate")
    p = sub.add_parser("bounds", help="per-layer recovery bound as CSV")
    common(p)
    p = sub.add_parser("repro-fig2", help="full reproduction bundle")
    p.add_argument("variant", choices=("a", "b", "c"))
    common(p)
    return parser


_HANDLERS = {
    "simulate": _cmd_simulate,
    "quantize": _cmd_quantize,
    "covest": _cmd_covest,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "music": _cmd_music,
    "bounds": _cmd_bounds,
    "repro-fig2": _cmd_repro,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "repro-fig2" and args.config is None:
            config = ExperimentConfig(_FIG2_OVERRIDES[args.variant], seed=args.seed,
                                      output_dir=args.out)
        else:
            config = load_config(args.config, seed=args.seed, output_dir=args.out)
        return _HANDLERS[args.command](config, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DynamicRangeError as exc:
        print(f"dynamic range violation: {exc}", file=sys.stderr)
        return 3
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
