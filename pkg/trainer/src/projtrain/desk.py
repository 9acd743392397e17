"""Desk-scale experiment driver: corpus, datasets, curriculum, evaluation.

One call to :func:`run_desk` reproduces the whole study at a size a
single workstation can finish in a few hours: it rasterizes two disjoint
digit corpora, generates a training dataset and a held-out evaluation
dataset through the solver CLI, runs the two-part curriculum, exports
the trained weights, reconstructs every held-out sample with the
combined, simplified, and learned methods, and reports the relative
errors next to the training error trajectory.

Training materials are simulated on the reconstruction grid itself
(sim_n = 64), where the scattering system is small enough for exact
dense factorization at any training amplitude; the 5% data noise
dominates the discretization error this reuses.  The evaluation set
keeps the full-scale defaults (sim_n = 512), so the reported errors are
measured on data the inversion grid has never represented exactly.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

from . import materials
from .train import TrainConfig, train_part1, train_part2

__all__ = ["prepare_datasets", "evaluate_methods", "run_desk"]

_FREQUENCIES = (3.0, 5.0, 7.0)
_IRGNM_FREQUENCY = 6.0


def _log(log, text: str) -> None:
    if log is not None:
        log(text)


def prepare_datasets(
    cli,
    base: Path,
    *,
    train_count: int,
    eval_count: int,
    train_sim_n: int = 64,
    eval_sim_n: int = 512,
    n1: int = 64,
    amplitude_range=(1.0, 5.0),
    eval_amplitude: float = 2.0,
    noise_delta: float = 0.05,
    seed: int = 0,
    log=None,
) -> tuple[Path, Path]:
    """Build disjoint train and eval datasets; return the two manifests."""
    base = Path(base)
    train_images, train_labels = materials.write_idx_corpus(
        base / "corpus_train", train_count
    )
    eval_images, eval_labels = materials.write_idx_corpus(
        base / "corpus_eval", eval_count, offset=train_count
    )
    common = dict(
        frequencies=list(_FREQUENCIES),
        irgnm_frequency=_IRGNM_FREQUENCY,
        n1=n1,
        noise_delta=noise_delta,
    )
    train_cfg = materials.write_config(
        base / "gen_train.json",
        images=str(train_images),
        labels=str(train_labels),
        out_dir=str(base / "data_train"),
        count=train_count,
        amplitude_range=list(amplitude_range),
        sim_n=train_sim_n,
        seed=seed + 1,
        **common,
    )
    eval_cfg = materials.write_config(
        base / "gen_eval.json",
        images=str(eval_images),
        labels=str(eval_labels),
        out_dir=str(base / "data_eval"),
        count=eval_count,
        amplitude_range=[eval_amplitude, eval_amplitude],
        sim_n=eval_sim_n,
        seed=seed + 2,
        **common,
    )
    t0 = time.time()
    train_manifest = materials.generate_dataset(cli, train_cfg)
    _log(log, f"train dataset {train_manifest} ({time.time() - t0:.0f}s)")
    t0 = time.time()
    eval_manifest = materials.generate_dataset(cli, eval_cfg)
    _log(log, f"eval dataset {eval_manifest} ({time.time() - t0:.0f}s)")
    return train_manifest, eval_manifest


def evaluate_methods(
    cli,
    eval_manifest: Path,
    out_dir: Path,
    *,
    theta_hat: Path,
    theta3: Path,
    n_o: int = 6,
    log=None,
) -> dict:
    """Reconstruct every eval sample three ways; return per-method errors.

    The reconstruction schedule is the full-scale default (100 Landweber
    steps at n1, ten IRGNM steps at n2 with alpha 10 * 0.5^i); only the
    outer-loop cap n_o is lowered, which the early-stopping rule makes
    immaterial in practice.
    """
    eval_manifest = Path(eval_manifest)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = json.loads(eval_manifest.read_text())
    methods = {
        "combined": ("combined", None),
        "simplified": ("simplified-learned", Path(theta3)),
        "learned": ("learned", Path(theta_hat)),
    }
    errors = {name: [] for name in methods}
    for sample in manifest["samples"]:
        sid = sample["id"]
        truth = eval_manifest.parent / sample["truth"]
        data = [str(eval_manifest.parent / ff["path"]) for ff in sample["far_fields"]]
        config = materials.write_config(
            out_dir / f"{sid}_recon.json", data=data, n_o=n_o
        )
        for name, (method, weights) in methods.items():
            t0 = time.time()
            estimate = out_dir / f"{sid}_{name}.ctr"
            materials.reconstruct(cli, config, method, estimate, weights=weights)
            r = materials.relative_error(cli, truth, estimate)
            errors[name].append(r)
            _log(log, f"{sid} {name} R_e {r:.6f} ({time.time() - t0:.0f}s)")
    summary = {
        name: {"per_sample": vals, "average": sum(vals) / len(vals)}
        for name, vals in errors.items()
    }
    for name, entry in summary.items():
        _log(log, f"average {name} R_e {entry['average']:.6f}")
    (out_dir / "errors.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def run_desk(
    base: Path,
    *,
    t: int = 200,
    validation: int = 13,
    eval_count: int = 5,
    epochs=(20, 5, 5, 5),
    batch_size: int = 30,
    learning_rate: float = 1e-3,
    depth: int = 4,
    base_channels: int = 32,
    seed: int = 0,
    train_sim_n: int = 64,
    eval_sim_n: int = 512,
    cli=("invscat",),
    log=print,
) -> dict:
    """Full desk-scale study; returns training histories and eval errors."""
    base = Path(base)
    base.mkdir(parents=True, exist_ok=True)
    train_manifest, eval_manifest = prepare_datasets(
        cli,
        base,
        train_count=t + validation,
        eval_count=eval_count,
        train_sim_n=train_sim_n,
        eval_sim_n=eval_sim_n,
        seed=seed,
        log=log,
    )
    cfg = TrainConfig(
        manifest=train_manifest,
        workdir=base / "work",
        t=t,
        epochs=epochs,
        batch_size=batch_size,
        learning_rate=learning_rate,
        validation=validation,
        depth=depth,
        base_channels=base_channels,
        seed=seed,
        cli=tuple(cli),
    )
    t0 = time.time()
    part1 = train_part1(cfg)
    part2 = train_part2(cfg, part1.theta3)
    _log(log, f"training done ({time.time() - t0:.0f}s)")
    summary = evaluate_methods(
        cli,
        eval_manifest,
        base / "eval",
        theta_hat=part2.theta_hat,
        theta3=part1.theta3,
        log=log,
    )
    result = {
        "histories": part1.histories,
        "part2_history": part2.history,
        "errors": summary,
        "theta3": str(part1.theta3),
        "theta_hat": str(part2.theta_hat),
    }
    report = {k: v for k, v in result.items() if k != "histories"}
    report["histories"] = {k: list(map(list, v)) for k, v in part1.histories.items()}
    report["part2_history"] = list(map(list, part2.history))
    (base / "summary.json").write_text(json.dumps(report, indent=2) + "\n")
    return result
