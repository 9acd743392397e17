"""Two-part curriculum training of the contrast projector.

Part I trains on progressively larger unions of three datasets built
from the same T samples: S1 pairs Landweber estimates with ground
truths (both sup-norm normalized), S2 replaces each input by the
step-one network's own output on it, and S3 uses the labels as inputs.
Part II adds S4, whose inputs are normalized IRGNM refinements started
from the projected Landweber estimates, and trains on the full union.

The stage error functions are

    E_M = sum over j <= M, samples i of  || P(input_ij) - label_i ||^2

and are logged once per epoch (plus the epoch-0 value) in eval mode.
Minibatch optimization minimizes the element-mean of the same squared
error, which differs from E_M only by a constant factor.

S1 and S4 materials come from the invscat command line; S2 and S3 are
computed in-process.  Labels of all staged datasets must agree sample
for sample, which is checked before every training run.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from torch.nn import functional as F
from torch.utils.data import DataLoader, TensorDataset

from . import materials
from .formats import read_weights, write_weights
from .network import Unet, evaluate, from_weights, to_weights, xavier_init

__all__ = [
    "TrainConfig",
    "TrainingDiverged",
    "MissingMaterials",
    "Part1Result",
    "Part2Result",
    "train_part1",
    "train_part2",
]

_ADAM_BETAS = (0.9, 0.999)
_ADAM_EPS = 1e-8


class TrainingDiverged(RuntimeError):
    """The loss became non-finite; the message records where."""


class MissingMaterials(FileNotFoundError):
    """A required manifest, pairs directory, or checkpoint is absent."""


@dataclass(frozen=True)
class TrainConfig:
    """Sample counts, schedules, and paths for one training run.

    ``manifest`` names the dataset produced by invscat gen-data; its
    first ``t`` samples train the network and the next ``validation``
    samples are only monitored.  ``cli`` is the solver command prefix.
    """

    manifest: Path
    workdir: Path
    t: int
    epochs: tuple = (100, 20, 20, 20)
    batch_size: int = 30
    learning_rate: float = 1e-3
    amplitude_range: tuple = (1.0, 5.0)
    cli: tuple = ("invscat",)
    seed: int = 0
    validation: int = 8
    depth: int = 4
    base_channels: int = 32
    leaky_slope: float = 0.01
    bn_eps: float = 1e-5
    n_la: int = 100  # Landweber steps behind the S1 inputs
    n_ir: int = 5  # IRGNM steps behind the S4 inputs
    alpha0: float = 10.0
    alpha_factor: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "manifest", Path(self.manifest))
        object.__setattr__(self, "workdir", Path(self.workdir))
        object.__setattr__(self, "epochs", tuple(int(e) for e in self.epochs))
        if self.t < 1:
            raise ValueError(f"t must be >= 1, got {self.t}")
        if len(self.epochs) != 4 or any(e < 1 for e in self.epochs):
            raise ValueError(f"epochs must be four counts >= 1, got {self.epochs}")
        if self.batch_size < 1 or self.learning_rate <= 0.0:
            raise ValueError("batch_size must be >= 1 and learning_rate positive")
        lo, hi = self.amplitude_range
        if not 0.0 < lo <= hi:
            raise ValueError(f"amplitude_range needs 0 < lo <= hi, got [{lo}, {hi}]")
        if self.validation < 0:
            raise ValueError(f"validation must be >= 0, got {self.validation}")


@dataclass
class Part1Result:
    theta1: Path
    theta2: Path
    theta3: Path
    histories: dict  # "step1".."step3" -> [(epoch, E_M), ...]
    model: Unet  # live network holding the theta3 parameters


@dataclass
class Part2Result:
    theta_hat: Path
    history: list  # [(epoch, E), ...]
    model: Unet


@dataclass
class _Split:
    ids: list
    inputs: np.ndarray  # complex (N, n, n)
    labels: np.ndarray  # float32 (N, n, n)


class _Log:
    """Appends structured lines to workdir/train.log and echoes them."""

    def __init__(self, workdir: Path):
        workdir.mkdir(parents=True, exist_ok=True)
        self.path = workdir / "train.log"

    def line(self, text: str) -> None:
        with self.path.open("a") as fh:
            fh.write(text + "\n")
        print(text, flush=True)


def _read_manifest(cfg: TrainConfig) -> dict:
    if not cfg.manifest.is_file():
        raise MissingMaterials(f"dataset manifest not found: {cfg.manifest}")
    manifest = json.loads(cfg.manifest.read_text())
    needed = cfg.t + cfg.validation
    if manifest["count"] < needed:
        raise MissingMaterials(
            f"manifest holds {manifest['count']} samples, "
            f"need t + validation = {needed}"
        )
    return manifest


def _stage_config(cfg: TrainConfig, stage: str) -> Path:
    return materials.write_config(
        cfg.workdir / f"gen_{stage}.json",
        manifest=str(cfg.manifest),
        pairs_out=str(cfg.workdir / f"pairs_{stage}"),
        n_la=cfg.n_la,
        n_ir=cfg.n_ir,
        alpha0=cfg.alpha0,
        alpha_factor=cfg.alpha_factor,
    )


def _load_stage(cfg: TrainConfig, stage: str, weights=None) -> tuple[_Split, _Split]:
    """Emit a pairs stage through the solver unless cached, then split it."""
    pairs_dir = cfg.workdir / f"pairs_{stage}"
    if not (pairs_dir / "pairs.json").is_file():
        materials.emit_stage(cfg.cli, _stage_config(cfg, stage), stage, weights=weights)
    ids, inputs, labels = materials.load_pairs(pairs_dir)
    if len(ids) < cfg.t + cfg.validation:
        raise MissingMaterials(
            f"{pairs_dir} holds {len(ids)} pairs, need {cfg.t + cfg.validation}"
        )
    train = _Split(ids[: cfg.t], inputs[: cfg.t], labels[: cfg.t])
    val = _Split(
        ids[cfg.t : cfg.t + cfg.validation],
        inputs[cfg.t : cfg.t + cfg.validation],
        labels[cfg.t : cfg.t + cfg.validation],
    )
    return train, val


def _check_labels(base: _Split, other: _Split, stage: str) -> None:
    # every stage must pair its inputs with the same N(truth) labels
    if base.ids != other.ids or not np.array_equal(base.labels, other.labels):
        raise materials.OrchestrationError(
            f"stage {stage} labels disagree with the S1 labels"
        )


def _tensors(datasets: list) -> TensorDataset:
    xs = np.concatenate([d.inputs for d in datasets])
    ys = np.concatenate([d.labels for d in datasets])
    x = np.stack([xs.real, xs.imag], axis=1).astype(np.float32)
    y = ys[:, None, :, :]
    return TensorDataset(torch.from_numpy(x), torch.from_numpy(y))


def _e_value(model: Unet, ds: TensorDataset, batch_size: int = 64) -> float:
    """E_M: the summed squared error over a dataset, eval mode."""
    model.eval()
    total = 0.0
    with torch.no_grad():
        for i in range(0, len(ds), batch_size):
            x, y = ds[i : i + batch_size]
            out = model(x)
            total += float(((out - y) ** 2).double().sum())
    return total


def _run_stage(
    model: Unet,
    datasets: list,
    epochs: int,
    cfg: TrainConfig,
    log: _Log,
    tag: str,
    e_name: str,
    step: int,
) -> list:
    ds = _tensors(datasets)
    gen = torch.Generator().manual_seed(cfg.seed * 7919 + step)
    loader = DataLoader(ds, batch_size=cfg.batch_size, shuffle=True, generator=gen)
    opt = torch.optim.Adam(
        model.parameters(), lr=cfg.learning_rate, betas=_ADAM_BETAS, eps=_ADAM_EPS
    )
    # fresh cumulative batch-norm statistics for this stage's data; one
    # gradient-free pass populates them so the epoch-0 error measures the
    # actual network rather than the arbitrary (0, 1) initialization
    for mod in model.modules():
        if isinstance(mod, torch.nn.BatchNorm2d):
            mod.reset_running_stats()
    model.train()
    with torch.no_grad():
        for xb, _ in loader:
            model(xb)
    history = [(0, _e_value(model, ds))]
    log.line(f"{tag} epoch 0 {e_name} {history[0][1]:.8e}")
    for epoch in range(1, epochs + 1):
        model.train()
        for batch, (xb, yb) in enumerate(loader):
            opt.zero_grad()
            loss = F.mse_loss(model(xb), yb)
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"{tag} epoch {epoch} batch {batch}: loss is {loss.item()}"
                )
            loss.backward()
            opt.step()
        e = _e_value(model, ds)
        history.append((epoch, e))
        log.line(f"{tag} epoch {epoch} {e_name} {e:.8e}")
    return history


def _monitor(model: Unet, val: _Split, log: _Log, tag: str, out_path: Path) -> None:
    if not len(val.ids):
        return
    outputs = evaluate(model, val.inputs)
    np.save(out_path, outputs)
    val_e = float(((outputs - val.labels) ** 2).sum())
    log.line(f"{tag} val_e {val_e:.8e} outputs {out_path.name}")


def _save(model: Unet, path: Path) -> Path:
    write_weights(path, to_weights(model))
    return path


def train_part1(cfg: TrainConfig) -> Part1Result:
    """Steps 1-3: S1 from Xavier initialization, then S1+S2, then S1+S2+S3."""
    _read_manifest(cfg)
    log = _Log(cfg.workdir)
    log.line(
        f"config t {cfg.t} epochs {cfg.epochs} batch {cfg.batch_size} "
        f"lr {cfg.learning_rate} seed {cfg.seed} depth {cfg.depth} "
        f"base {cfg.base_channels} validation {cfg.validation}"
    )
    log.line(f"optimizer adam betas {_ADAM_BETAS} eps {_ADAM_EPS}")

    s1, s1_val = _load_stage(cfg, "S1")
    torch.manual_seed(cfg.seed)
    model = xavier_init(
        Unet(cfg.depth, cfg.base_channels, cfg.leaky_slope, cfg.bn_eps), cfg.seed
    )

    histories = {}
    histories["step1"] = _run_stage(
        model, [s1], cfg.epochs[0], cfg, log, "part1 step1", "E1", 1
    )
    theta1 = _save(model, cfg.workdir / "theta1.lpw")
    _monitor(model, s1_val, log, "part1 step1", cfg.workdir / "step1_val.npy")

    # S2 inputs are the step-one network's outputs on the S1 inputs,
    # computed once and frozen (real planes, so a zero imaginary channel)
    s2_inputs = evaluate(model, s1.inputs).astype(np.complex128)
    np.save(cfg.workdir / "s2_inputs.npy", s2_inputs)
    s2 = _Split(s1.ids, s2_inputs, s1.labels)
    histories["step2"] = _run_stage(
        model, [s1, s2], cfg.epochs[1], cfg, log, "part1 step2", "E2", 2
    )
    theta2 = _save(model, cfg.workdir / "theta2.lpw")
    _monitor(model, s1_val, log, "part1 step2", cfg.workdir / "step2_val.npy")

    s3 = _Split(s1.ids, s1.labels.astype(np.complex128), s1.labels)
    histories["step3"] = _run_stage(
        model, [s1, s2, s3], cfg.epochs[2], cfg, log, "part1 step3", "E3", 3
    )
    theta3 = _save(model, cfg.workdir / "theta3.lpw")
    _monitor(model, s1_val, log, "part1 step3", cfg.workdir / "step3_val.npy")

    return Part1Result(theta1, theta2, theta3, histories, model)


def train_part2(cfg: TrainConfig, theta3: Path) -> Part2Result:
    """Step 4: add the IRGNM-based S4 and train on the full union."""
    _read_manifest(cfg)
    theta3 = Path(theta3)
    if not theta3.is_file():
        raise MissingMaterials(f"theta3 checkpoint not found: {theta3}")
    s2_path = cfg.workdir / "s2_inputs.npy"
    if not s2_path.is_file():
        raise MissingMaterials(f"S2 inputs not found: {s2_path} (run train_part1 first)")
    log = _Log(cfg.workdir)

    s1, s1_val = _load_stage(cfg, "S1")
    s2 = _Split(s1.ids, np.load(s2_path), s1.labels)
    s3 = _Split(s1.ids, s1.labels.astype(np.complex128), s1.labels)
    s4, _ = _load_stage(cfg, "S4", weights=theta3)
    _check_labels(s1, s4, "S4")

    model = from_weights(read_weights(theta3))
    torch.manual_seed(cfg.seed + 4)
    history = _run_stage(
        model, [s1, s2, s3, s4], cfg.epochs[3], cfg, log, "part2 step4", "E", 4
    )
    theta_hat = _save(model, cfg.workdir / "theta_hat.lpw")
    _monitor(model, s1_val, log, "part2 step4", cfg.workdir / "step4_val.npy")
    return Part2Result(theta_hat, history, model)
