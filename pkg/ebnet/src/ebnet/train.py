"""Training and evaluation loops.

Present task: jointly optimize the three subnetworks with MSE against the
whole channel, feature subnet at its own learning rate, early stopping on
validation loss.

Future task, two stages: stage 1 freezes everything except the recurrent
head and trains it on next-step MSE; stage 2 fine-tunes the recurrent head
and the fusion subnet together at a reduced rate on the weighted sum
lambda1 * present MSE + lambda2 * future MSE.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .data import DatasetDir, planes_to_complex, present_arrays, sequence_arrays
from .errors import ConfigError, WeightsError
from .model import NetConfig, PredictorNet


@dataclass
class TrainReport:
    """Everything a training run decided and measured."""

    task: str
    config: dict
    seed: int
    epochs: list = field(default_factory=list)  # {stage, epoch, train_loss, val_loss}
    best_epoch: int = -1
    test: dict = field(default_factory=dict)
    baselines: dict = field(default_factory=dict)
    runtime_s: float = 0.0

    def validate(self):
        for row in self.epochs:
            if not (math.isfinite(row["train_loss"]) and math.isfinite(row["val_loss"])):
                raise ConfigError(f"non-finite loss in epoch record {row}")

    def save(self, path):
        self.validate()
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n",
                              encoding="utf-8")


def to_db(x: float) -> float:
    return 10.0 * math.log10(x)


def nmse_complex(truth: np.ndarray, estimate: np.ndarray) -> float:
    """Mean over samples of ||err||^2 / ||truth||^2."""
    num = np.sum(np.abs(estimate - truth) ** 2, axis=(-2, -1))
    den = np.sum(np.abs(truth) ** 2, axis=(-2, -1))
    return float(np.mean(num / den))

def cosine_complex(truth: np.ndarray, estimate: np.ndarray) -> float:
    inner = np.abs(np.sum(np.conj(estimate) * truth, axis=(-2, -1)))
    scale = (np.linalg.norm(estimate, axis=(-2, -1))
             * np.linalg.norm(truth, axis=(-2, -1)))
    return float(np.mean(inner / scale))


def mse_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    # Eq-style MSE: squared error summed over planes, averaged per entry
    return ((pred - target) ** 2).sum(dim=1).mean()


def weighted_loss(pred_present, target_present, pred_future, target_future,
                  lambda1: float, lambda2: float) -> torch.Tensor:
    return (lambda1 * mse_loss(pred_present, target_present)
            + lambda2 * mse_loss(pred_future, target_future))


def _seed_everything(seed: int):
    torch.manual_seed(seed)
    np.random.seed(seed % (1 << 32))


def _batches(n: int, batch_size: int, rng: np.random.Generator | None):
    order = np.arange(n) if rng is None else rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


class _PresentTensors:
    """Split arrays moved to torch once; batches index into them."""

    def __init__(self, arrays, device):
        self.h0 = torch.from_numpy(arrays.h0).to(device)
        self.mask = torch.from_numpy(arrays.mask).to(device)
        self.target = torch.from_numpy(arrays.target).to(device)
        self.cell_index = torch.from_numpy(arrays.cell_index).to(device)
        self.eb_bank = torch.from_numpy(arrays.eb_bank).to(device)
        self.target_complex = arrays.target_complex
        self.n = len(arrays)

    def batch(self, idx):
        sel = torch.as_tensor(idx, dtype=torch.long)
        return (self.h0[sel], self.mask[sel],
                self.eb_bank[self.cell_index[sel]], self.target[sel])


class _SequenceTensors:
    def __init__(self, arrays, device):
        self.h0_seq = torch.from_numpy(arrays.h0_seq).to(device)
        self.mask = torch.from_numpy(arrays.mask).to(device)
        self.target_present = torch.from_numpy(arrays.target_present).to(device)
        self.target_future = torch.from_numpy(arrays.target_future).to(device)
        self.cell_index = torch.from_numpy(arrays.cell_index).to(device)
        self.eb_bank = torch.from_numpy(arrays.eb_bank).to(device)
        self.present_complex = arrays.present_complex
        self.future_complex = arrays.future_complex
        self.n = len(arrays)

    def batch(self, idx):
        sel = torch.as_tensor(idx, dtype=torch.long)
        return (self.h0_seq[sel], self.mask[sel],
                self.eb_bank[self.cell_index[sel]],
                self.target_present[sel], self.target_future[sel])


@torch.no_grad()
def _predict_present(model, data: _PresentTensors, batch_size: int) -> np.ndarray:
    model.eval()
    outs = []
    for idx in _batches(data.n, batch_size, None):
        h0, mask, eb, _ = data.batch(idx)
        outs.append(model.forward_present(h0, mask, eb).cpu().numpy())
    return planes_to_complex(np.concatenate(outs, axis=0).astype(np.float64))


@torch.no_grad()
def _predict_future(model, data: _SequenceTensors, batch_size: int):
    model.eval()
    present, future = [], []
    for idx in _batches(data.n, batch_size, None):
        h0_seq, mask, eb, _, _ = data.batch(idx)
        p, f = model.forward_future(h0_seq, mask, eb)
        present.append(p.cpu().numpy())
        future.append(f.cpu().numpy())
    return (planes_to_complex(np.concatenate(present, 0).astype(np.float64)),
            planes_to_complex(np.concatenate(future, 0).astype(np.float64)))


@torch.no_grad()
def _val_loss_present(model, data: _PresentTensors, batch_size: int) -> float:
    model.eval()
    total, count = 0.0, 0
    for idx in _batches(data.n, batch_size, None):
        h0, mask, eb, target = data.batch(idx)
        pred = model.forward_present(h0, mask, eb)
        total += mse_loss(pred, target).item() * len(idx)
        count += len(idx)
    return total / count


def present_metrics(model, data: _PresentTensors, batch_size: int) -> dict:
    pred = _predict_present(model, data, batch_size)
    err = nmse_complex(data.target_complex, pred)
    return {"nmse": err, "nmse_db": to_db(err),
            "cs": cosine_complex(data.target_complex, pred)}


def save_weights(path, model: PredictorNet, task: str):
    torch.save({"format": "ebnet-weights-v1", "task": task,
                "config": asdict(model.cfg),
                "state_dict": model.state_dict()}, path)


def load_weights(path, device="cpu") -> tuple[PredictorNet, str]:
    path = Path(path)
    if not path.is_file():
        raise WeightsError(f"no weights file at {path}")
    payload = torch.load(path, map_location=device, weights_only=False)
    if not isinstance(payload, dict) or payload.get("format") != "ebnet-weights-v1":
        raise WeightsError(f"{path}: not a recognized weights file")
    model = PredictorNet(NetConfig(**payload["config"])).to(device)
    model.load_state_dict(payload["state_dict"])
    return model, payload.get("task", "present")


def train_present(data_dir, cfg: NetConfig, out_dir, device: str = "cpu",
                  epochs: int | None = None, log=None) -> TrainReport:
    """Train the three subnetworks jointly on the present-CSI task."""
    t0 = time.perf_counter()
    _seed_everything(cfg.seed)
    ds = DatasetDir(data_dir)
    if ds.m_t != cfg.m_t or ds.n_sc != cfg.n_sc or ds.n_basis != cfg.n_b:
        raise ConfigError(
            f"dataset geometry ({ds.m_t}, {ds.n_sc}, n_b={ds.n_basis}) does "
            f"not match config ({cfg.m_t}, {cfg.n_sc}, n_b={cfg.n_b})")
    train = _PresentTensors(present_arrays(ds, "train"), device)
    val = _PresentTensors(present_arrays(ds, "val"), device)
    test = _PresentTensors(present_arrays(ds, "test"), device)

    model = PredictorNet(cfg).to(device)
    untrained = present_metrics(model, test, cfg.batch_size)
    zero_fill = planes_to_complex(test.h0.cpu().numpy().astype(np.float64))
    zero_fill_nmse = nmse_complex(test.target_complex, zero_fill)

    eb_ids = {id(p) for p in model.eb_net.parameters()}
    recon = [p for p in model.non_lstm_parameters() if id(p) not in eb_ids]
    optimizer = torch.optim.Adam([
        {"params": list(model.eb_net.parameters()), "lr": cfg.lr_eb},
        {"params": recon, "lr": cfg.lr_recon},
    ])

    n_epochs = cfg.epochs_present if epochs is None else epochs
    rng = np.random.default_rng(cfg.seed)
    report = TrainReport(task="present", config=asdict(cfg), seed=cfg.seed)
    best_val, best_state, best_epoch = math.inf, None, -1
    for epoch in range(n_epochs):
        model.train()
        total, count = 0.0, 0
        for idx in _batches(train.n, cfg.batch_size, rng):
            h0, mask, eb, target = train.batch(idx)
            optimizer.zero_grad()
            loss = mse_loss(model.forward_present(h0, mask, eb), target)
            loss.backward()
            optimizer.step()
            total += loss.item() * len(idx)
            count += len(idx)
        val_loss = _val_loss_present(model, val, cfg.batch_size)
        report.epochs.append({"stage": "present", "epoch": epoch,
                              "train_loss": total / count,
                              "val_loss": val_loss})
        if log:
            log(f"epoch {epoch:3d} train {total / count:.5f} val {val_loss:.5f}")
        if val_loss < best_val:
            best_val, best_epoch = val_loss, epoch
            best_state = {k: v.detach().clone()
                          for k, v in model.state_dict().items()}
        elif epoch - best_epoch >= cfg.patience:
            break
    if best_state is not None:
        model.load_state_dict(best_state)
    report.best_epoch = best_epoch

    report.test = present_metrics(model, test, cfg.batch_size)
    report.baselines = {
        "zero_fill_nmse": zero_fill_nmse,
        "zero_fill_nmse_db": to_db(zero_fill_nmse),
        "untrained_nmse": untrained["nmse"],
        "untrained_nmse_db": to_db(untrained["nmse"]),
    }
    report.runtime_s = time.perf_counter() - t0

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_weights(out / "weights.pt", model, "present")
    report.save(out / "report.json")
    return report


def train_future(data_dir, present_weights, out_dir, device: str = "cpu",
                 epochs_stage1: int | None = None,
                 epochs_stage2: int | None = None, log=None) -> TrainReport:
    """Adapt a present-trained model to next-step prediction in two stages."""
    t0 = time.perf_counter()
    model, _ = load_weights(present_weights, device)
    cfg = model.cfg
    _seed_everything(cfg.seed + 1)
    ds = DatasetDir(data_dir)
    train = _SequenceTensors(sequence_arrays(ds, "train", cfg.history), device)
    val = _SequenceTensors(sequence_arrays(ds, "val", cfg.history), device)
    test = _SequenceTensors(sequence_arrays(ds, "test", cfg.history), device)

    report = TrainReport(task="future", config=asdict(cfg), seed=cfg.seed)

    def test_metrics() -> dict:
        present, future = _predict_future(model, test, cfg.batch_size)
        p_err = nmse_complex(test.present_complex, present)
        f_err = nmse_complex(test.future_complex, future)
        hold = nmse_complex(test.future_complex, present)
        return {
            "present_nmse": p_err, "present_nmse_db": to_db(p_err),
            "future_nmse": f_err, "future_nmse_db": to_db(f_err),
            "future_cs": cosine_complex(test.future_complex, future),
            "hold_last_nmse": hold, "hold_last_nmse_db": to_db(hold),
        }

    report.baselines["pre_stage"] = test_metrics()

    @torch.no_grad()
    def val_future_loss() -> float:
        model.eval()
        total, count = 0.0, 0
        for idx in _batches(val.n, cfg.batch_size, None):
            h0_seq, mask, eb, _, target_future = val.batch(idx)
            _, future = model.forward_future(h0_seq, mask, eb)
            total += mse_loss(future, target_future).item() * len(idx)
            count += len(idx)
        return total / count

    # stage 1: recurrent head only; everything else stays eval/frozen
    for p in model.non_lstm_parameters():
        p.requires_grad_(False)
    optimizer = torch.optim.Adam(model.lstm_parameters(), lr=cfg.lr_lstm)
    rng = np.random.default_rng(cfg.seed + 2)
    n1 = cfg.epochs_stage1 if epochs_stage1 is None else epochs_stage1
    for epoch in range(n1):
        model.eval()  # frozen normalization statistics everywhere
        total, count = 0.0, 0
        for idx in _batches(train.n, cfg.batch_size, rng):
            h0_seq, mask, eb, _, target_future = train.batch(idx)
            optimizer.zero_grad()
            _, future = model.forward_future(h0_seq, mask, eb)
            loss = mse_loss(future, target_future)
            loss.backward()
            optimizer.step()
            total += loss.item() * len(idx)
            count += len(idx)
        val_loss = val_future_loss()
        report.epochs.append({"stage": "stage1", "epoch": epoch,
                              "train_loss": total / count,
                              "val_loss": val_loss})
        if log:
            log(f"stage1 {epoch:3d} train {total / count:.5f} val {val_loss:.5f}")

    report.baselines["post_stage1"] = test_metrics()

    # stage 2: fine-tune recurrent head + fusion subnet, weighted loss
    for p in model.dual_net.parameters():
        p.requires_grad_(True)
    optimizer = torch.optim.Adam(
        model.lstm_parameters() + list(model.dual_net.parameters()),
        lr=cfg.lr_finetune)
    n2 = cfg.epochs_stage2 if epochs_stage2 is None else epochs_stage2
    for epoch in range(n2):
        model.eval()
        model.dual_net.train()
        total, count = 0.0, 0
        for idx in _batches(train.n, cfg.batch_size, rng):
            h0_seq, mask, eb, target_present, target_future = train.batch(idx)
            optimizer.zero_grad()
            present, future = model.forward_future(h0_seq, mask, eb)
            loss = weighted_loss(present, target_present, future,
                                 target_future, cfg.lambda1, cfg.lambda2)
            loss.backward()
            optimizer.step()
            total += loss.item() * len(idx)
            count += len(idx)
        val_loss = val_future_loss()
        report.epochs.append({"stage": "stage2", "epoch": epoch,
                              "train_loss": total / count,
                              "val_loss": val_loss})
        if log:
            log(f"stage2 {epoch:3d} train {total / count:.5f} val {val_loss:.5f}")

    for p in model.parameters():
        p.requires_grad_(True)
    report.test = test_metrics()
    report.runtime_s = time.perf_counter() - t0

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_weights(out / "weights.pt", model, "future")
    report.save(out / "report.json")
    return report


def evaluate(data_dir, weights, device: str = "cpu") -> dict:
    """Test-split metrics for saved weights; the weights' task picks the
    present or future pipeline."""
    model, task = load_weights(weights, device)
    ds = DatasetDir(data_dir)
    if task == "future":
        data = _SequenceTensors(
            sequence_arrays(ds, "test", model.cfg.history), device)
        present, future = _predict_future(model, data, model.cfg.batch_size)
        p_err = nmse_complex(data.present_complex, present)
        f_err = nmse_complex(data.future_complex, future)
        hold = nmse_complex(data.future_complex, present)
        return {"task": task,
                "present_nmse": p_err, "present_nmse_db": to_db(p_err),
                "future_nmse": f_err, "future_nmse_db": to_db(f_err),
                "future_cs": cosine_complex(data.future_complex, future),
                "hold_last_nmse": hold}
    data = _PresentTensors(present_arrays(ds, "test"), device)
    metrics = present_metrics(model, data, model.cfg.batch_size)
    zero_fill = planes_to_complex(data.h0.cpu().numpy().astype(np.float64))
    metrics["zero_fill_nmse"] = nmse_complex(data.target_complex, zero_fill)
    return {"task": task, **metrics}
