"""Training, evaluation, and feature extraction on emitted datasets.

Determinism is best effort: seeds are fixed for torch/numpy, shuffling uses a
seeded generator, and deterministic torch algorithms are requested with
warn_only (some CPU kernels have no deterministic variant).
"""

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .model import SmallCNN


@dataclass
class TrainRun:
    train_dir: str
    epochs: int = 20
    lr: float = 1e-3
    batch_size: int = 128
    seed: int = 0
    width: int = 16


def set_determinism(seed):
    np.random.seed(seed)
    torch.manual_seed(seed)
    torch.use_deterministic_algorithms(True, warn_only=True)


def _to_tensor(images):
    # (n, H, W, 3) float32 -> (n, 3, H, W)
    return torch.from_numpy(np.ascontiguousarray(images)).permute(0, 3, 1, 2)


def train(run, images, labels, n_classes):
    set_determinism(run.seed)
    model = SmallCNN(n_classes, width=run.width)
    model.train()
    opt = torch.optim.Adam(model.parameters(), lr=run.lr)
    loss_fn = nn.CrossEntropyLoss()
    x = _to_tensor(images)
    y = torch.from_numpy(np.ascontiguousarray(labels))
    n = len(y)
    gen = torch.Generator().manual_seed(run.seed)
    history = []
    for epoch in range(run.epochs):
        perm = torch.randperm(n, generator=gen)
        total = 0.0
        for start in range(0, n, run.batch_size):
            idx = perm[start : start + run.batch_size]
            opt.zero_grad()
            out = model(x[idx])
            loss = loss_fn(out, y[idx])
            loss.backward()
            opt.step()
            total += float(loss.detach()) * len(idx)
        history.append(total / n)
    model.eval()
    return model, history


@torch.no_grad()
def predict(model, images, batch_size=256):
    model.eval()
    x = _to_tensor(images)
    preds = []
    for start in range(0, len(x), batch_size):
        preds.append(model(x[start : start + batch_size]).argmax(dim=1))
    return torch.cat(preds).numpy()


@torch.no_grad()
def extract_features(model, images, batch_size=256):
    """Penultimate-layer features as an (n, d) float32 matrix."""
    model.eval()
    x = _to_tensor(images)
    feats = []
    for start in range(0, len(x), batch_size):
        feats.append(model.features(x[start : start + batch_size]))
    return torch.cat(feats).numpy().astype(np.float32)


def evaluate(model, clean_images, clean_labels, poisoned_images, target):
    """Clean accuracy and ASR plus the raw prediction vectors."""
    clean_preds = predict(model, clean_images)
    poison_preds = predict(model, poisoned_images)
    return {
        "clean_accuracy": float(np.mean(clean_preds == clean_labels)),
        "asr": float(np.mean(poison_preds == target)),
        "clean_preds": clean_preds,
        "poison_preds": poison_preds,
    }
