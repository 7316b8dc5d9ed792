"""Small CNN: three conv blocks, global average pooling, one linear head."""

import torch
from torch import nn


class SmallCNN(nn.Module):
    def __init__(self, n_classes, width=16):
        super().__init__()
        w = width
        self.blocks = nn.Sequential(
            nn.Conv2d(3, w, 3, padding=1),
            nn.BatchNorm2d(w),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(w, 2 * w, 3, padding=1),
            nn.BatchNorm2d(2 * w),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(2 * w, 4 * w, 3, padding=1),
            nn.BatchNorm2d(4 * w),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
        )
        self.head = nn.Linear(4 * w, n_classes)
        self.width = width
        self.n_classes = n_classes

    def features(self, x):
        """Penultimate representation: the input to the linear head."""
        z = self.blocks(x)
        return z.mean(dim=(2, 3))

    def forward(self, x):
        return self.head(self.features(x))


def save_checkpoint(model, path):
    torch.save(
        {
            "state_dict": model.state_dict(),
            "n_classes": model.n_classes,
            "width": model.width,
        },
        path,
    )


def load_checkpoint(path):
    ckpt = torch.load(path, map_location="cpu", weights_only=True)
    model = SmallCNN(ckpt["n_classes"], width=ckpt["width"])
    model.load_state_dict(ckpt["state_dict"])
    model.eval()
    return model
