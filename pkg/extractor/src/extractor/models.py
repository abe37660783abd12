"""Model adapters: a uniform view of (logits, penultimate features, last
conv layer) over the supported backbones."""

from __future__ import annotations

import torch
from torch import nn


class TinyCnn(nn.Module):
    """Small deterministic CNN used for probes and tests.

    tanh (not ReLU) keeps penultimate rows non-constant for any input, which
    downstream dissimilarity analysis requires.
    """

    def __init__(self, num_classes: int, width: int = 8):
        super().__init__()
        self.conv = nn.Conv2d(3, width, kernel_size=3, stride=2, padding=1)
        self.act = nn.Tanh()
        self.pool = nn.AdaptiveAvgPool2d(4)
        self.fc = nn.Linear(width * 16, num_classes)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        return torch.flatten(self.pool(self.act(self.conv(x))), 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.fc(self.features(x))


class ModelAdapter:
    """Wraps a backbone with accessors for the two extraction points:
    the layer before the classification head and the last conv layer."""

    def __init__(self, model: nn.Module, feature_fn, last_conv: nn.Conv2d,
                 name: str):
        self.model = model
        self._feature_fn = feature_fn
        self.last_conv = last_conv
        self.name = name

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        return self.model(x)

    def penultimate(self, x: torch.Tensor) -> torch.Tensor:
        return self._feature_fn(x)

    @property
    def gradient_dim(self) -> int:
        return self.last_conv.weight.numel()


SUPPORTED = ("tinycnn", "resnet18", "resnet50")


def build_adapter(name: str, source_classes: int, weights_path: str | None,
                  seed: int, device: str) -> ModelAdapter:
    """Instantiate a backbone deterministically.

    Without a --weights checkpoint the model keeps its seeded random
    initialization; scores computed from such files exercise the pipeline
    but carry no pre-training signal.
    """
    torch.manual_seed(seed)
    if name == "tinycnn":
        model = TinyCnn(num_classes=source_classes)
        feature_fn = model.features
        last_conv = model.conv
    elif name in ("resnet18", "resnet50"):
        from torchvision import models as tvm
        ctor = tvm.resnet18 if name == "resnet18" else tvm.resnet50
        model = ctor(weights=None, num_classes=source_classes)

        def feature_fn(x, _m=model):
            x = _m.conv1(x)
            x = _m.bn1(x)
            x = _m.relu(x)
            x = _m.maxpool(x)
            x = _m.layer1(x)
            x = _m.layer2(x)
            x = _m.layer3(x)
            x = _m.layer4(x)
            return torch.flatten(_m.avgpool(x), 1)

        last_conv = model.layer4[-1].conv2
    else:
        raise ValueError(f"unsupported model '{name}' (choose from {SUPPORTED})")

    if weights_path:
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        model.load_state_dict(state)
    model.to(device)
    model.eval()
    return ModelAdapter(model, feature_fn, last_conv, name)
