"""Convolutional backbones and the extraction configuration.

Three networks are available by name:

* ``vgg19``: the 19-layer reference topology cut after the last
  convolutional activation, with pretrained weights.  Weights are read
  from ``weights_path`` when given, otherwise fetched through the
  torchvision weight registry (which needs network access).
* ``vgg19-random``: the same topology with seeded random weights.  The
  map geometry, channel count, and receptive field are identical to
  ``vgg19``, so it serves structural checks without a weight file.
* ``tinynet``: a small seeded stride-16 network for fast tests.

The topology is built locally so that no classifier head is ever
allocated; pretrained state dicts are mapped onto it by layer index.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .errors import ConfigError

NETWORK_IDS = ("vgg19", "vgg19-random", "tinynet")

# Convolution widths; "M" marks a 2x2 max-pool between blocks.
_VGG19_LAYOUT = (
    64, 64, "M", 128, 128, "M",
    256, 256, 256, 256, "M",
    512, 512, 512, 512, "M",
    512, 512, 512, 512,
)
_TINYNET_LAYOUT = (8, "M", 16, "M", 32, "M", 32, "M", 32)


@dataclass(frozen=True)
class ExtractorConfig:
    """Everything that determines what the extractor emits.

    ``layer`` selects the convolution (1-based, counting convolutions
    only) after whose activation the network is cut; ``None`` keeps the
    default, the last convolutional layer.  ``seed`` only affects the
    randomly initialized networks.
    """

    network_id: str
    levels: int = 4
    resize_area: int = 360000
    layer: int | None = None
    seed: int = 0
    weights_path: str | None = None

    def __post_init__(self) -> None:
        if self.network_id not in NETWORK_IDS:
            known = ", ".join(NETWORK_IDS)
            raise ConfigError(f"unknown network {self.network_id!r} (known: {known})")
        if self.levels < 1:
            raise ConfigError(f"levels must be >= 1, got {self.levels}")
        if self.resize_area < 1:
            raise ConfigError(f"resize area must be >= 1, got {self.resize_area}")
        if self.layer is not None and self.layer < 1:
            raise ConfigError(f"layer must be >= 1, got {self.layer}")


@dataclass
class Backbone:
    """A ready-to-run feature extractor with its geometry constants."""

    network_id: str
    module: nn.Module
    channels: int
    receptive_field: int
    stride: int


def _build_modules(layout: tuple, layer: int | None) -> tuple[list[nn.Module], int]:
    """Instantiate conv/pool modules, truncated after conv ``layer``."""
    n_convs = sum(1 for item in layout if item != "M")
    keep = n_convs if layer is None else layer
    if keep > n_convs:
        raise ConfigError(f"layer {keep} out of range, network has {n_convs} convolutions")
    modules: list[nn.Module] = []
    in_ch = 3
    seen = 0
    for item in layout:
        if item == "M":
            modules.append(nn.MaxPool2d(kernel_size=2, stride=2))
            continue
        modules.append(nn.Conv2d(in_ch, item, kernel_size=3, padding=1))
        modules.append(nn.ReLU(inplace=True))
        in_ch = item
        seen += 1
        if seen == keep:
            break
    return modules, in_ch


def _strip_trailing_pools(modules: list[nn.Module]) -> list[nn.Module]:
    while modules and isinstance(modules[-1], nn.MaxPool2d):
        modules.pop()
    return modules


def _walk_geometry(modules: list[nn.Module]) -> tuple[int, int]:
    """Receptive field and output stride of a conv/pool stack."""
    rf = 1
    jump = 1
    for module in modules:
        if isinstance(module, nn.Conv2d):
            rf += (module.kernel_size[0] - 1) * jump
            jump *= module.stride[0]
        elif isinstance(module, nn.MaxPool2d):
            rf += (module.kernel_size - 1) * jump
            jump *= module.stride
    return rf, jump


def _load_vgg19_weights(module: nn.Sequential, weights_path: str | None) -> None:
    if weights_path is not None:
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
    else:
        try:
            from torchvision.models import VGG19_Weights

            state = VGG19_Weights.IMAGENET1K_V1.get_state_dict(progress=False)
        except Exception as exc:
            raise ConfigError(
                "could not fetch pretrained vgg19 weights; pass --weights with a "
                "local state-dict file, or use vgg19-random for structural runs"
            ) from exc
    n_slots = len(module)
    remapped = {}
    for key, value in state.items():
        parts = key.split(".")
        if parts[0] == "features":
            parts = parts[1:]
        if not parts or not parts[0].isdigit():
            continue
        index = int(parts[0])
        if index < n_slots:
            remapped[".".join(parts)] = value
    try:
        missing, unexpected = module.load_state_dict(remapped, strict=False)
    except RuntimeError as exc:
        raise ConfigError(f"weight file does not match vgg19 topology: {exc}") from exc
    if missing or unexpected:
        raise ConfigError(f"weight file does not match vgg19 topology: {missing or unexpected}")


def build_backbone(config: ExtractorConfig) -> Backbone:
    """Construct the configured network, frozen and in eval mode."""
    layout = _VGG19_LAYOUT if config.network_id.startswith("vgg19") else _TINYNET_LAYOUT
    with torch.random.fork_rng():
        torch.manual_seed(config.seed)
        modules, channels = _build_modules(layout, config.layer)
    modules = _strip_trailing_pools(modules)
    receptive_field, stride = _walk_geometry(modules)
    module = nn.Sequential(*modules)
    if config.network_id == "vgg19":
        _load_vgg19_weights(module, config.weights_path)
    module.eval()
    for parameter in module.parameters():
        parameter.requires_grad_(False)
    return Backbone(
        network_id=config.network_id,
        module=module,
        channels=channels,
        receptive_field=receptive_field,
        stride=stride,
    )
