"""UNet heatmap regressor: strided-conv encoder, transposed-conv decoder,
additive skip connections, per-pixel logistic output."""
from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import torch
from torch import nn

from .dataio import atomic_write_bytes, atomic_write_json
from .errors import ConfigError, ShapeError


@dataclass(frozen=True)
class ModelConfig:
    input_size: int = 224
    in_channels: int = 1
    num_keypoints: int = 6
    stages: int = 4
    base_channels: int = 16
    channel_growth: int = 2
    init_seed: int = 0
    # initial logit of the output head; a negative prior keeps early BCE from
    # being dominated by the (overwhelmingly empty) background pixels
    head_bias_init: float = -4.0

    def validate(self) -> None:
        if self.stages < 1:
            raise ConfigError("stages must be >= 1")
        if self.input_size < 2**self.stages or self.input_size % (2**self.stages):
            raise ConfigError(f"input_size {self.input_size} must be divisible by 2**stages")
        if self.num_keypoints < 1 or self.in_channels < 1 or self.base_channels < 1:
            raise ConfigError("num_keypoints, in_channels and base_channels must be >= 1")
        if self.channel_growth < 1:
            raise ConfigError("channel_growth must be >= 1")

    def channels(self) -> list:
        return [self.base_channels * self.channel_growth**k for k in range(self.stages)]

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown model config field(s): {sorted(unknown)}")
        return cls(**d)


def _conv(cin, cout, k, stride):
    return nn.Sequential(
        nn.Conv2d(cin, cout, k, stride=stride, padding=k // 2, bias=False),
        nn.InstanceNorm2d(cout, affine=True),
        nn.ReLU(inplace=True),
    )


def _deconv(cin, cout):
    # k=3, s=2, output_padding=1 exactly doubles an even spatial size
    return nn.Sequential(
        nn.ConvTranspose2d(cin, cout, 3, stride=2, padding=1, output_padding=1, bias=False),
        nn.InstanceNorm2d(cout, affine=True),
        nn.ReLU(inplace=True),
    )


class UNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        config.validate()
        self.config = config
        chans = config.channels()

        self.enc_conv = nn.ModuleList()
        self.enc_down = nn.ModuleList()
        cin = config.in_channels
        for c in chans:
            self.enc_conv.append(_conv(cin, c, 3, 1))
            self.enc_down.append(_conv(c, c, 3, 2))
            cin = c

        self.up = nn.ModuleList()
        self.dec_conv = nn.ModuleList()
        for k in reversed(range(config.stages)):
            # upsampling lands on the skip's channel count, so the summation
            # needs no projection
            self.up.append(_deconv(cin, chans[k]))
            self.dec_conv.append(_conv(chans[k], chans[k], 3, 1))
            cin = chans[k]

        self.head = nn.Conv2d(cin, config.num_keypoints, 1)
        self._init_weights()

    def _init_weights(self):
        gen = torch.Generator().manual_seed(self.config.init_seed)
        for m in self.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                # fan-in scaled (He) normal; transposed weights are (in, out, k, k)
                cin = m.weight.shape[0 if isinstance(m, nn.ConvTranspose2d) else 1]
                fan_in = cin * m.weight[0, 0].numel()
                std = (2.0 / fan_in) ** 0.5
                with torch.no_grad():
                    m.weight.copy_(torch.randn(m.weight.shape, generator=gen) * std)
                    if m.bias is not None:
                        m.bias.zero_()
        with torch.no_grad():
            self.head.bias.fill_(self.config.head_bias_init)

    def logits(self, x: torch.Tensor) -> torch.Tensor:
        cfg = self.config
        if x.ndim != 4 or x.shape[1] != cfg.in_channels or x.shape[2:] != (cfg.input_size,) * 2:
            raise ShapeError(
                f"expected input B x {cfg.in_channels} x {cfg.input_size} x {cfg.input_size}, "
                f"got {tuple(x.shape)}")
        skips = []
        for conv, down in zip(self.enc_conv, self.enc_down):
            x = conv(x)
            skips.append(x)
            x = down(x)
        for up, conv in zip(self.up, self.dec_conv):
            x = conv(up(x) + skips.pop())
        return self.head(x)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.logits(x))


def build(config: ModelConfig | None = None) -> UNet:
    return UNet(config or ModelConfig())


def forward(model: UNet, batch) -> torch.Tensor:
    if not isinstance(batch, torch.Tensor):
        batch = torch.as_tensor(batch, dtype=torch.float32)
    return model(batch)


def bottleneck_size(config: ModelConfig) -> int:
    return config.input_size // 2**config.stages


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


# --- checkpoints ----------------------------------------------------------

@dataclass
class Checkpoint:
    model: UNet
    train_config: dict
    epoch: int
    phase: str
    seed: int
    history: list = field(default_factory=list)  # per-epoch log records

    @property
    def model_config(self) -> ModelConfig:
        return self.model.config

    def sidecar(self) -> dict:
        return {
            "model_config": asdict(self.model_config),
            "train_config": self.train_config,
            "epoch": self.epoch,
            "phase": self.phase,
            "seed": self.seed,
        }


def sidecar_path(weights_path) -> Path:
    return Path(weights_path).with_suffix(".json")


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    """Write ``<path>`` (torch state dict) and ``<path>.json`` sidecar atomically."""
    path = Path(path)
    buf = io.BytesIO()
    torch.save(ckpt.model.state_dict(), buf)
    atomic_write_bytes(path, buf.getvalue())
    atomic_write_json(sidecar_path(path), ckpt.sidecar())
    return path


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    meta = json.loads(sidecar_path(path).read_text(encoding="utf-8"))
    model = build(ModelConfig.from_dict(meta["model_config"]))
    state = torch.load(path, map_location="cpu", weights_only=True)
    model.load_state_dict(state)
    model.eval()
    return Checkpoint(model=model, train_config=meta.get("train_config", {}),
                      epoch=int(meta["epoch"]), phase=meta["phase"], seed=int(meta["seed"]))
