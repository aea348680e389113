"""Six 3D convolutional classifiers for two-channel 32^3 patches.

All nets take (n, 2, 32, 32, 32) float input and emit 2 class logits.
Because the input cube is small, the residual and densely-connected
families keep their stem convolution at stride 1, and the residual nets
end in an average pool instead of one more stride-2 projection, so the
final pooling still sees a cube larger than one voxel. Downsampling
otherwise happens only in the pooling / transition layers, whose stride
is 2 throughout.
"""

from __future__ import annotations

import torch
from torch import nn


def _cbr(cin: int, cout: int, kernel: int, stride: int = 1) -> list[nn.Module]:
    # conv + norm + relu; bias folds into the norm
    return [
        nn.Conv3d(cin, cout, kernel, stride=stride, padding=kernel // 2, bias=False),
        nn.BatchNorm3d(cout),
        nn.ReLU(inplace=True),
    ]


class _Vgg3d(nn.Module):
    """Stacked 3x3x3 convolutions, five 2x pools, three-layer head."""

    STAGE_WIDTHS = (64, 128, 256, 512, 512)
    HEAD_WIDTH = 4096

    def __init__(self, convs_per_stage: tuple[int, ...]):
        super().__init__()
        layers: list[nn.Module] = []
        cin = 2
        for n_convs, width in zip(convs_per_stage, self.STAGE_WIDTHS):
            for _ in range(n_convs):
                layers += _cbr(cin, width, 3)
                cin = width
            layers.append(nn.MaxPool3d(2))
        self.features = nn.Sequential(*layers)
        # 32^3 input leaves a 1^3 cube after the five pools
        self.classifier = nn.Sequential(
            nn.Flatten(),
            nn.Linear(cin, self.HEAD_WIDTH),
            nn.ReLU(inplace=True),
            nn.Linear(self.HEAD_WIDTH, self.HEAD_WIDTH),
            nn.ReLU(inplace=True),
            nn.Linear(self.HEAD_WIDTH, 2),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.classifier(self.features(x))


class _Bottleneck3d(nn.Module):
    """1-3-1 residual block at constant spatial size."""

    def __init__(self, cin: int, width: int, cout: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.Conv3d(cin, width, 1, bias=False),
            nn.BatchNorm3d(width),
            nn.ReLU(inplace=True),
            nn.Conv3d(width, width, 3, padding=1, bias=False),
            nn.BatchNorm3d(width),
            nn.ReLU(inplace=True),
            nn.Conv3d(width, cout, 1, bias=False),
            nn.BatchNorm3d(cout),
        )
        self.project = None
        if cin != cout:
            self.project = nn.Sequential(
                nn.Conv3d(cin, cout, 1, bias=False), nn.BatchNorm3d(cout)
            )
        self.relu = nn.ReLU(inplace=True)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        shortcut = x if self.project is None else self.project(x)
        return self.relu(self.body(x) + shortcut)


class _ResNet3d(nn.Module):
    """Bottleneck stages joined by stride-2 1x1x1 projections.

    The stem keeps stride 1 and the net ends in a 2x average pool rather
    than another stride-2 projection, leaving exactly three stride-2
    convolutions between the four stages.
    """

    STAGE_WIDTHS = (256, 512, 1024, 2048)

    def __init__(self, blocks_per_stage: tuple[int, int, int, int]):
        super().__init__()
        self.stem = nn.Sequential(*_cbr(2, 64, 7, stride=1))
        self.pool = nn.MaxPool3d(3, stride=2, padding=1)
        stages: list[nn.Module] = []
        cin = 64
        for si, (n_blocks, cout) in enumerate(zip(blocks_per_stage, self.STAGE_WIDTHS)):
            if si > 0:
                stages.append(
                    nn.Sequential(
                        nn.Conv3d(cin, cout, 1, stride=2, bias=False),
                        nn.BatchNorm3d(cout),
                        nn.ReLU(inplace=True),
                    )
                )
                cin = cout
            width = cout // 4
            for _ in range(n_blocks):
                stages.append(_Bottleneck3d(cin, width, cout))
                cin = cout
        self.stages = nn.Sequential(*stages)
        self.head = nn.Sequential(nn.AvgPool3d(2), nn.Flatten(), nn.Linear(cin, 2))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.stages(self.pool(self.stem(x))))


class _DenseLayer3d(nn.Module):
    """Bottlenecked dense layer: concatenates `growth` new channels."""

    def __init__(self, cin: int, growth: int):
        super().__init__()
        self.body = nn.Sequential(
            nn.BatchNorm3d(cin),
            nn.ReLU(inplace=True),
            nn.Conv3d(cin, 4 * growth, 1, bias=False),
            nn.BatchNorm3d(4 * growth),
            nn.ReLU(inplace=True),
            nn.Conv3d(4 * growth, growth, 3, padding=1, bias=False),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.cat([x, self.body(x)], dim=1)


class _DenseNet3d(nn.Module):
    """Dense blocks with halving 1x1x1 transitions and stride-2 pools.

    The stem stays at stride 1; the pool after the third block uses a
    3-kernel so the last block still works on a 2^3 cube, and a final
    transition ahead of the closing pool keeps the head narrow.
    """

    GROWTH = 32
    INIT_WIDTH = 64

    def __init__(self, layers_per_block: tuple[int, int, int, int]):
        super().__init__()
        self.stem = nn.Sequential(*_cbr(2, self.INIT_WIDTH, 7, stride=1))
        self.pool = nn.MaxPool3d(3, stride=2, padding=1)
        trunk: list[nn.Module] = []
        cin = self.INIT_WIDTH
        pools = (
            nn.AvgPool3d(2),
            nn.AvgPool3d(2),
            nn.AvgPool3d(3, stride=2, padding=1),
            nn.AvgPool3d(2),
        )
        for n_layers, pool in zip(layers_per_block, pools):
            for _ in range(n_layers):
                trunk.append(_DenseLayer3d(cin, self.GROWTH))
                cin += self.GROWTH
            trunk += [
                nn.BatchNorm3d(cin),
                nn.ReLU(inplace=True),
                nn.Conv3d(cin, cin // 2, 1, bias=False),
                pool,
            ]
            cin //= 2
        self.trunk = nn.Sequential(*trunk)
        self.head = nn.Sequential(nn.Flatten(), nn.Linear(cin, 2))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.head(self.trunk(self.pool(self.stem(x))))


NETWORKS: dict[str, tuple] = {
    "vgg11_3d": (_Vgg3d, (1, 1, 2, 2, 2)),
    "vgg16_3d": (_Vgg3d, (2, 2, 3, 3, 3)),
    "resnet101_3d": (_ResNet3d, (3, 4, 23, 3)),
    "resnet152_3d": (_ResNet3d, (3, 8, 36, 3)),
    "densenet121_3d": (_DenseNet3d, (6, 12, 24, 16)),
    "densenet201_3d": (_DenseNet3d, (6, 12, 48, 32)),
}


def build_network(name: str) -> nn.Module:
    """Instantiate one of the six architectures by name."""
    try:
        cls, plan = NETWORKS[name]
    except KeyError:
        raise ValueError(
            f"unknown network {name!r}; choose from {sorted(NETWORKS)}"
        ) from None
    return cls(plan)


def parameter_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
