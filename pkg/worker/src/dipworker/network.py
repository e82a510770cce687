"""U-net without skip connections.

Encoder of four downsampling scales (stride-2 convolutions, each halving
the spatial size) and a mirrored decoder (nearest-neighbour upsampling
followed by convolution, which avoids checkerboard artifacts).  There
are deliberately no skip connections between the two halves, so all
information is forced through the bottleneck.  Channel widths default to
64-128-256-512; input and output both carry the L spectral bands.

Inputs whose spatial dims are not divisible by 16 are reflection-padded
internally; `crop` removes the padding from the output.
"""

import torch
import torch.nn as nn

DEFAULT_WIDTHS = (64, 128, 256, 512)


def pad_to_multiple(M: int, N: int, multiple: int = 16):
    """Symmetric padding (top, bottom, left, right) up to the multiple."""
    def split(total):
        return total // 2, total - total // 2
    pm = (-M) % multiple
    pn = (-N) % multiple
    top, bottom = split(pm)
    left, right = split(pn)
    return top, bottom, left, right


def _norm(ch):
    # group norm is well-defined for any spatial size, unlike batch
    # statistics; >=4 channels per group keeps it defined even at the 1x1
    # bottleneck of small inputs
    return nn.GroupNorm(max(1, ch // 4), ch)


def _down_block(cin, cout):
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, stride=2, padding=1),
        _norm(cout),
        nn.LeakyReLU(0.2, inplace=True),
        nn.Conv2d(cout, cout, 3, padding=1),
        _norm(cout),
        nn.LeakyReLU(0.2, inplace=True),
    )


def _up_block(cin, cout):
    return nn.Sequential(
        nn.Upsample(scale_factor=2, mode="nearest"),
        nn.Conv2d(cin, cout, 3, padding=1),
        _norm(cout),
        nn.LeakyReLU(0.2, inplace=True),
    )


class DipNetwork(nn.Module):
    def __init__(self, bands: int, widths=DEFAULT_WIDTHS):
        super().__init__()
        if len(widths) != 4:
            raise ValueError("expected four encoder widths")
        downs = []
        cin = bands
        for w in widths:
            downs.append(_down_block(cin, w))
            cin = w
        ups = []
        for w in reversed(widths[:-1]):
            ups.append(_up_block(cin, w))
            cin = w
        ups.append(_up_block(cin, widths[0]))
        self.encoder = nn.Sequential(*downs)
        self.decoder = nn.Sequential(*ups)
        self.head = nn.Sequential(nn.Conv2d(widths[0], bands, 1), nn.Sigmoid())

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        return self.head(self.decoder(self.encoder(z)))
