"""Image containers, colorspace conversion, 2-D Fourier utilities, PNG I/O.

Conventions pinned here and relied on everywhere else:

* images are channel-last float tensors with values nominally in [0, 1];
* YCrCb uses full-range BT.601 luma weights with both chroma channels
  offset by 0.5 on the [0, 1] scale (Cr = 0.5 + 0.713 (R - Y),
  Cb = 0.5 + 0.564 (B - Y));
* the forward DFT is unnormalized, the inverse carries the 1/(HW) factor,
  and phase is atan2(imag, real) mapped into (-pi, pi];
* colorspace conversions clamp to [0, 1], spectral reconstruction does not
  (fused spectra feed an encoder, not a display).

The tensor-level helpers (``*_t``) accept any leading batch dimensions and
are differentiable, so the training path reuses the exact same arithmetic
as the ``Image``-level API.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
import torch
from torch import Tensor

from .errors import DataError, NumericError

# Full-range BT.601 constants on the [0,1] scale.
LUMA_R, LUMA_G, LUMA_B = 0.299, 0.587, 0.114
CR_SCALE = 0.713
CB_SCALE = 0.564
CHROMA_OFFSET = 0.5

# Imaginary residue from an inverse DFT below this is silently discarded ...
IMAG_DISCARD = 1e-5
# ... and above this it is treated as a numeric failure.
IMAG_FAIL = 1e-3


class Colorspace(enum.Enum):
    RGB = "rgb"
    YCRCB = "ycrcb"


@dataclass(frozen=True)
class Image:
    """An H x W x 3 raster with an explicit colorspace tag.

    Values live nominally in [0, 1]; operations documented as clamping
    guarantee that range, others (spectral reconstruction) may overshoot.
    """

    data: Tensor
    colorspace: Colorspace = Colorspace.RGB

    def __post_init__(self) -> None:
        if self.data.ndim != 3 or self.data.shape[-1] != 3:
            raise DataError(f"image data must be (H, W, 3), got {tuple(self.data.shape)}")
        if not torch.isfinite(self.data).all():
            raise DataError("image data contains non-finite values")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def clamp(self) -> "Image":
        return Image(self.data.clamp(0.0, 1.0), self.colorspace)

    def to_numpy(self) -> np.ndarray:
        return self.data.detach().cpu().numpy()

    @staticmethod
    def from_numpy(arr: np.ndarray, colorspace: Colorspace = Colorspace.RGB) -> "Image":
        return Image(torch.as_tensor(arr, dtype=torch.float64), colorspace)


@dataclass(frozen=True)
class Spectrum:
    """Per-channel amplitude/phase of a 2-D DFT; shapes (H, W, 3)."""

    amplitude: Tensor  # >= 0 everywhere
    phase: Tensor      # in (-pi, pi]

    def __post_init__(self) -> None:
        if self.amplitude.shape != self.phase.shape:
            raise DataError("amplitude and phase shapes differ")
        if (self.amplitude < 0).any():
            raise DataError("amplitude must be non-negative")


# ---------------------------------------------------------------------------
# tensor-level colorspace conversion (channel-last, any leading dims)
# ---------------------------------------------------------------------------

def rgb_to_ycrcb_t(rgb: Tensor) -> Tensor:
    """BT.601 RGB -> YCrCb on channel-last tensors, clamped to [0, 1]."""
    r, g, b = rgb.unbind(-1)
    y = LUMA_R * r + LUMA_G * g + LUMA_B * b
    cr = CHROMA_OFFSET + CR_SCALE * (r - y)
    cb = CHROMA_OFFSET + CB_SCALE * (b - y)
    return torch.stack((y, cr, cb), dim=-1).clamp(0.0, 1.0)


def ycrcb_to_rgb_t(ycrcb: Tensor) -> Tensor:
    """Exact algebraic inverse of :func:`rgb_to_ycrcb_t`, clamped to [0, 1]."""
    y, cr, cb = ycrcb.unbind(-1)
    r = y + (cr - CHROMA_OFFSET) / CR_SCALE
    b = y + (cb - CHROMA_OFFSET) / CB_SCALE
    g = (y - LUMA_R * r - LUMA_B * b) / LUMA_G
    return torch.stack((r, g, b), dim=-1).clamp(0.0, 1.0)


def luma_t(rgb: Tensor) -> Tensor:
    """BT.601 luma of a channel-last RGB tensor (no clamp)."""
    r, g, b = rgb.unbind(-1)
    return LUMA_R * r + LUMA_G * g + LUMA_B * b


def rgb_to_ycrcb(img: Image) -> Image:
    if img.colorspace is not Colorspace.RGB:
        raise DataError(f"expected RGB input, got {img.colorspace}")
    return Image(rgb_to_ycrcb_t(img.data), Colorspace.YCRCB)


def ycrcb_to_rgb(img: Image) -> Image:
    if img.colorspace is not Colorspace.YCRCB:
        raise DataError(f"expected YCrCb input, got {img.colorspace}")
    return Image(ycrcb_to_rgb_t(img.data), Colorspace.RGB)


# ---------------------------------------------------------------------------
# 2-D Fourier utilities (channel-last; FFT over the two spatial dims)
# ---------------------------------------------------------------------------

def spectrum_t(x: Tensor) -> tuple[Tensor, Tensor]:
    """Amplitude and phase of the per-channel 2-D DFT of ``x`` (..., H, W, 3)."""
    if not torch.isfinite(x).all():
        raise NumericError("non-finite input to FFT")
    freq = torch.fft.fft2(x, dim=(-3, -2))
    amplitude = freq.abs()
    phase = freq.angle()
    # atan2 lands in [-pi, pi]; fold the closed lower end onto +pi.
    phase = torch.where(phase <= -math.pi, phase + 2.0 * math.pi, phase)
    return amplitude, phase


def inverse_spectrum_t(amplitude: Tensor, phase: Tensor) -> Tensor:
    """Inverse DFT of ``amplitude * exp(j phase)``; real part, unclamped.

    Raises :class:`NumericError` if the imaginary residue exceeds the
    failure threshold (the given spectrum was not conjugate-symmetric).
    """
    freq = torch.polar(amplitude, phase)
    out = torch.fft.ifft2(freq, dim=(-3, -2))
    residue = out.imag.abs().max()
    if residue > IMAG_FAIL:
        raise NumericError(
            f"inverse DFT imaginary residue {residue:.3e} exceeds {IMAG_FAIL:g}"
        )
    return out.real


def fft_decompose(img: Image) -> Spectrum:
    amplitude, phase = spectrum_t(img.data)
    return Spectrum(amplitude, phase)


def fft_reconstruct(spec: Spectrum, colorspace: Colorspace = Colorspace.RGB) -> Image:
    return Image(inverse_spectrum_t(spec.amplitude, spec.phase), colorspace)


# ---------------------------------------------------------------------------
# PNG I/O (8- and 16-bit RGB; alpha and palettes rejected)
# ---------------------------------------------------------------------------

def load_image(path: str | Path) -> Image:
    """Load an 8- or 16-bit RGB PNG as a float64 Image scaled to [0, 1]."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise DataError(f"unreadable image file: {path}")
    if raw.ndim != 3 or raw.shape[2] != 3:
        channels = 1 if raw.ndim == 2 else raw.shape[2]
        raise DataError(f"{path}: expected 3-channel RGB, got {channels} channel(s)")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise DataError(f"{path}: unsupported bit depth {raw.dtype}")
    rgb = raw[:, :, ::-1].astype(np.float64) / scale  # BGR -> RGB
    return Image(torch.from_numpy(np.ascontiguousarray(rgb)), Colorspace.RGB)


def save_image(img: Image, path: str | Path, bit_depth: int = 8) -> None:
    """Quantize with round-half-up and write a PNG (8- or 16-bit)."""
    if bit_depth == 8:
        scale, dtype = 255.0, np.uint8
    elif bit_depth == 16:
        scale, dtype = 65535.0, np.uint16
    else:
        raise DataError(f"unsupported bit depth {bit_depth}")
    arr = img.data.detach().cpu().numpy()
    quantized = np.floor(np.clip(arr, 0.0, 1.0) * scale + 0.5)
    bgr = quantized.astype(dtype)[:, :, ::-1]
    if not cv2.imwrite(str(path), np.ascontiguousarray(bgr)):
        raise DataError(f"failed to write image: {path}")
