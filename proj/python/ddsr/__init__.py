"""Dual-domain adaptation super-resolution: C++ core with Python bindings."""

from ._core import (
    DdsrError,
    SuperResolver,
    amplitude_map,
    conv2d,
    degrade,
    fft2,
    gaussian_blur,
    high_band_amplitude_error,
    ifft2,
    linear,
    lr_schedule,
    make_hr_corpus,
    merge_lora,
    pixel_shuffle,
    psnr,
    resize_bicubic,
    ssim,
)
from ._core import __version__

__all__ = [
    "DdsrError",
    "SuperResolver",
    "amplitude_map",
    "conv2d",
    "degrade",
    "fft2",
    "gaussian_blur",
    "high_band_amplitude_error",
    "ifft2",
    "linear",
    "lr_schedule",
    "make_hr_corpus",
    "merge_lora",
    "pixel_shuffle",
    "psnr",
    "resize_bicubic",
    "ssim",
    "__version__",
]
