"""Reconstruction quality metrics."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["rre", "psnr"]


def rre(x: np.ndarray, x_true: np.ndarray) -> float:
    """Relative reconstruction error ||x - x_true|| / ||x_true||."""
    xt = np.asarray(x_true, dtype=float).ravel()
    scale = np.linalg.norm(xt)
    if scale == 0.0:
        raise ValueError("RRE is undefined for an all-zero reference image")
    err = np.asarray(x, dtype=float).ravel() - xt
    return float(np.linalg.norm(err) / scale)


def psnr(x: np.ndarray, x_true: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB, with peak taken from the reference.

    Uses 10*log10(max(x_true)^2 * npixels / ||x - x_true||^2).  A perfect
    reconstruction has infinite PSNR, returned as ``math.inf``.
    """
    xt = np.asarray(x_true, dtype=float).ravel()
    err2 = float(np.sum((np.asarray(x, dtype=float).ravel() - xt) ** 2))
    if err2 == 0.0:
        return math.inf
    peak = float(xt.max())
    return 10.0 * math.log10(peak * peak * xt.size / err2)
