"""Reconstruction quality in decibels."""

from dataclasses import dataclass
import math

import numpy as np

from .errors import ContractViolation, UndefinedMetricError
from .poisson import align_mean, integrate
from .operators import make_diff_ops


@dataclass(frozen=True)
class Score:
    snr_surface_db: float
    snr_gradient_db: float
    rmse: float

    def to_dict(self):
        return {k: _json_float(v) for k, v in self.__dict__.items()}


def _json_float(x):
    return "inf" if x == math.inf else x


def snr_db(reference, estimate):
    """``10 log10(||r - mean r||^2 / ||(r - mean r) - (e - mean e)||^2)``.

    Returns ``math.inf`` when the error energy is exactly zero.
    """
    r = np.asarray(reference, dtype=float).ravel()
    e = np.asarray(estimate, dtype=float).ravel()
    if r.shape != e.shape:
        raise ContractViolation(f"length mismatch: {r.size} vs {e.size}")
    r = r - r.mean()
    e = e - e.mean()
    signal = float(r @ r)
    if signal == 0.0:
        raise UndefinedMetricError("reference has zero energy after mean removal")
    err = r - e
    noise = float(err @ err)
    if noise == 0.0:
        return math.inf
    return 10.0 * math.log10(signal / noise)


def score(reference, recon_gradients):
    """Surface SNR after Poisson integration and mean alignment, plus the mean
    of the two per-axis gradient SNRs against the reference's exact gradients."""
    if reference.dims != recon_gradients.dims:
        raise ContractViolation("reference and gradient field dims differ")
    surface = align_mean(integrate(recon_gradients), reference)
    d = make_diff_ops(reference.dims)
    gx = snr_db(d.dx.forward(reference.z), recon_gradients.zx)
    gy = snr_db(d.dy.forward(reference.z), recon_gradients.zy)
    diff = surface.z - reference.z
    return Score(snr_surface_db=snr_db(reference.z, surface.z),
                 snr_gradient_db=0.5 * (gx + gy),
                 rmse=float(np.sqrt(np.mean(diff * diff))))
