"""Feature similarity between two images on their luma channel.

The index weights a per-pixel similarity of phase congruency and of
Scharr gradient magnitude by the pointwise maximum phase congruency, so
pixels where either image shows strong features dominate.  Phase
congruency comes from a log-Gabor filter bank: 4 scales starting at
wavelength 6 with scaling factor 2, 4 orientations, sigma_onf 0.55,
with a median-based noise floor per orientation.
"""

import numpy as np
from numpy.fft import fft2, ifft2, ifftshift
from scipy.ndimage import convolve

from .errors import ValidationError
from .imgio import luma

T1 = 0.85  # phase congruency stabilizer
T2 = 160.0  # gradient magnitude stabilizer

_SCHARR_X = np.array([[3.0, 0.0, -3.0],
                      [10.0, 0.0, -10.0],
                      [3.0, 0.0, -3.0]]) / 16.0
_SCHARR_Y = _SCHARR_X.T

MIN_SIDE = 32


def _freq_axis(n):
    if n % 2:
        return np.arange(-(n - 1) / 2.0, (n - 1) / 2.0 + 1.0) / (n - 1)
    return np.arange(-n / 2.0, n / 2.0) / n


def _filter_bank(rows, cols, nscale=4, norient=4, min_wavelength=6,
                 mult=2.0, sigma_onf=0.55, d_theta_sigma=1.2):
    x, y = np.meshgrid(_freq_axis(cols), _freq_axis(rows))
    radius = ifftshift(np.sqrt(x * x + y * y))
    theta = ifftshift(np.arctan2(-y, x))
    radius[0, 0] = 1.0  # avoid log(0) at DC; the DC gain is zeroed below
    sintheta, costheta = np.sin(theta), np.cos(theta)
    lowpass = 1.0 / (1.0 + (radius / 0.45) ** 30)
    radial = []
    for s in range(nscale):
        f0 = 1.0 / (min_wavelength * mult ** s)
        lg = np.exp(-np.log(radius / f0) ** 2 / (2.0 * np.log(sigma_onf) ** 2))
        lg *= lowpass
        lg[0, 0] = 0.0
        radial.append(lg)
    theta_sigma = np.pi / norient / d_theta_sigma
    spreads = []
    for o in range(norient):
        angle = o * np.pi / norient
        ds = sintheta * np.cos(angle) - costheta * np.sin(angle)
        dc = costheta * np.cos(angle) + sintheta * np.sin(angle)
        dtheta = np.abs(np.arctan2(ds, dc))
        spreads.append(np.exp(-dtheta ** 2 / (2.0 * theta_sigma ** 2)))
    return radial, spreads


def phase_congruency(img, nscale=4, norient=4, min_wavelength=6, mult=2.0,
                     sigma_onf=0.55, k=2.0, epsilon=1e-4):
    """Phase congruency map of a 2-D image, values in [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    rows, cols = img.shape
    spectrum = fft2(img)
    radial, spreads = _filter_bank(rows, cols, nscale, norient,
                                   min_wavelength, mult, sigma_onf)
    energy_all = np.zeros_like(img)
    an_all = np.zeros_like(img)
    for spread in spreads:
        sum_e = np.zeros_like(img)
        sum_o = np.zeros_like(img)
        sum_an = np.zeros_like(img)
        responses = []
        tau = 0.0
        for s, lg in enumerate(radial):
            eo = ifft2(spectrum * (lg * spread))
            an = np.abs(eo)
            responses.append(eo)
            sum_an += an
            sum_e += eo.real
            sum_o += eo.imag
            if s == 0:
                tau = np.median(an) / np.sqrt(np.log(4.0))
        x_energy = np.sqrt(sum_e ** 2 + sum_o ** 2) + epsilon
        mean_e = sum_e / x_energy
        mean_o = sum_o / x_energy
        energy = np.zeros_like(img)
        for eo in responses:
            energy += eo.real * mean_e + eo.imag * mean_o - np.abs(
                eo.real * mean_o - eo.imag * mean_e)
        # noise floor from the smallest-scale response statistics
        total_tau = tau * (1.0 - (1.0 / mult) ** nscale) / (1.0 - 1.0 / mult)
        noise_mean = total_tau * np.sqrt(np.pi / 2.0)
        noise_sigma = total_tau * np.sqrt((4.0 - np.pi) / 2.0)
        threshold = (noise_mean + k * noise_sigma) / 1.7
        energy_all += np.maximum(energy - threshold, 0.0)
        an_all += sum_an
    return energy_all / (an_all + epsilon)


def gradient_magnitude(img):
    """Scharr gradient magnitude with reflected borders."""
    gx = convolve(img, _SCHARR_X, mode="reflect")
    gy = convolve(img, _SCHARR_Y, mode="reflect")
    return np.sqrt(gx * gx + gy * gy)


def fsim(image_a, image_b):
    """Feature similarity of two [H, W, 3] images in [0, 1] pixel scale.

    Returns a value in (0, 1]; identical inputs give exactly 1.0.  The
    computation is symmetric in its arguments.
    """
    a = np.asarray(image_a, dtype=np.float64)
    b = np.asarray(image_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValidationError("images must share a shape")
    ya = luma(a) * 255.0
    yb = luma(b) * 255.0
    if min(ya.shape) < MIN_SIDE:
        raise ValidationError(
            "image too small for the filter bank (min side %d)" % MIN_SIDE
        )
    pc_a = phase_congruency(ya)
    pc_b = phase_congruency(yb)
    gm_a = gradient_magnitude(ya)
    gm_b = gradient_magnitude(yb)
    s_pc = (2.0 * pc_a * pc_b + T1) / (pc_a * pc_a + pc_b * pc_b + T1)
    s_gm = (2.0 * gm_a * gm_b + T2) / (gm_a * gm_a + gm_b * gm_b + T2)
    pc_max = np.maximum(pc_a, pc_b)
    denom = float(pc_max.sum())
    if denom == 0.0:
        return 1.0  # featureless pair; similarity is vacuous
    return float((s_pc * s_gm * pc_max).sum() / denom)
