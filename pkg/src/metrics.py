"""Image quality metrics and the per-attention-bin regional analysis.

PSNR, SSIM and color shift assume values in [0, 1]. The regional analysis
splits pixels into 100 attention bins of width 0.01 and reports MSE and PSNR
per bin, plus a cubic least-squares fit of per-bin MSE over bin centers.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view

from src.attention import resample_map
from src.core_types import AttentionMap, ImageTensor, as_attention, as_image, to_grayscale
from src.masking import SNAP_TOLERANCE
from src.reports import format_metric

SSIM_WINDOW = 8
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2
REGIONAL_BINS = 100
FIT_DEGREE = 3


def _check_pair(a: ImageTensor, b: ImageTensor) -> tuple[ImageTensor, ImageTensor]:
    a, b = as_image(a), as_image(b)
    if a.shape != b.shape:
        raise ValueError(f"Image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def mse_to_psnr(mse: float) -> float:
    """PSNR for unit peak; zero error gives +inf."""
    if mse == 0.0:
        return math.inf
    return -10.0 * math.log10(mse)


def psnr(a: ImageTensor, b: ImageTensor) -> float:
    """Peak signal-to-noise ratio in dB.

    Raises:
        ValueError: If shapes differ
    """
    a, b = _check_pair(a, b)
    return mse_to_psnr(float(np.mean((a - b) ** 2)))


def ssim(a: ImageTensor, b: ImageTensor) -> float:
    """Mean SSIM over every 8x8 window (stride 1) of the luma channel.

    Raises:
        ValueError: If shapes differ or the image is smaller than the window
    """
    a, b = _check_pair(a, b)
    if min(a.shape[:2]) < SSIM_WINDOW:
        raise ValueError(
            f"Image {a.shape[:2]} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )
    wa = sliding_window_view(to_grayscale(a), (SSIM_WINDOW, SSIM_WINDOW))
    wb = sliding_window_view(to_grayscale(b), (SSIM_WINDOW, SSIM_WINDOW))
    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    da = wa - mu_a[..., np.newaxis, np.newaxis]
    db = wb - mu_b[..., np.newaxis, np.newaxis]
    var_a = (da * da).mean(axis=(-2, -1))
    var_b = (db * db).mean(axis=(-2, -1))
    cov = (da * db).mean(axis=(-2, -1))
    numerator = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    denominator = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(numerator / denominator))


@dataclass(frozen=True)
class ColorShift:
    """Per-channel mean deviation and its mean absolute value"""

    red: float
    green: float
    blue: float

    @property
    def channels(self) -> tuple[float, float, float]:
        return (self.red, self.green, self.blue)

    @property
    def summary(self) -> float:
        return float(np.mean(np.abs(self.channels)))


def _check_color(a: ImageTensor, ref: ImageTensor) -> tuple[ImageTensor, ImageTensor]:
    a, ref = _check_pair(a, ref)
    if a.shape[2] != 3:
        raise ValueError(f"Color shift needs 3-channel images, got {a.shape[2]}")
    return a, ref


def color_shift(a: ImageTensor, ref: ImageTensor) -> ColorShift:
    """Mean of each channel of ``a`` minus that of ``ref``.

    Raises:
        ValueError: If shapes differ or the images are not RGB
    """
    a, ref = _check_color(a, ref)
    diff = a.mean(axis=(0, 1)) - ref.mean(axis=(0, 1))
    return ColorShift(*(float(v) for v in diff))


def normalize_means(a: ImageTensor, ref: ImageTensor) -> ImageTensor:
    """Shift each channel of ``a`` so its mean matches ``ref``."""
    a, ref = _check_color(a, ref)
    return a - a.mean(axis=(0, 1)) + ref.mean(axis=(0, 1))


@dataclass(frozen=True, eq=False)
class RegionalReport:
    """Per-attention-bin error sums with a cubic fit of per-bin MSE.

    ``coefficients`` are in increasing degree order, zero-padded to 4 terms.
    """

    counts: np.ndarray
    squared_error: np.ndarray
    channels: int
    coefficients: np.ndarray

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, REGIONAL_BINS + 1)

    @property
    def centers(self) -> np.ndarray:
        edges = self.edges
        return (edges[:-1] + edges[1:]) / 2.0

    @property
    def mse(self) -> np.ndarray:
        """Per-bin MSE; NaN marks empty bins"""
        with np.errstate(invalid="ignore", divide="ignore"):
            values = self.squared_error / (self.counts * self.channels)
        return np.where(self.counts > 0, values, np.nan)

    @property
    def psnr(self) -> np.ndarray:
        return np.array([math.nan if math.isnan(m) else mse_to_psnr(m) for m in self.mse])

    def fitted(self, x: np.ndarray) -> np.ndarray:
        """Evaluate the fitted polynomial."""
        return np.polynomial.polynomial.polyval(x, self.coefficients)


def fit_polynomial(x: np.ndarray, y: np.ndarray, degree: int = FIT_DEGREE) -> np.ndarray:
    """Least-squares polynomial by the normal equations.

    The degree drops to len(x) - 1 when there are too few points.

    Returns:
        Coefficients in increasing degree order, zero-padded to degree + 1
    """
    coefficients = np.zeros(degree + 1)
    if x.size == 0:
        return coefficients
    used = min(degree, x.size - 1)
    vander = np.vander(x, used + 1, increasing=True)
    solution = np.linalg.solve(vander.T @ vander, vander.T @ y)
    coefficients[: used + 1] = solution
    return coefficients


def _report_from_sums(
    counts: np.ndarray, squared_error: np.ndarray, channels: int
) -> RegionalReport:
    partial = RegionalReport(counts, squared_error, channels, np.zeros(FIT_DEGREE + 1))
    populated = counts > 0
    coefficients = fit_polynomial(partial.centers[populated], partial.mse[populated])
    return RegionalReport(counts, squared_error, channels, coefficients)


def attention_bins(attention: AttentionMap) -> np.ndarray:
    """Bin index per pixel; the last bin is closed at 1.0."""
    bins = np.floor(attention * REGIONAL_BINS + SNAP_TOLERANCE).astype(np.int64)
    return np.minimum(bins, REGIONAL_BINS - 1)


def regional_analysis(hr: ImageTensor, sr: ImageTensor, attention: AttentionMap) -> RegionalReport:
    """Bin pixels by attention and measure reconstruction error per bin.

    The attention map is resampled to the image size when it differs.
    """
    hr, sr = _check_pair(hr, sr)
    height, width, channels = hr.shape
    attention = as_attention(attention)
    if attention.shape != (height, width):
        attention = resample_map(attention, height, width)
    bins = attention_bins(attention).ravel()
    pixel_error = ((hr - sr) ** 2).sum(axis=2).ravel()
    counts = np.bincount(bins, minlength=REGIONAL_BINS)
    squared_error = np.bincount(bins, weights=pixel_error, minlength=REGIONAL_BINS)
    return _report_from_sums(counts, squared_error, channels)


def merge_regional(reports: Sequence[RegionalReport]) -> RegionalReport:
    """Pool bin counts and error sums across images, then refit.

    Raises:
        ValueError: If no reports are given or channel counts differ
    """
    if not reports:
        raise ValueError("At least one regional report is required")
    channels = reports[0].channels
    if any(r.channels != channels for r in reports):
        raise ValueError("Regional reports differ in channel count")
    counts = np.sum([r.counts for r in reports], axis=0)
    squared_error = np.sum([r.squared_error for r in reports], axis=0)
    return _report_from_sums(counts, squared_error, channels)


def regional_frame(report: RegionalReport) -> pd.DataFrame:
    """CSV rows: one per bin, then one per fitted coefficient."""
    edges = report.edges
    rows = [
        {
            "bin_lo": format_metric(edges[k]),
            "bin_hi": format_metric(edges[k + 1]),
            "count": str(int(report.counts[k])),
            "mse": format_metric(report.mse[k]),
            "psnr": format_metric(report.psnr[k]),
        }
        for k in range(REGIONAL_BINS)
    ]
    for degree, value in enumerate(report.coefficients):
        rows.append({
            "bin_lo": "coefficient",
            "bin_hi": str(degree),
            "count": "",
            "mse": format_metric(value),
            "psnr": "",
        })
    return pd.DataFrame(rows, columns=["bin_lo", "bin_hi", "count", "mse", "psnr"])


def score_image(
    hr: ImageTensor,
    sr: ImageTensor,
    name: str,
    ref_normalize: bool = False,
) -> dict[str, object]:
    """Metrics row for one image; color columns are NaN for grayscale.

    With ``ref_normalize`` the channel means of ``sr`` are matched to ``hr``
    before PSNR and SSIM are computed.
    """
    hr, sr = _check_pair(hr, sr)
    rgb = hr.shape[2] == 3
    shift = color_shift(sr, hr) if rgb else None
    if ref_normalize and rgb:
        sr = np.clip(normalize_means(sr, hr), 0.0, 1.0)
    row: dict[str, object] = {"filename": name, "psnr": psnr(hr, sr), "ssim": ssim(hr, sr)}
    for channel, key in enumerate(("shift_r", "shift_g", "shift_b")):
        row[key] = shift.channels[channel] if shift else math.nan
    row["shift_summary"] = shift.summary if shift else math.nan
    return row


METRIC_COLUMNS = ("psnr", "ssim", "shift_r", "shift_g", "shift_b", "shift_summary")


def format_frame(frame: pd.DataFrame, columns: Sequence[str] = METRIC_COLUMNS) -> pd.DataFrame:
    """Render metric columns as strings ("inf", "empty") for CSV output."""
    formatted = frame.copy()
    for column in columns:
        if column in formatted:
            formatted[column] = [format_metric(v) for v in formatted[column]]
    return formatted
