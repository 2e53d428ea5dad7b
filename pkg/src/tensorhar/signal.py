"""Raw IMU stream preprocessing: smoothing filters, standardization, windowing.

A stream is a set of equally long per-axis series (accelerometer required,
gyroscope optional) with timestamps and an optional per-timestep label
track. Preprocessing turns streams into fixed-length labeled windows of
shape (T timesteps, C channels).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CHANNEL_ORDER = ("ax", "ay", "az", "gx", "gy", "gz")
ACC_CHANNELS = ("ax", "ay", "az")


@dataclass(frozen=True)
class KalmanConfig:
    """Scalar random-walk Kalman filter parameters (one filter per channel)."""

    process_variance: float = 1e-3
    measurement_variance: float = 1e-2
    initial_estimate: float = 0.0
    initial_variance: float = 1.0

    def __post_init__(self):
        for name in ("process_variance", "measurement_variance", "initial_variance"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class FilterConfig:
    """Which smoothing filters to run, in order, and their parameters."""

    moving_average_width: int = 5
    kalman: KalmanConfig = field(default_factory=KalmanConfig)
    enabled: tuple[str, ...] = ("moving_average", "kalman")

    def __post_init__(self):
        if self.moving_average_width < 1:
            raise ValueError("moving_average_width must be >= 1")
        unknown = set(self.enabled) - {"moving_average", "kalman"}
        if unknown:
            raise ValueError(f"unknown filters: {sorted(unknown)}")


@dataclass
class SampleStream:
    """One subject's raw sensor recording."""

    timestamps: np.ndarray
    channels: dict[str, np.ndarray]
    labels: np.ndarray | None = None
    subject_id: int = 0

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.channels = {k: np.asarray(v, dtype=float) for k, v in self.channels.items()}
        n = self.timestamps.shape[0]
        missing = [c for c in ACC_CHANNELS if c not in self.channels]
        if missing:
            raise ValueError(f"stream is missing accelerometer channels: {missing}")
        for name, series in self.channels.items():
            if series.shape != (n,):
                raise ValueError(f"channel {name!r} has length {series.shape}, expected ({n},)")
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if self.labels.shape != (n,):
                raise ValueError(f"label track has length {self.labels.shape}, expected ({n},)")
        if n > 1 and np.any(np.diff(self.timestamps) < 0):
            raise ValueError("timestamps must be nondecreasing")

    def __len__(self) -> int:
        return int(self.timestamps.shape[0])

    @property
    def channel_names(self) -> tuple[str, ...]:
        """Channels present, in the fixed ax..gz order."""
        return tuple(c for c in CHANNEL_ORDER if c in self.channels)


@dataclass(frozen=True)
class Window:
    """A fixed-length labeled slice of a stream, values shaped (T, C)."""

    values: np.ndarray
    label: int
    subject_id: int
    start: int = 0


def moving_average(series, width: int) -> np.ndarray:
    """Trailing moving average; the prefix uses the partial window available.

    out[t] = mean(series[max(0, t-width+1) .. t]), so output length equals
    input length and width=1 is the identity.
    """
    if width < 1:
        raise ValueError(f"width must be >= 1, got {width}")
    series = np.asarray(series, dtype=float)
    n = series.shape[0]
    if n == 0:
        return series.copy()
    out = np.empty(n)
    csum = np.cumsum(series)
    head = min(width, n)
    out[:head] = csum[:head] / np.arange(1, head + 1)
    if n > width:
        out[width:] = (csum[width:] - csum[:-width]) / width
    return out


def kalman_1d(series, cfg: KalmanConfig = KalmanConfig(),
              return_variance: bool = False):
    """Scalar random-walk Kalman filter over one channel.

    Per step: predict (x- = x, P- = P + Q) then update with gain
    K = P- / (P- + R). Returns the posterior estimate series; with
    return_variance=True also the posterior variance series.
    """
    series = np.asarray(series, dtype=float)
    est = np.empty_like(series)
    var = np.empty_like(series)
    x = cfg.initial_estimate
    p = cfg.initial_variance
    q, r = cfg.process_variance, cfg.measurement_variance
    for t, z in enumerate(series):
        p_pred = p + q
        gain = p_pred / (p_pred + r)
        x = x + gain * (z - x)
        p = (1.0 - gain) * p_pred
        est[t] = x
        var[t] = p
    if return_variance:
        return est, var
    return est


def apply_filters(series, cfg: FilterConfig) -> np.ndarray:
    """Run the enabled filters over one channel, in the configured order."""
    out = np.asarray(series, dtype=float)
    for name in cfg.enabled:
        if name == "moving_average":
            out = moving_average(out, cfg.moving_average_width)
        else:
            out = kalman_1d(out, cfg.kalman)
    return out


@dataclass(frozen=True)
class Standardizer:
    """Per-feature mean/std record; reusable on held-out data."""

    mean: np.ndarray
    std: np.ndarray

    def transform(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def inverse(self, z) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.std + self.mean


def standardize(x) -> tuple[np.ndarray, Standardizer]:
    """Z-score feature columns of an (n, d) matrix.

    Degenerate features (std < 1e-12) are centered and passed through with
    std treated as 1. The returned record replays the same transform.
    """
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        raise ValueError("cannot standardize an empty collection")
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    record = Standardizer(mean=mean, std=std)
    return record.transform(x), record


def standardize_channels(tensors) -> tuple[np.ndarray, Standardizer]:
    """Z-score an (n, T, C) window stack per channel over all timesteps.

    Per-channel scaling keeps a bilinear (per-mode) decision rule exactly as
    expressive as on raw data while equalizing channel magnitudes.
    """
    t = np.asarray(tensors, dtype=float)
    if t.size == 0:
        raise ValueError("cannot standardize an empty collection")
    if t.ndim != 3:
        raise ValueError(f"expected an (n, T, C) stack, got shape {t.shape}")
    mean = t.mean(axis=(0, 1))
    std = t.std(axis=(0, 1))
    std = np.where(std < 1e-12, 1.0, std)
    record = Standardizer(mean=mean, std=std)
    return record.transform(t), record


def window_stream(stream: SampleStream, length: int, stride: int,
                  labeling: str = "strict") -> list[Window]:
    """Slice a labeled stream into (T, C) windows.

    strict keeps only windows whose label track is uniform; majority labels
    each window with its most frequent label (ties to the lowest label).
    Streams shorter than `length` yield no windows.
    """
    if length < 1:
        raise ValueError("window length must be >= 1")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if labeling not in ("strict", "majority"):
        raise ValueError(f"unknown labeling mode {labeling!r}")
    if stream.labels is None:
        raise ValueError("stream has no label track; cannot produce labeled windows")
    n = len(stream)
    if n < length:
        return []
    names = stream.channel_names
    stacked = np.column_stack([stream.channels[c] for c in names])
    labels = np.asarray(stream.labels, dtype=int)
    windows = []
    for start in range(0, n - length + 1, stride):
        seg = labels[start:start + length]
        if labeling == "strict":
            if np.any(seg != seg[0]):
                continue
            label = int(seg[0])
        else:
            label = int(np.bincount(seg).argmax())
        windows.append(Window(values=stacked[start:start + length].copy(),
                              label=label, subject_id=stream.subject_id, start=start))
    return windows


def window_count(n: int, length: int, stride: int) -> int:
    """Number of candidate window positions for a stream of length n."""
    if n < length:
        return 0
    return (n - length) // stride + 1
