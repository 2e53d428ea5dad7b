"""Synthetic HAR data generators.

Two outputs, both clearly synthetic and fully seeded: a directory tree in
the standard HAR archive layout (raw inertial windows plus derived
561-feature vectors), and per-subject CSV streams in the custom format.
The generative model mimics the real signals' structure: class-specific
gait frequency and amplitude, per-class posture offsets in body and gyro
channels, per-class gravity orientation in the total acceleration,
per-subject offsets, a narrowband mount-resonance tone above the body
band with a per-wearer phase signature, sensor noise, spike artifacts,
and ambiguous stairs-transition windows.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .util import substream

N_TIMESTEPS = 128
N_CHANNELS = 9
N_FEATURES = 561

# per class: (cycles per window, amplitude, gravity unit direction xyz,
#             body-channel DC offset xyz, gyro-channel DC offset xyz)
_CLASS_PARAMS = {
    0: (4.0, 0.45, (0.15, 0.10, 0.98),   # walking: strong regular gait
        (0.275, -0.175, 0.20), (0.175, -0.125, 0.10)),
    1: (3.2, 0.34, (0.35, 0.05, 0.93),   # upstairs: slower, tilted forward
        (-0.16, 0.14, 0.08), (-0.12, 0.08, 0.10)),
    2: (5.0, 0.38, (-0.25, 0.05, 0.96),  # downstairs: faster, tilted back
        (0.08, 0.16, -0.18), (0.06, 0.12, -0.12)),
    3: (1.0, 0.05, (0.80, 0.10, 0.58),   # sitting: near-static, reclined
        (0.12, 0.10, -0.10), (-0.06, -0.10, 0.04)),
    4: (1.0, 0.05, (0.05, 0.02, 0.99),   # standing: near-static, upright
        (-0.12, -0.12, 0.12), (0.08, 0.06, -0.08)),
    5: (1.0, 0.04, (0.05, 0.97, 0.15),   # laying: near-static, horizontal
        (0.04, -0.10, -0.14), (-0.10, 0.04, 0.12)),
}

_NOISE_STD = 0.42

# stairs transitions: a fraction of stairs windows straddle the boundary
# between the two stairs classes with blended parameters, reduced gait
# amplitude, and extra noise
_TRANSITION_RATE = 0.10
_TRANSITION_MIX = (0.44, 0.56)
_TRANSITION_AMP = 0.55
_TRANSITION_NOISE = 1.2

# mount-resonance tone: constant amplitude, above the <20 Hz body band
# (56 cycles / 2.56 s = 21.9 Hz); phase fixed per (subject, class).
# Class 0 is the mount-calibration activity and carries no tone.
_TONE_CYCLES = 56.0
_TONE_AMP = 0.9

# rfft bin index of the ~20 Hz body-band edge at 50 Hz sampling
_BODY_BAND_BIN = 52

_AGE_GROUPS = ("18-25", "26-35", "36-45", "46-60")
_AGE_COUNTS = (3, 4, 5, 3)  # 15 participants across four brackets


def _blended_params(label: int, other: int, mix: float):
    pa, pb = _CLASS_PARAMS[label], _CLASS_PARAMS[other]
    return [(1.0 - mix) * np.asarray(pa[i], dtype=float)
            + mix * np.asarray(pb[i], dtype=float) for i in range(5)]


def _class_tensor(label: int, rng, subject_offset: np.ndarray,
                  tone_phases: np.ndarray | None, hard: bool) -> np.ndarray:
    """One (128, 9) window: body_acc, body_gyro, total_acc triplets."""
    if hard:
        mix = float(rng.uniform(*_TRANSITION_MIX))
        other = 2 if label == 1 else 1
        cycles, amp, gravity, body_dc, gyro_dc = _blended_params(label, other, mix)
        cycles = float(cycles)
        amp = float(amp) * _TRANSITION_AMP
        noise = _NOISE_STD * _TRANSITION_NOISE
    else:
        cycles, amp, gravity, body_dc, gyro_dc = _CLASS_PARAMS[label]
        noise = _NOISE_STD
    gravity = np.asarray(gravity, dtype=float)
    body_dc = np.asarray(body_dc, dtype=float)
    gyro_dc = np.asarray(gyro_dc, dtype=float)
    t = np.arange(N_TIMESTEPS) / N_TIMESTEPS
    freq = cycles * float(rng.uniform(0.93, 1.07))
    amp = amp * float(rng.uniform(0.85, 1.15))
    phase = float(rng.uniform(0, 2 * np.pi))
    gait = np.sin(2 * np.pi * freq * t + phase)
    harmonic = 0.35 * np.sin(4 * np.pi * freq * t + 2 * phase)
    axis_gain = np.array([1.0, 0.55, 0.8]) * amp
    window = np.empty((N_TIMESTEPS, N_CHANNELS))
    body = (gait + harmonic)[:, None] * axis_gain[None, :] + body_dc[None, :]
    window[:, 0:3] = body
    window[:, 3:6] = 0.8 * amp * np.cos(2 * np.pi * freq * t + phase)[:, None] \
        * np.array([0.7, 1.0, 0.5])[None, :] + gyro_dc[None, :]
    window[:, 6:9] = body * 0.6 + gravity[None, :]
    window += subject_offset[None, :]
    if tone_phases is not None:
        window += _TONE_AMP * np.sin(
            2 * np.pi * _TONE_CYCLES * t[:, None] + tone_phases[None, :])
    window += rng.normal(0.0, noise, size=window.shape)
    if rng.random() < 0.10:
        # spike artifact: a short burst of large noise on a few timesteps
        burst = rng.integers(0, N_TIMESTEPS - 6)
        window[burst:burst + 6] += rng.normal(0.0, 1.6, size=(6, N_CHANNELS))
    return window


def _generate_split(seed: int, name: str, n_samples: int, subject_ids: np.ndarray):
    rng = substream(seed, f"synth-uci-{name}")
    offsets = {int(s): substream(seed, f"synth-subject-{int(s)}").normal(0.0, 0.05, N_CHANNELS)
               for s in subject_ids}
    phases = {(int(s), c): substream(seed, f"synth-phase-artifact-{int(s)}-{c}")
              .uniform(0, 2 * np.pi, N_CHANNELS)
              for s in subject_ids for c in range(6)}
    labels = np.arange(n_samples) % 6
    rng.shuffle(labels)
    subjects = subject_ids[rng.integers(0, len(subject_ids), size=n_samples)]
    tensors = np.stack([
        _class_tensor(
            int(label), rng, offsets[int(subject)],
            None if int(label) == 0 else phases[(int(subject), int(label))],
            bool(int(label) in (1, 2) and rng.random() < _TRANSITION_RATE))
        for label, subject in zip(labels, subjects)
    ])
    return tensors, labels, subjects


def _body_band(x: np.ndarray) -> np.ndarray:
    """Low-pass to the <20 Hz body band by zeroing high rfft bins."""
    spec = np.fft.rfft(x, axis=0)
    spec[_BODY_BAND_BIN:] = 0.0
    return np.fft.irfft(spec, n=x.shape[0], axis=0)


def har_feature_vector(tensor: np.ndarray) -> np.ndarray:
    """Deterministic 561-feature summary of one (128, 9) window.

    Per-channel time statistics, pairwise channel correlations on the
    low-passed body band, and FFT band magnitudes form an interpretable
    base block; a fixed random projection (independent of any dataset
    seed) expands it to 561 bounded features, mirroring the archive's
    normalized feature range.
    """
    x = np.asarray(tensor, dtype=float)
    feats = []
    diffs = np.diff(x, axis=0)
    for c in range(x.shape[1]):
        col = x[:, c]
        centered = col - col.mean()
        denom = float(centered @ centered)
        autocorr = float(centered[1:] @ centered[:-1]) / denom if denom > 0 else 0.0
        feats.extend([
            col.mean(), col.std(), col.min(), col.max(),
            np.median(col), np.percentile(col, 75) - np.percentile(col, 25),
            float(np.mean(col * col)), float(np.sqrt(np.mean(col * col))),
            float(np.mean(np.abs(diffs[:, c]))), autocorr,
            float(np.mean(np.abs(col - np.median(col)))),
            float(np.argmax(np.abs(np.fft.rfft(centered))[1:]) + 1),
        ])
    body = _body_band(x)
    corr = np.corrcoef(body.T)
    corr = np.nan_to_num(corr, nan=0.0)
    upper = corr[np.triu_indices(x.shape[1], k=1)]
    feats.extend(upper.tolist())
    for c in range(x.shape[1]):
        mags = np.abs(np.fft.rfft(x[:, c] - x[:, c].mean()))[1:]
        bands = np.array_split(mags, 8)
        feats.extend([float(b.mean()) for b in bands])
    base = np.asarray(feats)
    proj_rng = substream(0, "synth-feature-projection")
    n_extra = N_FEATURES - base.size
    w = proj_rng.normal(0.0, 1.0 / np.sqrt(base.size), size=(n_extra, base.size))
    b = proj_rng.normal(0.0, 0.1, size=n_extra)
    extended = np.tanh(w @ np.tanh(base * 0.5) + b)
    return np.concatenate([np.tanh(base * 0.5), extended])


def feature_matrix(tensors: np.ndarray) -> np.ndarray:
    return np.stack([har_feature_vector(t) for t in tensors])


def _write_split(split_dir: Path, name: str, tensors, labels, subjects):
    split_dir.mkdir(parents=True, exist_ok=True)
    signals = split_dir / "Inertial Signals"
    signals.mkdir(exist_ok=True)
    features = feature_matrix(tensors)
    np.savetxt(split_dir / f"X_{name}.txt", features, fmt="%.7e")
    np.savetxt(split_dir / f"y_{name}.txt", labels + 1, fmt="%d")
    np.savetxt(split_dir / f"subject_{name}.txt", subjects, fmt="%d")
    from .data_io import RAW_CHANNEL_FILES
    for ci, channel in enumerate(RAW_CHANNEL_FILES):
        np.savetxt(signals / f"{channel}_{name}.txt", tensors[:, :, ci], fmt="%.7e")


def make_uci_like_tree(root, seed: int = 0, n_train: int = 1800, n_test: int = 600) -> Path:
    """Write a synthetic dataset in the standard HAR archive layout.

    Train and test use disjoint subject pools, like the real archive.
    Returns the dataset root (root/"synthetic-har").
    """
    root = Path(root) / "synthetic-har"
    train_subjects = np.arange(1, 22)
    test_subjects = np.arange(22, 31)
    tensors, labels, subjects = _generate_split(seed, "train", n_train, train_subjects)
    _write_split(root / "train", "train", tensors, labels, subjects)
    tensors, labels, subjects = _generate_split(seed, "test", n_test, test_subjects)
    _write_split(root / "test", "test", tensors, labels, subjects)
    return root


def make_custom_streams(root, seed: int = 0, n_subjects: int = 15,
                        segment_length: int = 320, segments_per_subject: int = 6) -> Path:
    """Write per-subject CSV streams plus the participants metadata table.

    Each stream alternates walking/upstairs/downstairs segments at 50 Hz;
    the participant table reproduces the 3/4/5/3 age-bracket split.
    """
    root = Path(root) / "synthetic-streams"
    root.mkdir(parents=True, exist_ok=True)
    rng = substream(seed, "synth-streams")
    age_groups = [g for g, count in zip(_AGE_GROUPS, _AGE_COUNTS) for _ in range(count)]
    with open(root / "participants.csv", "w", encoding="utf-8") as fh:
        fh.write("subject_id,age_group\n")
        for sid in range(1, n_subjects + 1):
            group = age_groups[(sid - 1) % len(age_groups)]
            fh.write(f"{sid},{group}\n")
    for sid in range(1, n_subjects + 1):
        offset = rng.normal(0.0, 0.05, 3)
        lines = ["timestamp,ax,ay,az,label"]
        t0 = 0
        for seg in range(segments_per_subject):
            label = seg % 3
            cycles, amp, gravity, body_dc, _ = _CLASS_PARAMS[label]
            tt = np.arange(segment_length)
            freq = cycles / N_TIMESTEPS * float(rng.uniform(0.95, 1.05))
            phase = float(rng.uniform(0, 2 * np.pi))
            gait = amp * np.sin(2 * np.pi * freq * tt + phase)
            for i in range(segment_length):
                ax = gait[i] + gravity[0] + body_dc[0] + offset[0] + rng.normal(0, 0.1)
                ay = 0.55 * gait[i] + gravity[1] + body_dc[1] + offset[1] + rng.normal(0, 0.1)
                az = 0.8 * gait[i] + gravity[2] + body_dc[2] + offset[2] + rng.normal(0, 0.1)
                lines.append(f"{(t0 + i) / 50.0:.3f},{ax:.6f},{ay:.6f},{az:.6f},{label}")
            t0 += segment_length
        with open(root / f"subject_{sid:02d}.csv", "w", encoding="utf-8") as fh:
            fh.write("\n".join(lines) + "\n")
    return root
