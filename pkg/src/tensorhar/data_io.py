"""Dataset loading and model persistence.

Two dataset sources: the standard HAR archive layout (561-feature vectors
or raw (128, 9) inertial-signal tensors) and custom per-subject CSV
streams that go through the signal-prep filters and windowing. Models of
every family round-trip through one versioned JSON document format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines, stm, svm
from .signal import FilterConfig, SampleStream, apply_filters, window_count, window_stream

ACTIVITY_NAMES = (
    "WALKING", "WALKING_UPSTAIRS", "WALKING_DOWNSTAIRS",
    "SITTING", "STANDING", "LAYING",
)
THREE_CLASS_NAMES = ("walking", "upstairs", "downstairs")
CUSTOM_LABEL_MAP = {name: i for i, name in enumerate(THREE_CLASS_NAMES)}

# channel-wise assembly order of the (128, 9) raw tensors
RAW_CHANNEL_FILES = (
    "body_acc_x", "body_acc_y", "body_acc_z",
    "body_gyro_x", "body_gyro_y", "body_gyro_z",
    "total_acc_x", "total_acc_y", "total_acc_z",
)

FORMAT_VERSION = 1


class DataFormatError(Exception):
    """A file failed to parse; carries the path and 1-based line number."""

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = str(path) if path is not None else None
        self.line = line
        where = ""
        if self.path is not None:
            where = f"{self.path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


@dataclass(frozen=True)
class DatasetManifest:
    source: str  # uci_har | custom_csv
    root: str
    representation: str  # feature_vectors | raw_tensors
    label_map: dict  # class name -> contiguous integer id
    subject_ids: tuple

    def __post_init__(self):
        ids = sorted(self.label_map.values())
        if ids != list(range(len(ids))):
            raise ValueError("label map ids must be contiguous from 0")


@dataclass
class Dataset:
    samples: np.ndarray  # (n, 561) vectors or (n, T, C) tensors
    labels: np.ndarray  # contiguous integer ids
    subjects: np.ndarray
    manifest: DatasetManifest
    diagnostics: dict = field(default_factory=dict, repr=False)

    def __len__(self) -> int:
        return int(self.samples.shape[0])

    @property
    def label_names(self) -> list[str]:
        inverse = {v: k for k, v in self.manifest.label_map.items()}
        return [inverse[i] for i in range(len(inverse))]


def _parse_matrix(path: Path, expected_cols: int | None = None) -> np.ndarray:
    """Whitespace-separated float matrix; errors carry file and line."""
    if not path.is_file():
        raise DataFormatError("file not found", path=path)
    try:
        data = np.loadtxt(path, dtype=float, ndmin=2)
    except ValueError:
        # slow re-scan to pinpoint the offending line
        with open(path, "r", encoding="utf-8") as fh:
            width = None
            for lineno, text in enumerate(fh, start=1):
                tokens = text.split()
                if not tokens:
                    continue
                for tok in tokens:
                    try:
                        float(tok)
                    except ValueError:
                        raise DataFormatError(f"non-numeric token {tok!r}",
                                              path=path, line=lineno) from None
                if width is None:
                    width = len(tokens)
                elif len(tokens) != width:
                    raise DataFormatError(
                        f"ragged line: {len(tokens)} columns, expected {width}",
                        path=path, line=lineno)
        raise DataFormatError("unparseable numeric data", path=path)
    if expected_cols is not None and data.shape[1] != expected_cols:
        raise DataFormatError(
            f"expected {expected_cols} columns, found {data.shape[1]}",
            path=path, line=1)
    return data


def _parse_int_column(path: Path, valid: range | None = None) -> np.ndarray:
    data = _parse_matrix(path, expected_cols=1)[:, 0]
    ints = data.astype(int)
    if np.any(ints != data):
        bad = int(np.flatnonzero(ints != data)[0])
        raise DataFormatError("non-integer value", path=path, line=bad + 1)
    if valid is not None:
        outside = (ints < valid.start) | (ints >= valid.stop)
        if outside.any():
            bad = int(np.flatnonzero(outside)[0])
            raise DataFormatError(
                f"value {ints[bad]} outside {valid.start}..{valid.stop - 1}",
                path=path, line=bad + 1)
    return ints


def load_uci_har(root, representation: str = "feature_vectors",
                 split: str = "train") -> Dataset:
    """Load one split of the standard HAR archive layout.

    feature_vectors reads the 561-feature matrices; raw_tensors assembles
    (128, 9) tensors from the Inertial Signals channel files in the fixed
    documented order. Activity labels 1-6 are remapped to ids 0-5.
    """
    if representation not in ("feature_vectors", "raw_tensors"):
        raise ValueError(f"unknown representation {representation!r}")
    if split not in ("train", "test"):
        raise ValueError(f"unknown split {split!r}")
    root = Path(root)
    split_dir = root / split
    labels_raw = _parse_int_column(split_dir / f"y_{split}.txt", valid=range(1, 7))
    subjects = _parse_int_column(split_dir / f"subject_{split}.txt")
    n = labels_raw.shape[0]
    if subjects.shape[0] != n:
        raise DataFormatError(
            f"{subjects.shape[0]} subject rows but {n} labels",
            path=split_dir / f"subject_{split}.txt")
    if representation == "feature_vectors":
        samples = _parse_matrix(split_dir / f"X_{split}.txt", expected_cols=561)
        if samples.shape[0] != n:
            raise DataFormatError(
                f"{samples.shape[0]} feature rows but {n} labels",
                path=split_dir / f"X_{split}.txt")
    else:
        channels = []
        for name in RAW_CHANNEL_FILES:
            mat = _parse_matrix(
                split_dir / "Inertial Signals" / f"{name}_{split}.txt",
                expected_cols=128)
            if mat.shape[0] != n:
                raise DataFormatError(
                    f"{mat.shape[0]} rows but {n} labels",
                    path=split_dir / "Inertial Signals" / f"{name}_{split}.txt")
            channels.append(mat)
        samples = np.stack(channels, axis=2)  # (n, 128, 9)
    manifest = DatasetManifest(
        source="uci_har", root=str(root), representation=representation,
        label_map={name: i for i, name in enumerate(ACTIVITY_NAMES)},
        subject_ids=tuple(int(s) for s in np.unique(subjects)),
    )
    return Dataset(samples=samples, labels=labels_raw - 1, subjects=subjects,
                   manifest=manifest, diagnostics={"split": split})


def load_uci_har_pair(root, representation: str = "feature_vectors") -> tuple[Dataset, Dataset]:
    return (load_uci_har(root, representation, "train"),
            load_uci_har(root, representation, "test"))


# --- custom CSV streams ---


def read_stream_csv(path, subject_id: int = 0) -> SampleStream:
    """Parse one `timestamp,ax,ay,az[,gx,gy,gz],label` stream file."""
    path = Path(path)
    if not path.is_file():
        raise DataFormatError("file not found", path=path)
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        columns = [c.strip() for c in header.split(",")]
        short = ["timestamp", "ax", "ay", "az", "label"]
        full = ["timestamp", "ax", "ay", "az", "gx", "gy", "gz", "label"]
        if columns == full:
            names = full
        elif columns == short:
            names = short
        else:
            raise DataFormatError(
                f"bad header {header!r}; expected {','.join(short)} or {','.join(full)}",
                path=path, line=1)
        rows = {name: [] for name in names}
        for lineno, text in enumerate(fh, start=2):
            text = text.strip()
            if not text:
                continue
            tokens = text.split(",")
            if len(tokens) != len(names):
                raise DataFormatError(
                    f"ragged line: {len(tokens)} fields, expected {len(names)}",
                    path=path, line=lineno)
            for name, tok in zip(names, tokens):
                tok = tok.strip()
                if name == "label":
                    key = tok.lower()
                    if key in CUSTOM_LABEL_MAP:
                        rows[name].append(CUSTOM_LABEL_MAP[key])
                        continue
                    try:
                        rows[name].append(int(tok))
                    except ValueError:
                        raise DataFormatError(f"unknown label token {tok!r}",
                                              path=path, line=lineno) from None
                else:
                    try:
                        rows[name].append(float(tok))
                    except ValueError:
                        raise DataFormatError(f"non-numeric token {tok!r}",
                                              path=path, line=lineno) from None
    channels = {c: np.asarray(rows[c]) for c in names if c not in ("timestamp", "label")}
    return SampleStream(timestamps=np.asarray(rows["timestamp"]),
                        channels=channels,
                        labels=np.asarray(rows["label"], dtype=int),
                        subject_id=subject_id)


def load_custom_csv(paths, filter_cfg: FilterConfig = FilterConfig(),
                    window_length: int = 128, stride: int = 64,
                    labeling: str = "strict", root: str = "") -> Dataset:
    """Filter and window one or more stream files into a tensor dataset.

    paths maps subject id -> CSV path (a single path means subject 0).
    Windows dropped by strict labeling are counted, never silently lost.
    """
    if isinstance(paths, (str, Path)):
        paths = {0: paths}
    tensors, labels, subjects = [], [], []
    kept = 0
    candidates = 0
    for subject_id in sorted(paths):
        stream = read_stream_csv(paths[subject_id], subject_id=subject_id)
        filtered = {name: apply_filters(series, filter_cfg)
                    for name, series in stream.channels.items()}
        clean = SampleStream(timestamps=stream.timestamps, channels=filtered,
                             labels=stream.labels, subject_id=subject_id)
        candidates += window_count(len(clean), window_length, stride)
        for window in window_stream(clean, window_length, stride, labeling=labeling):
            tensors.append(window.values)
            labels.append(window.label)
            subjects.append(window.subject_id)
            kept += 1
    label_map = {name: i for i, name in enumerate(THREE_CLASS_NAMES)}
    observed = set(int(v) for v in labels)
    if observed - set(label_map.values()):
        label_map = {f"class_{i}": i for i in range(max(observed) + 1)}
    n_channels = tensors[0].shape[1] if tensors else 3
    manifest = DatasetManifest(
        source="custom_csv", root=str(root), representation="raw_tensors",
        label_map=label_map,
        subject_ids=tuple(sorted(set(int(s) for s in subjects))),
    )
    samples = (np.stack(tensors) if tensors
               else np.zeros((0, window_length, n_channels)))
    return Dataset(samples=samples, labels=np.asarray(labels, dtype=int),
                   subjects=np.asarray(subjects, dtype=int), manifest=manifest,
                   diagnostics={"windows_kept": kept,
                                "windows_dropped": candidates - kept})


def load_participants(path) -> list[dict]:
    """Read the `subject_id,age_group` metadata table."""
    path = Path(path)
    if not path.is_file():
        raise DataFormatError("file not found", path=path)
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        header = [c.strip() for c in fh.readline().strip().split(",")]
        if header != ["subject_id", "age_group"]:
            raise DataFormatError(
                f"bad header; expected subject_id,age_group", path=path, line=1)
        for lineno, text in enumerate(fh, start=2):
            text = text.strip()
            if not text:
                continue
            tokens = [t.strip() for t in text.split(",")]
            if len(tokens) != 2:
                raise DataFormatError("expected 2 fields", path=path, line=lineno)
            try:
                sid = int(tokens[0])
            except ValueError:
                raise DataFormatError(f"non-integer subject id {tokens[0]!r}",
                                      path=path, line=lineno) from None
            out.append({"subject_id": sid, "age_group": tokens[1]})
    return out


def load_custom_dir(root, filter_cfg: FilterConfig = FilterConfig(),
                    window_length: int = 128, stride: int = 64,
                    labeling: str = "strict") -> Dataset:
    """Load every subject_<id>.csv under root (plus participants.csv if present)."""
    root = Path(root)
    paths = {}
    for path in sorted(root.glob("subject_*.csv")):
        try:
            sid = int(path.stem.split("_", 1)[1])
        except ValueError:
            raise DataFormatError("bad subject file name", path=path) from None
        paths[sid] = path
    if not paths:
        raise DataFormatError("no subject_*.csv stream files found", path=root)
    dataset = load_custom_csv(paths, filter_cfg=filter_cfg,
                              window_length=window_length, stride=stride,
                              labeling=labeling, root=str(root))
    participants_file = root / "participants.csv"
    if participants_file.is_file():
        dataset.diagnostics["participants"] = load_participants(participants_file)
    return dataset


# --- model persistence ---


_FAMILIES = {
    "svm_binary": (svm.binary_svm_to_doc, svm.binary_svm_from_doc),
    "svm_ovo": (svm.svm_ovo_to_doc, svm.svm_ovo_from_doc),
    "stm_binary": (stm.stm_binary_to_doc, stm.stm_binary_from_doc),
    "stm_ovo": (stm.stm_ovo_to_doc, stm.stm_ovo_from_doc),
}


def _logreg_to_doc(model: baselines.LogRegModel) -> dict:
    return {"weights": model.weights.tolist(), "bias": model.bias.tolist(),
            "classes": [int(c) for c in model.classes]}


def _logreg_from_doc(doc: dict) -> baselines.LogRegModel:
    return baselines.LogRegModel(
        weights=np.asarray(doc["weights"], dtype=float),
        bias=np.asarray(doc["bias"], dtype=float),
        classes=np.asarray(doc["classes"], dtype=int))


def _knn_to_doc(model: baselines.KnnModel) -> dict:
    return {"samples": model.samples.tolist(), "labels": [int(v) for v in model.labels],
            "k": model.config.k, "metric": model.config.metric,
            "sigma2": model.config.sigma2}


def _knn_from_doc(doc: dict) -> baselines.KnnModel:
    cfg = baselines.KnnConfig(k=int(doc["k"]), metric=doc["metric"],
                              sigma2=float(doc["sigma2"]))
    return baselines.train_knn(np.asarray(doc["samples"], dtype=float),
                               np.asarray(doc["labels"], dtype=int), cfg)


def _tree_to_doc(node: dict) -> dict:
    if "counts" in node:
        return {"counts": [int(v) for v in node["counts"]]}
    return {"feature": node["feature"], "threshold": node["threshold"],
            "left": _tree_to_doc(node["left"]), "right": _tree_to_doc(node["right"])}


def _tree_from_doc(doc: dict) -> dict:
    if "counts" in doc:
        return {"counts": np.asarray(doc["counts"], dtype=int)}
    return {"feature": int(doc["feature"]), "threshold": float(doc["threshold"]),
            "left": _tree_from_doc(doc["left"]), "right": _tree_from_doc(doc["right"])}


def _forest_to_doc(model: baselines.ForestModel) -> dict:
    return {"trees": [_tree_to_doc(t) for t in model.trees],
            "classes": [int(c) for c in model.classes],
            "n_features": model.n_features,
            "config": {"n_estimators": model.config.n_estimators,
                       "max_depth": model.config.max_depth,
                       "min_samples_leaf": model.config.min_samples_leaf,
                       "min_samples_split": model.config.min_samples_split,
                       "bootstrap": model.config.bootstrap,
                       "seed": model.config.seed}}


def _forest_from_doc(doc: dict) -> baselines.ForestModel:
    cfg = baselines.ForestConfig(**doc["config"])
    return baselines.ForestModel(
        trees=[_tree_from_doc(t) for t in doc["trees"]],
        bootstrap_indices=[],
        classes=np.asarray(doc["classes"], dtype=int),
        n_features=int(doc["n_features"]),
        config=cfg)


_FAMILIES.update({
    "logreg": (_logreg_to_doc, _logreg_from_doc),
    "knn": (_knn_to_doc, _knn_from_doc),
    "forest": (_forest_to_doc, _forest_from_doc),
})


def _family_of(model) -> str:
    if isinstance(model, svm.OvoEnsemble):
        return "stm_ovo" if isinstance(model.models[0], stm.StmBinaryModel) else "svm_ovo"
    mapping = {
        svm.BinarySvm: "svm_binary",
        stm.StmBinaryModel: "stm_binary",
        baselines.LogRegModel: "logreg",
        baselines.KnnModel: "knn",
        baselines.ForestModel: "forest",
    }
    for cls, family in mapping.items():
        if isinstance(model, cls):
            return family
    raise TypeError(f"no serialization family for {type(model).__name__}")


def save_model(model, path):
    """Write a versioned, family-tagged JSON model document."""
    family = _family_of(model)
    to_doc, _ = _FAMILIES[family]
    document = {"format_version": FORMAT_VERSION, "family": family,
                "payload": to_doc(model)}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(document, fh)
        fh.write("\n")


def load_model(path):
    """Inverse of save_model; loaded models predict bit-identically."""
    path = Path(path)
    if not path.is_file():
        raise DataFormatError("file not found", path=path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            document = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"truncated or invalid JSON: {exc}", path=path) from None
    if not isinstance(document, dict) or "format_version" not in document:
        raise DataFormatError("missing format_version field", path=path)
    version = document["format_version"]
    if version != FORMAT_VERSION:
        raise DataFormatError(
            f"format version {version} unsupported; supported versions: {FORMAT_VERSION}",
            path=path)
    family = document.get("family")
    if family not in _FAMILIES:
        raise DataFormatError(
            f"unknown model family {family!r}; known: {sorted(_FAMILIES)}", path=path)
    _, from_doc = _FAMILIES[family]
    return from_doc(document["payload"])
