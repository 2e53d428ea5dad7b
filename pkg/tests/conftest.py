import os

import pytest

from tensorhar.data_io import load_uci_har_pair
from tensorhar.synth import make_custom_streams, make_uci_like_tree

REAL_DATA_HINT = (
    "set TENSORHAR_DATA to an extracted 'UCI HAR Dataset' directory to run the "
    "real-archive benchmarks; download 'UCI HAR Dataset.zip' from "
    "https://archive.ics.uci.edu/dataset/240 and unzip it"
)


@pytest.fixture(scope="session")
def uci_tree(tmp_path_factory):
    """Benchmark-scale synthetic archive with disjoint train/test subjects."""
    root = tmp_path_factory.mktemp("archive")
    return make_uci_like_tree(root, seed=0, n_train=1800, n_test=600)


@pytest.fixture(scope="session")
def small_tree(tmp_path_factory):
    """Small archive for IO and CLI tests where accuracy does not matter."""
    root = tmp_path_factory.mktemp("archive-small")
    return make_uci_like_tree(root, seed=1, n_train=144, n_test=72)


@pytest.fixture(scope="session")
def feature_splits(uci_tree):
    return load_uci_har_pair(uci_tree, "feature_vectors")


@pytest.fixture(scope="session")
def tensor_splits(uci_tree):
    return load_uci_har_pair(uci_tree, "raw_tensors")


@pytest.fixture(scope="session")
def small_feature_splits(small_tree):
    return load_uci_har_pair(small_tree, "feature_vectors")


@pytest.fixture(scope="session")
def streams_tree(tmp_path_factory):
    root = tmp_path_factory.mktemp("streams")
    return make_custom_streams(root, seed=0)


@pytest.fixture(scope="session")
def real_data_root():
    root = os.environ.get("TENSORHAR_DATA")
    if not root or not os.path.isdir(root):
        pytest.skip(REAL_DATA_HINT)
    return root
