"""Fit callables shared across tests.

The cross-validation harness and the process-pool map pickle fit functions
by reference, so everything used with jobs > 1 must live at module scope.
"""

import numpy as np

from tensorhar.baselines import (ForestConfig, LogRegConfig, train_forest,
                                 train_logreg)
from tensorhar.signal import standardize_channels
from tensorhar.stm import StmConfig, train_stm_ovo
from tensorhar.svm import SvmConfig, train_ovo


def fit_feature_svm(x, y):
    return train_ovo(x, y, SvmConfig(C=100.0))


def fit_feature_logreg(x, y):
    return train_logreg(x, y, LogRegConfig(C=1.0))


def fit_small_forest(x, y):
    return train_forest(x, y, ForestConfig(n_estimators=15, seed=0))


class StandardizedStm:
    """Channel standardization fitted on the training fold, then the
    one-vs-one tensor ensemble on the standardized stack."""

    def __init__(self, record, ensemble):
        self.record = record
        self.ensemble = ensemble

    def predict(self, x):
        return self.ensemble.predict(self.record.transform(np.asarray(x, dtype=float)))


def fit_tensor_stm(x, y, jobs=1):
    z, record = standardize_channels(x)
    return StandardizedStm(record, train_stm_ovo(z, y, StmConfig(), jobs=jobs))


class MajorityModel:
    """Predicts the single most frequent training label; cheap stand-in for
    fit-counting and fold-accounting tests."""

    def __init__(self, label):
        self.label = label

    def predict(self, x):
        return np.full(np.atleast_2d(x).shape[0], self.label)


def fit_majority(x, y):
    values, counts = np.unique(y, return_counts=True)
    return MajorityModel(values[counts.argmax()])


def majority_factory(params):
    return fit_majority
