"""Sensor-based human activity recognition toolkit.

From-scratch classifiers (dual-solved SVM, support tensor machine,
logistic regression, k-NN, random forest), IMU signal preprocessing, a
Gaussian-weighted tensor distance, an evaluation and search harness, and
a simulated federated trainer, all deterministic under named seeds.
"""

from .baselines import (ForestConfig, ForestModel, KnnConfig, KnnModel,
                        LogRegConfig, LogRegModel, predict_forest, predict_knn,
                        train_forest, train_knn, train_logreg)
from .data_io import (ACTIVITY_NAMES, DataFormatError, Dataset, DatasetManifest,
                      load_custom_csv, load_custom_dir, load_model, load_uci_har,
                      load_uci_har_pair, save_model)
from .evaluation import (ConfusionMatrix, CvResult, EvalReport, SearchResult,
                         SearchSpace, compute_report, cross_validate,
                         randomized_search, stratified_kfold)
from .federated import (ClientUpdate, FedConfig, FedRoundLog, fed_avg,
                        local_train, partition_dataset, run_federation)
from .signal import (FilterConfig, KalmanConfig, SampleStream, Standardizer,
                     Window, apply_filters, kalman_1d, moving_average,
                     standardize, standardize_channels, window_stream)
from .stm import (StmBinaryModel, StmConfig, contract_except, predict_stm,
                  train_stm_binary, train_stm_ovo, train_wstm_binary)
from .svm import (BinarySvm, OvoEnsemble, SvmConfig, decision_value,
                  kkt_violations, predict_ovo, primal_objective,
                  train_binary_svm, train_ovo)
from .tensor import (MetricCoefficients, frobenius_norm, location_distance,
                     metric_coefficients, mode_k_product, tensor_distance)
from .util import parallel_map, substream

__version__ = "0.1.0"
