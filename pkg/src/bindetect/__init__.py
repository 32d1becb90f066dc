"""Static malware detection from PE bytes with a dropout/PReLU feedforward net."""
from .calibration import CalibrationModel, kde_pdf, threat_score
from .evaluation import (Label, expected_daily_false_positives, kfold_split, label_from_votes,
                         roc_curve, time_split, tpr_at_fpr)
from .features import assemble_features, window_entropy
from .kernels import BACKEND
from .nn import MlpModel, init_glorot, predict, train
from .pe import PeSummary, extract_imports, parse_pe

__version__ = "0.1.0"
