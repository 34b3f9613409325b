"""BiLSTM + multi-head attention classifier over VMD-expanded tabular features,
with PSO hyperparameter search and the surrounding preprocessing/evaluation
pipeline, implemented on numpy."""

__version__ = "0.1.0"
