"""Multi-label 12-lead ECG abnormality classification toolkit.

Ingests multi-source ECG records, preprocesses them (resampling, fixed
windows, wavelet denoising), classifies with an SE-ResNet trained under a
sign-weighted cross-entropy loss plus an R-peak rule model, ensembles two
input windows, and scores predictions with a reward-matrix metric.
"""

__version__ = "0.1.0"
