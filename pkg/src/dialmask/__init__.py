"""Masked-prediction intermediate-task datasets from parallel dialogue corpora,
DST evaluation metrics, and a toy cross-lingual alignment probe."""

__version__ = "0.1.0"
