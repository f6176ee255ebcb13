"""Hierarchical personalized federated training for student sequence models.

Trains knowledge-tracing (LSTM) and outcome-prediction (attention-GRU) models
across a course/demographic-subgroup hierarchy with meta-gradient
personalization and attention-weighted aggregation, plus synthetic data
generation and per-subgroup bias metrics.
"""

__version__ = "0.1.0"
