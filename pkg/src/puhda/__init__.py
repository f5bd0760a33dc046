"""Positive-unlabeled heterogeneous domain adaptation with linear models.

The package trains a classifier for a target domain that has only unlabeled
data, using a source domain that has only positive examples and shares part
of its feature space with the target. It provides adversarial PU training,
joint feature alignment, soft-label refinement, naive-combination and
distillation baselines, feature analytics, and a deterministic experiment
pipeline with a command line front end.
"""

__version__ = "0.1.0"
