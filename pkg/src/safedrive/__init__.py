"""Desk-scale safe-driving RL laboratory.

A procedural 2D driving CMDP, steps-to-cost safety representations for
policy-input augmentation, three on-policy constrained optimizers, and a
paired-statistics evaluation harness with noise-robustness and cross-domain
transfer protocols.
"""

__version__ = "0.1.0"
