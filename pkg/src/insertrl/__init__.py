"""Planar contact-rich insertion: simulation, HIL-RL, distillation, baselines."""

__version__ = "0.1.0"
