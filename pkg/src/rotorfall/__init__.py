"""Recovery controller for a quadrotor flying on three rotors: rigid-body
simulator, soft actor-critic trainer, maneuver evaluation and plotting."""

__version__ = "0.1.0"
