"""Circular-harmonic beamforming with AINN virtual microphones."""

__version__ = "0.1.0"
