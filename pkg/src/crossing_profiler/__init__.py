"""Surface profile estimation at rail crossings from vehicle inertial recordings.

The package covers the full loop: synthesizing crossing scenes, aligning and
augmenting sensor sequences, training hybrid recurrent-attention models, and
exporting estimated elevation profiles.
"""
from __future__ import annotations

__version__ = "0.1.0"
