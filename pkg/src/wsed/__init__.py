"""Weakly supervised sound event detection toolkit.

Trains a convolutional time-frequency segmentation network from clip-level
labels only.  The learned masks drive audio tagging, frame-wise and
event-wise detection, and mask-based source separation.  Ships with a
synthetic mixture generator and a full metric suite so the whole pipeline
can be exercised end-to-end on a laptop.
"""

__version__ = "0.1.0"
