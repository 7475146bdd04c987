"""Building-function mapping over multi-modal raster tiles.

The package covers the whole desk-scale chain: synthetic city generation,
weak-label rasterization from vector data, training of a small two-branch
segmentation network under a masked cross-entropy loss, sliding-window
inference, and the evaluation suite (classification, footprint, building
statistics).
"""

__version__ = "0.1.0"
