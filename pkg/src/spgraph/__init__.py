"""Interactive building-footprint extraction toolkit: learned superpixels,
graph-attention classification, graph-cut stroke editing, and regularized
vector output."""

__version__ = "0.1.0"
