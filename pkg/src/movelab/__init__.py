"""movelab: batch toolbox for multimodal human-movement analysis."""

__version__ = "0.1.0"
