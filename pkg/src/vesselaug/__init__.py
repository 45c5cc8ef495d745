"""Synthetic vessel-mask generation, photometric style augmentation and
segmentation evaluation for retinal vessel data."""

__version__ = "0.1.0"
