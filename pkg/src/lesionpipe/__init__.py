"""Skin-lesion segmentation pipeline built around a from-scratch numpy U-Net."""

__version__ = "0.1.0"
