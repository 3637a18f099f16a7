"""Reconstruction-free classification of compressively sensed images with MB-DCT binary descriptors."""

__version__ = "0.1.0"
