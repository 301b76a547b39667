"""Raster floor-plan interpretation: room segmentation, scale calibration,
object detection, text recognition and reporting."""

__version__ = "0.1.0"
