"""
otmask: panoptic pseudo-masks from single-point annotations.

Pixels are handed to annotated points by a global optimal transport
problem over geodesic costs on the 8-connected pixel grid.
"""

from otmask.config import VERSION

__version__ = VERSION
