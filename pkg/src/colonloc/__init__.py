"""Colonoscope localization from frame-to-frame camera motion.

Relative poses between consecutive frames are estimated by direct
minimization of a specular-masked photometric loss, chained into a camera
trajectory, smoothed into a major travelling path and turned into a
location index in ``[0, 1]`` that a colon template maps to anatomical
segments.
"""

from .io import __version__

__all__ = ["__version__"]
