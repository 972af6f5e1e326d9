"""Python bindings for the v2r compositing pipeline.

Images are float32 numpy arrays in [0, 1], shaped (H, W) or (H, W, 3).
Homographies are 3x3 float64 arrays.
"""

from ._v2r import *  # noqa: F401,F403
from ._v2r import Error, InvalidArgument, DegenerateError, ParseError, IoError  # noqa: F401
