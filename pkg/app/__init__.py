import math

if not hasattr(math, "cbrt"):  # Python < 3.11
    import numpy as _np

    math.cbrt = lambda x: float(_np.cbrt(x))

__version__ = "0.1.0"
