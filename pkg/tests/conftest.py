import numpy as np

from suppfit import DesignSet


def planar_design(angles) -> DesignSet:
    """Design from explicit planar angles; bypasses the separation check."""
    angles = np.asarray(angles, dtype=float)
    pts = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return DesignSet(dim=2, points=pts, mode="iid")
