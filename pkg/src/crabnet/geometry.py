"""Planar angle helpers shared by the world model and the PHY layer.

Convention: azimuth 0 deg points along +x, angles grow counterclockwise,
everything is stored in degrees.
"""

from __future__ import annotations

import math

import numpy as np


def bearing(frm, to) -> float:
    """Azimuth of the vector frm->to, in [0, 360)."""
    dx = to[0] - frm[0]
    dy = to[1] - frm[1]
    if dx == 0.0 and dy == 0.0:
        raise ValueError("bearing undefined for coincident points")
    return math.degrees(math.atan2(dy, dx)) % 360.0


def circular_distance(a_deg: float, b_deg: float) -> float:
    """Shortest angular distance between two azimuths, in [0, 180]."""
    d = abs(a_deg - b_deg) % 360.0
    return min(d, 360.0 - d)


def wrap_deg(angle: float) -> float:
    """Wrap an angle to (-180, 180]."""
    a = angle % 360.0
    if a > 180.0:
        a -= 360.0
    return a


def wrap_deg_array(angles: np.ndarray) -> np.ndarray:
    a = np.asarray(angles, dtype=float) % 360.0
    return np.where(a > 180.0, a - 360.0, a)


def distance(a, b) -> float:
    return math.hypot(b[0] - a[0], b[1] - a[1])
