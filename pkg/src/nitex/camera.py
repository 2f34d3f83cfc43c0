"""Candidate viewpoints: orthographic framing, pose math, perceptual weights.

Conventions: right-handed world frame, up = +Y, azimuth 0 = +Z ("front"),
azimuth measured toward +X. A view's camera sits at
``distance * (cos(el)*sin(az), sin(el), cos(el)*cos(az))`` looking at the
origin.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DEFAULT_HALF_EXTENT = 0.65
DEFAULT_RESOLUTION = 512
DEFAULT_DISTANCE = 2.0

#: The allowed perceptual view weights, strongest (front/back) first.
VIEW_WEIGHT_LADDER = (1.0, 0.5, 0.25, 0.125, 0.1)

FRONT_VIEW_ID = 0
BACK_VIEW_ID = 1


@dataclass(frozen=True)
class View:
    """An orthographic camera on the sphere around the origin."""

    id: int
    azimuth: float  # degrees in [0, 360)
    elevation: float  # degrees in [-90, 90]
    half_extent: float = DEFAULT_HALF_EXTENT  # world units
    resolution: int = DEFAULT_RESOLUTION  # square image side in pixels
    distance: float = DEFAULT_DISTANCE  # camera offset along the view ray

    def __post_init__(self):
        if not (math.isfinite(self.azimuth) and math.isfinite(self.elevation)):
            raise ValueError("non-finite view angles")
        if not 0.0 <= self.azimuth < 360.0:
            raise ValueError(f"azimuth {self.azimuth} outside [0, 360)")
        if not -90.0 <= self.elevation <= 90.0:
            raise ValueError(f"elevation {self.elevation} outside [-90, 90]")
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.half_extent <= 0:
            raise ValueError("half_extent must be positive")


def view_direction(view: View) -> np.ndarray:
    """Unit vector from the origin toward the camera."""
    az = math.radians(view.azimuth)
    el = math.radians(view.elevation)
    return np.array(
        [math.cos(el) * math.sin(az), math.sin(el), math.cos(el) * math.cos(az)]
    )


def camera_position(view: View) -> np.ndarray:
    return view.distance * view_direction(view)


def camera_basis(view: View) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (right, up, forward) unit vectors of the camera frame.

    Forward points from the camera toward the origin. At the poles the
    world-up axis degenerates, so a deterministic fallback keyed on the
    elevation sign is used instead.
    """
    forward = -view_direction(view)
    world_up = np.array([0.0, 1.0, 0.0])
    if abs(np.dot(forward, world_up)) > 1.0 - 1e-9:
        world_up = np.array([0.0, 0.0, -1.0 if view.elevation > 0 else 1.0])
    right = np.cross(forward, world_up)
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)
    return right, up, forward


def make_view(
    azimuth: float,
    elevation: float,
    *,
    view_id: int = 0,
    half_extent: float = DEFAULT_HALF_EXTENT,
    resolution: int = DEFAULT_RESOLUTION,
    distance: float = DEFAULT_DISTANCE,
) -> View:
    """Build an orthographic view looking at the origin from (azimuth, elevation)."""
    return View(
        id=view_id,
        azimuth=float(azimuth),
        elevation=float(elevation),
        half_extent=float(half_extent),
        resolution=int(resolution),
        distance=float(distance),
    )


def canonical_candidates(
    *,
    half_extent: float = DEFAULT_HALF_EXTENT,
    resolution: int = DEFAULT_RESOLUTION,
    distance: float = DEFAULT_DISTANCE,
) -> list[View]:
    """The 24-view candidate pool: azimuths 0..315 step 45 x elevations {-30,0,30}.

    Front (0,0) gets id 0 and back (180,0) id 1; the remaining 22 views are
    ordered by (elevation, azimuth).
    """
    angles = [(0.0, 0.0), (180.0, 0.0)]
    rest = [
        (float(az), float(el))
        for el in (-30.0, 0.0, 30.0)
        for az in range(0, 360, 45)
        if (az, el) not in ((0, 0.0), (180, 0.0))
    ]
    angles.extend(sorted(rest, key=lambda p: (p[1], p[0])))
    return [
        make_view(
            az,
            el,
            view_id=i,
            half_extent=half_extent,
            resolution=resolution,
            distance=distance,
        )
        for i, (az, el) in enumerate(angles)
    ]


def angular_distance_to_front_or_back(view: View) -> float:
    """Great-circle distance (degrees) from the view to the nearer of front/back."""
    d = view_direction(view)
    cos_front = float(np.clip(d[2], -1.0, 1.0))  # front axis is +Z
    theta_front = math.degrees(math.acos(cos_front))
    return min(theta_front, 180.0 - theta_front)


def weight_for_angular_distance(delta_degrees: float) -> float:
    """Map angular distance from the front/back axis to a perceptual weight.

    Equal 45-degree bands step the weight down the attenuation ladder
    1.0, 0.5, 0.25, 0.125, 0.1.
    """
    if delta_degrees <= 1e-9:
        return 1.0
    if delta_degrees <= 45.0:
        return 0.5
    if delta_degrees <= 90.0:
        return 0.25
    if delta_degrees <= 135.0:
        return 0.125
    return 0.1


def view_weight(view: View) -> float:
    """Blending weight of a view, 1.0 for front/back and attenuated with angle."""
    return weight_for_angular_distance(angular_distance_to_front_or_back(view))


def views_to_json(views: list[View], path: str | Path) -> None:
    rows = [
        {
            "id": v.id,
            "azimuth": v.azimuth,
            "elevation": v.elevation,
            "half_extent": v.half_extent,
            "resolution": v.resolution,
            "distance": v.distance,
        }
        for v in views
    ]
    Path(path).write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")


def views_from_json(path: str | Path) -> list[View]:
    rows = json.loads(Path(path).read_text())
    views = []
    for row in rows:
        views.append(
            make_view(
                row["azimuth"],
                row["elevation"],
                view_id=int(row["id"]),
                half_extent=row.get("half_extent", DEFAULT_HALF_EXTENT),
                resolution=int(row.get("resolution", DEFAULT_RESOLUTION)),
                distance=row.get("distance", DEFAULT_DISTANCE),
            )
        )
    ids = [v.id for v in views]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate view ids in view set")
    return views
