"""Building geometry, door parameterization, and thermostat bump weights.

A floor plan is a rectangle ``[0, width] x [0, height]`` holding axis-aligned
wall, door, vent and room rectangles, thermostats, and inlet gaps on the
exterior boundary. Walls are static high-friction / low-diffusivity material;
doors interpolate affinely between open air (theta = 1) and wall (theta = 0).

The plan file is JSON validated by the pydantic models below. See README.md
for the schema and ``configs/plans/apartment.json`` for the canonical example.
"""
from __future__ import annotations
import json
from pathlib import Path
from typing import TYPE_CHECKING, Any, Optional, Sequence

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .constants import (
    ALPHA_OPEN,
    ALPHA_WALL,
    AMBIENT_TEMPERATURE_C,
    BUMP_TOL,
    GEOMETRY_TOL,
    INLET_PRESSURE_KPA,
    KAPPA_OPEN,
    KAPPA_WALL,
    REYNOLDS,
)
from .exceptions import (
    BumpNormalizationError,
    DimensionMismatchError,
    PlanParseError,
    PlanValidationError,
)

if TYPE_CHECKING:
    from .mesh import Mesh

__all__ = [
    "Rect",
    "Domain",
    "DoorRegion",
    "Thermostat",
    "Vent",
    "InletSegment",
    "Room",
    "FloorPlan",
    "MaterialParams",
    "load_floor_plan",
    "door_indicators",
    "wall_indicator",
    "material_fields",
    "bump_values",
    "bump_weight",
    "normalize_bumps",
]

FloatArray = NDArray[np.float64]


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class Rect(_Frozen):
    """Axis-aligned rectangle ``[x0, x1] x [y0, y1]``."""

    x0: float
    y0: float
    x1: float
    y1: float

    @model_validator(mode="after")
    def _positive_area(self) -> "Rect":
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise PlanValidationError(
                "positive-area", f"rectangle {self.bounds} has no interior"
            )
        return self

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        return (self.x0, self.y0, self.x1, self.y1)

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))

    def contains(self, points: NDArray[np.float64]) -> NDArray[np.bool_]:
        """Strict interior test for an array of points with trailing axis 2.

        Quadrature points never sit on element edges, and element edges are
        aligned with every rectangle, so the open test is exact for assembly.
        """
        x = points[..., 0]
        y = points[..., 1]
        return (x > self.x0) & (x < self.x1) & (y > self.y0) & (y < self.y1)

    def overlaps(self, other: "Rect") -> bool:
        """True if the two rectangles share positive area."""
        return (
            min(self.x1, other.x1) - max(self.x0, other.x0) > GEOMETRY_TOL
            and min(self.y1, other.y1) - max(self.y0, other.y0) > GEOMETRY_TOL
        )

    def inside(self, width: float, height: float) -> bool:
        return (
            self.x0 >= -GEOMETRY_TOL
            and self.y0 >= -GEOMETRY_TOL
            and self.x1 <= width + GEOMETRY_TOL
            and self.y1 <= height + GEOMETRY_TOL
        )

    def mirrored_y(self, height: float) -> "Rect":
        return Rect(x0=self.x0, y0=height - self.y1, x1=self.x1, y1=height - self.y0)


class Domain(_Frozen):
    width: float = Field(gt=0)
    height: float = Field(gt=0)


class DoorRegion(_Frozen):
    """Area occupied by door ``id`` (1-based)."""

    id: int = Field(ge=1)
    rect: Rect
    name: Optional[str] = None


class Thermostat(_Frozen):
    """Thermostat modeled as a normalized bump average around ``position``.

    ``sigma`` is the normalization factor for the mesh whose fingerprint is
    stored in ``sigma_mesh``; it is ``None`` until normalize_bumps runs.
    """

    id: int = Field(ge=1)
    position: tuple[float, float]
    radius: float = Field(gt=0)
    sigma: Optional[float] = None
    sigma_mesh: Optional[str] = None


class Vent(_Frozen):
    """HVAC fan: uniform body force and heat release over ``rect``."""

    id: int = Field(ge=1)
    rect: Rect
    direction: tuple[float, float]
    force_magnitude: float = Field(default=0.0, ge=0)
    heat_rate: float = 0.0
    target_speed: Optional[float] = Field(default=None, ge=0)

    @field_validator("direction")
    @classmethod
    def _unit_direction(cls, value: tuple[float, float]) -> tuple[float, float]:
        norm = float(np.hypot(*value))
        if abs(norm - 1.0) > 1e-6:
            raise PlanValidationError("unit-direction", f"vent direction {value} has norm {norm:.6g}")
        return value


class InletSegment(_Frozen):
    """Axis-aligned gap in the exterior wall (part of the inlet boundary)."""

    start: tuple[float, float]
    end: tuple[float, float]

    @model_validator(mode="after")
    def _axis_aligned(self) -> "InletSegment":
        (xa, ya), (xb, yb) = self.start, self.end
        horizontal = abs(ya - yb) <= GEOMETRY_TOL
        vertical = abs(xa - xb) <= GEOMETRY_TOL
        if horizontal == vertical:
            raise PlanValidationError(
                "inlet-axis-aligned", f"inlet {self.start}->{self.end} is not a proper axis-aligned segment"
            )
        return self

    @property
    def horizontal(self) -> bool:
        return abs(self.start[1] - self.end[1]) <= GEOMETRY_TOL

    @property
    def length(self) -> float:
        return float(np.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1]))

    def contains(self, point: tuple[float, float], tol: float = GEOMETRY_TOL) -> bool:
        """True if ``point`` lies on the segment (within ``tol``)."""
        (xa, ya), (xb, yb) = self.start, self.end
        x, y = point
        if self.horizontal:
            return abs(y - ya) <= tol and min(xa, xb) - tol <= x <= max(xa, xb) + tol
        return abs(x - xa) <= tol and min(ya, yb) - tol <= y <= max(ya, yb) + tol

    def on_boundary(self, width: float, height: float) -> bool:
        (xa, ya), (xb, yb) = self.start, self.end
        if self.horizontal:
            return abs(ya) <= GEOMETRY_TOL or abs(ya - height) <= GEOMETRY_TOL
        return abs(xa) <= GEOMETRY_TOL or abs(xa - width) <= GEOMETRY_TOL


class Room(_Frozen):
    name: str
    rect: Rect


class MaterialParams(_Frozen):
    """Friction, diffusivity and flow constants of the penalized model."""

    alpha0: float = ALPHA_OPEN
    alpha_w: float = ALPHA_WALL
    kappa0: float = KAPPA_OPEN
    kappa_w: float = KAPPA_WALL
    reynolds: float = REYNOLDS
    ambient_temperature: float = AMBIENT_TEMPERATURE_C
    inlet_pressure: float = INLET_PRESSURE_KPA

    @model_validator(mode="after")
    def _ordering(self) -> "MaterialParams":
        if not self.alpha_w > self.alpha0 >= 0:
            raise PlanValidationError("alpha-ordering", f"need alpha_w > alpha0 >= 0, got {self.alpha_w}, {self.alpha0}")
        if not self.kappa0 > self.kappa_w > 0:
            raise PlanValidationError("kappa-ordering", f"need kappa0 > kappa_w > 0, got {self.kappa0}, {self.kappa_w}")
        if not self.reynolds > 0:
            raise PlanValidationError("reynolds-positive", f"Re must be positive, got {self.reynolds}")
        return self


class FloorPlan(_Frozen):
    """Validated building geometry.

    The exterior boundary not covered by ``inlets`` is wall (no-slip,
    ambient temperature).
    """

    domain: Domain
    walls: list[Rect] = Field(default_factory=list)
    doors: list[DoorRegion] = Field(default_factory=list)
    vents: list[Vent] = Field(default_factory=list)
    thermostats: list[Thermostat]
    inlets: list[InletSegment] = Field(default_factory=list)
    rooms: list[Room] = Field(default_factory=list)
    metadata: dict[str, Any] = Field(default_factory=dict)

    @property
    def width(self) -> float:
        return self.domain.width

    @property
    def height(self) -> float:
        return self.domain.height

    @property
    def n_doors(self) -> int:
        return len(self.doors)

    @property
    def n_thermostats(self) -> int:
        return len(self.thermostats)

    @model_validator(mode="after")
    def _check_invariants(self) -> "FloorPlan":
        width, height = self.width, self.height
        for index, wall in enumerate(self.walls):
            if not wall.inside(width, height):
                raise PlanValidationError("wall-inside-domain", f"wall {index} {wall.bounds} leaves the domain")
        for position, door in enumerate(self.doors, start=1):
            if door.id != position:
                raise PlanValidationError("door-ids", f"door ids must be 1..n_d in order, found {door.id} at {position}")
            if not door.rect.inside(width, height):
                raise PlanValidationError("door-inside-domain", f"door {door.id} {door.rect.bounds} leaves the domain")
            for index, wall in enumerate(self.walls):
                if door.rect.overlaps(wall):
                    raise PlanValidationError("door-wall-disjoint", f"door {door.id} overlaps wall {index}")
        for a in range(len(self.doors)):
            for b in range(a + 1, len(self.doors)):
                if self.doors[a].rect.overlaps(self.doors[b].rect):
                    raise PlanValidationError(
                        "doors-disjoint", f"doors {self.doors[a].id} and {self.doors[b].id} overlap"
                    )
        for vent in self.vents:
            if not vent.rect.inside(width, height):
                raise PlanValidationError("vent-inside-domain", f"vent {vent.id} leaves the domain")
        if not self.thermostats:
            raise PlanValidationError("thermostat-count", "a plan needs at least one thermostat")
        for th in self.thermostats:
            x, y = th.position
            dx = max(0.0 - x, 0.0, x - width)
            dy = max(0.0 - y, 0.0, y - height)
            if np.hypot(dx, dy) >= th.radius:
                raise PlanValidationError(
                    "thermostat-support", f"thermostat {th.id} disc does not intersect the domain"
                )
        for inlet in self.inlets:
            for point in (inlet.start, inlet.end):
                if not (-GEOMETRY_TOL <= point[0] <= width + GEOMETRY_TOL and -GEOMETRY_TOL <= point[1] <= height + GEOMETRY_TOL):
                    raise PlanValidationError("inlet-inside-domain", f"inlet endpoint {point} leaves the domain")
            if not inlet.on_boundary(width, height):
                raise PlanValidationError("inlet-on-boundary", f"inlet {inlet.start}->{inlet.end} is not on the exterior boundary")
        for room in self.rooms:
            if not room.rect.inside(width, height):
                raise PlanValidationError("room-inside-domain", f"room {room.name!r} leaves the domain")
        return self

    def thermostat(self, thermostat_id: int) -> Thermostat:
        for th in self.thermostats:
            if th.id == thermostat_id:
                return th
        raise KeyError(f"No thermostat with id {thermostat_id}")

    def with_doors(self, count: int) -> "FloorPlan":
        """Keep only the first ``count`` doors; removed doors become open air."""
        if not 0 <= count <= self.n_doors:
            raise PlanValidationError("door-count", f"cannot keep {count} of {self.n_doors} doors")
        return self.model_copy(update={"doors": list(self.doors[:count])})


def load_floor_plan(path: str | Path) -> FloorPlan:
    """Load and validate a floor-plan JSON file.

    Args:
        path: Path to the plan file

    Returns:
        The validated FloorPlan

    Raises:
        PlanParseError: If the file is missing, not JSON, or off-schema
        PlanValidationError: If a geometric invariant is violated
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise PlanParseError(f"Floor plan not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise PlanParseError(f"Malformed floor plan {path}: {exc}") from exc
    try:
        return FloorPlan.model_validate(raw)
    except ValidationError as exc:
        for err in exc.errors():
            original = (err.get("ctx") or {}).get("error")
            if isinstance(original, PlanValidationError):
                raise original from exc
        raise PlanParseError(f"Floor plan {path} does not match the schema: {exc}") from exc


def door_indicators(plan: FloorPlan, points: FloatArray) -> NDArray[np.bool_]:
    """Indicator of each door region at ``points``; shape (n_d, *points.shape[:-1])."""
    shape = (plan.n_doors,) + points.shape[:-1]
    masks = np.zeros(shape, dtype=bool)
    for index, door in enumerate(plan.doors):
        masks[index] = door.rect.contains(points)
    return masks


def wall_indicator(plan: FloorPlan, points: FloatArray) -> NDArray[np.bool_]:
    mask = np.zeros(points.shape[:-1], dtype=bool)
    for wall in plan.walls:
        mask |= wall.contains(points)
    return mask


def material_fields(
    plan: FloorPlan,
    params: MaterialParams,
    theta: Sequence[float] | FloatArray,
    points: FloatArray,
) -> tuple[FloatArray, FloatArray]:
    """Friction and diffusivity at ``points`` for door configuration ``theta``.

    alpha = alpha0 + sum_i (1 - theta_i) (alpha_w - alpha0) 1_i, kappa likewise;
    walls always carry (alpha_w, kappa_w).

    Args:
        plan: Floor plan
        params: Material constants
        theta: Door configuration, one entry per door
        points: Evaluation points with trailing axis 2 (usually quadrature points)

    Returns:
        (alpha, kappa) arrays of shape ``points.shape[:-1]``

    Raises:
        DimensionMismatchError: If ``len(theta) != n_d``
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (plan.n_doors,):
        raise DimensionMismatchError(f"theta has shape {theta.shape}, plan has {plan.n_doors} doors")
    walls = wall_indicator(plan, points)
    alpha = np.where(walls, params.alpha_w, params.alpha0).astype(np.float64)
    kappa = np.where(walls, params.kappa_w, params.kappa0).astype(np.float64)
    doors = door_indicators(plan, points)
    for index in range(plan.n_doors):
        closed = 1.0 - theta[index]
        alpha = alpha + closed * (params.alpha_w - params.alpha0) * doors[index]
        kappa = kappa + closed * (params.kappa_w - params.kappa0) * doors[index]
    return alpha, kappa


def bump_values(th: Thermostat, points: FloatArray) -> FloatArray:
    """Unnormalized bump exp(-1 / (r^2 - |x - x_i|^2)) inside the disc, 0 outside."""
    dx = points[..., 0] - th.position[0]
    dy = points[..., 1] - th.position[1]
    gap = th.radius**2 - (dx * dx + dy * dy)
    out = np.zeros(gap.shape, dtype=np.float64)
    inside = gap > 0
    out[inside] = np.exp(-1.0 / gap[inside])
    return out


def bump_weight(th: Thermostat, x: FloatArray | Sequence[float]) -> FloatArray:
    """Normalized bump weight of thermostat ``th`` at ``x``.

    A thermostat that has not been normalized yet uses sigma = 1.
    """
    points = np.asarray(x, dtype=np.float64)
    sigma = th.sigma if th.sigma is not None else 1.0
    return sigma * bump_values(th, points)


def normalize_bumps(plan: FloorPlan, mesh: "Mesh") -> FloorPlan:
    """Set every thermostat's sigma so its bump integrates to one on ``mesh``.

    Uses the same element quadrature as the sensor observation operator, so
    the normalized mesh integral equals one to rounding.

    Raises:
        BumpNormalizationError: If the bump support carries no quadrature mass
            or the radius is smaller than the surrounding elements
    """
    from .fem.quadrature import DEGREE5, physical_points

    points = physical_points(mesh, DEGREE5)
    jxw = mesh.areas[:, None] * DEGREE5.weights[None, :]
    fingerprint = mesh.fingerprint
    updated = []
    for th in plan.thermostats:
        centroid_dist = np.hypot(
            mesh.centroids[:, 0] - th.position[0], mesh.centroids[:, 1] - th.position[1]
        )
        near = centroid_dist <= th.radius + mesh.diameters
        if not np.any(near):
            raise BumpNormalizationError(f"Thermostat {th.id} support holds no elements")
        local_h = float(mesh.diameters[near].max())
        if th.radius < local_h:
            raise BumpNormalizationError(
                f"Thermostat {th.id} radius {th.radius:g} is below the element diameter {local_h:.3g}"
            )
        mass = float(np.sum(bump_values(th, points) * jxw))
        if not mass > 0:
            raise BumpNormalizationError(f"Thermostat {th.id} bump has zero quadrature mass")
        sigma = 1.0 / mass
        check = float(np.sum(sigma * bump_values(th, points) * jxw))
        if abs(check - 1.0) > BUMP_TOL:
            raise BumpNormalizationError(f"Thermostat {th.id} normalized mass {check:.9f} is off by more than {BUMP_TOL}")
        updated.append(th.model_copy(update={"sigma": sigma, "sigma_mesh": fingerprint}))
    return plan.model_copy(update={"thermostats": updated})
