"""Legacy ASCII VTK output for meshes, flows and temperature snapshots.

Files open in ParaView or VisIt. P2 velocities are written at the mesh
vertices (the first block of P2 dofs), so every file shares the P1 point set.
"""
from __future__ import annotations
from pathlib import Path
from typing import Mapping, Optional

import numpy as np
from numpy.typing import NDArray

from .floorplan import FloorPlan, door_indicators, wall_indicator
from .flow import FlowSolution
from .logger import logger
from .mesh import Mesh
from .thermal import TemperatureTrajectory

__all__ = ["write_vtk", "write_mesh_vtk", "write_flow_vtk", "write_temperature_vtk"]

_VTK_TRIANGLE = 5


def _array_lines(values: NDArray[np.float64]) -> list[str]:
    if values.ndim == 1:
        return [repr(float(v)) for v in values]
    return [" ".join(repr(float(v)) for v in row) for row in values]


def write_vtk(
    path: str | Path,
    mesh: Mesh,
    *,
    point_data: Optional[Mapping[str, NDArray[np.float64]]] = None,
    cell_data: Optional[Mapping[str, NDArray[np.float64]]] = None,
    title: str = "doorstate",
) -> Path:
    """Write an unstructured-grid file with scalar or 2-vector data.

    Args:
        path: Output file
        mesh: Mesh supplying points and triangles
        point_data: Arrays of length n_vertices, or (n_vertices, 2) vectors
        cell_data: Arrays of length n_triangles

    Returns:
        The written path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines.append(f"POINTS {mesh.n_vertices} double")
    lines.extend(f"{x!r} {y!r} 0.0" for x, y in mesh.vertices.tolist())
    lines.append(f"CELLS {mesh.n_triangles} {4 * mesh.n_triangles}")
    lines.extend(f"3 {a} {b} {c}" for a, b, c in mesh.triangles.tolist())
    lines.append(f"CELL_TYPES {mesh.n_triangles}")
    lines.extend([str(_VTK_TRIANGLE)] * mesh.n_triangles)

    if cell_data:
        lines.append(f"CELL_DATA {mesh.n_triangles}")
        for name, values in cell_data.items():
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += _array_lines(np.asarray(values, dtype=np.float64))
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_vertices}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=np.float64)
            if values.ndim == 2:
                padded = np.column_stack([values, np.zeros(values.shape[0])])
                lines.append(f"VECTORS {name} double")
                lines += _array_lines(padded)
            else:
                lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                lines += _array_lines(values)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.debug("Wrote VTK file", path=str(path))
    return path


def write_mesh_vtk(path: str | Path, mesh: Mesh, plan: Optional[FloorPlan] = None) -> Path:
    """Mesh with cell tags: 0 free air, 1 wall, 1 + i door i."""
    tags = np.zeros(mesh.n_triangles)
    if plan is not None:
        centroids = mesh.centroids
        tags[wall_indicator(plan, centroids)] = 1.0
        for index, mask in enumerate(door_indicators(plan, centroids), start=1):
            tags[mask] = 1.0 + index
    return write_vtk(path, mesh, cell_data={"region": tags}, title="doorstate mesh")


def write_flow_vtk(path: str | Path, flow: FlowSolution) -> Path:
    mesh = flow.problem.mesh
    velocity = flow.u.space.components(flow.u.values)[: mesh.n_vertices]
    return write_vtk(
        path,
        mesh,
        point_data={"velocity": velocity, "pressure": flow.p.values},
        title="doorstate flow",
    )


def write_temperature_vtk(directory: str | Path, traj: TemperatureTrajectory, stem: str = "temperature") -> list[Path]:
    """One file per time level: ``<stem>_<k>.vtk``."""
    directory = Path(directory)
    mesh = traj.space.mesh
    width = len(str(traj.n_steps))
    return [
        write_vtk(
            directory / f"{stem}_{k:0{width}d}.vtk",
            mesh,
            point_data={"temperature": traj.values[k]},
            title=f"doorstate temperature t={traj.times[k]:g}",
        )
        for k in range(traj.times.size)
    ]
