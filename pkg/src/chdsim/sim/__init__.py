"""Simulation front end: presets, initial data, post-processing, IO, CLI."""

from .initial import initial_phase, initial_state
from .io import (read_config, read_csv, read_vtk, write_config, write_csv,
                 write_vtk)
from .postproc import RadiiSample, extract_radii, scalar_view
from .presets import preset, preset_names
from .runner import run, trace_row

__all__ = [
    "initial_phase", "initial_state", "preset", "preset_names",
    "extract_radii", "scalar_view", "RadiiSample", "run", "trace_row",
    "write_vtk", "read_vtk", "write_csv", "read_csv", "write_config",
    "read_config",
]
