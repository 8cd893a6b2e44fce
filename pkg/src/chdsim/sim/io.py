"""File formats: legacy VTK fields, CSV traces, flat key=value configs."""

import dataclasses
from pathlib import Path

import numpy as np

from ..physics import SimConfig

CSV_HEADER = ("t,r_inner,r_outer,amp_m1,amp_m2,amp_m3,amp_m4,"
              "amp_m5,amp_m6,amp_m7,amp_m8,energy")


def _fmt(x):
    return format(float(x), ".17g")


def write_vtk(mesh, fields, path):
    """Write nodal scalar fields on a triangle mesh as legacy ASCII VTK.

    ``fields`` is a sequence of (name, values) pairs or a dict; the file
    declares them in the given order.  An empty field list writes geometry
    only.  Values round-trip through :func:`read_vtk` exactly.
    """
    items = list(fields.items()) if isinstance(fields, dict) else list(fields)
    nv = mesh.n_vertices
    nt = mesh.n_triangles
    lines = ["# vtk DataFile Version 3.0", "chdsim fields", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    for xv, yv in mesh.vertices:
        lines.append(f"{_fmt(xv)} {_fmt(yv)} 0")
    lines.append(f"CELLS {nt} {4 * nt}")
    for a, b, c in mesh.triangles:
        lines.append(f"3 {a} {b} {c}")
    lines.append(f"CELL_TYPES {nt}")
    lines.extend(["5"] * nt)
    if items:
        lines.append(f"POINT_DATA {nv}")
        for name, values in items:
            values = np.asarray(values, dtype=float)
            if values.shape != (nv,):
                raise ValueError(
                    f"field {name!r} has shape {values.shape}, "
                    f"expected ({nv},)")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines.extend(_fmt(v) for v in values)
    Path(path).write_text("\n".join(lines) + "\n")


def read_vtk(path):
    """Parse a file written by :func:`write_vtk`.

    Returns (vertices (nv, 2), triangles (nt, 3), fields) with the fields
    dict preserving the declared order.
    """
    tokens = Path(path).read_text().split("\n", 4)[4].split()
    pos = 0

    def take(n):
        nonlocal pos
        chunk = tokens[pos:pos + n]
        pos += n
        return chunk

    head = take(2)
    if head[0] != "POINTS":
        raise ValueError(f"{path}: expected POINTS, got {head[0]!r}")
    nv = int(head[1])
    take(1)  # dtype tag
    coords = np.array(take(3 * nv), dtype=float).reshape(nv, 3)
    head = take(2)
    if head[0] != "CELLS":
        raise ValueError(f"{path}: expected CELLS, got {head[0]!r}")
    nt = int(head[1])
    take(1)  # total index count
    cells = np.array(take(4 * nt), dtype=np.int64).reshape(nt, 4)
    if nt and not (cells[:, 0] == 3).all():
        raise ValueError(f"{path}: non-triangle cell")
    take(2 + nt)  # CELL_TYPES block
    fields = {}
    if pos < len(tokens):
        head = take(2)
        if head[0] != "POINT_DATA":
            raise ValueError(f"{path}: expected POINT_DATA, got {head[0]!r}")
        while pos < len(tokens):
            tag, name = take(2)
            if tag != "SCALARS":
                raise ValueError(f"{path}: expected SCALARS, got {tag!r}")
            take(4)  # dtype, component count, LOOKUP_TABLE default
            fields[name] = np.array(take(nv), dtype=float)
    return coords[:, :2], cells[:, 1:], fields


def write_csv(rows, path):
    """Write trace rows (t, r_inner, r_outer, amp_m1..amp_m8, energy).

    One row per entry of ``rows`` plus the fixed header; a trace sampled at
    the output cadence therefore has one row per cadence tick plus the
    initial one.  Absent radii are written as nan.
    """
    lines = [CSV_HEADER]
    for row in rows:
        row = list(row)
        if len(row) != 12:
            raise ValueError(f"trace row has {len(row)} entries, expected 12")
        lines.append(",".join(_fmt(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_csv(path):
    """Read a trace written by :func:`write_csv` into an (n, 12) array."""
    text = Path(path).read_text().strip().split("\n")
    if text[0] != CSV_HEADER:
        raise ValueError(f"{path}: unexpected header {text[0]!r}")
    rows = [np.array(line.split(","), dtype=float) for line in text[1:]]
    return np.array(rows).reshape(len(rows), 12)


# model units are the nondimensional ones: lengths in interface-scaled
# units, times in growth-scaled units
_UNITS = {
    "eps": "interface parameter; interfacial width = eps*pi (length)",
    "beta": "surface tension scale (energy / length)",
    "K": "Darcy permeability * pressure scale (0 disables flow)",
    "D": "nutrient diffusivity (length^2 / time)",
    "lam": "chemotaxis flux coefficient (dimensionless)",
    "chi_phi": "chemotaxis energy coefficient (dimensionless)",
    "consumption": "nutrient consumption rate (1 / time)",
    "variant": "source law: A linear, B host-consuming, C interfacial",
    "prolif": "proliferation rate (1 / time)",
    "apoptosis": "apoptosis rate (1 / time)",
    "degradation": "necrotic degradation rate (1 / time)",
    "sigma_B": "boundary nutrient level (concentration)",
    "delta_mob": "mobility regularization (dimensionless)",
    "quasi_static": "true: stationary nutrient solve each step",
    "tau": "time step (time)",
    "h_f": "fine mesh width at interfaces (length)",
    "h_c": "coarse mesh width in bulk (length)",
    "half_width": "domain half width or disc radius (length)",
    "domain": "square or disc",
    "quarter": "true: simulate one mirror-symmetric quadrant",
    "tol_pgs": "Gauss-Seidel stopping tolerance (dimensionless)",
    "max_sweeps": "Gauss-Seidel sweep budget per solve",
    "delta_ind": "refinement indicator threshold (dimensionless)",
    "max_halvings": "time step halving depth on solver failure",
    "R2": "initial outer interface radius (length)",
    "R3": "initial inner interface radius (length)",
    "delta2": "outer perturbation amplitude (length)",
    "m2": "outer perturbation mode number",
    "delta3": "inner perturbation amplitude (length)",
    "m3": "inner perturbation mode number",
    "T_end": "final time (time)",
    "cadence": "field output interval (time)",
    "n_rays": "rays for radius extraction",
}


def write_config(cfg, path):
    """Write a config as flat key = value lines with unit comments."""
    lines = ["# chdsim run configuration (nondimensional model units)"]
    for field in dataclasses.fields(SimConfig):
        value = getattr(cfg, field.name)
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float):
            value = _fmt(value)
        lines.append(f"{field.name} = {value}  # {_UNITS[field.name]}")
    Path(path).write_text("\n".join(lines) + "\n")


def coerce_field(name, text):
    """Parse the text form of one config field to its declared type."""
    types = {f.name: f.type for f in dataclasses.fields(SimConfig)}
    if name not in types:
        valid = ", ".join(types)
        raise ValueError(f"unknown config key {name!r}; valid keys: {valid}")
    kind = types[name]
    text = text.strip()
    if kind in ("bool", bool):
        if text.lower() in ("true", "1", "yes"):
            return True
        if text.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"config key {name!r}: not a boolean: {text!r}")
    if kind in ("int", int):
        return int(text)
    if kind in ("float", float):
        return float(text)
    return text


def read_config(path):
    """Parse a file written by :func:`write_config` back to a config.

    Missing keys keep their defaults; unknown keys raise ValueError.
    """
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        key, text = (part.strip() for part in line.split("=", 1))
        values[key] = coerce_field(key, text)
    return SimConfig().with_overrides(**values)
