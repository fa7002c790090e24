"""Deterministic file formats for fields, manifests and iteration logs.

All floating-point output uses 17 significant digits so round-trips are
bit-exact and repeated runs produce byte-identical files.
"""

import json
import os

import numpy as np

FIELD_HEADER = "node,x,y,value"


def write_field_csv(path, mesh, values):
    """One row per node: index, coordinates, field value."""
    values = np.asarray(values, dtype=float)
    if values.shape[0] != mesh.n_nodes:
        raise ValueError("field length does not match mesh")
    with open(path, "w") as fh:
        fh.write(FIELD_HEADER + "\n")
        for i in range(mesh.n_nodes):
            fh.write(f"{i},{mesh.nodes[i, 0]:.17g},{mesh.nodes[i, 1]:.17g},"
                     f"{values[i]:.17g}\n")


def read_field_csv(path):
    """Returns (node_xy, values); validates the header and index column."""
    with open(path) as fh:
        header = fh.readline().strip()
        if header != FIELD_HEADER:
            raise ValueError(f"bad field header {header!r} in {path}")
        xy = []
        values = []
        for lineno, line in enumerate(fh):
            parts = line.strip().split(",")
            if len(parts) != 4:
                raise ValueError(f"bad row {lineno} in {path}")
            if int(parts[0]) != lineno:
                raise ValueError(f"node index out of order in {path}")
            xy.append((float(parts[1]), float(parts[2])))
            values.append(float(parts[3]))
    return np.asarray(xy), np.asarray(values)


def write_vtk(path, mesh, fields):
    """Legacy ASCII VTK unstructured grid with nodal scalar fields."""
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write("conductivity reconstruction fields\n")
        fh.write("ASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_nodes} double\n")
        for x, y in mesh.nodes:
            fh.write(f"{x:.17g} {y:.17g} 0\n")
        t = mesh.n_triangles
        fh.write(f"CELLS {t} {4 * t}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"3 {a} {b} {c}\n")
        fh.write(f"CELL_TYPES {t}\n")
        fh.write("\n".join(["5"] * t) + "\n")
        fh.write(f"POINT_DATA {mesh.n_nodes}\n")
        for name, values in fields.items():
            values = np.asarray(values, dtype=float)
            fh.write(f"SCALARS {name} double 1\n")
            fh.write("LOOKUP_TABLE default\n")
            for v in values:
                fh.write(f"{v:.17g}\n")


def write_manifest(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path):
    with open(path) as fh:
        return json.load(fh)


def append_jsonl(path, record):
    with open(path, "a") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_jsonl(path):
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
