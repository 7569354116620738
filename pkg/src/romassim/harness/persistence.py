"""On-disk formats: snapshot containers, model containers and CSV tables.

A snapshot container is a directory holding a plain-text manifest, the
region mask, and one raw array file per field per snapshot named
``snap_<index>_<field>.f64`` (little-endian float64, row-major, x fastest).
Model containers follow the same manifest-plus-.f64 pattern.  All floats in
text files print with 17 significant digits so round trips are bit exact.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np

from ..fields import StructuredMesh, read_region_mask, write_region_mask
from ..geim import GeimModel
from ..pbdw import PbdwModel, background_update_model
from ..reduction import SnapshotSet
from ..sensing import make_sensor

FORMAT_SNAPSHOTS = "romassim-snapshots-1"
FORMAT_GEIM = "romassim-geim-1"
FORMAT_PBDW = "romassim-pbdw-1"


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_fmt(x) for x in np.asarray(v).ravel())
    return str(v)


def write_manifest(path, entries: dict):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        for key, value in entries.items():
            fh.write(f"{key} = {_fmt(value)}\n")


def read_manifest(path) -> dict:
    out = {}
    with open(path, "r", encoding="ascii") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def write_array(path, arr: np.ndarray):
    np.asarray(arr, dtype="<f8").ravel().tofile(path)


def read_array(path, shape=None) -> np.ndarray:
    arr = np.fromfile(path, dtype="<f8")
    return arr if shape is None else arr.reshape(shape)


def _mesh_entries(mesh: StructuredMesh) -> dict:
    return {
        "nx": mesh.nx, "ny": mesh.ny, "dx": mesh.dx, "dy": mesh.dy,
        "origin_x": mesh.origin[0], "origin_y": mesh.origin[1],
        "boundary_west": mesh.boundary["west"].value,
        "boundary_east": mesh.boundary["east"].value,
        "boundary_south": mesh.boundary["south"].value,
        "boundary_north": mesh.boundary["north"].value,
    }


def _mesh_from_manifest(man: dict, regions_path) -> StructuredMesh:
    return StructuredMesh(
        nx=int(man["nx"]), ny=int(man["ny"]),
        dx=float(man["dx"]), dy=float(man["dy"]),
        origin=(float(man["origin_x"]), float(man["origin_y"])),
        region_id=read_region_mask(regions_path),
        boundary={side: man[f"boundary_{side}"]
                  for side in ("west", "east", "south", "north")},
    )


# -- snapshot containers ---------------------------------------------------------

def write_snapshots(directory, snapshots: SnapshotSet):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    entries = {"format": FORMAT_SNAPSHOTS}
    entries.update(_mesh_entries(snapshots.mesh))
    entries["n_snapshots"] = snapshots.n_snapshots
    entries["fields"] = " ".join(snapshots.field_names())
    entries["n_params"] = snapshots.params.shape[1]
    if snapshots.param_names:
        entries["param_names"] = " ".join(snapshots.param_names)
    if snapshots.grid_axes is not None:
        entries["n_grid_axes"] = len(snapshots.grid_axes)
        for a, axis in enumerate(snapshots.grid_axes):
            entries[f"grid_axis_{a}"] = axis
    for key, value in sorted(snapshots.meta.items()):
        if value is not None:
            entries[f"meta_{key}"] = value
    for i in range(snapshots.n_snapshots):
        entries[f"param_{i}"] = snapshots.params[i]
    write_manifest(d / "manifest.txt", entries)
    write_region_mask(d / "regions.txt", snapshots.mesh)
    for name, mat in snapshots.fields.items():
        for i in range(snapshots.n_snapshots):
            write_array(d / f"snap_{i}_{name}.f64", mat[i])


def read_snapshots(directory) -> SnapshotSet:
    d = Path(directory)
    man = read_manifest(d / "manifest.txt")
    if man.get("format") != FORMAT_SNAPSHOTS:
        raise ValueError(f"{directory} is not a snapshot container")
    mesh = _mesh_from_manifest(man, d / "regions.txt")
    n = int(man["n_snapshots"])
    names = man["fields"].split()
    n_params = int(man.get("n_params", 1))
    params = np.array([[float(tok) for tok in man[f"param_{i}"].split()]
                       for i in range(n)]).reshape(n, n_params)
    fields = {}
    for name in names:
        fields[name] = np.vstack(
            [read_array(d / f"snap_{i}_{name}.f64") for i in range(n)])
    grid_axes = None
    if "n_grid_axes" in man:
        grid_axes = tuple(
            np.array([float(tok) for tok in man[f"grid_axis_{a}"].split()])
            for a in range(int(man["n_grid_axes"])))
    meta = {k[5:]: v for k, v in man.items() if k.startswith("meta_")}
    param_names = tuple(man["param_names"].split()) \
        if "param_names" in man else None
    return SnapshotSet(mesh=mesh, params=params, fields=fields,
                       grid_axes=grid_axes, param_names=param_names, meta=meta)


# -- model containers --------------------------------------------------------------

def _write_sensors(entries: dict, sensors):
    entries["n_sensors"] = len(sensors)
    entries["sensor_spread"] = sensors[0].spread
    entries["sensor_x"] = [s.center[0] for s in sensors]
    entries["sensor_y"] = [s.center[1] for s in sensors]


def _read_sensors(man: dict, mesh: StructuredMesh):
    xs = [float(t) for t in man["sensor_x"].split()]
    ys = [float(t) for t in man["sensor_y"].split()]
    spread = float(man["sensor_spread"])
    return tuple(make_sensor(mesh, (x, y), spread) for x, y in zip(xs, ys))


def save_geim_model(directory, model: GeimModel):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    m = model.n_sensors
    entries = {"format": FORMAT_GEIM, "field_name": model.field_name, "m": m}
    entries.update(_mesh_entries(model.mesh))
    _write_sensors(entries, model.magic_sensors)
    entries["sensor_indices"] = list(model.sensor_indices)
    entries["has_stats"] = int(model.beta_mean is not None)
    write_manifest(d / "manifest.txt", entries)
    write_region_mask(d / "regions.txt", model.mesh)
    write_array(d / "magic_functions.f64", model.magic_matrix)
    write_array(d / "B.f64", model.B)
    write_array(d / "training_errors.f64", model.training_errors)
    if model.beta_mean is not None:
        write_array(d / "beta_mean.f64", model.beta_mean)
        write_array(d / "beta_std.f64", model.beta_std)


def load_geim_model(directory) -> GeimModel:
    d = Path(directory)
    man = read_manifest(d / "manifest.txt")
    if man.get("format") != FORMAT_GEIM:
        raise ValueError(f"{directory} is not a GEIM container")
    mesh = _mesh_from_manifest(man, d / "regions.txt")
    m = int(man["m"])
    sensors = _read_sensors(man, mesh)
    stats = {}
    if int(man.get("has_stats", 0)):
        std = read_array(d / "beta_std.f64")
        stats = dict(beta_mean=read_array(d / "beta_mean.f64"),
                     beta_std=std, tikhonov_diag=1.0 / np.abs(std))
    return GeimModel(
        mesh=mesh, field_name=man["field_name"],
        magic_matrix=read_array(d / "magic_functions.f64", (m, mesh.n_cells)),
        magic_sensors=sensors,
        sensor_indices=tuple(int(t) for t in man["sensor_indices"].split()),
        B=read_array(d / "B.f64", (m, m)),
        training_errors=read_array(d / "training_errors.f64"),
        **stats)


def save_pbdw_model(directory, model: PbdwModel):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    n, m = model.n_background, model.n_sensors
    entries = {"format": FORMAT_PBDW, "field_name": model.field_name,
               "n": n, "m": m}
    entries.update(_mesh_entries(model.mesh))
    _write_sensors(entries, model.sensors)
    entries["sensor_indices"] = list(model.sensor_indices)
    if model.xi is not None:
        entries["xi"] = model.xi
    write_manifest(d / "manifest.txt", entries)
    write_region_mask(d / "regions.txt", model.mesh)
    write_array(d / "background.f64", model.background)
    write_array(d / "beta_path.f64", model.beta_path)
    write_array(d / "beta_table.f64", model.beta_table)


def load_pbdw_model(directory) -> PbdwModel:
    d = Path(directory)
    man = read_manifest(d / "manifest.txt")
    if man.get("format") != FORMAT_PBDW:
        raise ValueError(f"{directory} is not a PBDW container")
    mesh = _mesh_from_manifest(man, d / "regions.txt")
    n, m = int(man["n"]), int(man["m"])
    sensors = _read_sensors(man, mesh)
    base = background_update_model(
        mesh, man["field_name"],
        read_array(d / "background.f64", (n, mesh.n_cells)), sensors)
    return replace(
        base,
        sensor_indices=tuple(int(t) for t in man["sensor_indices"].split()),
        beta_path=read_array(d / "beta_path.f64"),
        beta_table=read_array(d / "beta_table.f64", (n, m)),
        xi=float(man["xi"]) if "xi" in man else None)


# -- CSV ---------------------------------------------------------------------------

def write_csv(path, header, rows):
    """Comma-separated table; floats print with 17 significant digits."""
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(str(h) for h in header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
