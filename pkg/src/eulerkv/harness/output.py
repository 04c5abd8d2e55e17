"""
Run artifacts: the diagnostics CSV and binary grid snapshots.

Snapshot layout (all little-endian)::

    magic   8 bytes  b"EKVSNAP\\0"
    version u32
    Nx Ny Mx My      4 x u32
    Lx Ly t          3 x f64
    nfields u32
    nfields x (u16 length, utf-8 name)
    nfields x Mx*My f64, row-major (index [i, j] is x_i, y_j)
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..dynamics import SimState, Solver
from ..energy import EnergyLedger, apriori_monitors
from ..kinematics import det_transport_defect, min_det_F, return_map_defect

MAGIC = b"EKVSNAP\x00"
VERSION = 1
_HEAD = struct.Struct("<8sI4I3dI")

CSV_COLUMNS = ("t", "E_kin", "E_sto", "D_cum", "W_cum", "residual", "residual_rel",
               "F_L2", "gradF_L2", "v_L2", "gradv_Linf", "gradE_Lp",
               "min_det_F", "det_defect", "return_map_defect")


class SnapshotError(ValueError):
    """Malformed snapshot file."""


def _fmt(value: float) -> str:
    return repr(float(value)) if math.isfinite(value) else ("nan" if math.isnan(value) else
                                                             ("inf" if value > 0 else "-inf"))


class DiagnosticsWriter:
    """Appends one row per sample and flushes it, so a crash keeps the rows so far."""

    def __init__(self, path, solver: Solver):
        self.path = Path(path)
        self.solver = solver
        self._fh = open(self.path, "w", newline="", encoding="utf-8")
        self._csv = csv.writer(self._fh, lineterminator="\n")
        self._csv.writerow(CSV_COLUMNS)
        self._fh.flush()
        self.scale = 0.0

    def row(self, s: SimState, led: EnergyLedger) -> list[float]:
        mon = apriori_monitors(s, self.solver)
        self.scale = max(self.scale, led.total)
        rel = led.residual / self.scale if self.scale > 0 else 0.0
        rm = return_map_defect(s, self.solver)["defect"] if s.xi is not None else math.nan
        return [s.t, led.E_kin, led.E_sto, led.D_cum, led.W_cum, led.residual, rel,
                mon["F_L2"], mon["gradF_L2"], mon["v_L2"], mon["gradv_Linf"], mon["gradE_Lp"],
                min_det_F(s, self.solver), det_transport_defect(s, self.solver), rm]

    def __call__(self, s: SimState, led: EnergyLedger) -> None:
        with np.errstate(over="ignore", invalid="ignore"):
            values = self.row(s, led)
        self._csv.writerow([_fmt(v) for v in values])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, float) else v for v in r])


def read_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[k]) for r in body]) for k, name in enumerate(header)}


@dataclass
class Snapshot:
    Nx: int
    Ny: int
    Mx: int
    My: int
    Lx: float
    Ly: float
    t: float
    fields: dict

    def to_bytes(self) -> bytes:
        names = list(self.fields)
        out = [_HEAD.pack(MAGIC, VERSION, self.Nx, self.Ny, self.Mx, self.My,
                          self.Lx, self.Ly, self.t, len(names))]
        for name in names:
            enc = name.encode("utf-8")
            out.append(struct.pack("<H", len(enc)) + enc)
        for name in names:
            arr = np.asarray(self.fields[name], dtype="<f8")
            if arr.shape != (self.Mx, self.My):
                raise SnapshotError(f"field {name!r} has shape {arr.shape}, expected {(self.Mx, self.My)}")
            out.append(np.ascontiguousarray(arr).tobytes(order="C"))
        return b"".join(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Snapshot":
        if len(data) < _HEAD.size:
            raise SnapshotError("truncated header")
        magic, version, Nx, Ny, Mx, My, Lx, Ly, t, nf = _HEAD.unpack_from(data, 0)
        if magic != MAGIC:
            raise SnapshotError(f"bad magic {magic!r}")
        if version != VERSION:
            raise SnapshotError(f"unsupported snapshot version {version}")
        pos = _HEAD.size
        names = []
        for _ in range(nf):
            if pos + 2 > len(data):
                raise SnapshotError("truncated field list")
            (n,) = struct.unpack_from("<H", data, pos)
            pos += 2
            if pos + n > len(data):
                raise SnapshotError("truncated field name")
            names.append(data[pos:pos + n].decode("utf-8"))
            pos += n
        size = Mx * My * 8
        if len(data) - pos != nf * size:
            raise SnapshotError(f"payload has {len(data) - pos} bytes, header implies {nf * size}")
        fields = {}
        for name in names:
            fields[name] = np.frombuffer(data, dtype="<f8", count=Mx * My, offset=pos).reshape(Mx, My).copy()
            pos += size
        return cls(Nx, Ny, Mx, My, Lx, Ly, t, fields)

    def write(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def read(cls, path) -> "Snapshot":
        return cls.from_bytes(Path(path).read_bytes())


def snapshot_of(s: SimState, solver: Solver) -> Snapshot:
    """Grid values of ``v``, ``F`` and (when tracked) the return-map displacement."""
    b = solver.basis
    v = solver.velocity_grid(solver.velocity_at(s))
    F = solver.F_grid(s.F)
    fields = {"v_x": v[0], "v_y": v[1], "F_xx": F[0, 0], "F_xy": F[0, 1], "F_yx": F[1, 0], "F_yy": F[1, 1]}
    if s.xi is not None:
        u = solver.velocity_grid(s.xi)
        fields["u_x"], fields["u_y"] = u[0], u[1]
    d = b.domain
    return Snapshot(b.nx, b.ny, b.mx, b.my, d.Lx, d.Ly, s.t, fields)
