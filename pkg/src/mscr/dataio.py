"""File formats: trap/capture CSVs, truth metadata, fit and surface outputs.

All files are UTF-8 with LF line endings. Numbers are written with
shortest round-trip formatting so outputs are reproducible byte-for-byte.
Every JSON document embeds the tool version, the resolved configuration,
the seed where one applies, and content hashes of the input files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataError
from .geometry import SurveyWindow, TrapArray
from .inference import AcSurface, FitResult
from .likelihood import CaptureHistory, Dataset
from .simulation import SimulatedData

TRAPS_HEADER = ["trap_id", "x_km", "y_km"]
CAPTURES_HEADER = ["individual_id", "time_days", "trap_id"]
TRUTH_HEADER = ["individual_id", "x_km", "y_km", "observed"]
SURFACE_HEADER = ["x_km", "y_km", "density"]


def _fmt(x: float) -> str:
    return repr(float(x))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def tool_stamp() -> dict:
    return {"name": "mscr", "version": __version__}


def write_json(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _parse_adapter(adapter: str | None) -> dict[str, str]:
    """Adapter maps canonical column names to the file's own names, e.g.
    'individual_id=ID,time_days=DateTime,trap_id=Station'."""
    if not adapter:
        return {}
    out = {}
    for part in adapter.split(","):
        if "=" not in part:
            raise DataError(f"bad adapter entry {part!r}; expected canonical=actual")
        canonical, actual = part.split("=", 1)
        out[canonical.strip()] = actual.strip()
    return out


class _CsvReader:
    """DictReader wrapper that reports file, line, and column on errors."""

    def __init__(self, path, required: list[str], adapter: str | None = None):
        self.path = str(path)
        self.colmap = _parse_adapter(adapter)
        text = Path(path).read_text(encoding="utf-8")
        self.reader = csv.DictReader(io.StringIO(text))
        header = self.reader.fieldnames or []
        for canonical in required:
            actual = self.colmap.get(canonical, canonical)
            if actual not in header:
                raise DataError(
                    f"{self.path}: missing required column {actual!r} "
                    f"(header is {header})")

    def rows(self):
        for line, row in enumerate(self.reader, start=2):
            yield line, row

    def cell(self, row: dict, line: int, canonical: str) -> str:
        actual = self.colmap.get(canonical, canonical)
        val = row.get(actual)
        if val is None or val.strip() == "":
            raise DataError(f"{self.path}:{line}: empty value in column {actual!r}")
        return val.strip()

    def float_cell(self, row: dict, line: int, canonical: str) -> float:
        raw = self.cell(row, line, canonical)
        try:
            return float(raw)
        except ValueError:
            raise DataError(
                f"{self.path}:{line}: column "
                f"{self.colmap.get(canonical, canonical)!r}: not a number: {raw!r}"
            ) from None


def read_traps(path, adapter: str | None = None) -> TrapArray:
    reader = _CsvReader(path, TRAPS_HEADER, adapter)
    ids, xs, ys = [], [], []
    for line, row in reader.rows():
        ids.append(reader.cell(row, line, "trap_id"))
        xs.append(reader.float_cell(row, line, "x_km"))
        ys.append(reader.float_cell(row, line, "y_km"))
    if not ids:
        raise DataError(f"{path}: no trap rows")
    return TrapArray(ids=tuple(ids), xy=np.column_stack([xs, ys]))


def write_traps(path, traps: TrapArray) -> None:
    _write_csv(path, TRAPS_HEADER,
               ([tid, _fmt(x), _fmt(y)] for tid, (x, y) in zip(traps.ids, traps.xy)))


def read_captures(path, traps: TrapArray, window: SurveyWindow,
                  adapter: str | None = None,
                  epoch: str | None = None) -> tuple[CaptureHistory, ...]:
    """Parse detections and group them into per-individual histories.

    Rows may appear in any order; detections are sorted by time within each
    individual. With `epoch` set, the time column holds ISO-8601 timestamps
    converted to days since that instant.
    """
    reader = _CsvReader(path, CAPTURES_HEADER, adapter)
    epoch_dt = _parse_epoch(epoch) if epoch else None
    by_individual: dict[str, list[tuple[float, int]]] = {}
    order: list[str] = []
    for line, row in reader.rows():
        ident = reader.cell(row, line, "individual_id")
        trap_id = reader.cell(row, line, "trap_id")
        try:
            k = traps.index_of(trap_id)
        except KeyError:
            raise DataError(
                f"{path}:{line}: unknown trap_id {trap_id!r} "
                f"(not present in the traps file)") from None
        if epoch_dt is not None:
            t = _timestamp_to_days(reader.cell(row, line, "time_days"),
                                   epoch_dt, str(path), line)
        else:
            t = reader.float_cell(row, line, "time_days")
        if not (0.0 < t < window.duration):
            raise DataError(
                f"{path}:{line}: detection time {t} outside the survey "
                f"window (0, {window.duration})")
        if ident not in by_individual:
            by_individual[ident] = []
            order.append(ident)
        by_individual[ident].append((t, k))
    histories = []
    for ident in order:
        rows = sorted(by_individual[ident])
        times = np.array([t for t, _ in rows])
        if np.any(np.diff(times) <= 0):
            raise DataError(
                f"{path}: individual {ident!r} has duplicate detection times")
        histories.append(CaptureHistory(
            individual_id=ident, times=times,
            trap_indices=np.array([k for _, k in rows], dtype=np.intp)))
    return tuple(histories)


def _parse_epoch(epoch: str) -> datetime:
    try:
        dt = datetime.fromisoformat(epoch)
    except ValueError:
        raise DataError(f"bad --epoch value {epoch!r}; expected ISO-8601") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt


def _timestamp_to_days(raw: str, epoch: datetime, path: str, line: int) -> float:
    try:
        dt = datetime.fromisoformat(raw)
    except ValueError:
        raise DataError(f"{path}:{line}: column 'time_days': not an ISO "
                        f"timestamp: {raw!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return (dt - epoch).total_seconds() / 86400.0


def write_captures(path, dataset: Dataset) -> None:
    def rows():
        for h in dataset.histories:
            for t, k in zip(h.times, h.trap_indices):
                yield [h.individual_id, _fmt(t), dataset.traps.ids[int(k)]]
    _write_csv(path, CAPTURES_HEADER, rows())


def write_truth(path, sim: SimulatedData) -> None:
    def rows():
        for i, ((x, y), obs) in enumerate(zip(sim.activity_centers, sim.observed)):
            yield [f"ind{i + 1:03d}", _fmt(x), _fmt(y), "true" if obs else "false"]
    _write_csv(path, TRUTH_HEADER, rows())


def write_trajectories(path, sim: SimulatedData, step: float) -> None:
    if sim.trajectories is None:
        raise DataError("this simulation kept no trajectories")
    def rows():
        for i, traj in enumerate(sim.trajectories):
            ident = f"ind{i + 1:03d}"
            for j, (x, y) in enumerate(traj):
                yield [ident, str(j), _fmt(j * step), _fmt(x), _fmt(y)]
    _write_csv(path, ["individual_id", "step", "t_days", "x_km", "y_km"], rows())


def write_surface(csv_path, sidecar_path, surface: AcSurface, extra: dict | None = None) -> None:
    def rows():
        for (x, y), d in zip(surface.mesh.points, surface.density):
            yield [_fmt(x), _fmt(y), _fmt(d)]
    _write_csv(csv_path, SURFACE_HEADER, rows())
    payload = {
        "tool": tool_stamp(),
        "individual_id": surface.individual_id,
        "mode_x_km": surface.mode_xy[0],
        "mode_y_km": surface.mode_xy[1],
        "mode_index": surface.mode_index,
        "normalization": surface.normalization,
    }
    if extra:
        payload.update(extra)
    # one-line sidecar
    Path(sidecar_path).write_text(json.dumps(payload) + "\n", encoding="utf-8")


def fit_result_document(result: FitResult, config: dict, inputs: dict) -> dict:
    return {
        "tool": tool_stamp(),
        "config": config,
        "inputs": inputs,
        "result": result.to_dict(),
    }


def _write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
