"""Grid world: map loading/validation and randomized mission scenarios.

Cells are (x, y) integer pairs with x running east (file columns) and y
running south (file rows), so the action "north" decreases y.  All map
layers are boolean numpy arrays indexed ``layer[x, y]``; the transpose
happens once, at the text-file boundary.
"""

from __future__ import annotations

import copy
import hashlib
import re
from dataclasses import dataclass, field

import numpy as np

Cell = tuple[int, int]

# map file alphabet
FREE = "."
BUILDING = "B"
NFZ = "N"
START_LAND = "L"
_ALPHABET = {FREE, BUILDING, NFZ, START_LAND}

_HEADER_RE = re.compile(r"^size\s+(\d+)\s+cell\s+([0-9.]+)\s*$")


class MapError(ValueError):
    """Raised for malformed or invariant-violating map files."""


@dataclass(frozen=True, eq=False)
class GridMap:
    """Static environment: start/landing, no-fly-zone and building layers."""

    size: int
    cell_edge: float  # meters per cell side
    start_land: np.ndarray
    nfz: np.ndarray
    building: np.ndarray

    def __post_init__(self):
        for name in ("start_land", "nfz", "building"):
            layer = getattr(self, name)
            if layer.shape != (self.size, self.size):
                raise MapError(f"layer {name} has shape {layer.shape}, expected "
                               f"({self.size}, {self.size})")
            layer.setflags(write=False)
        overlap = self.start_land & self.building
        if overlap.any():
            x, y = np.argwhere(overlap)[0]
            raise MapError(f"cell ({x}, {y}) is both start/land and building "
                           f"(row {y}, column {x})")
        overlap = self.start_land & self.nfz
        if overlap.any():
            x, y = np.argwhere(overlap)[0]
            raise MapError(f"cell ({x}, {y}) is both start/land and NFZ "
                           f"(row {y}, column {x})")
        if not self.start_land.any():
            raise MapError("map has no start/landing cell")

    def in_bounds(self, cell: Cell) -> bool:
        x, y = cell
        return 0 <= x < self.size and 0 <= y < self.size

    def start_cells(self) -> tuple[Cell, ...]:
        """All start/landing cells, sorted by (x, y)."""
        return tuple(sorted((int(x), int(y)) for x, y in np.argwhere(self.start_land)))

    def free_device_cells(self) -> tuple[Cell, ...]:
        """Cells where a device may be placed: not building, not start/land.

        NFZ cells are allowed; no-fly zones restrict the UAV, not the
        ground devices.
        """
        ok = ~self.building & ~self.start_land
        return tuple(sorted((int(x), int(y)) for x, y in np.argwhere(ok)))

    def to_text(self, header: bool = True) -> str:
        lines = []
        if header:
            cell = self.cell_edge
            cell_str = str(int(cell)) if float(cell).is_integer() else repr(cell)
            lines.append(f"size {self.size} cell {cell_str}")
        for y in range(self.size):
            row = []
            for x in range(self.size):
                if self.building[x, y]:
                    row.append(BUILDING)
                elif self.nfz[x, y]:
                    row.append(NFZ)
                elif self.start_land[x, y]:
                    row.append(START_LAND)
                else:
                    row.append(FREE)
            lines.append("".join(row))
        return "\n".join(lines) + "\n"

    def content_hash(self) -> str:
        """sha256 of the canonical text form; keys shadow-field caches."""
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def load_map(text: str) -> GridMap:
    """Parse a character-grid map file.

    The format is a square grid over the alphabet ``. B N L`` (free,
    building, no-fly zone, start/landing), optionally preceded by a
    header line ``size M cell <meters>``.
    """
    lines = [ln for ln in text.splitlines() if ln.strip() != ""]
    if not lines:
        raise MapError("empty map file")

    cell_edge = 10.0
    declared_size = None
    m = _HEADER_RE.match(lines[0].strip())
    if m:
        declared_size = int(m.group(1))
        cell_edge = float(m.group(2))
        lines = lines[1:]
        if not lines:
            raise MapError("map file has a header but no grid rows")

    size = len(lines[0])
    if len(lines) != size:
        raise MapError(f"grid is {len(lines)} rows of width {size}; expected a square")
    if declared_size is not None and declared_size != size:
        raise MapError(f"header declares size {declared_size} but grid is {size}")

    start = np.zeros((size, size), dtype=bool)
    nfz = np.zeros((size, size), dtype=bool)
    building = np.zeros((size, size), dtype=bool)
    for y, row in enumerate(lines):
        if len(row) != size:
            raise MapError(f"row {y} has length {len(row)}, expected {size}")
        for x, ch in enumerate(row):
            if ch not in _ALPHABET:
                raise MapError(f"unknown character {ch!r} at row {y}, column {x}")
            if ch == BUILDING:
                building[x, y] = True
            elif ch == NFZ:
                nfz[x, y] = True
            elif ch == START_LAND:
                start[x, y] = True
    return GridMap(size=size, cell_edge=cell_edge, start_land=start, nfz=nfz,
                   building=building)


@dataclass(frozen=True)
class Device:
    """One IoT device sitting at ground level in a grid cell."""

    cell: Cell
    initial_data: float  # data units
    collected: float = 0.0

    def __post_init__(self):
        if self.initial_data < 0:
            raise ValueError(f"initial_data must be >= 0, got {self.initial_data}")
        if not 0.0 <= self.collected <= self.initial_data:
            raise ValueError(f"collected {self.collected} outside "
                             f"[0, {self.initial_data}]")


class DataLedger:
    """Mutable per-episode record of initial and collected data per device."""

    def __init__(self, devices):
        self.cells = np.array([d.cell for d in devices], dtype=np.int64).reshape(-1, 2)
        self.initial = np.array([d.initial_data for d in devices], dtype=np.float64)
        self.collected = np.array([d.collected for d in devices], dtype=np.float64)

    def __len__(self):
        return len(self.initial)

    @property
    def remaining(self) -> np.ndarray:
        return self.initial - self.collected

    def copy(self) -> "DataLedger":
        return copy.deepcopy(self)


@dataclass(frozen=True)
class PhysicsConfig:
    """Flight constants: altitude, comm slots per action, nominal speed.

    ``velocity`` only sets the physical scale of a mission step (one cell
    at speed V, or hover); it does not change any simulated quantity.
    """

    altitude: float = 10.0
    comm_slots_per_step: int = 4
    velocity: float = 10.0

    def __post_init__(self):
        if self.altitude <= 0:
            raise ValueError("altitude must be > 0")
        if self.comm_slots_per_step < 1:
            raise ValueError("comm_slots_per_step must be >= 1")


@dataclass(frozen=True)
class RandomizationRanges:
    """Closed intervals used by sample_scenario, plus candidate start cells."""

    device_count: tuple[int, int] = (2, 5)
    data: tuple[float, float] = (5.0, 20.0)
    flight_budget: tuple[int, int] = (35, 70)
    start_cells: tuple[Cell, ...] = ()

    def validate(self, grid: GridMap) -> None:
        for name in ("device_count", "data", "flight_budget"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} interval [{lo}, {hi}] is empty")
        if self.device_count[0] < 1:
            raise ValueError("device_count lower bound must be >= 1")
        if self.data[0] < 0:
            raise ValueError("data lower bound must be >= 0")
        if self.flight_budget[0] < 1:
            raise ValueError("flight_budget lower bound must be >= 1")
        if not self.start_cells:
            raise ValueError("start_cells is empty")
        for cell in self.start_cells:
            if not grid.in_bounds(cell) or not grid.start_land[cell[0], cell[1]]:
                raise ValueError(f"start cell {cell} is not a start/land cell")

    @classmethod
    def for_map(cls, grid: GridMap, **kwargs) -> "RandomizationRanges":
        """Ranges with start_cells defaulted to every start/land cell."""
        kwargs.setdefault("start_cells", grid.start_cells())
        return cls(**kwargs)


@dataclass(frozen=True, eq=False)
class Scenario:
    """One mission instance: map, devices, start, flight budget, constants."""

    map: GridMap
    devices: tuple[Device, ...]
    start_cell: Cell
    flight_budget: int
    physics: PhysicsConfig
    channel: "ChannelParams" = field(repr=False, default=None)

    def __post_init__(self):
        x, y = self.start_cell
        if not self.map.in_bounds(self.start_cell) or not self.map.start_land[x, y]:
            raise ValueError(f"start_cell {self.start_cell} is not a start/land cell")
        if self.flight_budget < 1:
            raise ValueError("flight_budget must be >= 1")
        for d in self.devices:
            dx, dy = d.cell
            if not self.map.in_bounds(d.cell):
                raise ValueError(f"device cell {d.cell} outside the grid")
            if self.map.building[dx, dy]:
                raise ValueError(f"device cell {d.cell} is a building")

    def total_initial_data(self) -> float:
        return float(sum(d.initial_data for d in self.devices))


def sample_scenario(grid: GridMap, ranges: RandomizationRanges,
                    rng: np.random.Generator,
                    physics: PhysicsConfig | None = None,
                    channel: "ChannelParams | None" = None) -> Scenario:
    """Draw one mission instance uniformly within the given ranges.

    Draw order is fixed (device count, device cells, data, budget, start)
    so identical generator states yield identical scenarios.  Device cells
    are drawn without replacement from non-building, non-start cells.
    """
    from .radio import ChannelParams, calibrate_power

    ranges.validate(grid)
    k_lo, k_hi = ranges.device_count
    k = int(rng.integers(k_lo, k_hi + 1))
    candidates = grid.free_device_cells()
    if len(candidates) < k:
        raise ValueError(f"only {len(candidates)} free cells for {k} devices")
    idx = rng.choice(len(candidates), size=k, replace=False)
    amounts = rng.uniform(ranges.data[0], ranges.data[1], size=k)
    budget = int(rng.integers(ranges.flight_budget[0], ranges.flight_budget[1] + 1))
    start = ranges.start_cells[int(rng.integers(len(ranges.start_cells)))]

    devices = tuple(Device(cell=candidates[int(i)], initial_data=float(a))
                    for i, a in zip(idx, amounts))
    physics = physics or PhysicsConfig()
    if channel is None:
        channel = ChannelParams()
    if channel.tx_over_noise is None:
        channel = channel.calibrated(calibrate_power(grid, channel))
    return Scenario(map=grid, devices=devices, start_cell=start,
                    flight_budget=budget, physics=physics, channel=channel)
