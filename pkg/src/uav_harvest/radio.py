"""Wireless channel: LoS shadow fields, log-distance path loss, TDMA scheduling.

Shadow fields are the only precomputed radio quantity: one boolean M x M
grid per device telling whether each UAV cell has line of sight to it.
Everything else (shadow fading draws, SNR, rates, scheduling) is simulated
per communication slot.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .world import Cell, DataLedger, GridMap, Scenario


@dataclass(frozen=True)
class ChannelParams:
    """Propagation constants for the LoS/NLoS log-distance channel.

    ``tx_over_noise`` is the common transmit-power to noise-power ratio
    (linear).  Leave it ``None`` to have it calibrated from the cell-edge
    SNR when a scenario is built.
    """

    alpha_los: float = 2.27
    alpha_nlos: float = 3.64
    sigma2_los: float = 2.0
    sigma2_nlos: float = 5.0
    cell_edge_snr_db: float = -15.0
    tx_over_noise: float | None = None

    def __post_init__(self):
        if self.alpha_los <= 0 or self.alpha_nlos <= 0:
            raise ValueError("path loss exponents must be > 0")
        if self.sigma2_los < 0 or self.sigma2_nlos < 0:
            raise ValueError("shadowing variances must be >= 0")
        if self.tx_over_noise is not None and self.tx_over_noise <= 0:
            raise ValueError("tx_over_noise must be > 0")

    def calibrated(self, tx_over_noise: float) -> "ChannelParams":
        return replace(self, tx_over_noise=tx_over_noise)


@dataclass(frozen=True)
class LinkSample:
    """One device's channel draw in one communication slot."""

    slot: int
    device: int
    snr: float
    rate: float
    scheduled: bool


def supercover_cells(a: Cell, b: Cell) -> list[Cell]:
    """Cells traversed by the open segment between the centers of a and b.

    Returns every grid cell the segment passes through, in traversal
    order, endpoint cells excluded.  A segment through a lattice corner
    touches the two side cells as well as the diagonal ones; all are
    included.  Exact integer arithmetic throughout: centers sit at
    half-integer coordinates, so boundary crossings happen at parameters
    (2i+1)/(2|dx|) and (2j+1)/(2|dy|), compared by cross-multiplication.
    """
    ax, ay = a
    bx, by = b
    nx, ny = abs(bx - ax), abs(by - ay)
    sx = 1 if bx > ax else -1
    sy = 1 if by > ay else -1
    x, y = ax, ay
    cells = []
    ix = iy = 0
    while ix < nx or iy < ny:
        # next vertical crossing at (2*ix+1)/(2*nx), horizontal at (2*iy+1)/(2*ny)
        tx = (2 * ix + 1) * ny
        ty = (2 * iy + 1) * nx
        if iy >= ny or (ix < nx and tx < ty):
            x += sx
            ix += 1
        elif ix >= nx or ty < tx:
            y += sy
            iy += 1
        else:  # corner hit: the segment touches both side cells
            cells.append((x + sx, y))
            cells.append((x, y + sy))
            x += sx
            y += sy
            ix += 1
            iy += 1
        cells.append((x, y))
    return [c for c in cells if c != a and c != b]


def compute_shadow_field(grid: GridMap, device_cell: Cell, altitude: float) -> np.ndarray:
    """Boolean M x M grid: True where a UAV cell has LoS to the device.

    Buildings are modeled as taller than the flight altitude, so LoS fails
    exactly when the 2D projection of the UAV-device segment crosses a
    building cell (endpoints excluded, so a UAV directly above the device
    always has LoS).
    """
    dx, dy = device_cell
    if not grid.in_bounds(device_cell):
        raise ValueError(f"device cell {device_cell} outside the grid")
    if grid.building[dx, dy]:
        raise ValueError(f"device cell {device_cell} is a building")
    if altitude <= 0:
        raise ValueError("altitude must be > 0")
    m = grid.size
    los = np.ones((m, m), dtype=bool)
    building = grid.building
    for x in range(m):
        for y in range(m):
            for cx, cy in supercover_cells((x, y), device_cell):
                if 0 <= cx < m and 0 <= cy < m and building[cx, cy]:
                    los[x, y] = False
                    break
    return los


def snr(params: ChannelParams, distance: float, los: bool, eta_db: float = 0.0) -> float:
    """Linear SNR at the given 3D distance (meters) and shadowing draw (dB)."""
    if distance <= 0:
        raise ValueError(f"distance must be > 0, got {distance}")
    if params.tx_over_noise is None:
        raise ValueError("channel is not calibrated (tx_over_noise is None)")
    alpha = params.alpha_los if los else params.alpha_nlos
    return params.tx_over_noise * distance ** (-alpha) * 10.0 ** (eta_db / 10.0)


def rate(snr_linear: float) -> float:
    """Achievable rate (data units per communication slot) at a linear SNR."""
    return math.log2(1.0 + snr_linear)


def calibrate_power(grid: GridMap, params: ChannelParams) -> float:
    """Transmit-power to noise ratio fixing the configured cell-edge SNR.

    The reference link runs from the map's center point at ground level to
    a grid corner, unobstructed and without shadowing.
    """
    if grid.size == 0:
        raise ValueError("degenerate map of size 0")
    d_edge = math.sqrt(2.0) * grid.size * grid.cell_edge / 2.0
    return 10.0 ** (params.cell_edge_snr_db / 10.0) * d_edge ** params.alpha_los


@dataclass
class CommResult:
    """Outcome of the communication slots within one mission step."""

    throughput: float                 # total data collected this step
    collected: np.ndarray             # per-device amounts collected this step
    samples: list[LinkSample]         # per-slot log (empty if logging disabled)


def run_comm_step(scenario: Scenario, shadow_fields: np.ndarray,
                  p_from: Cell, p_to: Cell, ledger: DataLedger,
                  rng: np.random.Generator, log: bool = True) -> CommResult:
    """Simulate the communication slots while the UAV moves p_from -> p_to.

    The UAV position is interpolated at slot midpoints (j+0.5)/delta
    between the two cell centers; LoS is looked up at the grid cell
    containing the interpolated point.  Each slot, every device draws an
    i.i.d. Gaussian shadowing value, and the highest-SNR device with
    remaining data transmits (ties broken by lowest device index).  The
    collected amount is capped at the device's remaining data.
    """
    params = scenario.channel
    if params.tx_over_noise is None:
        raise ValueError("channel is not calibrated (tx_over_noise is None)")
    delta = scenario.physics.comm_slots_per_step
    h = scenario.physics.altitude
    edge = scenario.map.cell_edge
    k = len(ledger)

    fractions = (np.arange(delta) + 0.5) / delta
    c_from = np.asarray(p_from, dtype=np.float64) + 0.5
    c_to = np.asarray(p_to, dtype=np.float64) + 0.5
    points = c_from + fractions[:, None] * (c_to - c_from)        # (delta, 2) cell units
    lookup = np.floor(points).astype(np.int64)                    # containing cell

    los = shadow_fields[np.arange(k)[None, :], lookup[:, 0:1], lookup[:, 1:2]]  # (delta, k)

    diff_m = (points[:, None, :] - (ledger.cells[None, :, :] + 0.5)) * edge
    dist = np.sqrt(np.sum(diff_m ** 2, axis=2) + h * h)           # (delta, k) meters

    std = np.where(los, math.sqrt(params.sigma2_los), math.sqrt(params.sigma2_nlos))
    eta = rng.normal(size=(delta, k)) * std
    alpha = np.where(los, params.alpha_los, params.alpha_nlos)
    snr_mat = params.tx_over_noise * dist ** (-alpha) * 10.0 ** (eta / 10.0)

    collected = np.zeros(k, dtype=np.float64)
    samples: list[LinkSample] = []
    throughput = 0.0
    for n in range(delta):
        eligible = ledger.remaining > 0.0
        pick = -1
        if eligible.any():
            masked = np.where(eligible, snr_mat[n], -np.inf)
            pick = int(np.argmax(masked))
            slot_rate = math.log2(1.0 + snr_mat[n, pick])
            amount = min(slot_rate, float(ledger.remaining[pick]))
            ledger.collected[pick] += amount
            collected[pick] += amount
            throughput += amount
        if log:
            for dev in range(k):
                samples.append(LinkSample(
                    slot=n, device=dev, snr=float(snr_mat[n, dev]),
                    rate=math.log2(1.0 + float(snr_mat[n, dev])),
                    scheduled=dev == pick))
    return CommResult(throughput=throughput, collected=collected, samples=samples)


# ---------------------------------------------------------------------------
# Shadow-field persistence and memoization


def shadow_field_to_text(grid: GridMap, device_cell: Cell, altitude: float,
                         los: np.ndarray) -> str:
    lines = [
        "shadowfield 1",
        f"map {grid.content_hash()}",
        f"size {grid.size}",
        f"altitude {altitude!r}",
        f"device {device_cell[0]} {device_cell[1]}",
    ]
    for y in range(grid.size):
        lines.append("".join("1" if los[x, y] else "0" for x in range(grid.size)))
    return "\n".join(lines) + "\n"


def shadow_field_from_text(text: str) -> tuple[str, int, float, Cell, np.ndarray]:
    lines = text.splitlines()
    if not lines or lines[0].split() != ["shadowfield", "1"]:
        raise ValueError("not a version-1 shadow field file")
    map_hash = lines[1].split()[1]
    size = int(lines[2].split()[1])
    altitude = float(lines[3].split()[1])
    _, dx, dy = lines[4].split()
    device = (int(dx), int(dy))
    los = np.zeros((size, size), dtype=bool)
    for y in range(size):
        row = lines[5 + y]
        for x in range(size):
            los[x, y] = row[x] == "1"
    return map_hash, size, altitude, device, los


class ShadowCache:
    """Memoizes shadow fields by (map hash, device cell, altitude).

    With a cache directory set, fields are also persisted as text files so
    repeated runs skip the ray tracing.
    """

    def __init__(self, cache_dir: str | os.PathLike | None = None):
        self.cache_dir = os.fspath(cache_dir) if cache_dir is not None else None
        self._mem: dict[tuple[str, Cell, float], np.ndarray] = {}

    def _path(self, map_hash: str, cell: Cell, altitude: float) -> str:
        name = f"shadow_{map_hash[:16]}_x{cell[0]}_y{cell[1]}_h{altitude:g}.txt"
        return os.path.join(self.cache_dir, name)

    def field(self, grid: GridMap, device_cell: Cell, altitude: float) -> np.ndarray:
        key = (grid.content_hash(), tuple(device_cell), float(altitude))
        if key in self._mem:
            return self._mem[key]
        los = None
        if self.cache_dir is not None:
            path = self._path(*key)
            if os.path.exists(path):
                with open(path) as fh:
                    map_hash, size, alt, dev, los = shadow_field_from_text(fh.read())
                if (map_hash, size) != (key[0], grid.size):
                    los = None  # stale file for a different map
        if los is None:
            los = compute_shadow_field(grid, device_cell, altitude)
            if self.cache_dir is not None:
                os.makedirs(self.cache_dir, exist_ok=True)
                with open(self._path(*key), "w") as fh:
                    fh.write(shadow_field_to_text(grid, device_cell, altitude, los))
        los.setflags(write=False)
        self._mem[key] = los
        return los

    def fields_for(self, scenario: Scenario) -> np.ndarray:
        """(K, M, M) boolean stack, one field per scenario device."""
        h = scenario.physics.altitude
        m = scenario.map.size
        if not scenario.devices:
            return np.zeros((0, m, m), dtype=bool)
        return np.stack([self.field(scenario.map, d.cell, h)
                         for d in scenario.devices])
