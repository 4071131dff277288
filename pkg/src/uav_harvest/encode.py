"""Agent observations: centered (default) or non-centered multi-layer maps.

Centered mode translates every layer so the UAV's own cell sits at the
center of a (2M-1) x (2M-1) frame; the area outside the world is padded
as NFZ (1 on the NFZ layer, 0 elsewhere), which is also how the
non-centered variant is padded up to the same frame size.  Layer order:
start/land, NFZ, building, available data, collected data, and in
non-centered mode a final one-hot UAV position layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import MdpState
from .world import Cell, GridMap, RandomizationRanges, Scenario

CENTERED = "centered"
NON_CENTERED = "non_centered"

# layer indices shared by both modes
L_START, L_NFZ, L_BUILDING, L_AVAILABLE, L_COLLECTED, L_POSITION = range(6)


@dataclass(frozen=True)
class EncoderSpec:
    """Observation shape and normalization constants.

    Data layers are divided by ``data_norm`` (the top of the data
    randomization interval) and the flight-time scalar by ``budget_norm``
    (the top of the flight-budget interval).
    """

    mode: str = CENTERED
    data_norm: float = 20.0
    budget_norm: float = 70.0

    def __post_init__(self):
        if self.mode not in (CENTERED, NON_CENTERED):
            raise ValueError(f"unknown observation mode {self.mode!r}")
        if self.data_norm <= 0 or self.budget_norm <= 0:
            raise ValueError("normalization constants must be > 0")

    @classmethod
    def from_ranges(cls, ranges: RandomizationRanges, mode: str = CENTERED) -> "EncoderSpec":
        return cls(mode=mode, data_norm=ranges.data[1] or 1.0,
                   budget_norm=ranges.flight_budget[1])

    def channels(self) -> int:
        return 5 if self.mode == CENTERED else 6

    def frame_side(self, map_size: int) -> int:
        return 2 * map_size - 1


@dataclass(frozen=True, eq=False)
class Observation:
    map_tensor: np.ndarray  # (frame, frame, channels) float32
    time_scalar: float


def center_layer(layer: np.ndarray, uav_cell: Cell, pad_value: float) -> np.ndarray:
    """Translate an M x M layer into a (2M-1) x (2M-1) frame centered on the UAV.

    out[i, j] = layer[i - (M-1) + x, j - (M-1) + y] where indices are in
    range, pad_value elsewhere; the frame's center pixel is layer[x, y].
    """
    m = layer.shape[0]
    x, y = uav_cell
    out = np.full((2 * m - 1, 2 * m - 1), pad_value, dtype=np.float32)
    out[m - 1 - x:2 * m - 1 - x, m - 1 - y:2 * m - 1 - y] = layer
    return out


def _data_layers(state: MdpState, spec: EncoderSpec, m: int) -> np.ndarray:
    layers = np.zeros((m, m, 2), dtype=np.float32)
    cells = state.data.cells
    layers[cells[:, 0], cells[:, 1], 0] = state.data.remaining / spec.data_norm
    layers[cells[:, 0], cells[:, 1], 1] = state.data.collected / spec.data_norm
    return layers


def _static_layers(grid: GridMap) -> np.ndarray:
    return np.stack([grid.start_land, grid.nfz, grid.building],
                    axis=-1).astype(np.float32)


def _pad_offset(m: int) -> int:
    # fixed placement of the M x M block inside the (2M-1) frame
    return (m - 1) // 2


def build_observation(state: MdpState, scenario: Scenario,
                      spec: EncoderSpec) -> Observation:
    """Assemble the agent's input for the current mission state."""
    grid = scenario.map
    m = grid.size
    static = _static_layers(grid)
    data = _data_layers(state, spec, m)
    stack = np.concatenate([static, data], axis=-1)

    if spec.mode == CENTERED:
        frame = np.empty((2 * m - 1, 2 * m - 1, 5), dtype=np.float32)
        for c in range(5):
            pad = 1.0 if c == L_NFZ else 0.0
            frame[:, :, c] = center_layer(stack[:, :, c], state.uav_cell, pad)
    else:
        position = np.zeros((m, m, 1), dtype=np.float32)
        position[state.uav_cell[0], state.uav_cell[1], 0] = 1.0
        stack = np.concatenate([stack, position], axis=-1)
        side = 2 * m - 1
        off = _pad_offset(m)
        frame = np.zeros((side, side, 6), dtype=np.float32)
        frame[:, :, L_NFZ] = 1.0
        frame[off:off + m, off:off + m, :] = stack

    return Observation(map_tensor=frame,
                       time_scalar=state.remaining_time / spec.budget_norm)


class ObservationBuilder:
    """build_observation with the static (map-only) part cached per UAV cell.

    The cached frames are exactly what build_observation produces for the
    first three channels, so both paths stay equivalent (tested).
    """

    def __init__(self, scenario: Scenario, spec: EncoderSpec):
        self.scenario = scenario
        self.spec = spec
        self._static = _static_layers(scenario.map)
        self._cache: dict[Cell, np.ndarray] = {}

    def _static_frame(self, uav_cell: Cell) -> np.ndarray:
        frame = self._cache.get(uav_cell)
        if frame is None:
            m = self.scenario.map.size
            if self.spec.mode == CENTERED:
                frame = np.empty((2 * m - 1, 2 * m - 1, 3), dtype=np.float32)
                for c in range(3):
                    pad = 1.0 if c == L_NFZ else 0.0
                    frame[:, :, c] = center_layer(self._static[:, :, c], uav_cell, pad)
            else:
                side = 2 * m - 1
                off = _pad_offset(m)
                frame = np.zeros((side, side, 4), dtype=np.float32)
                frame[:, :, L_NFZ] = 1.0
                frame[off:off + m, off:off + m, :3] = self._static
                frame[off + uav_cell[0], off + uav_cell[1], 3] = 1.0
            frame.setflags(write=False)
            self._cache[uav_cell] = frame
        return frame

    def build(self, state: MdpState) -> Observation:
        m = self.scenario.map.size
        spec = self.spec
        static = self._static_frame(state.uav_cell)
        data = _data_layers(state, spec, m)
        if spec.mode == CENTERED:
            frame = np.empty((2 * m - 1, 2 * m - 1, 5), dtype=np.float32)
            frame[:, :, :3] = static
            for c in range(2):
                frame[:, :, 3 + c] = center_layer(data[:, :, c], state.uav_cell, 0.0)
        else:
            side = 2 * m - 1
            off = _pad_offset(m)
            frame = np.empty((side, side, 6), dtype=np.float32)
            frame[:, :, (0, 1, 2)] = static[:, :, :3]
            frame[:, :, (3, 4)] = 0.0
            frame[off:off + m, off:off + m, 3:5] = data
            frame[:, :, 5] = static[:, :, 3]
        return Observation(map_tensor=frame,
                           time_scalar=state.remaining_time / spec.budget_norm)
