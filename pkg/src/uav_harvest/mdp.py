"""Finite-horizon mission MDP: transitions, safety controller, rewards.

The safety controller converts any illegal action (moving off-grid, into a
building or an NFZ, or landing outside a landing zone) into a hover that
still costs a time step and incurs a penalty, so the UAV can never occupy
a forbidden cell.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .radio import CommResult, run_comm_step
from .world import Cell, DataLedger, GridMap, Scenario


class Action(enum.IntEnum):
    NORTH = 0
    EAST = 1
    SOUTH = 2
    WEST = 3
    HOVER = 4
    LAND = 5


# (dx, dy) per movement action; north decreases y
_MOVES = {
    Action.NORTH: (0, -1),
    Action.EAST: (1, 0),
    Action.SOUTH: (0, 1),
    Action.WEST: (-1, 0),
}


@dataclass(frozen=True)
class RewardParams:
    data_scale: float = 1.0
    safety_penalty: float = -1.0
    movement_penalty: float = -0.2
    crash_penalty: float = -3.0

    def __post_init__(self):
        if self.data_scale <= 0:
            raise ValueError("data_scale must be > 0")
        for name in ("safety_penalty", "movement_penalty", "crash_penalty"):
            if getattr(self, name) > 0:
                raise ValueError(f"{name} must be <= 0")


@dataclass
class MdpState:
    """Dynamic mission state; mutated in place by step()."""

    uav_cell: Cell
    remaining_time: int
    data: DataLedger
    landed: bool = False
    terminal: bool = False


@dataclass
class StepOutcome:
    next_state: MdpState
    reward: float
    terminal: bool
    info: dict = field(default_factory=dict)


def reset(scenario: Scenario) -> MdpState:
    return MdpState(uav_cell=scenario.start_cell,
                    remaining_time=scenario.flight_budget,
                    data=DataLedger(scenario.devices))


def safety_check(grid: GridMap, uav_cell: Cell, action: Action) -> bool:
    """True if the action is allowed from uav_cell."""
    if action == Action.HOVER:
        return True
    if action == Action.LAND:
        x, y = uav_cell
        return bool(grid.start_land[x, y])
    dx, dy = _MOVES[action]
    tx, ty = uav_cell[0] + dx, uav_cell[1] + dy
    if not grid.in_bounds((tx, ty)):
        return False
    return not (grid.building[tx, ty] or grid.nfz[tx, ty])


def step(state: MdpState, action: Action, scenario: Scenario,
         shadow_fields: np.ndarray, rewards: RewardParams,
         rng: np.random.Generator, log_comm: bool = False) -> StepOutcome:
    """Advance the mission by one time slot.

    Landing in a landing zone ends the mission immediately: no movement
    penalty, no communication, and the flight budget is not consumed.
    Every other action (blocked ones become hover) runs the communication
    slots, costs one unit of flight time, and incurs the movement penalty.
    """
    if state.terminal:
        raise ValueError("cannot step a terminal state")
    action = Action(action)
    grid = scenario.map
    allowed = safety_check(grid, state.uav_cell, action)
    sc_triggered = not allowed

    if action == Action.LAND and allowed:
        state.landed = True
        state.terminal = True
        components = {"data": 0.0, "safety": 0.0, "movement": 0.0, "crash": 0.0}
        return StepOutcome(next_state=state, reward=0.0, terminal=True,
                           info={"throughput": 0.0, "sc_triggered": False,
                                 "crashed": False, "components": components,
                                 "comm": None})

    if allowed and action in _MOVES:
        dx, dy = _MOVES[action]
        target = (state.uav_cell[0] + dx, state.uav_cell[1] + dy)
    else:
        target = state.uav_cell  # hover, or blocked action converted to hover

    comm: CommResult = run_comm_step(scenario, shadow_fields, state.uav_cell,
                                     target, state.data, rng, log=log_comm)
    state.uav_cell = target
    state.remaining_time -= 1
    crashed = state.remaining_time == 0
    if crashed:
        state.terminal = True

    components = {
        "data": rewards.data_scale * comm.throughput,
        "safety": rewards.safety_penalty if sc_triggered else 0.0,
        "movement": rewards.movement_penalty,
        "crash": rewards.crash_penalty if crashed else 0.0,
    }
    reward = sum(components.values())
    return StepOutcome(next_state=state, reward=reward, terminal=state.terminal,
                       info={"throughput": comm.throughput,
                             "sc_triggered": sc_triggered, "crashed": crashed,
                             "components": components, "comm": comm})
