"""Mission geometry: user association, UAV kinematics, feasibility arithmetic.

Everything here is a pure function over value inputs; rollout workers can
call them concurrently. Distances are 3-d Euclidean (UAVs fly at a fixed
altitude, users sit on the ground).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .validation import ValidationError, check_positions

__all__ = [
    "RadioConfig",
    "RewardWeights",
    "ScenarioConfig",
    "UavPose",
    "Action",
    "ACTION_NAMES",
    "ACTION_DELTAS",
    "associate",
    "apply_action",
    "collision_count",
    "min_steps",
    "vi_c_scenario",
    "dbm_to_watt",
    "db_to_linear",
    "InvalidActionError",
]

_GRID_TOL = 1e-9


class InvalidActionError(ValueError):
    """Action id outside the 5-action planar set."""


class Action:
    UP = 0
    DOWN = 1
    LEFT = 2
    RIGHT = 3
    STAY = 4


ACTION_NAMES = ("UP", "DOWN", "LEFT", "RIGHT", "STAY")
# Unit displacement per action, scaled by the per-slot step size.
ACTION_DELTAS = np.array([
    [0.0, 1.0],
    [0.0, -1.0],
    [-1.0, 0.0],
    [1.0, 0.0],
    [0.0, 0.0],
])
N_ACTIONS = 5


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** (dbm / 10.0) * 1e-3


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


@dataclass(frozen=True)
class RadioConfig:
    """Physical-layer constants, all linear units (W, m)."""

    n_antennas: int = 4
    spacing_ratio: float = 0.5      # antenna spacing over wavelength
    ref_gain: float = 1e-2          # channel power gain at the reference distance (-20 dB)
    ref_distance: float = 1.0       # m
    noise_power: float = 1e-12      # W (-90 dBm)
    p_max: float = 1.0              # W (30 dBm)

    def __post_init__(self):
        if self.n_antennas < 1:
            raise ValidationError("n_antennas must be >= 1")
        for name in ("spacing_ratio", "ref_gain", "ref_distance", "noise_power", "p_max"):
            if getattr(self, name) <= 0:
                raise ValidationError(f"{name} must be positive")


@dataclass(frozen=True)
class RewardWeights:
    """Weights of the five shared-reward components."""

    rate: float = 1.0
    arrival: float = 2.0
    budget: float = 1.0
    collision: float = 5.0
    feasibility: float = 0.1


@dataclass(frozen=True)
class ScenarioConfig:
    """Geometry, mission and radio constants for one deployment."""

    area: tuple[float, float, float, float] = (0.0, 200.0, 0.0, 200.0)  # x_min, x_max, y_min, y_max
    n_uavs: int = 3
    altitude: float = 100.0
    step_size: float = 20.0          # per-slot displacement (speed x slot length)
    coverage_radius: float = 150.0
    safety_distance: float = 25.0
    max_steps: int = 24
    starts: tuple = ((20.0, 20.0), (20.0, 180.0), (180.0, 180.0))
    destinations: tuple = ((180.0, 100.0), (180.0, 20.0), (20.0, 100.0))
    user_positions: tuple = ()       # K ground points (x, y); z is 0 by definition
    radio: RadioConfig = field(default_factory=RadioConfig)
    reward_weights: RewardWeights = field(default_factory=RewardWeights)

    def __post_init__(self):
        x_min, x_max, y_min, y_max = self.area
        if not (x_max > x_min and y_max > y_min):
            raise ValidationError("area bounds must be increasing")
        if self.n_uavs < 1 or self.max_steps < 1:
            raise ValidationError("need at least one UAV and one time slot")
        if self.altitude <= 0 or self.step_size <= 0:
            raise ValidationError("altitude and step_size must be positive")
        if len(self.starts) != self.n_uavs or len(self.destinations) != self.n_uavs:
            raise ValidationError("starts/destinations must list one point per UAV")
        for label, pts in (("start", self.starts), ("destination", self.destinations)):
            for p in pts:
                self._check_inside(p, label)
                for c, origin in zip(p, (x_min, y_min)):
                    k = (c - origin) / self.step_size
                    if abs(k - round(k)) > _GRID_TOL:
                        raise ValidationError(
                            f"{label} {p} is not on the step grid (offset from the area "
                            f"origin must be an integer multiple of step_size)")
        for p in self.user_positions:
            self._check_inside(p, "user")

    def _check_inside(self, p, label):
        x_min, x_max, y_min, y_max = self.area
        if not (x_min <= p[0] <= x_max and y_min <= p[1] <= y_max):
            raise ValidationError(f"{label} {p} lies outside the area")

    # -- convenience views --------------------------------------------
    @property
    def n_users(self) -> int:
        return len(self.user_positions)

    @property
    def span(self) -> float:
        x_min, x_max, y_min, y_max = self.area
        return max(x_max - x_min, y_max - y_min)

    def start_points(self) -> np.ndarray:
        return self._lift(self.starts)

    def destination_points(self) -> np.ndarray:
        return self._lift(self.destinations)

    def user_points(self) -> np.ndarray:
        if not self.user_positions:
            return np.zeros((0, 3))
        pts = np.asarray(self.user_positions, dtype=np.float64)
        return np.column_stack([pts, np.zeros(len(pts))])

    def _lift(self, xy) -> np.ndarray:
        pts = np.asarray(xy, dtype=np.float64)
        return np.column_stack([pts, np.full(len(pts), self.altitude)])

    def with_users(self, user_positions) -> "ScenarioConfig":
        return replace(self, user_positions=tuple(tuple(map(float, p)) for p in user_positions))


def vi_c_scenario(k_users: int = 12, user_seed: int = 0, **overrides) -> ScenarioConfig:
    """The bundled 3-UAV benchmark scenario with seeded uniform users.

    Starts (20,20), (20,180), (180,180); destinations (180,100), (180,20),
    (20,100); altitude 100 m, step 20 m, safety distance 25 m, 24 slots.
    """
    base = ScenarioConfig(**overrides)
    rng = np.random.default_rng(user_seed)
    x_min, x_max, y_min, y_max = base.area
    users = np.column_stack([
        rng.uniform(x_min, x_max, size=k_users),
        rng.uniform(y_min, y_max, size=k_users),
    ])
    return base.with_users(users)


@dataclass
class UavPose:
    position: np.ndarray            # (3,), z fixed at the operating altitude
    arrived: bool = False
    last_action: int = Action.STAY


def associate(uav_positions, user_positions, coverage_radius: float) -> list[list[int]]:
    """Nearest-covering-UAV clusters.

    A user joins the cluster of the closest UAV, provided that UAV covers it
    (3-d distance <= coverage_radius). Ties go to the lowest UAV index;
    users covered by no UAV stay unassociated. Returns one (possibly empty)
    index list per UAV.
    """
    uavs = check_positions(uav_positions, name="uav_positions")
    clusters: list[list[int]] = [[] for _ in range(len(uavs))]
    users = np.asarray(user_positions, dtype=np.float64)
    if users.size == 0:
        return clusters
    users = check_positions(users, name="user_positions")
    # [n_uavs, n_users] distance table; argmin returns the lowest index on ties
    d = np.linalg.norm(uavs[:, None, :] - users[None, :, :], axis=-1)
    nearest = np.argmin(d, axis=0)
    covered = d[nearest, np.arange(len(users))] <= coverage_radius
    for k in np.nonzero(covered)[0]:
        clusters[nearest[k]].append(int(k))
    return clusters


def apply_action(pose: UavPose, action: int, step_size: float, area) -> tuple[UavPose, bool]:
    """Move one step; moves that would exit the area are nullified and flagged."""
    if not 0 <= int(action) < N_ACTIONS:
        raise InvalidActionError(f"unknown action id {action!r}")
    x_min, x_max, y_min, y_max = area
    delta = ACTION_DELTAS[int(action)] * step_size
    new_xy = pose.position[:2] + delta
    if not (x_min <= new_xy[0] <= x_max and y_min <= new_xy[1] <= y_max):
        return UavPose(pose.position.copy(), pose.arrived, int(action)), True
    pos = np.array([new_xy[0], new_xy[1], pose.position[2]])
    return UavPose(pos, pose.arrived, int(action)), False


def collision_count(positions, safety_distance: float) -> int:
    """Unordered pairs strictly closer than the safety distance (== is legal)."""
    pts = check_positions(positions, name="positions")
    n = len(pts)
    if n < 2:
        return 0
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = np.sum(diff * diff, axis=-1)
    iu = np.triu_indices(n, k=1)
    return int(np.sum(d2[iu] < safety_distance ** 2))


def min_steps(position, destination, step_size: float, metric: str = "manhattan") -> int:
    """Fewest slots to the destination.

    ``euclidean`` is ceil(straight-line distance / step); ``manhattan`` is
    ceil((|dx|+|dy|) / step), which is exact for the axis-aligned action set.
    """
    if step_size <= 0:
        raise ValidationError("step_size must be positive")
    p = np.asarray(position, dtype=np.float64)[:2]
    d = np.asarray(destination, dtype=np.float64)[:2]
    if metric == "euclidean":
        dist = float(np.linalg.norm(d - p))
    elif metric == "manhattan":
        dist = float(np.sum(np.abs(d - p)))
    else:
        raise ValidationError(f"unknown metric {metric!r}")
    # guard against 8.000000000000002 -> 9 on exactly-on-grid distances
    return int(np.ceil(dist / step_size - _GRID_TOL)) if dist > 0 else 0
