"""Clustered mmWave channel synthesis for both hops.

Uniform rectangular arrays with elements indexed row-major; the steering
phase of element (n_x, n_y) toward direction (elev, azim) is
2*pi*spacing*(n_x*u + n_y*v) with direction cosines u = sin(elev)*cos(azim)
and v = sin(elev)*sin(azim). Transmit-side vectors carry the positive phase
sign, receive-side vectors the negative one.

Channel matrices are built as conjugates of the matching analog-stage
steering so that a beam pointed at a path's direction collects the full
array gain (the analog stages in :mod:`uavlink.beamforming` use the
transmit/receive signs above).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import AngularSupport, Position3D, Scenario


@dataclass
class PathSet:
    """Angles and complex gains of one side of a clustered-path draw."""

    elev: np.ndarray
    azim: np.ndarray
    gains: np.ndarray

    def __post_init__(self):
        self.elev = np.atleast_1d(np.asarray(self.elev, dtype=float))
        self.azim = np.atleast_1d(np.asarray(self.azim, dtype=float))
        self.gains = np.atleast_1d(np.asarray(self.gains, dtype=complex))
        if not (self.elev.shape == self.azim.shape == self.gains.shape):
            raise ValueError("elev, azim and gains must have matching shapes")

    @property
    def size(self) -> int:
        return self.elev.size


@dataclass
class ChannelPair:
    """One realization of both hops at a fixed UAV position."""

    h1: np.ndarray          # N_r x N_T, BS -> UAV
    h2: np.ndarray          # K x N_t, UAV -> users (row per user)
    tau1: float
    tau2: np.ndarray
    uav_xy: np.ndarray
    first_link_tx: PathSet
    first_link_rx: PathSet
    user_paths: list[PathSet]


def direction_cosines(elev, azim) -> tuple[np.ndarray, np.ndarray]:
    """Map spherical angles to the (u, v) image coordinates of the array."""
    elev = np.asarray(elev, dtype=float)
    azim = np.asarray(azim, dtype=float)
    sin_e = np.sin(elev)
    return sin_e * np.cos(azim), sin_e * np.sin(azim)


def steering_from_cosines(u, v, rows: int, cols: int, spacing: float = 0.5,
                          direction: str = "transmit") -> np.ndarray:
    """Steering vectors evaluated directly at direction cosines (u, v).

    Returns shape (N,) for scalar inputs or (n, N) for length-n inputs,
    N = rows*cols, entries of unit magnitude (no normalization).
    """
    sign = _phase_sign(direction)
    scalar = np.ndim(u) == 0 and np.ndim(v) == 0
    u = np.atleast_1d(np.asarray(u, dtype=float))
    v = np.atleast_1d(np.asarray(v, dtype=float))
    phase_x = sign * 2j * math.pi * spacing * np.outer(u, np.arange(rows))
    phase_y = sign * 2j * math.pi * spacing * np.outer(v, np.arange(cols))
    ex = np.exp(phase_x)                     # (n, rows)
    ey = np.exp(phase_y)                     # (n, cols)
    out = (ex[:, :, None] * ey[:, None, :]).reshape(u.size, rows * cols)
    return out[0] if scalar else out


def steering_vector(elev: float, azim: float, rows: int, cols: int,
                    spacing: float = 0.5, direction: str = "transmit"
                    ) -> np.ndarray:
    """URA steering vector a(elev, azim), Kronecker of the two axis ramps."""
    u, v = direction_cosines(elev, azim)
    vec = steering_from_cosines(u, v, rows, cols, spacing, direction)
    return vec.reshape(rows * cols)


def steering_block(paths: PathSet, shape: tuple[int, int],
                   spacing: float = 0.5, direction: str = "transmit"
                   ) -> np.ndarray:
    """Stacked steering vectors of a path set, one row per path."""
    u, v = direction_cosines(paths.elev, paths.azim)
    return np.atleast_2d(
        steering_from_cosines(u, v, shape[0], shape[1], spacing, direction))


def _phase_sign(direction: str) -> float:
    if direction == "transmit":
        return 1.0
    if direction == "receive":
        return -1.0
    raise ValueError(f"direction must be 'transmit' or 'receive', got {direction!r}")


def pathloss_amplitude(tau, ref_db: float, exponent: float) -> np.ndarray | float:
    """Log-distance amplitude factor: power decays as tau**(-exponent)."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0.0):
        raise ValueError("distances must be positive")
    amp = 10.0 ** (-(ref_db + 10.0 * exponent * np.log10(tau)) / 20.0)
    return float(amp) if amp.ndim == 0 else amp


def draw_path_angles(rng: np.random.Generator, support: AngularSupport,
                     count: int) -> tuple[np.ndarray, np.ndarray]:
    elo, ehi = support.elev_interval
    alo, ahi = support.azim_interval
    elev = rng.uniform(elo, ehi, size=count)
    azim = rng.uniform(alo, ahi, size=count)
    return elev, azim


def draw_gains(rng: np.random.Generator, count: int) -> np.ndarray:
    """Circularly symmetric complex gains, total mean power 1."""
    scale = math.sqrt(1.0 / (2 * count))
    return scale * (rng.standard_normal(count) + 1j * rng.standard_normal(count))


def first_link_matrix(tx: PathSet, rx: PathSet, rx_shape: tuple[int, int],
                      tx_shape: tuple[int, int], spacing: float = 0.5,
                      amplitude: float = 1.0) -> np.ndarray:
    """Assemble the BS->UAV matrix from drawn paths.

    Receive-side columns use the transmit phase sign and transmit-side rows
    the receive sign: each is the conjugate of the analog stage that will
    point at it, which is what makes the RF beams matched filters.
    """
    a_rx = steering_block(rx, rx_shape, spacing, "transmit")   # L x N_r
    a_tx = steering_block(tx, tx_shape, spacing, "receive")    # L x N_T
    return amplitude * (a_rx.T * tx.gains) @ a_tx


def second_link_rows(user_paths: list[PathSet], tx_shape: tuple[int, int],
                     spacing: float = 0.5, amplitudes=None) -> np.ndarray:
    """Stack the UAV->user MISO rows, one per user.

    Rows are conjugates of transmit-sign steering (receive sign) so that
    h_k^T f is coherent when f points at user k's paths.
    """
    k = len(user_paths)
    n_t = tx_shape[0] * tx_shape[1]
    amplitudes = np.ones(k) if amplitudes is None else np.asarray(amplitudes, float)
    h2 = np.empty((k, n_t), dtype=complex)
    for i, paths in enumerate(user_paths):
        block = steering_block(paths, tx_shape, spacing, "receive")
        h2[i] = amplitudes[i] * (paths.gains @ block)
    return h2


def draw_first_link(scenario: Scenario, rng: np.random.Generator,
                    uav_xy=None, angle_model: str = "fixed"
                    ) -> tuple[np.ndarray, PathSet, PathSet]:
    """Draw one first-hop realization at the given UAV position."""
    uav_xy = _resolve_xy(scenario, uav_xy)
    tx_sup, rx_sup = first_link_supports(scenario, uav_xy, angle_model)
    n_paths = scenario.paths_first_link
    tx_elev, tx_azim = draw_path_angles(rng, tx_sup, n_paths)
    rx_elev, rx_azim = draw_path_angles(rng, rx_sup, n_paths)
    gains = draw_gains(rng, n_paths)
    _assert_in_support(tx_elev, tx_azim, tx_sup)
    _assert_in_support(rx_elev, rx_azim, rx_sup)
    tx = PathSet(tx_elev, tx_azim, gains)
    rx = PathSet(rx_elev, rx_azim, gains)
    tau1 = float(np.linalg.norm(
        np.array([uav_xy[0], uav_xy[1], scenario.uav.z]) - scenario.bs.as_array()))
    amp = pathloss_amplitude(tau1, scenario.ref_pathloss_db, scenario.pathloss_exp)
    h1 = first_link_matrix(tx, rx, scenario.uav_rx_array, scenario.bs_array,
                           scenario.element_spacing, amp)
    return h1, tx, rx


def draw_second_link(scenario: Scenario, rng: np.random.Generator,
                     users: list[Position3D], uav_xy=None,
                     angle_model: str = "fixed"
                     ) -> tuple[np.ndarray, list[PathSet]]:
    """Draw the UAV->user rows for every user at the given UAV position."""
    uav_xy = _resolve_xy(scenario, uav_xy)
    q = scenario.paths_second_link
    supports = group_tx_supports(scenario, users, uav_xy, angle_model)
    user_paths = []
    for k in range(scenario.num_users):
        sup = supports[scenario.group_of_user(k)]
        elev, azim = draw_path_angles(rng, sup, q)
        gains = draw_gains(rng, q)
        _assert_in_support(elev, azim, sup)
        user_paths.append(PathSet(elev, azim, gains))
    uav_pos = np.array([uav_xy[0], uav_xy[1], scenario.uav.z])
    tau2 = np.array([np.linalg.norm(uav_pos - u.as_array()) for u in users])
    amp2 = pathloss_amplitude(tau2, scenario.ref_pathloss_db, scenario.pathloss_exp)
    h2 = second_link_rows(user_paths, scenario.uav_tx_array,
                          scenario.element_spacing, amp2)
    return h2, user_paths


def draw_channel_pair(scenario: Scenario, rng: np.random.Generator,
                      users: list[Position3D] | None = None, uav_xy=None,
                      angle_model: str = "fixed") -> ChannelPair:
    users = users if users is not None else scenario.users
    if users is None:
        raise ValueError("scenario has no fixed users; pass the realized ones")
    uav_xy = _resolve_xy(scenario, uav_xy)
    h1, tx, rx = draw_first_link(scenario, rng, uav_xy, angle_model)
    h2, user_paths = draw_second_link(scenario, rng, users, uav_xy, angle_model)
    uav_pos = np.array([uav_xy[0], uav_xy[1], scenario.uav.z])
    tau1 = float(np.linalg.norm(uav_pos - scenario.bs.as_array()))
    tau2 = np.array([np.linalg.norm(uav_pos - u.as_array()) for u in users])
    return ChannelPair(h1=h1, h2=h2, tau1=tau1, tau2=tau2,
                       uav_xy=np.asarray(uav_xy, dtype=float),
                       first_link_tx=tx, first_link_rx=rx,
                       user_paths=user_paths)


def first_link_supports(scenario: Scenario, uav_xy, angle_model: str
                        ) -> tuple[AngularSupport, AngularSupport]:
    if angle_model == "fixed":
        return scenario.first_link_tx_support, scenario.first_link_rx_support
    if angle_model == "geometric":
        uav_pos = Position3D(float(uav_xy[0]), float(uav_xy[1]), scenario.uav.z)
        tx = recenter_support(scenario.first_link_tx_support,
                              scenario.bs, uav_pos)
        rx = recenter_support(scenario.first_link_rx_support,
                              uav_pos, scenario.bs)
        return tx, rx
    raise ValueError(f"unknown angle model {angle_model!r}")


def group_tx_supports(scenario: Scenario, users: list[Position3D], uav_xy,
                      angle_model: str) -> list[AngularSupport]:
    if angle_model == "fixed":
        return list(scenario.group_supports)
    if angle_model == "geometric":
        uav_pos = Position3D(float(uav_xy[0]), float(uav_xy[1]), scenario.uav.z)
        supports = []
        start = 0
        for g, size in enumerate(scenario.group_sizes):
            members = users[start:start + size]
            start += size
            centroid = Position3D(
                float(np.mean([u.x for u in members])),
                float(np.mean([u.y for u in members])),
                float(np.mean([u.z for u in members])))
            supports.append(recenter_support(scenario.group_supports[g],
                                             uav_pos, centroid))
        return supports
    raise ValueError(f"unknown angle model {angle_model!r}")


def recenter_support(base: AngularSupport, src: Position3D, dst: Position3D
                     ) -> AngularSupport:
    """Move a support's means onto the src->dst line of sight, keeping spreads."""
    delta = dst.as_array() - src.as_array()
    r = float(np.linalg.norm(delta))
    if r == 0.0:
        raise ValueError("cannot recenter a support on coincident nodes")
    eps = 1e-6
    elev = math.acos(max(-1.0, min(1.0, delta[2] / r)))
    elev = min(max(elev, base.spread_elev + eps), math.pi - base.spread_elev - eps)
    azim = math.atan2(delta[1], delta[0]) % (2.0 * math.pi)
    azim = min(max(azim, base.spread_azim + eps),
               2.0 * math.pi - base.spread_azim - eps)
    return AngularSupport(elev, azim, base.spread_elev, base.spread_azim)


def save_channel_pair(pair: ChannelPair, path: str, seed_key=None) -> None:
    """Persist one realization (matrices plus path metadata) to .npz."""
    payload = {
        "h1": pair.h1, "h2": pair.h2,
        "tau1": np.array(pair.tau1), "tau2": pair.tau2,
        "uav_xy": pair.uav_xy,
        "tx_elev": pair.first_link_tx.elev, "tx_azim": pair.first_link_tx.azim,
        "rx_elev": pair.first_link_rx.elev, "rx_azim": pair.first_link_rx.azim,
        "gains1": pair.first_link_tx.gains,
        "seed_key": np.array(-1 if seed_key is None else seed_key),
    }
    for k, paths in enumerate(pair.user_paths):
        payload[f"u{k}_elev"] = paths.elev
        payload[f"u{k}_azim"] = paths.azim
        payload[f"u{k}_gains"] = paths.gains
    np.savez(path, **payload)


def load_channel_pair(path: str) -> ChannelPair:
    data = np.load(path)
    gains1 = data["gains1"]
    user_paths = []
    k = 0
    while f"u{k}_elev" in data:
        user_paths.append(PathSet(data[f"u{k}_elev"], data[f"u{k}_azim"],
                                  data[f"u{k}_gains"]))
        k += 1
    return ChannelPair(
        h1=data["h1"], h2=data["h2"], tau1=float(data["tau1"]),
        tau2=data["tau2"], uav_xy=data["uav_xy"],
        first_link_tx=PathSet(data["tx_elev"], data["tx_azim"], gains1),
        first_link_rx=PathSet(data["rx_elev"], data["rx_azim"], gains1),
        user_paths=user_paths)


def _resolve_xy(scenario: Scenario, uav_xy) -> np.ndarray:
    if uav_xy is None:
        return np.array([scenario.uav.x, scenario.uav.y])
    return np.asarray(uav_xy, dtype=float)


def _assert_in_support(elev: np.ndarray, azim: np.ndarray,
                       support: AngularSupport) -> None:
    elo, ehi = support.elev_interval
    alo, ahi = support.azim_interval
    assert np.all((elev >= elo) & (elev <= ehi)), "elevation left its support"
    assert np.all((azim >= alo) & (azim <= ahi)), "azimuth left its support"
