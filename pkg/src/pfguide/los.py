"""Surge-guided line-of-sight guidance and shared input saturation.

SGLOS shapes all three commands from the PF errors:

    u     = k1 sqrt(y_e^2 + delta^2)
    psi   = phi_p - arctan(y_e / delta)
    u_tar = k2 x_e + u cos(psi - phi_p)

It doubles as the terminal control law of the predictive laws.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

from .angles import wrap_angle
from .errdyn import GuidanceState, InputCmd
from .exceptions import InfeasibleStart
from .paths import PathDef, omega_of_z, sample_path


@dataclass(frozen=True)
class SGLOSParams:
    k1: float = 0.3     # 1/s, surge shaping gain
    k2: float = 0.8     # 1/s, along-track gain on the target speed
    delta: float = 0.5  # m, lookahead distance

    def __post_init__(self):
        if self.k1 <= 0.0 or self.k2 <= 0.0 or self.delta <= 0.0:
            raise ValueError(f"SGLOS gains must be positive, got {self!r}")


@dataclass(frozen=True)
class InputConstraints:
    """Box set on (u, psi, u_tar) and rate set on per-step increments."""

    eps: float = 0.01            # m/s, lower bound on u_tar (forward motion)
    u_max: float = 0.225         # m/s
    u_tar_max: float = 0.75      # m/s
    du_max: float = 0.05         # m/s per guidance step
    dpsi_max: float = math.pi / 4.0  # rad per guidance step

    def __post_init__(self):
        if not (0.0 < self.eps < self.u_tar_max):
            raise ValueError(f"need 0 < eps < u_tar_max, got {self!r}")
        if self.u_max <= 0.0 or self.du_max <= 0.0 or self.dpsi_max <= 0.0:
            raise ValueError(f"bounds must be positive, got {self!r}")


def sglos(x: GuidanceState, path: PathDef, p: SGLOSParams,
          u_current: Optional[float] = None) -> InputCmd:
    """Raw (unsaturated) SGLOS command at the given state.

    The surge entering the u_tar component is the law's own freshly
    computed surge command unless a measured value is passed explicitly
    via u_current.
    """
    pt = sample_path(path, omega_of_z(x.z))
    u_cmd = p.k1 * math.sqrt(x.y_e * x.y_e + p.delta * p.delta)
    los_angle = math.atan(x.y_e / p.delta)
    psi_cmd = wrap_angle(pt.phi_p - los_angle)
    u_third = u_cmd if u_current is None else u_current
    u_tar = p.k2 * x.x_e + u_third * math.cos(-los_angle)
    return InputCmd(u_cmd, psi_cmd, u_tar)


def _clip(value: float, lo: float, hi: float) -> float:
    # Selection, not arithmetic: the result is bit-identical to one of the
    # three operands, which keeps the projection idempotent.
    return lo if value < lo else hi if value > hi else value


def _rate_project(u: float, psi: float, prev: InputCmd,
                  c: InputConstraints) -> Tuple[float, float]:
    """Project (u, psi) into the rate set around prev.

    psi must already be wrapped.  Values inside the set pass through
    bit-exactly; clipped values are rebuilt from the same endpoint
    expressions the membership test uses, so projection and test agree
    with no tolerance.
    """
    du = u - prev.u
    if du > c.du_max:
        u = prev.u + c.du_max
    elif du < -c.du_max:
        u = prev.u - c.du_max
    dpsi = wrap_angle(psi - prev.psi)
    if dpsi > c.dpsi_max:
        psi = wrap_angle(prev.psi + c.dpsi_max)
    elif dpsi < -c.dpsi_max:
        psi = wrap_angle(prev.psi - c.dpsi_max)
    return u, psi


def clamp_inputs(raw: InputCmd, prev: InputCmd, c: InputConstraints) -> InputCmd:
    """Project a raw command into the box set and the rate set from prev.

    Rate clamp first, then box clamp: prev lies in the box, so pulling a
    rate-feasible value toward the box can only shrink the increment and
    the result is jointly feasible.  Heading increments are measured on
    the wrapped difference so a +pi/-pi crossing is not treated as a full
    turn.  The projection is a bitwise fixed point: clamping an already
    clamped command returns it unchanged.
    """
    u, psi = _rate_project(raw.u, wrap_angle(raw.psi), prev, c)
    u = _clip(u, 0.0, c.u_max)
    u_tar = _clip(raw.u_tar, c.eps, c.u_tar_max)
    return InputCmd(u, psi, u_tar)


def in_box(cmd: InputCmd, c: InputConstraints) -> bool:
    """Membership of the box set, exact float comparisons."""
    return (0.0 <= cmd.u <= c.u_max
            and -math.pi <= cmd.psi <= math.pi
            and c.eps <= cmd.u_tar <= c.u_tar_max)


def in_rate(cmd: InputCmd, prev: InputCmd, c: InputConstraints) -> bool:
    """Membership of the rate set: cmd is a fixed point of the projection."""
    u, psi = _rate_project(cmd.u, wrap_angle(cmd.psi), prev, c)
    return u == cmd.u and psi == cmd.psi


def require_in_box(cmd: InputCmd, c: InputConstraints) -> None:
    if not in_box(cmd, c):
        raise InfeasibleStart(f"previous input {cmd!r} outside the box set")
