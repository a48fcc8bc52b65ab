"""Path-following error state, its continuous dynamics, and the Euler step.

State x = (x_e, y_e, z): along-track error [m], cross-track error [m] and
the bounded path variable z = 1/(omega+1).  Input u = (u, psi, u_tar):
surge reference [m/s], heading reference [rad], virtual-target velocity
[m/s].  The sway velocity v is the only disturbance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

from .angles import wrap_angle
from .exceptions import StateEscape
from .paths import PathDef, omega_of_z, sample_path, z_of_omega

# z is kept strictly positive so omega = 1/z - 1 stays defined; omega -> inf
# only asymptotically.
Z_MIN = 1e-6


@dataclass(frozen=True)
class GuidanceState:
    """Controlled state: PF errors plus the bounded path variable."""

    x_e: float  # m
    y_e: float  # m
    z: float    # dimensionless, in (0, 1]

    def __post_init__(self):
        if not (math.isfinite(self.x_e) and math.isfinite(self.y_e)):
            raise ValueError(f"non-finite PF errors ({self.x_e!r}, {self.y_e!r})")
        if not (0.0 < self.z <= 1.0):
            raise ValueError(f"z must lie in (0, 1], got {self.z!r}")


@dataclass(frozen=True)
class InputCmd:
    """Guidance command: surge and heading references plus target speed."""

    u: float      # m/s
    psi: float    # rad, wrapped to (-pi, pi] at module boundaries
    u_tar: float  # m/s

    def __post_init__(self):
        if not (math.isfinite(self.u) and math.isfinite(self.psi)
                and math.isfinite(self.u_tar)):
            raise ValueError(f"non-finite input command {self!r}")


@dataclass(frozen=True)
class VesselPose:
    """Planar vessel position and heading in the earth-fixed frame."""

    x: float    # m
    y: float    # m
    psi: float  # rad


def compute_errors(pose: VesselPose, omega: float, path: PathDef) -> Tuple[float, float]:
    """Along- and cross-track errors of the pose w.r.t. the virtual target.

    (x_e, y_e) = R2(phi_p)^T (x - x_p, y - y_p); the rotation is orthonormal
    so the Euclidean distance to the target is preserved.
    """
    pt = sample_path(path, omega)
    dx = pose.x - pt.x_p
    dy = pose.y - pt.y_p
    c = math.cos(pt.phi_p)
    s = math.sin(pt.phi_p)
    return (c * dx + s * dy, -s * dx + c * dy)


def dynamics(x: GuidanceState, u: InputCmd, v: float,
             path: PathDef) -> Tuple[float, float, float]:
    """Continuous-time error dynamics (dx_e/dt, dy_e/dt, dz/dt).

    The heading is consumed only through the wrapped difference psi - phi_p.
    """
    pt = sample_path(path, omega_of_z(x.z))
    dpsi = wrap_angle(u.psi - pt.phi_p)
    c = math.cos(dpsi)
    s = math.sin(dpsi)
    kw = pt.dphi_dw / pt.F  # tangent-angle rate per meter of target travel
    dxe = u.u * c - v * s + u.u_tar * (kw * x.y_e - 1.0)
    dye = u.u * s + v * c - u.u_tar * kw * x.x_e
    dz = -x.z * x.z * u.u_tar / pt.F
    return (dxe, dye, dz)


def euler_step(x: GuidanceState, u: InputCmd, v: float, dt: float,
               path: PathDef) -> GuidanceState:
    """One forward-Euler step of the error dynamics.

    The resulting z is clamped into (Z_MIN, 1].  Raises StateEscape if the
    step produces a non-finite state.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    dxe, dye, dz = dynamics(x, u, v, path)
    x_e = x.x_e + dt * dxe
    y_e = x.y_e + dt * dye
    z = x.z + dt * dz
    if not (math.isfinite(x_e) and math.isfinite(y_e) and math.isfinite(z)):
        raise StateEscape(f"non-finite state after Euler step from {x!r}")
    z = min(max(z, Z_MIN), 1.0)
    return GuidanceState(x_e, y_e, z)


def rollout(x0: GuidanceState, u_seq, v: float, dt: float, path: PathDef):
    """Chain euler_step over an input sequence; returns len(u_seq)+1 states."""
    states = [x0]
    x = x0
    for u in u_seq:
        x = euler_step(x, u, v, dt, path)
        states.append(x)
    return states


def pose_errors_state(pose: VesselPose, omega: float, path: PathDef) -> GuidanceState:
    """Measure the full guidance state from a world-frame pose and omega."""
    x_e, y_e = compute_errors(pose, omega, path)
    return GuidanceState(x_e, y_e, z_of_omega(omega))
