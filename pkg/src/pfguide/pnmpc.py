"""Linearized receding-horizon machinery and the single-QP guidance step.

The fast law linearizes the Euler prediction around the free response
(zero future input increments) so the horizon cost becomes one strictly
convex QP in the input increments:

    y_hat = y_free + G . delta_u

Two linear forced-response operators are available:

* "frozen": the block-Toeplitz matrix with blocks G_i = i * T_m * J, the
  instant-0 input Jacobian shifted down the horizon (assemble_G);
* "exact": the first-order sensitivity of the Euler recursion, with state
  and input Jacobians evaluated along the free response.

The exact operator is the default: its residual against the nonlinear
prediction is genuinely second order in the increments, which the frozen
form is not once state coupling matters.  The solvers and the sequential
outer loop in the nonlinear law both reuse this module's Jacobians.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING, List, Optional, Sequence, Tuple

import numpy as np

from .angles import unwrap_near, wrap_angle
from .errdyn import GuidanceState, InputCmd, dynamics, rollout
from .exceptions import QPFailure
from .los import InputConstraints, clamp_inputs, require_in_box
from .paths import PathDef, omega_of_z, sample_path
from .qp import QPProblem, QPSolution, solve_qp

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, typing only
    from .nmpc import NMPCConfig

_FD_STEP = 1e-6


@dataclass(frozen=True)
class JacobianBlock:
    """Partials of (dx_e, dy_e, dz) w.r.t. (u, psi, u_tar) at one point."""

    m: np.ndarray  # (3, 3)

    def __post_init__(self):
        if self.m.shape != (3, 3) or not np.all(np.isfinite(self.m)):
            raise ValueError("Jacobian block must be a finite 3x3 matrix")
        if self.m[2, 0] != 0.0 or self.m[2, 1] != 0.0:
            raise ValueError("dz/dt depends only on u_tar; rows must carry "
                             "structural zeros")


@dataclass(frozen=True)
class PredictionMatrix:
    """Lower-block-Toeplitz forced-response matrix with blocks i*T_m*J."""

    G: np.ndarray  # (3N, 3N)
    N: int
    T_m: float
    base: JacobianBlock


@dataclass
class SolveResult:
    """Receding-horizon solve output shared by the predictive laws."""

    u_seq: Tuple[InputCmd, ...]        # N feasible commands
    x_pred: Tuple[GuidanceState, ...]  # N+1 states, first is the measurement
    J_opt: float                       # nonlinear cost of u_seq
    iterations: int
    kkt_residual: float
    solve_time: float                  # s


def jacobian_block(x0: GuidanceState, u0: InputCmd, v0: float,
                   path: PathDef) -> JacobianBlock:
    """Analytic input Jacobian of the continuous error dynamics."""
    pt = sample_path(path, omega_of_z(x0.z))
    dpsi = wrap_angle(u0.psi - pt.phi_p)
    c = math.cos(dpsi)
    s = math.sin(dpsi)
    kw = pt.dphi_dw / pt.F
    return JacobianBlock(np.array([
        [c, -u0.u * s - v0 * c, kw * x0.y_e - 1.0],
        [s, u0.u * c - v0 * s, -kw * x0.x_e],
        [0.0, 0.0, -x0.z * x0.z / pt.F],
    ]))


def state_jacobian(x0: GuidanceState, u0: InputCmd, v0: float, path: PathDef,
                   step: float = _FD_STEP) -> np.ndarray:
    """State Jacobian of the continuous dynamics by central differences.

    The z column falls back to a second-order one-sided stencil when the
    central one would leave the (0, 1] domain.
    """

    def f(xe, ye, z):
        return np.array(dynamics(GuidanceState(xe, ye, z), u0, v0, path))

    J = np.empty((3, 3))
    J[:, 0] = (f(x0.x_e + step, x0.y_e, x0.z)
               - f(x0.x_e - step, x0.y_e, x0.z)) / (2.0 * step)
    J[:, 1] = (f(x0.x_e, x0.y_e + step, x0.z)
               - f(x0.x_e, x0.y_e - step, x0.z)) / (2.0 * step)
    z = x0.z
    if z + step <= 1.0 and z - step > 0.0:
        J[:, 2] = (f(x0.x_e, x0.y_e, z + step)
                   - f(x0.x_e, x0.y_e, z - step)) / (2.0 * step)
    elif z + step > 1.0:
        J[:, 2] = (3.0 * f(x0.x_e, x0.y_e, z)
                   - 4.0 * f(x0.x_e, x0.y_e, z - step)
                   + f(x0.x_e, x0.y_e, z - 2.0 * step)) / (2.0 * step)
    else:
        J[:, 2] = (-3.0 * f(x0.x_e, x0.y_e, z)
                   + 4.0 * f(x0.x_e, x0.y_e, z + step)
                   - f(x0.x_e, x0.y_e, z + 2.0 * step)) / (2.0 * step)
    return J


def assemble_G(J: JacobianBlock, N: int, T_m: float) -> PredictionMatrix:
    """Block-Toeplitz forced-response matrix: block (i, j) = (i-j+1)*T_m*J."""
    if N < 1:
        raise ValueError(f"horizon must be >= 1, got {N}")
    if T_m <= 0.0:
        raise ValueError(f"sampling time must be positive, got {T_m}")
    G = np.zeros((3 * N, 3 * N))
    for i in range(N):
        for j in range(i + 1):
            G[3 * i:3 * i + 3, 3 * j:3 * j + 3] = (i - j + 1) * T_m * J.m
    return PredictionMatrix(G, N, T_m, J)


def free_response(x_k: GuidanceState, u_prev: InputCmd, v_k: float,
                  cfg: "NMPCConfig", path: PathDef) -> List[GuidanceState]:
    """Prediction under zero future increments (u_prev held for N steps)."""
    require_in_box(u_prev, cfg.constraints)
    return rollout(x_k, [u_prev] * cfg.N, v_k, cfg.T_m, path)


def sensitivity_along(states: Sequence[GuidanceState],
                      u_seq: Sequence[InputCmd], v: float, T_m: float,
                      path: PathDef) -> np.ndarray:
    """Exact first-order sensitivity of the Euler rollout.

    Maps per-step absolute input perturbations (stacked, 3N) to the stacked
    predicted-state perturbations (states 1..N).  Jacobians are evaluated
    along the supplied trajectory.
    """
    N = len(u_seq)
    S = np.zeros((3 * N, 3 * N))
    eye = np.eye(3)
    for i in range(1, N + 1):
        x_prev = states[i - 1]
        u_prev = u_seq[i - 1]
        Ad = eye + T_m * state_jacobian(x_prev, u_prev, v, path)
        Bd = T_m * jacobian_block(x_prev, u_prev, v, path).m
        r = 3 * (i - 1)
        if i > 1:
            S[r:r + 3, :r] = Ad @ S[r - 3:r, :r]
        S[r:r + 3, r:r + 3] = Bd
    return S


@lru_cache(maxsize=8)
def _increment_lower(N: int) -> np.ndarray:
    """Cumulative-sum map from increments to absolute inputs (3N x 3N)."""
    return np.kron(np.tril(np.ones((N, N))), np.eye(3))


@lru_cache(maxsize=8)
def _increment_rows(N: int) -> Tuple[np.ndarray, list]:
    """Constraint rows for the increment decision vector.

    Returns (A, tags); tags name each row so per-solve bounds can be
    filled in: ("rate", j, comp) is an identity row on the increment,
    ("box", j, comp) a cumulative-sum row equal to u(j)[comp] - u_prev[comp].
    Heading has no box row (wrapped output always lies in the box) and the
    target speed has no rate row.
    """
    L = _increment_lower(N)
    rows = []
    tags = []
    for j in range(N):
        for comp in (0, 1):  # rate on u and psi
            e = np.zeros(3 * N)
            e[3 * j + comp] = 1.0
            rows.append(e)
            tags.append(("rate", j, comp))
        for comp in (0, 2):  # box on u and u_tar
            rows.append(L[3 * j + comp])
            tags.append(("box", j, comp))
    return np.vstack(rows), tags


def stack_inputs(u_seq: Sequence[InputCmd]) -> np.ndarray:
    out = np.empty(3 * len(u_seq))
    for j, u in enumerate(u_seq):
        out[3 * j:3 * j + 3] = (u.u, u.psi, u.u_tar)
    return out


def stack_states(states: Sequence[GuidanceState]) -> np.ndarray:
    out = np.empty(3 * len(states))
    for j, x in enumerate(states):
        out[3 * j:3 * j + 3] = (x.x_e, x.y_e, x.z)
    return out


def horizon_weights(cfg: "NMPCConfig") -> Tuple[np.ndarray, np.ndarray]:
    """State weight matrix W for stacked states 1..N and input weight vector.

    The stage-cost Q applies to predicted states 1..N-1; the terminal block
    carries lambda * P.
    """
    N = cfg.N
    W = np.zeros((3 * N, 3 * N))
    for j in range(N - 1):
        W[3 * j:3 * j + 3, 3 * j:3 * j + 3] = np.diag(cfg.Q)
    W[3 * (N - 1):, 3 * (N - 1):] = cfg.lam * cfg.terminal_weight()
    return W, np.tile(cfg.R, N)


def quadratic_in_decision(W: np.ndarray, r_vec: np.ndarray, M: np.ndarray,
                          T: np.ndarray, X0: np.ndarray,
                          Udev0: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Hessian and gradient of the horizon cost in a decision vector y,

    with X = X0 + M y and U - Uref = Udev0 + T y.
    """
    WM = W @ M
    RT = r_vec[:, None] * T
    H = 2.0 * (M.T @ WM + T.T @ RT)
    g = 2.0 * (WM.T @ X0 + RT.T @ Udev0)
    return 0.5 * (H + H.T), g


def reference_stack(cfg: "NMPCConfig", psi_branch: float) -> np.ndarray:
    """Stacked input reference with the heading reference moved onto the
    2*pi branch nearest psi_branch."""
    ref = np.array([cfg.u_ref.u, unwrap_near(cfg.u_ref.psi, psi_branch),
                    cfg.u_ref.u_tar])
    return np.tile(ref, cfg.N)


def snap_feasible(U: np.ndarray, u_prev: InputCmd,
                  c: InputConstraints) -> Tuple[InputCmd, ...]:
    """Chain-project a stacked input sequence into U and U_g exactly.

    The QP enforces the constraints to solver tolerance; this final pass
    replays the same projection the membership checks use so the returned
    commands satisfy them bit-exactly.
    """
    cmds = []
    prev = u_prev
    for j in range(U.shape[0] // 3):
        raw = InputCmd(float(U[3 * j]), wrap_angle(float(U[3 * j + 1])),
                       float(U[3 * j + 2]))
        prev = clamp_inputs(raw, prev, c)
        cmds.append(prev)
    return tuple(cmds)


def horizon_cost(x_k: GuidanceState, states: Sequence[GuidanceState],
                 u_seq: Sequence[InputCmd], cfg: "NMPCConfig") -> float:
    """Nonlinear horizon cost: sum of stage costs plus weighted terminal."""
    Q = cfg.Q
    R = cfg.R
    ref = cfg.u_ref
    J = 0.0
    for j, u in enumerate(u_seq):
        x = x_k if j == 0 else states[j]
        du = u.u - ref.u
        dpsi = wrap_angle(u.psi - ref.psi)
        dtar = u.u_tar - ref.u_tar
        J += (Q[0] * x.x_e * x.x_e + Q[1] * x.y_e * x.y_e + Q[2] * x.z * x.z
              + R[0] * du * du + R[1] * dpsi * dpsi + R[2] * dtar * dtar)
    xN = states[len(u_seq)]
    v = np.array([xN.x_e, xN.y_e, xN.z])
    return J + cfg.lam * float(v @ cfg.terminal_weight() @ v)


class PNMPCSolver:
    """One-QP linearized guidance step; owns constraint patterns and warm data.

    Instances are not safe for concurrent use; distinct instances are.
    """

    def __init__(self, cfg: "NMPCConfig", path: PathDef,
                 linearization: str = "exact"):
        if linearization not in ("exact", "frozen"):
            raise ValueError(f"unknown linearization {linearization!r}")
        cfg.terminal_weight()  # fail fast when unset
        self.cfg = cfg
        self.path = path
        self.linearization = linearization
        self._A_rows, self._tags = _increment_rows(cfg.N)
        self._L = _increment_lower(cfg.N)
        self._W, self._r_vec = horizon_weights(cfg)
        self._qp_warm: Optional[QPSolution] = None

    def _bounds(self, U0: np.ndarray, u_prev: InputCmd):
        c = self.cfg.constraints
        m = len(self._tags)
        lb = np.empty(m)
        ub = np.empty(m)
        for i, (kind, j, comp) in enumerate(self._tags):
            if kind == "rate":
                half = c.du_max if comp == 0 else c.dpsi_max
                lb[i], ub[i] = -half, half
            else:
                idx = 3 * j + comp
                base = u_prev.u if comp == 0 else u_prev.u_tar
                lo = 0.0 if comp == 0 else c.eps
                hi = c.u_max if comp == 0 else c.u_tar_max
                lb[i], ub[i] = lo - base, hi - base
        return lb, ub

    def solve(self, x_k: GuidanceState, v_k: float, u_prev: InputCmd,
              warm: Optional[SolveResult] = None,
              timer=time.perf_counter) -> SolveResult:
        t0 = timer()
        cfg = self.cfg
        require_in_box(u_prev, cfg.constraints)
        hold = [u_prev] * cfg.N
        free = rollout(x_k, hold, v_k, cfg.T_m, self.path)
        if self.linearization == "exact":
            S = sensitivity_along(free, hold, v_k, cfg.T_m, self.path)
            G = S @ self._L
        else:
            G = assemble_G(jacobian_block(x_k, u_prev, v_k, self.path),
                           cfg.N, cfg.T_m).G
        X0 = stack_states(free[1:])
        U0 = stack_inputs(hold)
        Udev0 = U0 - reference_stack(cfg, u_prev.psi)
        H, g = quadratic_in_decision(self._W, self._r_vec, G, self._L,
                                     X0, Udev0)
        lb, ub = self._bounds(U0, u_prev)
        qsol = solve_qp(QPProblem(H, g, self._A_rows, lb, ub),
                        warm=self._qp_warm)
        if not qsol.converged:
            raise QPFailure(
                f"QP stalled with KKT residual {qsol.kkt_residual:.3e}")
        self._qp_warm = qsol
        u_seq = snap_feasible(U0 + self._L @ qsol.x, u_prev, cfg.constraints)
        x_pred = rollout(x_k, u_seq, v_k, cfg.T_m, self.path)
        J_opt = horizon_cost(x_k, x_pred, u_seq, cfg)
        return SolveResult(u_seq, tuple(x_pred), J_opt, qsol.iterations,
                           qsol.kkt_residual, timer() - t0)


def pnmpc_solve(x_k: GuidanceState, v_k: float, u_prev: InputCmd,
                cfg: "NMPCConfig", path: PathDef,
                warm: Optional[SolveResult] = None,
                linearization: str = "exact") -> SolveResult:
    """One-shot convenience wrapper around PNMPCSolver."""
    return PNMPCSolver(cfg, path, linearization).solve(x_k, v_k, u_prev, warm)
