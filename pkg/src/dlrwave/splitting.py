"""Full-rank Strang splitting for the semi-discrete damped wave system.

One step applies, in this order,

    x-flow(tau/2), y-flow(tau/2), nonlinear flow(tau), y-flow(tau/2), x-flow(tau/2)

where the two linear flows are exact (precomputed matrix exponentials) and
the nonlinear flow is itself a drift/kick Strang composition.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
import logging
from typing import Callable, Literal, Optional

import numpy as np

from .linalg import DimensionError, as_matrix, expm
from .model import GridSpec, ModelParams, NonlinearPair, PairState, TimeGrid, sine_basis

__all__ = [
    "BlowUpError",
    "FlowOperator",
    "generator",
    "build_flow",
    "strang_flows",
    "flow_x",
    "flow_y",
    "kick",
    "flow_F",
    "strang_step",
    "integrate_fullrank",
]

log = logging.getLogger(__name__)

Direction = Literal["x", "y"]
Observer = Callable[[int, float, object], None]


class BlowUpError(FloatingPointError):
    """The numerical solution stopped being finite."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite values after step {step}")


@dataclass(frozen=True, eq=False)
class FlowOperator:
    """Exponential of one linear subflow generator over a fixed step.

    For ``direction == "x"`` the operator acts from the left on the stacked
    state ``[P; Q]``; for ``"y"`` it acts from the right on ``[P, Q]``.
    """

    direction: str
    step: float
    B: np.ndarray

    @property
    def n(self) -> int:
        return self.B.shape[0] // 2

    @cached_property
    def B11(self):
        return np.ascontiguousarray(self.B[: self.n, : self.n])

    @cached_property
    def B12(self):
        return np.ascontiguousarray(self.B[: self.n, self.n:])

    @cached_property
    def B21(self):
        return np.ascontiguousarray(self.B[self.n:, : self.n])

    @cached_property
    def B22(self):
        return np.ascontiguousarray(self.B[self.n:, self.n:])


def _block_coefficients(params: ModelParams, lam, direction: str):
    """Entries of the 2x2 generator for a (scalar or array) eigenvalue `lam`."""
    omega = params.omega[0] if direction == "x" else params.omega[1]
    a = -params.alpha * lam - 0.5 * params.delta
    b = -params.beta * lam - 0.5 * params.gamma
    if direction == "x":
        return np.zeros_like(a), omega + np.zeros_like(a), a, b
    return np.zeros_like(a), a, omega + np.zeros_like(a), b


def generator(direction: Direction, params: ModelParams, A) -> np.ndarray:
    """Dense block generator of the x- or y-subflow."""
    A = as_matrix(A)
    n = A.shape[0]
    eye = np.eye(n)
    omega = params.omega[0] if direction == "x" else params.omega[1]
    stiff = -params.alpha * A - 0.5 * params.delta * eye
    damp = -params.beta * A - 0.5 * params.gamma * eye
    if direction == "x":
        return np.block([[np.zeros((n, n)), omega * eye], [stiff, damp]])
    if direction == "y":
        return np.block([[np.zeros((n, n)), stiff], [omega * eye, damp]])
    raise ValueError(f"direction must be 'x' or 'y', got {direction!r}")


def _expm_2x2(m11, m12, m21, m22, tau):
    """Closed-form ``exp(tau * M)`` for a batch of real 2x2 matrices."""
    m11, m12, m21, m22 = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (m11, m12, m21, m22)))
    mu = 0.5 * (m11 + m22)
    det = m11 * m22 - m12 * m21
    disc = mu * mu - det
    s = np.sqrt(np.abs(disc))
    x = np.abs(tau) * s

    C = np.empty_like(mu)
    Sf = np.empty_like(mu)
    grow = np.exp(tau * mu)

    osc = disc < 0
    C[osc] = grow[osc] * np.cos(tau * s[osc])
    Sf[osc] = grow[osc] * np.sin(tau * s[osc]) / s[osc]

    small = ~osc & (x <= 1.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(s > 0, np.sinh(tau * s) / np.where(s > 0, s, 1.0), tau)
    C[small] = grow[small] * np.cosh(tau * s[small])
    Sf[small] = grow[small] * ratio[small]

    # well separated real eigenvalues: form each exponential directly
    big = ~osc & (x > 1.0)
    if big.any():
        mb, sb, db = mu[big], s[big], det[big]
        sgn = np.where(mb < 0, -1.0, 1.0)
        far = mb + sgn * sb
        near = db / far
        e_far, e_near = np.exp(tau * far), np.exp(tau * near)
        C[big] = 0.5 * (e_far + e_near)
        Sf[big] = (e_far - e_near) / (far - near)

    return (
        C + Sf * (m11 - mu),
        Sf * m12,
        Sf * m21,
        C + Sf * (m22 - mu),
    )


def _tridiagonal_toeplitz(A: np.ndarray):
    """Return ``(diag, offdiag)`` if `A` is symmetric tridiagonal Toeplitz, else None."""
    n = A.shape[0]
    d = A[0, 0]
    e = A[0, 1] if n > 1 else 0.0
    ref = np.diag(np.full(n, d))
    if n > 1:
        ref += e * (np.eye(n, k=1) + np.eye(n, k=-1))
    return (d, e) if np.array_equal(A, ref) else None


def build_flow(
    direction: Direction,
    tau: float,
    params: ModelParams,
    A,
    method: Literal["fast", "pade"] = "fast",
) -> FlowOperator:
    """Precompute the exact linear flow ``exp(tau * G)`` of one direction.

    The fast path diagonalizes `A` (by the sine basis when `A` is
    tridiagonal Toeplitz, otherwise by a symmetric eigensolver), which turns
    the generator into independent 2x2 blocks with closed-form exponentials.
    ``method="pade"`` exponentiates the full block generator instead.
    """
    if direction not in ("x", "y"):
        raise ValueError(f"direction must be 'x' or 'y', got {direction!r}")
    A = as_matrix(A)
    n = A.shape[0]
    if A.shape != (n, n):
        raise DimensionError(f"{direction}-operator must be square, got {A.shape}")
    tau = float(tau)

    if method == "pade" or not np.allclose(A, A.T, rtol=0.0, atol=0.0):
        return FlowOperator(direction, tau, expm(tau * generator(direction, params, A)))
    if method != "fast":
        raise ValueError(f"unknown method {method!r}")

    toeplitz = _tridiagonal_toeplitz(A)
    if toeplitz is not None:
        d, e = toeplitz
        theta = np.arange(1, n + 1) * np.pi / (n + 1)
        lam = (d + 2.0 * e) - 4.0 * e * np.sin(0.5 * theta) ** 2
        Phi = sine_basis(n)
    else:
        lam, Phi = np.linalg.eigh(A)

    e11, e12, e21, e22 = _expm_2x2(*_block_coefficients(params, lam, direction), tau)
    blocks = [[(Phi * e) @ Phi.T for e in (e11, e12)], [(Phi * e) @ Phi.T for e in (e21, e22)]]
    return FlowOperator(direction, tau, np.block(blocks))


@lru_cache(maxsize=64)
def strang_flows(grid: GridSpec, params: ModelParams, tau: float) -> tuple[FlowOperator, FlowOperator]:
    """Half-step x and y flows for step size `tau`, cached per configuration."""
    A_x, A_y = grid.laplacians()
    return build_flow("x", tau / 2, params, A_x), build_flow("y", tau / 2, params, A_y)


def _check_state(state: PairState, n_rows: int, n_cols: int) -> None:
    if state.P.shape != (n_rows, n_cols) or state.Q.shape != (n_rows, n_cols):
        raise DimensionError(
            f"state shapes P{state.P.shape}, Q{state.Q.shape} do not match ({n_rows}, {n_cols})"
        )


def flow_x(state: PairState, B: FlowOperator) -> PairState:
    """Left action of an x-flow on ``[P; Q]``."""
    if B.direction != "x":
        raise ValueError("flow_x needs an x-direction operator")
    _check_state(state, B.n, state.P.shape[1])
    P, Q = state
    return PairState(B.B11 @ P + B.B12 @ Q, B.B21 @ P + B.B22 @ Q)


def flow_y(state: PairState, B: FlowOperator) -> PairState:
    """Right action of a y-flow on ``[P, Q]``."""
    if B.direction != "y":
        raise ValueError("flow_y needs a y-direction operator")
    _check_state(state, state.P.shape[0], B.n)
    P, Q = state
    return PairState(P @ B.B11 + Q @ B.B21, P @ B.B12 + Q @ B.B22)


def kick(P, Q, F: NonlinearPair, dt: float, substeps: int = 1) -> np.ndarray:
    """Advance ``Q' = f(P) + g(Q)`` over `dt` with `P` frozen.

    Exact when ``g`` vanishes; otherwise classical RK4 with `substeps` steps.
    """
    fP = F.f(P)
    if F.g_is_zero:
        return Q + dt * fP
    g = F.g
    h = dt / substeps
    for _ in range(substeps):
        k1 = fP + g(Q)
        k2 = fP + g(Q + 0.5 * h * k1)
        k3 = fP + g(Q + 0.5 * h * k2)
        k4 = fP + g(Q + h * k3)
        Q = Q + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return Q


def flow_F(state: PairState, tau: float, omega3: float, F: NonlinearPair, substeps: int = 1) -> PairState:
    """Nonlinear subflow: half kick, full drift ``P += tau*omega3*Q``, half kick."""
    P, Q = state
    if P.shape != Q.shape:
        raise DimensionError(f"P{P.shape} and Q{Q.shape} differ in shape")
    Q_half = kick(P, Q, F, 0.5 * tau, substeps)
    P1 = P + (tau * omega3) * Q_half
    Q1 = kick(P1, Q_half, F, 0.5 * tau, substeps)
    return PairState(P1, Q1)


def strang_step(
    state: PairState,
    flows: tuple[FlowOperator, FlowOperator],
    tau: float,
    params: ModelParams,
    F: NonlinearPair,
    substeps: int = 1,
) -> PairState:
    """One palindromic Strang step of size `tau`."""
    Bx, By = flows
    if not (np.isclose(Bx.step, tau / 2, rtol=1e-12, atol=0) and np.isclose(By.step, tau / 2, rtol=1e-12, atol=0)):
        raise ValueError(f"flows were built for steps {Bx.step}, {By.step}, expected {tau / 2}")
    state = flow_x(state, Bx)
    state = flow_y(state, By)
    state = flow_F(state, tau, params.omega[2], F, substeps)
    state = flow_y(state, By)
    return flow_x(state, Bx)


def integrate_fullrank(
    state0: PairState,
    grid: GridSpec,
    time: TimeGrid,
    params: ModelParams,
    F: NonlinearPair,
    substeps: int = 1,
    observer: Optional[Observer] = None,
) -> PairState:
    """Take ``time.M`` full-rank Strang steps from `state0`.

    `observer`, when given, is called as ``observer(k, t_k, state)`` for
    k = 0..M. Raises `BlowUpError` as soon as a non-finite value appears.
    """
    state = PairState(as_matrix(state0.P, "P0"), as_matrix(state0.Q, "Q0"))
    _check_state(state, *grid.shape)
    tau = time.tau
    flows = strang_flows(grid, params, tau)
    if observer is not None:
        observer(0, 0.0, state)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, time.M + 1):
            state = strang_step(state, flows, tau, params, F, substeps)
            if not state.is_finite():
                raise BlowUpError(k)
            if observer is not None:
                observer(k, time.t(k), state)
    return state
