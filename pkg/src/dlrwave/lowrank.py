"""Fixed-rank projector-splitting version of the Strang scheme.

Displacement and velocity are carried as separate low-rank factors
``P = U S V^T`` (rank r_P) and ``Q = R Sigma W^T`` (rank r_Q). Each subflow
of the full-rank splitting gets a rank-preserving counterpart:

* linear x/y flows: apply the exact flow to the factors, then re-truncate
  with one QR sweep against the previous co-range (`dlr_retruncate`);
* drift ``P += tau*omega*Q``: one K-S-L sweep with a constant increment
  (`dlr_fl`);
* kick ``Q' = f(P) + g(Q)``: one K-S-L sweep, with exact increments when
  ``g`` vanishes and RK4 substeps otherwise (`dlr_fn`).

Factor bases are never compared entrywise across code paths since the QR
sign convention does not fix them; compare `LowRankFactor.dense` instead.
"""
from __future__ import annotations

from dataclasses import dataclass
import logging
from typing import NamedTuple, Optional

import numpy as np

from .linalg import DimensionError, LowRankFactor, NonFiniteError, thin_qr, truncated_svd
from .model import GridSpec, ModelParams, NonlinearPair, PairState, TimeGrid
from .splitting import BlowUpError, FlowOperator, Observer, strang_flows

__all__ = [
    "LowRankPair",
    "FactoredSum",
    "truncate_state",
    "dlr_retruncate",
    "lowrank_flow_x",
    "lowrank_flow_y",
    "dlr_fl",
    "dlr_fn",
    "lowrank_flow_F",
    "lowrank_strang_step",
    "lowrank_integrate",
]

log = logging.getLogger(__name__)


class LowRankPair(NamedTuple):
    P: LowRankFactor
    Q: LowRankFactor

    def dense(self) -> PairState:
        return PairState(self.P.dense(), self.Q.dense())

    @property
    def ranks(self) -> tuple[int, int]:
        return self.P.rank, self.Q.rank

    def is_finite(self) -> bool:
        return self.P.is_finite() and self.Q.is_finite()


@dataclass(frozen=True)
class FactoredSum:
    """Sum of products ``L_i C_i R_i^T`` kept in factored form."""

    terms: tuple[tuple[np.ndarray, np.ndarray, np.ndarray], ...]

    def __post_init__(self):
        if not self.terms:
            raise ValueError("FactoredSum needs at least one term")
        m, n = self.terms[0][0].shape[0], self.terms[0][2].shape[0]
        for L, C, R in self.terms:
            if L.shape[0] != m or R.shape[0] != n or C.shape != (L.shape[1], R.shape[1]):
                raise DimensionError("FactoredSum terms have inconsistent shapes")

    @property
    def shape(self) -> tuple[int, int]:
        return self.terms[0][0].shape[0], self.terms[0][2].shape[0]

    def __matmul__(self, X: np.ndarray) -> np.ndarray:
        return sum(L @ (C @ (R.T @ X)) for L, C, R in self.terms)

    def rmatmul_t(self, Y: np.ndarray) -> np.ndarray:
        """``self.T @ Y`` without forming the transpose densely."""
        return sum(R @ (C.T @ (L.T @ Y)) for L, C, R in self.terms)

    def dense(self) -> np.ndarray:
        return sum((L @ C) @ R.T for L, C, R in self.terms)


def truncate_state(state: PairState, r_P: int, r_Q: Optional[int] = None) -> LowRankPair:
    """Best rank-(r_P, r_Q) approximation of a dense pair state."""
    r_Q = r_P if r_Q is None else r_Q
    return LowRankPair(truncated_svd(state.P, r_P), truncated_svd(state.Q, r_Q))


def dlr_retruncate(V0: np.ndarray, delta) -> LowRankFactor:
    """Re-truncate `delta` to the rank of `V0` by one QR sweep.

    ``U1 = qr(delta @ V0)``, then ``V1 S1^T = qr(delta^T @ U1)``. `delta` is a
    `FactoredSum` or, for checking, a dense array.
    """
    m, n = delta.shape
    r = V0.shape[1]
    if V0.shape[0] != n:
        raise DimensionError(f"basis has {V0.shape[0]} rows, delta has {n} columns")
    if r > min(m, n):
        raise DimensionError(f"rank {r} exceeds min{(m, n)}")
    U1 = thin_qr(delta @ V0).Q
    L = delta.rmatmul_t(U1) if isinstance(delta, FactoredSum) else delta.T @ U1
    V1, S1t, _ = thin_qr(L)
    return LowRankFactor(U1, S1t.T, V1)


def _check_pair(pair: LowRankPair, n_rows: int, n_cols: int) -> None:
    for X in pair:
        if X.shape != (n_rows, n_cols):
            raise DimensionError(f"factor shape {X.shape} does not match ({n_rows}, {n_cols})")


def lowrank_flow_x(pair: LowRankPair, B: FlowOperator, dense: bool = False) -> LowRankPair:
    """Low-rank x-flow: ``[D1; D2] = B [P; Q]``, re-truncated factor by factor.

    ``dense=True`` forms ``D1``, ``D2`` as full matrices; this is a checking
    path and gives the same result up to rounding.
    """
    if B.direction != "x":
        raise ValueError("lowrank_flow_x needs an x-direction operator")
    P, Q = pair
    _check_pair(pair, B.n, P.shape[1])
    if dense:
        Pd, Qd = P.dense(), Q.dense()
        d1 = B.B11 @ Pd + B.B12 @ Qd
        d2 = B.B21 @ Pd + B.B22 @ Qd
    else:
        d1 = FactoredSum(((B.B11 @ P.U, P.S, P.V), (B.B12 @ Q.U, Q.S, Q.V)))
        d2 = FactoredSum(((B.B21 @ P.U, P.S, P.V), (B.B22 @ Q.U, Q.S, Q.V)))
    return LowRankPair(dlr_retruncate(P.V, d1), dlr_retruncate(Q.V, d2))


def lowrank_flow_y(pair: LowRankPair, B: FlowOperator, dense: bool = False) -> LowRankPair:
    """Low-rank y-flow: ``[D1, D2] = [P, Q] B``, re-truncated factor by factor."""
    if B.direction != "y":
        raise ValueError("lowrank_flow_y needs a y-direction operator")
    P, Q = pair
    _check_pair(pair, P.shape[0], B.n)
    if dense:
        Pd, Qd = P.dense(), Q.dense()
        d1 = Pd @ B.B11 + Qd @ B.B21
        d2 = Pd @ B.B12 + Qd @ B.B22
    else:
        d1 = FactoredSum(((P.U, P.S, B.B11.T @ P.V), (Q.U, Q.S, B.B21.T @ Q.V)))
        d2 = FactoredSum(((P.U, P.S, B.B12.T @ P.V), (Q.U, Q.S, B.B22.T @ Q.V)))
    return LowRankPair(dlr_retruncate(P.V, d1), dlr_retruncate(Q.V, d2))


def dlr_fl(pair: LowRankPair, tau: float, omega: float) -> LowRankFactor:
    """Drift step ``P += tau*omega*Q`` as one K-S-L sweep on the P factors.

    The increment ``tau*omega*R Sigma W^T`` stays factored throughout.
    """
    P, Q = pair
    if P.shape != Q.shape:
        raise DimensionError(f"P{P.shape} and Q{Q.shape} differ in shape")
    U0, S0, V0 = P.U, P.S, P.V
    # increment = R_inc @ Q.V^T with R_inc = tau*omega*R Sigma
    R_inc = (tau * omega) * (Q.U @ Q.S)
    dK = R_inc @ (Q.V.T @ V0)
    U1, S_hat0, _ = thin_qr(U0 @ S0 + dK)
    S_hat1 = S_hat0 - U1.T @ dK
    L1 = V0 @ S_hat1.T + Q.V @ (R_inc.T @ U1)
    V1, S1t, _ = thin_qr(L1)
    return LowRankFactor(U1, S1t.T, V1)


def _rk4(rhs, y, t_span: float, substeps: int):
    h = t_span / substeps
    for _ in range(substeps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


def dlr_fn(pair: LowRankPair, F: NonlinearPair, tau: float, substeps: int = 1) -> LowRankFactor:
    """Kick ``Q' = f(P) + g(Q)`` with `P` frozen, as one K-S-L sweep on Q.

    ``f(P)`` is evaluated once on the densified displacement (entrywise
    nonlinearities admit no factored shortcut) and only ever contracted
    against the current bases. With nonzero ``g`` each of the K, S and L
    substeps is integrated by `substeps` RK4 steps; the S step runs
    backward, ``S' = -R1^T F(...) W0``.
    """
    P, Q = pair
    if P.shape != Q.shape:
        raise DimensionError(f"P{P.shape} and Q{Q.shape} differ in shape")
    R0, Sig0, W0 = Q.U, Q.S, Q.V
    fP = None if F.f_is_zero else F.f(P.dense())

    if F.g_is_zero:
        if fP is None:
            return Q
        dK = tau * (fP @ W0)
        R1, Sig_hat0, _ = thin_qr(R0 @ Sig0 + dK)
        Sig_hat1 = Sig_hat0 - R1.T @ dK
        L1 = W0 @ Sig_hat1.T + tau * (fP.T @ R1)
        W1, Sig1t, _ = thin_qr(L1)
        return LowRankFactor(R1, Sig1t.T, W1)

    g = F.g
    fPW = 0.0 if fP is None else fP @ W0

    def k_rhs(K):
        return fPW + g(K @ W0.T) @ W0

    R1, Sig_hat0, _ = thin_qr(_rk4(k_rhs, R0 @ Sig0, tau, substeps))

    fPRW = 0.0 if fP is None else R1.T @ fPW

    def s_rhs(S):
        return -(fPRW + R1.T @ (g(R1 @ S @ W0.T) @ W0))

    Sig_hat1 = _rk4(s_rhs, Sig_hat0, tau, substeps)

    fPR = 0.0 if fP is None else fP.T @ R1

    def l_rhs(L):
        return fPR + g(R1 @ L.T).T @ R1

    W1, Sig1t, _ = thin_qr(_rk4(l_rhs, W0 @ Sig_hat1.T, tau, substeps))
    return LowRankFactor(R1, Sig1t.T, W1)


def lowrank_flow_F(
    pair: LowRankPair, tau: float, omega3: float, F: NonlinearPair, substeps: int = 1
) -> LowRankPair:
    """Half kick, full drift, half kick on the factored state."""
    P0, Q0 = pair
    Q_half = dlr_fn(pair, F, 0.5 * tau, substeps)
    P1 = dlr_fl(LowRankPair(P0, Q_half), tau, omega3)
    Q1 = dlr_fn(LowRankPair(P1, Q_half), F, 0.5 * tau, substeps)
    return LowRankPair(P1, Q1)


def lowrank_strang_step(
    pair: LowRankPair,
    flows: tuple[FlowOperator, FlowOperator],
    tau: float,
    params: ModelParams,
    F: NonlinearPair,
    substeps: int = 1,
) -> LowRankPair:
    """One low-rank Strang step; `flows` must be the half-step operators."""
    Bx, By = flows
    if not (np.isclose(Bx.step, tau / 2, rtol=1e-12, atol=0) and np.isclose(By.step, tau / 2, rtol=1e-12, atol=0)):
        raise ValueError(f"flows were built for steps {Bx.step}, {By.step}, expected {tau / 2}")
    pair = lowrank_flow_x(pair, Bx)
    pair = lowrank_flow_y(pair, By)
    pair = lowrank_flow_F(pair, tau, params.omega[2], F, substeps)
    pair = lowrank_flow_y(pair, By)
    return lowrank_flow_x(pair, Bx)


def lowrank_integrate(
    pair0: LowRankPair,
    grid: GridSpec,
    time: TimeGrid,
    params: ModelParams,
    F: NonlinearPair,
    substeps: int = 1,
    observer: Optional[Observer] = None,
) -> LowRankPair:
    """Take ``time.M`` low-rank Strang steps from `pair0`.

    Start from `truncate_state` of the sampled initial data. `observer` is
    called as ``observer(k, t_k, pair)`` for k = 0..M.
    """
    _check_pair(pair0, *grid.shape)
    tau = time.tau
    flows = strang_flows(grid, params, tau)
    pair = pair0
    if observer is not None:
        observer(0, 0.0, pair)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, time.M + 1):
            try:
                pair = lowrank_strang_step(pair, flows, tau, params, F, substeps)
            except NonFiniteError as exc:
                raise BlowUpError(k) from exc
            if not pair.is_finite():
                raise BlowUpError(k)
            if observer is not None:
                observer(k, time.t(k), pair)
    return pair
