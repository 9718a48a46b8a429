"""Problem definition: grids, coefficients, nonlinearities and initial data.

The continuous problem is

    u_tt + gamma u_t + delta u = Laplace(alpha u + beta u_t) + f(u) + g(u_t)

on a rectangle with homogeneous Dirichlet data. After the 5-point finite
difference discretization the interior values form an
``(N_x - 1) x (N_y - 1)`` matrix ``P`` and its time derivative ``Q``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .linalg import DimensionError, as_matrix

__all__ = [
    "GridSpec",
    "TimeGrid",
    "ModelParams",
    "NonlinearPair",
    "PairState",
    "ProblemPreset",
    "NONLINEARITIES",
    "PRESETS",
    "get_preset",
    "build_laplacian_1d",
    "laplacian_eigenvalues",
    "sine_basis",
    "sample_initial",
    "apply_nonlinear",
    "semidiscrete_rhs",
]


@dataclass(frozen=True)
class GridSpec:
    x_L: float
    x_R: float
    y_L: float
    y_R: float
    N_x: int
    N_y: int

    def __post_init__(self):
        if not (self.x_R > self.x_L and self.y_R > self.y_L):
            raise ValueError("domain bounds must satisfy x_R > x_L and y_R > y_L")
        if self.N_x < 2 or self.N_y < 2:
            raise ValueError("N_x and N_y must be at least 2")

    @classmethod
    def square(cls, N: int, bounds=(0.0, 1.0, 0.0, 1.0)) -> "GridSpec":
        x_L, x_R, y_L, y_R = bounds
        return cls(float(x_L), float(x_R), float(y_L), float(y_R), int(N), int(N))

    @property
    def h_x(self) -> float:
        return (self.x_R - self.x_L) / self.N_x

    @property
    def h_y(self) -> float:
        return (self.y_R - self.y_L) / self.N_y

    @property
    def shape(self) -> tuple[int, int]:
        """Interior unknown counts ``(N_x - 1, N_y - 1)``."""
        return self.N_x - 1, self.N_y - 1

    def interior_x(self) -> np.ndarray:
        return self.x_L + self.h_x * np.arange(1, self.N_x)

    def interior_y(self) -> np.ndarray:
        return self.y_L + self.h_y * np.arange(1, self.N_y)

    def laplacians(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            build_laplacian_1d(self.N_x - 1, self.h_x),
            build_laplacian_1d(self.N_y - 1, self.h_y),
        )


@dataclass(frozen=True)
class TimeGrid:
    T: float
    M: int

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("final time T must be positive")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError("step count M must be a positive integer")

    @property
    def tau(self) -> float:
        return self.T / self.M

    def t(self, k: int) -> float:
        # k * T / M hits T exactly at k = M
        return k * self.T / self.M

    def index_of(self, t: float, tol: float = 1e-9) -> int:
        """Step index ``k`` with ``t_k = t``; raises if `t` is off the grid."""
        k = round(t / self.tau)
        if not 0 <= k <= self.M or abs(k * self.tau - t) > tol * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the grid tau = {self.tau}")
        return int(k)


@dataclass(frozen=True)
class ModelParams:
    """Equation coefficients and the Strang weights of the three subflows."""

    alpha: float
    beta: float = 0.0
    gamma: float = 0.0
    delta: float = 0.0
    omega: tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(float(w) for w in self.omega))
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        for name in ("beta", "gamma", "delta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if len(self.omega) != 3:
            raise ValueError("omega needs exactly three weights")
        if any(not w > 0 for w in self.omega):
            raise ValueError("weights must be positive")
        if abs(sum(self.omega) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")


def _zero(u):
    return np.zeros_like(u)


def _logistic(u):
    return u * (1.0 - u)


def _abs_sin(u):
    return np.abs(np.sin(u))


NONLINEARITIES: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "zero": _zero,
    "square": np.square,
    "cube": lambda u: u * u * u,
    "sin": np.sin,
    "logistic": _logistic,
    "abs_sin": _abs_sin,
}


@dataclass(frozen=True)
class NonlinearPair:
    """The coupling ``F(P, Q) = f(P) + g(Q)``, both acting entrywise.

    Build from registry names with `NonlinearPair.named`, or pass arbitrary
    vectorized callables through `NonlinearPair.custom`.
    """

    f_name: str
    g_name: str
    f: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)
    g: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)

    @classmethod
    def named(cls, f: str = "zero", g: str = "zero") -> "NonlinearPair":
        for name in (f, g):
            if name not in NONLINEARITIES:
                raise KeyError(
                    f"unknown nonlinearity {name!r}; choose from {sorted(NONLINEARITIES)}"
                )
        return cls(f, g, NONLINEARITIES[f], NONLINEARITIES[g])

    @classmethod
    def custom(cls, f=None, g=None) -> "NonlinearPair":
        """Wrap user callables; ``None`` means the zero function."""
        return cls(
            "zero" if f is None else "custom",
            "zero" if g is None else "custom",
            _zero if f is None else f,
            _zero if g is None else g,
        )

    @property
    def g_is_zero(self) -> bool:
        return self.g_name == "zero"

    @property
    def f_is_zero(self) -> bool:
        return self.f_name == "zero"

    @property
    def is_zero(self) -> bool:
        return self.f_is_zero and self.g_is_zero


class PairState(NamedTuple):
    """Displacement ``P`` and velocity ``Q`` on the interior grid."""

    P: np.ndarray
    Q: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.P.shape

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.P).all() and np.isfinite(self.Q).all())


def build_laplacian_1d(n: int, h: float) -> np.ndarray:
    """Dirichlet second-difference matrix ``tridiag(-1, 2, -1) / h**2`` of size n."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not h > 0:
        raise ValueError("h must be positive")
    c = 1.0 / (h * h)
    A = np.diag(np.full(n, 2.0 * c))
    if n > 1:
        off = np.full(n - 1, -c)
        A += np.diag(off, 1) + np.diag(off, -1)
    return A


def laplacian_eigenvalues(n: int, h: float) -> np.ndarray:
    """Eigenvalues ``(4/h^2) sin^2(k pi / (2(n+1)))``, k = 1..n."""
    k = np.arange(1, n + 1)
    return (4.0 / (h * h)) * np.sin(k * np.pi / (2 * (n + 1))) ** 2


def sine_basis(n: int) -> np.ndarray:
    """Orthonormal eigenvectors of any symmetric tridiagonal Toeplitz matrix.

    Column ``k-1`` holds ``sqrt(2/(n+1)) sin(i k pi/(n+1))``, i = 1..n.
    """
    i = np.arange(1, n + 1)
    return np.sqrt(2.0 / (n + 1)) * np.sin(np.outer(i, i) * np.pi / (n + 1))


# -- initial data -----------------------------------------------------------

@dataclass(frozen=True)
class ProblemPreset:
    """Initial data together with the coefficients a problem is usually run with."""

    name: str
    p: Callable = field(repr=False)
    q: Callable = field(repr=False)
    bounds: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)
    params: ModelParams = field(default_factory=lambda: ModelParams(alpha=1.0))
    f: str = "zero"
    g: str = "zero"
    T: float = 1.0


def _example1_p(x, y):
    return 2.0 * np.sin(3 * np.pi * x) * np.sin(3 * np.pi * y)


def _example1_q(x, y):
    return -np.sin(3 * np.pi * x) * np.sin(3 * np.pi * y)


def _example2_p(x, y):
    return 10.0 * np.sin(3 * np.pi * x) * np.sin(3 * np.pi * y)


def _example2_q(x, y):
    return -10.0 * np.cos(3 * np.pi * x) * np.cos(3 * np.pi * y)


def _flower_p(x, y):
    r2 = x * x + y * y
    # atan2 keeps the rose defined on the whole plane, including x = 0
    edge = np.sin(5.0 * np.arctan2(y, x)) + 1.5
    return np.where(r2 <= edge * edge, 0.1 * (r2 + 1.0), 0.0)


def _flower_q(x, y):
    return 0.5 * _flower_p(x, y)


def _cardioid_p(x, y):
    r2 = x * x + y * y
    s = r2 + x
    return np.where(s <= np.sqrt(r2), 0.15 * np.exp(-s * s + r2), 0.0)


def _cardioid_q(x, y):
    return -0.25 * _cardioid_p(x, y)


def _astroid_p(x, y):
    # real-valued x^(2/3) for negative x
    s = np.cbrt(x * x) + np.cbrt(y * y)
    return np.where(s <= 0.7 ** (2.0 / 3.0), -(s + 0.1), 0.0)


def _astroid_q(x, y):
    return 10.0 * _astroid_p(x, y)


_SKEWED = (0.98, 0.01, 0.01)
_EVEN = (1 / 3, 1 / 3, 1 / 3)

PRESETS: dict[str, ProblemPreset] = {
    "example1": ProblemPreset(
        "example1", _example1_p, _example1_q, (0.0, 1.0, 0.0, 1.0),
        ModelParams(alpha=1.0, beta=0.1, gamma=0.001, delta=1.0, omega=_SKEWED),
        f="square", g="sin", T=0.1,
    ),
    "example2": ProblemPreset(
        "example2", _example2_p, _example2_q, (0.0, 1.0, 0.0, 1.0),
        ModelParams(alpha=1.0, beta=0.001, gamma=1e-6, delta=1.0, omega=_EVEN),
        f="cube", g="zero", T=1.0,
    ),
    "flower": ProblemPreset(
        "flower", _flower_p, _flower_q, (-3.0, 3.0, -3.0, 3.0),
        ModelParams(alpha=0.6, beta=0.3, gamma=0.05, delta=0.0, omega=_SKEWED),
        f="square", g="zero", T=3.0,
    ),
    "cardioid": ProblemPreset(
        "cardioid", _cardioid_p, _cardioid_q, (-2.5, 0.5, -1.5, 1.5),
        ModelParams(alpha=0.6, beta=0.3, gamma=0.05, delta=0.0, omega=_EVEN),
        f="logistic", g="zero", T=3.0,
    ),
    "astroid": ProblemPreset(
        "astroid", _astroid_p, _astroid_q, (-1.0, 1.0, -1.0, 1.0),
        ModelParams(alpha=0.6, beta=0.3, gamma=0.05, delta=0.0, omega=_SKEWED),
        f="abs_sin", g="zero", T=3.0,
    ),
}


def get_preset(name: str) -> ProblemPreset:
    try:
        return PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


def sample_initial(grid: GridSpec, problem: ProblemPreset | str) -> PairState:
    """Sample ``p`` and ``q`` at the interior grid points.

    Row index runs over x, column index over y, so
    ``P[i-1, j-1] = p(x_i, y_j)``.
    """
    if isinstance(problem, str):
        problem = get_preset(problem)
    X, Y = np.meshgrid(grid.interior_x(), grid.interior_y(), indexing="ij")
    P = np.broadcast_to(np.asarray(problem.p(X, Y), dtype=float), X.shape).copy()
    Q = np.broadcast_to(np.asarray(problem.q(X, Y), dtype=float), X.shape).copy()
    return PairState(P, Q)


# -- right-hand side --------------------------------------------------------

def apply_nonlinear(F: NonlinearPair, P, Q=None) -> np.ndarray:
    """Entrywise ``f(P) + g(Q)``; `Q` is ignored when ``g`` is zero."""
    P = np.asarray(P, dtype=float)
    out = np.asarray(F.f(P), dtype=float)
    if F.g_is_zero:
        return out
    Q = np.asarray(Q, dtype=float)
    if Q.shape != P.shape:
        raise DimensionError(f"P{P.shape} and Q{Q.shape} differ in shape")
    return out + F.g(Q)


def semidiscrete_rhs(state: PairState, params: ModelParams, A_x, A_y, F: NonlinearPair) -> PairState:
    """Time derivative of the semi-discrete first-order system.

    Only used for checks; the time steppers never call it.
    """
    P, Q = (as_matrix(X) for X in state)
    if P.shape != Q.shape or A_x.shape[0] != P.shape[0] or A_y.shape[0] != P.shape[1]:
        raise DimensionError("operator sizes do not match the state")
    a, b = params.alpha, params.beta
    dQ = (
        -a * (A_x @ P + P @ A_y)
        - b * (A_x @ Q + Q @ A_y)
        - params.delta * P
        - params.gamma * Q
        + apply_nonlinear(F, P, Q)
    )
    return PairState(Q.copy(), dQ)
