"""Local stability of the CartPole equilibrium under an affine feedback policy.

The linearization uses the closed-form partial derivatives of the cart and
pole accelerations at the origin.  Because the cart states never feed back
into the pole dynamics when the policy ignores them, the A matrix is block
upper-triangular and its eigenvalues come from two quadratics.
"""

from __future__ import annotations

import cmath
from dataclasses import dataclass, field

import numpy as np

from .envs import CartPoleParams, cartpole_derivative

OFFSET_TOL = 1e-3
CLASSIFY_TOL = 1e-9


class StabilityError(ValueError):
    pass


@dataclass
class LinearSystem:
    A: np.ndarray
    gains: np.ndarray
    params: CartPoleParams
    notes: list = field(default_factory=list)

    def provenance(self) -> dict:
        return {"gains": self.gains.tolist(), "params": vars(self.params).copy(), "notes": list(self.notes)}


def _as_gains(gains) -> np.ndarray:
    g = np.asarray(gains, dtype=np.float64).reshape(-1)
    if g.size == 2:
        g = np.array([0.0, 0.0, g[0], g[1]])
    if g.size != 4:
        raise StabilityError("gains must be (k_theta, k_theta_dot) or a full 4-vector over (x, x_dot, theta, theta_dot)")
    return g


def open_loop_partials(params: CartPoleParams = CartPoleParams()) -> dict:
    """Partial derivatives of the accelerations at the origin.

    The pole denominator is ``L (4/3 - m / (m + M))`` with ``m`` the pole mass.
    """
    m, M, L, g, f = params.m, params.M, params.L, params.g, params.f
    denom = L * (4.0 / 3.0 - m / (m + M))
    cart_denom = 8.0 * M + 2.0 * m
    return {
        "theta_dd_theta": g / denom,
        "theta_dd_a": -f / ((m + M) * denom),
        "x_dd_theta": -6.0 * m * g / cart_denom,
        "x_dd_a": 8.0 * f / cart_denom,
    }


def linearize(gains, params: CartPoleParams = CartPoleParams(), offset: float = 0.0) -> LinearSystem:
    """A matrix of ``X' = A X`` for ``a = k . X + offset`` near the origin."""
    if abs(offset) > OFFSET_TOL:
        raise StabilityError(
            f"policy offset {offset:.4g} exceeds {OFFSET_TOL}: a constant action moves the equilibrium "
            "away from the origin, so the linearization about the origin does not apply")
    k = _as_gains(gains)
    d = open_loop_partials(params)
    A = np.zeros((4, 4))
    A[0, 1] = 1.0
    A[2, 3] = 1.0
    A[1] = d["x_dd_a"] * k
    A[1, 2] += d["x_dd_theta"]
    A[3] = d["theta_dd_a"] * k
    A[3, 2] += d["theta_dd_theta"]
    return LinearSystem(A, k, params)


def linearize_fd(gains, params: CartPoleParams = CartPoleParams(), offset: float = 0.0,
                 h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of the continuous-time closed-loop dynamics at the origin."""
    k = _as_gains(gains)
    J = np.zeros((4, 4))
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        fp = cartpole_derivative(e, k @ e + offset, params)
        fm = cartpole_derivative(-e, -(k @ e) + offset, params)
        J[:, j] = (fp - fm) / (2 * h)
    return J


def eig2(block: np.ndarray) -> list[complex]:
    """Roots of ``lambda^2 - tr lambda + det`` for a real 2x2 block."""
    tr = float(block[0, 0] + block[1, 1])
    det = float(block[0, 0] * block[1, 1] - block[0, 1] * block[1, 0])
    disc = tr * tr / 4.0 - det
    if disc >= 0:
        root = np.sqrt(disc)
        big = tr / 2.0 + (root if tr >= 0 else -root)
        small = det / big if big != 0 else tr / 2.0 - (root if tr >= 0 else -root)
        return [complex(big), complex(small)]
    root = cmath.sqrt(disc)
    return [tr / 2.0 + root, tr / 2.0 - root]


def eigenvalues(A) -> list[complex]:
    """All eigenvalues, through the 2x2 blocks when A is block upper-triangular."""
    A = np.asarray(A, dtype=np.float64)
    if A.shape == (4, 4) and not np.any(A[2:, :2]):
        return eig2(A[:2, :2]) + eig2(A[2:, 2:])
    if A.shape == (2, 2):
        return eig2(A)
    try:
        return [complex(v) for v in np.linalg.eigvals(A)]
    except np.linalg.LinAlgError as exc:
        raise StabilityError(f"eigenvalue iteration did not converge: {exc}") from None


def classify(eigs, tol: float = CLASSIFY_TOL, shift_modes: int = 2) -> str:
    """``unstable`` / ``stable`` / ``marginal``.

    Up to ``shift_modes`` zero eigenvalues are attributed to the uncontrolled
    cart position and velocity and do not spoil stability.
    """
    eigs = [complex(e) for e in eigs]
    if any(e.real > tol for e in eigs):
        return "unstable"
    zero = [e for e in eigs if abs(e.real) <= tol and abs(e.imag) <= tol]
    rest = [e for e in eigs if not (abs(e.real) <= tol and abs(e.imag) <= tol)]
    if len(zero) <= shift_modes and all(e.real < -tol for e in rest):
        return "stable"
    return "marginal"


def threshold_gain(params: CartPoleParams = CartPoleParams()) -> float:
    """``k_theta`` at which the linearized pole stiffness changes sign (with ``k_theta_dot = 0``)."""
    return params.g * (params.m + params.M) / params.f


def analyze(gains, params: CartPoleParams = CartPoleParams(), offset: float = 0.0) -> dict:
    system = linearize(gains, params, offset)
    eigs = eigenvalues(system.A)
    return {"A": system.A.tolist(), "eigenvalues": [[e.real, e.imag] for e in eigs],
            "classification": classify(eigs), **system.provenance(), "offset": offset}


def gains_from_tree(tree, state_dim: int = 4) -> tuple[np.ndarray, float, str]:
    """Gains and offset of an extracted policy; non-affine trees are linearized numerically."""
    from .expression import affine_coefficients, local_gains

    try:
        gains, offset = affine_coefficients(tree, state_dim)
        return gains, offset, "affine"
    except ValueError:
        gains, offset = local_gains(tree, state_dim)
        return gains, offset, "numerical linearization at the origin"
