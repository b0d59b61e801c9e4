"""Exact linear-control numerics.

Discrete Lyapunov and Riccati equations are solved by fixed-point
iteration and certified by their residuals; stability certificates,
controllability matrices, and PSD projection round out the toolbox.
All functions are pure and thread-safe.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, UnstableMatrixError, ValidationError

# Eigenvalue floor used by symmetric matrix square roots and inverses.
EIG_FLOOR = 1e-14

LYAP_TOL = 1e-10
DARE_TOL = 1e-12
MAX_ITER = 100_000


def spectral_radius(x: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(x))))


def _check_square(m: np.ndarray, name: str) -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise ValidationError(f"{name} must be square, got shape {m.shape}")
    return m


def _check_symmetric(m: np.ndarray, name: str, tol: float = 1e-9) -> np.ndarray:
    m = _check_square(m, name)
    if m.size and np.max(np.abs(m - m.T)) > tol:
        raise ValidationError(f"{name} is not symmetric within {tol}")
    return m


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition with eigenvalue floor."""
    m = _check_symmetric(m, "matrix")
    w, v = np.linalg.eigh((m + m.T) / 2.0)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def psd_inv_sqrt(m: np.ndarray) -> np.ndarray:
    """Inverse symmetric square root; eigenvalues floored at EIG_FLOOR."""
    m = _check_symmetric(m, "matrix")
    w, v = np.linalg.eigh((m + m.T) / 2.0)
    w = np.clip(w, EIG_FLOOR, None)
    return (v / np.sqrt(w)) @ v.T


def psd_project(m: np.ndarray) -> np.ndarray:
    """Frobenius-nearest PSD matrix: clamp negative eigenvalues to zero.

    Input must already be symmetric (asymmetry beyond 1e-9 is an error);
    callers symmetrize first.
    """
    m = _check_symmetric(m, "matrix")
    sym = (m + m.T) / 2.0
    w, v = np.linalg.eigh(sym)
    w = np.clip(w, 0.0, None)
    return (v * w) @ v.T


def solve_lyapunov(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Solve P = X' P X + Y for stable X and PSD Y by iterating the recursion.

    Raises UnstableMatrixError when rho(X) >= 1 and ConvergenceError when the
    residual has not reached 1e-10 * (1 + ||P||_F) within the iteration cap.
    """
    x = _check_square(x, "X")
    y = _check_symmetric(y, "Y")
    if x.shape != y.shape:
        raise ValidationError(f"X and Y shapes differ: {x.shape} vs {y.shape}")
    rho = spectral_radius(x)
    if rho >= 1.0:
        raise UnstableMatrixError(f"spectral radius {rho:.6g} >= 1")
    p = y.copy()
    for _ in range(MAX_ITER):
        p_next = x.T @ p @ x + y
        if np.linalg.norm(p_next - p, "fro") <= LYAP_TOL * (1.0 + np.linalg.norm(p_next, "fro")):
            p = (p_next + p_next.T) / 2.0
            resid = np.linalg.norm(p - x.T @ p @ x - y, "fro")
            if resid <= LYAP_TOL * (1.0 + np.linalg.norm(p, "fro")):
                return p
        p = p_next
    raise ConvergenceError(f"Lyapunov iteration did not converge (rho={rho:.4f})")


@dataclass(frozen=True)
class StabilityCert:
    """Witness (S, alpha, gamma) certifying geometric decay of matrix powers.

    ||S||_op * ||S^-1||_op <= alpha and ||S^-1 X S||_op <= gamma < 1, which
    implies ||X^n||_op <= alpha * gamma^n.
    """

    witness: np.ndarray
    alpha: float
    gamma: float


def strong_stability_cert(x: np.ndarray, p: np.ndarray | None = None,
                          y: np.ndarray | None = None) -> StabilityCert:
    """Certificate from a Lyapunov witness P = X' P X + Y.

    By default Y = I and P is solved here. Supplying (p, y) lets callers use
    a value-function witness instead (e.g. the Riccati solution for a closed
    loop). With S = P^{-1/2}, one has S^{-1} X S = P^{1/2} X P^{-1/2} whose
    squared norm equals ||I - P^{-1/2} Y P^{-1/2}||_op.
    """
    x = _check_square(x, "X")
    d = x.shape[0]
    if y is None:
        y = np.eye(d)
    if p is None:
        p = solve_lyapunov(x, y)
    p_half = psd_sqrt(p)
    p_inv_half = psd_inv_sqrt(p)
    alpha = float(np.linalg.norm(p_half, 2) * np.linalg.norm(p_inv_half, 2))
    gamma = float(np.sqrt(max(0.0, np.linalg.norm(np.eye(d) - p_inv_half @ y @ p_inv_half, 2))))
    return StabilityCert(witness=p_inv_half, alpha=alpha, gamma=gamma)


@dataclass(frozen=True)
class ControllabilityInfo:
    """Controllability matrices C_k = [A^{k-1}B | ... | B] and the minimal
    index at which C_k reaches rank d_x."""

    blocks: tuple[np.ndarray, ...]
    kappa_star: int | None
    sigma_min: float | None

    def c_k(self, k: int) -> np.ndarray:
        return self.blocks[k - 1]


def controllability_matrix(a: np.ndarray, b: np.ndarray, k: int) -> np.ndarray:
    """C_k = [A^{k-1}B | A^{k-2}B | ... | B].

    Block j is computed as matrix_power(A, k-1-j) @ B so extracting it
    reproduces that expression bit for bit.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.hstack([np.linalg.matrix_power(a, k - 1 - j) @ b for j in range(k)])


def controllability(a: np.ndarray, b: np.ndarray, k_max: int) -> ControllabilityInfo:
    """All C_k for k <= k_max plus the smallest k with rank(C_k) = d_x.

    An uncontrollable pair is signalled by kappa_star = None, not an error.
    """
    a = _check_square(a, "A")
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if k_max < 1:
        raise ValidationError("k_max must be >= 1")
    d_x = a.shape[0]
    blocks = tuple(controllability_matrix(a, b, k) for k in range(1, k_max + 1))
    kappa_star = None
    sigma_min = None
    for k, ck in enumerate(blocks, start=1):
        svals = np.linalg.svd(ck, compute_uv=False)
        if len(svals) >= d_x and svals[d_x - 1] > d_x * max(ck.shape) * np.finfo(float).eps * (svals[0] if len(svals) else 1.0):
            kappa_star = k
            sigma_min = float(svals[d_x - 1])
            break
    return ControllabilityInfo(blocks=blocks, kappa_star=kappa_star, sigma_min=sigma_min)


@dataclass(frozen=True)
class DareSolution:
    """Fixed point of the Riccati recursion together with the optimal gain."""

    p: np.ndarray
    k: np.ndarray
    residual: float
    iterations: int

    def input_weight(self, b: np.ndarray, r: np.ndarray) -> np.ndarray:
        """Derived accessor for R + B' P B (the effective input weight)."""
        b = np.atleast_2d(np.asarray(b, dtype=float))
        return np.asarray(r, dtype=float) + b.T @ self.p @ b


def solve_dare(a: np.ndarray, b: np.ndarray, q: np.ndarray, r: np.ndarray,
               tol: float = DARE_TOL, max_iter: int = MAX_ITER) -> DareSolution:
    """Riccati fixed point by value iteration from P0 = Q.

    P <- A'PA + Q - A'PB (R + B'PB)^{-1} B'PA, stopped when the relative
    Frobenius change is below tol. Requires Q PSD and R PD (symmetric), and
    (A, B) stabilizable, prechecked as rho(A) < 1 or full controllability.
    """
    a = _check_square(a, "A")
    b = np.atleast_2d(np.asarray(b, dtype=float))
    q = _check_symmetric(q, "Q")
    r = _check_symmetric(r, "R")
    d_x = a.shape[0]
    if b.shape[0] != d_x:
        raise ValidationError(f"B has {b.shape[0]} rows, expected {d_x}")
    if np.min(np.linalg.eigvalsh(q)) < -1e-9:
        raise ValidationError("Q must be positive semidefinite")
    if np.min(np.linalg.eigvalsh(r)) <= 0:
        raise ValidationError("R must be positive definite")
    if spectral_radius(a) >= 1.0 and controllability(a, b, d_x).kappa_star is None:
        raise UnstableMatrixError("(A, B) is neither stable nor controllable")

    p = q.copy()
    iterations = 0
    for iterations in range(1, max_iter + 1):
        bpb = r + b.T @ p @ b
        bpa = b.T @ p @ a
        p_next = a.T @ p @ a + q - bpa.T @ np.linalg.solve(bpb, bpa)
        p_next = (p_next + p_next.T) / 2.0
        change = np.linalg.norm(p_next - p, "fro")
        p = p_next
        if change <= tol * max(1.0, np.linalg.norm(p, "fro")):
            break
    else:
        raise ConvergenceError("DARE value iteration hit the iteration cap")

    k = -np.linalg.solve(r + b.T @ p @ b, b.T @ p @ a)
    residual = float(np.linalg.norm(
        p - (a.T @ p @ a + q - (b.T @ p @ a).T @ np.linalg.solve(r + b.T @ p @ b, b.T @ p @ a)),
        "fro"))
    return DareSolution(p=p, k=k, residual=residual, iterations=iterations)


def open_loop_state_cov(a: np.ndarray, b: np.ndarray, sigma_w: np.ndarray,
                        sigma_0: np.ndarray, k: int) -> np.ndarray:
    """Covariance of the state after k steps of unit Gaussian inputs.

    A^k Sigma_0 (A^k)' + sum_{t=1}^{k} A^{t-1} (Sigma_w + B B') (A^{t-1})',
    summed exactly; terms are dropped once their norm falls below 1e-14.
    """
    a = np.asarray(a, dtype=float)
    b = np.atleast_2d(np.asarray(b, dtype=float))
    drive = np.asarray(sigma_w, dtype=float) + b @ b.T
    cov = np.linalg.matrix_power(a, k) @ np.asarray(sigma_0, dtype=float) @ np.linalg.matrix_power(a, k).T
    term = drive.copy()
    for _ in range(k):
        cov = cov + term
        term = a @ term @ a.T
        if np.linalg.norm(term, "fro") < 1e-14:
            break
    return (cov + cov.T) / 2.0


def optimal_policy(spec, emission):
    """Benchmark policy: the infinite-horizon gain applied to the true decoder."""
    from .system import PolicyDef  # local import to avoid a cycle

    sol = solve_dare(spec.a, spec.b, spec.q, spec.r)
    return PolicyDef.ground_truth(sol.k, emission, sigma=0.0)
