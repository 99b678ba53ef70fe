"""Tension distribution: desired joint torques -> bounded wire tensions.

Solves

    minimize   |f|^2 + (tau_ref + G^T f)^T Lambda (tau_ref + G^T f)
    subject to f_min <= f <= f_max

with a primal active-set method. The Hessian 2 (I + G Lambda G^T) is
positive definite, so the minimizer is unique and the method terminates
exactly. :class:`TensionSolver` keeps the last working set so consecutive
control ticks start from the previous active set.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ValidationError

DEFAULT_LAMBDA = 1.0e6
KKT_TOL = 1e-8


def _weight_matrix(Lambda, n):
    L = np.asarray(Lambda, dtype=float)
    if L.ndim == 0:
        return float(L) * np.eye(n)
    if L.ndim == 1:
        if L.shape != (n,):
            raise DimensionMismatch(f"Lambda diagonal has {L.shape[0]} entries, expected {n}")
        return np.diag(L)
    if L.shape != (n, n):
        raise DimensionMismatch(f"Lambda has shape {L.shape}, expected ({n}, {n})")
    return L


@dataclass
class TensionProblem:
    G: np.ndarray
    tau_ref: np.ndarray
    Lambda: np.ndarray
    f_min: np.ndarray
    f_max: np.ndarray

    def __post_init__(self):
        self.G = np.atleast_2d(np.asarray(self.G, dtype=float))
        R, N = self.G.shape
        self.tau_ref = np.asarray(self.tau_ref, dtype=float).reshape(-1)
        if self.tau_ref.shape != (N,):
            raise DimensionMismatch(f"tau_ref has {self.tau_ref.size} entries, G has {N} columns")
        self.Lambda = _weight_matrix(self.Lambda, N)
        self.f_min = np.broadcast_to(np.asarray(self.f_min, dtype=float), (R,)).copy()
        self.f_max = np.broadcast_to(np.asarray(self.f_max, dtype=float), (R,)).copy()
        if np.any(self.f_min > self.f_max):
            raise ValidationError("tension.f_min", "f_min <= f_max elementwise")
        L = self.Lambda
        scale = max(1.0, float(np.abs(L).max()))
        if np.abs(L - L.T).max() > 1e-9 * scale:
            raise ValidationError("tension.Lambda", "symmetric")
        if np.linalg.eigvalsh(L)[0] < -1e-9 * scale:
            raise ValidationError("tension.Lambda", "positive semidefinite")
        if not (np.all(np.isfinite(self.G)) and np.all(np.isfinite(self.tau_ref))):
            raise ValidationError("tension.G", "finite entries")

    @property
    def n_wires(self):
        return self.G.shape[0]


@dataclass
class TensionSolution:
    f_ref: np.ndarray
    torque_residual: np.ndarray  # tau_ref + G^T f_ref
    kkt_residual: float  # scaled, see kkt_residual()
    iterations: int
    status: str  # "optimal" | "max_iter"


def qp_terms(problem):
    """Hessian H and linear term c of 1/2 f^T H f + c^T f (constant dropped)."""
    G, L = problem.G, problem.Lambda
    GL = G @ L
    H = 2.0 * (np.eye(problem.n_wires) + GL @ G.T)
    c = 2.0 * GL @ problem.tau_ref
    return 0.5 * (H + H.T), c


def objective(problem, f):
    f = np.asarray(f, dtype=float)
    r = problem.tau_ref + problem.G.T @ f
    return float(f @ f + r @ problem.Lambda @ r)


def gradient(problem, f):
    r = problem.tau_ref + problem.G.T @ f
    return 2.0 * f + 2.0 * problem.G @ (problem.Lambda @ r)


def kkt_residual(problem, f, scaled=False):
    """Largest violation of projected-gradient stationarity at a box-feasible ``f``.

    Interior components need a zero gradient, components at the lower bound a
    non-negative one, at the upper bound a non-positive one. ``scaled=True``
    divides by the magnitude of the terms summed into the gradient, which is
    the tolerance the solver works to.
    """
    f = np.asarray(f, dtype=float)
    lo, hi = problem.f_min, problem.f_max
    g = gradient(problem, f)
    at_lo = f <= lo + 1e-9 * np.maximum(1.0, np.abs(lo))
    at_hi = f >= hi - 1e-9 * np.maximum(1.0, np.abs(hi))
    viol = np.abs(g)
    viol = np.where(at_lo, np.maximum(0.0, -g), viol)
    viol = np.where(at_hi, np.maximum(0.0, g), viol)
    viol = np.where(at_lo & at_hi, 0.0, viol)
    worst = float(viol.max()) if viol.size else 0.0
    if not scaled:
        return worst
    GL = problem.G @ problem.Lambda
    scale = (np.abs(2.0 * f).max() + np.abs(2.0 * GL @ (problem.G.T @ f)).max()
             + np.abs(2.0 * GL @ problem.tau_ref).max())
    return worst / max(1.0, float(scale))


class TensionSolver:
    """Active-set box QP solver that warm-starts from its previous working set.

    One instance per control loop; not safe to share between threads.
    """

    def __init__(self, max_iter=None, tol=1e-12):
        self.max_iter = max_iter
        self.tol = tol
        self._working = None  # -1 at lower, +1 at upper, 0 free
        self._last = None

    def reset(self):
        self._working = None
        self._last = None

    def solve(self, problem, warm_start=True):
        H, c = qp_terms(problem)
        lo, hi = problem.f_min, problem.f_max
        n = problem.n_wires
        max_iter = self.max_iter or 20 * n + 50

        if warm_start and self._working is not None and self._working.shape == (n,):
            w = self._working.copy()
            x = np.clip(self._last, lo, hi)
        else:
            x_u = np.linalg.solve(H, -c)
            w = np.where(x_u < lo, -1, np.where(x_u > hi, 1, 0))
            x = np.clip(x_u, lo, hi)
        w = np.where(lo == hi, -1, w)
        x = np.where(w < 0, lo, np.where(w > 0, hi, x))

        scale = max(1.0, float(np.abs(c).max()), float(np.abs(H).max()) * float(np.abs(x).max()))
        tol = self.tol * scale
        status = "max_iter"
        it = 0
        while it < max_iter:
            it += 1
            free = w == 0
            target = np.where(w < 0, lo, np.where(w > 0, hi, x))
            if free.any():
                fixed = ~free
                rhs = -c[free] - H[np.ix_(free, fixed)] @ target[fixed]
                target[free] = np.linalg.solve(H[np.ix_(free, free)], rhs)
            step = target - x
            below = free & (target < lo)
            above = free & (target > hi)
            if not (below.any() or above.any()):
                x = target
                g = H @ x + c
                release = np.where(w < 0, -g, np.where(w > 0, g, 0.0))
                release[lo == hi] = 0.0
                i = int(np.argmax(release))
                if release[i] <= tol:
                    status = "optimal"
                    break
                w[i] = 0
                continue
            # step to the first bound hit by a free variable
            alpha = 1.0
            block = -1
            for i in np.flatnonzero(below | above | (free & (step != 0))):
                if step[i] < 0:
                    a = (lo[i] - x[i]) / step[i]
                elif step[i] > 0:
                    a = (hi[i] - x[i]) / step[i]
                else:
                    continue
                if a < alpha:
                    alpha, block = a, i
            alpha = max(alpha, 0.0)
            x = x + alpha * step
            if block >= 0:
                w[block] = -1 if step[block] < 0 else 1
            x = np.where(w < 0, lo, np.where(w > 0, hi, np.clip(x, lo, hi)))

        self._working = w
        self._last = x
        x = np.clip(x, lo, hi)
        return TensionSolution(
            f_ref=x,
            torque_residual=problem.tau_ref + problem.G.T @ x,
            kkt_residual=kkt_residual(problem, x, scaled=True),
            iterations=it,
            status=status,
        )


def solve_tension(problem, max_iter=None):
    """Stateless one-shot solve; identical inputs give bit-identical output."""
    return TensionSolver(max_iter=max_iter).solve(problem, warm_start=False)
