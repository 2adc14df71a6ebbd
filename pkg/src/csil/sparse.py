"""Sparse-recovery core: L1-regularized reconstruction of Q-weight stacks.

Two problem shapes share one proximal-gradient (ISTA) engine with a
backtracking step size:

* equality-constrained recovery from demonstrated Q-values,
      minimize ||x||_1 + mu * ||A x - y||_2^2
  where row i of A carries phi(s_i) in the slot of the demonstrated action;

* margin-constrained recovery from state-action pairs only,
      minimize ||x||_1 + lambda * ||x - w_target||_2^2
                + mu * sum_i max(eps - A_i x, 0)^2
  where row i is [phi, -phi] (action 0) or [-phi, phi] (action 1), so
  feasibility A x >= eps means the demonstrated action wins by at least eps.
  The w_target pull exists because x = 0 satisfies every margin constraint
  with slack and would otherwise be the L1 minimizer.

Backtracking halves the step until the usual sufficient-decrease condition
holds, which makes the objective trace non-increasing. The margin constraints
are enforced through the smooth squared hinge rather than a projection, so the
solver stays plain gradient arithmetic.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field, replace

import numpy as np

DEFAULT_EPSILON = 0.1
DEFAULT_LAMBDA = 1.0
DEFAULT_TARGET_SCALE = 0.1
L0_ORACLE_MAX_DIM = 20


def soft_threshold(v: np.ndarray, t: float) -> np.ndarray:
    """Componentwise sign(v) * max(|v| - t, 0); the prox of t * ||.||_1."""
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def sv_soft_threshold(m: np.ndarray, t: float) -> np.ndarray:
    """Soft-threshold the singular values of `m`; the prox of t * ||.||_nuc."""
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    u, s, vt = np.linalg.svd(np.asarray(m, dtype=float), full_matrices=False)
    return (u * np.maximum(s - t, 0.0)) @ vt


@dataclass(frozen=True)
class Level1Problem:
    """Equality-constrained recovery: rows of A are action-slotted features."""

    A: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if self.A.ndim != 2 or self.y.shape != (self.A.shape[0],):
            raise ValueError("A must be (m, n) with y of length m")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.y))):
            raise ValueError("problem data must be finite")


@dataclass(frozen=True)
class Level2Problem:
    """Margin-constrained recovery: feasibility means A x >= epsilon."""

    A: np.ndarray
    epsilon: float = 0.0
    lam: float = 0.0
    w_target: np.ndarray | None = None

    def __post_init__(self):
        if self.A.ndim != 2:
            raise ValueError("A must be a 2-d constraint matrix")
        if self.epsilon < 0 or self.lam < 0:
            raise ValueError("epsilon and lam must be nonnegative")
        if self.w_target is not None and self.w_target.shape != (self.A.shape[1],):
            raise ValueError("w_target length must match the constraint columns")

    def target(self) -> np.ndarray:
        if self.w_target is None:
            return np.zeros(self.A.shape[1])
        return self.w_target


def problem_to_json(problem) -> str:
    """Serialize either problem kind; a shape header guards deserialization."""
    if isinstance(problem, Level1Problem):
        return json.dumps({"kind": "level1", "shape": list(problem.A.shape),
                           "A": problem.A.tolist(), "y": problem.y.tolist()})
    if isinstance(problem, Level2Problem):
        return json.dumps({"kind": "level2", "shape": list(problem.A.shape),
                           "A": problem.A.tolist(), "epsilon": problem.epsilon,
                           "lam": problem.lam,
                           "w_target": None if problem.w_target is None
                           else problem.w_target.tolist()})
    raise TypeError(f"not a solver problem: {type(problem).__name__}")


def problem_from_json(text: str):
    d = json.loads(text)
    A = np.asarray(d["A"], dtype=float)
    if list(A.shape) != d["shape"]:
        raise ValueError(f"shape header {d['shape']} does not match data {list(A.shape)}")
    if d["kind"] == "level1":
        return Level1Problem(A=A, y=np.asarray(d["y"], dtype=float))
    if d["kind"] == "level2":
        tgt = d.get("w_target")
        return Level2Problem(A=A, epsilon=d["epsilon"], lam=d["lam"],
                             w_target=None if tgt is None else np.asarray(tgt, dtype=float))
    raise ValueError(f"unknown problem kind {d['kind']!r}")


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 20000
    step_size: float = 1.0
    constraint_penalty_weight: float = 10.0
    convergence_tolerance: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if min(self.max_iterations, self.step_size, self.constraint_penalty_weight,
               self.convergence_tolerance) <= 0:
            raise ValueError("all solver settings must be positive")


@dataclass
class SolveReport:
    solution: np.ndarray
    objective_trace: np.ndarray
    max_constraint_violation: float
    iterations_used: int
    converged: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "solution": self.solution.tolist(),
                "objective_trace": self.objective_trace.tolist(),
                "max_constraint_violation": self.max_constraint_violation,
                "iterations_used": self.iterations_used,
                "converged": self.converged,
            }
        )


def build_level1_problem(demos: list[tuple[np.ndarray, int, float]]) -> Level1Problem:
    """One equality row per (phi, action, q): phi lands in the action's slot."""
    if not demos:
        raise ValueError("need at least one demonstration")
    dim = len(demos[0][0])
    rows = np.zeros((len(demos), 2 * dim))
    y = np.zeros(len(demos))
    for i, (phi, action, q) in enumerate(demos):
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (dim,):
            raise ValueError(f"demo {i} has feature dim {phi.shape}, expected ({dim},)")
        if action not in (0, 1):
            raise ValueError(f"demo {i} has action {action!r}, expected 0 or 1")
        rows[i, action * dim : (action + 1) * dim] = phi
        y[i] = q
    return Level1Problem(A=rows, y=y)


def build_level2_constraints(demos: list[tuple[np.ndarray, int]]) -> Level2Problem:
    """One margin row per (phi, action): [phi, -phi] for 0, [-phi, phi] for 1.

    Only the constraint matrix is populated; set epsilon/lam/w_target with
    ``dataclasses.replace`` before solving.
    """
    if not demos:
        raise ValueError("need at least one demonstration")
    dim = len(demos[0][0])
    rows = np.zeros((len(demos), 2 * dim))
    for i, (phi, action) in enumerate(demos):
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (dim,):
            raise ValueError(f"demo {i} has feature dim {phi.shape}, expected ({dim},)")
        if action == 0:
            rows[i, :dim] = phi
            rows[i, dim:] = -phi
        elif action == 1:
            rows[i, :dim] = -phi
            rows[i, dim:] = phi
        else:
            raise ValueError(f"demo {i} has action {action!r}, expected 0 or 1")
    return Level2Problem(A=rows)


def with_level2_settings(
    problem: Level2Problem,
    epsilon: float = DEFAULT_EPSILON,
    lam: float = DEFAULT_LAMBDA,
    w_target: np.ndarray | None = None,
) -> Level2Problem:
    return replace(problem, epsilon=epsilon, lam=lam, w_target=w_target)


def make_random_target(dimension: int, scale: float, seed: int) -> np.ndarray:
    """Seeded Gaussian anchor vector with componentwise standard deviation `scale`."""
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    return np.random.default_rng(seed).normal(0.0, scale, size=dimension)


def _proximal_descent(x0, smooth_value, smooth_grad, prox, nonsmooth_value, config):
    """Accelerated proximal gradient with a monotone safeguard.

    Each iteration takes a proximal step from the extrapolated point
    (backtracking halves the step until the usual quadratic upper bound
    holds at that point). The candidate is kept only if it does not increase
    the objective; otherwise the momentum is reset and the next iteration is
    a plain proximal step from the incumbent, so the recorded trace is
    non-increasing by construction. Returns (x, trace, iters, converged).
    """
    x = np.asarray(x0, dtype=float).copy()
    x_prev = x.copy()
    momentum = 1.0
    plain_step = True
    step = config.step_size
    objective = smooth_value(x) + nonsmooth_value(x)
    trace = [objective]
    converged = False
    iterations = 0

    for iterations in range(1, config.max_iterations + 1):
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * momentum * momentum))
        if plain_step:
            y = x
        else:
            y = x + ((momentum - 1.0) / t_next) * (x - x_prev)
        f_y = smooth_value(y)
        grad = smooth_grad(y)
        while True:
            z = prox(y - step * grad, step)
            dz = z - y
            quad = f_y + grad @ dz + (dz @ dz) / (2.0 * step)
            fz = smooth_value(z)
            if fz <= quad + 1e-12 or step < 1e-18:
                break
            step *= 0.5
        candidate = fz + nonsmooth_value(z)
        if candidate <= objective:
            x_prev, x = x, z
            momentum = t_next
            improvement = objective - candidate
            objective = candidate
            trace.append(objective)
            if improvement <= config.convergence_tolerance * max(1.0, abs(objective)):
                if plain_step:
                    converged = True
                    break
                momentum, x_prev, plain_step = 1.0, x.copy(), True
            else:
                plain_step = False
        else:
            # Extrapolation overshot: drop momentum, retry from the incumbent.
            trace.append(objective)
            momentum, x_prev, plain_step = 1.0, x.copy(), True

    return x, np.asarray(trace), iterations, converged


def level1_violation(problem: Level1Problem, x: np.ndarray) -> float:
    """Residual ||A x - y||_inf."""
    return float(np.max(np.abs(problem.A @ x - problem.y)))


def level2_violation(problem: Level2Problem, x: np.ndarray) -> float:
    """Worst margin shortfall max_i max(eps - A_i x, 0)."""
    return float(np.max(np.maximum(problem.epsilon - problem.A @ x, 0.0)))


def solve_level1(problem: Level1Problem, config: SolverConfig = SolverConfig()) -> SolveReport:
    """Minimize ||x||_1 + mu * ||A x - y||_2^2 from x = 0."""
    A, y = problem.A, problem.y
    mu = config.constraint_penalty_weight

    def smooth_value(x):
        r = A @ x - y
        return mu * (r @ r)

    def smooth_grad(x):
        return 2.0 * mu * (A.T @ (A @ x - y))

    x, trace, iters, converged = _proximal_descent(
        np.zeros(A.shape[1]), smooth_value, smooth_grad, soft_threshold,
        lambda x: float(np.sum(np.abs(x))), config,
    )
    return SolveReport(
        solution=x,
        objective_trace=trace,
        max_constraint_violation=level1_violation(problem, x),
        iterations_used=iters,
        converged=converged,
    )


def solve_level2(problem: Level2Problem, config: SolverConfig = SolverConfig()) -> SolveReport:
    """Minimize ||x||_1 + lam*||x - w_target||_2^2 + mu*sum max(eps - A x, 0)^2.

    Initialized at w_target, the deterministic tie-break between penalty
    minimizers.
    """
    A, eps, lam = problem.A, problem.epsilon, problem.lam
    target = problem.target()
    mu = config.constraint_penalty_weight

    def smooth_value(x):
        h = np.maximum(eps - A @ x, 0.0)
        d = x - target
        return lam * (d @ d) + mu * (h @ h)

    def smooth_grad(x):
        h = np.maximum(eps - A @ x, 0.0)
        return 2.0 * lam * (x - target) - 2.0 * mu * (A.T @ h)

    x, trace, iters, converged = _proximal_descent(
        target.copy(), smooth_value, smooth_grad, soft_threshold,
        lambda x: float(np.sum(np.abs(x))), config,
    )
    return SolveReport(
        solution=x,
        objective_trace=trace,
        max_constraint_violation=level2_violation(problem, x),
        iterations_used=iters,
        converged=converged,
    )


def solve_level2_nuclear(
    problem: Level2Problem,
    matrix_shape: tuple[int, int],
    config: SolverConfig = SolverConfig(),
) -> SolveReport:
    """Level-2 variant whose sparsity term is the nuclear norm of x reshaped
    to `matrix_shape` (row-major); used for wide final network layers."""
    rows, cols = matrix_shape
    if rows * cols != problem.A.shape[1]:
        raise ValueError("matrix_shape is incompatible with the constraint columns")
    A, eps, lam = problem.A, problem.epsilon, problem.lam
    target = problem.target()
    mu = config.constraint_penalty_weight

    def smooth_value(x):
        h = np.maximum(eps - A @ x, 0.0)
        d = x - target
        return lam * (d @ d) + mu * (h @ h)

    def smooth_grad(x):
        h = np.maximum(eps - A @ x, 0.0)
        return 2.0 * lam * (x - target) - 2.0 * mu * (A.T @ h)

    def prox(v, t):
        return sv_soft_threshold(v.reshape(rows, cols), t).ravel()

    def nuclear(x):
        return float(np.sum(np.linalg.svd(x.reshape(rows, cols), compute_uv=False)))

    x, trace, iters, converged = _proximal_descent(
        target.copy(), smooth_value, smooth_grad, prox, nuclear, config,
    )
    return SolveReport(
        solution=x,
        objective_trace=trace,
        max_constraint_violation=level2_violation(problem, x),
        iterations_used=iters,
        converged=converged,
    )


def rip_diagnostic(
    A: np.ndarray, k: int, trials: int, seed: int
) -> tuple[float, tuple[float, float]]:
    """Estimate the order-k restricted-isometry constant of column-normalized A.

    Samples `trials` random k-column submatrices, takes the extreme
    eigenvalues of each Gram matrix, and reports the largest deviation from 1
    together with the overall eigenvalue interval.
    """
    A = np.asarray(A, dtype=float)
    n_cols = A.shape[1]
    if k > n_cols:
        raise ValueError(f"k={k} exceeds the {n_cols} available columns")
    norms = np.linalg.norm(A, axis=0)
    if np.any(norms == 0):
        raise ValueError("cannot column-normalize: matrix has a zero column")
    An = A / norms

    rng = np.random.default_rng(seed)
    lo, hi = np.inf, -np.inf
    for _ in range(trials):
        cols = rng.choice(n_cols, size=k, replace=False)
        sub = An[:, cols]
        eigs = np.linalg.eigvalsh(sub.T @ sub)
        lo = min(lo, float(eigs[0]))
        hi = max(hi, float(eigs[-1]))
    delta = max(abs(1.0 - lo), abs(hi - 1.0))
    return delta, (lo, hi)


def l0_oracle(A: np.ndarray, y: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Exact minimum-support solution of A x = y by support enumeration.

    Exponential in the column count; guarded to small test problems.
    """
    A = np.asarray(A, dtype=float)
    y = np.asarray(y, dtype=float)
    n = A.shape[1]
    if n > L0_ORACLE_MAX_DIM:
        raise ValueError(f"oracle is limited to {L0_ORACLE_MAX_DIM} columns, got {n}")
    scale = max(1.0, float(np.max(np.abs(y))))
    for size in range(n + 1):
        for support in itertools.combinations(range(n), size):
            if size == 0:
                z = np.zeros(0)
            else:
                z, *_ = np.linalg.lstsq(A[:, support], y, rcond=None)
            residual = y - (A[:, support] @ z if size else 0.0)
            if np.max(np.abs(residual), initial=0.0) <= tol * scale:
                x = np.zeros(n)
                x[list(support)] = z
                return x
    raise ValueError("no support reproduces y; the system is inconsistent")
