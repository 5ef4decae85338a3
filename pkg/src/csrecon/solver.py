"""ADMM + conjugate-gradient reconstruction.

The data-fit / sparsity split is solved by scaled-dual ADMM: each outer
iteration soft-thresholds the transform variable, solves the regularized
normal equations

    A rho = b,  A = F^H F + (beta/2) Theta^H Theta,
    b = F^H d + (beta/2) Theta^H (mu - eta)

by zero-started CG, then updates the dual. With sharded data the only
cross-worker term is F^H F x, so exactly one image-size allreduce
happens per CG iteration (plus two during setup for the initial image
and F^H d).
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .operators import DEFAULT_MEMORY_BUDGET, ChunkedDftOperator, DftOperator
from .sharding import (CommStats, default_chunk_size, make_shard_plan,
                       run_spmd)
from .tensor import (COMPLEX_DTYPES, ShapeMismatchError, axpy, hermitian_dot,
                     norm2_squared, validate_precision)
from .transform import soft_threshold, theta, theta_adjoint


class CgDivergenceError(RuntimeError):
    """Raised when a CG residual turns non-finite."""


@dataclass
class ReconParams:
    """Solver knobs; the defaults reproduce the reference configuration."""

    lam: float = 1e-7
    beta: float = 1.0
    admm_rtol: float = 1e-4
    admm_max_iters: int = 5
    cg_atol: float = 1e-6
    cg_max_iters: int = 20

    def __post_init__(self):
        if self.lam <= 0 or self.beta <= 0:
            raise ValueError("lam and beta must be > 0")
        if self.admm_rtol <= 0 or self.cg_atol <= 0:
            raise ValueError("admm_rtol and cg_atol must be > 0")
        if self.admm_max_iters < 1 or self.cg_max_iters < 1:
            raise ValueError("iteration caps must be >= 1")

    def to_dict(self):
        return {
            "lam": self.lam,
            "beta": self.beta,
            "admm_rtol": self.admm_rtol,
            "admm_max_iters": self.admm_max_iters,
            "cg_atol": self.cg_atol,
            "cg_max_iters": self.cg_max_iters,
        }


@dataclass
class AdmmState:
    """One outer-iteration snapshot: image, transform variable, scaled dual."""

    rho: np.ndarray
    mu: np.ndarray
    eta: np.ndarray
    iteration: int = 0
    alpha: float = 1.0  # squared relative image change of the last update


@dataclass
class CgOutcome:
    solution: np.ndarray
    iterations: int
    final_residual_sq: float
    residual_history: list = field(default_factory=list)


def _no_comm(arr):
    return arr


def cg_solve(apply_a, b, x0=None, atol=1e-6, max_iters=20):
    """Conjugate gradients on A x = b; A Hermitian positive (semi)definite.

    x0=None starts from zero, in which case r0 = b without applying the
    operator, so a distributed apply_a performs exactly one collective
    per iteration and none up front. Stops after max_iters steps or once
    the squared residual norm tau = ||b - A x||^2 drops to atol^2. The
    returned residual_history holds tau before each step and after the
    last one; it is non-increasing for well-conditioned systems.
    """
    if max_iters < 0:
        raise ValueError("max_iters must be >= 0")
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = x0.copy()
        r = b - apply_a(x)
    d = r.copy()
    tau = float(norm2_squared(r))
    if not np.isfinite(tau):
        raise CgDivergenceError("initial residual is non-finite")
    history = [tau]
    threshold = atol * atol
    iterations = 0
    while iterations < max_iters and tau > threshold:
        ad = apply_a(d)
        alpha = tau / hermitian_dot(d, ad)
        x = axpy(alpha, d, x)
        r = axpy(-alpha, ad, r)
        tau_next = float(norm2_squared(r))
        if not np.isfinite(tau_next):
            raise CgDivergenceError(
                f"residual became non-finite at CG step {iterations + 1}")
        d = axpy(tau_next / tau, d, r)
        tau = tau_next
        history.append(tau)
        iterations += 1
    return CgOutcome(x, iterations, tau, history)


def normal_operator(x, op, beta, allreduce=_no_comm):
    """Apply A = F^H F + (beta/2) Theta^H Theta to a replicated image.

    The DFT term is computed on the local shard and summed across workers
    through the allreduce hook (one call per application); the transform
    term acts on the already-replicated image and needs no communication.
    """
    partial = op.adjoint(op.forward(x))
    total = allreduce(partial)
    if beta == 0:
        return total
    return total + (beta / 2) * theta_adjoint(theta(x))


def build_rhs(fhd, mu, eta, beta):
    """Right-hand side b = F^H d + (beta/2) Theta^H (mu - eta)."""
    if mu.shape != eta.shape:
        raise ShapeMismatchError(f"mu shape {mu.shape} != eta shape {eta.shape}")
    return fhd + (beta / 2) * theta_adjoint(mu - eta)


def relative_change_sq(new, old):
    """||new - old||^2 / ||old||^2; 0 when both vanish, inf when only old does."""
    num = float(norm2_squared(new - old))
    den = float(norm2_squared(old))
    if den > 0:
        return num / den
    return 0.0 if num == 0 else float("inf")


def should_continue(iteration, alpha, params):
    """ADMM loop guard: run while under the cap and the image still moves."""
    return iteration < params.admm_max_iters and alpha > params.admm_rtol**2


def admm_step(state, fhd, params, op, allreduce=_no_comm):
    """One outer iteration. Returns the new state and the inner CG outcome.

    Order matters: the transform variable is thresholded from the current
    image and dual, the image is re-solved against the fresh right-hand
    side by CG, and the dual absorbs the remaining mismatch, so
    eta+ - eta == theta(rho+) - mu+ by construction.

    The inner CG starts from zero rather than the previous image. That
    keeps communication to exactly one allreduce per CG iteration (a
    nonzero start would cost an extra operator application up front) and
    keeps the unconverged part of the solve near zero instead of
    recirculating stale iterate content, which single precision cannot
    track.
    """
    mu_next = soft_threshold(theta(state.rho) + state.eta, params.lam / params.beta)
    rhs = build_rhs(fhd, mu_next, state.eta, params.beta)

    def apply_a(v):
        return normal_operator(v, op, params.beta, allreduce)

    cg = cg_solve(apply_a, rhs, None, params.cg_atol, params.cg_max_iters)
    rho_next = cg.solution
    eta_next = state.eta + (theta(rho_next) - mu_next)
    next_state = AdmmState(
        rho=rho_next,
        mu=mu_next,
        eta=eta_next,
        iteration=state.iteration + 1,
        alpha=relative_change_sq(rho_next, state.rho),
    )
    return next_state, cg


def objective(rho, data, op, lam):
    """Full objective ||F(rho) - d||^2 + lam * ||theta(rho)||_1."""
    if data.shape != (op.n_samples, op.n_coils):
        raise ShapeMismatchError(
            f"data shape {data.shape} does not match operator "
            f"({op.n_samples}, {op.n_coils})")
    resid = op.forward(rho) - data
    return float(norm2_squared(resid)) + lam * float(np.sum(np.abs(theta(rho))))


@dataclass
class RunReport:
    """Everything observable about one reconstruction run."""

    method: str
    precision: str
    n_workers: int
    op_mode: str
    grid: tuple
    n_kspace_samples: int
    n_coils: int
    params: dict
    iterations: list
    objective_initial: float = None
    comm: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    backend: str = ""

    def to_dict(self):
        return {
            "method": self.method,
            "precision": self.precision,
            "n_workers": self.n_workers,
            "op_mode": self.op_mode,
            "grid": list(self.grid),
            "n_kspace_samples": self.n_kspace_samples,
            "n_coils": self.n_coils,
            "params": self.params,
            "iterations": self.iterations,
            "objective_initial": self.objective_initial,
            "comm": self.comm,
            "timing": self.timing,
            "backend": self.backend,
        }


def _check_inputs(dataset, sens):
    if dataset.n_coils != sens.n_coils:
        raise ShapeMismatchError(
            f"dataset has {dataset.n_coils} coils, maps have {sens.n_coils}")


def _build_shard(ctx, plan, coords, grid, maps, op_mode, precision,
                 memory_budget):
    """Worker-local operator plus the matching allreduce hook.

    Order-stable plans get per-chunk operators and the id-keyed ordered
    reduction, which makes every reduced value bitwise independent of
    the worker count; plain plans get one shard operator and the
    worker-order reduction.
    """
    start, stop = plan.bounds[ctx.rank]
    if plan.chunk_size:
        ids, ranges = plan.worker_chunks(ctx.rank)
        op = ChunkedDftOperator.build(coords, grid, maps, ranges, ids,
                                      mode=op_mode, precision=precision,
                                      memory_budget=memory_budget)

        def hook(stack):
            return ctx.allreduce_ordered(ids, stack)

        return op, hook, (start, stop)
    op = DftOperator.build(coords[start:stop], grid, maps, mode=op_mode,
                           precision=precision, memory_budget=memory_budget)
    return op, ctx.allreduce, (start, stop)


def admm_reconstruct(dataset, sens, params=None, n_workers=1, precision="double",
                     op_mode="auto", memory_budget=DEFAULT_MEMORY_BUDGET,
                     compute_objectives=True, order_stable=True,
                     barrier_timeout=600.0):
    """Sharded ADMM reconstruction. Returns (image, RunReport).

    Workers own contiguous k-space shards, build their shard operator,
    and run the identical ADMM loop on replicated image-space state. By
    default the reduction is order-stable (partials folded by global
    sample-chunk id), making the result bitwise independent of
    n_workers; with order_stable=False partials are folded in worker
    order and agreement across worker counts is only up to rounding.
    Objective values are evaluated after the parallel section from the
    rank-0 iterate snapshots and add no communication.
    """
    params = ReconParams() if params is None else params
    validate_precision(precision)
    _check_inputs(dataset, sens)
    grid = sens.grid
    cdt = COMPLEX_DTYPES[precision]
    data = dataset.data.astype(cdt)
    maps = sens
    chunk = default_chunk_size(dataset.n_samples) if order_stable else None
    plan = make_shard_plan(dataset.n_samples, n_workers, chunk_size=chunk)
    coords = dataset.trajectory.coords
    stats = CommStats()

    def body(ctx):
        t0 = time.perf_counter()
        op, hook, (start, stop) = _build_shard(
            ctx, plan, coords, grid, maps, op_mode, precision, memory_budget)
        shard = np.ascontiguousarray(data[start:stop])
        ctx.set_phase("setup")
        partial = op.adjoint(shard)
        rho0 = hook(partial)
        fhd = hook(partial)
        t_setup = time.perf_counter() - t0
        ctx.set_phase("solve")
        zeros = np.zeros((2, grid.nx, grid.ny), dtype=cdt)
        state = AdmmState(rho=rho0, mu=zeros, eta=zeros.copy())
        records = []
        snapshots = [rho0.copy()]
        while should_continue(state.iteration, state.alpha, params):
            state, cg = admm_step(state, fhd, params, op, hook)
            records.append({
                "iteration": state.iteration,
                "alpha": state.alpha,
                "cg_iterations": cg.iterations,
                "cg_final_residual_sq": cg.final_residual_sq,
            })
            snapshots.append(state.rho.copy())
        timing = {
            "setup_seconds": t_setup,
            "solve_seconds": time.perf_counter() - t0 - t_setup,
        }
        return state.rho, records, snapshots, op.mode, timing

    t_start = time.perf_counter()
    results = run_spmd(n_workers, body, stats=stats, barrier_timeout=barrier_timeout)
    wall = time.perf_counter() - t_start
    image, records, snapshots, resolved_mode, timing = results[0]
    timing["total_seconds"] = wall

    report = RunReport(
        method="admm",
        precision=precision,
        n_workers=n_workers,
        op_mode=resolved_mode,
        grid=grid.shape,
        n_kspace_samples=dataset.n_samples,
        n_coils=dataset.n_coils,
        params=params.to_dict(),
        iterations=records,
        comm=stats.snapshot(),
        timing=timing,
        backend=kernels.active_backend(),
    )
    if compute_objectives:
        obj_mode = "separable" if op_mode == "separable" else "auto"
        full_op = DftOperator.build(coords, grid, maps, mode=obj_mode,
                                    precision=precision,
                                    memory_budget=memory_budget)
        values = [objective(s, data, full_op, params.lam) for s in snapshots]
        report.objective_initial = values[0]
        for rec, val in zip(records, values[1:]):
            rec["objective"] = val
    return image, report


def adjoint_reconstruct(dataset, sens, n_workers=1, precision="double",
                        op_mode="auto", memory_budget=DEFAULT_MEMORY_BUDGET,
                        order_stable=True, barrier_timeout=600.0):
    """Unregularized adjoint image F^H d, sharded the same way as ADMM."""
    validate_precision(precision)
    _check_inputs(dataset, sens)
    grid = sens.grid
    cdt = COMPLEX_DTYPES[precision]
    data = dataset.data.astype(cdt)
    maps = sens
    chunk = default_chunk_size(dataset.n_samples) if order_stable else None
    plan = make_shard_plan(dataset.n_samples, n_workers, chunk_size=chunk)
    coords = dataset.trajectory.coords
    stats = CommStats()

    def body(ctx):
        t0 = time.perf_counter()
        op, hook, (start, stop) = _build_shard(
            ctx, plan, coords, grid, maps, op_mode, precision, memory_budget)
        shard = np.ascontiguousarray(data[start:stop])
        ctx.set_phase("setup")
        image = hook(op.adjoint(shard))
        return image, op.mode, {"setup_seconds": time.perf_counter() - t0}

    t_start = time.perf_counter()
    results = run_spmd(n_workers, body, stats=stats, barrier_timeout=barrier_timeout)
    image, resolved_mode, timing = results[0]
    timing["total_seconds"] = time.perf_counter() - t_start

    report = RunReport(
        method="adjoint",
        precision=precision,
        n_workers=n_workers,
        op_mode=resolved_mode,
        grid=grid.shape,
        n_kspace_samples=dataset.n_samples,
        n_coils=dataset.n_coils,
        params={},
        iterations=[],
        comm=stats.snapshot(),
        timing=timing,
        backend=kernels.active_backend(),
    )
    return image, report
