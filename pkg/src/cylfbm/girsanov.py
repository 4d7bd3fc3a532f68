"""Measure-change machinery: shift inversion to the Wiener frame, stochastic
exponentials, a Novikov-type finiteness bound, and the reweighting estimator
that prices functionals of the drifted process from driftless samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from . import drift as drift_mod
from .cylinder import HurstSequence, WeightSequence, sample_cyl_fbm
from .fbm import DomainError, TimeGrid, as_hurst, kernel_fractional_norm
from .fraccalc import GridFunction, kh_inverse_ac, kh_inverse_matrix

DEFAULT_BLOCK_SIZE = 25_000
LOW_ESS_FRACTION = 0.10


@dataclass(frozen=True)
class ShiftProcess:
    """Per-component shift values u_k(s) on grid nodes.

    ``values`` has shape (d, n_nodes) for deterministic shifts or
    (d, n_nodes, n_paths) for pathwise ones.
    """

    grid: TimeGrid
    values: np.ndarray

    @property
    def d(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class GirsanovWeight:
    """Per-path change-of-measure weights, kept in log form."""

    log_values: np.ndarray
    t_end: float

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_values)


def shift_to_wiener(H, u: GridFunction) -> GridFunction:
    """Wiener-frame integrand of a shift: the inverse transform applied to
    the running integral of u (so the weak derivative handed over is u itself).

    Unit-normalized like :func:`cylfbm.fraccalc.kh_inverse_ac`; the sampling
    kernel's integral operator carries the extra factor
    :func:`cylfbm.fbm.kernel_fractional_norm`.
    """
    return kh_inverse_ac(H, u)


def component_log_weights(shifts: ShiftProcess, increments, hursts: HurstSequence) -> np.ndarray:
    """Log stochastic exponential per component, shape (d, n_paths).

    The Wiener-frame integrand is evaluated at the left node of each cell
    (the adapted choice), which makes the weights exactly mean one for
    adapted shifts, not just in the continuum limit.
    """
    grid = shifts.grid
    h = grid.step
    d = shifts.d
    if len(increments) < d:
        raise DomainError("one increment set per shift component is required")
    n_paths = increments[0].values.shape[0]
    out = np.zeros((d, n_paths))
    for k in range(d):
        H = hursts.value(k + 1)
        M = kh_inverse_matrix(H, grid)
        u = shifts.values[k]
        with np.errstate(invalid="ignore"):
            v = M @ u  # (nodes,) or (nodes, paths)
        if not np.all(np.isfinite(v)):
            raise DomainError(f"non-finite Wiener integrand in component {k + 1}")
        dW = increments[k].values  # (paths, cells)
        if v.ndim == 1:
            stoch = dW @ v[:-1]
            quad = np.sum(v[:-1] ** 2) * h
        else:
            stoch = np.einsum("jp,pj->p", v[:-1], dW)
            quad = np.sum(v[:-1] ** 2, axis=0) * h
        out[k] = -stoch - 0.5 * quad
    return out


def stochastic_exponential(shifts: ShiftProcess, increments, hursts: HurstSequence) -> GirsanovWeight:
    """Joint change-of-measure weight for a multi-component shift.

    The measure change acts dimension-wise: the joint log weight is the sum
    of the per-component log weights in component order.
    """
    logs = component_log_weights(shifts, increments, hursts)
    total = np.zeros(logs.shape[1])
    for k in range(logs.shape[0]):
        total += logs[k]
    return GirsanovWeight(log_values=total, t_end=shifts.grid.t_end)


def novikov_constant(H, t_end: float) -> float:
    """Recorded constant kappa(H): with |u| <= c the quadratic variation of the
    normalized Wiener integrand is bounded by kappa(H) * c^2."""
    H = as_hurst(H)
    factor = special.beta(1.5 - H, 0.5 - H) / (
        special.gamma(0.5 - H) * kernel_fractional_norm(H))
    return 0.5 * factor ** 2 * t_end ** (2.0 - 2 * H) / (2.0 - 2 * H)


def novikov_bound(spec: drift_mod.DriftSpec, hursts: HurstSequence,
                  weights: WeightSequence, t_end: float = 1.0) -> float:
    """Finite upper bound exp(sum_k kappa(H_k) C_k^2) for the exponential moment
    that makes the change of measure a martingale."""
    C = np.asarray(spec.c_bounds, dtype=float)
    if not np.all(np.isfinite(C)):
        raise DomainError("sup-bound constants must be finite")
    total = 0.0
    for k in range(len(C)):
        total += novikov_constant(hursts.value(k + 1), t_end) * C[k] ** 2
    if not math.isfinite(total):
        raise DomainError("divergent exponent sum in the martingale bound")
    return math.exp(total)


# ---------------------------------------------------------------------------
# test functionals
# ---------------------------------------------------------------------------


def make_functional(phi_id: str):
    """Named functionals for estimator targets.

    "coordinate:<i>" picks the 1-based i-th coordinate; "clipped_norm:<cap>"
    is the Euclidean norm clipped at cap (bounded).
    """
    kind, _, arg = phi_id.partition(":")
    if kind == "coordinate":
        i = int(arg or 1) - 1

        def phi(z: np.ndarray) -> np.ndarray:
            return z[i]

        return phi
    if kind == "clipped_norm":
        cap = float(arg or 2.0)

        def phi(z: np.ndarray) -> np.ndarray:
            return np.minimum(np.sqrt(np.sum(z ** 2, axis=0)), cap)

        return phi
    raise DomainError(f"unknown functional id {phi_id!r}")


# ---------------------------------------------------------------------------
# the reweighting estimator
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimatorResult:
    phi_id: str
    t: float
    d: int
    eps: float
    estimate: float
    stderr: float
    n_paths: int
    seed: int
    mean_weight: float
    ess_fraction: float

    @property
    def low_ess(self) -> bool:
        return self.ess_fraction < LOW_ESS_FRACTION

    def to_row(self) -> dict:
        return {
            "phi_id": self.phi_id, "t": self.t, "d": self.d, "eps": self.eps,
            "estimate": self.estimate, "stderr": self.stderr,
            "n_paths": self.n_paths, "seed": self.seed,
        }


def _node_index(grid: TimeGrid, t: float) -> int:
    idx = int(round(t / grid.step))
    if not (0 <= idx <= grid.n_cells) or abs(idx * grid.step - t) > 1e-9 * max(1.0, t):
        raise DomainError(f"evaluation time {t} is not a grid node")
    return idx


def weak_solution_estimator(spec: drift_mod.DriftSpec, phi, x, t: float,
                            hursts: HurstSequence, weights: WeightSequence,
                            d: int, grid: TimeGrid, n_paths: int, seed: int,
                            phi_id: str = "phi", eps: float = float("nan"),
                            block_size: int = DEFAULT_BLOCK_SIZE,
                            drift_eval=None) -> EstimatorResult:
    """Estimate the mean of phi at time t for the drifted process by
    reweighting driftless samples.

    Paths of x + ensemble are drawn under the base measure; each path gets
    the stochastic-exponential weight whose shift is
    -b_k(s, x + path)/(lambda_k * kernel_fractional_norm(H_k)): the kernel
    normalization makes the discrete measure change reproduce the drift b
    exactly, cell by cell.  Returns the weighted average, its standard error,
    and the effective-sample-size fraction (flagged when below 10%).
    """
    if isinstance(phi, str):
        phi_id = phi
        phi = make_functional(phi)
    x = np.asarray(x, dtype=float).reshape(-1)
    if len(x) < d:
        x = np.concatenate([x, np.zeros(d - len(x))])
    lam = weights.head_array(d)
    eval_fn = drift_eval if drift_eval is not None else (
        lambda tt, yy: drift_mod.evaluate(spec, tt, yy)[:d])
    # reject components whose shift b_k / lambda_k is undefined
    probe = eval_fn(0.0, np.zeros((d, 1)))
    for k in range(d):
        if lam[k] == 0.0 and (spec.c_bounds[k] > 0 or abs(float(probe[k])) > 0):
            raise DomainError(f"component {k + 1} has zero weight but non-zero drift")
    idx_t = _node_index(grid, t)
    norm = np.array([kernel_fractional_norm(hursts.value(k + 1)) for k in range(d)])
    inv_mats = [kh_inverse_matrix(hursts.value(k + 1), grid) for k in range(d)]
    nodes = grid.nodes
    h = grid.step

    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    seed_label = int(seed) if isinstance(seed, (int, np.integer)) else -1
    n_blocks = (n_paths + block_size - 1) // block_size
    children = ss.spawn(n_blocks)
    sum_g = 0.0
    sum_g2 = 0.0
    sum_w = 0.0
    sum_w2 = 0.0
    done = 0
    for blk in range(n_blocks):
        m = min(block_size, n_paths - done)
        ens = sample_cyl_fbm(hursts, weights, d, grid, m, children[blk],
                             method="kernel", keep_increments=True)
        X = x[:d, None, None] + ens.values  # (d, nodes, m)
        log_w = np.zeros(m)
        for k in range(d):
            U = np.empty((grid.n_nodes, m))
            for i in range(grid.n_nodes):
                U[i] = eval_fn(nodes[i], X[:, i, :])[k]
            u_eff = -U / (lam[k] * norm[k])
            v = inv_mats[k] @ u_eff
            dW = ens.increments[k].values
            log_w += -np.einsum("jp,pj->p", v[:-1], dW) - 0.5 * np.sum(v[:-1] ** 2, axis=0) * h
        w = np.exp(log_w)
        g = phi(X[:, idx_t, :]) * w
        sum_g += float(np.sum(g))
        sum_g2 += float(np.sum(g * g))
        sum_w += float(np.sum(w))
        sum_w2 += float(np.sum(w * w))
        done += m
    est = sum_g / n_paths
    var = max(sum_g2 / n_paths - est ** 2, 0.0)
    stderr = math.sqrt(var / n_paths)
    ess = (sum_w ** 2 / sum_w2) / n_paths if sum_w2 > 0 else 0.0
    return EstimatorResult(phi_id=phi_id, t=t, d=d, eps=eps, estimate=est,
                           stderr=stderr, n_paths=n_paths, seed=seed_label,
                           mean_weight=sum_w / n_paths, ess_fraction=ess)
