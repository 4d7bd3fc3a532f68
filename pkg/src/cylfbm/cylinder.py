"""Weighted cylindrical fractional Brownian motion on a truncated basis.

Hurst and weight sequences are explicit heads plus a geometric tail rule, so
the summability constraints are certified analytically instead of by numeric
truncation.  Ensembles carry one independent scalar component per basis
direction, each scaled by its weight.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

from .fbm import (
    DomainError,
    LndConstants,
    TimeGrid,
    WienerIncrements,
    fbm_from_increments,
    sample_fbm,
    wiener_increments,
)

SUP_HURST_LIMIT = 1.0 / 12.0
SUM_HURST_LIMIT = 1.0 / 6.0

_BINARY_MAGIC = b"CYLE"


class SequenceConstraintError(ValueError):
    """A parameter sequence violates one of its summability constraints."""


def _geometric_tail_sum(last_head: float, ratio: float) -> float:
    """Sum of last_head * ratio^j for j >= 1 (the tail beyond the heads)."""
    return last_head * ratio / (1.0 - ratio)


@dataclass(frozen=True)
class HurstSequence:
    """Hurst indices H_k: explicit heads, then a geometric tail H_k = H_dmax * ratio^(k-dmax).

    Constraints certified at construction: every index in (0, 1/2), the
    supremum below 1/12, the full sum below 1/6, and strict decrease to 0.
    """

    heads: tuple
    tail_ratio: float
    sup_value: float = field(init=False, default=0.0)
    total_sum: float = field(init=False, default=0.0)

    def __post_init__(self):
        heads = tuple(float(h) for h in self.heads)
        object.__setattr__(self, "heads", heads)
        if not heads:
            raise SequenceConstraintError("at least one explicit head is required")
        if not (0.0 < self.tail_ratio < 1.0):
            raise SequenceConstraintError(
                f"tail ratio must lie in (0,1) for decrease to 0, got {self.tail_ratio}")
        for h in heads:
            if not (0.0 < h < 0.5):
                raise SequenceConstraintError(f"Hurst index {h} outside (0, 1/2)")
        diffs = np.diff(heads)
        if len(heads) > 1 and not np.all(diffs < 0):
            raise SequenceConstraintError("Hurst heads must be strictly decreasing")
        sup = max(heads)
        total = sum(heads) + _geometric_tail_sum(heads[-1], self.tail_ratio)
        if not sup < SUP_HURST_LIMIT:
            raise SequenceConstraintError(
                f"sup_k H_k = {sup} >= 1/12 = {SUP_HURST_LIMIT:.6f}")
        if not total < SUM_HURST_LIMIT:
            raise SequenceConstraintError(
                f"sum_k H_k = {total} >= 1/6 = {SUM_HURST_LIMIT:.6f}")
        object.__setattr__(self, "sup_value", sup)
        object.__setattr__(self, "total_sum", total)

    @classmethod
    def geometric(cls, first: float, ratio: float, d_max: int) -> "HurstSequence":
        heads = tuple(first * ratio ** k for k in range(d_max))
        return cls(heads=heads, tail_ratio=ratio)

    @property
    def d_max(self) -> int:
        return len(self.heads)

    def value(self, k: int) -> float:
        """H_k for 1-based component index k, following the tail rule beyond the heads."""
        if k < 1:
            raise DomainError("component indices are 1-based")
        if k <= len(self.heads):
            return self.heads[k - 1]
        return self.heads[-1] * self.tail_ratio ** (k - len(self.heads))

    def head_array(self, d: int) -> np.ndarray:
        return np.array([self.value(k) for k in range(1, d + 1)])


@dataclass(frozen=True)
class WeightSequence:
    """Component weights lambda_k >= 0: explicit heads plus a geometric tail.

    Square-summability is certified from the tail rule at construction; the
    mixed constraint sum_k lambda_k / sqrt(H_k) < infinity involves the Hurst
    sequence and is certified by :func:`validate_sequence_pair`.
    """

    heads: tuple
    tail_ratio: float
    sum_squares: float = field(init=False, default=0.0)

    def __post_init__(self):
        heads = tuple(float(w) for w in self.heads)
        object.__setattr__(self, "heads", heads)
        if not heads:
            raise SequenceConstraintError("at least one explicit head is required")
        if not (0.0 <= self.tail_ratio < 1.0):
            raise SequenceConstraintError(
                f"weight tail ratio must lie in [0,1), got {self.tail_ratio}")
        for w in heads:
            if w < 0.0:
                raise SequenceConstraintError(f"weights must be non-negative, got {w}")
        sq = sum(w * w for w in heads)
        if self.tail_ratio > 0.0:
            sq += _geometric_tail_sum(heads[-1] ** 2, self.tail_ratio ** 2)
        object.__setattr__(self, "sum_squares", sq)

    @classmethod
    def geometric(cls, first: float, ratio: float, d_max: int) -> "WeightSequence":
        heads = tuple(first * ratio ** k for k in range(d_max))
        return cls(heads=heads, tail_ratio=ratio)

    @property
    def d_max(self) -> int:
        return len(self.heads)

    def value(self, k: int) -> float:
        if k < 1:
            raise DomainError("component indices are 1-based")
        if k <= len(self.heads):
            return self.heads[k - 1]
        return self.heads[-1] * self.tail_ratio ** (k - len(self.heads))

    def head_array(self, d: int) -> np.ndarray:
        return np.array([self.value(k) for k in range(1, d + 1)])


def validate_sequence_pair(hs: HurstSequence, ws: WeightSequence) -> float:
    """Certify sum_k lambda_k / sqrt(H_k) < infinity; return the sum.

    Head terms are summed exactly; the tail is a geometric series with ratio
    w_ratio / sqrt(h_ratio), which must be below 1.
    """
    d = max(hs.d_max, ws.d_max)
    head = sum(ws.value(k) / np.sqrt(hs.value(k)) for k in range(1, d + 1))
    tail_ratio = ws.tail_ratio / np.sqrt(hs.tail_ratio)
    if ws.value(d) == 0.0:
        return head
    if not tail_ratio < 1.0:
        raise SequenceConstraintError(
            "sum_k lambda_k/sqrt(H_k) diverges: tail ratio "
            f"{ws.tail_ratio}/sqrt({hs.tail_ratio}) = {tail_ratio} >= 1")
    last = ws.value(d) / np.sqrt(hs.value(d))
    return head + _geometric_tail_sum(last, tail_ratio)


SEQUENCE_PRESETS = {
    # H_k = 0.08 * 2^-(k-1): sup 0.08 < 1/12, sum 0.16 < 1/6.
    # lambda_k = 2^-k: tail ratio 1/2 < sqrt(1/2).
    "default": {
        "hurst_first": 0.08,
        "hurst_ratio": 0.5,
        "weight_first": 0.5,
        "weight_ratio": 0.5,
        "d_max": 8,
    },
}


def make_sequences(preset) -> tuple:
    """Build a validated (HurstSequence, WeightSequence) pair.

    ``preset`` is a preset name or a dict with keys hurst_first, hurst_ratio,
    weight_first, weight_ratio, d_max.  Constraint violations raise with the
    violated inequality named.
    """
    if isinstance(preset, str):
        try:
            params = SEQUENCE_PRESETS[preset]
        except KeyError:
            raise SequenceConstraintError(f"unknown sequence preset {preset!r}") from None
    else:
        params = dict(preset)
    d_max = int(params.get("d_max", 8))
    hs = HurstSequence.geometric(params["hurst_first"], params["hurst_ratio"], d_max)
    ws = WeightSequence.geometric(params["weight_first"], params["weight_ratio"], d_max)
    validate_sequence_pair(hs, ws)
    return hs, ws


# ---------------------------------------------------------------------------
# basis bookkeeping
# ---------------------------------------------------------------------------


def change_of_basis(x: np.ndarray) -> np.ndarray:
    """Coordinates of x relative to the working orthonormal basis.

    Both bases are orthonormal and aligned, so this is the identity on the
    coordinate array; it exists as a named map so compositions read the same
    way as in the construction it implements.
    """
    return np.asarray(x)


def change_of_basis_inverse(y: np.ndarray) -> np.ndarray:
    """Inverse of :func:`change_of_basis` (coordinate identity)."""
    return np.asarray(y)


def truncate_vector(x: np.ndarray, d: int) -> np.ndarray:
    """Project onto the first d coordinates (zero-pad semantics preserved)."""
    out = np.zeros_like(x)
    out[:d] = x[:d]
    return out


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CylEnsemble:
    """Sampled weighted ensemble: values (d, n_nodes, n_paths).

    ``increments`` retains the per-component Wiener increments when the
    kernel construction produced the ensemble (needed by measure-change and
    perturbation machinery); Cholesky sampling leaves it None.
    """

    d: int
    grid: TimeGrid
    values: np.ndarray
    seed: int
    hursts: HurstSequence
    weights: WeightSequence
    increments: tuple | None = None

    @property
    def n_paths(self) -> int:
        return self.values.shape[2]


def component_seed_sequences(seed, d: int) -> list:
    """Deterministic per-component seed streams; prefix-stable in d."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(d)


def sample_cyl_fbm(hs: HurstSequence, ws: WeightSequence, d: int, grid: TimeGrid,
                   n_paths: int, seed: int, method: str = "cholesky",
                   cell_rule: str = "cell_average",
                   keep_increments: bool = False) -> CylEnsemble:
    """Sample d independent weighted components on the grid.

    Component k is lambda_k times a scalar sample with index H_k, drawn from
    an independent substream spawned per component (fixed order), so the
    first d' components coincide path-by-path with a d'-truncated run.
    The default exact-law factorization has no driving increments; request
    the kernel construction with ``keep_increments`` when the measure-change
    machinery needs them.
    """
    if d < 1 or d > max(hs.d_max, 10**6):
        raise DomainError("truncation level must be >= 1")
    if n_paths < 1:
        raise DomainError("n_paths must be at least 1")
    children = component_seed_sequences(seed, d)
    lam = ws.head_array(d)
    values = np.empty((d, grid.n_nodes, n_paths))
    incs = [] if (keep_increments and method == "kernel") else None
    for k in range(d):
        H = hs.value(k + 1)
        if method == "kernel":
            inc = wiener_increments(grid, n_paths, children[k])
            path = fbm_from_increments(H, inc, cell_rule)
            if incs is not None:
                incs.append(inc)
        elif method == "cholesky":
            path = sample_fbm(H, grid, n_paths, children[k], method="cholesky")
        else:
            raise DomainError(f"unknown sampling method {method!r}")
        values[k] = lam[k] * path.values.T
    seed_label = int(seed) if isinstance(seed, (int, np.integer)) else -1
    return CylEnsemble(d=d, grid=grid, values=values, seed=seed_label, hursts=hs,
                       weights=ws, increments=tuple(incs) if incs is not None else None)


_DIAG_KINDS = ("Q_sqrt", "K_sqrt", "Q_sqrt_inv", "K_sqrt_inv")


def apply_diag_operator(target, which: str, weights: WeightSequence | None = None,
                        lnd: list | None = None):
    """Coordinatewise scaling by lambda_k, sqrt of the non-determinism constant,
    or their reciprocals.

    ``target`` is a CylEnsemble or an array whose leading axis indexes
    components.  K variants need per-component LndConstants (or floats).
    """
    if which not in _DIAG_KINDS:
        raise DomainError(f"unknown diagonal operator {which!r}")
    if isinstance(target, CylEnsemble):
        d = target.d
        arr = target.values
        weights = weights or target.weights
    else:
        arr = np.asarray(target, dtype=float)
        d = arr.shape[0]
    if which.startswith("Q"):
        if weights is None:
            raise DomainError("weight sequence required for Q scaling")
        diag = weights.head_array(d)
    else:
        if lnd is None:
            raise DomainError("non-determinism constants required for K scaling")
        vals = [c.estimate if isinstance(c, LndConstants) else float(c) for c in lnd]
        diag = np.sqrt(np.asarray(vals[:d]))
    if which.endswith("_inv"):
        if np.any(diag == 0.0):
            raise DomainError("zero diagonal entry is not invertible")
        diag = 1.0 / diag
    shape = (d,) + (1,) * (arr.ndim - 1)
    scaled = arr * diag.reshape(shape)
    if isinstance(target, CylEnsemble):
        return CylEnsemble(d=target.d, grid=target.grid, values=scaled,
                           seed=target.seed, hursts=target.hursts,
                           weights=target.weights, increments=target.increments)
    return scaled


def composite_scaling(ws: WeightSequence, lnd: list, d: int) -> np.ndarray:
    """Per-component factors lambda_k * sqrt(K_k) used by the drift-class checks."""
    vals = np.asarray([c.estimate if isinstance(c, LndConstants) else float(c)
                       for c in lnd][:d])
    return ws.head_array(d) * np.sqrt(vals)


def sup_norm_diagnostic(ens: CylEnsemble) -> float:
    """Monte Carlo estimate of the expected running supremum of the ensemble norm."""
    norms = np.sqrt(np.sum(ens.values ** 2, axis=0))  # (nodes, paths)
    return float(np.mean(np.max(norms, axis=0)))


def weighted_inverse_sqrt_hurst_sum(hs: HurstSequence, ws: WeightSequence, d: int) -> float:
    """Partial sum of lambda_k / sqrt(H_k) over the first d components."""
    return float(sum(ws.value(k) / np.sqrt(hs.value(k)) for k in range(1, d + 1)))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def save_ensemble_binary(ens: CylEnsemble, path) -> None:
    """Flat binary layout: magic, (d, n_nodes, n_paths, seed) int64, row-major float64."""
    with open(path, "wb") as fh:
        fh.write(_BINARY_MAGIC)
        fh.write(struct.pack("<qqqq", ens.d, ens.grid.n_nodes, ens.n_paths, ens.seed))
        fh.write(struct.pack("<d", ens.grid.t_end))
        fh.write(np.ascontiguousarray(ens.values, dtype="<f8").tobytes())


def load_ensemble_binary(path, hursts: HurstSequence, weights: WeightSequence) -> CylEnsemble:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _BINARY_MAGIC:
            raise DomainError("not an ensemble file")
        d, n_nodes, n_paths, seed = struct.unpack("<qqqq", fh.read(32))
        (t_end,) = struct.unpack("<d", fh.read(8))
        raw = np.frombuffer(fh.read(), dtype="<f8")
    values = raw.reshape(d, n_nodes, n_paths).copy()
    grid = TimeGrid(t_end, n_nodes - 1)
    return CylEnsemble(d=d, grid=grid, values=values, seed=seed,
                       hursts=hursts, weights=weights)


def save_ensemble_csv(ens: CylEnsemble, path) -> None:
    """Long-format CSV (component, node_index, time, path, value) for small cases."""
    nodes = ens.grid.nodes
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["component", "node", "time", "path", "value"])
        for k in range(ens.d):
            for i in range(ens.grid.n_nodes):
                for p in range(ens.n_paths):
                    writer.writerow([k + 1, i, f"{nodes[i]:.17g}",
                                     p, f"{ens.values[k, i, p]:.17g}"])
