"""Proportional weights: shares, offline value R(alpha) and the weight solver.

A weight vector assigns every advertiser a positive weight; an impression of
type i is split over its neighborhood N_i in proportion to the weights.  The
discrete form stores integer exponents k_a with alpha_a = (1 + eps)^k_a,
0 <= k_a <= T.  Shares are always computed relative to the largest exponent
in the neighborhood, so large T never overflows.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from . import _kernels
from .instance import Instance, InstanceError
from .optimum import opt_value

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """The solver could not certify R(alpha) >= (1 - eps) OPT."""


def pow_table(eps: float, T: int) -> tuple[np.ndarray, np.ndarray]:
    """(1+eps)^k and (1+eps)^-k for k = 0..T, by repeated multiplication."""
    up = np.empty(T + 1)
    down = np.empty(T + 1)
    up[0] = down[0] = 1.0
    base = 1.0 + eps
    with np.errstate(over="ignore", under="ignore"):  # up may reach inf for huge T
        for k in range(1, T + 1):
            up[k] = up[k - 1] * base
            down[k] = down[k - 1] / base
    return up, down


@dataclass(frozen=True, eq=False)
class WeightVector:
    adv_ids: tuple[str, ...]
    exponents: np.ndarray | None = None  # int64, discrete form
    epsilon: float | None = None
    T: int | None = None
    values: np.ndarray | None = None  # float64, continuous form
    info: dict = field(default_factory=dict, compare=False)

    @classmethod
    def discrete(cls, adv_ids, exponents, epsilon: float, T: int, info=None) -> "WeightVector":
        k = np.asarray(exponents, dtype=np.int64)
        if k.shape != (len(adv_ids),):
            raise ValueError("one exponent per advertiser required")
        if not 0 < epsilon < 1:
            raise ValueError(f"epsilon must lie in (0,1), got {epsilon}")
        if T < 1 or np.any(k < 0) or np.any(k > T):
            raise ValueError(f"exponents must lie in [0, T={T}]")
        return cls(tuple(adv_ids), exponents=k, epsilon=float(epsilon), T=int(T), info=dict(info or {}))

    @classmethod
    def continuous(cls, adv_ids, values) -> "WeightVector":
        v = np.asarray(values, dtype=np.float64)
        if v.shape != (len(adv_ids),):
            raise ValueError("one weight per advertiser required")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("weights must be finite and strictly positive")
        return cls(tuple(adv_ids), values=v)

    @classmethod
    def uniform(cls, adv_ids) -> "WeightVector":
        return cls.continuous(adv_ids, np.ones(len(adv_ids)))

    @property
    def is_discrete(self) -> bool:
        return self.exponents is not None

    def alpha(self) -> np.ndarray:
        """Absolute weights; for the discrete form (1+eps)^k may overflow for huge T."""
        if not self.is_discrete:
            return self.values.copy()
        up, _ = pow_table(self.epsilon, int(self.exponents.max(initial=0)))
        return up[self.exponents]

    def log_alpha(self) -> np.ndarray:
        if self.is_discrete:
            return self.exponents * math.log1p(self.epsilon)
        return np.log(self.values)

    def relative(self) -> np.ndarray:
        """Weights rescaled so the largest is 1 (may underflow to 0)."""
        if self.is_discrete:
            top = int(self.exponents.max(initial=0))
            _, down = pow_table(self.epsilon, top)
            return down[top - self.exponents]
        return self.values / self.values.max(initial=1.0)

    def aligned(self, inst: Instance) -> "WeightVector":
        """Reorder to ``inst``'s advertiser order; every advertiser must be covered."""
        if self.adv_ids == inst.adv_ids:
            return self
        pos = {a: k for k, a in enumerate(self.adv_ids)}
        missing = [a for a in inst.adv_ids if a not in pos]
        if missing:
            raise ValueError(f"weight vector has no entry for advertiser {missing[0]!r}")
        idx = np.array([pos[a] for a in inst.adv_ids], dtype=np.int64)
        if self.is_discrete:
            return WeightVector(inst.adv_ids, self.exponents[idx], self.epsilon, self.T, info=self.info)
        return WeightVector(inst.adv_ids, values=self.values[idx], info=self.info)

    def scaled(self, c: float) -> "WeightVector":
        return WeightVector.continuous(self.adv_ids, self.alpha() * c)

    def to_dict(self) -> dict:
        if self.is_discrete:
            return {
                "epsilon": self.epsilon,
                "T": self.T,
                "exponents": {a: int(k) for a, k in zip(self.adv_ids, self.exponents)},
            }
        return {"values": {a: float(v) for a, v in zip(self.adv_ids, self.values)}}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "WeightVector":
        if "exponents" in doc:
            ids = sorted(doc["exponents"])
            return cls.discrete(ids, [doc["exponents"][a] for a in ids], doc["epsilon"], doc["T"])
        if "values" in doc:
            ids = sorted(doc["values"])
            return cls.continuous(ids, [doc["values"][a] for a in ids])
        raise ValueError("weight file needs 'exponents' (with epsilon, T) or 'values'")


def save_weights(w: WeightVector, path: str | Path) -> None:
    Path(path).write_text(json.dumps(w.to_dict(), sort_keys=True) + "\n", encoding="utf-8")


def load_weights(path: str | Path) -> WeightVector:
    return WeightVector.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------


def edge_shares(inst: Instance, w: WeightVector) -> np.ndarray:
    """Share x_ia of every CSR edge slot under weights ``w``."""
    w = w.aligned(inst)
    if inst.num_edges == 0:
        return np.zeros(0)
    et = inst.edge_types
    if w.is_discrete:
        k = w.exponents[inst.indices]
        kmax = np.full(inst.num_types, -1, dtype=np.int64)
        np.maximum.at(kmax, et, k)
        _, down = pow_table(w.epsilon, int(w.exponents.max(initial=0)))
        num = down[kmax[et] - k]
    else:
        num = w.values[inst.indices]
    den = np.bincount(et, weights=num, minlength=inst.num_types)
    return num / den[et]


def proportional_shares(inst: Instance, w: WeightVector, type_id: str) -> dict[str, float]:
    t = inst.type_index[type_id]
    lo, hi = inst.indptr[t], inst.indptr[t + 1]
    if lo == hi:
        raise InstanceError(f"impression {type_id!r} has an empty neighborhood")
    shares = edge_shares(inst, w)[lo:hi]
    return {inst.adv_ids[a]: float(x) for a, x in zip(inst.indices[lo:hi], shares)}


def allocation(inst: Instance, w: WeightVector) -> np.ndarray:
    """Supply-weighted raw allocation Alloc_a (dense advertiser order)."""
    x = edge_shares(inst, w)
    return np.bincount(inst.indices, weights=inst.supplies[inst.edge_types] * x, minlength=inst.n)


def evaluate_offline(inst: Instance, w: WeightVector) -> tuple[float, dict[str, float]]:
    """Offline value R(alpha) = sum_a min(Alloc_a, C_a), with the per-advertiser terms."""
    r = np.minimum(allocation(inst, w), inst.capacities)
    return float(r.sum()), {a: float(v) for a, v in zip(inst.adv_ids, r)}


def initial_T(n: int, eps: float) -> int:
    return math.ceil((1.0 / eps**2) * math.log(max(n, 1) / eps)) + 1


def compute_weights(
    inst: Instance,
    eps: float,
    max_T_doublings: int = 4,
    *,
    audit: bool = False,
) -> WeightVector:
    """Discrete weights with R(alpha) >= (1 - eps) * OPT.

    Every exponent starts at T (zero-capacity advertisers at 0).  The most
    overloaded advertiser, alloc > (1+eps) C_a, loses one exponent step
    until no advertiser with k > 0 is overloaded.  Lowering one weight only
    ever raises the other advertisers' shares, so any advertiser below T
    stays saturated.  If the result misses the guarantee, T is doubled.
    """
    if not 0 < eps < 1:
        raise ValueError(f"epsilon must lie in (0,1), got {eps}")
    opt = opt_value(inst)
    if opt <= 0:
        raise ValueError("compute_weights needs an instance with OPT > 0")
    target = (1.0 - eps) * opt
    tol = 1e-9 * max(1.0, opt)
    a_indptr, a_types = inst.adv_csr()
    supplies = inst.supplies.astype(np.float64)
    caps = np.ascontiguousarray(inst.capacities)

    T = initial_T(inst.n, eps)
    for phase in range(max_T_doublings + 1):
        k = np.where(caps > 0, T, 0).astype(np.int64)
        _, down = pow_table(eps, T)
        updates, violations = _kernels.descend_weights(
            inst.indptr, inst.indices, a_indptr, a_types, supplies, caps, k, down, eps, audit
        )
        if violations:
            raise AssertionError(f"solver monotonicity violated {violations} times")
        w = WeightVector.discrete(
            inst.adv_ids, k, eps, T, info={"updates": int(updates), "phase": phase, "opt": opt}
        )
        value, _ = evaluate_offline(inst, w)
        w.info["value"] = value
        if value >= target - tol:
            return w
        log.info("T=%d reached R=%.6g < (1-eps)OPT=%.6g; doubling T", T, value, target)
        T *= 2
    raise ConvergenceError(
        f"weights reached R={value:.6g} < (1-eps)*OPT={target:.6g} after {max_T_doublings} doublings"
    )


def sample_counts(inst: Instance, sample) -> np.ndarray:
    """Normalize a sample (counts array, id->count mapping, or id iterable) to counts."""
    if isinstance(sample, np.ndarray) and sample.dtype.kind in "iu" and sample.shape == (inst.num_types,):
        return sample.astype(np.int64)
    if not isinstance(sample, Mapping):
        sample = Counter(sample)
    counts = np.zeros(inst.num_types, dtype=np.int64)
    for tid, c in sample.items():
        if tid not in inst.type_index:
            raise InstanceError(f"sampled type {tid!r} is not in the instance")
        counts[inst.type_index[tid]] += int(c)
    return counts


def scaled_subinstance(inst: Instance, sample, sigma: float) -> Instance:
    """Sampled supplies with every capacity scaled by ``sigma``."""
    if not 0 < sigma <= 1:
        raise ValueError(f"sigma must lie in (0,1], got {sigma}")
    return inst.replace(capacities=inst.capacities * sigma, supplies=sample_counts(inst, sample))
