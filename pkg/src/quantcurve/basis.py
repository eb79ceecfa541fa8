"""Multivariate monomial basis ``U(z) = (z^v / v!, |v| <= p)``.

Multi-indices are ordered graded-lexicographically: by total degree first,
then lexicographically on the component vector.  Position 0 is therefore
always the intercept, and all indices of a given degree are contiguous.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DomainError

MAX_ORDER = 10
ORDERING = "graded-lexicographic"


@dataclass(frozen=True, order=True)
class MultiIndex:
    components: tuple[int, ...]

    def __post_init__(self):
        comps = tuple(int(c) for c in self.components)
        if any(c < 0 for c in comps):
            raise DomainError(f"multi-index components must be >= 0, got {comps}")
        object.__setattr__(self, "components", comps)

    @property
    def d(self) -> int:
        return len(self.components)

    @property
    def degree(self) -> int:
        return sum(self.components)

    @property
    def factorial(self) -> int:
        return math.prod(math.factorial(c) for c in self.components)

    def label(self) -> str:
        """Column-name form, e.g. ``b_1_0``."""
        return "b_" + "_".join(str(c) for c in self.components)

    def __str__(self):
        return "(" + ",".join(str(c) for c in self.components) + ")"


def as_multi_index(v, d: int | None = None) -> MultiIndex:
    if isinstance(v, MultiIndex):
        mi = v
    elif np.isscalar(v):
        mi = MultiIndex((int(v),))
    else:
        mi = MultiIndex(tuple(v))
    if d is not None and mi.d != d:
        raise DomainError(f"multi-index {mi} has dimension {mi.d}, expected {d}")
    return mi


@dataclass(frozen=True)
class BasisSpec:
    d: int
    p: int
    indices: tuple[MultiIndex, ...] = field(repr=False)

    @property
    def P(self) -> int:
        return len(self.indices)

    @cached_property
    def powers(self) -> np.ndarray:
        """``(P, d)`` integer array of the index components."""
        return np.array([v.components for v in self.indices], dtype=int).reshape(self.P, self.d)

    @cached_property
    def degrees(self) -> np.ndarray:
        return self.powers.sum(axis=1)

    @cached_property
    def factorials(self) -> np.ndarray:
        return np.array([v.factorial for v in self.indices], dtype=float)

    @cached_property
    def _positions(self) -> dict:
        return {v: k for k, v in enumerate(self.indices)}

    def position(self, v) -> int:
        mi = as_multi_index(v, self.d)
        if mi.degree > self.p:
            raise DomainError(f"|v| = {mi.degree} exceeds polynomial order p = {self.p}")
        return self._positions[mi]

    def header(self) -> str:
        """Serialized ordering, written into every output file."""
        return " ".join(str(v) for v in self.indices)


def enumerate_indices(d: int, p: int) -> BasisSpec:
    """All multi-indices with ``|v| <= p`` in graded-lexicographic order."""
    if int(d) != d or d < 1:
        raise DomainError(f"dimension d must be a positive integer, got {d}")
    if int(p) != p or p < 0:
        raise DomainError(f"order p must be a nonnegative integer, got {p}")
    if p > MAX_ORDER:
        raise DomainError(f"order p = {p} exceeds the supported maximum {MAX_ORDER}")
    d, p = int(d), int(p)
    raw = [v for v in itertools.product(range(p + 1), repeat=d) if sum(v) <= p]
    raw.sort(key=lambda v: (sum(v), v))
    return BasisSpec(d=d, p=p, indices=tuple(MultiIndex(v) for v in raw))


def eval_basis(spec: BasisSpec, z) -> np.ndarray:
    """Evaluate ``U(z)``.

    ``z`` may be a single ``d``-vector (returns shape ``(P,)``) or an
    ``(m, d)`` array of points (returns ``(m, P)``).
    """
    z = np.asarray(z, dtype=float)
    single = z.ndim <= 1
    z = z.reshape(-1, spec.d)
    if not np.all(np.isfinite(z)):
        raise DomainError("basis evaluated at a non-finite point")
    # 0**0 == 1 keeps the intercept column exact
    mono = np.prod(z[:, None, :] ** spec.powers[None, :, :], axis=2)
    out = mono / spec.factorials
    return out[0] if single else out


def scaling_matrix(spec: BasisSpec, h: float) -> np.ndarray:
    """Diagonal of ``H(h)``: entry ``h**|v|`` for each index."""
    if not np.isfinite(h) or h <= 0:
        raise DomainError(f"bandwidth must be positive, got {h}")
    return float(h) ** spec.degrees.astype(float)
