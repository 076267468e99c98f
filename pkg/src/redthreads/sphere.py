"""Sphere-of-replication domain types and the pure comparison/voting logic.

Everything in this module is side-effect free and safe to call from any
thread.
"""

from __future__ import annotations

import enum
import math
import struct
import time
from dataclasses import dataclass, field
from typing import Any, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from redthreads import core
from redthreads.errors import ShapeError, SpecError

__all__ = [
    "Strength", "ComparePolicy", "BITWISE", "SphereSpec", "OutputRecord",
    "Match", "MATCH", "Mismatch", "Unanimous", "MajorityCorrected", "NoMajority",
    "validate_spec", "compare_outputs", "majority_vote", "payloads_match",
]


class Strength(enum.IntEnum):
    OFF = 0
    DETECT = 1
    CORRECT = 2

    @property
    def replica_count(self) -> int:
        return int(self) + 1

    @classmethod
    def parse(cls, text) -> "Strength":
        if isinstance(text, Strength):
            return text
        try:
            return cls[str(text).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown strength {text!r}; expected off, detect or correct") from None

    def __str__(self) -> str:
        return self.name.lower()


@dataclass(frozen=True)
class ComparePolicy:
    """How replica payloads are judged equal.

    ``tolerance=None`` means bitwise equality. A number means elements
    match when ``|a - b| <= tolerance`` (bitwise-identical elements always
    match, so two identical NaNs are equal under either mode).
    """

    tolerance: Optional[float] = None

    @classmethod
    def bitwise(cls) -> "ComparePolicy":
        return BITWISE

    @classmethod
    def absolute(cls, eps: float) -> "ComparePolicy":
        return cls(float(eps))

    @property
    def is_bitwise(self) -> bool:
        return self.tolerance is None

    def to_json(self):
        return "bitwise" if self.tolerance is None else {"absolute_tolerance": self.tolerance}


BITWISE = ComparePolicy()


def _names(seq) -> Tuple[str, ...]:
    if isinstance(seq, str):
        return (seq,)
    return tuple(seq)


@dataclass(frozen=True, eq=False)
class SphereSpec:
    """Declarative description of one sphere of replication.

    ``shared_vars`` are passed to every replica by reference,
    ``private_vars`` are copied per replica and ``compare_vars`` name the
    outputs checked at the barrier. Construction never fails; call
    :func:`validate_spec` (the runtime does so on first use).
    """

    id: str
    strength_requested: Strength = Strength.DETECT
    shared_vars: Sequence[str] = ()
    private_vars: Sequence[str] = ()
    compare_vars: Sequence[str] = ()
    compare_policy: ComparePolicy = BITWISE
    _validated: bool = field(default=False, init=False, repr=False)
    _required: frozenset = field(default=frozenset(), init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "strength_requested", Strength.parse(self.strength_requested))
        object.__setattr__(self, "shared_vars", _names(self.shared_vars))
        object.__setattr__(self, "private_vars", _names(self.private_vars))
        object.__setattr__(self, "compare_vars", _names(self.compare_vars))
        object.__setattr__(self, "_required", frozenset(self.shared_vars + self.private_vars))


def validate_spec(spec: SphereSpec) -> None:
    """Raise :class:`SpecError` unless every SphereSpec invariant holds."""
    overlap = set(spec.shared_vars) & set(spec.private_vars)
    if overlap:
        raise SpecError("OverlappingScopes", ", ".join(sorted(overlap)))
    if len(set(spec.shared_vars)) != len(spec.shared_vars) or \
            len(set(spec.private_vars)) != len(spec.private_vars):
        raise SpecError("OverlappingScopes", "name repeated within a scoping list")
    if spec.strength_requested != Strength.OFF and not spec.compare_vars:
        raise SpecError("EmptyCompareList", f"sphere {spec.id!r}")
    tol = spec.compare_policy.tolerance
    if tol is not None and not tol >= 0.0:
        raise SpecError("NegativeTolerance", repr(tol))
    object.__setattr__(spec, "_validated", True)


class OutputRecord(NamedTuple):
    """Values one replica produced for the sphere's compare list, in order."""

    sphere_id: Any
    replica_index: int
    values: Tuple[Tuple[str, Any], ...]
    produced_at: float = 0.0

    @classmethod
    def build(cls, sphere_id, replica_index, names, payloads) -> "OutputRecord":
        return cls(sphere_id, replica_index, tuple(zip(names, payloads)), time.monotonic())

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(n for n, _ in self.values)

    def get(self, name):
        for n, v in self.values:
            if n == name:
                return v
        raise KeyError(name)

    def as_dict(self) -> dict:
        return dict(self.values)

    def replace_value(self, name, payload) -> "OutputRecord":
        if name not in self.names:
            raise KeyError(name)
        vals = tuple((n, payload if n == name else v) for n, v in self.values)
        return self._replace(values=vals)


# -- outcomes ---------------------------------------------------------------

@dataclass(frozen=True)
class Match:
    matched = True


MATCH = Match()


@dataclass(frozen=True)
class Mismatch:
    first_divergent: str
    replicas: Tuple[int, ...]
    reason: str = "value"
    matched = False


@dataclass(frozen=True)
class Unanimous:
    values: Tuple[Tuple[str, Any], ...]


@dataclass(frozen=True)
class MajorityCorrected:
    values: Tuple[Tuple[str, Any], ...]
    outvoted: int


@dataclass(frozen=True)
class NoMajority:
    first_divergent: str


# -- payload comparison ----------------------------------------------------

_pack = struct.Struct("<d").pack


def _float_match(x: float, y: float, tol) -> bool:
    if x == y:
        # 0.0 == -0.0 but their bits differ
        return x != 0.0 or tol is not None or math.copysign(1.0, x) == math.copysign(1.0, y)
    if tol is not None and abs(x - y) <= tol:
        return True
    return _pack(x) == _pack(y)


def _array_match(x: np.ndarray, y: np.ndarray, tol) -> bool:
    if x.shape != y.shape or x.dtype != y.dtype:
        raise ShapeError(f"payload shape/dtype {x.shape}/{x.dtype} vs {y.shape}/{y.dtype}")
    x = np.ascontiguousarray(x)
    y = np.ascontiguousarray(y)
    if tol is None or x.dtype.kind not in "fiu":
        return core.bytes_equal(x, y)
    if x.dtype == np.float64:
        return core.first_mismatch_tol(x.reshape(-1), y.reshape(-1), float(tol)) < 0
    if x.dtype.kind == "f":
        with np.errstate(invalid="ignore", over="ignore"):
            close = np.abs(x.astype(np.float64) - y.astype(np.float64)) <= tol
        return bool(np.all(close | (x.view(f"u{x.itemsize}") == y.view(f"u{y.itemsize}"))))
    # integers: exact arithmetic, no wraparound
    diff = np.abs(x.astype(object) - y.astype(object))
    return bool(np.all(diff <= tol))


def payloads_match(x, y, policy: ComparePolicy = BITWISE) -> bool:
    """Compare one pair of payloads under ``policy``; ShapeError on type drift."""
    tol = policy.tolerance
    if isinstance(x, np.ndarray) or isinstance(y, np.ndarray):
        if not (isinstance(x, np.ndarray) and isinstance(y, np.ndarray)):
            raise ShapeError("array payload paired with a scalar")
        return _array_match(x, y, tol)
    if isinstance(x, float):
        if not isinstance(y, float):
            raise ShapeError(f"payload type {type(x).__name__} vs {type(y).__name__}")
        return _float_match(x, y, tol)
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        if not isinstance(y, (int, np.integer)) or isinstance(y, bool):
            raise ShapeError(f"payload type {type(x).__name__} vs {type(y).__name__}")
        if tol is None:
            return int(x) == int(y)
        return abs(int(x) - int(y)) <= tol
    if type(x) is not type(y):
        raise ShapeError(f"payload type {type(x).__name__} vs {type(y).__name__}")
    return x == y


def _check_pair(a: OutputRecord, b: OutputRecord):
    if a.sphere_id != b.sphere_id:
        raise ShapeError(f"records from spheres {a.sphere_id!r} and {b.sphere_id!r}")
    if len(a.values) != len(b.values) or any(
            na != nb for (na, _), (nb, _) in zip(a.values, b.values)):
        raise ShapeError("records carry different value names")


def compare_outputs(a: OutputRecord, b: OutputRecord, policy: ComparePolicy = BITWISE):
    """Return :data:`MATCH` or a :class:`Mismatch` naming the first divergent value."""
    av, bv = a.values, b.values
    if a.sphere_id != b.sphere_id or len(av) != len(bv):
        _check_pair(a, b)
    for (na, x), (nb, y) in zip(av, bv):
        if na != nb:
            raise ShapeError("records carry different value names")
        if type(x) is float and type(y) is float and x == y and x != 0.0:
            continue
        if not payloads_match(x, y, policy):
            return Mismatch(na, (a.replica_index, b.replica_index))
    return MATCH


def majority_vote(a: OutputRecord, b: OutputRecord, c: OutputRecord,
                  policy: ComparePolicy = BITWISE):
    """Two-out-of-three vote, resolved independently for every compared value.

    The outvoted replica reported by :class:`MajorityCorrected` is the one
    that diverged on the first value where any replica diverged.
    """
    _check_pair(a, b)
    _check_pair(a, c)
    recs = (a, b, c)
    agreed = []
    outvoted = None
    for k, (name, _) in enumerate(a.values):
        xs = [r.values[k][1] for r in recs]
        m01 = payloads_match(xs[0], xs[1], policy)
        m02 = payloads_match(xs[0], xs[2], policy)
        m12 = payloads_match(xs[1], xs[2], policy)
        if m01 and m02:
            # under a tolerance 1 and 2 may still differ; 0 is close to both
            agreed.append((name, xs[0]))
        elif m01:
            agreed.append((name, xs[0]))
            outvoted = recs[2].replica_index if outvoted is None else outvoted
        elif m02:
            agreed.append((name, xs[0]))
            outvoted = recs[1].replica_index if outvoted is None else outvoted
        elif m12:
            agreed.append((name, xs[1]))
            outvoted = recs[0].replica_index if outvoted is None else outvoted
        else:
            return NoMajority(name)
    if outvoted is None:
        return Unanimous(tuple(agreed))
    return MajorityCorrected(tuple(agreed), outvoted)
