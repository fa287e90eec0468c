"""Partitions, coalition bitmasks, utility tables and the CLS design matrices.

A coalition is a plain ``int`` bitmask over group indices: bit ``j`` set means
group ``j`` belongs to the coalition.  ``0`` is the empty coalition and
``(1 << n) - 1`` is the grand coalition.  The canonical order of coalitions is
ascending mask value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import CapacityError, ConfigError, DomainError, IncompleteTableError

MAX_ENUMERATION_GROUPS = 25

CoalitionMask = int


def full_mask(n_groups: int) -> CoalitionMask:
    return (1 << n_groups) - 1


def mask_from_indices(indices: Iterable[int]) -> CoalitionMask:
    mask = 0
    for i in indices:
        mask |= 1 << int(i)
    return mask


def mask_indices(mask: CoalitionMask) -> list[int]:
    """Group indices in ``mask``, ascending."""
    out, i = [], 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return out


def mask_size(mask: CoalitionMask) -> int:
    return int(mask).bit_count()


def mask_key(mask: CoalitionMask) -> str:
    """File key of a coalition: comma-joined ascending group indices, e.g. ``"0,2"``."""
    return ",".join(str(i) for i in mask_indices(mask))


def parse_mask_key(key: str, n_groups: int) -> CoalitionMask:
    """Inverse of :func:`mask_key`; accepts only proper non-empty coalitions."""
    if not isinstance(key, str) or key.strip() == "":
        raise DomainError(f"invalid coalition key {key!r}")
    try:
        parts = [int(p) for p in key.split(",")]
    except ValueError:
        raise DomainError(f"invalid coalition key {key!r}") from None
    if parts != sorted(set(parts)):
        raise DomainError(f"coalition key {key!r} is not strictly ascending")
    if parts[0] < 0 or parts[-1] >= n_groups:
        raise DomainError(f"coalition key {key!r} out of range for {n_groups} groups")
    mask = mask_from_indices(parts)
    if mask == full_mask(n_groups):
        raise DomainError(f"coalition key {key!r} is the grand coalition; use 'grand'")
    return mask


@dataclass(frozen=True)
class GroupPartition:
    """Named groups forming a partition of the base parameters.

    ``members`` is optional; when given it maps every group label to the base
    parameter names in that group.
    """

    groups: tuple[str, ...]
    members: Mapping[str, tuple[str, ...]] | None = None

    def __post_init__(self):
        groups = tuple(self.groups)
        if len(groups) < 1:
            raise ConfigError("a partition needs at least one group")
        for g in groups:
            if not isinstance(g, str) or not g:
                raise ConfigError(f"group labels must be non-empty strings, got {g!r}")
        if len(set(groups)) != len(groups):
            raise ConfigError(f"duplicate group labels in {groups}")
        object.__setattr__(self, "groups", groups)
        if self.members is not None:
            if set(self.members) != set(groups):
                raise ConfigError("member lists must be given for exactly the declared groups")
            seen: dict[str, str] = {}
            frozen = {}
            for g in groups:
                names = tuple(self.members[g])
                for name in names:
                    if name in seen:
                        raise ConfigError(f"parameter {name!r} is in both {seen[name]!r} and {g!r}")
                    seen[name] = g
                frozen[g] = names
            object.__setattr__(self, "members", MappingProxyType(frozen))

    @classmethod
    def singletons(cls, names: Sequence[str]) -> "GroupPartition":
        return cls(tuple(names), {n: (n,) for n in names})

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    @property
    def parameters(self) -> tuple[str, ...]:
        """The base parameter set P, in group order (empty without member lists)."""
        if self.members is None:
            return ()
        return tuple(p for g in self.groups for p in self.members[g])

    def index(self, label: str) -> int:
        return self.groups.index(label)

    def group_of(self, parameter: str) -> int:
        if self.members is None:
            raise ConfigError("partition has no member lists")
        for j, g in enumerate(self.groups):
            if parameter in self.members[g]:
                return j
        raise ConfigError(f"parameter {parameter!r} is not in any group")

    def parameters_in(self, mask: CoalitionMask) -> tuple[str, ...]:
        """Union of the member lists of the groups in ``mask``."""
        if self.members is None:
            raise ConfigError("partition has no member lists")
        return tuple(p for j in mask_indices(mask) for p in self.members[self.groups[j]])

    def covers(self, parameters: Iterable[str]) -> bool:
        return set(self.parameters) == set(parameters)

    def __len__(self):
        return len(self.groups)


def enumerate_proper_coalitions(partition: GroupPartition | int) -> list[CoalitionMask]:
    """All proper non-empty coalitions in ascending mask order."""
    n = partition if isinstance(partition, int) else partition.n_groups
    if n > MAX_ENUMERATION_GROUPS:
        raise CapacityError(
            f"{n} groups exceed the enumeration cap of {MAX_ENUMERATION_GROUPS}; use sampling"
        )
    if n < 2:
        return []
    return list(range(1, full_mask(n)))


def kernel_weight(n_groups: int, coalition_size: int) -> float:
    """Shapley kernel weight ``1 / C(n_groups - 2, coalition_size - 1)``."""
    if n_groups < 2 or not 1 <= coalition_size <= n_groups - 1:
        raise DomainError(
            f"kernel weight needs n_groups >= 2 and 1 <= size <= n_groups - 1, "
            f"got ({n_groups}, {coalition_size})"
        )
    return 1.0 / math.comb(n_groups - 2, coalition_size - 1)


class UtilityTable:
    """Values ``g`` of every proper non-empty coalition plus the grand value.

    ``g(empty) = 0`` is implicit.  Proper coalitions absent from ``values`` are
    recorded as missing.
    """

    __slots__ = ("partition", "entries", "grand", "missing")

    def __init__(self, partition: GroupPartition, values: Mapping[CoalitionMask, float], grand: float):
        n = partition.n_groups
        if n > MAX_ENUMERATION_GROUPS:
            raise CapacityError(f"{n} groups exceed the table cap of {MAX_ENUMERATION_GROUPS}")
        full = full_mask(n)
        entries = {}
        for mask, v in values.items():
            mask = int(mask)
            if not 0 < mask < full:
                raise DomainError(f"mask {mask} is not a proper non-empty coalition of {n} groups")
            v = float(v)
            if not math.isfinite(v):
                raise DomainError(f"utility for coalition {mask_key(mask)} is not finite")
            entries[mask] = v
        grand = float(grand)
        if not math.isfinite(grand):
            raise DomainError("grand value is not finite")
        self.partition = partition
        self.entries = MappingProxyType(dict(sorted(entries.items())))
        self.grand = grand
        self.missing = frozenset(m for m in range(1, full) if m not in entries)

    @classmethod
    def from_function(cls, partition: GroupPartition, g) -> "UtilityTable":
        """Tabulate ``g(mask)`` over every proper coalition and the grand coalition."""
        n = partition.n_groups
        values = {m: g(m) for m in enumerate_proper_coalitions(partition)}
        return cls(partition, values, g(full_mask(n)))

    @classmethod
    def from_vector(cls, partition: GroupPartition, g_vec, grand: float) -> "UtilityTable":
        masks = enumerate_proper_coalitions(partition)
        g_vec = np.asarray(g_vec, dtype=float).ravel()
        if g_vec.shape[0] != len(masks):
            raise DomainError(f"expected {len(masks)} utilities, got {g_vec.shape[0]}")
        return cls(partition, dict(zip(masks, g_vec.tolist())), grand)

    @property
    def n_groups(self) -> int:
        return self.partition.n_groups

    @property
    def is_complete(self) -> bool:
        return not self.missing

    def require_complete(self) -> None:
        if self.missing:
            raise IncompleteTableError(sorted(self.missing))

    def value(self, mask: CoalitionMask) -> float:
        if mask == 0:
            return 0.0
        if mask == full_mask(self.n_groups):
            return self.grand
        try:
            return self.entries[mask]
        except KeyError:
            raise IncompleteTableError([mask]) from None

    def vector(self) -> np.ndarray:
        """Utilities of the proper coalitions in canonical order (complete tables only)."""
        self.require_complete()
        return np.fromiter(self.entries.values(), dtype=float, count=len(self.entries))

    def dense(self) -> np.ndarray:
        """Array of length ``2**n`` indexed by mask, with ``g(0) = 0`` and the grand value last."""
        self.require_complete()
        out = np.empty(1 << self.n_groups)
        out[0] = 0.0
        out[-1] = self.grand
        if self.n_groups >= 2:
            out[1:-1] = self.vector()
        return out

    def hide(self, masks: Iterable[CoalitionMask]) -> "UtilityTable":
        hidden = set(masks)
        return UtilityTable(
            self.partition, {m: v for m, v in self.entries.items() if m not in hidden}, self.grand
        )

    def with_values(self, values: Mapping[CoalitionMask, float]) -> "UtilityTable":
        merged = dict(self.entries)
        merged.update(values)
        return UtilityTable(self.partition, merged, self.grand)

    def __eq__(self, other):
        if not isinstance(other, UtilityTable):
            return NotImplemented
        return (
            self.partition == other.partition
            and dict(self.entries) == dict(other.entries)
            and self.grand == other.grand
        )

    def __repr__(self):
        return (
            f"UtilityTable(groups={self.partition.groups}, entries={len(self.entries)}, "
            f"missing={len(self.missing)}, grand={self.grand!r})"
        )


@dataclass(frozen=True)
class DesignSystem:
    """Rows of ``D`` are proper coalitions in ascending mask order."""

    masks: tuple[CoalitionMask, ...]
    D: np.ndarray
    K: np.ndarray = field(repr=False)
    g_vec: np.ndarray = field(repr=False)

    @property
    def weights(self) -> np.ndarray:
        return np.diag(self.K).copy()


def design_matrix(masks: Sequence[CoalitionMask], n_groups: int) -> np.ndarray:
    masks_arr = np.asarray(masks, dtype=np.int64)
    return ((masks_arr[:, None] >> np.arange(n_groups)) & 1).astype(float)


def kernel_weights(n_groups: int, masks: Sequence[CoalitionMask]) -> np.ndarray:
    by_size = {s: kernel_weight(n_groups, s) for s in range(1, n_groups)}
    return np.array([by_size[mask_size(m)] for m in masks], dtype=float)


def build_design_system(table: UtilityTable) -> DesignSystem:
    table.require_complete()
    n = table.n_groups
    masks = tuple(enumerate_proper_coalitions(table.partition))
    D = design_matrix(masks, n)
    K = np.diag(kernel_weights(n, masks))
    for arr in (D, K):
        arr.setflags(write=False)
    g_vec = table.vector()
    g_vec.setflags(write=False)
    return DesignSystem(masks, D, K, g_vec)
