"""SimHash (signed random projection) index over centered keys.

Each of the ``L`` tables hashes a vector to ``K`` sign bits of Gaussian
projections. A key becomes a candidate for a query when their codes agree in at
least ``min_collisions`` tables; the probability of that event has a closed
form in the query/key angle, which is what ``sampling_prob`` evaluates.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.stats import binom

from .errors import ArgumentError, DegenerateError, FormatError, InputValidationError

INDEX_MAGIC = b"MPLI"
INDEX_VERSION = 1
_INDEX_HEADER = struct.Struct("<4sHIIHHQ")


@dataclass(frozen=True)
class LshConfig:
    K: int = 10
    L: int = 150
    min_collisions: int = 2
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.K <= 32:
            raise ArgumentError(f"K must be in [1, 32], got {self.K}")
        if self.min_collisions < 1:
            raise ArgumentError(f"min_collisions must be >= 1, got {self.min_collisions}")
        if self.L < self.min_collisions:
            raise ArgumentError(f"L={self.L} is smaller than min_collisions={self.min_collisions}")
        if not 0 <= self.seed < 2**64:
            raise ArgumentError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class LshIndex:
    """Immutable hash index.

    ``tables[t]`` maps a K-bit code to the ascending array of token ids that
    hash there; ``codes`` keeps the same information as an (n, L) array.
    ``token_ids[j]`` is the id stored for row ``j`` of ``centered_keys``.
    """

    config: LshConfig
    projections: np.ndarray
    centering_vector: np.ndarray
    centered_keys: np.ndarray
    token_ids: np.ndarray
    codes: np.ndarray
    tables: tuple = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.token_ids)

    @property
    def d(self) -> int:
        return self.projections.shape[0]


@dataclass(frozen=True)
class CandidateSet:
    indices: np.ndarray
    collision_counts: np.ndarray
    probs: np.ndarray

    def __len__(self):
        return len(self.indices)


class CollisionProb(NamedTuple):
    p: float
    degenerate: bool


def center_keys(keys) -> tuple[np.ndarray, np.ndarray]:
    keys = np.asarray(keys, dtype=np.float64)
    if keys.ndim != 2 or keys.shape[0] < 1:
        raise InputValidationError("keys must be a non-empty (n, d) matrix")
    c = keys.mean(axis=0)
    return keys - c, c


def mips_transform(q, keys) -> tuple[np.ndarray, np.ndarray]:
    """Append one coordinate so every key has norm ``r = max ||k_i||``.

    Inner products with the (zero-padded) query are unchanged, so ranking by
    cosine in the lifted space equals ranking by inner product.
    """
    q = np.asarray(q, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.float64)
    sq = np.einsum("ij,ij->i", keys, keys)
    r2 = sq.max()
    if r2 == 0:
        raise DegenerateError("all keys are zero; maximum norm r is 0")
    extra = np.sqrt(np.maximum(r2 - sq, 0.0))
    return np.append(q, 0.0), np.column_stack([keys, extra])


def draw_projections(d: int, config: LshConfig) -> np.ndarray:
    """(d, K*L) standard normal matrix; column ``t*K + b`` is bit ``b`` of table ``t``."""
    gen = np.random.default_rng(config.seed)
    return gen.standard_normal((d, config.K * config.L))


def _pack_codes(dots: np.ndarray, K: int, L: int) -> np.ndarray:
    bits = (dots >= 0).reshape(dots.shape[:-1] + (L, K))
    # float64 holds 2**32 exactly, so a matmul packs the bits without overflow.
    return (bits @ np.exp2(np.arange(K))).astype(np.uint32)


def encode(x, projections: np.ndarray, K: int, L: int) -> np.ndarray:
    """SimHash codes of one vector (-> (L,)) or of rows of a matrix (-> (m, L))."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != projections.shape[0]:
        raise InputValidationError(
            f"vector length {x.shape[-1]} does not match projection dimension {projections.shape[0]}"
        )
    return _pack_codes(x @ projections, K, L)


def simhash_encode(x, index: LshIndex) -> np.ndarray:
    """L codes of ``x``; bit ``b`` of table ``t`` is set iff ``x . W[:, t*K+b] >= 0``."""
    return encode(x, index.projections, index.config.K, index.config.L)


class HashTable:
    """One table's buckets: ``members[starts[j]:starts[j+1]]`` hash to ``codes[j]``."""

    __slots__ = ("codes", "starts", "members")

    def __init__(self, codes, starts, members):
        self.codes = codes
        self.starts = starts
        self.members = members

    def __len__(self):
        return len(self.codes)

    def __contains__(self, code):
        j = np.searchsorted(self.codes, code)
        return bool(j < len(self.codes) and self.codes[j] == code)

    def __getitem__(self, code):
        j = int(np.searchsorted(self.codes, code))
        if j == len(self.codes) or self.codes[j] != code:
            raise KeyError(code)
        return self.members[self.starts[j]:self.starts[j + 1]]

    def get(self, code, default=None):
        try:
            return self[code]
        except KeyError:
            return default

    def items(self):
        for j, code in enumerate(self.codes.tolist()):
            yield code, self.members[self.starts[j]:self.starts[j + 1]]

    def __eq__(self, other):
        return (
            isinstance(other, HashTable)
            and np.array_equal(self.codes, other.codes)
            and np.array_equal(self.starts, other.starts)
            and np.array_equal(self.members, other.members)
        )


def _build_tables(codes: np.ndarray, token_ids: np.ndarray) -> tuple:
    # Stable sort keeps rows (hence ascending token ids) ordered inside buckets.
    order = np.argsort(codes, axis=0, kind="stable")
    sorted_codes = np.take_along_axis(codes, order, axis=0)
    n = codes.shape[0]
    tables = []
    for t in range(codes.shape[1]):
        col = sorted_codes[:, t]
        starts = np.flatnonzero(np.r_[True, col[1:] != col[:-1]])
        tables.append(HashTable(col[starts], np.r_[starts, n], token_ids[order[:, t]]))
    return tuple(tables)


def build_index(keys, config: LshConfig, token_ids=None) -> LshIndex:
    """Center ``keys``, hash every row and fill the ``L`` tables.

    ``token_ids`` labels the rows (defaults to ``0..n-1``); buckets and query
    results are expressed in these labels.
    """
    keys = np.asarray(keys, dtype=np.float64)
    if keys.ndim != 2 or keys.shape[0] == 0:
        raise DegenerateError("cannot build an index over zero keys")
    n, d = keys.shape
    if token_ids is None:
        token_ids = np.arange(n, dtype=np.int64)
    else:
        token_ids = np.asarray(token_ids, dtype=np.int64)
        if token_ids.shape != (n,) or not _is_sorted(token_ids):
            raise InputValidationError("token_ids must be n strictly ascending integers")
    centered, c = center_keys(keys)
    proj = draw_projections(d, config)
    codes = encode(centered, proj, config.K, config.L)
    return LshIndex(
        config=config,
        projections=proj,
        centering_vector=c,
        centered_keys=centered,
        token_ids=token_ids,
        codes=codes,
        tables=_build_tables(codes, token_ids),
    )


def _angles(q: np.ndarray, keys: np.ndarray) -> np.ndarray:
    # 2*atan2(|a-b|, |a+b|) on unit vectors; unlike arccos(cos) it keeps full
    # precision for nearly parallel or antiparallel pairs.
    a = q / np.linalg.norm(q)
    b = keys / np.linalg.norm(keys, axis=1, keepdims=True)
    return 2.0 * np.arctan2(np.linalg.norm(a - b, axis=1), np.linalg.norm(a + b, axis=1))


def collision_prob(q, k) -> CollisionProb:
    """Single-bit SimHash collision probability ``1 - angle(q, k) / pi``.

    A zero vector has no direction; ``p`` is then 0.5 and ``degenerate`` is set.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    if not np.linalg.norm(q) > 0 or not np.linalg.norm(k) > 0:
        return CollisionProb(0.5, True)
    return CollisionProb(float(1.0 - _angles(q, k[None, :])[0] / np.pi), False)


def collision_probs(q, keys) -> np.ndarray:
    """Vectorized ``collision_prob`` of ``q`` against every row of ``keys``."""
    q = np.asarray(q, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.float64)
    p = np.full(len(keys), 0.5)
    if not np.linalg.norm(q) > 0:
        return p
    ok = np.linalg.norm(keys, axis=1) > 0
    p[ok] = 1.0 - _angles(q, keys[ok]) / np.pi
    return p


def sampling_prob(p, K: int, L: int, min_collisions: int = 2):
    """Probability that a key collides with the query in >= ``min_collisions`` of ``L`` tables.

    Per table the collision probability is ``p**K``, so the count is
    Binomial(L, p**K). For ``min_collisions = 2`` this is
    ``1 - (1 - p^K)^L - L p^K (1 - p^K)^(L-1)``; the binomial survival function
    evaluates it without cancellation when ``p^K`` is tiny.
    """
    if K < 1 or L < 1 or min_collisions < 1 or L < min_collisions:
        raise ArgumentError(f"invalid (K={K}, L={L}, min_collisions={min_collisions})")
    p_arr = np.asarray(p, dtype=np.float64)
    if np.any((p_arr < 0) | (p_arr > 1)):
        raise ArgumentError("collision probability must lie in [0, 1]")
    u = binom.sf(min_collisions - 1, L, p_arr**K)
    return float(u) if np.ndim(u) == 0 else u


def expected_budget(K: int, L: int, min_collisions: int = 2) -> float:
    """Expected sampled fraction when every query/key bit is a fair coin."""
    return sampling_prob(0.5, K, L, min_collisions)


def query_candidates(index: LshIndex, q) -> CandidateSet:
    """Tokens whose code matches the query's in at least ``min_collisions`` tables.

    The query is hashed as-is; only keys were centered. ``probs`` holds the
    sampling probability implied by the true angle between ``q`` and each
    candidate's centered key.
    """
    q = np.asarray(q, dtype=np.float64)
    cfg = index.config
    q_codes = simhash_encode(q, index)
    hits = [
        bucket
        for table, code in zip(index.tables, q_codes.tolist())
        if (bucket := table.get(code)) is not None
    ]
    if hits:
        ids, counts = np.unique(np.concatenate(hits), return_counts=True)
    else:
        ids = counts = np.zeros(0, dtype=np.int64)
    keep = counts >= cfg.min_collisions
    ids, counts = ids[keep], counts[keep]
    rows = np.searchsorted(index.token_ids, ids)
    p = collision_probs(q, index.centered_keys[rows])
    u = np.atleast_1d(sampling_prob(p, cfg.K, cfg.L, cfg.min_collisions))
    return CandidateSet(ids.astype(np.int64), counts.astype(np.int64), u.astype(np.float64))


def _is_sorted(a: np.ndarray) -> bool:
    return bool(np.all(a[1:] > a[:-1]))


def save_index(index: LshIndex) -> bytes:
    """Serialize to the little-endian ``MPLI`` layout.

    Header ``"MPLI", u16 version, u32 n, u32 d, u16 K, u16 L, u64 seed``; then
    per table a u32 bucket count followed by ``(u32 code, u32 count,
    u32 token_id * count)`` runs in ascending code order.
    """
    cfg = index.config
    parts = [_INDEX_HEADER.pack(INDEX_MAGIC, INDEX_VERSION, index.n, index.d, cfg.K, cfg.L, cfg.seed)]
    for table in index.tables:
        parts.append(struct.pack("<I", len(table)))
        for code, ids in table.items():
            parts.append(struct.pack("<II", code, len(ids)))
            parts.append(np.asarray(ids, dtype="<u4").tobytes())
    return b"".join(parts)


def load_index(data: bytes, keys, min_collisions: int = 2, verify: bool = True) -> LshIndex:
    """Rebuild an index from ``save_index`` bytes.

    The blob does not carry key vectors, so ``keys`` must hold the raw keys of
    the indexed tokens, one row per token id in ascending id order. With
    ``verify`` the stored buckets are checked against a fresh hash of ``keys``.
    """
    if len(data) < _INDEX_HEADER.size:
        raise FormatError(
            f"index blob too short: need {_INDEX_HEADER.size} header bytes, got {len(data)}", 0
        )
    magic, version, n, d, K, L, seed = _INDEX_HEADER.unpack_from(data, 0)
    if magic != INDEX_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {INDEX_MAGIC!r}", 0)
    if version != INDEX_VERSION:
        raise FormatError(f"unsupported index version {version}", 4)
    config = LshConfig(K=K, L=L, min_collisions=min_collisions, seed=seed)
    off = _INDEX_HEADER.size
    tables = []
    all_ids = None

    def need(nbytes):
        if off + nbytes > len(data):
            raise FormatError(
                f"truncated index: need {off + nbytes} bytes, have {len(data)}", off
            )

    for t in range(L):
        need(4)
        (nbuckets,) = struct.unpack_from("<I", data, off)
        off += 4
        codes, starts, members = [], [0], []
        for _ in range(nbuckets):
            need(8)
            code, count = struct.unpack_from("<II", data, off)
            off += 8
            need(4 * count)
            codes.append(code)
            members.append(np.frombuffer(data, dtype="<u4", count=count, offset=off).astype(np.int64))
            starts.append(starts[-1] + count)
            off += 4 * count
        members = np.concatenate(members) if members else np.zeros(0, np.int64)
        tables.append(HashTable(np.array(codes, dtype=np.uint32), np.array(starts, dtype=np.int64), members))
        ids = np.sort(members)
        if len(ids) != n:
            raise FormatError(f"table {t} holds {len(ids)} entries, header says n={n}", off)
        if all_ids is None:
            all_ids = ids
        elif not np.array_equal(all_ids, ids):
            raise FormatError(f"table {t} indexes a different token set", off)
    if off != len(data):
        raise FormatError(f"{len(data) - off} trailing bytes after last table", off)

    keys = np.asarray(keys, dtype=np.float64)
    if keys.shape != (n, d):
        raise InputValidationError(f"keys must have shape ({n}, {d}), got {keys.shape}")
    rebuilt = build_index(keys, config, token_ids=all_ids)
    if verify:
        for t, (a, b) in enumerate(zip(tables, rebuilt.tables)):
            if a != b:
                raise FormatError(f"table {t} does not match the supplied keys")
    return rebuilt
