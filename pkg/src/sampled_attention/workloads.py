"""Synthetic workload generators and the ``MPWL`` binary workload format."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import AttentionWorkload
from .errors import ConfigError, FormatError

WORKLOAD_MAGIC = b"MPWL"
WORKLOAD_VERSION = 1
_HEADER = struct.Struct("<4sHII")

KINDS = ("gaussian", "cone", "longtail", "file", "zoo")

# Logit offset given to the sink tokens of a longtail workload before scaling.
LONGTAIL_SINK_OFFSET = 8.0


@dataclass(frozen=True)
class WorkloadSpec:
    """Parameters for ``gen_workload``.

    ``temperature`` divides the logit scale. For ``longtail``, setting
    ``top20_mass`` overrides it: the scale is bisected so the top 20% of tokens
    hold that share of attention weight.
    """

    kind: str = "gaussian"
    n: int = 1024
    d: int = 64
    temperature: float = 1.0
    cone_angle: float = 0.3
    sink_flip: bool = True
    sink_tokens: int = 4
    top20_mass: float | None = None
    path: str | None = None
    seed: int = 0

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown workload kind {self.kind!r}; expected one of {KINDS}", "kind")
        if self.kind == "file":
            if not self.path:
                raise ConfigError("file workloads need a path", "path")
            return
        if self.kind == "zoo":
            return
        if self.n < 1:
            raise ConfigError(f"must be >= 1, got {self.n}", "n")
        if self.d < 1:
            raise ConfigError(f"must be >= 1, got {self.d}", "d")
        if not self.temperature > 0:
            raise ConfigError(f"must be > 0, got {self.temperature}", "temperature")
        if not 0 < self.cone_angle < np.pi:
            raise ConfigError(f"must lie in (0, pi), got {self.cone_angle}", "cone_angle")
        if self.sink_tokens < 0:
            raise ConfigError("must be >= 0", "sink_tokens")
        if self.top20_mass is not None and not 0.2 < self.top20_mass < 1.0:
            raise ConfigError(f"must lie in (0.2, 1), got {self.top20_mass}", "top20_mass")


def zoo_workload() -> AttentionWorkload:
    """100 equally weighted tokens with scalar values 10x50, 10x20, 10x10, 70x1."""
    values = np.array([50.0] * 10 + [20.0] * 10 + [10.0] * 10 + [1.0] * 70)[:, None]
    return AttentionWorkload(q=np.zeros(1), keys=np.zeros((100, 1)), values=values)


def top_fraction_mass(weights, fraction: float = 0.2) -> float:
    """Share of total weight held by the largest ``ceil(fraction * n)`` entries."""
    w = np.sort(np.asarray(weights, dtype=np.float64))[::-1]
    m = max(1, int(np.ceil(fraction * len(w))))
    return float(w[:m].sum() / w.sum())


def _softmax(x):
    z = np.exp(x - x.max())
    return z / z.sum()


def calibrate_scale(base_logits, target_mass: float, fraction: float = 0.2, iters: int = 100) -> float:
    """Bisect the factor ``s`` so that ``softmax(s * base_logits)`` puts ``target_mass``
    on its top ``fraction`` of tokens. The mass is nondecreasing in ``s``."""
    mass = lambda s: top_fraction_mass(_softmax(s * base_logits), fraction)
    lo, hi = 0.0, 1.0
    while mass(hi) < target_mass:
        hi *= 2.0
        if hi > 1e6:
            raise ConfigError(f"top-{fraction:.0%} mass {target_mass} is unreachable", "top20_mass")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if mass(mid) < target_mass:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _unit(v):
    return v / np.linalg.norm(v)


def _orthogonal_units(gen, m, axis):
    z = gen.standard_normal((m, len(axis)))
    z -= np.outer(z @ axis, axis)
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def _gaussian(spec: WorkloadSpec, gen) -> AttentionWorkload:
    q = gen.standard_normal(spec.d) / spec.temperature
    keys = gen.standard_normal((spec.n, spec.d))
    values = gen.standard_normal((spec.n, spec.d))
    return AttentionWorkload(q, keys, values)


def _longtail(spec: WorkloadSpec, gen) -> AttentionWorkload:
    # A few sink tokens with a large logit offset over a Gaussian tail; keys are
    # constructed so q.k_i / sqrt(d) reproduces the target logits exactly.
    n, d = spec.n, spec.d
    base = gen.standard_normal(n)
    base[: min(spec.sink_tokens, n)] += LONGTAIL_SINK_OFFSET
    if spec.top20_mass is not None:
        scale = calibrate_scale(base, spec.top20_mass)
    else:
        scale = 1.0 / spec.temperature
    logits = scale * base
    direction = _unit(gen.standard_normal(d))
    keys = gen.standard_normal((n, d))
    keys -= np.outer(keys @ direction, direction)
    keys += np.outer(logits, direction)
    q = np.sqrt(d) * direction
    values = gen.standard_normal((n, d))
    return AttentionWorkload(q, keys, values)


def _cone(spec: WorkloadSpec, gen) -> AttentionWorkload:
    # Keys within cone_angle of a shared axis, the query in the opposite cone.
    # With sink_flip, key 0 points back toward the query like an attention sink.
    n, d = spec.n, spec.d
    radius = np.sqrt(d)
    axis = _unit(gen.standard_normal(d))
    alpha = gen.uniform(0.0, spec.cone_angle, size=n)
    side = _orthogonal_units(gen, n, axis) if d > 1 else np.zeros((n, d))
    keys = radius * (np.cos(alpha)[:, None] * axis + np.sin(alpha)[:, None] * side)
    beta = gen.uniform(0.0, spec.cone_angle)
    q_side = _orthogonal_units(gen, 1, axis)[0] if d > 1 else np.zeros(d)
    q = (radius / spec.temperature) * (-np.cos(beta) * axis + np.sin(beta) * q_side)
    if spec.sink_flip:
        gamma = gen.uniform(0.0, spec.cone_angle)
        keys[0] = radius * (-np.cos(gamma) * axis + np.sin(gamma) * side[0])
    values = gen.standard_normal((n, d))
    return AttentionWorkload(q, keys, values)


_GENERATORS = {"gaussian": _gaussian, "longtail": _longtail, "cone": _cone}


def gen_workload(spec: WorkloadSpec) -> AttentionWorkload:
    """Deterministic workload for ``spec`` (same spec and seed, same arrays)."""
    spec.validate()
    if spec.kind == "file":
        return read_workload(spec.path)
    if spec.kind == "zoo":
        return zoo_workload()
    gen = np.random.default_rng(spec.seed)
    return _GENERATORS[spec.kind](spec, gen)


def workload_to_bytes(workload: AttentionWorkload) -> bytes:
    header = _HEADER.pack(WORKLOAD_MAGIC, WORKLOAD_VERSION, workload.n, workload.d)
    body = [np.ascontiguousarray(a, dtype="<f4").tobytes() for a in (workload.q, workload.keys, workload.values)]
    return header + b"".join(body)


def workload_from_bytes(data: bytes) -> AttentionWorkload:
    if len(data) < _HEADER.size:
        raise FormatError(
            f"truncated workload: expected at least {_HEADER.size} header bytes, got {len(data)}",
            len(data),
        )
    magic, version, n, d = _HEADER.unpack_from(data, 0)
    if magic != WORKLOAD_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {WORKLOAD_MAGIC!r}", 0)
    if version != WORKLOAD_VERSION:
        raise FormatError(f"unsupported version {version}, expected {WORKLOAD_VERSION}", 4)
    expected = _HEADER.size + 4 * (d + 2 * n * d)
    if len(data) != expected:
        kind = "truncated" if len(data) < expected else "oversized"
        raise FormatError(
            f"{kind} workload: expected {expected} bytes for n={n}, d={d}, got {len(data)}",
            min(len(data), expected),
        )
    off = _HEADER.size
    q = np.frombuffer(data, "<f4", d, off)
    off += 4 * d
    keys = np.frombuffer(data, "<f4", n * d, off).reshape(n, d)
    off += 4 * n * d
    values = np.frombuffer(data, "<f4", n * d, off).reshape(n, d)
    return AttentionWorkload(q, keys, values)


def write_workload(workload: AttentionWorkload, path) -> None:
    """Write ``workload`` as ``MPWL`` (little-endian, float32 payload)."""
    Path(path).write_bytes(workload_to_bytes(workload))


def read_workload(path) -> AttentionWorkload:
    return workload_from_bytes(Path(path).read_bytes())
