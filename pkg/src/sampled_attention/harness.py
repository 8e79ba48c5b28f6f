"""Experiment runner: budget sweeps over estimators, CSV output, and small reports.

Experiment configs are flat ``key = value`` text files (``#`` starts a
comment, lists are comma separated)::

    seed = 1234
    trials = 200
    methods = topk, oracle
    budgets = 0.01, 0.02
    workload.kind = longtail
    workload.n = 16384
    workload.d = 64
    workload.top20_mass = 0.75
    lsh.K = 10
    lsh.L = 75, 150
"""

from __future__ import annotations

import csv
import io
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    AttentionWorkload,
    attention_scores,
    full_attention,
    relative_error,
    topk_attention,
)
from .errors import ConfigError
from .lsh import LshConfig, expected_budget, query_candidates
from .magicpig import StaticCachePolicy, build_dynamic_index, magicpig_estimate
from .rng import RandomSource
from .sampling import (
    attention_proposal,
    expected_unique_count,
    oracle_estimate,
    oracle_sample,
    oracle_theoretical_stddev,
    snis_estimate,
    uniform_proposal,
    value_norm_proposal,
)
from .workloads import WorkloadSpec, gen_workload, zoo_workload

METHODS = ("topk", "oracle", "snis", "magicpig")
CSV_HEADER = ("method", "config", "budget", "err_mean", "err_std", "cost1", "cost2", "trials")
SNIS_PROPOSALS = ("uniform", "attention", "value_norm")
ORACLE_BUDGET_MODES = ("samples", "unique")


@dataclass(frozen=True)
class ExperimentConfig:
    workload: WorkloadSpec = field(default_factory=WorkloadSpec)
    methods: tuple = ("topk", "oracle")
    budgets: tuple = (0.02,)
    trials: int = 10
    seed: int | None = None
    K: tuple = (10,)
    L: tuple = (150,)
    min_collisions: int = 2
    static: StaticCachePolicy = field(default_factory=StaticCachePolicy)
    snis_proposal: str = "uniform"
    oracle_budget: str = "samples"

    def validate(self):
        self.workload.validate()
        if not self.methods:
            raise ConfigError("at least one method is required", "methods")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigError(f"unknown method {m!r}; expected a subset of {METHODS}", "methods")
        needs_budget = any(m != "magicpig" for m in self.methods)
        if needs_budget and not self.budgets:
            raise ConfigError("at least one budget is required", "budgets")
        for b in self.budgets:
            if not 0 < b <= 1:
                raise ConfigError(f"budget fractions must lie in (0, 1], got {b}", "budgets")
        if self.trials < 1:
            raise ConfigError(f"must be >= 1, got {self.trials}", "trials")
        if self.seed is None:
            raise ConfigError("a master seed is required for sweeps", "seed")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("must be an unsigned 64-bit integer", "seed")
        if "magicpig" in self.methods:
            for K in self.K:
                for L in self.L:
                    try:
                        LshConfig(K, L, self.min_collisions)
                    except ValueError as exc:
                        raise ConfigError(str(exc), "lsh") from None
        if self.snis_proposal not in SNIS_PROPOSALS:
            raise ConfigError(f"expected one of {SNIS_PROPOSALS}", "snis.proposal")
        if self.oracle_budget not in ORACLE_BUDGET_MODES:
            raise ConfigError(f"expected one of {ORACLE_BUDGET_MODES}", "oracle.budget")


def _as_int(v):
    return int(v, 0) if isinstance(v, str) else int(v)


def _as_bool(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _as_list(conv):
    return lambda v: tuple(conv(x.strip()) for x in str(v).split(",") if x.strip())


def _optional_float(v):
    return None if str(v).strip().lower() in ("", "none") else float(v)


_WORKLOAD_KEYS = {
    "kind": str,
    "n": _as_int,
    "d": _as_int,
    "temperature": float,
    "cone_angle": float,
    "sink_flip": _as_bool,
    "sink_tokens": _as_int,
    "top20_mass": _optional_float,
    "path": str,
    "seed": _as_int,
}
_TOP_KEYS = {
    "methods": ("methods", _as_list(str)),
    "budgets": ("budgets", _as_list(float)),
    "trials": ("trials", _as_int),
    "seed": ("seed", _as_int),
    "lsh.K": ("K", _as_list(_as_int)),
    "lsh.L": ("L", _as_list(_as_int)),
    "lsh.min_collisions": ("min_collisions", _as_int),
    "snis.proposal": ("snis_proposal", str),
    "oracle.budget": ("oracle_budget", str),
}
_STATIC_KEYS = {"static.sink": "sink_count", "static.local": "local_window"}


def parse_kv(text: str) -> dict:
    """Parse ``key = value`` lines into a dict (later keys win)."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def config_from_dict(values: dict) -> ExperimentConfig:
    """Build and validate an ``ExperimentConfig``; errors name the offending key."""
    top, wl, static = {}, {}, {}
    workload_seed_given = False
    for key, raw in values.items():
        try:
            if key.startswith("workload."):
                name = key[len("workload."):]
                if name not in _WORKLOAD_KEYS:
                    raise ConfigError("unknown key", key)
                wl[name] = _WORKLOAD_KEYS[name](raw)
                workload_seed_given |= name == "seed"
            elif key in _STATIC_KEYS:
                static[_STATIC_KEYS[key]] = _as_int(raw)
            elif key in _TOP_KEYS:
                name, conv = _TOP_KEYS[key]
                top[name] = conv(raw)
            else:
                raise ConfigError("unknown key", key)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value {raw!r} ({exc})", key) from None
    try:
        policy = StaticCachePolicy(**static)
    except ValueError as exc:
        raise ConfigError(str(exc), "static") from None
    if not workload_seed_given and top.get("seed") is not None:
        wl["seed"] = top["seed"]
    cfg = ExperimentConfig(workload=WorkloadSpec(**wl), static=policy, **top)
    cfg.validate()
    return cfg


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    values = parse_kv(Path(path).read_text())
    values.update(overrides or {})
    return config_from_dict(values)


@dataclass(frozen=True)
class SweepRow:
    method: str
    config: str
    budget: float
    err_mean: float
    err_std: float
    cost1: float
    cost2: float
    trials: int


@dataclass
class SweepResult:
    rows: list

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow(
                [r.method, r.config, repr(float(r.budget)), repr(float(r.err_mean)),
                 repr(float(r.err_std)), repr(float(r.cost1)), repr(float(r.cost2)), r.trials]
            )
        return buf.getvalue()

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv())

    @classmethod
    def from_csv(cls, text: str) -> "SweepResult":
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ConfigError(f"unexpected CSV header {header!r}")
        rows = []
        for rec in reader:
            method, config, budget, em, es, c1, c2, trials = rec
            rows.append(SweepRow(method, config, float(budget), float(em), float(es),
                                 float(c1), float(c2), int(trials)))
        return cls(rows)

    @classmethod
    def read_csv(cls, path) -> "SweepResult":
        return cls.from_csv(Path(path).read_text())


@dataclass(frozen=True)
class _Cell:
    method: str
    config: str
    budget: float
    param: object


def _oracle_samples_for_unique(weights, target: float) -> int:
    # Largest B whose expected unique count stays within target; grows
    # geometrically then bisects since E|S| is increasing in B.
    if expected_unique_count(weights, 1).expected > target:
        return 1
    lo, hi = 1, 2
    while expected_unique_count(weights, hi).expected <= target:
        lo, hi = hi, hi * 2
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if expected_unique_count(weights, mid).expected <= target:
            lo = mid
        else:
            hi = mid
    return lo


def _plan_cells(cfg: ExperimentConfig, workload: AttentionWorkload):
    n = workload.n
    weights = attention_scores(workload).weights
    cells = []
    for method in cfg.methods:
        if method == "magicpig":
            for K in cfg.K:
                for L in cfg.L:
                    cells.append(
                        _Cell(method, f"K={K},L={L}",
                              expected_budget(K, L, cfg.min_collisions), (K, L))
                    )
            continue
        for b in cfg.budgets:
            count = max(1, min(n, int(round(b * n))))
            if method == "topk":
                cells.append(_Cell(method, f"k={count}", b, count))
            elif method == "oracle":
                if cfg.oracle_budget == "unique":
                    count = _oracle_samples_for_unique(weights, b * n)
                cells.append(_Cell(method, f"B={count}", b, count))
            else:
                cells.append(_Cell(method, f"B={count},u={cfg.snis_proposal}", b, count))
    return cells


def _snis_proposal(cfg, workload):
    if cfg.snis_proposal == "attention":
        return attention_proposal(workload)
    if cfg.snis_proposal == "value_norm":
        return value_norm_proposal(workload)
    return uniform_proposal(workload.n)


def run_sweep(cfg: ExperimentConfig, threads: int = 1, workload: AttentionWorkload | None = None,
              out=None) -> SweepResult:
    """Run every (method, budget) cell for ``cfg.trials`` trials.

    Each trial draws from its own stream ``RandomSource(seed, cell).child(trial)``
    and results are aggregated in (cell, trial) order, so the output does not
    depend on ``threads``.
    """
    cfg.validate()
    if workload is None:
        workload = gen_workload(cfg.workload)
    reference = full_attention(workload).output
    weights = attention_scores(workload).weights
    cells = _plan_cells(cfg, workload)
    proposal = _snis_proposal(cfg, workload) if "snis" in cfg.methods else None

    def trial(job):
        ci, t = job
        cell = cells[ci]
        src = RandomSource(cfg.seed, ci).child(t)
        if cell.method == "topk":
            est = topk_attention(workload, cell.param)
        elif cell.method == "oracle":
            est = oracle_estimate(workload, oracle_sample(weights, cell.param, src))
        elif cell.method == "snis":
            est = snis_estimate(workload, proposal, cell.param, src)
        else:
            K, L = cell.param
            lsh_seed = int(src.generator().integers(0, 2**63))
            index = build_dynamic_index(
                workload, cfg.static, LshConfig(K, L, cfg.min_collisions, lsh_seed)
            )
            est = magicpig_estimate(workload, index, cfg.static).estimate
        return relative_error(est.output, reference), est.cost1, est.cost2

    jobs = [(ci, t) for ci in range(len(cells)) for t in range(cfg.trials)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(trial, jobs))
    else:
        results = [trial(j) for j in jobs]

    rows = []
    for ci, cell in enumerate(cells):
        chunk = np.array(results[ci * cfg.trials:(ci + 1) * cfg.trials])
        errs = chunk[:, 0]
        rows.append(
            SweepRow(
                method=cell.method,
                config=cell.config,
                budget=float(cell.budget),
                err_mean=float(errs.mean()),
                err_std=float(errs.std(ddof=1)) if len(errs) > 1 else 0.0,
                cost1=float(chunk[:, 1].mean()),
                cost2=float(chunk[:, 2].mean()),
                trials=cfg.trials,
            )
        )
    result = SweepResult(rows)
    if out is not None:
        result.write_csv(out)
    return result


def zoo_demo(trials: int = 10_000, seed: int = 0, file=None) -> dict:
    """Print the zoo comparison of TopK and sampling; returns the printed numbers."""
    file = sys.stdout if file is None else file
    zoo = zoo_workload()
    weights = attention_scores(zoo).weights
    src = RandomSource(seed)
    empirical = np.array(
        [oracle_estimate(zoo, oracle_sample(weights, 10, src.child(t))).output[0] for t in range(trials)]
    )
    report = {
        "true_average": float(full_attention(zoo).output[0]),
        "topk_37": float(topk_attention(zoo, 37).output[0]),
        "topk_47": float(topk_attention(zoo, 47).output[0]),
        "std_b10": oracle_theoretical_stddev(zoo, 10),
        "std_b20": oracle_theoretical_stddev(zoo, 20),
        "empirical_mean_b10": float(empirical.mean()),
        "empirical_std_b10": float(empirical.std(ddof=1)),
    }
    print("zoo: 10 elephants (50 lb), 10 pigs (20 lb), 10 tigers (10 lb), 70 others (1 lb)", file=file)
    print(f"  true average              {report['true_average']:.4f} lb", file=file)
    print(f"  TopK, 37 animals          {report['topk_37']:.4f} lb", file=file)
    print(f"  TopK, 47 animals          {report['topk_47']:.4f} lb", file=file)
    print(f"  sampling std, B=10        {report['std_b10']:.4f} lb", file=file)
    print(f"  sampling std, B=20        {report['std_b20']:.4f} lb", file=file)
    print(f"  empirical B=10 ({trials} trials): mean {report['empirical_mean_b10']:.4f}, "
          f"std {report['empirical_std_b10']:.4f}", file=file)
    return report


@dataclass(frozen=True)
class BudgetCell:
    K: int
    L: int
    theoretical: float
    empirical: float | None = None


def budget_table(Ks, Ls, min_collisions: int = 2, workload: AttentionWorkload | None = None,
                 reseeds: int = 10, seed: int = 0,
                 policy: StaticCachePolicy = StaticCachePolicy(0, 0)) -> list:
    """Expected sampled fraction for each (K, L); with ``workload``, also the
    measured fraction of dynamic tokens sampled, averaged over reseeded indexes."""
    cells = []
    src = RandomSource(seed)
    for K in Ks:
        for L in Ls:
            theo = expected_budget(K, L, min_collisions)
            emp = None
            if workload is not None:
                fracs = []
                for r in range(reseeds):
                    lsh_seed = int(src.child(r).generator().integers(0, 2**63))
                    index = build_dynamic_index(workload, policy, LshConfig(K, L, min_collisions, lsh_seed))
                    if index is None:
                        raise ConfigError("static cache covers the whole workload", "static")
                    fracs.append(len(query_candidates(index, workload.q)) / index.n)
                emp = float(np.mean(fracs))
            cells.append(BudgetCell(K, L, theo, emp))
    return cells


def budget_table_csv(cells) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(("K", "L", "theoretical", "empirical"))
    for c in cells:
        writer.writerow((c.K, c.L, repr(c.theoretical), "" if c.empirical is None else repr(c.empirical)))
    return buf.getvalue()


def format_budget_grid(cells) -> str:
    Ks = sorted({c.K for c in cells})
    Ls = sorted({c.L for c in cells})
    lookup = {(c.K, c.L): c for c in cells}
    lines = ["K / L " + "".join(f"{L:>16d}" for L in Ls)]
    for K in Ks:
        row = []
        for L in Ls:
            c = lookup[(K, L)]
            txt = f"{100 * c.theoretical:.3g}%"
            if c.empirical is not None:
                txt += f" ({100 * c.empirical:.3g}%)"
            row.append(f"{txt:>16s}")
        lines.append(f"{K:<6d}" + "".join(row))
    return "\n".join(lines)
