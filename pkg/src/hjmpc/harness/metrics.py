"""Per-config summary statistics and the pairwise higher-cost comparison."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True)
class TrialRow:
    """One closed-loop rollout as stored in the records CSV."""

    seed: int
    variant: str
    h: int
    h_c: int
    safe: bool
    goal_reached: bool
    cost: float
    min_l: float
    fallback_count: int

    @property
    def config(self) -> str:
        return config_id(self.variant, self.h, self.h_c)

    @classmethod
    def from_record(cls, rec) -> "TrialRow":
        return cls(seed=rec.seed, variant=rec.config.variant, h=rec.config.horizon,
                   h_c=rec.config.controls_per_plan, safe=rec.safe, goal_reached=rec.goal_reached,
                   cost=rec.cost, min_l=rec.min_l, fallback_count=rec.fallback_count)


def config_id(variant: str, h: int, h_c: int = 1) -> str:
    return f"{variant}/h={h}" + (f"/hc={h_c}" if h_c != 1 else "")


class SeedMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class ConfigMetrics:
    config: str
    variant: str
    h: int
    n: int
    success_rate: float
    goal_rate: float
    higher_cost_pct: float
    compared: int
    excluded: int
    mean_cost: float
    median_cost: float
    fallbacks: int


@dataclass(frozen=True)
class MetricsReport:
    reference: str
    rows: tuple

    def to_dict(self) -> dict:
        return {"reference": self.reference, "rows": [asdict(r) for r in self.rows]}

    def table(self) -> str:
        head = ("config", "n", "success %", "goal %", f"higher cost vs {self.reference} %",
                "compared", "excluded", "mean cost", "median cost", "fallbacks")
        body = [(r.config, str(r.n), f"{r.success_rate:.2f}", f"{r.goal_rate:.2f}",
                 f"{r.higher_cost_pct:.2f}", str(r.compared), str(r.excluded),
                 f"{r.mean_cost:.3f}", f"{r.median_cost:.3f}", str(r.fallbacks)) for r in self.rows]
        widths = [max(len(line[i]) for line in [head, *body]) for i in range(len(head))]
        fmt = lambda line: "  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                                     for i, (c, w) in enumerate(zip(line, widths)))
        return "\n".join([fmt(head), fmt(tuple("-" * w for w in widths)), *map(fmt, body)])


def group(rows) -> dict:
    out: dict = {}
    for r in rows:
        out.setdefault(r.config, []).append(r)
    return out


def success_rate(rows) -> float:
    return 100.0 * sum(r.safe for r in rows) / len(rows)


def higher_cost(rows, reference_rows):
    """(% of comparable trials where ``rows`` cost strictly more, compared, excluded).

    A trial is comparable when both rollouts with that seed were safe.
    """
    ref = {r.seed: r for r in reference_rows}
    if set(ref) != {r.seed for r in rows}:
        raise SeedMismatchError("configs were run on different seed sets")
    compared = higher = 0
    for r in rows:
        other = ref[r.seed]
        if r.safe and other.safe:
            compared += 1
            higher += r.cost > other.cost
    pct = 100.0 * higher / compared if compared else 0.0
    return pct, compared, len(rows) - compared


def _sort_key(config_rows):
    r = config_rows[0]
    return (r.variant, r.h, r.h_c)


def compute_metrics(records, reference: str) -> MetricsReport:
    """``records`` maps config id to its trials (TrialRow-like); all configs must share seeds."""
    if reference not in records:
        raise KeyError(f"reference config {reference!r} not among {sorted(records)}")
    ref_rows = records[reference]
    out = []
    for rows in sorted(records.values(), key=_sort_key):
        pct, compared, excluded = higher_cost(rows, ref_rows)
        costs = np.array([r.cost for r in rows])
        out.append(ConfigMetrics(
            config=rows[0].config, variant=rows[0].variant, h=rows[0].h, n=len(rows),
            success_rate=success_rate(rows),
            goal_rate=100.0 * sum(r.goal_reached for r in rows) / len(rows),
            higher_cost_pct=pct, compared=compared, excluded=excluded,
            mean_cost=float(costs.mean()), median_cost=float(np.median(costs)),
            fallbacks=int(sum(r.fallback_count for r in rows)),
        ))
    return MetricsReport(reference=reference, rows=tuple(out))


def common_safe_mean_costs(records, configs) -> dict:
    """Mean cost per config over seeds that were safe under every listed config."""
    safe_sets = [{r.seed for r in records[c] if r.safe} for c in configs]
    common = set.intersection(*safe_sets) if safe_sets else set()
    out = {}
    for c in configs:
        costs = [r.cost for r in records[c] if r.seed in common]
        out[c] = float(np.mean(costs)) if costs else float("nan")
    return out
