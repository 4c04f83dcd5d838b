"""Per-trial experiment records, CSV persistence and summaries."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, Iterable, List, Sequence

import numpy as np

SCHEMA_VERSION = 1


@dataclass
class ExperimentRecord:
    """One trial at one sweep point. Identical columns for every experiment.

    Unused sweep identifiers are left at their defaults (``""`` or
    ``nan``). List columns hold per-user values in user order.
    """

    experiment_id: str
    point_id: str
    trial_index: int
    seed: int
    carrier_frequency: float = math.nan
    rows: int = 0
    cols: int = 0
    num_id_users: int = 0
    num_eh_users: int = 0
    id_antennas: int = 1
    field_model: str = ""
    estimator: str = ""
    channel_case: str = ""
    rho: float = math.nan
    feasible: bool = True
    status: str = "ok"
    cond_db: float = math.nan
    id_power: float = math.nan
    energy_power: float = math.nan
    sum_se: float = math.nan
    min_se: float = math.nan
    mean_rf: float = math.nan
    mean_dc: float = math.nan
    mean_net: float = math.nan
    mean_clipped_net: float = math.nan
    id_se: List[float] = field(default_factory=list)
    eh_rf: List[float] = field(default_factory=list)
    eh_dc: List[float] = field(default_factory=list)
    eh_net: List[float] = field(default_factory=list)

    @property
    def outage(self) -> bool:
        return not self.feasible


_LIST_FIELDS = ("id_se", "eh_rf", "eh_dc", "eh_net")
CSV_HEADER = [f.name for f in fields(ExperimentRecord)]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ";".join(repr(float(v)) for v in value)
    return str(value)


def write_csv(records: Iterable[ExperimentRecord], path) -> None:
    """Write records with a fixed header; list columns are ``;``-separated."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# nearswipt records schema {SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for rec in records:
            row = asdict(rec)
            w.writerow([_fmt(row[name]) for name in CSV_HEADER])


def read_csv(path) -> List[ExperimentRecord]:
    types = {f.name: f.type for f in fields(ExperimentRecord)}
    out = []
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# nearswipt records schema"):
            raise ValueError(f"{path} is not a records file")
        version = int(first.split()[-1])
        if version != SCHEMA_VERSION:
            raise ValueError(f"unsupported records schema {version}")
        for row in csv.DictReader(fh):
            kw = {}
            for name, raw in row.items():
                t = types[name]
                if name in _LIST_FIELDS:
                    kw[name] = [float(v) for v in raw.split(";")] if raw else []
                elif t == "bool":
                    kw[name] = raw == "1"
                elif t == "int":
                    kw[name] = int(raw)
                elif t == "float":
                    kw[name] = float(raw)
                else:
                    kw[name] = raw
            out.append(ExperimentRecord(**kw))
    return out


def compute_cdf(values: Sequence[float]):
    """Right-continuous empirical CDF as sorted ``(value, P[X <= value])`` pairs."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("empirical CDF of an empty sample")
    uniq, counts = np.unique(v, return_counts=True)
    cum = np.cumsum(counts) / v.size
    return [(float(x), float(p)) for x, p in zip(uniq, cum)]


SUMMARY_HEADER = ["experiment_id", "point_id", "trials", "feasible_trials", "outage_rate",
                  "mean_net", "median_net", "q10_net", "q90_net", "mean_dc", "mean_rf",
                  "mean_sum_se", "mean_min_se", "mean_cond_db"]


def group_by_point(records: Iterable[ExperimentRecord]) -> Dict[str, List[ExperimentRecord]]:
    groups: Dict[str, List[ExperimentRecord]] = {}
    for rec in records:
        groups.setdefault(rec.point_id, []).append(rec)
    return groups


def summarize(records: Iterable[ExperimentRecord]) -> List[dict]:
    """Per-sweep-point statistics; harvested-power stats use feasible trials only."""
    rows = []
    for point, recs in group_by_point(records).items():
        ok = [r for r in recs if r.feasible]
        net = np.array([r.mean_net for r in ok])

        def mean(attr, sample):
            vals = np.array([getattr(r, attr) for r in sample], dtype=float)
            vals = vals[np.isfinite(vals)]
            return float(vals.mean()) if vals.size else math.nan

        rows.append({
            "experiment_id": recs[0].experiment_id,
            "point_id": point,
            "trials": len(recs),
            "feasible_trials": len(ok),
            "outage_rate": 1.0 - len(ok) / len(recs),
            "mean_net": float(net.mean()) if net.size else math.nan,
            "median_net": float(np.median(net)) if net.size else math.nan,
            "q10_net": float(np.quantile(net, 0.1)) if net.size else math.nan,
            "q90_net": float(np.quantile(net, 0.9)) if net.size else math.nan,
            "mean_dc": mean("mean_dc", ok),
            "mean_rf": mean("mean_rf", ok),
            "mean_sum_se": mean("sum_se", ok),
            "mean_min_se": mean("min_se", ok),
            "mean_cond_db": mean("cond_db", recs),
        })
    return rows


def write_summary_csv(summary: List[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_HEADER, lineterminator="\n")
        w.writeheader()
        for row in summary:
            w.writerow({k: _fmt(v) for k, v in row.items()})
