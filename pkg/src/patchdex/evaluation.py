"""Retrieval-protocol scoring: mean average precision and top-4 recall.

The AP protocol follows the standard buildings-benchmark convention:
junk-labeled entries are deleted from the ranked list first (they count
neither for nor against), good and ok both count as relevant, and AP is
the mean of precision taken at each relevant rank. A query whose label
map contains no relevant reference has undefined AP; it is excluded from
the mean and listed in the report.

A query id that also appears in the ranked list (self-retrieval) is
dropped before scoring so trivial self-matches cannot inflate the mean.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Mapping, Sequence

from .errors import ManifestError, MissingLabelError
from .manifest import LABEL_GOOD, LABEL_JUNK, LABEL_OK, DatasetManifest
from .matcher import RankedList


@dataclass(frozen=True)
class EvalReport:
    """One evaluation outcome for one pipeline configuration."""

    dataset_name: str
    config_label: str
    per_query_ap: Mapping[str, float]
    mean_ap: float
    dims_per_reference: int
    ukb_recall4: float | None = None
    wall_time: float | None = None
    excluded_queries: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "per_query_ap", dict(self.per_query_ap))
        object.__setattr__(self, "excluded_queries", tuple(self.excluded_queries))
        for query_id, ap in self.per_query_ap.items():
            if not 0.0 <= ap <= 1.0:
                raise ValueError(f"AP for {query_id!r} is outside [0, 1]: {ap}")
        if self.per_query_ap:
            expected = sum(self.per_query_ap.values()) / len(self.per_query_ap)
            if abs(expected - self.mean_ap) > 1e-12:
                raise ValueError(
                    f"mean_ap {self.mean_ap} does not match per-query mean {expected}"
                )
        elif self.mean_ap != 0.0:
            raise ValueError("mean_ap must be 0.0 when no query has a defined AP")
        if self.ukb_recall4 is not None and not 0.0 <= self.ukb_recall4 <= 1.0:
            raise ValueError(f"ukb_recall4 outside [0, 1]: {self.ukb_recall4}")

    @property
    def ukb_ns(self) -> float | None:
        """Same recall@4 on the 0..4 scale some result tables use."""
        return None if self.ukb_recall4 is None else 4.0 * self.ukb_recall4

    def to_json(self) -> str:
        doc = {
            "dataset_name": self.dataset_name,
            "config_label": self.config_label,
            "dims_per_reference": self.dims_per_reference,
            "mean_ap": self.mean_ap,
            "per_query_ap": dict(sorted(self.per_query_ap.items())),
            "excluded_queries": sorted(self.excluded_queries),
            "ukb_recall4": self.ukb_recall4,
            "ukb_ns": self.ukb_ns,
            "wall_time": self.wall_time,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _drop_self(ranked: RankedList) -> list[tuple[str, float]]:
    return [(ref_id, value) for ref_id, value in ranked.entries if ref_id != ranked.query_id]


def average_precision(ranked: RankedList, labels: Mapping[str, str]) -> float | None:
    """AP for one query; None when the label map holds no relevant reference."""
    entries = _drop_self(ranked)
    for ref_id, _ in entries:
        if ref_id not in labels:
            raise MissingLabelError(f"no relevance label for ranked id {ref_id!r}")
    kept = [ref_id for ref_id, _ in entries if labels[ref_id] != LABEL_JUNK]
    flags = [labels[ref_id] in (LABEL_GOOD, LABEL_OK) for ref_id in kept]
    n_relevant = sum(flags)
    if n_relevant == 0:
        return None
    hits = 0
    total = 0.0
    for rank, flag in enumerate(flags, start=1):
        if flag:
            hits += 1
            total += hits / rank
    return total / n_relevant


def ukb_score(
    ranked_lists: Sequence[RankedList],
    labels_by_query: Mapping[str, Mapping[str, str]],
) -> float:
    """Mean fraction of each query's 4 relevant references found in its top 4."""
    if not ranked_lists:
        raise ManifestError("no queries to score")
    total_hits = 0
    for ranked in ranked_lists:
        labels = labels_by_query[ranked.query_id]
        relevant = {i for i, label in labels.items() if label in (LABEL_GOOD, LABEL_OK)}
        if len(relevant) != 4:
            raise ManifestError(
                f"query {ranked.query_id!r} has {len(relevant)} relevant references, "
                "the top-4 protocol requires exactly 4"
            )
        top = [ref_id for ref_id, _ in _drop_self(ranked)[:4]]
        total_hits += len(relevant.intersection(top))
    return total_hits / (4 * len(ranked_lists))


def evaluate(
    manifest: DatasetManifest,
    ranked_lists: Sequence[RankedList],
    config_label: str,
    dims_per_reference: int,
    ukb: bool = False,
    wall_time: float | None = None,
) -> EvalReport:
    """Score a full set of per-query rankings against manifest labels."""
    per_query: dict[str, float] = {}
    excluded: list[str] = []
    labels_by_query: dict[str, Mapping[str, str]] = {}
    for ranked in ranked_lists:
        labels = manifest.labels_for(ranked.query_id)
        labels_by_query[ranked.query_id] = labels
        ap = average_precision(ranked, labels)
        if ap is None:
            excluded.append(ranked.query_id)
        else:
            per_query[ranked.query_id] = ap
    mean_ap = sum(per_query.values()) / len(per_query) if per_query else 0.0
    recall4 = ukb_score(ranked_lists, labels_by_query) if ukb else None
    return EvalReport(
        dataset_name=manifest.dataset_name,
        config_label=config_label,
        per_query_ap=per_query,
        mean_ap=mean_ap,
        dims_per_reference=dims_per_reference,
        ukb_recall4=recall4,
        wall_time=wall_time,
        excluded_queries=tuple(excluded),
    )


def format_report_table(reports: Sequence[EvalReport]) -> str:
    """Plain-text results table, one row per configuration."""
    header = f"{'config':<28} {'dims':>8} {'mAP':>8} {'recall@4':>9} {'N-S':>6}"
    lines = [header, "-" * len(header)]
    for report in reports:
        recall = "-" if report.ukb_recall4 is None else f"{report.ukb_recall4:.3f}"
        ns = "-" if report.ukb_ns is None else f"{report.ukb_ns:.2f}"
        lines.append(
            f"{report.config_label:<28} {report.dims_per_reference:>8d} "
            f"{report.mean_ap:>8.4f} {recall:>9} {ns:>6}"
        )
    return "\n".join(lines) + "\n"


# -- rank list TSV ----------------------------------------------------------


def write_ranks_tsv(ranked_lists: Sequence[RankedList], destination: IO[str] | str | Path) -> None:
    """TSV rows `query_id  reference_id  rank  distance`, ranks 1-based."""
    lines = []
    for ranked in ranked_lists:
        for rank, (ref_id, value) in enumerate(ranked.entries, start=1):
            lines.append(f"{ranked.query_id}\t{ref_id}\t{rank}\t{value:.17g}")
    text = "\n".join(lines) + ("\n" if lines else "")
    if isinstance(destination, (str, Path)):
        Path(destination).write_text(text, encoding="utf-8")
    else:
        destination.write(text)


def read_ranks_tsv(source: IO[str] | str | Path) -> list[RankedList]:
    """Parse rankings back, inferring sort direction from the value column."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    groups: dict[str, list[tuple[int, str, float]]] = {}
    order: list[str] = []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ManifestError(f"ranks line {n}: expected 4 tab-separated fields")
        query_id, ref_id, rank_str, value_str = parts
        if query_id not in groups:
            groups[query_id] = []
            order.append(query_id)
        groups[query_id].append((int(rank_str), ref_id, float(value_str)))
    lists = []
    for query_id in order:
        rows = sorted(groups[query_id])
        if [r for r, _, _ in rows] != list(range(1, len(rows) + 1)):
            raise ManifestError(f"ranks for {query_id!r} are not 1..{len(rows)}")
        values = [value for _, _, value in rows]
        ascending = True
        if any(b < a for a, b in zip(values, values[1:])):
            ascending = False
        entries = tuple((ref_id, value) for _, ref_id, value in rows)
        lists.append(RankedList(query_id=query_id, entries=entries, ascending=ascending))
    return lists
