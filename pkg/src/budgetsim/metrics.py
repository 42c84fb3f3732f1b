from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from fractions import Fraction

CSV_COLUMNS = (
    "sweep_value", "topic", "sent", "received", "dropped", "skipped_busy",
    "mean_latency_ns", "max_latency_ns", "normal_prio_cpu_ns", "low_prio_cpu_ns",
    "exhaustions", "replenishments",
)


@dataclass
class TopicMetrics:
    topic: str
    sent: int = 0
    received: int = 0
    dropped: int = 0
    skipped_busy: int = 0
    mean_latency_ns: int = 0
    max_latency_ns: int = 0
    normal_prio_cpu_ns: int = 0
    low_prio_cpu_ns: int = 0
    exhaustions: int = 0
    replenishments: int = 0
    # not part of the CSV, kept for conservation checks
    taken: int = 0
    queued: int = 0
    arrived: int = 0


@dataclass
class Metrics:
    topics: list[TopicMetrics] = field(default_factory=list)
    # thread name -> (normal priority cpu, low priority cpu)
    thread_cpu: dict[str, tuple[int, int]] = field(default_factory=dict)

    def __getitem__(self, topic: str) -> TopicMetrics:
        for tm in self.topics:
            if tm.topic == topic:
                return tm
        raise KeyError(topic)

    def total_cpu(self) -> int:
        return sum(a + b for a, b in self.thread_cpu.values())

    def rows(self, sweep_value: Fraction | None = None) -> list[dict[str, str]]:
        out = []
        for tm in self.topics:
            row = {"sweep_value": format_rational(sweep_value)}
            for col in CSV_COLUMNS[1:]:
                row[col] = str(getattr(tm, col))
            out.append(row)
        return out


def format_rational(value: Fraction | None, places: int = 6) -> str:
    """Fixed-point decimal string, independent of locale and float rounding."""
    if value is None:
        return ""
    value = Fraction(value)
    sign = "-" if value < 0 else ""
    scaled = abs(value) * 10 ** places
    q = scaled.numerator // scaled.denominator
    # round half up on the exact rational
    if (scaled - q) * 2 >= 1:
        q += 1
    whole, frac = divmod(q, 10 ** places)
    return f"{sign}{whole}.{frac:0{places}d}"


def write_csv(rows: list[dict[str, str]], fh=None) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    text = buf.getvalue()
    if fh is not None:
        fh.write(text)
    return text
