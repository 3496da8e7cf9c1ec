from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, List, Optional, Sequence

COUNT_BUCKETS = ("1", "2", "3", ">=4")


def count_bucket(n: int) -> str:
    if n >= 4:
        return ">=4"
    return str(max(int(n), 0))


def round2(value: float) -> float:
    """Half-up rounding to two decimals, the way printed tables round."""
    return float(Decimal(str(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


def percent(hits: int, total: int) -> Optional[float]:
    if not total:
        return None
    return round2(Decimal(hits) * 100 / Decimal(total))


def macro_avg(values: Iterable[Optional[float]]) -> Optional[float]:
    """Mean over the columns present, kept at four decimals; tables round when printing."""
    values = [Decimal(str(v)) for v in values if v is not None]
    if not values:
        return None
    mean = sum(values) / len(values)
    return float(mean.quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP))


def cell(value, width: int = 10) -> str:
    if value is None:
        text = "-"
    elif isinstance(value, float):
        text = "{:.2f}".format(round2(value))
    else:
        text = str(value)
    return text.rjust(width)


def table(title: str, headers: Sequence[str], rows: Sequence[Sequence], first: int = 16) -> str:
    """Fixed-width text table; the first column is left aligned."""
    width = max([10] + [len(h) + 2 for h in headers[1:]])
    lines: List[str] = [title]
    head = headers[0].ljust(first) + "".join(h.rjust(width) for h in headers[1:])
    lines.append(head)
    lines.append("-" * len(head))
    for row in rows:
        lines.append(str(row[0]).ljust(first) + "".join(cell(v, width) for v in row[1:]))
    return "\n".join(lines)
