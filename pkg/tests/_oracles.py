"""Slow, obviously-correct reference implementations used as test oracles.

Nothing here imports the engine's numeric helpers; statistics come from the
standard library (exact rational arithmetic for pstdev / median).
"""
from __future__ import annotations

import math
import statistics
from collections import Counter, defaultdict

CHAINS = ["Arbitrum", "Aurora", "Avalanche", "BSC", "Cronos", "Ethereum",
          "Fantom", "Matic", "Moonbeam", "Moonriver", "Optimism"]
PROTOCOLS = ["Aave", "Compound", "Curve", "Lido", "Yearn", "Balancer",
             "0vix", "Apeswapfinance", "Aurigami", "Bastion", "Benqi", "Frax",
             "Geist", "Granary", "Instadapp", "Ironbank", "Moonwell", "Radiant",
             "Scream", "Strike", "Tectonic", "Traderjoe", "Valas"]
MAJORS = ["Aave", "Balancer", "Compound", "Curve", "Lido", "Yearn"]
EVENTS = ["add_liquidity", "remove_liquidity", "borrow", "deposit",
          "liquidation", "repay", "swap", "withdraw"]


def pstd(xs) -> float:
    xs = list(xs)
    return float(statistics.pstdev(xs)) if len(xs) > 1 else 0.0


def three(xs):
    xs = list(xs)
    if not xs:
        return [0.0, 0.0, 0.0]
    return [math.fsum(xs), statistics.fmean(xs), pstd(xs)]


def five(xs):
    xs = list(xs)
    return [min(xs), max(xs), pstd(xs), statistics.fmean(xs), float(statistics.median(xs))]


def transactional(events) -> list[float]:
    per_chain = Counter(e.chain for e in events)
    best = max(per_chain.values())
    dominant = min(c for c, n in per_chain.items() if n == best)
    heights = [e.block_height for e in events if e.chain == dominant]
    age = max(heights) - min(heights)
    n = len(events)
    gas = [e.gas_fee_usd for e in events]
    return [
        n,
        sum(e.success for e in events) / n,
        pstd(heights),
        age,
        n / age if age else n,
        statistics.fmean(gas),
        max(gas),
        pstd(gas),
    ]


def windowed(events) -> list[float]:
    spans = defaultdict(list)
    for e in events:
        spans[e.chain].append(e.block_height // 1000)
    windows = set()
    for ws in spans.values():
        windows.update(range(min(ws), max(ws) + 1))
    out = []
    for ev in EVENTS:
        for p in MAJORS:
            hits = [e.block_height // 1000 for e in events if e.event_type == ev and e.protocol == p]
            if not hits:
                out += [0.0, 0.0, 0.0]
                continue
            per_window = Counter(hits)
            counts = [per_window.get(w, 0) for w in sorted(windows)]
            out += [min(counts), max(counts), pstd(counts)]
    return out


def defi(events, top_tokens) -> list[float]:
    out = []
    for ev in EVENTS:
        out += three(e.value_usd for e in events if e.event_type == ev)
    out += five(e.protocol_fee_usd for e in events)
    out += five(e.gas_fee_usd for e in events)
    for attr, universe in (("protocol", PROTOCOLS), ("chain", CHAINS)):
        for key in universe:
            mine = [e for e in events if getattr(e, attr) == key]
            out.append(len(mine))
            out += three(e.value_usd for e in mine if e.direction == "outgoing")
    out += windowed(events)
    counts = Counter(e.token for e in events)
    real = [t for t in top_tokens if not t.startswith("<reserved-")]
    for t in top_tokens:
        out.append(counts.get(t, 0) if t in real else 0)
    out.append(sum(n for t, n in counts.items() if t not in real))
    return [float(x) for x in out]


def features(events, top_tokens) -> list[float]:
    return [float(x) for x in transactional(events)] + defi(events, top_tokens)


def top_tokens(events, k=99):
    counts = Counter(e.token for e in events)
    return sorted(counts, key=lambda t: (-counts[t], t))[:k]


def median(xs) -> float:
    return float(statistics.median(xs))


def pearson(a, b) -> float:
    n = len(a)
    ma, mb = math.fsum(a) / n, math.fsum(b) / n
    sab = math.fsum((x - ma) * (y - mb) for x, y in zip(a, b))
    saa = math.fsum((x - ma) ** 2 for x in a)
    sbb = math.fsum((y - mb) ** 2 for y in b)
    if saa == 0 or sbb == 0:
        return 0.0
    return sab / math.sqrt(saa * sbb)


def metrics(tp, tn, fp, fn):
    """Direct evaluation of precision, recall, accuracy, F1, F2 with 0/0 := 0."""
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    accuracy = (tp + tn) / (tp + tn + fp + fn)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    f2 = 5 * precision * recall / (4 * precision + recall) if 4 * precision + recall else 0.0
    return precision, recall, accuracy, f1, f2


def knn(points, i, k):
    """Indices of the k nearest other points to points[i], ties by index."""
    d = []
    for j, q in enumerate(points):
        if j != i:
            d.append((math.fsum((a - b) ** 2 for a, b in zip(points[i], q)), j))
    d.sort()
    return [j for _, j in d[:k]]


def rel_close(a: float, b: float, rel: float) -> bool:
    if a == b:
        return True
    return abs(a - b) <= rel * max(abs(a), abs(b))
