"""Per-address feature engine: 8 transactional + 414 DeFi features.

Layout (offset, length):
    transactional   (0, 8)     counts, success share, block-height spread, gas stats
    event_stats     (8, 24)    sum/mean/std of value_usd per event type
    fee_stats       (32, 10)   min/max/std/mean/median of protocol fees, then gas fees
    protocol_stats  (42, 92)   tx count + outgoing sum/mean/std per protocol
    chain_stats     (134, 44)  same four per chain
    windowed        (178, 144) min/max/std of per-1000-block counts per (event, major protocol)
    tokens          (322, 100) tx count per top-99 token + long tail

All standard deviations are population (divide by n).
"""
from __future__ import annotations

import csv
import json
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .datamodel import (
    CHAINS,
    EVENT_TYPES,
    PROTOCOLS,
    WINDOW_PROTOCOLS,
    AddressHistory,
    DecodedEvent,
    event_sort_key,
)
from .errors import EmptyCorpus, EmptyHistory, SchemaMismatch

SCHEMA_VERSION = "defi422-v1"
N_TOP_TOKENS = 99
WINDOW_BLOCKS = 1000

GROUPS = (
    ("transactional", 8),
    ("event_stats", 24),
    ("fee_stats", 10),
    ("protocol_stats", 92),
    ("chain_stats", 44),
    ("windowed", 144),
    ("tokens", 100),
)
N_FEATURES = sum(n for _, n in GROUPS)

TRANSACTIONAL_NAMES = (
    "tx_count", "success_share", "block_height_std", "wallet_age",
    "tx_per_age", "gas_mean", "gas_max", "gas_std",
)

_CHAIN_IX = {c: i for i, c in enumerate(CHAINS)}
_PROTO_IX = {p: i for i, p in enumerate(PROTOCOLS)}
_EVENT_IX = {e: i for i, e in enumerate(EVENT_TYPES)}
_WINDOW_PROTO_SLOT = np.full(len(PROTOCOLS), -1)
for _k, _p in enumerate(WINDOW_PROTOCOLS):
    _WINDOW_PROTO_SLOT[_PROTO_IX[_p]] = _k


def placeholder_token(k: int) -> str:
    return f"<reserved-{k:02d}>"


LONG_TAIL = "<long-tail>"


def _group_names(top_tokens: Sequence[str]) -> list[str]:
    names = list(TRANSACTIONAL_NAMES)
    for ev in EVENT_TYPES:
        names += [f"event_{ev}_value_{s}" for s in ("sum", "mean", "std")]
    for kind in ("protocol", "gas"):
        names += [f"fee_{kind}_{s}" for s in ("min", "max", "std", "mean", "median")]
    for p in PROTOCOLS:
        names += [f"protocol_{p.lower()}_{s}" for s in ("tx_count", "out_sum", "out_mean", "out_std")]
    for c in CHAINS:
        names += [f"chain_{c.lower()}_{s}" for s in ("tx_count", "out_sum", "out_mean", "out_std")]
    for ev in EVENT_TYPES:
        for p in WINDOW_PROTOCOLS:
            names += [f"window_{ev}_{p.lower()}_{s}" for s in ("min", "max", "std")]
    names += [f"token:{t}" for t in top_tokens] + [f"token:{LONG_TAIL}"]
    return names


@dataclass(frozen=True)
class FeatureSchema:
    version: str
    names: tuple[str, ...]
    group_offsets: dict[str, tuple[int, int]]
    top_tokens: tuple[str, ...]
    n_real_tokens: int = field(default=N_TOP_TOKENS)

    def __post_init__(self):
        if len(self.names) != N_FEATURES or len(set(self.names)) != N_FEATURES:
            raise SchemaMismatch(f"schema needs {N_FEATURES} unique names")
        if len(self.top_tokens) != N_TOP_TOKENS or len(set(self.top_tokens)) != N_TOP_TOKENS:
            raise SchemaMismatch(f"schema needs {N_TOP_TOKENS} distinct top tokens")
        if sum(n for _, n in self.group_offsets.values()) != N_FEATURES:
            raise SchemaMismatch("group lengths must total 422")

    @classmethod
    def from_tokens(cls, real_tokens: Sequence[str]) -> FeatureSchema:
        real = list(real_tokens)[:N_TOP_TOKENS]
        top = real + [placeholder_token(k) for k in range(len(real), N_TOP_TOKENS)]
        offsets, pos = {}, 0
        for name, n in GROUPS:
            offsets[name] = (pos, n)
            pos += n
        return cls(SCHEMA_VERSION, tuple(_group_names(top)), offsets, tuple(top), len(real))

    @property
    def token_index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.top_tokens[: self.n_real_tokens])}

    def group_slice(self, group: str) -> slice:
        off, n = self.group_offsets[group]
        return slice(off, off + n)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "names": list(self.names),
            "group_offsets": {k: list(v) for k, v in self.group_offsets.items()},
            "top_tokens": list(self.top_tokens),
            "n_real_tokens": self.n_real_tokens,
        }

    @classmethod
    def from_dict(cls, d: dict) -> FeatureSchema:
        if d.get("version") != SCHEMA_VERSION:
            raise SchemaMismatch(f"unsupported schema version {d.get('version')!r}")
        schema = cls.from_tokens(d["top_tokens"][: d["n_real_tokens"]])
        if list(schema.names) != list(d["names"]):
            raise SchemaMismatch("schema names do not match the canonical layout")
        return schema

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> FeatureSchema:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class FeatureVector:
    address: str
    values: np.ndarray
    schema_version: str = SCHEMA_VERSION


def derive_token_schema(events: Iterable[DecodedEvent]) -> FeatureSchema:
    """Top-99 tokens by corpus-wide transaction count; ties go to the smaller token id."""
    counts = Counter(ev.token for ev in events)
    if not counts:
        raise EmptyCorpus("cannot derive a token schema from an empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return FeatureSchema.from_tokens([t for t, _ in ranked[:N_TOP_TOKENS]])


def _pstd(x: np.ndarray) -> float:
    if x.size < 2 or x.min() == x.max():
        return 0.0
    return float(np.sqrt(np.mean((x - x.mean()) ** 2)))


def _group_stats(keys: np.ndarray, values: np.ndarray, n_groups: int):
    """Per-group (count, sum, mean, population std) via two passes."""
    count = np.bincount(keys, minlength=n_groups).astype(float)
    total = np.bincount(keys, weights=values, minlength=n_groups)
    mean = np.divide(total, count, out=np.zeros(n_groups), where=count > 0)
    dev = np.bincount(keys, weights=(values - mean[keys]) ** 2, minlength=n_groups)
    std = np.sqrt(np.divide(dev, count, out=np.zeros(n_groups), where=count > 0))
    # identical values give an exact zero spread
    vmin = np.full(n_groups, np.inf)
    vmax = np.full(n_groups, -np.inf)
    np.minimum.at(vmin, keys, values)
    np.maximum.at(vmax, keys, values)
    std[vmin == vmax] = 0.0
    return count, total, mean, std


class _Columns:
    """Column view of one address history."""

    def __init__(self, events: Sequence[DecodedEvent]):
        self.n = len(events)
        self.chain = np.fromiter((_CHAIN_IX[e.chain] for e in events), np.int64, self.n)
        self.proto = np.fromiter((_PROTO_IX[e.protocol] for e in events), np.int64, self.n)
        self.event = np.fromiter((_EVENT_IX[e.event_type] for e in events), np.int64, self.n)
        self.value = np.fromiter((e.value_usd for e in events), float, self.n)
        self.outgoing = np.fromiter((e.direction == "outgoing" for e in events), bool, self.n)
        self.pfee = np.fromiter((e.protocol_fee_usd for e in events), float, self.n)
        self.gas = np.fromiter((e.gas_fee_usd for e in events), float, self.n)
        self.height = np.fromiter((e.block_height for e in events), np.int64, self.n)
        self.success = np.fromiter((e.success for e in events), bool, self.n)
        self.tokens = [e.token for e in events]


def _canonical(history: AddressHistory) -> list[DecodedEvent]:
    if not history.events:
        raise EmptyHistory(f"address {history.address} has no events")
    return sorted(history.events, key=event_sort_key)


def _transactional(c: _Columns) -> np.ndarray:
    chain_counts = np.bincount(c.chain, minlength=len(CHAINS))
    # CHAINS is lexicographically ordered, so argmax picks the smallest name on ties
    dominant = int(np.argmax(chain_counts))
    h = c.height[c.chain == dominant].astype(float)
    age = float(h.max() - h.min())
    tx_count = float(c.n)
    return np.array([
        tx_count,
        float(c.success.sum()) / tx_count,
        _pstd(h),
        age,
        tx_count / age if age > 0 else tx_count,
        float(c.gas.mean()),
        float(c.gas.max()),
        _pstd(c.gas),
    ])


def transactional_features(history: AddressHistory) -> np.ndarray:
    return _transactional(_Columns(_canonical(history)))


def _fee_block(x: np.ndarray) -> list[float]:
    return [float(x.min()), float(x.max()), _pstd(x), float(x.mean()), float(np.median(x))]


def _windowed(c: _Columns) -> np.ndarray:
    win = c.height // WINDOW_BLOCKS
    # union over chains of each chain's [first, last] window span
    spans = []
    for ch in np.unique(c.chain):
        w = win[c.chain == ch]
        spans.append((int(w.min()), int(w.max())))
    spans.sort()
    merged: list[list[int]] = []
    for lo, hi in spans:
        if merged and lo <= merged[-1][1] + 1:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    n_windows = sum(hi - lo + 1 for lo, hi in merged)

    out = np.zeros((len(EVENT_TYPES), len(WINDOW_PROTOCOLS), 3))
    slot = _WINDOW_PROTO_SLOT[c.proto]
    sel = slot >= 0
    if not sel.any():
        return out.ravel()
    pair = c.event[sel] * len(WINDOW_PROTOCOLS) + slot[sel]
    wsel = win[sel]
    for key in np.unique(pair):
        _, counts = np.unique(wsel[pair == key], return_counts=True)
        counts = counts.astype(float)
        nnz = counts.size
        mean = counts.sum() / n_windows
        cmin = counts.min() if nnz == n_windows else 0.0
        cmax = counts.max()
        if cmin == cmax:
            std = 0.0
        else:
            std = math.sqrt((np.sum((counts - mean) ** 2) + (n_windows - nnz) * mean * mean) / n_windows)
        out[key // len(WINDOW_PROTOCOLS), key % len(WINDOW_PROTOCOLS)] = (cmin, cmax, std)
    return out.ravel()


def _defi(c: _Columns, schema: FeatureSchema) -> np.ndarray:
    parts = []
    _, ev_sum, ev_mean, ev_std = _group_stats(c.event, c.value, len(EVENT_TYPES))
    parts.append(np.column_stack([ev_sum, ev_mean, ev_std]).ravel())
    parts.append(np.array(_fee_block(c.pfee) + _fee_block(c.gas)))
    for keys, n_groups in ((c.proto, len(PROTOCOLS)), (c.chain, len(CHAINS))):
        count = np.bincount(keys, minlength=n_groups).astype(float)
        _, s, m, sd = _group_stats(keys[c.outgoing], c.value[c.outgoing], n_groups)
        parts.append(np.column_stack([count, s, m, sd]).ravel())
    parts.append(_windowed(c))
    index = schema.token_index
    tok = np.zeros(N_TOP_TOKENS + 1)
    for t in c.tokens:
        tok[index.get(t, N_TOP_TOKENS)] += 1
    parts.append(tok)
    return np.concatenate(parts)


def defi_features(history: AddressHistory, schema: FeatureSchema) -> np.ndarray:
    if schema.version != SCHEMA_VERSION:
        raise SchemaMismatch(f"schema version {schema.version!r} != {SCHEMA_VERSION!r}")
    return _defi(_Columns(_canonical(history)), schema)


def address_features(history: AddressHistory, schema: FeatureSchema) -> FeatureVector:
    if schema.version != SCHEMA_VERSION:
        raise SchemaMismatch(f"schema version {schema.version!r} != {SCHEMA_VERSION!r}")
    c = _Columns(_canonical(history))
    values = np.concatenate([_transactional(c), _defi(c, schema)])
    return FeatureVector(history.address, values, schema.version)


def _chunk(args):
    histories, schema = args
    return [address_features(h, schema) for h in histories]


def extract_features(histories: Sequence[AddressHistory], schema: FeatureSchema,
                     n_jobs: int = 1) -> list[FeatureVector]:
    """One 422-vector per history, in input order. Worker count never changes the output."""
    histories = list(histories)
    if n_jobs <= 1 or len(histories) < 2 * n_jobs:
        return [address_features(h, schema) for h in histories]
    size = math.ceil(len(histories) / n_jobs)
    chunks = [(histories[i:i + size], schema) for i in range(0, len(histories), size)]
    with ProcessPoolExecutor(n_jobs) as pool:
        return [fv for part in pool.map(_chunk, chunks) for fv in part]


def feature_matrix(vectors: Sequence[FeatureVector]) -> tuple[list[str], np.ndarray]:
    if not vectors:
        return [], np.zeros((0, N_FEATURES))
    return [v.address for v in vectors], np.vstack([v.values for v in vectors])


def write_feature_matrix(path: str | Path, vectors: Sequence[FeatureVector], schema: FeatureSchema) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["address", *schema.names])
        for v in vectors:
            writer.writerow([v.address, *(repr(float(x)) for x in v.values)])


def read_feature_matrix(path: str | Path, schema: FeatureSchema | None = None):
    """Returns (addresses, matrix, feature names). Empty cells read as NaN."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "address":
            raise SchemaMismatch("feature matrix must start with an 'address' column")
        names = header[1:]
        if schema is not None and list(schema.names) != names:
            raise SchemaMismatch("feature matrix columns do not match the schema")
        addresses, rows = [], []
        for lineno, row in enumerate(reader, 2):
            if len(row) != len(header):
                raise SchemaMismatch(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
            addresses.append(row[0])
            rows.append([float(x) if x.strip() else math.nan for x in row[1:]])
    matrix = np.array(rows, dtype=float).reshape(len(rows), len(names))
    return addresses, matrix, names
