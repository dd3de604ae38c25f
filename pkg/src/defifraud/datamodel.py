"""Decoded DeFi events, address labels and per-address histories.

Events travel as newline-delimited JSON objects (one DecodedEvent per line),
labels as a ``address,label,source`` CSV.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Iterator

from .errors import (
    EmptyRegistry,
    MalformedRecord,
    MalformedRow,
    NegativeValue,
    UnknownEnumValue,
)

log = logging.getLogger(__name__)

CHAINS = (
    "Arbitrum", "Aurora", "Avalanche", "BSC", "Cronos", "Ethereum",
    "Fantom", "Matic", "Moonbeam", "Moonriver", "Optimism",
)
# Six major protocols first; they are also the windowed-feature protocols.
PROTOCOLS = (
    "Aave", "Compound", "Curve", "Lido", "Yearn", "Balancer",
    "0vix", "Apeswapfinance", "Aurigami", "Bastion", "Benqi", "Frax",
    "Geist", "Granary", "Instadapp", "Ironbank", "Moonwell", "Radiant",
    "Scream", "Strike", "Tectonic", "Traderjoe", "Valas",
)
WINDOW_PROTOCOLS = ("Aave", "Balancer", "Compound", "Curve", "Lido", "Yearn")
EVENT_TYPES = (
    "add_liquidity", "remove_liquidity", "borrow", "deposit",
    "liquidation", "repay", "swap", "withdraw",
)
DIRECTIONS = ("outgoing", "incoming")
LABELS = ("good", "malicious")

_CHAIN_LOOKUP = {c.lower(): c for c in CHAINS}
_PROTOCOL_LOOKUP = {p.lower(): p for p in PROTOCOLS}
_EVENT_LOOKUP = {e: e for e in EVENT_TYPES}
_DIRECTION_LOOKUP = {d: d for d in DIRECTIONS}


def normalize_address(address: str) -> str:
    return address.strip().lower()


@dataclass(frozen=True, slots=True)
class DecodedEvent:
    tx_hash: str
    address: str
    chain: str
    protocol: str
    event_type: str
    token: str
    value_usd: float
    direction: str
    protocol_fee_usd: float
    gas_fee_usd: float
    block_height: int
    success: bool

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"), allow_nan=False)


EVENT_FIELDS = tuple(f.name for f in fields(DecodedEvent))


def _enum(value, lookup: dict, what: str) -> str:
    if not isinstance(value, str):
        raise MalformedRecord(f"{what} must be a string, got {value!r}")
    try:
        return lookup[value.strip().lower()]
    except KeyError:
        raise UnknownEnumValue(f"unknown {what}: {value!r}") from None


def _text(value, what: str) -> str:
    if not isinstance(value, str) or not value.strip():
        raise MalformedRecord(f"{what} must be a non-empty string")
    return value


def _amount(value, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedRecord(f"{what} must be a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise MalformedRecord(f"{what} must be finite")
    if value < 0:
        raise NegativeValue(f"{what} is negative: {value}")
    return value


def parse_event_record(record: str | dict) -> DecodedEvent:
    """Parse and validate one line (or an already decoded object) of the event file."""
    if isinstance(record, str):
        try:
            obj = json.loads(record)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(f"invalid JSON: {exc}") from None
    else:
        obj = record
    if not isinstance(obj, dict):
        raise MalformedRecord("event record must be an object")
    missing = [k for k in EVENT_FIELDS if k not in obj]
    if missing:
        raise MalformedRecord(f"missing fields: {', '.join(missing)}")

    height = obj["block_height"]
    if isinstance(height, bool) or not isinstance(height, int):
        raise MalformedRecord(f"block_height must be an integer, got {height!r}")
    if height < 0:
        raise NegativeValue(f"block_height is negative: {height}")
    if not isinstance(obj["success"], bool):
        raise MalformedRecord("success must be a boolean")

    address = normalize_address(_text(obj["address"], "address"))
    return DecodedEvent(
        tx_hash=_text(obj["tx_hash"], "tx_hash"),
        address=address,
        chain=_enum(obj["chain"], _CHAIN_LOOKUP, "chain"),
        protocol=_enum(obj["protocol"], _PROTOCOL_LOOKUP, "protocol"),
        event_type=_enum(obj["event_type"], _EVENT_LOOKUP, "event_type"),
        token=_text(obj["token"], "token"),
        value_usd=_amount(obj["value_usd"], "value_usd"),
        direction=_enum(obj["direction"], _DIRECTION_LOOKUP, "direction"),
        protocol_fee_usd=_amount(obj["protocol_fee_usd"], "protocol_fee_usd"),
        gas_fee_usd=_amount(obj["gas_fee_usd"], "gas_fee_usd"),
        block_height=height,
        success=obj["success"],
    )


@dataclass
class ReadStats:
    lines: int = 0
    skipped_unknown: int = 0


def iter_events(lines: Iterable[str], skip_unknown: bool = False,
                stats: ReadStats | None = None) -> Iterator[DecodedEvent]:
    stats = stats if stats is not None else ReadStats()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        stats.lines += 1
        try:
            yield parse_event_record(line)
        except UnknownEnumValue:
            if not skip_unknown:
                raise
            stats.skipped_unknown += 1
        except MalformedRecord as exc:
            raise MalformedRecord(f"line {lineno}: {exc}") from None


def read_events(path: str | Path, skip_unknown: bool = False) -> tuple[list[DecodedEvent], ReadStats]:
    stats = ReadStats()
    with open(path, encoding="utf-8") as fh:
        events = list(iter_events(fh, skip_unknown=skip_unknown, stats=stats))
    if stats.skipped_unknown:
        log.warning("skipped %d records with unknown enum values", stats.skipped_unknown)
    return events, stats


def write_events(path: str | Path, events: Iterable[DecodedEvent]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ev in events:
            fh.write(ev.to_json())
            fh.write("\n")


@dataclass
class LabelRegistry:
    entries: dict[str, tuple[str, str]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def add(self, address: str, label: str, source: str = "") -> None:
        address = normalize_address(address)
        label = label.strip().lower()
        if label not in LABELS:
            raise MalformedRow(f"label must be good or malicious, got {label!r}")
        previous = self.entries.get(address)
        if previous is not None and previous[0] != label:
            msg = f"conflicting labels for {address}: {previous[0]} vs {label}; keeping malicious"
            self.warnings.append(msg)
            log.warning(msg)
            if previous[0] == "malicious":
                return
        elif previous is not None:
            return
        self.entries[address] = (label, source)

    def label(self, address: str) -> str | None:
        entry = self.entries.get(normalize_address(address))
        return entry[0] if entry else None

    def malicious(self) -> list[str]:
        return sorted(a for a, (lab, _) in self.entries.items() if lab == "malicious")

    def good(self) -> list[str]:
        return sorted(a for a, (lab, _) in self.entries.items() if lab == "good")

    def restrict(self, addresses: Iterable[str]) -> LabelRegistry:
        """Keep only addresses that also appear in ``addresses`` (e.g. those with DeFi events)."""
        keep = {normalize_address(a) for a in addresses}
        return LabelRegistry({a: e for a, e in self.entries.items() if a in keep}, list(self.warnings))

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, address: str) -> bool:
        return normalize_address(address) in self.entries


def load_label_registry(path: str | Path) -> LabelRegistry:
    registry = LabelRegistry()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["address", "label", "source"]:
            raise MalformedRow(f"label file header must be address,label,source, got {header}")
        for lineno, row in enumerate(reader, 2):
            if not row:
                continue
            if len(row) != 3 or not row[0].strip():
                raise MalformedRow(f"line {lineno}: expected 3 fields, got {row}")
            try:
                registry.add(row[0], row[1], row[2])
            except MalformedRow as exc:
                raise MalformedRow(f"line {lineno}: {exc}") from None
    if not registry.entries:
        raise EmptyRegistry(f"no labels in {path}")
    return registry


def write_label_registry(path: str | Path, registry: LabelRegistry) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["address", "label", "source"])
        for address, (label, source) in registry.entries.items():
            writer.writerow([address, label, source])


@dataclass
class AddressHistory:
    address: str
    events: list[DecodedEvent]


def event_sort_key(ev: DecodedEvent):
    # Trailing fields only matter for several events sharing one tx_hash.
    return (ev.chain, ev.block_height, ev.tx_hash, ev.event_type, ev.protocol, ev.token,
            ev.direction, ev.value_usd, ev.protocol_fee_usd, ev.gas_fee_usd, ev.success)


def build_histories(events: Iterable[DecodedEvent]) -> list[AddressHistory]:
    """Group events per address; histories ordered by address, events by (chain, block, tx)."""
    groups: dict[str, list[DecodedEvent]] = defaultdict(list)
    for ev in events:
        groups[ev.address].append(ev)
    return [AddressHistory(a, sorted(groups[a], key=event_sort_key)) for a in sorted(groups)]
