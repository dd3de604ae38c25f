"""Seeded synthetic DeFi corpora with an injectable fraud profile.

Randomness: every address ``i`` draws from its own Philox-4x64 counter-based
generator keyed by ``SeedSequence([seed, i])``. Output therefore depends only
on ``(config, i)`` and never on generation order or worker count.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .datamodel import CHAINS, EVENT_TYPES, PROTOCOLS, DecodedEvent, LabelRegistry
from .errors import InvalidConfig

BASE_TOKENS = (
    "WETH", "USDC", "USDT", "DAI", "WBTC", "stETH", "LINK", "UNI", "AAVE", "CRV",
    "BAL", "COMP", "YFI", "LDO", "FRAX", "MATIC", "WAVAX", "WBNB", "FTM", "ARB",
)
N_TOKENS = 160
TOKENS = BASE_TOKENS + tuple(f"TKN{i:03d}" for i in range(len(BASE_TOKENS), N_TOKENS))
_TAIL_START = 100

_token_w = 1.0 / np.arange(1, N_TOKENS + 1) ** 1.1
TOKEN_WEIGHTS = _token_w / _token_w.sum()

_chain_w = np.array([0.07, 0.02, 0.08, 0.09, 0.02, 0.45, 0.06, 0.10, 0.03, 0.02, 0.06])
CHAIN_WEIGHTS = _chain_w / _chain_w.sum()

# Majors carry most of the volume.
_proto_w = np.array([0.16, 0.12, 0.12, 0.08, 0.07, 0.08] + [0.37 / 17] * 17)
PROTOCOL_WEIGHTS = _proto_w / _proto_w.sum()

GOOD_EVENT_MIX = np.array([0.12, 0.10, 0.10, 0.22, 0.02, 0.09, 0.25, 0.10])

_EV = {e: i for i, e in enumerate(EVENT_TYPES)}
_OUTGOING = {"add_liquidity", "deposit", "repay"}
_INCOMING = {"remove_liquidity", "withdraw", "borrow"}

BLOCK_LO, BLOCK_HI = 5_771_740, 36_843_000


@dataclass(frozen=True)
class FraudProfile:
    """Distribution shifts applied to malicious addresses (all zero = indistinguishable)."""
    liquidation_margin: float = 0.12
    withdraw_margin: float = 0.10
    burst_fraction: float = 0.5
    age_scale: float = 0.5
    tail_token_share: float = 0.45
    value_scale: float = 2.0
    success_drop: float = 0.03
    camouflage: float = 0.05

    @classmethod
    def off(cls) -> "FraudProfile":
        return cls(0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0)

    def event_mix(self) -> np.ndarray:
        mix = GOOD_EVENT_MIX.copy()
        liq, wd = _EV["liquidation"], _EV["withdraw"]
        rest = np.ones(len(mix), bool)
        rest[[liq, wd]] = False
        mix[liq] += self.liquidation_margin
        mix[wd] += self.withdraw_margin
        mix[rest] *= (1.0 - mix[liq] - mix[wd]) / GOOD_EVENT_MIX[rest].sum()
        return mix


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_good: int = 100
    n_malicious: int = 10
    events_per_address: tuple[int, int] = (3, 40)
    fraud_profile: FraudProfile = field(default_factory=FraudProfile)

    def validate(self) -> None:
        lo, hi = self.events_per_address
        if not 0 <= self.seed < 2 ** 64:
            raise InvalidConfig("seed must fit in 64 unsigned bits")
        if self.n_good < 0 or self.n_malicious < 0:
            raise InvalidConfig("class counts must be non-negative")
        if lo < 1 or lo > hi:
            raise InvalidConfig(f"events_per_address must satisfy 1 <= min <= max, got {lo, hi}")
        p = self.fraud_profile
        if p.liquidation_margin + p.withdraw_margin + GOOD_EVENT_MIX[[4, 7]].sum() >= 1:
            raise InvalidConfig("event-mix margins leave no mass for other events")
        for name in ("burst_fraction", "tail_token_share", "success_drop", "camouflage"):
            if not 0.0 <= getattr(p, name) <= 1.0:
                raise InvalidConfig(f"{name} must lie in [0, 1]")
        if p.age_scale <= 0 or p.value_scale <= 0:
            raise InvalidConfig("scales must be positive")


def address_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


def synthetic_address(seed: int, index: int) -> str:
    return "0x" + hashlib.blake2b(f"addr:{seed}:{index}".encode(), digest_size=20).hexdigest()


def _tx_hash(address: str, j: int) -> str:
    return "0x" + hashlib.blake2b(f"{address}:{j}".encode(), digest_size=32).hexdigest()


def _address_events(config: SynthConfig, index: int, malicious: bool) -> list[DecodedEvent]:
    rng = address_rng(config.seed, index)
    address = synthetic_address(config.seed, index)
    prof = config.fraud_profile
    lo, hi = config.events_per_address
    n = int(rng.integers(lo, hi + 1))

    fraud = malicious and rng.random() >= prof.camouflage
    mix = prof.event_mix() if fraud else GOOD_EVENT_MIX

    n_chains = 1 if rng.random() < 0.7 else 2
    chains = rng.choice(len(CHAINS), size=n_chains, replace=False, p=CHAIN_WEIGHTS)
    chain_idx = chains[rng.integers(0, n_chains, size=n)]

    span = int(min(np.exp(rng.normal(np.log(150_000), 1.0)), 3_000_000))
    if fraud:
        span = max(int(span * prof.age_scale), 1)
    starts = rng.integers(BLOCK_LO, BLOCK_HI - span, size=len(CHAINS))
    heights = starts[chain_idx] + rng.integers(0, span + 1, size=n)
    if fraud and prof.burst_fraction > 0:
        bursty = rng.random(n) < prof.burst_fraction
        n_bursts = int(rng.integers(1, 4))
        centers = rng.integers(0, span + 1, size=n_bursts)
        which = rng.integers(0, n_bursts, size=n)
        heights = np.where(bursty, starts[chain_idx] + centers[which] + rng.integers(0, 300, size=n), heights)

    ev_idx = rng.choice(len(EVENT_TYPES), size=n, p=mix)
    proto_idx = rng.choice(len(PROTOCOLS), size=n, p=PROTOCOL_WEIGHTS)
    tok_idx = rng.choice(N_TOKENS, size=n, p=TOKEN_WEIGHTS)
    if fraud and prof.tail_token_share > 0:
        favourites = rng.integers(_TAIL_START, N_TOKENS, size=2)
        use_tail = rng.random(n) < prof.tail_token_share
        tok_idx = np.where(use_tail, favourites[rng.integers(0, 2, size=n)], tok_idx)

    values = np.exp(rng.normal(6.0, 1.5, size=n))
    if fraud:
        pulls = np.isin(ev_idx, [_EV["withdraw"], _EV["borrow"], _EV["remove_liquidity"]])
        values = np.where(pulls, values * prof.value_scale, values)
    fee_rate = rng.uniform(0.0005, 0.003, size=n)
    gas_scale = np.where(chain_idx == CHAINS.index("Ethereum"), 1.0, 0.05)
    gas = np.exp(rng.normal(np.log(3.0), 0.8, size=n)) * gas_scale
    p_success = 0.97 - (prof.success_drop if fraud else 0.0)
    success = rng.random(n) < p_success
    coin = rng.random(n) < 0.5

    events = []
    for j in range(n):
        ev = EVENT_TYPES[ev_idx[j]]
        if ev in _OUTGOING:
            direction = "outgoing"
        elif ev in _INCOMING:
            direction = "incoming"
        else:
            direction = "outgoing" if coin[j] else "incoming"
        value = round(float(values[j]), 6)
        events.append(DecodedEvent(
            tx_hash=_tx_hash(address, j),
            address=address,
            chain=CHAINS[chain_idx[j]],
            protocol=PROTOCOLS[proto_idx[j]],
            event_type=ev,
            token=TOKENS[tok_idx[j]],
            value_usd=value,
            direction=direction,
            protocol_fee_usd=round(value * float(fee_rate[j]), 6),
            gas_fee_usd=round(float(gas[j]), 6),
            block_height=int(heights[j]),
            success=bool(success[j]),
        ))
    events.sort(key=lambda e: (e.chain, e.block_height, e.tx_hash))
    return events


def generate_corpus(config: SynthConfig) -> tuple[list[DecodedEvent], LabelRegistry]:
    config.validate()
    events: list[DecodedEvent] = []
    registry = LabelRegistry()
    for i in range(config.n_good + config.n_malicious):
        malicious = i >= config.n_good
        evs = _address_events(config, i, malicious)
        events.extend(evs)
        registry.add(evs[0].address, "malicious" if malicious else "good", "synthetic")
    return events, registry
