"""Closed-form storage-query predictions and ledger reconciliation.

Query counts per strategy, for m examples in chunks of b over T epochs:

    random_access   offline 0            online T*m
    shuffle_once    offline m + m/b      online T*m/b
    corgipile       offline 0            online T*m/b
    corgi2          offline passes*2m/b  online T*m/b

Shuffle-once pays m single-example reads plus m/b chunk writes up
front; the two-phase pipeline reads and rewrites every chunk once per
offline pass. Reconciliation against a measured ledger is exact: any
deviation is a bug, not noise.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import ContractError
from .storage import QueryLedger

RANDOM_ACCESS = "random_access"
SHUFFLE_ONCE = "shuffle_once"
CORGIPILE = "corgipile"
CORGI2 = "corgi2"
STRATEGIES = (RANDOM_ACCESS, SHUFFLE_ONCE, CORGIPILE, CORGI2)

# the trainer-facing baseline name for per-example access
_ALIASES = {"full_shuffle": RANDOM_ACCESS}


@dataclass(frozen=True)
class QueryPrediction:
    strategy: str
    offline: int
    online: int

    @property
    def total(self) -> int:
        return self.offline + self.online


@dataclass(frozen=True)
class ReconciliationReport:
    strategy: str
    expected_offline: int
    observed_offline: int
    expected_online: int
    observed_online: int

    @property
    def match(self) -> bool:
        return (
            self.expected_offline == self.observed_offline
            and self.expected_online == self.observed_online
        )

    def mismatches(self) -> list[str]:
        out = []
        if self.expected_offline != self.observed_offline:
            out.append(f"offline: expected {self.expected_offline}, observed {self.observed_offline}")
        if self.expected_online != self.observed_online:
            out.append(f"online: expected {self.expected_online}, observed {self.observed_online}")
        return out


def predict_queries(strategy: str, m: int, b: int, epochs: int, offline_passes: int = 1) -> QueryPrediction:
    """Exact query counts for one run of `strategy`."""
    strategy = _ALIASES.get(strategy, strategy)
    if strategy not in STRATEGIES:
        raise ContractError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if b < 1 or m < 1:
        raise ContractError(f"need m, b >= 1, got m={m}, b={b}")
    if m % b != 0:
        raise ContractError(f"chunk size must divide the dataset: m={m}, b={b}")
    if epochs < 0:
        raise ContractError(f"epochs must be >= 0, got {epochs}")
    if offline_passes < 0:
        raise ContractError(f"offline_passes must be >= 0, got {offline_passes}")
    chunks = m // b
    if strategy == RANDOM_ACCESS:
        return QueryPrediction(strategy, offline=0, online=epochs * m)
    if strategy == SHUFFLE_ONCE:
        return QueryPrediction(strategy, offline=m + chunks, online=epochs * chunks)
    if strategy == CORGIPILE:
        return QueryPrediction(strategy, offline=0, online=epochs * chunks)
    return QueryPrediction(strategy, offline=offline_passes * 2 * chunks, online=epochs * chunks)


def reconcile(prediction: QueryPrediction, ledger: QueryLedger) -> ReconciliationReport:
    """Compare a prediction with a measured ledger, counter by counter."""
    snap = ledger.snapshot()
    return ReconciliationReport(
        strategy=prediction.strategy,
        expected_offline=prediction.offline,
        observed_offline=snap["offline_reads"] + snap["offline_writes"],
        expected_online=prediction.online,
        observed_online=snap["online_reads"] + snap["online_writes"],
    )
