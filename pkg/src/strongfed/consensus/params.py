"""Federation thresholds and the robustness arithmetic."""

from __future__ import annotations

from dataclasses import dataclass


class ParamError(ValueError):
    pass


def _check(k: int, n: int) -> None:
    if not 1 <= k <= n:
        raise ParamError(f"thresholds must satisfy 1 <= k <= n (k={k}, n={n})")


def round_proposer(height: int, attempt: int, n: int) -> int:
    if n < 1:
        raise ParamError("n must be at least 1")
    return (height + attempt) % n


def fork_robustness(k: int, n: int) -> int:
    """Most equivocating signers that cannot produce two valid blocks at one height."""
    _check(k, n)
    return max(0, 2 * k - n - 1)


def liveness_tolerance(k: int, n: int) -> int:
    """Most unavailable signers with block production preserved."""
    _check(k, n)
    return n - k


@dataclass(frozen=True)
class FederationParams:
    n: int
    k: int
    precommit_threshold: int | None = None
    block_interval: float = 60.0  # seconds; 0 starts the next round on acceptance
    proposal_timeout: float = 0.6  # seconds per attempt before backoff
    max_backoff: int = 4  # attempt timeouts double at most this many times

    def __post_init__(self) -> None:
        _check(self.k, self.n)
        x = self.X
        if not self.k <= x <= self.n:
            raise ParamError(f"precommit threshold must satisfy k <= X <= n (X={x})")
        if self.block_interval < 0 or self.proposal_timeout <= 0:
            raise ParamError("block_interval must be >= 0 and proposal_timeout > 0")

    @property
    def X(self) -> int:
        return self.k if self.precommit_threshold is None else self.precommit_threshold

    @property
    def interval_ms(self) -> int:
        return round(self.block_interval * 1000)

    def attempt_timeout_ms(self, attempt: int) -> int:
        return round(self.proposal_timeout * 1000) << min(attempt, self.max_backoff)

    def next_round_start(self, accepted_at_ms: int) -> int:
        """First slot boundary at or after acceptance; immediate in fast mode."""
        iv = self.interval_ms
        if iv == 0:
            return accepted_at_ms
        return -(-accepted_at_ms // iv) * iv
