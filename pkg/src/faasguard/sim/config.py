"""Simulator configuration."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from ..errors import ConfigError
from ..model import ATTACK_LABELS

# Default attack mixes. Weights are relative draw frequencies per attack
# label; zero means the attack is never generated for that application
# (operation substitution only exists in the airline mix, operation
# insertion only in the VOD mix).
AIRLINE_ATTACK_WEIGHTS: dict[str, float] = {
    "permission-misuse-reorder": 72,
    "permission-misuse-different-op": 139,
    "permission-misuse-additional-op": 0,
    "data-leakage": 52,
    "dow-repeated-op": 141,
    "dow-increased-duration": 80,
}

VOD_ATTACK_WEIGHTS: dict[str, float] = {
    "permission-misuse-reorder": 265,
    "permission-misuse-different-op": 0,
    "permission-misuse-additional-op": 118,
    "data-leakage": 117,
    "dow-repeated-op": 800,
    "dow-increased-duration": 277,
}

APPLICATIONS = ("airline", "vod")
ARRIVAL_PROCESSES = ("uniform", "diurnal")


@dataclass(frozen=True)
class SimConfig:
    """Parameters of one corpus generation run.

    iterations drives the airline application (user sessions);
    files_uploaded drives the VOD application (upload events). mail_cap
    limits how many uploads may arrive via the mail route (None lifts the
    cap). All randomness flows from one generator seeded with `seed`.
    """

    application: str
    seed: int
    iterations: int = 0
    files_uploaded: int = 0
    anomaly_rate: float = 0.0
    per_attack_weights: Mapping[str, float] | None = None
    cold_start_rate: float = 0.0
    arrival_process: str = "uniform"
    arrival_spacing_ms: int = 60_000
    mail_cap: int | None = 200

    def __post_init__(self) -> None:
        if self.application not in APPLICATIONS:
            raise ConfigError(
                f"unknown application {self.application!r}; "
                f"expected one of {APPLICATIONS}"
            )
        if not 0.0 <= self.anomaly_rate <= 1.0:
            raise ConfigError("anomaly_rate must lie in [0, 1]")
        if not 0.0 <= self.cold_start_rate <= 1.0:
            raise ConfigError("cold_start_rate must lie in [0, 1]")
        if self.arrival_process not in ARRIVAL_PROCESSES:
            raise ConfigError(
                f"unknown arrival_process {self.arrival_process!r}; "
                f"expected one of {ARRIVAL_PROCESSES}"
            )
        if self.arrival_spacing_ms < 1:
            raise ConfigError("arrival_spacing_ms must be >= 1")
        if self.iterations < 0 or self.files_uploaded < 0:
            raise ConfigError("iteration/upload counts must be >= 0")
        if self.mail_cap is not None and self.mail_cap < 0:
            raise ConfigError("mail_cap must be >= 0 or None")
        weights = self.weights()
        for label, weight in weights.items():
            if label not in ATTACK_LABELS:
                raise ConfigError(f"unknown attack label {label!r} in weights")
            if weight < 0:
                raise ConfigError(f"negative weight for {label!r}")
        if self.anomaly_rate > 0 and not any(weights.values()):
            raise ConfigError(
                "anomaly_rate > 0 requires at least one positive attack weight"
            )

    def weights(self) -> dict[str, float]:
        """Resolved attack weights (application default when unset)."""
        if self.per_attack_weights is not None:
            return dict(self.per_attack_weights)
        if self.application == "airline":
            return dict(AIRLINE_ATTACK_WEIGHTS)
        return dict(VOD_ATTACK_WEIGHTS)

    def to_dict(self) -> dict:
        return {
            "application": self.application,
            "seed": self.seed,
            "iterations": self.iterations,
            "filesUploaded": self.files_uploaded,
            "anomalyRate": self.anomaly_rate,
            "perAttackWeights": self.weights(),
            "coldStartRate": self.cold_start_rate,
            "arrivalProcess": self.arrival_process,
            "arrivalSpacingMs": self.arrival_spacing_ms,
            "mailCap": self.mail_cap,
        }
