"""Cloud cost of CPU time."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

MICROCENTS_PER_USD = 100 * 1_000_000
# per-core-second rate quoted for a 128-core, ~8 USD/h cloud instance: 0.017 millicents
PAPER_RATE_MICROCENTS = 17.0
DEFAULT_PRICE_PER_HOUR = 8.0
DEFAULT_INSTANCE_CORES = 128


@dataclass(frozen=True)
class CostEstimate:
    cpu_seconds: float
    cores: int
    formula_rate_microcents: float  # per core-second, from price / cores / 3600
    paper_rate_microcents_per_core_second: float
    measured_microcents: float
    paper_rate_microcents: float
    discrepancy: bool

    def to_dict(self) -> dict:
        return asdict(self)


def estimate_cost(cpu_seconds: float, cores: int = 1,
                  price_per_instance_hour: float = DEFAULT_PRICE_PER_HOUR,
                  instance_cores: int = DEFAULT_INSTANCE_CORES) -> CostEstimate:
    """Cost of ``cpu_seconds`` on ``cores`` cores, in microcents.

    ``measured_microcents`` uses the rate derived from the instance price;
    ``paper_rate_microcents`` uses the quoted 17 microcents per core-second.
    The two rates disagree by two orders of magnitude, which ``discrepancy``
    reports rather than resolves.
    """
    if cores <= 0 or instance_cores <= 0:
        raise ValueError("core counts must be positive")
    if cpu_seconds < 0 or price_per_instance_hour < 0:
        raise ValueError("time and price must be non-negative")
    rate = price_per_instance_hour / instance_cores / 3600 * MICROCENTS_PER_USD
    core_seconds = cpu_seconds * cores
    return CostEstimate(
        cpu_seconds=cpu_seconds,
        cores=cores,
        formula_rate_microcents=rate,
        paper_rate_microcents_per_core_second=PAPER_RATE_MICROCENTS,
        measured_microcents=core_seconds * rate,
        paper_rate_microcents=core_seconds * PAPER_RATE_MICROCENTS,
        discrepancy=not math.isclose(rate, PAPER_RATE_MICROCENTS, rel_tol=0.01),
    )
