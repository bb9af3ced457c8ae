"""Streaming weighted aggregation with a single-model memory footprint.

The coordinator knows every participant's weight when the round starts, so
each incoming model is folded into a running mean as ``weight / total``
times the update and then discarded.  At no point do two client models
coexist on the coordinator: memory stays at one accumulator regardless of
how many clients report.
"""

from __future__ import annotations

from ..errors import ConfigurationError
from ..nn.params import ParameterSet


class AggregationState:
    """Running pre-normalized weighted mean of client models.

    ``weight_total_expected`` must be the exact sum of the weights that
    will be accumulated; it is fixed up front so each contribution can be
    scaled once on arrival.
    """

    def __init__(self, template: ParameterSet, weight_total_expected: float) -> None:
        if weight_total_expected <= 0:
            raise ConfigurationError(
                f"expected total weight must be positive, got {weight_total_expected}"
            )
        self.running_mean = template.zeros_like()
        self.weight_accumulated = 0.0
        self.weight_total_expected = float(weight_total_expected)

    def accumulate(self, update: ParameterSet, weight: float) -> None:
        """Fold one client model in; the caller may discard it afterwards."""
        if weight <= 0:
            raise ConfigurationError(f"client weight must be positive, got {weight}")
        headroom = self.weight_total_expected - self.weight_accumulated
        if weight > headroom * (1 + 1e-9):
            raise ConfigurationError(
                f"accumulating weight {weight} would exceed the expected total "
                f"{self.weight_total_expected} (already at {self.weight_accumulated})"
            )
        self.running_mean.add_scaled_inplace(update, weight / self.weight_total_expected)
        self.weight_accumulated += weight

    @property
    def complete(self) -> bool:
        return abs(self.weight_accumulated - self.weight_total_expected) <= (
            1e-9 * self.weight_total_expected
        )

    def mean_so_far(self) -> ParameterSet:
        """Weighted mean of the contributions received so far."""
        if self.weight_accumulated == 0:
            raise ConfigurationError("no contributions accumulated yet")
        return self.running_mean.scaled(
            self.weight_total_expected / self.weight_accumulated
        )

    def finalize(self) -> ParameterSet:
        """The aggregated model, once every expected weight has arrived."""
        if not self.complete:
            raise ConfigurationError(
                f"aggregation is incomplete: accumulated {self.weight_accumulated} "
                f"of expected {self.weight_total_expected}"
            )
        return self.running_mean


def accumulate(state: AggregationState, update: ParameterSet, weight: float) -> AggregationState:
    """Functional wrapper around :meth:`AggregationState.accumulate`."""
    state.accumulate(update, weight)
    return state
