"""Exception hierarchy. Every error carries a machine-readable ``code``."""
from __future__ import annotations


class TierplaceError(Exception):
    code = "error"

    def __init__(self, message: str, path: str = ""):
        super().__init__(message)
        self.path = path

    def as_dict(self) -> dict:
        return {"code": self.code, "path": self.path, "message": str(self)}


class ValidationError(TierplaceError, ValueError):
    code = "invalid_value"


class SchemaError(ValidationError):
    code = "schema_error"


class DanglingReference(ValidationError):
    code = "dangling_reference"


class DegenerateMeasurement(ValidationError):
    code = "degenerate_measurement"


class MissingPlacement(TierplaceError):
    code = "missing_placement"


class ZeroWorkloadSystem(TierplaceError):
    code = "zero_workload_system"


class DegenerateTierPair(TierplaceError):
    code = "degenerate_tier_pair"


class SearchSpaceTooLarge(TierplaceError):
    code = "search_space_too_large"


class PlacementInfeasible(TierplaceError):
    """No single tier or two-tier split satisfies the hard constraints."""

    code = "placement_infeasible"

    def __init__(self, message: str, dataset: str = "", jobs: tuple = ()):
        super().__init__(message, path=dataset)
        self.dataset = dataset
        self.jobs = tuple(jobs)


class InfeasibleScenario(TierplaceError):
    code = "infeasible_scenario"

    def __init__(self, message: str, dataset: str = "", slot: int | None = None,
                 jobs: tuple = ()):
        super().__init__(message, path=dataset)
        self.dataset = dataset
        self.slot = slot
        self.jobs = tuple(jobs)

    def as_dict(self) -> dict:
        d = super().as_dict()
        d.update(dataset=self.dataset, slot=self.slot, jobs=list(self.jobs))
        return d
