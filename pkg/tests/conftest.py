import warnings
from pathlib import Path

import numpy as np
import pytest

from dynrmtl import (
    CompetingRisksDataset,
    CovariateSchema,
    FittedModel,
    generate_cohort,
    reference_scenario,
)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def published_model() -> FittedModel:
    """Registry-coefficient model used for the arithmetic regression tests."""
    return FittedModel.load(str(FIXTURES / "breast_cancer_model.json"))


@pytest.fixture(scope="session")
def reference_cohort() -> CompetingRisksDataset:
    """One mid-size cohort from the benchmark scenario, 10% censoring."""
    return generate_cohort(reference_scenario(n=500), seed=42)


def binary_dataset(times, events, z, ids=None) -> CompetingRisksDataset:
    """Small helper: one binary covariate named z1."""
    z = np.asarray(z, dtype=float).reshape(-1, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return CompetingRisksDataset(
            times=np.asarray(times, dtype=float),
            events=np.asarray(events, dtype=np.int64),
            covariates=z,
            schema=CovariateSchema.numeric(["z1"]),
            ids=tuple(ids) if ids else (),
        )
