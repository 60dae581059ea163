import numpy as np
import pytest

from app.models import ExperimentConfig
from app.services.experiments import load_config
from app.services.field import ArrayField, WeightField, sample_field
from app.storage import RunStore

# Small grids that keep every experiment well inside a second per sample
SMALL_CONFIGS = {
    "corr_decay": {"n": 32, "r_grid": [2, 4, 8]},
    "corr_close": {"n": 32, "gap_grid": [2, 4, 8]},
    "profile_fluct": {"n": 64, "s_grid": [2, 3, 4]},
    "constrained_variance": {"n": 8, "r": 8, "theta_grid": [1, 2, 4]},
    "decomposition": {"n": 16, "r_grid": [4, 6], "n_grid": [12, 16]},
    "geodesic_localization": {"n": 64, "s_grid": [4], "t_grid": [1, 2, 4]},
    "moddev": {"n": 16, "h_grid": [0.5, 1, 2], "n_grid": [8, 16, 32]},
    "transversal": {"n": 32, "r_grid": [8, 16, 32], "k_grid": [1, 2, 3]},
    "rectangle_pairs": {"n": 16, "r_grid": [8, 16], "sources": 4},
}


@pytest.fixture
def field() -> WeightField:
    """A 64x64 environment."""
    return sample_field(12345, 0, 64)


@pytest.fixture
def example_field() -> ArrayField:
    """w(0,0)=1, w(1,0)=3, w(0,1)=2, w(1,1)=4."""
    return ArrayField(np.array([[1.0, 2.0], [3.0, 4.0]]))


@pytest.fixture
def store(tmp_path) -> RunStore:
    run_store = RunStore(tmp_path / "run")
    run_store.open()
    return run_store


@pytest.fixture
def small_config(tmp_path):
    """Factory for a quick config of any experiment, written under tmp_path."""

    def make(name: str, **overrides) -> ExperimentConfig:
        document = {
            "samples": 24,
            "batches": 4,
            "chunk_size": 8,
            "master_seed": 99,
            **SMALL_CONFIGS[name],
        }
        overrides.setdefault("out_path", tmp_path / name)
        return load_config(name, document, **overrides)

    return make
