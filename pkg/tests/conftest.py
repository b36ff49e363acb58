import os
import tempfile
from pathlib import Path

# The results store must point at a scratch database before db.models is imported.
_DB_DIR = tempfile.mkdtemp(prefix="hermes-noc-tests-")
os.environ["DATABASE_URL"] = f"sqlite:///{_DB_DIR}/results.db"

import pytest

from noc.reconfig import run_reconfiguration
from noc.topology import build_mesh, load_faults, victimize_bidirectional
from schemas.experiments import ExperimentConfig

TESTS_DIR = Path(__file__).parent
FIXTURES = TESTS_DIR / "fixtures"
GOLDEN = TESTS_DIR / "golden"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def golden_dir() -> Path:
    return GOLDEN


@pytest.fixture
def mesh3():
    return build_mesh(3, 3)


@pytest.fixture
def fig2_topology():
    """3x3 mesh with links 1-2, 4-5 and 7-8 down in both directions."""
    mesh = build_mesh(3, 3)
    faults = load_faults((FIXTURES / "fig2.faults").read_text(), mesh)
    return mesh.with_faults(victimize_bidirectional(faults, mesh))


@pytest.fixture
def fig2_outcome(fig2_topology):
    return run_reconfiguration(fig2_topology, None, initiator=1, start_clock=0)


@pytest.fixture
def small_config() -> ExperimentConfig:
    return ExperimentConfig(
        kx=4,
        ky=4,
        rates=[0.05],
        seeds=[0, 1],
        warmup_cycles=200,
        measure_cycles=1000,
        drain_cycles=3000,
        workers=1,
    )
