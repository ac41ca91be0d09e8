import pytest

from stiff_pinn.common.config import ExperimentConfig, load_config
from stiff_pinn.integrators import SolverConfig, integrate_bdf
from stiff_pinn.mechanism import builtin_pollu, builtin_rober, parse_mechanism


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False,
        help="run long training and full-benchmark acceptance tests",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="slow: pass --runslow to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def rober():
    return builtin_rober()


@pytest.fixture(scope="session")
def pollu():
    return builtin_pollu()


@pytest.fixture
def linear_decay():
    """y' = -y on one species."""
    return parse_mechanism("SPECIES: X Y\nINIT: 1 0\nTSPAN: 0 5\nX -> Y : 1\n")


@pytest.fixture(scope="session")
def rober_reference(rober):
    """Full ROBER over [0, 1e5] with BDF at rtol 1e-8, every accepted step, dense output."""
    kinetics = rober.kinetics
    trajectory = integrate_bdf(
        lambda t, y: kinetics.rhs(y),
        lambda t, y: kinetics.jacobian(y),
        rober.y0,
        rober.t_span,
        SolverConfig(rtol=1e-8, atol=1e-12),
        dense_output=True,
    )
    trajectory.species_names = rober.species_names
    return trajectory


@pytest.fixture
def tiny_config(tmp_path) -> ExperimentConfig:
    """ROBER stiff mode with a 2x8 network and a handful of updates."""
    return load_config(
        preset="rober-stiff",
        overrides=[
            f"--output.directory={tmp_path / 'out'}",
            "--network.widths=8,8",
            "--training.n_collocation=64",
            "--training.batch_size=16",
            "--training.max_updates=5",
            "--training.log_every=2",
            "--output.eval_points=50",
            "--solver.output_points=40",
        ],
    )

