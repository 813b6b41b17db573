import json

import pytest

from vi_sharp.core.exceptions import ConfigInvalid
from vi_sharp.models.schemas import EXPERIMENTAL_NOTE, RunConfig, RunSummary
from vi_sharp.repository.certificate_store import CertificateStore
from vi_sharp.services.report_service import ReportService
from vi_sharp.services.run_service import RunService


@pytest.fixture
def run_service(tmp_path, thread_count):
    """Fixture for a RunService writing artifacts under a temporary directory."""
    return RunService(
        thread_count=thread_count,
        report_service=ReportService(output_dir=str(tmp_path / "runs")),
        certificate_store=CertificateStore(str(tmp_path / "certificates")),
    )


@pytest.fixture
def fig1_config():
    return RunConfig.model_validate(
        {
            "problem": {"kind": "builtin", "name": "fig1"},
            "solver": {
                "epsilon": 0.05,
                "schedule": {"kind": "harmonic", "theta0": 0.5},
                "max_iters": 2000,
                "x0": [0.5],
            },
            "output": {"trace_path": "fig1.csv", "summary_path": "fig1.json"},
        }
    )


def write_config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_load_config(tmp_path, fig1_config):
    """Test that a JSON file validates into a RunConfig."""
    # Arrange
    path = write_config(tmp_path, fig1_config.model_dump(by_alias=True, mode="json"))

    # Act
    config = RunService.load_config(path)

    # Assert
    assert config == fig1_config


@pytest.mark.parametrize(
    "content,field",
    [
        ("{not json", "config"),
        (json.dumps({"problem": {"kind": "builtin", "name": "fig1"}}), "solver"),
        (
            json.dumps(
                {
                    "problem": {"kind": "builtin", "name": "fig1"},
                    "solver": {"epsilon": 0.05, "lambda": 0},
                }
            ),
            "solver.lambda",
        ),
    ],
)
def test_load_config_errors(tmp_path, content, field):
    """Test that every config failure names the offending field."""
    # Arrange
    path = tmp_path / "bad.json"
    path.write_text(content)

    # Act
    with pytest.raises(ConfigInvalid) as exc_info:
        RunService.load_config(str(path))

    # Assert
    assert exc_info.value.field == field


def test_load_config_missing_file(tmp_path):
    """Test that an unreadable path is a config error."""
    with pytest.raises(ConfigInvalid):
        RunService.load_config(str(tmp_path / "missing.json"))


def test_with_solver_overrides(fig1_config):
    """Test that CLI overrides replace solver fields and skip None."""
    # Act
    config = RunService.with_solver_overrides(fig1_config, seed=7, max_iters=None)

    # Assert
    assert config.solver.seed == 7
    assert config.solver.max_iters == 2000


def test_run_writes_trace_and_summary(run_service, fig1_config, tmp_path):
    """Test a complete run and its artifacts."""
    # Act
    summary = run_service.run(fig1_config)

    # Assert
    trace_lines = (tmp_path / "runs" / "fig1.csv").read_text().splitlines()
    assert len(trace_lines) == 2001
    assert summary.certified_eps <= 0.05
    assert summary.convergence.a1_pass
    assert summary.experimental is False
    assert summary.lambda_ == pytest.approx(2.0 * summary.lambda_bound)
    saved = RunSummary.model_validate_json((tmp_path / "runs" / "fig1.json").read_text())
    assert saved.config == fig1_config
    assert saved.best == summary.best


@pytest.mark.parametrize(
    "field,path",
    [
        ("summary_path", "/dev/null/fig1.json"),
        ("trace_path", "/dev/null/fig1.csv"),
    ],
)
def test_unwritable_output_fails_before_solving(
    run_service, fig1_config, tmp_path, mocker, field, path
):
    """Test that an unusable artifact path is a config error raised before any compute."""
    # Arrange
    data = fig1_config.model_dump(by_alias=True, mode="json")
    data["output"][field] = path
    config = RunConfig.model_validate(data)
    mock_solve = mocker.patch("vi_sharp.services.run_service.solve")

    # Act
    with pytest.raises(ConfigInvalid) as exc_info:
        run_service.run(config)

    # Assert
    assert exc_info.value.field == f"output.{field}"
    mock_solve.assert_not_called()
    assert not (tmp_path / "runs" / "fig1.csv").exists()


def test_summary_uses_lambda_key(run_service, fig1_config, tmp_path):
    """Test that the summary document spells the field 'lambda'."""
    # Act
    run_service.run(fig1_config)

    # Assert
    document = json.loads((tmp_path / "runs" / "fig1.json").read_text())
    assert "lambda" in document
    assert "lambda" in document["config"]["solver"]


def test_runs_are_byte_identical(run_service, fig1_config, tmp_path):
    """Test that the same config and seed reproduce the trace file exactly."""
    # Act
    run_service.run(fig1_config)
    first = (tmp_path / "runs" / "fig1.csv").read_bytes()
    run_service.run(fig1_config)
    second = (tmp_path / "runs" / "fig1.csv").read_bytes()

    # Assert
    assert first == second


def test_run_with_oracle_attaches_certificate(run_service, tmp_path):
    """Test that a config problem without x* is certified before solving."""
    # Arrange
    config = RunConfig.model_validate(
        {
            "problem": {
                "kind": "affine",
                "matrix": [[1.0, 0.0], [0.0, 1.0]],
                "vector": [-0.3, 0.2],
                "set": {"kind": "box", "lower": [-1.0, -1.0], "upper": [1.0, 1.0]},
            },
            "solver": {"epsilon": 0.05, "max_iters": 3000},
            "oracle": {"enabled": True},
        }
    )

    # Act
    summary = run_service.run(config)

    # Assert
    assert summary.certificate is not None
    assert summary.certificate.method == "extragradient"
    assert summary.certificate.x_star == pytest.approx([0.3, -0.2], abs=1e-8)
    assert summary.certified_eps <= 0.05
    assert len(list(run_service.certificate_store.keys())) == 1


def test_certificate_cache_is_reused(run_service, fig1_config, mocker):
    """Test that a second request reads the stored certificate."""
    # Arrange
    problem, _, _ = run_service.prepare(fig1_config)
    first = run_service.certificate(fig1_config, problem)

    mock_mint = mocker.patch("vi_sharp.services.run_service.mint_certificate")

    # Act
    second = run_service.certificate(fig1_config, problem)

    # Assert
    mock_mint.assert_not_called()
    assert second == first


def test_sweep_lambda_multiples(run_service, fig1_config, tmp_path):
    """Test a lambda sweep given in multiples of the bound."""
    # Act
    rows = run_service.sweep(fig1_config, "lambda", ["0.5L", "1L", "2L"], "lambda.csv")

    # Assert
    assert len(rows) == 3
    assert rows[1][0] == pytest.approx(2.0 * rows[0][0])
    assert rows[2][0] == pytest.approx(4.0 * rows[0][0])
    lines = (tmp_path / "runs" / "lambda.csv").read_text().splitlines()
    assert lines[0] == "value,iters,restarts,certified_eps,best_residual"
    assert len(lines) == 4


def test_sweep_epsilon(run_service, fig1_config):
    """Test that each swept eps bounds the certified accuracy of its run."""
    # Act
    rows = run_service.sweep(fig1_config, "epsilon", ["0.1", "0.05"])

    # Assert
    for value, _, _, certified_eps, _ in rows:
        assert certified_eps <= value


def test_sweep_geometric_ratio_is_flagged(run_service, fig1_config, tmp_path):
    """Test that a sweep over a summable schedule is marked experimental."""
    # Arrange
    config = RunService.with_solver_overrides(
        fig1_config, schedule={"kind": "geometric", "theta0": 0.5, "ratio": 0.9}
    )

    # Act
    run_service.sweep(config, "ratio", ["0.9", "0.99"], "ratio.csv")

    # Assert
    first_line = (tmp_path / "runs" / "ratio.csv").read_text().splitlines()[0]
    assert first_line == f"# {EXPERIMENTAL_NOTE}"


@pytest.mark.parametrize("parameter", ["ratio", "bogus"])
def test_sweep_rejects_unknown_parameter(run_service, fig1_config, parameter):
    """Test that harmonic schedules cannot sweep ratio and unknown names fail."""
    with pytest.raises(ConfigInvalid) as exc_info:
        run_service.sweep(fig1_config, parameter, ["0.5"])
    assert exc_info.value.field == "sweep.param"


def test_sweep_rejects_unparseable_value(run_service, fig1_config):
    """Test that values must be numbers."""
    with pytest.raises(ConfigInvalid):
        run_service.sweep(fig1_config, "theta0", ["abc"])


def test_problem_key_for_config_problems(fig1_config):
    """Test that config problems are keyed by content."""
    # Arrange
    spec = {
        "kind": "affine",
        "matrix": [[1.0]],
        "vector": [0.0],
        "set": {"kind": "box", "lower": [-1.0], "upper": [1.0]},
    }
    first = RunConfig.model_validate({"problem": spec, "solver": {"epsilon": 0.1}})
    changed = RunConfig.model_validate(
        {"problem": {**spec, "vector": [0.5]}, "solver": {"epsilon": 0.1}}
    )
    service = RunService()

    # Act
    key = service.problem_key(first, service.prepare(first)[0])
    other = service.problem_key(changed, service.prepare(changed)[0])

    # Assert
    assert key.startswith("affine-config-")
    assert key != other
