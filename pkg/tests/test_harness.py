import json
from pathlib import Path

import pytest

from cli.main import EXIT_CONFIG, EXIT_OK, main
from src.application.equidistribution.lab import LiouvilleReference
from src.application.harness.checks import FlowCheckSuite
from src.application.harness.runner import GOLDEN_SUBCOMMANDS, SUBCOMMANDS, ExperimentRunner
from src.domain.config import ExperimentConfig
from src.domain.errors import TrendNotDemonstrated
from src.domain.reports import BirkhoffRow, MixingRow, StabilityComparison
from src.infrastructure.settings import settings
from src.infrastructure.storage.formats import load_config

GOLDEN = Path(settings.GOLDEN_DIR)


@pytest.fixture(scope="module")
def small_config():
    return ExperimentConfig(
        potential_file=settings.DEFAULT_POTENTIAL,
        liouville_samples=1000,
        cartan_instances=3,
        cartan_samples=500,
        cover_instances=2,
    )


def test_invalid_config_exits_with_code_2(tmp_path):
    path = tmp_path / "bad.conf"
    path.write_text("c = 1.6\n", encoding="utf-8")

    assert main(["surface-info", "--config", str(path), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_unknown_config_key_exits_with_code_2(tmp_path):
    path = tmp_path / "bad.conf"
    path.write_text("colour = blue\n", encoding="utf-8")

    assert main(["surface-info", "-c", str(path), "-o", str(tmp_path)]) == EXIT_CONFIG


def test_missing_config_exits_with_code_2(tmp_path):
    assert main(["surface-info", "-c", str(tmp_path / "absent.conf")]) == EXIT_CONFIG


def test_surface_info_from_the_command_line(tmp_path):
    code = main(["surface-info", "-o", str(tmp_path), "--quick", "--threads", "1", "--seed", "3"])
    manifest = json.loads((tmp_path / "surface-info" / "manifest.json").read_text(encoding="utf-8"))

    assert code == EXIT_OK
    assert (tmp_path / "surface-info" / "surface_info.csv").exists()
    assert manifest["subcommand"] == "surface-info"
    assert manifest["seed"] == 3
    assert manifest["quick"] is True
    assert manifest["workers"] == 1
    assert set(manifest["versions"]) == {"horolab", "numpy", "scipy", "pydantic", "loguru"}


def test_runner_rejects_unknown_subcommands(small_config, tmp_path):
    with pytest.raises(ValueError, match="Unknown subcommand"):
        ExperimentRunner(small_config, tmp_path).run("spectral-gap")


def test_sub_seeds_are_stable_and_distinct(small_config, tmp_path):
    runner = ExperimentRunner(small_config, tmp_path)

    assert runner.seed_for(4) == ExperimentRunner(small_config, tmp_path).seed_for(4)
    assert len({runner.seed_for(k) for k in range(20)}) == 20


@pytest.mark.parametrize("subcommand", ["surface-info", "cartan-verify"])
def test_runs_are_byte_identical(small_config, tmp_path, subcommand):
    first = ExperimentRunner(small_config, tmp_path / "a").run(subcommand)
    second = ExperimentRunner(small_config, tmp_path / "b").run(subcommand)

    artifacts = sorted(p.name for p in first.glob("*.csv"))
    assert artifacts
    for name in artifacts:
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_surface_info_record(small_config, tmp_path):
    out = ExperimentRunner(small_config, tmp_path).run("surface-info")
    row = json.loads((out / "surface_info.json").read_text(encoding="utf-8"))[0]

    assert row["word_cache_size"] == 3200
    assert row["relation_residual"] <= 1e-10
    assert len(row["generators"]) == 4
    assert all(abs(t) == pytest.approx(2.0 + 2.0 * 2.0**0.5, rel=1e-12) for t in row["traces"])
    assert 0.0 < row["acceptance"] <= 1.0


def test_cartan_verify_writes_certificates(small_config, tmp_path):
    out = ExperimentRunner(small_config, tmp_path).run("cartan-verify")
    certificates = json.loads((out / "cartan_disks.json").read_text(encoding="utf-8"))

    assert len(certificates) == 3
    assert all(c["violations"] == 0 for c in certificates)


def test_golden_subcommands_are_runnable():
    assert set(GOLDEN_SUBCOMMANDS) <= set(SUBCOMMANDS)


@pytest.mark.slow
@pytest.mark.parametrize("subcommand", GOLDEN_SUBCOMMANDS)
def test_quick_suite_matches_golden_files(tmp_path, subcommand):
    golden_dir = GOLDEN / subcommand
    assert golden_dir.is_dir(), f"{golden_dir} is missing; regenerate it with scripts/refresh_golden.py"
    goldens = sorted(golden_dir.glob("*.csv"))
    assert goldens

    config = load_config(settings.DEFAULT_CONFIG, {"seed": settings.SEED})
    out = ExperimentRunner(config, tmp_path, quick=True).run(subcommand)
    for golden in goldens:
        assert (out / golden.name).read_bytes() == golden.read_bytes(), golden.name


@pytest.fixture
def suite(group, flows, stability):
    return FlowCheckSuite(group, flows, stability, seed=21, quick=True)


def test_commutation_checks_pass(suite):
    checks = suite.commutation()

    assert len(checks) >= 2
    assert all(c.passed for c in checks)


def test_invariance_check_passes(suite):
    assert suite.invariance().passed


@pytest.mark.slow
def test_flow_check_suite_passes(suite):
    checks = suite.run()

    assert {c.invariant for c in checks if not c.passed} == set()


def _reference(*args, **kwargs):
    return LiouvilleReference(mean=0.0, mc_error=1e-4, minimum=-1.0, maximum=1.0)


def _birkhoff_rows(horizons, envelope):
    return [
        BirkhoffRow(T=T, point=0, rho=[0.0, 1.0, 0.0], estimate=e, liouville_ref=0.0, deviation=e, mc_error=1e-4, envelope=e)
        for T, e in zip(horizons, envelope)
    ]


def _comparison(eps, gap):
    return StabilityComparison(
        eps=eps, s=0.05, T=4.0, N=3, lhs=0.5, rhs=0.5 + gap, gap=gap, bound=1.0, shape=1.0, C1=1.0,
        norm_xi=1.0, observable="custom_bump", rho0=[0.0, 1.0, 0.0],
    )


def _verdicts(out):
    return json.loads((out / "trend_verdicts.json").read_text(encoding="utf-8"))


@pytest.fixture
def stub_runner(small_config, tmp_path, monkeypatch):
    def build(quick=False):
        runner = ExperimentRunner(small_config, tmp_path, quick=quick)
        monkeypatch.setattr(runner.lab, "liouville_reference", _reference)
        return runner

    return build


def test_flat_birkhoff_envelope_fails_a_full_run(stub_runner, tmp_path, monkeypatch):
    runner = stub_runner()
    monkeypatch.setattr(runner.lab, "unique_ergodicity", lambda a, pts, hs, ref: _birkhoff_rows(sorted(hs), [0.1] * len(hs)))

    with pytest.raises(TrendNotDemonstrated, match="unique-ergodicity"):
        runner.run("unique-ergodicity")
    (verdict,) = _verdicts(tmp_path / "unique-ergodicity")
    assert (tmp_path / "unique-ergodicity" / "trend_verdicts.csv").exists()
    assert verdict["required"] and not verdict["passed"]


def test_failed_verdict_is_only_reported_on_the_quick_grid(stub_runner, tmp_path, monkeypatch):
    runner = stub_runner(quick=True)
    monkeypatch.setattr(runner.lab, "unique_ergodicity", lambda a, pts, hs, ref: _birkhoff_rows(sorted(hs), [0.1] * len(hs)))

    out = runner.run("unique-ergodicity")

    assert not _verdicts(out)[0]["passed"]


def test_decreasing_mixing_deviation_passes(stub_runner, monkeypatch):
    runner = stub_runner()

    def table(a, points, b, s_list, reference):
        return [
            MixingRow(
                s=s, b=b, point=0, rho=[0.0, 1.0, 0.0], direct=10.0 / s, birkhoff_form=10.0 / s,
                discrepancy=0.0, liouville_ref=0.0, deviation=10.0 / s, mc_error=1e-4,
            )
            for s in s_list
        ]

    monkeypatch.setattr(runner.lab, "mixing_table", table)
    (verdict,) = _verdicts(runner.run("mixing"))

    assert verdict["decreasing"] and verdict["passed"]
    assert verdict["slope"] == pytest.approx(-1.0)


@pytest.mark.parametrize("slope, passes", [(None, False), (1.0, True)])
def test_stability_sweep_verdict_follows_the_gap_slope(stub_runner, tmp_path, monkeypatch, slope, passes):
    runner = stub_runner()
    monkeypatch.setattr(runner.lab, "sample_start_points", lambda *args, **kwargs: [])

    def sweep(points, eps_list, *args):
        return [_comparison(e, 0.0 if slope is None else 5.0 * e) for e in eps_list]

    monkeypatch.setattr(runner.stability, "sweep", sweep)
    if passes:
        (verdict,) = _verdicts(runner.run("stability-sweep"))
        assert verdict["passed"]
    else:
        with pytest.raises(TrendNotDemonstrated, match="stability-sweep"):
            runner.run("stability-sweep")
        assert not _verdicts(tmp_path / "stability-sweep")[0]["passed"]


@pytest.mark.slow
def test_flow_check_exits_cleanly(tmp_path):
    assert main(["flow-check", "--quick", "-o", str(tmp_path)]) == EXIT_OK
