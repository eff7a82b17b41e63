import json
import re

import pytest

from src.domain.config import ExperimentConfig
from src.domain.errors import ConfigConstraintError
from src.domain.potential import Bump
from src.domain.reports import InvariantCheck
from src.infrastructure.storage.formats import (
    config_echo,
    load_config,
    load_group,
    parse_config_text,
    read_group_file,
    read_potential_file,
    write_group_file,
    write_potential_file,
)
from src.infrastructure.storage.records import RecordStore


def test_parse_config_text_splits_lists_and_skips_comments():
    values = parse_config_text(
        """
        # grids
        eps0_list = 1e-2, 3e-3 , 1e-3
        c = 1.3   # margin
        rel_tol = 1e-11
        """
    )

    assert values == {"eps0_list": ["1e-2", "3e-3", "1e-3"], "c": "1.3", "rel_tol": "1e-11"}


def test_parse_config_text_rejects_bad_lines():
    with pytest.raises(ValueError, match="unknown key"):
        parse_config_text("colour = blue")
    with pytest.raises(ValueError, match="line 2"):
        parse_config_text("c = 1.3\nnonsense")


def test_flat_values_become_a_config():
    config = ExperimentConfig.from_flat(
        {
            "eps0_list": ["1e-2", "1e-3"],
            "J": "1",
            "nu2": "0.05",
            "c": "1.3",
            "integrator_order": "5",
            "energy_tol": "1e-8",
        }
    )

    assert config.eps0_list == [1e-2, 1e-3]
    assert config.J == 1
    assert config.nu2 == 0.05
    assert config.c == 1.3
    assert config.integrator.order == 5
    assert config.integrator.method == "RK45"
    assert config.integrator.energy_tol == 1e-8


@pytest.mark.parametrize(
    "values, constraint",
    [
        ({"c": "1.6"}, "c < 3/2"),
        ({"J": "1", "nu2": "0.2"}, "nu1 + (3J+1) nu2 < 1/2"),
        ({"c": "1.05"}, "1 + nu1 + (3J+1) nu2 < c"),
        ({"nu2": "0"}, "nu2 > 0"),
    ],
)
def test_regime_constraints_are_named(values, constraint):
    with pytest.raises(ConfigConstraintError, match=re.escape(constraint)) as info:
        ExperimentConfig.from_flat(values)

    assert info.value.constraint == constraint


def test_eps_grid_must_lie_in_the_unit_interval():
    with pytest.raises(ValueError):
        ExperimentConfig(eps0_list=[0.5, 1.5])


def test_shipped_config_loads_with_overrides():
    config = load_config("config/default.conf", {"seed": 7, "output_dir": None})

    assert config.seed == 7
    assert config.potential_file == "data/default.potential"
    assert config.output_dir == "data/runs"
    assert (config.c, config.nu2, config.eps0_list) == (1.45, 0.02, [1e-2, 1e-4, 1e-6])


def test_config_echo_flattens_the_integrator():
    echo = config_echo(ExperimentConfig())

    assert "integrator" not in echo
    assert echo["integrator_order"] == 8
    assert echo["rel_tol"] == 1e-12
    assert echo["observable"] == "custom_bump"
    assert ExperimentConfig.from_flat(echo) == ExperimentConfig()


def test_group_file_reloads_the_same_group(group, tmp_path):
    path = write_group_file(tmp_path / "bolza.group", group)
    reloaded = load_group(path, 2)

    assert path.read_bytes().endswith(b"\n")
    assert b"\r" not in path.read_bytes()
    assert reloaded.relation_residual() <= 1e-9
    for a, b in zip(group.generators, reloaded.generators):
        assert a.isclose(b, 1e-15)


def test_group_file_rejects_non_unimodular_rows(tmp_path):
    path = tmp_path / "broken.group"
    path.write_text("2 0 0 2\n", encoding="utf-8")

    with pytest.raises(ValueError, match="determinant"):
        read_group_file(path)


def test_potential_file(tmp_path):
    bumps = [Bump(0.3, 1.4, 0.35, 1.0), Bump(-0.5, 0.8, 0.5, -0.7)]
    path = write_potential_file(tmp_path / "v.potential", bumps)

    assert read_potential_file(path) == bumps
    assert read_potential_file("data/default.potential") == bumps

    path.write_text("0.3 1.4 0.35\n", encoding="utf-8")
    with pytest.raises(ValueError, match="expected 4 numbers"):
        read_potential_file(path)


def test_record_store_writes_fixed_csv(tmp_path):
    store = RecordStore(tmp_path / "run")
    rows = [
        InvariantCheck(invariant="commutation", value=0.1, threshold=1e-12, passed=True),
        InvariantCheck(invariant="cocycle", value=2.0 / 3.0, threshold=1e-8, passed=False),
    ]
    csv_path, json_path = store.save(rows)

    text = csv_path.read_bytes().decode("utf-8")
    assert csv_path.name == "flow_check.csv"
    assert "\r" not in text
    assert text.splitlines() == [
        "invariant,value,threshold,passed",
        "commutation,0.10000000000000001,9.9999999999999998e-13,true",
        "cocycle,0.66666666666666663,1e-08,false",
    ]
    assert json.loads(json_path.read_text(encoding="utf-8"))[1]["invariant"] == "cocycle"
    assert store.load(InvariantCheck) == rows


def test_record_store_refuses_an_empty_batch(tmp_path):
    with pytest.raises(ValueError):
        RecordStore(tmp_path).save([])


def test_manifest_keys_are_sorted(tmp_path):
    path = RecordStore(tmp_path).write_manifest({"seed": 1, "quick": True, "config_echo": {}})

    assert list(json.loads(path.read_text(encoding="utf-8"))) == ["config_echo", "quick", "seed"]
