import json
import math

import pytest

from pullback_lab import Poly
from pullback_lab.cli import (EXIT_ERROR, EXIT_OK, EXIT_USAGE, ExperimentConfig, cell_seed, format_complex, main,
                              map_id, parse_complex, parse_map, read_config_file, run_recipe)
from pullback_lab.errors import ConfigError
from pullback_lab.unicritical import UnicriticalFamily


@pytest.mark.parametrize("text,want", [("1", 1), ("i", 1j), ("-j", -1j), ("2-3i", 2 - 3j), (" 0.5 + 1j ", 0.5 + 1j)])
def test_parse_complex(text, want):
    assert parse_complex(text) == want


def test_parse_complex_infinity_and_errors():
    assert math.isinf(parse_complex("inf").real)
    with pytest.raises(ConfigError):
        parse_complex("one")


@pytest.mark.parametrize("c", [1, 1j, -2.5 + 0.5j, 3 - 1e-20j])
def test_format_roundtrip(c):
    assert parse_complex(format_complex(c)) == c


def test_parse_map():
    assert parse_map("monomial:3") == Poly.monomial(3)
    assert parse_map("unicritical:2") == UnicriticalFamily(2)
    assert parse_map("i,0,1") == Poly((1j, 0, 1))
    for bad in ("1,2", "monomial:x", "0,0,0"):
        with pytest.raises(ConfigError):
            parse_map(bad)


def test_map_id():
    assert map_id(Poly((1j, 0, 1))) == "poly:1j,0,1"
    assert map_id(UnicriticalFamily(3)) == "unicritical:3"


def test_config_file(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nmap = i,0,1\nn-max = 5  # trailing\nsamples=2000\na = 1;2i\n")
    assert read_config_file(str(p)) == {"map": "i,0,1", "n_max": 5, "samples": 2000, "a": (1, 2j)}
    p.write_text("colour = red\n")
    with pytest.raises(ConfigError):
        read_config_file(str(p))


def test_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(samples=10).validate()
    with pytest.raises(ConfigError):
        ExperimentConfig(n_min=5, n_max=3).validate()


def test_cell_seed():
    assert cell_seed(0, 3, 1 + 0j) == cell_seed(0, 3, 1 + 0j)
    assert cell_seed(0, 3, 1 + 0j) != cell_seed(1, 3, 1 + 0j)
    assert 0 <= cell_seed(5, "x") < 2**63


def test_unknown_recipe_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["no-such-recipe"])
    assert exc.value.code == EXIT_USAGE


def test_bad_config_is_usage_error(tmp_path):
    assert main(["buff", "--samples", "5", "--out-dir", str(tmp_path)]) == EXIT_USAGE
    assert main(["thm-b-rate", "--a", "0", "--out-dir", str(tmp_path)]) == EXIT_USAGE


def test_computation_error_exit_code(tmp_path):
    # degree 2^15 - 1 exceeds the default expansion cap
    code = main(["thm-a-weak", "--n-min", "15", "--n-max", "15", "--samples", "1000", "--out-dir", str(tmp_path)])
    assert code == EXIT_ERROR
    manifest = json.loads((tmp_path / "thm-a-weak.json").read_text())
    assert manifest["status"] == "error" and manifest["error"]["type"] == "CapExceeded"


def test_outputs_and_manifest(tmp_path):
    assert main(["buff", "--map", "4,0,1", "--samples", "2000", "--out-dir", str(tmp_path)]) == EXIT_OK
    manifest = json.loads((tmp_path / "buff.json").read_text())
    assert manifest["status"] == "ok" and manifest["build"] == "v0.1.0"
    assert set(manifest["outputs"]) == {"buff.csv", "buff_violations.csv"}
    rows = (tmp_path / "buff.csv").read_text().splitlines()
    assert rows[0].startswith("recipe,map_id") and rows[1].endswith("v0.1.0")


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("samples = 5000\nmap = 4,0,1\n")
    out = tmp_path / "out"
    assert main(["buff", "--config", str(cfg), "--samples", "1000", "--out-dir", str(out)]) == EXIT_OK
    manifest = json.loads((out / "buff.json").read_text())
    assert manifest["config"]["samples"] == 1000 and manifest["config"]["map"] == "4,0,1"


def test_rerun_is_byte_identical(tmp_path):
    cfg = dict(map="i,0,1", n_min=2, n_max=4, samples=2000, points=10)
    for sub in ("a", "b"):
        run_recipe("thm-a-weak", ExperimentConfig(out_dir=str(tmp_path / sub), ref_atoms=2000, **cfg))
    for name in ("thm-a-weak.csv", "thm-a-weak.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
