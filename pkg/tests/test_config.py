import pytest

from locrom.config import load_config, parse_config, write_config
from locrom.errors import ConfigError

BASE = """
[model]
name = pitchfork
n_interior = 32

[sampling]
kind = uniform
range = 10, 30
count = 12
"""


def test_defaults():
    cfg = parse_config(BASE)
    assert cfg.model == {"name": "pitchfork", "n_interior": 32, "domain_length": 1.0,
                         "seed_amplitude": 1.0, "branch": "lower"}
    assert cfg.sampling.count == 12 and cfg.sampling.range == (10.0, 30.0)
    assert cfg.k is None and cfg.k_max == 8 and cfg.alpha == 0.05
    assert cfg.steady_tol == 1e-10 and cfg.rom_tol == 1e-10 and cfg.rom_max_iter == 3000
    assert cfg.criterion == "midrange_radius"
    assert cfg.truncation.kind == "energy" and cfg.truncation.energy_tol == 1e-8


def test_full_config_and_round_trip(tmp_path):
    text = BASE.replace("name = pitchfork", "name = modal").replace("n_interior = 32", "n_interior = 40\nschedule = 12:45:1, 45:60:2")
    text = text.replace("range = 10, 30", "range = 12, 60") + """
[clustering]
k = 2
restarts = 3
seed = 9

[basis]
rule = fixed
fixed_L = 4

[online]
criterion = mean

[solver]
rom_method = newton
"""
    cfg = parse_config(text)
    assert cfg.model["schedule"] == ((12.0, 45.0, 1), (45.0, 60.0, 2))
    assert cfg.k == 2 and cfg.restarts == 3 and cfg.seed == 9
    assert cfg.truncation.kind == "fixed" and cfg.truncation.fixed_L == 4
    assert cfg.criterion == "parameter_mean" and cfg.rom_method == "newton"
    write_config(tmp_path / "c.txt", cfg)
    assert load_config(tmp_path / "c.txt") == cfg


def test_points_file(tmp_path):
    (tmp_path / "pts.txt").write_text("11\n15\n# x\n20\n")
    (tmp_path / "c.txt").write_text(BASE.replace("kind = uniform", "kind = explicit")
                                    .replace("count = 12", "points_file = pts.txt"))
    cfg = load_config(tmp_path / "c.txt")
    assert cfg.sampling.explicit_points == (11.0, 15.0, 20.0)


@pytest.mark.parametrize("text", [
    BASE + "\n[extras]\nfoo = 1\n",
    BASE.replace("count = 12", "count = 12\ncolour = red"),
    BASE.replace("name = pitchfork", "name = burgers"),
    BASE.replace("name = pitchfork\n", ""),
    BASE.replace("range = 10, 30", "range = 10"),
    BASE.replace("count = 12", "count = many"),
    BASE + "\n[clustering]\nk = some\n",
    BASE + "\n[clustering]\nalpha = 2\n",
    BASE + "\n[clustering]\nk_max = 2\n",
    BASE + "\n[online]\ncriterion = nearest\n",
    BASE + "\n[solver]\nrom_method = secant\n",
    BASE + "\n[solver]\nsteady_tol = -1\n",
    BASE + "\n[basis]\nrule = fixed\nfixed_L = 0\n",
    BASE.replace("n_interior = 32", "n_interior = 32\nschedule = 12:45:1"),
    "not an ini file",
])
def test_rejections(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.txt")
