import os

import pytest

from subsparse.cli import bundled_config_text
from subsparse.config import ExperimentConfig, load_config, parse_config, with_overrides
from subsparse.exceptions import ConfigError
from subsparse.experiment import BUDGET_ENV, BudgetExceeded, check_budget


def test_bundled_config_parses():
    cfg = parse_config(bundled_config_text())
    assert cfg.ambient_dim == 50 and cfg.dims == (3, 3) and cfg.counts == (60, 60)
    assert cfg.angle_deg == 90.0 and cfg.epsilon_raw == 0.01 and cfg.rho == 0.25
    assert set(cfg.checks) == {"recovery", "support", "nsp", "lemma1", "lemma2", "lemma3", "appendix"}


def test_defaults_match_bundled():
    cfg = parse_config(bundled_config_text(), source="<defaults>")
    assert cfg == ExperimentConfig()


def test_typed_values_and_comments():
    cfg = parse_config("[data]\ndims = 2 2 1  # three subspaces\ncounts = 4, 5, 6\nangle_deg = none\nnormalize = no\n")
    assert cfg.dims == (2, 2, 1) and cfg.counts == (4, 5, 6)
    assert cfg.angle_deg is None and cfg.angle is None and cfg.normalize is False


@pytest.mark.parametrize(
    "text,match",
    [
        ("[data]\nambient_dim = fifty\n", r"<string>:2: \[data\] ambient_dim = 'fifty': expected int"),
        ("[data]\nbogus = 1\n", r"<string>:2: unknown key 'bogus' in \[data\]"),
        ("[extra]\nx = 1\n", r"<string>:1: unknown section \[extra\]"),
        ("[experiment]\nchecks = recovery, magic\n", "unknown check"),
        ("[data]\ndims = 2\ncounts = 3, 3\n", "same length"),
        ("[data]\nangle_deg = 120\n", "angle_deg"),
        ("no section header\n", "<string>"),
        ("[solver]\nrelaxation = 2.5\n", r"\[solver\]"),
        ("[data]\nepsilon_raw = nan\n", "not finite"),
    ],
)
def test_config_errors_have_locations(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_load_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "absent.cfg")


def test_overrides_validate():
    cfg = with_overrides(ExperimentConfig(), seed=5, jobs=None)
    assert cfg.seed == 5 and cfg.jobs == 1
    with pytest.raises(ConfigError):
        with_overrides(ExperimentConfig(), jobs=0)


def test_sweep_cells_lexicographic():
    cfg = parse_config("[sweep]\nepsilon_raw = 0.01, 0.001\nangle_deg = 90, 30\ncounts = 5, 6\n")
    cells = cfg.sweep_cells
    assert len(cells) == 8
    assert cells[0] == (0.01, 90.0, (5, 5)) and cells[1] == (0.01, 90.0, (6, 6)) and cells[2] == (0.01, 30.0, (5, 5))
    assert parse_config("").sweep_cells == [(0.01, 90.0, (60, 60))]


def test_budget(monkeypatch):
    cfg = ExperimentConfig(budget=10)
    with pytest.raises(BudgetExceeded):
        check_budget(cfg)
    monkeypatch.setenv(BUDGET_ENV, str(10**9))
    assert check_budget(cfg) == cfg.solves_per_cell()
    monkeypatch.setenv(BUDGET_ENV, "lots")
    with pytest.raises(ConfigError):
        check_budget(cfg)
