import pytest

from darksight.config import RunConfig, coerce, load_config, parse_config
from darksight.errors import ValidationError


def test_defaults():
    c = parse_config("", env={})
    assert c == RunConfig()
    assert (c.mu_out, c.u_p, c.tau, c.grid, c.num_frames, c.interval) == (0.5, 5, 0.877, 4, 8, 3)


def test_parse_values_and_comments():
    text = """
    # run settings
    seed = 7
    mu_out = 0.4   # darker target
    stages = 8, 16
    depths = 1,3
    raw_kernels = yes
    filter_source = y
    """
    c = parse_config(text, env={})
    assert c.seed == 7 and c.mu_out == 0.4
    assert c.stages == (8, 16) and c.depths == (1, 3)
    assert c.raw_kernels is True and c.filter_source == "y"


def test_env_overrides_seed():
    assert parse_config("seed = 3", env={"DARKSIGHT_SEED": "11"}).seed == 11
    assert parse_config("seed = 3", env={"DARKSIGHT_SEED": ""}).seed == 3


@pytest.mark.parametrize("text", ["colour = red", "seed = x", "mu_out = 1.5", "u_p = 4",
                                  "grid = 0", "stages = 8\ndepths = 1,2", "just words",
                                  "raw_kernels = maybe", "filter_source = z"])
def test_invalid_configs(text):
    with pytest.raises(ValidationError):
        parse_config(text, env={})


def test_coerce_rejects_unknown_key():
    with pytest.raises(ValidationError):
        coerce("nope", "1")
    assert coerce("mu_out", "0.3") == 0.3


def test_to_dict_is_json_ready():
    d = RunConfig().to_dict()
    assert d["stages"] == [16, 32, 64] and d["depths"] == [1, 2, 11]


def test_load_config(tmp_path):
    (tmp_path / "c.cfg").write_text("grid = 2\n")
    assert load_config(tmp_path / "c.cfg", env={}).grid == 2
    assert load_config(None, env={}) == RunConfig()
