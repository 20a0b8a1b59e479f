import pytest

from dynlab import EX1, EX2, ConstraintViolation, default_params, load_config, validate_params
from dynlab.params import format_config, parse_config_text


def test_ex1_defaults_valid(ex1):
    assert ex1.l == 3 and ex1.alpha == 0.5
    assert ex1.alpha < 1 - ex1.lambda_c
    assert ex1.lambda_c > 1 / 3
    assert ex1.slopes == (0.5, 0.0, -0.5)
    assert ex1.c == (-0.5, -0.0, 0.5)
    assert ex1.rho == pytest.approx(0.4 / 3)


def test_ex2_box_valid(ex2):
    assert ex2.l == 2
    assert ex2.lambda_ss < 0.5 < ex2.lambda_c < 0.51


def test_lambda_c_below_inverse_l():
    with pytest.raises(ConstraintViolation) as info:
        validate_params({"example": EX1, "l": 3, "lambda_c": 0.3, "alpha": 0.5})
    assert "lambda_c > 1/l" in info.value.names


def test_all_failures_reported():
    with pytest.raises(ConstraintViolation) as info:
        validate_params({"example": EX1, "lambda_c": 0.3, "alpha": 0.9, "mu": 2.0})
    names = info.value.names
    assert {"lambda_c > 1/l", "alpha < 1 - lambda_c", "0 <= mu <= 1"} <= set(names)
    for name, lhs, rhs in info.value.failures:
        assert isinstance(lhs, float) and isinstance(rhs, float)


@pytest.mark.parametrize("raw,name", [
    ({"example": EX2, "lambda_c": 0.52}, "lambda_c < 0.51"),
    ({"example": EX2, "lambda_ss": 0.5}, "lambda_ss < 0.5"),
    ({"example": EX1, "l": 4}, "l == 3"),
    ({"example": EX1, "delta_bump": 0.04}, "delta_bump < 1/(10 l)"),
    ({"example": EX1, "lambda_c_plus": 0.9}, "lambda_c_plus > 1"),
    ({"example": EX1, "n_power": 0}, "n_power >= 1"),
])
def test_single_violations(raw, name):
    with pytest.raises(ConstraintViolation) as info:
        validate_params(raw)
    assert name in info.value.names


def test_constraint_report_lists_flags(ex1):
    rep = ex1.constraint_report()
    names = [c["name"] for c in rep]
    assert "(lambda_c+)^2/(3 lambda_c) < 1" in names
    assert "3 lambda_ss/lambda_c+ < 1" in names
    # informational flags never raise; defaults satisfy both cone-family inequalities
    assert ex1.flag("(lambda_c+)^2/(3 lambda_c) < 1")
    assert ex1.flag("3 lambda_ss/lambda_c+ < 1")
    assert all(c["holds"] for c in rep if c["required"])


def test_h2_flag_tracks_family_rates():
    p = default_params(EX1, mu=1.0, n_power=8)
    lc_minus = 0.4 ** 8
    lhs = 1.05 / (lc_minus ** 2 * 3 ** 8)
    assert p.flag("H2: lambda_c- < 1 < lambda_c+")
    assert p.flag("H2: lambda_c+/((lambda_c-)^2 lambda_uu-) < 1") == (lhs < 1)
    assert not default_params(EX1).flag("H2: lambda_c- < 1 < lambda_c+")


def test_config_roundtrip(tmp_path, ex1):
    path = tmp_path / "run.cfg"
    path.write_text(format_config(ex1))
    assert validate_params(load_config(path)) == ex1


def test_config_comments_and_types():
    raw = parse_config_text("# header\nexample=Ex2\nn_power = 3  # trailing\nmu=0.5\n")
    assert raw == {"example": "Ex2", "n_power": 3, "mu": 0.5}


@pytest.mark.parametrize("text", ["bogus=1", "lambda_c"])
def test_config_rejects_bad_lines(text):
    with pytest.raises(ValueError):
        parse_config_text(text)


def test_replace_revalidates(ex1):
    assert ex1.replace(mu=0.5).mu == 0.5
    with pytest.raises(ConstraintViolation):
        ex1.replace(alpha=0.7)
