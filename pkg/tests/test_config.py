import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ndpert.config import SCHEMA_VERSION, ConfigError, ScenarioConfig, build_spec, builtin_names, load_config


def base_dict(**model):
    m = {"c": 4.0, "p": 1.0, "dim": 1, "coeff": {"kind": "scalar-mu", "mu": 0.2},
         "kernel": {"kind": "constant-beta", "beta": 0.5}, "u0": {"kind": "constant", "value": 1.0}}
    m.update(model)
    return {"schema": SCHEMA_VERSION, "name": "t", "model": m, "grid": {"da": 0.05, "dt": 0.05, "t_end": 2.0}}


@pytest.mark.parametrize("name", builtin_names())
def test_builtin_round_trip(name):
    cfg = load_config(name)
    again = ScenarioConfig.from_dict(json.loads(cfg.dumps()))
    assert again == cfg
    assert again.dumps() == cfg.dumps()


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 1.0), st.integers(1, 50), st.integers(0, 2**31), st.floats(0.0, 3.0),
       st.sampled_from(["renewal", "upwind"]), st.booleans())
def test_round_trip_property(da, steps, seed, mu, method, dump):
    d = base_dict(coeff={"kind": "scalar-mu", "mu": mu})
    d["grid"] = {"da": da, "dt": da, "t_end": steps * da}
    d["solver"] = {"tol": 1e-10, "probes": 4, "seed": seed, "method": method}
    d["outputs"] = {"csv": "x.csv", "field_csv": "f.csv", "dump_field": dump}
    cfg = ScenarioConfig.from_dict(d)
    assert ScenarioConfig.from_dict(json.loads(cfg.dumps())) == cfg


def test_unaligned_grid_rejected_at_parse_time():
    d = base_dict()
    d["grid"]["dt"] = 0.025
    with pytest.raises(ConfigError, match="must equal"):
        ScenarioConfig.from_dict(d)


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("schema"),
    lambda d: d.update(schema="ndpert-scenario/0"),
    lambda d: d["model"].update(p=0.5),
    lambda d: d["model"]["coeff"].update(kind="magic"),
    lambda d: d.update(extra=1),
    lambda d: d["grid"].update(da=-1.0),
])
def test_schema_violations(mutate):
    d = base_dict()
    mutate(d)
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(d)


def test_missing_source(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "nope.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(str(bad))


def test_build_spec_kinds():
    d = base_dict(dim=2,
                  coeff={"kind": "scaled-generator", "generator": [[-1.0, 0.0], [0.5, -2.0]], "scale": [1.0, 0.5]},
                  kernel={"kind": "window-beta", "beta": 0.3, "a_min": 1.0, "a_max": 3.0},
                  u0={"kind": "window", "value": 2.0, "a_min": 0.0, "a_max": 1.0})
    spec = build_spec(ScenarioConfig.from_dict(d))
    assert spec.dim == 2 and spec.n_ages == 81
    assert np.allclose(spec.coeff(2.0), 2.0 * np.array([[-1.0, 0.0], [0.5, -2.0]]))
    assert spec.kernel.samples[10, 0, 0] == 0.0 and spec.kernel.samples[40, 1, 1] == 0.3
    assert spec.u0[0, 0] == 2.0 and spec.u0[40, 0] == 0.0


def test_table_kinds_interpolate():
    d = base_dict(coeff={"kind": "matrix-table", "ages": [0.0, 4.0], "matrices": [[[-1.0]], [[-3.0]]]},
                  kernel={"kind": "matrix-table", "ages": [0.0, 4.0], "matrices": [[[0.0]], [[1.0]]]},
                  u0={"kind": "table", "ages": [0.0, 4.0], "values": [[1.0], [0.0]]})
    spec = build_spec(ScenarioConfig.from_dict(d))
    assert spec.coeff(2.0)[0, 0] == pytest.approx(-2.0)
    assert spec.kernel.samples[20, 0, 0] == pytest.approx(0.25)
    assert spec.u0[60, 0] == pytest.approx(0.25)


def test_table_shape_errors():
    d = base_dict(coeff={"kind": "matrix-table", "ages": [1.0, 0.0], "matrices": [[[-1.0]], [[-3.0]]]})
    with pytest.raises(ConfigError):
        build_spec(ScenarioConfig.from_dict(d))


def test_infinite_age_is_truncated():
    spec = build_spec(ScenarioConfig.from_dict(base_dict(c="inf", coeff={"kind": "scalar-mu", "mu": 1.0})))
    assert spec.c_is_truncated
    assert math.exp(-spec.c) * 0.5 <= 1e-10 * (1 + 1e-6)
    with pytest.raises(ConfigError):
        build_spec(ScenarioConfig.from_dict(base_dict(c="inf", coeff={"kind": "scalar-mu", "mu": -0.1})))


def test_c_must_align_with_grid():
    with pytest.raises(ConfigError):
        build_spec(ScenarioConfig.from_dict(base_dict(c=4.01)))
