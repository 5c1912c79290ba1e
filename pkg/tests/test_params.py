import pytest

from expleak.explain import EXPLAINER_KINDS, NON_PARAMETERIZED, PARAMETERIZED, PARAM_SCHEMAS
from expleak.explain.params import default_params, validate_params

# Published defaults for the tunable methods (constructor/attribution
# parameters and their recommended values).
PUBLISHED_DEFAULTS = {
    "integrated_gradients": {"multiply_by_inputs": True, "method": "gausslegendre"},
    "smoothgrad": {"stdevs": 1.0, "draw_baseline_from_distrib": False},
    "vargrad": {"stdevs": 1.0, "draw_baseline_from_distrib": False},
    "gradcam": {"interpolation_mode": "nearest", "attr_to_layer_input": False},
    "gradcam_pp": {"interpolation_mode": "nearest", "attr_to_layer_input": False},
    "kernel_shap": {"n_segments": 50, "compactness": 20},
    "lime": {"n_segments": 50, "compactness": 20},
    "anchors": {
        "threshold": 0.95,
        "tau": 0.15,
        "delta": 0.1,
        "batch_size": 100,
        "coverage_samples": 10000,
        "beam_size": 1,
        "p_sample": 0.5,
        "n_segments": 15,
        "compactness": 20,
    },
    "protodash": {"sigma": 2.0, "kernel": "linear"},
}


def test_fifteen_kinds():
    assert len(EXPLAINER_KINDS) == 15
    assert set(NON_PARAMETERIZED) | set(PARAMETERIZED) == set(EXPLAINER_KINDS)
    assert not set(NON_PARAMETERIZED) & set(PARAMETERIZED)


def test_non_parameterized_have_empty_schemas():
    for kind in NON_PARAMETERIZED:
        assert PARAM_SCHEMAS[kind] == {}


@pytest.mark.parametrize("kind", sorted(PUBLISHED_DEFAULTS))
def test_published_defaults_present(kind):
    schema = PARAM_SCHEMAS[kind]
    for name, default in PUBLISHED_DEFAULTS[kind].items():
        assert name in schema, f"{kind} schema missing {name}"
        assert schema[name].default == default, f"{kind}.{name} default"


def test_each_table_param_in_its_method_schema_once():
    # A parameter of the published table appears exactly once per method
    # schema (dict keys), with occlusion's window/stride present too.
    assert "sliding_window_shapes" in PARAM_SCHEMAS["occlusion"]
    assert "strides" in PARAM_SCHEMAS["occlusion"]
    for kind, table in PUBLISHED_DEFAULTS.items():
        names = list(PARAM_SCHEMAS[kind])
        assert len(names) == len(set(names))
        assert set(table) <= set(names)


def test_defaults_inside_domains():
    for kind, schema in PARAM_SCHEMAS.items():
        for name, spec in schema.items():
            assert spec.contains(spec.default), f"{kind}.{name} default outside its domain"


def test_validate_rejects_out_of_domain():
    with pytest.raises(ValueError):
        validate_params("anchors", {"threshold": 1.5})
    with pytest.raises(ValueError):
        validate_params("integrated_gradients", {"method": "simpson"})
    with pytest.raises(ValueError):
        validate_params("nope", {})


def test_validate_fills_defaults():
    merged = validate_params("lime", {"n_segments": 8})
    assert merged["n_segments"] == 8
    assert merged["compactness"] == 20
    assert default_params("saliency") == {}
