"""Smoke test for the cdscva extension module.

Build and install first:

    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/cdscva-*.whl
    python python/smoke_test.py
"""

import json
import math

import cdscva

CONFIG = """
seed = 11

[margin]
gamma_cpty = 1.0e-3
gamma_inv = -2.0e-4

[simulation]
grid_step = 0.05
paths = 500
outer_paths = 20
inner_paths = 10
observation_step = 1.0
bucket_width = 0.5
"""


def test_clean_spread_matches_constant_hazard():
    flat = """
seed = 1
[factors]
reference = { zeta = 0.0, mu = 0.0, sigma = 0.0, x0 = 0.05 }
counterparty = "high"
investor = "high"
"""
    out = cdscva.clean_spread(flat)
    assert abs(out["kappa0"] - 0.6 * 0.05) < 1e-8
    assert abs(out["rdv01"] - (1 - math.exp(-0.25)) / 0.05) < 1e-8


def test_price_is_reproducible():
    a = cdscva.price(CONFIG)
    b = cdscva.price(CONFIG)
    assert a == b
    assert a["seed"] == 11
    assert math.isclose(a["cva0"], a["ucva0"] - a["dva0"], rel_tol=1e-11)


def test_case_table_orders_cases():
    rows = cdscva.case_table(CONFIG, paths=2000)
    assert [r["label"] for r in rows] == list("ABCDEF")
    cva = [r["report"]["exposure"]["cva0"]["mean"] for r in rows]
    assert cva[0] > cva[-1]


def test_profiles_and_forward_curves():
    prof = cdscva.profiles(CONFIG)
    assert list(prof) == [""]
    assert len(prof[""]) == 10
    fwd = cdscva.forward_cva(CONFIG, all_cases=True)
    assert sorted(fwd) == list("ABCDEF")
    for points in fwd.values():
        assert points[-1]["time"] == 5.0
        assert points[-1]["mean"]["mean"] == 0.0


def test_config_errors_raise_value_error():
    try:
        cdscva.price("[simulation]\npaths = 10\n")
    except ValueError as err:
        detail = json.loads(str(err))
        assert detail["error"]["path"] == "seed"
    else:
        raise AssertionError("missing seed accepted")


def test_cir_survival_deterministic_limit():
    assert math.isclose(cdscva.cir_survival(0.0, 0.0, 0.0, 0.03, 2.0, shift=0.01), math.exp(-0.08), rel_tol=1e-14)


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"ok  {name}")
