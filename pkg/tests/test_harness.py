import csv
import json

import pytest

from amerikan import MarketParams, OptionKind, OptionSpec, SuiteConfig, run_equivalence_suite
from amerikan.harness import ALL_CHECKS, DEFAULT_TOLERANCES, ParamSet

CANONICAL = ParamSet(
    label="canonical-put",
    params=MarketParams(r=0.05, d=0.0, sigma=0.2, T=1.0),
    spec=OptionSpec(OptionKind.PUT, 100.0),
    spots=(100.0,),
    checks=("pde_pairwise", "pde_vs_oracle", "bsde_snell", "skorokhod", "boundary_structure"),
)
DEGENERATE = ParamSet(
    label="degenerate-put-r0",
    params=MarketParams(r=0.0, d=0.02, sigma=0.2, T=1.0),
    spec=OptionSpec(OptionKind.PUT, 100.0),
    spots=(100.0,),
    checks=("degenerate_collapse",),
)


def small_config(**overrides) -> SuiteConfig:
    """Coarse, fast configuration with tolerances widened to match the scale."""
    tolerances = dict(DEFAULT_TOLERANCES)
    tolerances.update(
        pde_pairwise_sup_rel=5e-3,
        pde_vs_oracle_rel=1e-2,
        bsde_sigmas=6.0,
        degenerate_pde_rel=5e-3,
    )
    base = dict(
        param_sets=(CANONICAL, DEGENERATE),
        grid=(150, 150),
        fine_grid=(200, 200),
        bsde_steps=20,
        bsde_paths=10_000,
        kprocess_ladder=((10, 2000), (15, 4000)),
        tolerances=tolerances,
    )
    base.update(overrides)
    return SuiteConfig(**base)


@pytest.fixture(scope="module")
def report():
    return run_equivalence_suite(small_config())


def test_default_config_shape():
    cfg = SuiteConfig.default()
    configured = {c for ps in cfg.param_sets for c in ps.checks}
    assert configured == set(ALL_CHECKS)


def test_config_json_round_trip():
    cfg = SuiteConfig.default()
    assert SuiteConfig.from_json(cfg.to_json()) == cfg
    small = small_config()
    assert SuiteConfig.from_json(small.to_json()) == small


def test_config_validation():
    with pytest.raises(ValueError):
        SuiteConfig(param_sets=())
    with pytest.raises(ValueError):
        small_config(kprocess_ladder=((50, 1000), (25, 2000)))
    with pytest.raises(ValueError):
        small_config(tolerances={"pde_pairwise_sup_rel": 1e-3})
    with pytest.raises(ValueError):
        ParamSet("x", CANONICAL.params, CANONICAL.spec, (), ("pde_pairwise",))
    with pytest.raises(ValueError):
        ParamSet("x", CANONICAL.params, CANONICAL.spec, (100.0,), ("not-a-check",))


def test_suite_runs_every_configured_check(report):
    executed = {(c.param_set, c.check) for c in report.checks}
    configured = {
        (ps.label, name) for ps in small_config().param_sets for name in ps.checks
    }
    assert executed == configured
    assert report.all_passed, [c for c in report.checks if not c.passed]
    assert all(c.runtime >= 0.0 for c in report.checks)


def test_report_serialization(report, tmp_path):
    blob = json.loads(report.to_json())
    assert blob["all_passed"] is True
    assert {"environment", "checks", "config"} <= set(blob)
    out = tmp_path / "report.csv"
    report.write_csv(out)
    with open(out, newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["check", "parameter_set", "measured", "tolerance", "pass"]
    assert len(rows) == len(report.checks) + 1


def test_suite_determinism(report):
    again = run_equivalence_suite(small_config())
    assert [(c.check, c.param_set, c.measured) for c in again.checks] == [
        (c.check, c.param_set, c.measured) for c in report.checks
    ]


def test_zero_tolerance_fails():
    tolerances = dict(DEFAULT_TOLERANCES)
    tolerances["pde_pairwise_sup_rel"] = 0.0
    only_pairwise = ParamSet(
        label="canonical-put",
        params=CANONICAL.params,
        spec=CANONICAL.spec,
        spots=(100.0,),
        checks=("pde_pairwise",),
    )
    cfg = small_config(param_sets=(only_pairwise,), tolerances=tolerances)
    rep = run_equivalence_suite(cfg)
    assert not rep.all_passed
