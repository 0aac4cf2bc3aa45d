import json

import pytest

from hofilter.bench.cli import main
from hofilter.bench.config import ExperimentConfig
from hofilter.bench.experiments import run
from hofilter.errors import RejectedInput

SMALL = {"t": 0.5, "n": [4], "k_fine": 4, "N": 200, "seed": 3}


def cfg(kind, tmp_path, **kw):
    return ExperimentConfig.from_dict({"kind": kind, "out": str(tmp_path), **SMALL, **kw})


def test_config_rejects_bad_input(tmp_path):
    with pytest.raises(RejectedInput, match="unknown"):
        ExperimentConfig.from_dict({"kind": "filter", "nn": 3})
    with pytest.raises(RejectedInput):
        ExperimentConfig.from_dict({"n": [4]})
    bad = [{"kind": "nope"}, {"kind": "filter", "t": 0}, {"kind": "filter", "m": [7]},
           {"kind": "filter", "N": 1}, {"kind": "filter", "seed": -1},
           {"kind": "filter", "m": [6]},
           {"kind": "convergence", "n": [4, 8]}, {"kind": "convergence", "n": [4, 8, 12]},
           {"kind": "convergence", "n": [4, 8, 16], "n_ref": 64},
           {"kind": "convergence", "n": [2, 4, 8], "bootstrap": 50},
           {"kind": "robustness", "families": ["wiggle"]}, {"kind": "robustness", "R": 0},
           {"kind": "ibp-check", "k_levels": [100, 200]},
           {"kind": "filter", "partition_times": [0.0, 0.3, 0.4]},
           {"kind": "filter", "phi": "median"}]
    for d in bad:
        with pytest.raises(RejectedInput):
            ExperimentConfig.from_dict(d)
    p = tmp_path / "c.json"
    p.write_text("[1, 2]")
    with pytest.raises(RejectedInput):
        ExperimentConfig.load(p)
    p.write_text("{bad json")
    with pytest.raises(RejectedInput):
        ExperimentConfig.load(p)


def test_config_hash_ignores_output_directory():
    a = ExperimentConfig.from_dict({"kind": "filter", "out": "a"})
    b = ExperimentConfig.from_dict({"kind": "filter", "out": "b"})
    c = ExperimentConfig.from_dict({"kind": "filter", "seed": 1})
    assert a.hash == b.hash != c.hash and len(a.hash) == 16


def test_cli_return_codes(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"kind": "simulate", **SMALL}))
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "simulate.json").exists()
    assert main(["filter", "--config", str(tmp_path / "missing.json")]) == 2
    p.write_text(json.dumps({"kind": "simulate", "N": 1}))
    assert main(["simulate", "--config", str(p)]) == 2
    with pytest.raises(SystemExit):
        main(["bogus"])


def test_simulate_writes_readable_records(tmp_path):
    from hofilter.paths import read_path
    run(cfg("simulate", tmp_path, scenarios=2))
    obs = read_path(tmp_path / "observation_1.csv")
    assert obs.Y.shape == (17, 1)
    assert (tmp_path / "scenarios.csv").read_text().startswith("# config_hash=")


def test_filter_constant_functional(tmp_path):
    ests = run(cfg("filter", tmp_path, phi="one", m=[1, 2, 3]))
    assert [e["pi"] for e in ests] == [1.0, 1.0, 1.0]


def test_filter_kalman_columns(tmp_path):
    ests = run(cfg("filter", tmp_path, model="linear_gaussian", model_params={},
                   phi="coordinate", m=[2], N=4000, scenarios=2))
    assert len(ests) == 2
    for e in ests:
        assert e["kalman_mean"] is not None and abs(e["kalman_z"]) < 5


def test_convergence_small_and_blind(tmp_path):
    small = dict(n=[2, 4, 8], n_ref=64, replications=2, N=300)
    rep = run(cfg("convergence", tmp_path / "a", **small))
    assert len(rep.rows) == 6 and set(rep.slopes) == {"1", "2"}
    assert "budget_ok" in rep.reference
    blind = run(cfg("convergence", tmp_path / "b", model_params={"gain": 0.0}, **small))
    assert all(s["noise_dominated"] for s in blind.slopes.values())
    assert all(r["l2_error"] == 0.0 for r in blind.rows)


def test_robustness_families(tmp_path):
    rep = run(cfg("robustness", tmp_path, pairs=8, families=["zero", "bump"], N=300, k_fine=8,
                  path_knots=64, m=[1]))
    base = rep.summary["1"]["base"]
    assert base["zero_pairs_zero"] and base["phi_one_exact"] and base["all_finite"]
    assert 0.3 <= base["bump_half_ratio"] <= 0.7
    zero_rows = [r for r in rep.rows if r[3] == "zero"]
    assert all(r[4] == 0.0 and r[6] == 0.0 for r in zero_rows)


def test_ibp_small(tmp_path):
    rep = run(cfg("ibp-check", tmp_path, k_levels=[4, 8, 16], N=300))
    assert all(r["identical"] for r in rep.rows if r["m"] == 1)
    assert not any(r["identical"] for r in rep.rows if r["m"] == 2)


@pytest.mark.parametrize("kind,extra", [
    ("simulate", {}),
    ("filter", {"m": [1, 3]}),
    ("convergence", {"n": [2, 4, 8], "n_ref": 64, "replications": 2}),
    ("robustness", {"pairs": 6, "path_knots": 32, "families": ["shift", "bump", "resample"]}),
    ("ibp-check", {"k_levels": [4, 8]}),
])
def test_replay_is_byte_identical(tmp_path, kind, extra):
    outs = []
    for label, threads in (("a", 1), ("b", 1), ("c", 3)):
        c = cfg(kind, tmp_path / label, **extra)
        run(c, threads=threads)
        outs.append({p.name: p.read_bytes() for p in sorted((tmp_path / label).iterdir())})
    assert outs[0] == outs[1] == outs[2]
