import csv
import json
import pytest
import yaml

from regmodel.cli import beta_filter, main
from regmodel.config import RunConfig, dyadic
from regmodel.io import BundleError, read_bundle
from regmodel.multiindex import DEFAULT_ALPHA as ALPHA, ek

SMALL = {
    "cutoff": 2 * ALPHA + 1,
    "noise": {"seed": 0, "max_mode": 2, "amplitude": 1.0},
    "base_points": [[0.3, 0.6], [0.41, 0.55], [0.2, 0.7]],
    "t_grid": {"dyadic": [4, 10]},
    "algebra_families": 2,
    "algebra_cutoff": 2 * ALPHA,
    "telescope_betas": 2,
    "telescope_t": [0.001],
    "schauder_betas": 2,
    "directions": 16,
    "rhs_directions": 8,
}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "small.yaml").write_text(yaml.safe_dump(SMALL))
    assert main(["build", "--config", str(d / "small.yaml"), "--out", str(d / "bundle.json")]) == 0
    return d


def test_config_roundtrip_and_validation(tmp_path):
    cfg = RunConfig.from_dict(SMALL)
    assert cfg.noise_seed == 0 and len(cfg.base_points) == 3
    assert cfg.t_grid == dyadic({"dyadic": [4, 10]}) and cfg.t_grid[0] == 2.0 ** -4
    assert RunConfig.from_dict(cfg.to_dict()).fingerprint() == cfg.fingerprint()
    assert cfg.replace(amplitude=2.0).fingerprint() != cfg.fingerprint()
    with pytest.raises(ValueError):
        RunConfig(alpha=2.5)
    with pytest.raises(ValueError):
        RunConfig(lam=1.0)
    with pytest.raises(ValueError):
        RunConfig.from_dict({"bogus": 1})
    (tmp_path / "c.json").write_text(json.dumps({"cutoff": 4.0, "tolerances": {"slope": 0.2}}))
    c = RunConfig.load(tmp_path / "c.json", {"noise_seed": 3})
    assert c.cutoff == 4.0 and c.tol_slope == 0.2 and c.noise_seed == 3


def test_small_cutoff_warns():
    with pytest.warns(UserWarning, match="empty"):
        RunConfig(cutoff=0.5)
    with pytest.warns(UserWarning):
        RunConfig(cutoff=1.2)


def test_build_is_deterministic(workdir):
    assert main(["build", "--config", str(workdir / "small.yaml"), "--out", str(workdir / "again.json")]) == 0
    assert (workdir / "again.json").read_bytes() == (workdir / "bundle.json").read_bytes()


def test_bundle_roundtrip(workdir):
    cfg, pm, raw = read_bundle(workdir / "bundle.json")
    assert raw["fingerprint"] == cfg.fingerprint()
    assert len(pm.indices) == len(raw["indices"]) > 10
    fresh = __import__("regmodel.model", fromlist=["build_premodel"]).build_premodel(cfg.noise_field(), cfg.window())
    for b in fresh.indices:
        assert (pm.Pi[b] - fresh.Pi[b]).max_abs() == 0.0
        assert (pm.rhs[b] - fresh.rhs[b]).max_abs() == 0.0


def test_verify_algebra_and_model(workdir, capsys):
    out = workdir / "rep_model"
    code = main(["verify", "--bundle", str(workdir / "bundle.json"), "--suite", "model", "--out", str(out)])
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["pass"] and summary["fingerprint"] == json.loads((workdir / "bundle.json").read_text())["fingerprint"]
    names = {c["name"] for c in summary["suites"]["model"]["checks"]}
    assert {"premodel_residual", "anchoring", "recentering", "transitivity", "bundle_characters"} <= names
    assert main(["verify", "--bundle", str(workdir / "bundle.json"), "--suite", "algebra",
                 "--out", str(workdir / "rep_alg")]) == 0
    assert "[PASS] algebra/inverse" in capsys.readouterr().out


def _corrupt(src, dst, path):
    d = json.loads(src.read_text())
    node = d
    for k in path[:-1]:
        node = node[k]
    node[path[-1]] = node[path[-1]] + 1e-3
    dst.write_text(json.dumps(d, sort_keys=True, separators=(",", ":")))


def test_corrupted_coefficient_fails_named_invariant(workdir, capsys):
    bad = workdir / "bad.json"
    d = json.loads((workdir / "bundle.json").read_text())
    key = "z1"
    re = d["Pi"][key]["0,0"]["re"]
    _corrupt(workdir / "bundle.json", bad, ["Pi", key, "0,0", "re", len(re) // 2 + 1])
    code = main(["verify", "--bundle", str(bad), "--suite", "model", "--out", str(workdir / "rep_bad")])
    assert code == 1
    out = capsys.readouterr().out
    assert "[FAIL] model/premodel_residual" in out


def test_corrupted_character_detected(workdir, capsys):
    bad = workdir / "badchar.json"
    d = json.loads((workdir / "bundle.json").read_text())
    nkey = next(iter(d["centered"][0]["characters"]))
    bkey = next(iter(d["centered"][0]["characters"][nkey]))
    _corrupt(workdir / "bundle.json", bad, ["centered", 0, "characters", nkey, bkey])
    assert main(["verify", "--bundle", str(bad), "--suite", "model", "--out", str(workdir / "rep_badc")]) == 1
    assert "[FAIL] model/bundle_characters" in capsys.readouterr().out


def test_fingerprint_mismatch(workdir):
    with pytest.raises(BundleError):
        read_bundle(workdir / "bundle.json", RunConfig.from_dict(SMALL).replace(noise_seed=1))
    assert RunConfig.load(workdir / "small.yaml", {"noise_seed": 5}).noise_seed == 5
    code = main(["verify", "--config", str(workdir / "small.yaml"), "--seed", "5",
                 "--bundle", str(workdir / "bundle.json"), "--out", str(workdir / "rep_fp")])
    assert code == 2


def test_beta_filter_restricts_estimates(workdir):
    out = workdir / "rep_est"
    main(["verify", "--bundle", str(workdir / "bundle.json"), "--suite", "estimates",
          "--beta", "z1;z1 z(1,0)", "--out", str(out)])
    with open(out / "slopes.csv") as fh:
        betas = {r["beta"] for r in csv.DictReader(fh)}
    assert betas == {"z1", "z1 z(1,0)"}
    f = beta_filter("re:^z0")
    assert f(ek(0, 2)) and not f(ek(1))
    assert beta_filter(None) is None


def test_report(workdir, tmp_path, capsys):
    out = workdir / "rep_est"
    assert main(["report", str(out), "--out", str(tmp_path / "r.md")]) == 0
    text = (tmp_path / "r.md").read_text()
    capsys.readouterr()
    assert "Worst cases per estimate" in text and "| model |" in text and "| reexpansion |" in text
    assert main(["report", str(out)]) == 0
    assert capsys.readouterr().out.strip() == text.strip()
    (tmp_path / "empty").mkdir()
    assert main(["report", str(tmp_path / "empty")]) == 2


def test_print_entry(workdir, capsys):
    b = str(workdir / "bundle.json")
    assert main(["print-entry", "--bundle", b, "--beta", "z(2,0)"]) == 0
    out = capsys.readouterr().out
    assert "z(1,0)" in out and "-0.59999999999999998" in out
    assert main(["print-entry", "--bundle", b, "--to", "1", "--beta", "z(2,0)", "--gamma", "z(1,0)"]) == 0
    val = float(capsys.readouterr().out.strip().split("=")[-1])
    assert val == pytest.approx(2 * (0.3 - 0.41)), "shift x - y"
    assert main(["print-entry", "--bundle", b, "--beta", "z0^9"]) == 2
