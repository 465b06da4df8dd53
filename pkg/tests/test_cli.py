import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from spde_hfvol.cli import main
from spde_hfvol.estimators import estimate_alpha_corr, estimate_vol_known_alpha
from spde_hfvol.model import ModelParams, MultipowerSpec, SamplingScheme
from spde_hfvol.simulate import SeedSpec, simulate_exact_stationary

ROOT = Path(__file__).resolve().parents[1]

EXACT = {
    "model": {"kappa": 1.0, "lambda": 1.0, "alpha": 1.0, "dim": 1, "noise_kind": "white"},
    "scheme": {"delta": 2.0**-12, "horizon": 1.0, "sites": [0.0]},
    "volatility": {"kind": "constant", "c": 2.0},
    "simulator": {"kind": "exact"},
}


def write(tmp_path, name, obj):
    f = tmp_path / name
    f.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(f)


def run_json(args, capsys):
    code = main(args)
    out = capsys.readouterr().out
    return code, (json.loads(out) if code == 0 and out else None)


def test_constants(capsys):
    code, out = run_json(["constants", "--alpha", "1", "--p", "2"], capsys)
    assert code == 0 and out["R_p"] == pytest.approx(2.357487, abs=1e-6)
    code, out = run_json(["constants", "--alpha", "1", "--p", "4"], capsys)
    assert out["R_p"] == pytest.approx(109.223069, abs=1e-4)
    code, out = run_json(["constants", "--alpha", "1", "--lambda", "1", "--delta", "0.001"], capsys)
    assert code == 0


@pytest.mark.parametrize(
    "argv",
    [
        ["constants", "--alpha", "2.5"],
        ["constants"],
        ["constants", "--alpha", "x"],
        [],
        ["frobnicate"],
    ],
)
def test_input_errors(argv, capsys):
    assert main(argv) == 2
    assert capsys.readouterr().out == ""


def test_simulate_rows_and_determinism(tmp_path):
    cfg = write(tmp_path, "c.json", EXACT)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["simulate", "--config", cfg, "--seed", "5", "--out", str(a)]) == 0
    assert main(["simulate", "--config", cfg, "--seed", "5", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(a.read_text().splitlines()) == 2**12 + 2


def test_simulate_stability_violation(tmp_path, capsys):
    cfg = dict(EXACT, volatility={"kind": "constant", "c": 1.0})
    cfg["scheme"] = {"delta": 2.0**-6, "horizon": 0.25, "sites": [0.0]}
    cfg["simulator"] = {"kind": "fd", "grid": {"dt": 2.0**-10, "dx": 0.01, "domain_length": 4.0}}
    assert main(["simulate", "--config", write(tmp_path, "c.json", cfg), "--seed", "1"]) == 2
    assert "kappa*dt/dx^2 <= 1/2 violated" in capsys.readouterr().err


def test_simulate_bad_config(tmp_path, capsys):
    assert main(["simulate", "--config", write(tmp_path, "c.json", "{\n  bad"), "--seed", "1"]) == 2
    assert "line 2" in capsys.readouterr().err
    assert main(["simulate", "--config", str(tmp_path / "missing.json"), "--seed", "1"]) == 2
    assert main(["simulate", "--config", write(tmp_path, "d.json", EXACT), "--seed", "-3"]) == 2


def test_estimate_roundtrip_bit_identical(tmp_path, capsys):
    csv = tmp_path / "p.csv"
    assert main(["simulate", "--config", write(tmp_path, "c.json", EXACT), "--seed", "9", "--out", str(csv)]) == 0
    params = ModelParams.white()
    path = simulate_exact_stationary(params, SamplingScheme(2.0**-12, 1.0), 2.0, SeedSpec(9, 0))

    code, out = run_json(["estimate", "--path", str(csv), "--method", "corr"], capsys)
    mem = estimate_alpha_corr(path).report
    assert code == 0 and out["estimate"] == mem.estimate and out["variance_hat"] == mem.variance_hat
    assert abs(out["estimate"] - 1.0) < 0.1

    code, out = run_json(
        ["estimate", "--path", str(csv), "--method", "vol-known", "--alpha", "1", "--kappa", "1", "--p", "2"], capsys
    )
    mem = estimate_vol_known_alpha(path, MultipowerSpec.power(2), 1.0, 1.0).reports[0]
    assert code == 0 and out["estimate"] == mem.estimate and out["ci"] == [mem.ci_lower, mem.ci_upper]
    assert abs(out["estimate"] - 4.0) < 0.3

    code, out = run_json(
        ["estimate", "--path", str(csv), "--method", "vol-unknown", "--kappa", "1", "--null", "4"], capsys
    )
    assert code == 0 and out["rate"] == "root_log" and out["studentized"] is not None


def test_estimate_degenerate_zero(tmp_path, capsys):
    csv = write(tmp_path, "z.csv", "t,x=0\n" + "".join(f"{i * 0.01!r},0\n" for i in range(20)))
    code, out = run_json(["estimate", "--path", csv, "--method", "cof"], capsys)
    assert code == 0 and out["degenerate"] is True


def test_estimate_errors(tmp_path, capsys):
    csv = write(tmp_path, "bad.csv", "t,x=0\n0,1\n0.1,nan\n0.2,3\n")
    assert main(["estimate", "--path", csv, "--method", "cof"]) == 2
    assert "row 3" in capsys.readouterr().err
    good = write(tmp_path, "g.csv", "t,x=0\n0,1\n0.1,2\n0.2,4\n0.3,3\n")
    assert main(["estimate", "--path", good, "--method", "vol-known", "--kappa", "1"]) == 2
    assert main(["estimate", "--path", good, "--method", "vol-unknown"]) == 2


def test_estimate_ratio_out_of_domain_exit4(tmp_path, monkeypatch):
    import spde_hfvol.cli as C
    from spde_hfvol.errors import RatioOutOfDomain

    def boom(*a, **k):
        raise RatioOutOfDomain("ratio <= -1")

    monkeypatch.setattr(C, "estimate_alpha_corr", boom)
    good = write(tmp_path, "g.csv", "t,x=0\n0,1\n0.1,2\n0.2,4\n0.3,3\n")
    assert main(["estimate", "--path", good, "--method", "corr"]) == 4


def mc_config(**over):
    d = dict(EXACT, volatility={"kind": "constant", "c": 1.0})
    d["scheme"] = {"delta": 2.0**-8, "horizon": 1.0, "sites": [0.0]}
    d.update(target={"kind": "clt", "spec": {"kind": "power", "p": 2}}, replications=20, master_seed=1)
    d.update(over)
    return d


def test_mc_exit_codes(tmp_path, capsys):
    out, csv = tmp_path / "r.json", tmp_path / "r.csv"
    cfg = write(tmp_path, "m.json", mc_config(gate={"coverage": [0.0, 1.0]}))
    assert main(["mc", "--config", cfg, "--out", str(out), "--csv", str(csv), "--workers", "1"]) == 0
    rep = json.loads(out.read_text())
    assert rep["gate"]["passed"] and "runtime_seconds" not in rep
    assert csv.read_text().startswith("replication,estimate")
    assert "replications=20" in capsys.readouterr().err

    failing = write(tmp_path, "f.json", mc_config(gate={"rmse_max": 1e-12}))
    assert main(["mc", "--config", failing, "--out", str(out), "--workers", "1"]) == 5
    assert main(["mc", "--config", write(tmp_path, "z.json", mc_config(replications=0))]) == 2
    assert main(["mc", "--config", write(tmp_path, "j.json", '{"model": ')]) == 2
    assert "column" in capsys.readouterr().err


def test_mc_bundled_config_small(tmp_path):
    # bundled acceptance config, shrunk so the suite stays fast; the full run lives in test_acceptance
    d = json.loads((ROOT / "acceptance" / "clt_white_p2.json").read_text())
    d["replications"] = 30
    d["gate"] = {"coverage": [0.8, 1.0], "ks_pvalue_min": 1e-6}
    assert main(["mc", "--config", write(tmp_path, "c.json", d), "--out", str(tmp_path / "o.json"), "--workers", "1"]) == 0


def test_console_script_installed():
    assert shutil.which("spde-hfvol") is not None
