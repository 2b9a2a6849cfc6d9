import json
from pathlib import Path

import pytest

from qauction.cli import load_run_config, main, ConfigError

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "two_bidder_honest.json"


def write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def base():
    return json.loads(CONFIG.read_text())


def test_bundled_config_winner(tmp_path):
    assert main(["run", str(CONFIG), "--out", str(tmp_path)]) == 0
    result = json.loads((tmp_path / "two_bidder_honest.result.json").read_text())
    assert result["winners"] == [{"bidder": 2, "bundle": ["item"], "price": 3.0}]
    assert result["seed"] == 0


def test_byte_identical_outputs(tmp_path):
    for d in ("a", "b"):
        assert main(["run", str(CONFIG), "--out", str(tmp_path / d)]) == 0
    for name in ("two_bidder_honest.result.json", "two_bidder_honest.transcript.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_bits_mismatch_exit_2(tmp_path, capsys):
    data = base()
    data["auction"]["language"]["price_bits"] = 3
    assert main(["run", str(write(tmp_path, data))]) == 2
    assert "$.auction.language.price_bits" in capsys.readouterr().err


@pytest.mark.parametrize("mutate,path", [
    (lambda d: d["strategies"][0]["terms"][1].update(price=9), "$.strategies[0]"),
    (lambda d: d["schedule"].update(delta=5), "$.schedule"),
    (lambda d: d["strategies"].pop(), "$.strategies"),
    (lambda d: d["strategies"][0].update(kind="psychic"), "$.strategies[0].kind"),
    (lambda d: d["policy"].update(probe_prob="high"), "$.policy.probe_prob"),
    (lambda d: d["strategies"][1].update(bidders=[3]), "$.strategies[1].bidders"),
])
def test_validation_paths(mutate, path):
    data = base()
    mutate(data)
    with pytest.raises(ConfigError) as err:
        load_run_config(data)
    assert err.value.path.startswith(path)


def test_malformed_json_exit_2(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert main(["run", str(p)]) == 2


def test_all_strategy_kinds_parse(tmp_path):
    data = base()
    data["auction"] = {"n_bidders": 3, "bits_per_bidder": 2}
    data["schedule"]["steps"] = 20
    data["strategies"] = [
        {"kind": "init_deviator", "bidders": [1],
         "init_terms": [{"null": True}, {"price": 1, "amplitude": {"re": -1, "im": 0}}],
         "terms": [{"null": True}, {"price": 1}]},
        {"kind": "joint_group", "bidders": [2, 3],
         "terms": [{"bids": [{"null": True}, {"null": True}]}, {"bids": [{"price": 2}, {"price": 3}]}]},
    ]
    assert main(["run", str(write(tmp_path, data))]) == 0
    data["strategies"] = [
        {"kind": "operator_switcher", "bidders": [1],
         "timeline": [{"terms": [{"null": True}, {"price": 1}], "steps": 5}, {"terms": [{"null": True}, {"price": 3}]}]},
        {"kind": "null_excluder", "bidders": [2], "terms": [{"price": 2}]},
        {"kind": "honest", "bidders": [3], "terms": [{"null": True}, {"price": 3}]},
    ]
    assert main(["run", str(write(tmp_path, data))]) == 0


def test_combinatorial_config(tmp_path):
    data = base()
    data["auction"] = {"n_bidders": 2, "bits_per_bidder": 3,
                       "language": {"mode": "combinatorial", "items": ["X", "Y"], "price_bits": 1}}
    data["strategies"] = [
        {"kind": "honest", "bidders": [1], "terms": [{"null": True}, {"bundle": ["X"], "price": 1}]},
        {"kind": "honest", "bidders": [2], "terms": [{"null": True}, {"bundle": ["Y"], "price": 1}]},
    ]
    assert main(["run", str(write(tmp_path, data)), "--out", str(tmp_path)]) == 0
    result = json.loads((tmp_path / "two_bidder_honest.result.json").read_text())
    assert [w["bidder"] for w in result["winners"]] == [1, 2]


def test_verify_subspace_and_oracle(tmp_path, capsys):
    assert main(["verify", "subspace", "--steps", "50", "--out", str(tmp_path)]) == 0
    assert "passed: 9/9" in capsys.readouterr().out
    assert (tmp_path / "subspace.csv").exists() and (tmp_path / "subspace.json").exists()
    assert main(["verify", "oracle", "--max-n", "2", "--max-b", "2"]) == 0
    assert "max_deviation" in capsys.readouterr().out


def test_verify_caps_exit_2():
    assert main(["verify", "oracle", "--max-n", "4", "--max-b", "4"]) == 2
    assert main(["verify", "claims", "--max-n", "40", "--max-b", "40"]) == 2


def test_verify_contrast():
    assert main(["verify", "contrast"]) == 0


def test_verify_claims_reports_single_bidder_counterexamples(capsys):
    code = main(["verify", "claims", "--max-n", "5", "--max-b", "5"])
    out = capsys.readouterr().out
    assert "FAIL condition_holds_everywhere" in out and code == 1
    assert "PASS multi_condition_iff_n_ge_2" in out
