"""Tests for spec parsing, the invariant-suite runner, and the CLI."""

import json
import math

import numpy as np
import pytest

import cqlab.geometry
from cqlab.channels import CcqMac, CoupledMac, CqChannel, InterferenceChannel
from cqlab.cli import main
from cqlab.decoders import cq_sequential_decode, sample_codebook
from cqlab.specio import (
    SpecError,
    dump_channel,
    load_channel,
    parse_channel,
    serialize_channel,
)
from cqlab.verify import SUITES, run_suite, run_suites

I2 = [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]
K1 = [[[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]
P2 = [[[0.5, 0.0], [0.5, 0.0]], [[0.5, 0.0], [0.5, 0.0]]]


def bb84_doc() -> dict:
    return {
        "kind": "cq",
        "input": {"symbols": ["0", "1"], "probs": [0.5, 0.5]},
        "states": {"0": I2, "1": P2},
    }


def xor_mac_doc() -> dict:
    return {
        "kind": "ccq-mac",
        "x": {"symbols": ["0", "1"], "probs": [0.5, 0.5]},
        "y": {"symbols": ["0", "1"], "probs": [0.5, 0.5]},
        "states": {"0": {"0": I2, "1": K1}, "1": {"0": K1, "1": I2}},
    }


def constant_mac_doc() -> dict:
    return {
        "kind": "ccq-mac",
        "x": {"symbols": ["0", "1"], "probs": [0.5, 0.5]},
        "y": {"symbols": ["0", "1"], "probs": [0.5, 0.5]},
        "states": {"0": {"0": I2, "1": I2}, "1": {"0": I2, "1": I2}},
    }


def cmg_doc() -> dict:
    return {
        "kind": "cmg-mac",
        "x": {"symbols": ["0", "1"], "probs": [0.5, 0.5]},
        "z_symbols": ["a", "b"],
        "z_given_x": {"0": [1.0, 0.0], "1": [0.0, 1.0]},
        "y": {"symbols": ["y"], "probs": [1.0]},
        "states": {"a": {"y": I2}, "b": {"y": K1}},
    }


def ic_doc() -> dict:
    bell_diag = np.kron(np.array([[1.0, 0], [0, 0]]), np.array([[1.0, 0], [0, 0]]))
    other = np.kron(np.array([[0, 0], [0, 1.0]]), np.array([[0.5, 0], [0, 0.5]]))
    m1 = [[[float(bell_diag[i, j]), 0.0] for j in range(4)] for i in range(4)]
    m2 = [[[float(other[i, j]), 0.0] for j in range(4)] for i in range(4)]
    return {
        "kind": "ccqq-ic",
        "q": {"symbols": ["q"], "probs": [1.0]},
        "ux_given_q": {
            "q": {"symbols": [["u0", "0"], ["u1", "1"]], "probs": [0.5, 0.5]}
        },
        "vy_given_q": {
            "q": {"symbols": [["v0", "0"], ["v1", "1"]], "probs": [0.5, 0.5]}
        },
        "output_dims": [2, 2],
        "states": {"0": {"0": m1, "1": m1}, "1": {"0": m2, "1": m2}},
    }


def write_doc(tmp_path, doc, name="spec.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


class TestSpecIO:
    def test_roundtrip_all_kinds(self):
        # contract: parse -> serialize -> parse gives an identical model
        expected_types = {
            "cq": CqChannel,
            "ccq-mac": CcqMac,
            "cmg-mac": CoupledMac,
            "ccqq-ic": InterferenceChannel,
        }
        for doc, kind in (
            (bb84_doc(), "cq"),
            (xor_mac_doc(), "ccq-mac"),
            (cmg_doc(), "cmg-mac"),
            (ic_doc(), "ccqq-ic"),
        ):
            model = parse_channel(doc)
            assert isinstance(model, expected_types[kind])
            once = serialize_channel(model)
            twice = serialize_channel(parse_channel(once))
            assert json.dumps(once, sort_keys=True) == json.dumps(twice, sort_keys=True)

    def test_errors_name_the_offending_field(self):
        cases = [
            ({"kind": "mystery"}, "spec.kind"),
            ({"kind": "cq", "input": {"symbols": ["0"], "probs": [0.5]}}, "spec.input.probs"),
            ({"kind": "cq", "input": {"symbols": ["0"], "probs": [1.0]}}, "missing field 'states'"),
            (
                {
                    "kind": "cq",
                    "input": {"symbols": ["0"], "probs": [1.0]},
                    "states": {"0": [[[0.6, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.6, 0.0]]]},
                },
                "spec.states.0: matrix trace",
            ),
            (
                {
                    "kind": "cq",
                    "input": {"symbols": ["0"], "probs": [1.0]},
                    "states": {"0": [[[0.5, 0.0], [0.5, 0.3]], [[0.5, 0.0], [0.5, 0.0]]]},
                },
                "not Hermitian",
            ),
            (
                {
                    "kind": "cq",
                    "input": {"symbols": ["0"], "probs": [1.0]},
                    "states": {"0": [[[1.0, 0.0], [0.0]], [[0.0, 0.0], [0.0, 0.0]]]},
                },
                "spec.states.0[0][1]",
            ),
        ]
        doc = cmg_doc()
        doc["z_given_x"]["0"] = [0.9, 0.0]
        cases.append((doc, "spec.z_given_x.0"))
        for bad, fragment in cases:
            with pytest.raises(SpecError) as exc_info:
                parse_channel(bad)
            assert fragment in str(exc_info.value)

    def test_negative_eigenvalue_rejected(self):
        bad = {
            "kind": "cq",
            "input": {"symbols": ["0"], "probs": [1.0]},
            "states": {"0": [[[1.2, 0.0], [0.0, 0.0]], [[0.0, 0.0], [-0.2, 0.0]]]},
        }
        with pytest.raises(SpecError, match="positive semidefinite"):
            parse_channel(bad)

    def test_json_errors_carry_line_and_column(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text('{"kind": "cq",\n  "input": }')
        with pytest.raises(SpecError, match=r"broken\.json:2:12"):
            load_channel(str(path))

    def test_dump_then_load_file(self, tmp_path):
        model = parse_channel(xor_mac_doc())
        path = tmp_path / "dumped.json"
        dump_channel(model, str(path))
        again = load_channel(str(path))
        assert json.dumps(serialize_channel(model), sort_keys=True) == json.dumps(
            serialize_channel(again), sort_keys=True
        )


class TestVerifySuites:
    def test_all_suites_pass_with_expected_sizes(self):
        report = run_suites(["all"])
        assert report["ok"]
        sizes = {s["suite"]: s["total"] for s in report["suites"]}
        assert sizes["lemma-key"] == 1000
        assert sizes["lemma-chain"] == 500
        assert sizes["blocks"] == 300
        assert sizes["gentle"] == 500
        assert set(sizes) == set(SUITES)

    def test_slack_is_reported_per_instance(self):
        report = run_suite("lemma-key", seed=7)
        assert all("slack" in row and "id" in row for row in report["instances"])
        assert min(row["slack"] for row in report["instances"]) >= -1e-9

    def test_unknown_suite_rejected(self):
        with pytest.raises(ValueError, match="unknown suite"):
            run_suite("nonsense")

    def test_corrupted_core_fails_the_suites(self, monkeypatch):
        # negative control: inflating the chain floor past 1 must break
        # the lemma-chain suite
        monkeypatch.setattr(
            cqlab.geometry, "seq_success_lower_bound", lambda rho, hostile, target: 2.0
        )
        report = run_suite("lemma-chain")
        assert report["failures"] == report["total"]
        assert not run_suites(["all"])["ok"]


class TestCliRegions:
    def test_xor_mac_bounds_are_all_one(self, tmp_path, capsys):
        spec = write_doc(tmp_path, xor_mac_doc())
        out = tmp_path / "out"
        assert main(["regions", "--spec", spec, "--out", str(out)]) == 0
        lines = (out / "regions.csv").read_text().splitlines()
        assert lines[0] == "# schema: cqlab-regions-csv/1"
        assert lines[1] == "region,part,label,relation,bound"
        bounds = {}
        for line in lines[2:]:
            cells = line.split(",")
            bounds[cells[2]] = float(cells[-1])
        assert bounds["R1 < I(X:B|Y)"] == pytest.approx(1.0, abs=1e-9)
        assert bounds["R2 < I(Y:B|X)"] == pytest.approx(1.0, abs=1e-9)
        assert bounds["R1+R2 < I(XY:B)"] == pytest.approx(1.0, abs=1e-9)

    def test_identical_output_channel_has_zero_bounds(self, tmp_path):
        spec = write_doc(tmp_path, constant_mac_doc())
        out = tmp_path / "out"
        assert main(["regions", "--spec", spec, "--out", str(out)]) == 0
        doc = json.loads((out / "regions.json").read_text())
        for entry in doc["regions"]["ccq-mac"]["constraints"]:
            assert abs(entry["bound"]) < 1e-9

    def test_interference_channel_emits_both_receivers(self, tmp_path):
        spec = write_doc(tmp_path, ic_doc())
        out = tmp_path / "out"
        assert main(["regions", "--spec", spec, "--out", str(out)]) == 0
        doc = json.loads((out / "regions.json").read_text())
        assert set(doc["regions"]) == {"receiver-1", "receiver-2"}
        for entry in doc["regions"].values():
            assert entry["constraints"]
            assert isinstance(entry["boundary_samples"], dict)

    def test_missing_field_exits_2_and_names_it(self, tmp_path, capsys):
        doc = bb84_doc()
        del doc["states"]
        spec = write_doc(tmp_path, doc)
        assert main(["regions", "--spec", spec, "--out", str(tmp_path / "o")]) == 2
        assert "missing field 'states'" in capsys.readouterr().err


class TestCliSimulate:
    def test_single_message_summary_matches_direct_decode(self, tmp_path):
        spec = write_doc(tmp_path, bb84_doc())
        out = tmp_path / "out"
        code = main(
            [
                "simulate", "--spec", spec, "--out", str(out),
                "--n", "4", "--delta", "0.99", "--rate", "0.0", "--seed", "3",
            ]
        )
        assert code == 0
        summary = json.loads((out / "summary.json").read_text())
        channel = parse_channel(bb84_doc())
        book = sample_codebook(channel, 0.0, 4, (3, 0))
        direct = cq_sequential_decode(channel, book, 0.99)
        assert summary["result"]["mean_error"] == direct.average_error
        assert summary["result"]["bound_kind"] == "success-floor"

    def test_fixed_seed_runs_are_byte_identical(self, tmp_path):
        spec = write_doc(tmp_path, bb84_doc())
        argv = [
            "simulate", "--spec", spec,
            "--n", "4", "--delta", "0.99", "--rate", "0.25",
            "--trials", "2", "--seed", "7",
        ]
        assert main(argv + ["--out", str(tmp_path / "a")]) == 0
        assert main(argv + ["--out", str(tmp_path / "b")]) == 0
        for name in ("per_message.csv", "summary.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_per_message_table_shape(self, tmp_path):
        spec = write_doc(tmp_path, xor_mac_doc())
        out = tmp_path / "out"
        code = main(
            [
                "simulate", "--spec", spec, "--out", str(out),
                "--n", "4", "--delta", "0.25", "--rate", "0.25", "--rate", "0.25",
                "--trials", "2", "--seed", "5",
            ]
        )
        assert code == 0
        lines = (out / "per_message.csv").read_text().splitlines()
        assert lines[1] == "trial,m1,m2,m3,error,bound,bound_satisfied"
        # 2 trials x 4 message pairs
        assert len(lines) == 2 + 8
        first = lines[2].split(",")
        assert first[0] == "0" and first[1] == "1" and first[2] == "1" and first[3] == ""

    def test_order_flags(self, tmp_path):
        spec = write_doc(tmp_path, bb84_doc())
        argv = [
            "simulate", "--spec", spec,
            "--n", "4", "--delta", "0.99", "--rate", "0.25", "--seed", "7",
        ]
        assert main(argv + ["--out", str(tmp_path / "lex")]) == 0
        assert main(argv + ["--out", str(tmp_path / "rev"), "--order", "reverse"]) == 0
        assert main(argv + ["--out", str(tmp_path / "rnd"), "--order", "random:3"]) == 0
        lex = (tmp_path / "lex" / "per_message.csv").read_text()
        rev = (tmp_path / "rev" / "per_message.csv").read_text()
        assert lex != rev
        assert main(argv + ["--out", str(tmp_path / "bad"), "--order", "sideways"]) == 2

    def test_cmg_regions_decode_through_cli(self, tmp_path):
        spec = write_doc(tmp_path, cmg_doc())
        base = [
            "simulate", "--spec", spec,
            "--n", "4", "--delta", "0.3",
            "--rate", "0.25", "--rate", "0.25", "--rate", "0.0",
            "--seed", "2",
        ]
        assert main(base + ["--out", str(tmp_path / "r1"), "--region", "1"]) == 0
        assert main(base + ["--out", str(tmp_path / "r2"), "--region", "2"]) == 0
        row_r1 = (tmp_path / "r1" / "per_message.csv").read_text().splitlines()[2].split(",")
        row_r2 = (tmp_path / "r2" / "per_message.csv").read_text().splitlines()[2].split(",")
        assert row_r1[3] != ""  # region 1 reports message triples
        assert row_r2[3] == ""  # region 2 reports (m1, m2) pairs
        # missing --region on a three-sender channel is a config error
        assert main(base + ["--out", str(tmp_path / "r0")]) == 2

    def test_exit_codes(self, tmp_path, capsys):
        spec = write_doc(tmp_path, bb84_doc())
        # dimension cap: 2^13 beats the 4096 ceiling
        code = main(
            [
                "simulate", "--spec", spec, "--out", str(tmp_path / "cap"),
                "--n", "13", "--delta", "0.5", "--rate", "0.1",
            ]
        )
        assert code == 3
        assert "cap" in capsys.readouterr().err
        # wrong rate arity
        code = main(
            [
                "simulate", "--spec", spec, "--out", str(tmp_path / "ra"),
                "--n", "4", "--delta", "0.5", "--rate", "0.1", "--rate", "0.1",
            ]
        )
        assert code == 2
        # region flag on a single-sender channel
        code = main(
            [
                "simulate", "--spec", spec, "--out", str(tmp_path / "rg"),
                "--n", "4", "--delta", "0.5", "--rate", "0.1", "--region", "1",
            ]
        )
        assert code == 2
        # decoding an interference channel directly is rejected
        ic_spec = write_doc(tmp_path, ic_doc(), "ic.json")
        code = main(
            [
                "simulate", "--spec", ic_spec, "--out", str(tmp_path / "ic"),
                "--n", "2", "--delta", "0.5", "--rate", "0.1",
            ]
        )
        assert code == 2
        assert "no direct decoder" in capsys.readouterr().err

    def test_unknown_decoder_is_an_argparse_error(self, tmp_path):
        spec = write_doc(tmp_path, bb84_doc())
        with pytest.raises(SystemExit) as exc_info:
            main(
                [
                    "simulate", "--spec", spec, "--out", str(tmp_path / "x"),
                    "--n", "4", "--delta", "0.5", "--rate", "0.1",
                    "--decoder", "telepathy",
                ]
            )
        assert exc_info.value.code == 2


class TestCliSweep:
    def test_trend_column_and_summary(self, tmp_path):
        spec = write_doc(tmp_path, bb84_doc())
        out = tmp_path / "out"
        code = main(
            [
                "sweep", "--spec", spec, "--out", str(out),
                "--n", "3", "--n", "4", "--n", "5",
                "--delta", "0.99", "--rate", "0.25",
                "--trials", "6", "--seed", "11",
            ]
        )
        assert code == 0
        lines = (out / "sweep.csv").read_text().splitlines()
        assert lines[0] == "# schema: cqlab-sweep-csv/1"
        header = lines[1].split(",")
        assert header == ["n", "trials", "mean_error", "standard_error", "mean_bound", "trend_vs_prev"]
        trends = [line.split(",")[-1] for line in lines[2:]]
        assert trends[0] == ""
        assert all(t in ("down", "up", "flat") for t in trends[1:])
        doc = json.loads((out / "sweep.json").read_text())
        assert isinstance(doc["result"]["monotone_decreasing"], bool)
        assert len(doc["result"]["mean_errors"]) == 3


class TestCliVerify:
    def test_single_suite_writes_report(self, tmp_path):
        out = tmp_path / "v"
        assert main(["verify", "--suite", "gentle", "--seed", "5", "--out", str(out)]) == 0
        doc = json.loads((out / "verify.json").read_text())
        assert doc["ok"] is True
        assert doc["suites"][0]["suite"] == "gentle"
        assert doc["suites"][0]["total"] == 500

    def test_corrupted_core_exits_4(self, tmp_path, monkeypatch):
        monkeypatch.setattr(
            cqlab.geometry, "seq_success_lower_bound", lambda rho, hostile, target: 2.0
        )
        code = main(["verify", "--suite", "lemma-chain", "--out", str(tmp_path / "v")])
        assert code == 4

    def test_unknown_suite_is_an_argparse_error(self):
        with pytest.raises(SystemExit) as exc_info:
            main(["verify", "--suite", "vibes"])
        assert exc_info.value.code == 2
