import json
import subprocess
import sys
from pathlib import Path

import numpy as np

from slhnet.cli import main

NETWORKS = Path(__file__).resolve().parent.parent / "networks"


def run_cli(args, capsys):
    code = main([str(a) for a in args])
    out, err = capsys.readouterr()
    return code, out, err


class TestCompose:
    def test_compose_matches_golden_bytes(self, capsys):
        code, out, _ = run_cli(["compose", NETWORKS / "vec_elim_loop.qnet"], capsys)
        assert code == 0
        golden = (NETWORKS / "golden" / "vec_elim_loop.slh.json").read_text()
        assert out == golden

    def test_emit_ast(self, capsys):
        code, out, _ = run_cli(["compose", "--emit", "ast", NETWORKS / "two_cavity_cascade.qnet"], capsys)
        assert code == 0
        ast = json.loads(out)
        assert ast["instances"][0]["kind"] == "one_sided_cavity"
        assert ast["wires"][0]["from"]["instance"] == "c1"

    def test_malformed_file_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.qnet"
        bad.write_text("component c = one_sided_cavity(gamma=1.0)")
        code, out, err = run_cli(["compose", bad], capsys)
        assert code == 2
        assert "1:41" in err or "1:42" in err  # positioned diagnostic

    def test_unknown_kind_exit_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.qnet"
        bad.write_text("component c = cavty(gamma=1.0);")
        code, _, err = run_cli(["compose", bad], capsys)
        assert code == 2 and "cavty" in err

    def test_elaboration_error_exit_3(self, tmp_path, capsys):
        f = tmp_path / "loop.qnet"
        f.write_text(
            "component p = phase_shifter(phi=0.0);\n"
            "component c = one_sided_cavity(gamma=1.0, truncation=4);\n"
            "wire c.out[1] -> p.in[1];\n"
            "wire p.out[1] -> c.in[1];"
        )
        code, _, err = run_cli(["compose", f], capsys)
        assert code == 3
        assert "algebraic loop" in err


class TestSimulate:
    def test_driven_cavity_reaches_steady_state(self, tmp_path, capsys):
        out_file = tmp_path / "traj.csv"
        code, _, _ = run_cli(
            [
                "simulate", NETWORKS / "driven_cavity.qnet",
                "--t1", "40", "--samples", "81",
                "--drive", "drive=coherent(alpha=0.25)",
                "--observables", "cav.a,cav.n",
                "-o", out_file,
            ],
            capsys,
        )
        assert code == 0
        rows = out_file.read_text().strip().split("\n")
        assert rows[0] == "t,cav.a,cav.n"
        re_a, im_a = (float(x) for x in rows[-1].split(",")[1].split(":"))
        gamma, delta, alpha = 2.0, 0.3, 0.25
        want = -np.sqrt(gamma) * alpha / (gamma / 2 + 1j * delta)
        assert abs(complex(re_a, im_a) - want) < 1e-6

    def test_vacuum_constant_columns(self, capsys):
        code, out, _ = run_cli(
            ["simulate", NETWORKS / "two_cavity_cascade.qnet", "--t1", "2", "--samples", "5"],
            capsys,
        )
        assert code == 0
        rows = out.strip().split("\n")
        first = rows[1].split(",")[1:]
        for row in rows[2:]:
            assert row.split(",")[1:] == first

    def test_fixed_step_byte_identical(self, capsys):
        args = [
            "simulate", NETWORKS / "driven_cavity.qnet",
            "--t1", "3", "--samples", "7",
            "--drive", "drive=coherent(alpha=0.2)",
            "--method", "fixed", "--dt", "0.005",
        ]
        code1, out1, _ = run_cli(args, capsys)
        code2, out2, _ = run_cli(args, capsys)
        assert code1 == code2 == 0
        assert out1 == out2

    def test_fock_drive_flux_column(self, capsys):
        code, out, _ = run_cli(
            [
                "simulate", NETWORKS / "fock_atom.qnet",
                "--t1", "12", "--samples", "25",
                "--drive", "guide=fock(n=1, envelope=gaussian(t0=5.0, sigma=1.0))",
                "--observables", "atom.sz",
            ],
            capsys,
        )
        assert code == 0
        rows = out.strip().split("\n")
        assert rows[0] == "t,atom.sz,flux"

    def test_truncation_guard_abort_names_mode(self, tmp_path, capsys):
        f = tmp_path / "tiny.qnet"
        f.write_text(
            "component tiny = one_sided_cavity(gamma=0.05, truncation=3);\n"
            "expose tiny.in[1] as d;\n"
        )
        code, _, err = run_cli(
            ["simulate", f, "--t1", "8", "--drive", "d=coherent(alpha=2.0)"], capsys
        )
        assert code == 1
        assert "tiny" in err

    def test_sweep_writes_files(self, tmp_path, capsys):
        out_file = tmp_path / "sweep.csv"
        code, out, _ = run_cli(
            [
                "simulate", NETWORKS / "driven_cavity.qnet",
                "--t1", "2", "--samples", "5",
                "--drive", "drive=coherent(alpha=0.1)",
                "--observables", "cav.n",
                "--sweep", "cav.gamma=1.0:3.0:3",
                "-o", out_file,
            ],
            capsys,
        )
        assert code == 0
        files = sorted(tmp_path.glob("sweep_*.csv"))
        assert len(files) == 3
        for f in files:
            assert f.read_text().startswith("t,cav.n")

    def test_json_format_has_metadata(self, capsys):
        code, out, _ = run_cli(
            [
                "simulate", NETWORKS / "driven_cavity.qnet",
                "--t1", "1", "--samples", "3", "--format", "json",
            ],
            capsys,
        )
        data = json.loads(out)
        assert "triple_sha256" in data["metadata"]
        assert data["columns"][0] == "t"


class TestOtherCommands:
    def test_steady_state(self, capsys):
        code, out, _ = run_cli(
            [
                "steady-state", NETWORKS / "driven_cavity.qnet",
                "--drive", "drive=coherent(alpha=0.25)",
                "--observables", "cav.a",
            ],
            capsys,
        )
        assert code == 0
        value = out.strip().split("\n")[1].split(",")[1]
        re_a, im_a = (float(x) for x in value.split(":"))
        want = -np.sqrt(2.0) * 0.25 / (1.0 + 0.3j)
        assert abs(complex(re_a, im_a) - want) < 1e-8

    def test_transfer_function_grid(self, capsys):
        code, out, _ = run_cli(
            ["transfer-function", NETWORKS / "opo_feedback.qnet", "--wmin", "-1", "--wmax", "1", "--n", "5"],
            capsys,
        )
        assert code == 0
        rows = out.strip().split("\n")
        assert rows[0].startswith("omega,re_Xi_1_1,im_Xi_1_1")
        assert len(rows) == 6

    def test_eliminate_subcommand(self, capsys):
        code, out, _ = run_cli(
            [
                "eliminate", NETWORKS / "jc_cavity.qnet",
                "--p0", "jc.mode=vacuum,jc.qubit=any",
                "--unitarity-tol", "1e-2",
            ],
            capsys,
        )
        assert code == 0
        data = json.loads(out)
        assert data["space"]["labels"] == ["jc.qubit"]

    def test_check_reports_ok(self, capsys):
        code, out, _ = run_cli(["check", NETWORKS / "beamsplitter_cascade.qnet"], capsys)
        assert code == 0
        assert "status: ok" in out

    def test_version_subprocess(self):
        out = subprocess.run(
            [sys.executable, "-m", "slhnet.cli", "--version"],
            capture_output=True, text=True, cwd=str(NETWORKS.parent),
        )
        assert out.returncode == 0
        assert "slhnet 0.1.0" in out.stdout
        assert "schema v1" in out.stdout
