import os
from dataclasses import replace

import numpy as np
import pytest

import patmoco
from patmoco.cli import main
from patmoco.config import parse_config, profile_config
from patmoco.forward import read_sinogram, write_sinogram
from patmoco.geometry import Ellipse
from patmoco.varpro import GNConfig


class TestConfig:
    def test_paper_profile_defaults(self):
        cfg = profile_config("paper")
        assert (cfg.n_side, cfg.n_angles, cfg.step_deg, cfg.n_radii) == (256, 120, 3.0, 363)
        assert cfg.motion_amplitude == 0.05
        assert cfg.motion_frequency == 10.0
        assert cfg.noise_level == 0.03
        assert cfg.baseline_c == -0.5
        assert cfg.gn.max_gn_iters == 6
        assert cfg.gn.inner_max_iter == 100

    def test_desk_profile(self):
        cfg = profile_config("desk")
        assert (cfg.n_side, cfg.n_angles, cfg.step_deg, cfg.n_radii) == (128, 60, 6.0, 181)

    def test_unknown_profile(self):
        with pytest.raises(ValueError):
            profile_config("laptop")

    @pytest.mark.parametrize("name", ["desk", "paper"])
    def test_round_trip_profiles(self, name):
        cfg = profile_config(name)
        assert parse_config(cfg.serialize()) == cfg

    def test_round_trip_customized(self):
        cfg = replace(
            profile_config("desk"),
            extent=0.37519,
            phantom_kind="ellipses",
            phantom_shapes=(Ellipse(0.01, -0.02, 0.1, 0.2, 37.5),),
            motion_kind="explicit",
            motion_values=(0.01, -0.0234567890123456789, 0.0),
            n_angles=3,
            noise_level=0.031415926535,
            seed=987,
            gn=GNConfig(max_gn_iters=2, inner_solver="lsqr", fd_step=3e-7,
                        line_search=False),
            variants=("wgcv",),
            out_dir="results/x",
            cache_path="cache/p.bin",
        )
        assert parse_config(cfg.serialize()) == cfg

    def test_unknown_key_rejected(self):
        text = profile_config("desk").serialize() + "\n[grid]\nwidgets = 3\n"
        # configparser merges duplicate sections, so the bogus key lands in [grid]
        with pytest.raises(Exception):
            parse_config(text)

    @pytest.mark.parametrize("text", ["not an ini file", "[grid]\nn_side = 64\n"])
    def test_malformed_config_raises_value_error(self, text):
        with pytest.raises(ValueError):
            parse_config(text)

    def test_gamma_true_cosine(self):
        cfg = profile_config("desk")
        scan = cfg.scan()
        assert np.array_equal(cfg.gamma_true(), 0.05 * np.cos(10.0 * scan.angles))

    def test_gamma_true_zero_and_explicit(self):
        cfg = replace(profile_config("desk"), motion_kind="zero")
        assert not cfg.gamma_true().any()
        cfg = replace(
            profile_config("desk"), motion_kind="explicit", n_angles=3,
            motion_values=(0.01, 0.02, -0.01),
        )
        assert np.array_equal(cfg.gamma_true(), [0.01, 0.02, -0.01])
        bad = replace(cfg, motion_values=(0.01,))
        with pytest.raises(ValueError):
            bad.gamma_true()


@pytest.fixture(scope="module")
def cli_env(tmp_path_factory):
    """A small self-contained experiment directory for CLI runs."""
    root = tmp_path_factory.mktemp("cli")
    cfg = replace(
        profile_config("desk"),
        n_side=48,
        n_angles=12,
        step_deg=30.0,
        n_radii=41,
        gn=GNConfig(max_gn_iters=2, inner_max_iter=20),
        out_dir=str(root / "out"),
        cache_path=str(root / "proj.cache"),
    )
    path = root / "exp.cfg"
    cfg.save(path)
    code = main(["--config", str(path), "simulate"])
    assert code == 0
    return {"root": root, "cfg": cfg, "cfg_path": str(path)}


class TestCli:
    def test_simulate_outputs(self, cli_env):
        out = cli_env["cfg"].out_dir
        for name in (
            "truth_image.img", "truth_image.pgm", "gamma_true.csv",
            "sinogram_true.sin", "sinogram_noisy.sin", "sinogram_noisy.csv",
            "sinogram_noisy.pgm",
        ):
            assert os.path.exists(os.path.join(out, name)), name
        sino_true = read_sinogram(os.path.join(out, "sinogram_true.sin"))
        sino_noisy = read_sinogram(os.path.join(out, "sinogram_noisy.sin"))
        level = np.linalg.norm(sino_noisy.values - sino_true.values) / np.linalg.norm(
            sino_true.values
        )
        assert np.isclose(level, cli_env["cfg"].noise_level, rtol=1e-12)

    def test_simulate_reproducible(self, cli_env, tmp_path):
        out2 = tmp_path / "out2"
        code = main(["--config", cli_env["cfg_path"], "--out", str(out2), "simulate"])
        assert code == 0
        orig = os.path.join(cli_env["cfg"].out_dir, "sinogram_noisy.sin")
        assert (out2 / "sinogram_noisy.sin").read_bytes() == open(orig, "rb").read()

    def test_seed_override_changes_noise(self, cli_env, tmp_path):
        out2 = tmp_path / "out_seed"
        code = main(
            ["--config", cli_env["cfg_path"], "--out", str(out2), "--seed", "4242",
             "simulate"]
        )
        assert code == 0
        a = read_sinogram(os.path.join(cli_env["cfg"].out_dir, "sinogram_noisy.sin"))
        b = read_sinogram(str(out2 / "sinogram_noisy.sin"))
        assert not np.array_equal(a.values, b.values)

    def test_reconstruct(self, cli_env):
        out = cli_env["cfg"].out_dir
        sino = os.path.join(out, "sinogram_noisy.sin")
        code = main(
            ["--config", cli_env["cfg_path"], "reconstruct", sino, "--gamma", "truth"]
        )
        assert code == 0
        assert os.path.exists(os.path.join(out, "recon.img"))
        assert os.path.exists(os.path.join(out, "solve_report.csv"))
        header = open(os.path.join(out, "solve_report.csv")).readline().strip()
        assert header == "iter,residual_norm,solution_norm,lambda,gcv_value,rel_error"

    def test_reconstruct_gamma_from_file_matches_truth(self, cli_env, tmp_path):
        out = cli_env["cfg"].out_dir
        sino = os.path.join(out, "sinogram_noisy.sin")
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        assert main(["--config", cli_env["cfg_path"], "--out", str(out_a),
                     "reconstruct", sino, "--gamma", "truth"]) == 0
        # the CSV written by simulate carries the same parameters
        assert main(["--config", cli_env["cfg_path"], "--out", str(out_b),
                     "reconstruct", sino, "--gamma",
                     os.path.join(out, "gamma_true.csv")]) == 0
        a = patmoco.read_image(str(out_a / "recon.img"))
        b = patmoco.read_image(str(out_b / "recon.img"))
        assert np.array_equal(a.values, b.values)

    def test_reconstruct_gamma_file_wrong_length_exit_2(self, cli_env, tmp_path):
        path = tmp_path / "short.csv"
        path.write_text("angle_index,phi_rad,gamma\n0,0.0,0.01\n")
        sino = os.path.join(cli_env["cfg"].out_dir, "sinogram_noisy.sin")
        assert main(["--config", cli_env["cfg_path"], "reconstruct", sino,
                     "--gamma", str(path)]) == 2

    def test_reconstruct_geometry_mismatch_exit_2(self, cli_env, tmp_path):
        # a sinogram from a different scan must be refused
        scan = patmoco.make_scan(5, 0.0, 10.0, 7, 1.5)
        bad = patmoco.Sinogram(scan, np.zeros(35))
        path = tmp_path / "bad.sin"
        write_sinogram(bad, path)
        code = main(["--config", cli_env["cfg_path"], "reconstruct", str(path)])
        assert code == 2

    def test_gn_table(self, cli_env):
        out = cli_env["cfg"].out_dir
        sino = os.path.join(out, "sinogram_noisy.sin")
        code = main(["--config", cli_env["cfg_path"], "gn", sino])
        assert code == 0
        lines = open(os.path.join(out, "gn_table.csv")).read().strip().split("\n")
        assert lines[0] == "variant,gn_iter,eps_gamma,eps_f,lambda"
        labels = {line.split(",")[0] for line in lines[1:]}
        assert labels == {"GN-LSQR", "GN-HyBR", "GN-HyBR-opt"}
        # every row fully populated (lambda may be empty for GN-LSQR only)
        for line in lines[1:]:
            variant, it, eps_g, eps_f, lam = line.split(",")
            assert int(it) >= 1
            assert eps_g and eps_f
            if variant != "GN-LSQR":
                assert lam
        traj = open(os.path.join(out, "gamma_trajectory.csv")).read().strip().split("\n")
        assert len(traj) == 1 + cli_env["cfg"].n_angles
        for variant in ("gn_lsqr", "gn_hybr", "gn_hybr_opt"):
            assert os.path.exists(os.path.join(out, f"recon_{variant}.pgm"))

    def test_check(self, cli_env):
        code = main(["--config", cli_env["cfg_path"], "check"])
        assert code == 0
        report = open(
            os.path.join(cli_env["cfg"].out_dir, "theory_report.txt")
        ).read()
        assert "stretch-rate condition holds" in report
        assert "visibility condition holds" in report

    def test_cache_inspect_and_clear(self, cli_env, capsys):
        code = main(["--config", cli_env["cfg_path"], "cache", "inspect"])
        assert code == 0
        assert "sparsity" in capsys.readouterr().out
        code = main(["--config", cli_env["cfg_path"], "cache", "clear"])
        assert code == 0
        assert not os.path.exists(cli_env["cfg"].cache_path)
        code = main(["--config", cli_env["cfg_path"], "cache", "build"])
        assert code == 0
        assert os.path.exists(cli_env["cfg"].cache_path)

    def test_bench_smoke(self, cli_env):
        code = main(["--config", cli_env["cfg_path"], "bench"])
        assert code == 0
        report = open(os.path.join(cli_env["cfg"].out_dir, "bench_report.txt")).read()
        assert "mean of 100 runs" in report
        assert "sparsity" in report

    def test_usage_error_exit_1(self):
        assert main(["frobnicate"]) == 1
        assert main(["--config", "/nonexistent/x.cfg", "simulate"]) == 1

    def test_help_exit_0(self):
        assert main(["--help"]) == 0


class TestCliZeroMotion:
    def test_simulate_without_motion_or_noise_is_pure_projection(self, tmp_path):
        cfg = replace(
            profile_config("desk"),
            n_side=48, n_angles=8, step_deg=45.0, n_radii=31,
            motion_kind="zero", noise_level=0.0,
            out_dir=str(tmp_path / "out"),
        )
        path = tmp_path / "zero.cfg"
        cfg.save(path)
        assert main(["--config", str(path), "simulate"]) == 0
        sino_true = read_sinogram(str(tmp_path / "out" / "sinogram_true.sin"))
        sino_noisy = read_sinogram(str(tmp_path / "out" / "sinogram_noisy.sin"))
        assert np.array_equal(sino_true.values, sino_noisy.values)
        pset = patmoco.assemble_all(cfg.grid(), cfg.scan(), cfg.oversample)
        direct = np.concatenate([m.apply(cfg.phantom().values) for m in pset.matrices])
        assert np.array_equal(sino_true.values, direct)

    def test_check_with_zero_motion_holds_with_full_margin(self, tmp_path):
        cfg = replace(
            profile_config("desk"),
            n_side=48, n_angles=8, step_deg=45.0, n_radii=31,
            motion_kind="zero",
            out_dir=str(tmp_path / "out"),
        )
        path = tmp_path / "zero.cfg"
        cfg.save(path)
        assert main(["--config", str(path), "check"]) == 0
        report = open(tmp_path / "out" / "theory_report.txt").read()
        assert "stretch-rate condition holds: True" in report
