import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from polyak_sgd import objective
from polyak_sgd.cli import main
from polyak_sgd.harness import read_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_config(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["--out", str(out), "run", str(CONFIGS / "minimal.cfg")]) == 0
    header, rows = read_csv(out / "minimal" / "fixed.csv")
    assert header[0] == "k" and rows.shape[0] == 10
    stdout = capsys.readouterr().out
    assert "label, final mean q, bound at final k, pass/fail" in stdout
    assert (out / "minimal" / "summary.txt").exists()


def test_flags_after_subcommand(tmp_path):
    out = tmp_path / "o2"
    assert main(["run", str(CONFIGS / "minimal.cfg"), "--out", str(out), "--quiet"]) == 0
    assert (out / "minimal" / "fixed.csv").exists()


def test_unknown_key_cites_line(tmp_path, capsys):
    cfg = write(tmp_path, "[problem]\nkind = centroid\n\n[policy]\npolicy = fixed\nlearnig_rate = 0.1\n")
    assert main(["--out", str(tmp_path), "run", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "learnig_rate" in err and "exp.cfg:6:" in err


def test_policy_block_needs_variant(tmp_path, capsys):
    cfg = write(tmp_path, "[problem]\nkind = centroid\n\n[policy]\nlabel = a\n")
    assert main(["--out", str(tmp_path), "run", str(cfg)]) == 2
    assert "exp.cfg:4:" in capsys.readouterr().err


def test_f_star_overestimate_exits_1(tmp_path, capsys):
    p = objective.gaussian_cloud(500, 2, seed=0)
    cfg = write(tmp_path, f"""[problem]
kind = centroid
n = 500
d = 2
seed = 0

[policy]
label = bad
policy = splr
f_star = {p.f_star + 1.0!r}

[run]
iters = 50
seeds = 1
q0 = 4
batch_size = 50
""")
    assert main(["--out", str(tmp_path), "run", str(cfg)]) == 1
    err = capsys.readouterr().err
    assert "FStarOverestimate" in err and "at iteration" in err


def test_bounds_example(tmp_path, capsys):
    argv = ["--out", str(tmp_path), "bounds", "--mu", "1", "--ell", "2", "--sigma2", "2", "--M", "1",
            "--q0", "0.25", "--kmax", "20"]
    assert main(argv) == 0
    text = capsys.readouterr().out
    assert "threshold q0 = 0.5" in text
    assert "Polyak constant >= scheduled" in text
    for name in ("scheduled.csv", "polyak.csv"):
        header, rows = read_csv(tmp_path / "bounds" / name)
        assert header == ["k", "bound"] and rows[0, 1] == 0.25 and len(rows) == 21


def test_bounds_equal_curvature(tmp_path, capsys):
    argv = ["--out", str(tmp_path), "bounds", "--mu", "2", "--ell", "2", "--sigma2", "1", "--M", "1",
            "--q0", "5", "--kmax", "3"]
    assert main(argv) == 0
    assert "Polyak always >= (unbounded threshold)" in capsys.readouterr().out


def test_bounds_above_threshold(tmp_path, capsys):
    argv = ["--out", str(tmp_path), "bounds", "--mu", "1", "--ell", "2", "--sigma2", "2", "--M", "1",
            "--q0", "1", "--kmax", "3"]
    assert main(argv) == 0
    assert "Polyak constant < scheduled" in capsys.readouterr().out


@pytest.mark.parametrize("bad", [["--mu", "-1"], ["--ell", "0.5"], ["--q0", "0"], ["--kmax", "-1"]])
def test_bounds_invalid_parameters(tmp_path, bad):
    base = {"--mu": "1", "--ell": "2", "--sigma2": "1", "--M": "1", "--q0": "1", "--kmax": "5"}
    base[bad[0]] = bad[1]
    argv = ["--out", str(tmp_path), "bounds"] + [t for kv in base.items() for t in kv]
    assert main(argv) == 2


def heatmap_cfg(tmp_path, resolution=11):
    return write(tmp_path, f"""[problem]
kind = quadratic
eigenvalues = 1, 10

[policy]
policy = polyak

[run]
name = hm
source = full

[heatmap]
resolution = {resolution}
""", "hm.cfg")


def test_heatmap_axis_and_rows(tmp_path):
    cfg = heatmap_cfg(tmp_path)
    assert main(["--out", str(tmp_path / "o"), "--quiet", "heatmap", str(cfg)]) == 0
    header, rows = read_csv(tmp_path / "o" / "hm" / "heatmap.csv")
    assert header == ["x", "y", "h"] and len(rows) == 121
    axis = rows[(rows[:, 1] == 0.0) & (rows[:, 0] != 0.0)]
    assert len(axis) == 10 and np.all(axis[:, 2] == 1.0)


def test_heatmap_is_byte_identical(tmp_path):
    cfg = heatmap_cfg(tmp_path, 9)
    main(["--out", str(tmp_path / "a"), "--quiet", "heatmap", str(cfg)])
    main(["--out", str(tmp_path / "b"), "--quiet", "heatmap", str(cfg)])
    assert (tmp_path / "a/hm/heatmap.csv").read_bytes() == (tmp_path / "b/hm/heatmap.csv").read_bytes()


def test_heatmap_rejects_3d(tmp_path, capsys):
    cfg = write(tmp_path, "[problem]\nkind = quadratic\neigenvalues = 1, 2, 3\n\n[policy]\npolicy = polyak\n")
    assert main(["--out", str(tmp_path), "heatmap", str(cfg)]) == 2
    assert "d=3" in capsys.readouterr().err


def test_compare_three_policies(tmp_path, capsys):
    cfg = write(tmp_path, (CONFIGS / "compare.cfg").read_text().replace("auto:40", "auto:3")
                .replace("iters = 400", "iters = 50"))
    assert main(["--out", str(tmp_path / "o"), "compare", str(cfg)]) == 0
    d = tmp_path / "o" / "compare"
    assert sorted(p.name for p in d.glob("*.csv")) == ["epoch.csv", "polyak.csv", "scheduled.csv"]
    lines = capsys.readouterr().out.splitlines()
    i = lines.index("rank, label, final mean f - f*, final mean q")
    assert [line.split(",")[0] for line in lines[i + 1:]] == ["1", "2", "3"]


def test_compare_needs_two_policies(tmp_path):
    assert main(["--out", str(tmp_path), "compare", str(CONFIGS / "minimal.cfg")]) == 2


def test_compare_good_init_ranks_polyak_first(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "compare", str(CONFIGS / "good_init.cfg")]) == 0
    lines = capsys.readouterr().out.splitlines()
    i = lines.index("rank, label, final mean f - f*, final mean q")
    assert lines[i + 1].split(", ")[1] == "polyak"


def test_good_init_single_policy(tmp_path, capsys):
    text = (CONFIGS / "good_init.cfg").read_text()
    text = text.replace("[policy]\nlabel = epoch\npolicy = epoch\nh0 = 0.6\ndecay_factor = 6\ndecay_period = 100\n\n", "")
    assert text.count("[policy]") == 1
    cfg = write(tmp_path, text.replace("auto:40", "auto:2"))
    assert main(["--out", str(tmp_path / "o"), "compare", str(cfg)]) == 0
    assert "1, polyak" in capsys.readouterr().out


def test_selftest():
    assert main(["--quiet", "selftest"]) == 0


def test_svg_output(tmp_path):
    assert main(["--out", str(tmp_path), "--svg", "--quiet", "run", str(CONFIGS / "minimal.cfg")]) == 0
    assert (tmp_path / "minimal" / "curves.svg").read_text().lstrip().startswith("<?xml")


@pytest.mark.parametrize("cfg", sorted(CONFIGS.glob("*.cfg")), ids=lambda p: p.stem)
def test_shipped_configs_run(cfg, tmp_path):
    text = cfg.read_text()
    command = "heatmap" if "[heatmap]" in text else ("compare" if "scenario" in text else "run")
    t0 = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "polyak_sgd", "--out", str(tmp_path), "--quiet", command,
                           str(cfg)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert time.perf_counter() - t0 < 60
