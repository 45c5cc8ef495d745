import csv
import json

import numpy as np
import pytest

from conftest import disc_roi
from vesselaug.cli import main
from vesselaug.imageio import read_mask, read_rgb, write_array, write_mask, write_rgb


def make_dataset(root, name="toy", n=3, size=48):
    d = root / name
    d.mkdir(parents=True)
    rng = np.random.default_rng(len(name))
    roi = disc_roi(size)
    write_mask(d / "roi.png", roi)
    entries = []
    for i in range(n):
        write_rgb(d / f"img{i}.png", rng.uniform(size=(size, size, 3)))
        write_mask(d / f"lab{i}.png", rng.uniform(size=(size, size)) > 0.8)
        entries.append({"image": f"img{i}.png", "mask": f"lab{i}.png", "roi": "roi.png"})
    (d / "manifest.json").write_text(json.dumps({"name": name, "entries": entries}))
    return d / "manifest.json"


DENSE = ["--set", "growth.attraction_radius=20", "--set", "growth.segment_length=3", "--set", "growth.max_nodes=150"]


def test_gen_writes_requested_masks(tmp_path):
    man = make_dataset(tmp_path)
    out = tmp_path / "gen"
    assert main(["gen", str(man), "--out", str(out), "--attractor-count", "300"]) == 0
    pngs = sorted(out.glob("toy_gen_*.png"))
    assert len(pngs) == 100
    roi = disc_roi(48)
    for p in pngs[:10]:
        m = read_mask(p)
        assert m.shape == (48, 48) and not (m & ~roi).any()
    log = json.loads((out / "run_log.json").read_text())
    assert len(log["items"]) == 100 and "seconds" not in log["items"][0]


def test_gen_zero_masks_and_resize(tmp_path):
    man = make_dataset(tmp_path)
    out = tmp_path / "gen"
    assert main(["gen", str(man), "--out", str(out), "--masks-per-dataset", "0"]) == 0
    assert not list(out.glob("*.png"))
    args = ["gen", str(man), "--out", str(out), "--masks-per-dataset", "2", "--resize", "40x30", "--timings"]
    assert main(args + ["--attractor-count", "200"] + DENSE) == 0
    assert read_mask(out / "toy_gen_0001.png").shape == (30, 40)
    assert "seconds" in json.loads((out / "run_log.json").read_text())["items"][0]


def test_augment(tmp_path):
    man = make_dataset(tmp_path)
    mixers = tmp_path / "mixers"
    mixers.mkdir()
    write_rgb(mixers / "z.png", np.random.default_rng(0).uniform(size=(20, 30, 3)))
    runs = []
    for k in range(2):
        out = tmp_path / f"aug{k}"
        assert main(["augment", str(man), "--mixers", str(mixers), "--out", str(out), "--seed", "5"]) == 0
        imgs = sorted((out / "images").glob("*.png"))
        assert len(imgs) == 3 and len(list((out / "masks").glob("*.png"))) == 3
        runs.append([p.read_bytes() for p in imgs])
        x = read_rgb(imgs[0])
        assert x.shape == (48, 48, 3) and x.min() >= 0 and x.max() <= 1
    assert runs[0] == runs[1]
    assert main(["augment", str(man), "--mixers", "self", "--out", str(tmp_path / "self")]) == 0


def test_eval_identity_and_overlay(tmp_path):
    pred, gt = tmp_path / "pred", tmp_path / "gt"
    pred.mkdir()
    gt.mkdir()
    rng = np.random.default_rng(1)
    for i in range(3):
        m = rng.uniform(size=(20, 20)) > 0.7
        write_mask(pred / f"a{i}.png", m)
        write_mask(gt / f"a{i}.png", m)
    report = tmp_path / "r.csv"
    assert main(["eval", str(pred), str(gt), "--report", str(report), "--thin", "--overlay", str(tmp_path / "ov")]) == 0
    rows = list(csv.DictReader(report.open()))
    assert rows[-1]["image"] == "MEAN" and rows[-1]["dsc"] == "1.000000" and rows[-1]["dsc_thin"] == "1.000000"
    assert len(list((tmp_path / "ov").glob("*_overlay.png"))) == 3


def test_eval_confusion_example(tmp_path):
    pred, gt = tmp_path / "pred", tmp_path / "gt"
    pred.mkdir()
    gt.mkdir()
    p = np.zeros((4, 4), bool)
    g = np.zeros((4, 4), bool)
    p[0, :3] = True  # tp 2, fp 1
    g[0, :2] = g[1, 0] = True  # fn 1
    write_mask(pred / "x.png", p)
    write_mask(gt / "x.png", g)
    report = tmp_path / "r.csv"
    assert main(["eval", str(pred), str(gt), "--report", str(report)]) == 0
    row = next(csv.DictReader(report.open()))
    assert row["dsc"] == f"{4 / 6:.6f}" and row["acc"] == f"{14 / 16:.6f}"
    assert row["precision"] == f"{2 / 3:.6f}" and row["recall"] == f"{2 / 3:.6f}" and row["sp"] == f"{12 / 13:.6f}"
    (gt / "y.png").write_bytes((gt / "x.png").read_bytes())
    assert main(["eval", str(pred), str(gt), "--report", str(report)]) == 2


def test_distance(tmp_path, capsys):
    f = tmp_path / "f.csv"
    rows = ["domain,f0,f1"] + [f"{d},{x},{y}" for d, (x, y) in zip("abcd", [(0, 0), (1, 0), (0, 1), (1, 1)])]
    f.write_text("\n".join(rows) + "\n")
    assert main(["distance", str(f)]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["n_domains"] == 4 and res["n_pairs"] == 6
    assert res["inter_distance"] == pytest.approx((4 + 2 * 2**0.5) / 6)
    f.write_text("domain,f0\na,1\na,2\n")
    assert main(["distance", str(f)]) == 2


def test_ttest(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    a.write_text("score\n1\n0\n-1\n2\n")
    b.write_text("score\n0\n0\n0\n0\n")
    assert main(["ttest", str(a), str(b)]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["t"] == pytest.approx(0.774597, abs=1e-5) and res["dof"] == 3
    assert main(["ttest", str(a), str(a)]) == 2


def test_losses(tmp_path, capsys):
    for key in ("d_real", "d_fake_paired", "d_fake_unpaired"):
        write_array(tmp_path / f"{key}.bin", np.full((4, 4), 0.5))
    write_array(tmp_path / "gen.bin", np.full((2, 2, 3), 0.75))
    write_array(tmp_path / "real.bin", np.full((2, 2, 3), 0.5))
    args = ["losses"] + [f"--{k.replace('_', '-')}={tmp_path / (k + '.bin')}" for k in
                         ("d_real", "d_fake_paired", "d_fake_unpaired", "gen", "real")]
    assert main(args) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["discriminator_total"] == pytest.approx(0.623832, abs=1e-6)
    assert res["generator_total"] == pytest.approx(25 + 0.4 * np.log(2), abs=1e-6)
    assert main(["losses"]) == 1


def test_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["gen"])
    assert exc.value.code == 1
    assert main(["gen", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 2
    man = make_dataset(tmp_path)
    assert main(["gen", str(man), "--out", str(tmp_path / "o"), "--set", "growth.bogus=1"]) == 1
    assert main(["gen", str(man), "--out", str(tmp_path / "o"), "--resize", "abc"]) == 1


def test_run_log_seed_replays_a_mask(tmp_path):
    from dataclasses import replace

    from vesselaug.config import load_config
    from vesselaug.imageio import mask_png
    from vesselaug.raster import make_structure_mask

    man = make_dataset(tmp_path)
    out = tmp_path / "gen"
    args = ["gen", str(man), "--out", str(out), "--masks-per-dataset", "3", "--attractor-count", "200", "--seed", "7"]
    assert main(args + DENSE) == 0
    item = json.loads((out / "run_log.json").read_text())["items"][2]
    cfg = load_config(None, None, [DENSE[i] for i in range(1, len(DENSE), 2)])
    roi = read_mask(item["roi"])
    m = make_structure_mask(roi, replace(cfg.growth, seed=item["seed"]), 200, erosion_iterations=cfg.erosion_iterations)
    assert mask_png(m) == (out / item["mask"]).read_bytes()
