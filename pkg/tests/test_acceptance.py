"""Acceptance suite: one test per numbered criterion, each printing a
PASS/FAIL line. Run with ``pytest tests/test_acceptance.py -v -s`` or
``python3 tests/test_acceptance.py``.

The heavy criteria drive the ``nsd`` command line into a scratch run
directory; criterion 9 repeats those runs into a second directory and
compares the CSV outputs byte for byte.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

from nsdil import cli, evaluation as ev, gallery, lcnn, metrics, objective as ob, restore, signal
from nsdil.gallery import GaussianKernelSpec, render_gaussian_kernel
from nsdil.restore import Image, save_image

sys.path.insert(0, str(Path(__file__).parent))
from conftest import sharp_crops  # noqa: E402

pytestmark = pytest.mark.slow

SEED = 0
HELD_OUT_SEED = 1
N_IMAGES = 12
ABLATION_COUNT = 600
ABLATION_EPOCHS = 15


def report(capsys, n, ok, detail):
    with capsys.disabled():
        print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {detail}")


def nsd(*argv):
    code = cli.main(["--threads", "1"] + [str(a) for a in argv])
    assert code == 0, f"nsd {' '.join(map(str, argv))} exited {code}"


def held_out_csv(model):
    drk = lcnn.extract_drk(model)
    ks = gallery.generate_rkg(count=100, seed=HELD_OUT_SEED).kernels
    res = [ob.identity_loss(k, drk) for k in ks]
    lines = ["kernel,identity_residual"] + [f"{i},{r:.17g}" for i, r in enumerate(res)]
    lines.append(f"mean,{np.mean(res):.17g}")
    lines.append(f"drk_sum,{drk.sum():.17g}")
    return "\n".join(lines) + "\n", float(np.mean(res)), float(drk.sum())


def full_run(root: Path, sharp: Path) -> dict:
    """Criteria 3-5 end to end through the command line."""
    root.mkdir(parents=True, exist_ok=True)
    nsd("gen-rkg", "--seed", SEED, "--out", root / "rkg.bin")
    nsd("train", "--rkg", root / "rkg.bin", "--seed", SEED, "--out", root / "model.lcnn",
        "--loss-csv", root / "loss.csv")
    model = lcnn.load_model(root / "model.lcnn")
    text, mean_res, drk_sum = held_out_csv(model)
    (root / "held_out.csv").write_text(text)
    nsd("simulate", "--sharp-dir", sharp, "--out-dir", root / "sim", "--seed", SEED)
    nsd("eval", "--manifest", root / "sim" / "manifest.tsv", "--sharp-dir", sharp,
        "--method", "identity", "--method", "drk", "--method", "lcnn", "--method", "wiener",
        "--checkpoint", root / "model.lcnn", "--out", root / "eval.csv")
    nsd("ablate", "--sharp-dir", sharp, "--seed", SEED, "--count", ABLATION_COUNT,
        "--epochs", ABLATION_EPOCHS, "--out", root / "ablation.csv")
    return {"model": model, "mean_res": mean_res, "drk_sum": drk_sum, "root": root}


CSV_OUTPUTS = ("loss.csv", "held_out.csv", "sim/manifest.tsv", "sim/simulate.csv",
               "eval.csv", "ablation.csv")


@pytest.fixture(scope="module")
def sharp(tmp_path_factory):
    d = tmp_path_factory.mktemp("sharp")
    for name, img in sharp_crops(N_IMAGES, 128):
        save_image(Image(img), d / f"{name}.png")
    return d


@pytest.fixture(scope="module")
def run_a(tmp_path_factory, sharp):
    return full_run(tmp_path_factory.mktemp("run") / "a", sharp)


def eval_rows(path):
    rows = {}
    for line in Path(path).read_text().splitlines()[1:]:
        f = line.split(",")
        rows[(f[0], f[1])] = (float(f[3]), float(f[5]))
    return rows


# ---- 1

def test_criterion_1_gradient_check(capsys):
    model = lcnn.init_model(np.random.default_rng(SEED), (1, 2, 2, 1), "scaled_normal")
    ks = gallery.generate_rkg(count=3, seed=SEED).kernels
    cfg = ob.TrainConfig()
    grads, _ = ob.gradients(model, ks, cfg)
    h, worst, n, bad = 1e-6, 0.0, 0, 0
    for li, w in enumerate(model.layers):
        for idx in np.ndindex(w.shape):
            p, q = model.copy(), model.copy()
            p.layers[li][idx] += h
            q.layers[li][idx] -= h
            fd = (ob.evaluate_loss(p, ks, cfg).total - ob.evaluate_loss(q, ks, cfg).total) / (2 * h)
            rel = abs(grads[li][idx] - fd) / max(abs(grads[li][idx]), abs(fd), 1e-8)
            worst = max(worst, rel)
            n += 1
            bad += rel > 1e-4
    ok = bad == 0
    report(capsys, 1, ok, f"{n - bad}/{n} taps within 1e-4 (worst relative error {worst:.2e})")
    assert ok


# ---- 2

def test_criterion_2_lti_collapse(capsys, run_a):
    rng = np.random.default_rng(SEED)
    untrained = lcnn.init_model(rng, scheme="scaled_normal")
    errs = {}
    for label, model in (("untrained", untrained), ("trained", run_a["model"])):
        drk = lcnn.extract_drk(model)
        errs[label] = max(
            float(np.max(np.abs(lcnn.forward(model, x) - signal.conv2d_same(x, drk, "zero"))))
            for x in rng.random((20, 64, 64)))
    ok = errs["untrained"] <= 1e-8 and errs["trained"] <= 1e-6
    report(capsys, 2, ok, f"max abs diff untrained {errs['untrained']:.2e} (<=1e-8), "
                          f"trained {errs['trained']:.2e} (<=1e-6)")
    assert ok


# ---- 3

def test_criterion_3_identity_residual(capsys, run_a):
    mean_res, area = run_a["mean_res"], abs(1 - run_a["drk_sum"])
    ok = mean_res <= 0.05 and area <= 0.05
    report(capsys, 3, ok, f"held-out mean identity residual {mean_res:.4f} (<=0.05), "
                          f"|1 - sum DRK| {area:.4f} (<=0.05)")
    assert ok


# ---- 4

def test_criterion_4_deblurring_gain(capsys, run_a):
    rows = eval_rows(run_a["root"] / "eval.csv")
    base, drk, net = rows[("identity", "all")], rows[("drk", "all")], rows[("lcnn", "all")]
    gain = drk[0] - base[0]
    ok = gain >= 0.5 and drk[1] > base[1] and abs(drk[0] - net[0]) <= 0.05
    report(capsys, 4, ok, f"PSNR {base[0]:.3f} -> {drk[0]:.3f} dB (gain {gain:+.3f}, need >= +0.5); "
                          f"SSIM {base[1]:.4f} -> {drk[1]:.4f}; LCNN-DRK gap {abs(drk[0] - net[0]):.2e} dB")
    assert ok


# ---- 5

def test_criterion_5_ablation_direction(capsys, run_a):
    lines = (run_a["root"] / "ablation.csv").read_text().splitlines()
    best_lr = float(lines[-1].split("=", 1)[1])
    rows = {}
    for line in lines[1:-1]:
        f = line.split(",")
        if float(f[4]) == best_lr:
            rows[f[0]] = (float(f[6]), float(f[7]))
    ssims = {k: v[1] for k, v in rows.items()}
    full, ident = ssims["+R1+R2+R3"], ssims["identity"]
    others = [v for k, v in ssims.items() if k != "identity"]
    full_best = full >= max(ssims.values())
    ident_worst = ident < min(others)
    ok = full_best and ident_worst
    table = ", ".join(f"{k} {v:.4f}" for k, v in ssims.items())
    report(capsys, 5, ok, f"lr {best_lr:g}; SSIM {table}; full best: {full_best}, "
                          f"identity worst: {ident_worst} (margin {min(others) - ident:+.4f})")
    assert ok


# ---- 6

def test_criterion_6_drk_shape(capsys, run_a):
    drk = lcnn.extract_drk(run_a["model"])
    c = drk.shape[0] // 2
    yy, xx = np.mgrid[:drk.shape[0], :drk.shape[1]]
    cheb = np.maximum(np.abs(yy - c), np.abs(xx - c))
    ring_min = float(drk[(cheb >= 2) & (cheb <= 3)].min())
    mag = signal.magnitude(signal.dft2d(signal.center_shift_to_origin(drk), 21, 21))
    dc = float(mag[0, 0])
    peak = np.unravel_index(np.argmax(mag), mag.shape)
    ok = drk[c, c] > 0 and ring_min < 0 and 0.9 <= dc <= 1.1 and peak != (0, 0)
    report(capsys, 6, ok, f"centre {drk[c, c]:.4f}, ring min {ring_min:.4f}, |DFT(0,0)| {dc:.4f}, "
                          f"max |DFT| {mag.max():.3f} at {tuple(int(v) for v in peak)}")
    assert ok


# ---- 7

def test_criterion_7_wiener_oracle(capsys, run_a):
    sharp = sharp_crops(1, 128)[0][1]
    k = render_gaussian_kernel(GaussianKernelSpec(0.5, 0.5, 0.0, 11))
    blurred = signal.conv2d_same(sharp, k.grid, "reflect")
    inner = (slice(13, -13), slice(13, -13))
    w = restore.wiener_deconvolve(blurred, k, nsr=0.0).planes[0]
    d = restore.deblur_with_drk(blurred, lcnn.extract_drk(run_a["model"])).planes[0]
    pw, pd = metrics.psnr(w[inner], sharp[inner]), metrics.psnr(d[inner], sharp[inner])
    ok = pw >= 40.0
    report(capsys, 7, ok, f"Wiener (nsr 0) {pw:.2f} dB (>=40); DRK {pd:.2f} dB; gap {pw - pd:.2f} dB (logged)")
    assert ok


# ---- 8

def test_criterion_8_sweep(capsys, run_a, sharp):
    out = run_a["root"] / "sweep.csv"
    nsd("sweep", "--checkpoint", run_a["root"] / "model.lcnn", "--sharp-dir", sharp,
        "--seed", SEED, "--out", out)
    lines = out.read_text().splitlines()
    last = lines[3].split(",")
    drop_p, drop_s = float(last[4]), float(last[5])
    ok = (lines[1].split(",")[4] == "0.0000" and np.isfinite(drop_p) and np.isfinite(drop_s)
          and lines[-1].startswith("# reference"))
    report(capsys, 8, ok, f"[6,9] band: PSNR drop {drop_p:.2f}%, SSIM drop {drop_s:.2f}% "
                          f"(reference about 6%)")
    assert ok


# ---- 9

def test_criterion_9_determinism(capsys, run_a, sharp):
    run_b = full_run(run_a["root"].parent / "b", sharp)
    diffs = [name for name in CSV_OUTPUTS
             if (run_a["root"] / name).read_bytes() != (run_b["root"] / name).read_bytes()]
    same_ckpt = (run_a["root"] / "model.lcnn").read_bytes() == (run_b["root"] / "model.lcnn").read_bytes()
    ok = not diffs and same_ckpt
    report(capsys, 9, ok, f"{len(CSV_OUTPUTS) - len(diffs)}/{len(CSV_OUTPUTS)} CSVs byte-identical, "
                          f"checkpoint identical: {same_ckpt}" + (f"; differing: {diffs}" if diffs else ""))
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v", "-s"]))
