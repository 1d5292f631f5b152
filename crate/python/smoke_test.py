#!/usr/bin/env python3
"""Smoke test for the freqlens_py extension module.

Builds nothing itself: it expects `cargo build -p freqlens-py` (or a
release build) to have produced libfreqlens_py.so, copies that next to
a temp dir under the importable name, and drives one tiny end-to-end
pass through every exposed surface.

Run from the repository root:

    cargo build -p freqlens-py
    python3 python/smoke_test.py
"""

import math
import os
import shutil
import sys
import tempfile

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def import_module():
    candidates = [
        os.path.join(REPO_ROOT, "target", "release", "libfreqlens_py.so"),
        os.path.join(REPO_ROOT, "target", "debug", "libfreqlens_py.so"),
    ]
    built = next((p for p in candidates if os.path.exists(p)), None)
    if built is None:
        sys.exit("libfreqlens_py.so not found; run `cargo build -p freqlens-py` first")
    stage = tempfile.mkdtemp(prefix="freqlens_py.")
    shutil.copy2(built, os.path.join(stage, "freqlens_py.so"))
    sys.path.insert(0, stage)
    import freqlens_py

    return freqlens_py


def check(label, condition, detail=""):
    status = "ok" if condition else "FAIL"
    print(f"{status:4} {label}" + (f" ({detail})" if detail else ""))
    if not condition:
        raise SystemExit(f"smoke test failed at: {label}")


def main():
    fl = import_module()

    # Synthetic data and a quickly trained classifier.
    data = fl.Dataset.synthetic(
        ["disk", "stripes"], size=8, samples_per_class=24, noise_std=0.02, seed=11
    )
    check("synthetic dataset", len(data) == 48 and data.class_names() == ["disk", "stripes"])

    net = fl.Network(1, 8, 8, 2, seed=3)
    stats = net.train(data, epochs=5, batch_size=8, learning_rate=0.1, seed=5)
    accuracy = net.evaluate(data)
    check("training improves accuracy", accuracy > 0.8, f"accuracy {accuracy:.3f}")
    check("per-epoch stats", len(stats) == 5 and all(len(s) == 2 for s in stats))

    img = data.image(0)
    check("prediction in range", net.predict(img) in (0, 1))
    probs = net.softmax_probabilities(img)
    check("probabilities normalize", abs(sum(probs) - 1.0) < 1e-9)

    # Model persistence.
    with tempfile.TemporaryDirectory() as tmp:
        model_path = os.path.join(tmp, "model.fqnm")
        net.save(model_path)
        reloaded = fl.Network.load(model_path)
        check("model round trip", reloaded.evaluate(data) == accuracy)

        batch_path = os.path.join(tmp, "batch.fql1")
        data.save(batch_path)
        loaded = fl.Dataset.load(batch_path)
        check(
            "batch round trip",
            len(loaded) == len(data) and loaded.image(0).data() == img.data(),
        )

    # Spectral transforms.
    coeffs = fl.dct2(img)
    back = fl.dct2_inverse_image(1, 8, 8, coeffs)
    err = max(abs(a - b) for a, b in zip(back.data(), img.data()))
    check("dct round trip", err < 1e-10, f"max err {err:.2e}")

    signal = [0.3, -1.2, 0.7, 2.0, -0.4]
    spectrum = fl.dft(signal)
    check("dft dc term is the sum", abs(spectrum[0][0] - sum(signal)) < 1e-9)
    restored = fl.dft_inverse_signal(spectrum)
    check("dft round trip", max(abs(a - b) for a, b in zip(signal, restored)) < 1e-9)

    dc, _ = fl.basis_sum(16, 0)
    re, im = fl.basis_sum(16, 7)
    check("fourier basis sums", dc == 16.0 and math.hypot(re, im) < 1e-10)

    lhs, rhs, holds = fl.l1_lower_bound(img, data.image(1))
    check("l1 lower bound", holds and lhs >= rhs - 1e-9)

    # Attacks and frequency diagnostics on a small slice.
    slice_imgs = [data.image(i) for i in range(8)]
    small = fl.Dataset(slice_imgs, data.labels()[:8], data.class_names())
    report = fl.attack(net, small, "fgsm", eps=0.1)
    check(
        "fgsm stays in budget",
        all(
            adv.linf_distance(orig) <= 0.1 + 1e-9
            for adv, orig in zip(report["images"], slice_imgs)
        ),
        f"accuracy {report['accuracy_before']:.2f} -> {report['accuracy_after']:.2f}",
    )

    rct = fl.rct_map(slice_imgs, report["images"])
    check("rct map", rct.num_levels == 15 and rct.band_mean(0, 14) >= 0.0)

    distance = fl.ammd_distance(slice_imgs, report["images"], sigma=1.0)
    check("ammd", 0.0 <= distance <= math.sqrt(2.0), f"value {distance:.3e}")

    oracle = math.sqrt(2.0 - 2.0 * math.exp(-0.5))
    two_point = fl.mmd_distance([[0.0, 0.0]], [[1.0, 0.0]], sigma=1.0)
    check("mmd two-point oracle", abs(two_point - oracle) < 1e-9)

    profiles = fl.attribution_profiles(net, data, baseline="zero")
    check(
        "attribution profiles",
        len(profiles) == 2 and all(len(scores) == 15 for _, scores, _ in profiles),
    )

    tiny = fl.Dataset(slice_imgs[:4], data.labels()[:4], data.class_names())
    counterparts, objectives = fl.robust_counterparts(net, tiny, iterations=15, seed=9)
    check(
        "robust counterparts",
        len(counterparts) == 4 and all(o >= 0.0 for o in objectives),
    )
    diff = fl.counterpart_diff([tiny.image(i) for i in range(4)], counterparts)
    check("counterpart spectrum diff", diff.samples == 4 and diff.band_mass(0, 14) > 0.0)

    print("smoke test passed")


if __name__ == "__main__":
    main()
