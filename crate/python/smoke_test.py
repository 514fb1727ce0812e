"""Smoke test for the ssrgan extension module.

Build and install with `pip install --no-build-isolation ./crates/python`,
then run `python python/smoke_test.py`.
"""

import math
import tempfile
from pathlib import Path

import numpy as np

import ssrgan


def main() -> None:
    data = ssrgan.synth(n_train_a=32, n_train_b=32, n_eval=8)
    a, b = data["a"], data["b"]
    contaminated, clean = data["eval_contaminated"], data["eval_clean"]
    assert a.sample_rate_hz == ssrgan.MODEL_RATE_HZ
    print("synth:", a, "scale", round(data["scale"], 4))
    print("headroom INPS (contaminated vs clean): %.2f dB" % ssrgan.inps_db(contaminated, clean))

    model, history = ssrgan.train(a, b, train_json='{"iterations": 20, "batch_size": 4}', preset="model1")
    assert len(history) == 20 and all(math.isfinite(h["total"]) for h in history)
    print("train: final cycle %.4f" % history[-1]["cycle"])

    denoised = model.denoise(contaminated)
    report = ssrgan.metrics(contaminated, denoised, clean)
    print("denoised: INPS %.2f dB, PTPR %.3f" % (report["inps_db"], report["ptpr"]))

    windows, _ = contaminated.windows(model.norm_scale)
    phi1 = np.asarray(model.features(windows, "a"))
    phi2 = np.asarray(model.features(model.forward(windows), "b"))
    assert phi1.shape == phi2.shape
    print("features:", phi1.shape)

    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "model.ssrg"
        model.save(str(path))
        again = ssrgan.Model.load(str(path))
        assert np.array_equal(np.asarray(again.forward(windows)), np.asarray(model.forward(windows)))

    aas = ssrgan.aas(contaminated)
    print("aas: INPS %.2f dB" % ssrgan.inps_db(contaminated, aas))
    print("ok")


if __name__ == "__main__":
    main()
