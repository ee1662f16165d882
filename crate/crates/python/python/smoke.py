"""Smoke check for the aecpost extension module."""

import math
import random

import aecpost


def main():
    rng = random.Random(3)
    x = aecpost.Signal([rng.uniform(-1, 1) for _ in range(16000)], 16000)
    y = aecpost.stft_round_trip(x)
    inner = slice(512, len(x) - 512)
    err = max(abs(a - b) for a, b in zip(x.samples[inner], y.samples[inner]))
    assert err < 1e-10, err

    path = [0.5, -0.3, 0.2, 0.1]
    far = [rng.gauss(0, 1) for _ in range(4000)]
    mic = [sum(h * far[n - k] for k, h in enumerate(path) if n >= k) for n in range(len(far))]
    f = aecpost.AdaptiveFilter("nlms", 4)
    f.process(far, mic)
    mis = f.misalignment_db(path)
    assert mis < -60, mis

    cfg = aecpost.Config("scenario.duration_s = 4\nscenario.near_start_s = 1\n")
    cfg.set("scenario.far", "white")
    res = aecpost.run(cfg)
    assert math.isfinite(res.seg_snr_db)
    assert len(res.processed) == 4 * 16000
    print(res)
    print(res.csv, end="")

    try:
        cfg.set("aec.variant", "rls")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown variant accepted")
    print("smoke ok")


if __name__ == "__main__":
    main()
