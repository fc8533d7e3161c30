"""End-to-end smoke test of the Python bindings.

Uses an installed `motionguard` module when there is one (`maturin develop`
in crates/python), else the library built by
`cargo build --release -p motionguard-py --features extension-module`.
"""

import importlib.machinery
import importlib.util
import math
import pathlib
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parent.parent


def load_module():
    try:
        import motionguard

        return motionguard
    except ImportError:
        pass
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libmotionguard_py.so"
        if lib.exists():
            loader = importlib.machinery.ExtensionFileLoader("motionguard", str(lib))
            spec = importlib.util.spec_from_file_location("motionguard", lib, loader=loader)
            module = importlib.util.module_from_spec(spec)
            loader.exec_module(module)
            sys.modules["motionguard"] = module
            return module
    sys.exit("motionguard extension not found; build crates/python first")


def main():
    mg = load_module()
    print("motionguard", mg.__version__)

    band = mg.FirFilter("band-pass", [0.5, 15.0])
    assert len(band) == 1001
    assert abs(band.gain_db(5.0)) <= 1.0 and band.gain_db(50.0) <= -40.0

    featurizer = mg.Featurizer()
    rows, devices, motions = [], [], []
    for seed in range(4):
        for link in ("on", "off"):
            for motion in mg.MOTIONS:
                trace = mg.synth_trace(link, motion, seed, duration_s=10.0)
                assert len(trace) == 5000
                for seg in mg.segments(trace):
                    profile = featurizer.profile(seg, link, motion)
                    assert len(profile) == mg.PROFILE_DIM
                    assert all(math.isfinite(v) for v in profile)
                    rows.append(profile)
                    devices.append(link)
                    motions.append(motion)
    first = mg.segments(trace)[0]
    m, pc = featurizer.spectro_summary(first)
    assert len(m) == 4 and abs(sum(pc) - 1.0) < 1e-9
    assert len(mg.stft(first)) == 4
    print(f"{len(rows)} profiles")

    base, history = mg.train(rows, devices, motions, mode="baseline", epochs=3, seed=1)
    adv0, _ = mg.train(rows, devices, motions, mode="adversarial", lambda_=0.0, epochs=3, seed=1)
    assert base.to_bytes() == adv0.to_bytes(), "lambda = 0 must reproduce the baseline"
    assert len(history) == 3
    print(base)

    scores = base.predict(rows)
    assert all(0.0 <= s <= 1.0 for s in scores)
    area = mg.auroc(scores, devices)
    assert 0.0 <= area <= 1.0
    report = base.evaluate(rows, devices, motions)
    assert abs(report["auroc"] - area) < 1e-12
    c = mg.confusion(scores, devices, 0.5)
    assert c["counts"]["tp"] + c["counts"]["fn"] + c["counts"]["fp"] + c["counts"]["tn"] == len(rows)
    print(f"training-set AUROC {area:.3f}, accuracy {report['accuracy']:.3f}")

    with tempfile.TemporaryDirectory() as tmp:
        path = pathlib.Path(tmp) / "model.ckpt"
        base.save(path)
        again = mg.Model.load(path)
        assert again.predict(rows[:5]) == scores[:5]
        try:
            mg.Model.load(pathlib.Path(tmp) / "missing.ckpt")
        except FileNotFoundError:
            pass
        else:
            raise AssertionError("missing checkpoint should raise")

    try:
        mg.synth_trace("on", "flying", 0)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown motion should raise")

    theory = mg.theory_check(instances=4, seed=3)
    assert theory["predictor_optimum"]["passed"] and theory["extractor_bound"]["passed"]
    print("theory: predictor/discriminator optima and extractor bound certified")
    print("ok")


if __name__ == "__main__":
    main()
