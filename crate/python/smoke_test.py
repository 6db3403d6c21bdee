"""Smoke test for the pyleotrace extension.

Loads the built library (target/release or target/debug), runs a short desk
scenario through trace generation, replay and comparison, and checks the
basic shapes of the results.
"""

import importlib.util
import pathlib
import shutil
import sys
import tempfile

ROOT = pathlib.Path(__file__).resolve().parents[1]


def load_module():
    for profile in ("release", "debug"):
        lib = ROOT / "target" / profile / "libpyleotrace.so"
        if lib.exists():
            break
    else:
        sys.exit("build first: cargo build --release -p leotrace-py")
    tmp = pathlib.Path(tempfile.mkdtemp())
    dest = tmp / "pyleotrace.so"
    shutil.copy(lib, dest)
    spec = importlib.util.spec_from_file_location("pyleotrace", dest)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    return mod


def main():
    lt = load_module()
    assert set(lt.Scenario.presets()) >= {"default", "desk", "handover", "dropout"}

    sc = lt.Scenario.preset("desk")
    sc.duration_s = 6.0
    sc.num_flows = 40
    sc.set_seed(3)
    sc.validate()
    again = lt.Scenario(sc.to_json())
    assert again.to_json() == sc.to_json()

    fwd, ret = lt.gen_traces(sc)
    assert len(fwd) == 600 and len(ret) == 600
    assert fwd.direction == "forward" and ret.direction == "return"
    back = lt.TraceFile.from_csv(fwd.to_csv())
    assert back.records() == fwd.records()

    sim = lt.simulate(sc, "ping")
    rep = lt.replay(sc, fwd, ret, "ping")
    assert len(sim["pings"]) == len(rep["pings"]) == 12
    cmp = lt.compare(sim["rtt"]["values"], rep["rtt"]["values"], sim["rtt"]["bin_s"], 1.0)
    assert cmp["lag_pearson"] > 0.9, cmp

    flat = lt.constant_trace(10_000_000, 20_000, 100, 0.0, 10, 7.0)
    out = lt.replay(sc, flat, flat, "ping")
    rtts = [p[2] for p in out["pings"] if p[2] is not None]
    assert rtts and all(abs(r - 0.04) < 0.001 for r in rtts), rtts

    try:
        lt.Scenario('{"endpoints": [0, 0]}')
    except lt.LeotraceError:
        pass
    else:
        raise AssertionError("invalid scenario accepted")

    print("pyleotrace smoke test passed:", sc, fwd, f"rtt lag-pearson {cmp['lag_pearson']:.4f}")


if __name__ == "__main__":
    main()
