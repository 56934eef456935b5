"""Smoke test for the cvqkd extension module.

Build first:  pip install --no-build-isolation -e crates/py
"""

import cvqkd

FIXTURE = """
channel.distance_km = 43
channel.excess_noise = 0.1
protocol.chi = 0.8379
protocol.gain = 1.1
protocol.cutoff_multiple = 3
security.n = 1e12
"""


def main():
    r = cvqkd.key_rate(FIXTURE)
    assert abs(r["cutoff"] - 4.2574) < 1e-3, r
    assert 3.0e-6 < r["k_fs"] < 4.5e-6, r
    assert r["regime"] == "gaussian"

    r34 = cvqkd.key_rate(FIXTURE, ["protocol.cutoff=3.4"])
    assert r34["k_fs"] > r["k_fs"]

    ps = cvqkd.postselect(5.713130705762508, 1.664396988971154, 2.089860480403857, 1.1, cutoff=3.4)
    assert abs(ps["p_s"] - 0.17488281752380577) < 1e-9, ps

    csv = cvqkd.sweep(FIXTURE, "kappa", 2.0, 4.0, 3, baseline=True)
    lines = csv.splitlines()
    assert lines[0] == "# schema_version=1"
    assert len(lines) == 2 + 6

    mc = cvqkd.simulate(FIXTURE, 200_000, 3)
    assert abs(mc["p_s"] - r["p_s"]) < 4 * mc["p_s_se"], (mc, r["p_s"])

    try:
        cvqkd.key_rate(FIXTURE, ["protocol.colour=red"])
    except cvqkd.ConfigError:
        pass
    else:
        raise AssertionError("unknown key accepted")

    try:
        cvqkd.max_distance(FIXTURE, ["channel.excess_noise=0.6"])
    except cvqkd.NotSecureError:
        pass
    else:
        raise AssertionError("insecure channel reported a distance")

    print("smoke test passed: K_fs = %.4e, P_s = %.5f" % (r["k_fs"], r["p_s"]))


if __name__ == "__main__":
    main()
