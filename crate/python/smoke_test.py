"""Smoke test for the propvib extension module.

Build and stage the module first:

    cargo build --release -p propvib-py --features extension-module
    cp target/release/libpropvib_py.so python/propvib.so
"""

import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import propvib  # noqa: E402

CAMPAIGN = """
seed = 2026
identify = ["i"]
baseline = "i"

[[case]]
label = "i"
motor = "off"
duration_s = 120.0
"""


def main():
    for f, z in [(2.48, 0.008), (13.37, 0.012), (24.10, 0.028)]:
        f2, z2 = propvib.pole_to_modal(propvib.pole_from_modal(f, z))
        assert abs(f2 - f) < 1e-12 * f and abs(z2 - z) < 1e-12, (f, z, f2, z2)

    shape = [1 + 0j, 0.5 - 0.2j, -0.3j]
    assert abs(propvib.mac(shape, [c * (2 - 1j) for c in shape]) - 1.0) < 1e-12

    rec = propvib.simulate("i", CAMPAIGN)
    assert rec["channels"] == ["A1", "A2", "A3", "A4", "A5", "A6", "A7"]
    assert len(rec["data"][0]) == round(120 * rec["sample_rate"])

    with tempfile.TemporaryDirectory() as out:
        outputs = propvib.run_campaign(out, campaign_toml=CAMPAIGN)
        assert len(outputs["records"]) == 1 and len(outputs["modesets"]) == 1
        modes = propvib.identify(outputs["records"][0])
        freqs = [m["frequency_hz"] for m in modes]
        assert len(modes) == 3, freqs
        for f, ref in zip(freqs, [2.504, 12.733, 24.959]):
            assert abs(f / ref - 1) < 0.01, freqs
        report = propvib.compare(outputs["modesets"][0], outputs["modesets"][0], out)
        with open(report) as fh:
            body = fh.read()
        assert body.count("1.000") == 3, body

    try:
        propvib.identify("/nonexistent/record.txt")
    except FileNotFoundError:
        pass
    else:
        raise AssertionError("missing record must raise FileNotFoundError")

    print("propvib", propvib.__version__, "smoke test passed:", ", ".join(f"{f:.3f} Hz" for f in freqs))
    return 0


if __name__ == "__main__":
    sys.exit(main())
