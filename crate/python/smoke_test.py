"""Smoke test for the fiberlink extension module.

Build and run from the repository root:

    cargo build --release -p fiberlink-py
    cp target/release/libfiberlink.so python/fiberlink.so
    python3 python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import fiberlink  # noqa: E402

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def close(a, b, rel):
    return abs(a / b - 1.0) <= rel


def main():
    s = fiberlink.power_law({0: 2e-30}, 1 << 14, seed=5)
    taus, values, counts = fiberlink.adev(s, [1.0, 10.0, 100.0])
    assert len(taus) == 3 and all(c > 0 for c in counts)
    assert close(values[0], 1e-15, 0.05), values

    scaled = fiberlink.adev(s.scaled(4.0), [1.0])[1][0]
    assert scaled == 4.0 * values[0]

    _, mvals, _ = fiberlink.mdev(s, [1.0, 2.0])
    assert mvals[0] > 0

    assert close(fiberlink.slip_step(), 5.144e-15, 1e-3)
    assert close(fiberlink.rf_reference_contribution(55e6, 3e-13, 194.4e12), 8.49e-20, 1e-3)
    assert close(fiberlink.thermal_limit(1.0, 0.5, 43200.0), 4.25e-19, 0.01)
    assert fiberlink.uptime_product([0.5] * 6) == 0.015625

    bias, quad, total = fiberlink.combine_budget(
        [("link", -4.8e-20, 9e-20), ("short", 4.2e-21, 8e-22), ("allowance", 0.0, 1e-19)]
    )
    assert total == 2e-19 and close(quad, 1.3454e-19, 1e-3)

    floor = fiberlink.residual_floor(2.3e-16, 5.0, [1.0])[0]
    assert 1e-23 <= floor <= 9e-23

    remote, e2e = fiberlink.simulate(os.path.join(ROOT, "scenarios", "empty-noise.toml"))
    assert len(e2e) == 3600 and all(v == 0.0 for v in e2e.y)

    keep, reasons = fiberlink.select(fiberlink.power_law({2: 1.5e-31}, 20000, seed=2))
    assert len(keep) == 20000 and sum(keep) > 0.85 * len(keep)

    try:
        fiberlink.uptime_product([1.5])
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")

    print("fiberlink smoke test ok:", repr(s), "adev(1 s) = %.3e" % values[0])


if __name__ == "__main__":
    main()
