"""Smoke test for the slitflight Python bindings.

Build and install the extension first:

    cd crates/py && maturin build --release -o dist && pip install dist/slitflight-*.whl

then run `python3 python/smoke_test.py`.
"""

import math

import slitflight

SMALL = """
base=fig2
name=small
grid.nx=128
grid.nz=256
grid.x_min=-8
grid.x_max=8
grid.z_min=-6
grid.z_max=6
absorber.width_x=1.5
absorber.width_z=1.5
solver.dt=0.001
solver.t_max=0.5
solver.snapshot_stride=5
detection.d=2
ensemble.n_particles=300
ensemble.seed=4
"""


def main():
    assert "fig2" in slitflight.presets()
    fig2 = slitflight.Scenario.preset("fig2")
    assert fig2.detection_d == 10.0
    assert slitflight.Scenario.from_kv(fig2.to_kv()).to_kv() == fig2.to_kv()

    try:
        slitflight.Scenario.preset("nope")
    except ValueError as err:
        assert "unknown preset" in str(err)
    else:
        raise AssertionError("unknown preset accepted")

    # The barrier is mirror symmetric with both slits open.
    for x in (0.3, 1.0, 1.7):
        assert slitflight.potential(fig2, x, 0.0, 0.0) == slitflight.potential(fig2, -x, 0.0, 0.0)

    pts = slitflight.sample_initial(fig2, 2000, 11)
    assert pts == slitflight.sample_initial(fig2, 2000, 11)
    mean_z = sum(z for _, z in pts) / len(pts)
    assert abs(mean_z + 2.0) < 0.05, mean_z

    small = slitflight.Scenario.from_kv(SMALL)
    result = slitflight.simulate(small, bins_x=16, bins_t=10)
    assert result.n == 300 == len(result.records)
    assert result.detected + result.backscattered + result.node_abort == result.n
    assert result.left + result.right <= result.detected
    assert result.histogram.total() <= result.detected
    assert abs(result.norm + result.absorbed - 1.0) < 1e-6
    again = slitflight.simulate(small, bins_x=16, bins_t=10)
    assert again.records == result.records

    profile = slitflight.flux(small, bins_x=16, bins_t=10)
    assert len(profile.values) == 16 and len(profile.values[0]) == 10
    total = profile.total()
    assert 0.0 <= total <= 1.0
    assert abs(result.transmission() - total) < 4 * math.sqrt(total * (1 - total) / 300) + 0.01

    print(
        f"ok: transmission {result.transmission():.3f}, flux {total:.3f}, "
        f"left {result.left}, right {result.right}"
    )


if __name__ == "__main__":
    main()
