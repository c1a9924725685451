"""Smoke test for the copscan Python extension.

Build and install the extension first, for example:

    pip install maturin
    (cd crates/py && maturin build --release)
    pip install target/wheels/copscan-*.whl

then run `python python/smoke_test.py`.
"""

import json
import math
import tempfile
from pathlib import Path

import copscan


def check_generate_and_round_trip():
    tube = copscan.Tube.generate("ellipsoid", dim=2, params={"lambda": [1.0, 2.0, 3.0, 1.0]})
    assert tube.n == 4 and tube.dim == 2 and tube.family == "ellipsoid"
    doc = tube.to_dict()
    assert doc["params"]["lambda"] == [1.0, 2.0, 3.0, 1.0]
    again = copscan.Tube.from_json(tube.to_json())
    assert again.to_dict() == doc
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "spec.json"
        path.write_text(tube.to_json())
        assert copscan.Tube.load(str(path)).to_dict() == doc


def check_support_values():
    tube = copscan.Tube.generate("cylinder", dim=1, params={"semi_axes": [1.0, 2.0]})
    # Support of an ellipse with semi-axes (1, 2) in direction (0, 1).
    assert abs(tube.support_at(0.0, [0.0, 1.0]) - 2.0) < 1e-12
    field = tube.section(0.0, L=64)
    assert field.dim == 1 and field.L == 64
    assert abs(field.eval([0.0, 1.0]) - 2.0) < 1e-10
    assert field.spectral_tail() < 1e-10
    # The sup norm is taken over the quadrature nodes.
    assert abs(field.sup_norm() - 2.0) < 1e-3
    rebuilt = copscan.SupportField(1, 64, field.coeffs)
    assert rebuilt.to_dict() == field.to_dict()


def check_classification():
    cases = {
        "cylinder": {"kind": "CylinderOverCentralOvaloid"},
        "ellipsoid": {"kind": "Quadric", "family": "ellipsoid"},
        "cone": {"kind": "Quadric", "family": "cone"},
        "twisted": {"kind": "NotCop"},
    }
    for name, verdict in cases.items():
        report = copscan.classify(copscan.Tube.generate(name, dim=1), L=24, grid=17, seed=3)
        assert report["verdict"] == verdict, (name, report["verdict"])
        assert report["config"]["seed"] == 3
    twisted = copscan.classify(copscan.Tube.generate("twisted", dim=1), L=24, grid=17)
    assert twisted["witness"]["kind"] == "Obstruction"


def check_transform_and_thresholds():
    tube = copscan.Tube.generate("paraboloid", dim=2).transformed(
        {
            "matrix": [[1.2, 0.3, 0.0], [0.0, 0.9, 0.1], [0.0, 0.0, 1.1]],
            "shear": [0.2, -0.1, 0.0],
            "offset": [0.5, 0.0, -0.3],
            "z_scale": 1.5,
            "z_offset": 0.2,
        }
    )
    report = copscan.classify(tube, L=24, grid=17, thresholds={"pde": 1e-4})
    assert report["verdict"] == {"kind": "Quadric", "family": "paraboloid"}
    assert report["config"]["thresholds"]["pde"] == 1e-4
    try:
        copscan.classify(tube, thresholds={"bogus": 1.0})
    except copscan.CopscanError as e:
        assert "bogus" in str(e)
    else:
        raise AssertionError("unknown threshold accepted")


def check_obstruction_and_slices():
    cyl = copscan.Tube.generate("cylinder", dim=2)
    summary = copscan.obstruction(cyl, L=16, grid=9, sweep=8)
    assert summary["n"] == 4 and len(summary["taus"]) == 8
    assert summary["max_abs_f"] < 1e-8
    twisted = copscan.obstruction(copscan.Tube.generate("twisted", dim=2), L=16, grid=9)
    assert twisted["max_abs_f"] > 0.1
    section = copscan.slice(cyl, [1.0, 0.0, 0.0], 0.0, eps=0.1, L=16)
    assert section["relative_deviation"] < 1e-8
    assert math.isclose(section["plane"]["eps"], 0.1)
    json.dumps(section)


def check_ellipsoid_criterion():
    tube = copscan.Tube.generate("ellipsoid", dim=2)
    report = copscan.ellipsoid_test(tube.section(0.0, L=64))
    assert report["accepted"]
    assert all(abs(a - b) < 1e-6 for a, b in zip(report["semi_axes"], [1.0, 1.2, 1.4]))
    odd = copscan.Tube.generate("cylinder", dim=2, params={"even_bump": 0.3})
    assert not copscan.ellipsoid_test(odd.section(0.0, L=32))["accepted"]


def check_errors():
    for bad in [
        lambda: copscan.Tube.generate("torus"),
        lambda: copscan.Tube.generate("ellipsoid", params={"lambda": [1.0, -1.0, 1.0, 1.0]}),
        lambda: copscan.Tube.from_json('{"dim": 2}'),
        lambda: copscan.classify(copscan.Tube.generate("cone"), grid=3),
        lambda: copscan.slice(copscan.Tube.generate("cone"), [1.0, 0.0], -0.5),
    ]:
        try:
            bad()
        except copscan.CopscanError:
            pass
        else:
            raise AssertionError("expected CopscanError")


def main():
    checks = [
        check_generate_and_round_trip,
        check_support_values,
        check_classification,
        check_transform_and_thresholds,
        check_obstruction_and_slices,
        check_ellipsoid_criterion,
        check_errors,
    ]
    for check in checks:
        check()
        print(f"ok {check.__name__}")
    print(f"{len(checks)} checks passed")


if __name__ == "__main__":
    main()
