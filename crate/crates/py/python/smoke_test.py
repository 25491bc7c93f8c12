"""Exercises the bindings end to end on the desk preset."""

import math
import tempfile
from pathlib import Path

import mvfusion_py as mv


def main():
    bundle = mv.Bundle.generate("desk", seed=3, frame=0)
    assert bundle.preset == "desk"
    assert bundle.num_sweeps > 1 and bundle.num_points > 0
    labels = bundle.labels()
    assert labels, "desk scenes always place actors"

    again = mv.Bundle.from_bytes(bundle.to_bytes())
    assert again.to_bytes() == bundle.to_bytes()
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "f.bundle"
        bundle.save(str(path))
        assert mv.Bundle.load(str(path)).labels() == labels

    frame = mv.prepare(bundle)
    h, w, c = frame.lidar_bev.shape
    assert len(frame.lidar_bev.data()) == h * w * c
    assert frame.rv_image.shape[2] == 4
    assert frame.map_raster.shape[2] == 7
    assert frame.map_raster.channel_pgm(0).startswith(b"P5")

    outputs = mv.forward(bundle, weight_seed=1)
    rows, cols, classes, per_class = outputs.shape
    assert classes == 3 and per_class == 3 + 4 * (outputs.horizon + 1)
    assert 0.0 < outputs.prob(0, 0, 0) < 1.0
    assert mv.forward(bundle, weight_seed=1).to_bytes() == outputs.to_bytes()
    mv.forward(bundle, use_camera=False)

    fitted, history = mv.fit(bundle, steps=300)
    assert history[-1] < history[0]
    dets = mv.decode(fitted, "desk")
    assert len(dets) == len(labels), (len(dets), len(labels))
    report = mv.evaluate([bundle], [fitted])
    assert "[vehicle 0-30m]" in report
    for line in report.splitlines():
        if line.startswith("ap = ") and "nan" not in line:
            assert 0.0 <= float(line[5:]) <= 1.0

    box = (0.0, 0.0, 4.0, 2.0, 0.3)
    assert abs(mv.rotated_iou(box, box) - 1.0) < 1e-12
    shifted = (4.0, 0.0, 4.0, 2.0, 0.0)
    assert mv.rotated_iou((0.0, 0.0, 4.0, 2.0, 0.0), shifted) == 0.0
    half = mv.rotated_iou((0.0, 0.0, 4.0, 2.0, 0.0), (2.0, 0.0, 4.0, 2.0, 0.0))
    assert math.isclose(half, 1.0 / 3.0, rel_tol=1e-12)

    try:
        mv.Bundle.generate("kitti")
    except ValueError:
        pass
    else:
        raise AssertionError("unknown preset accepted")
    try:
        mv.rotated_iou((0.0, 0.0, -1.0, 2.0, 0.0), box)
    except ValueError:
        pass
    else:
        raise AssertionError("negative length accepted")

    print(f"smoke test ok: {len(labels)} actors, {len(dets)} detections after fit")


if __name__ == "__main__":
    main()
