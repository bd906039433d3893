"""Smoke test for the firecube Python module: a tiny synthetic run, a
prediction shard written from Python, and evaluation of both sources."""

import math
import os
import sys
import tempfile

import firecube


def main():
    grid = firecube.GeoGrid(6.0)
    assert (grid.n_lat, grid.n_lon) == (30, 60)
    axis = firecube.TimeAxis(2001, 2006)
    assert len(axis) == 46 * 6
    assert axis.date_to_step("2001-01-09") == 1

    with tempfile.TemporaryDirectory() as tmp:
        store = os.path.join(tmp, "cube.zarr")
        firecube.generate_world(store, {"resolution_deg": 6.0, "patch_px": 16})
        cube = firecube.Cube.open(store)
        cube.validate()
        assert "gwis_ba" in cube.variables
        assert len(cube.read_field("ndvi", 10)) == 30 * 60

        out = os.path.join(tmp, "ds")
        firecube.extract(store, out, leads=[1])
        lead = os.path.join(out, "lead_1")
        clim = os.path.join(tmp, "clim.zarr")
        firecube.fit_climatology(store, [2002, 2003, 2004], clim)

        preds_dir = os.path.join(tmp, "preds")
        os.makedirs(preds_dir)
        for name in sorted(os.listdir(lead)):
            if not name.endswith(".fcs"):
                continue
            batch = firecube.SampleBatch.read(os.path.join(lead, name))
            # Stand-in model: the first input channel through a sigmoid.
            plane = batch.patch * batch.patch
            step = batch.channels * plane
            preds = []
            for i in range(len(batch)):
                x = batch.inputs[i * step : i * step + plane]
                preds.extend(1.0 / (1.0 + math.exp(-v)) if v == v else 0.5 for v in x)
            path = os.path.join(preds_dir, name)
            firecube.PredictionBatch(batch.patch, preds, batch.meta).write(path)
            firecube.validate_shard(path, "predictions")

        model = firecube.evaluate(lead, predictions=preds_dir)
        base = firecube.evaluate(lead, climatology=clim)
        assert model["metrics"]["n_pixels"] == base["metrics"]["n_pixels"] > 0
        print("lead 1 test auprc: python %.3f climatology %.3f"
              % (model["metrics"]["auprc"], base["metrics"]["auprc"]))

    acc = firecube.MetricAccumulator(1024)
    acc.update([0.1, 0.8, 0.3, 0.9], [0, 1, 0, 1])
    assert acc.finalize()["auroc"] == 1.0

    try:
        firecube.Cube.open("/nonexistent/cube.zarr")
    except firecube.FirecubeError as e:
        assert e.kind == "io"
    else:
        raise AssertionError("opening a missing store must fail")

    print("smoke ok")
    return 0


if __name__ == "__main__":
    sys.exit(main())
