use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::types::PyDict;

/// Runs `code` with the module bound to `firecube`.
fn run(code: &str, locals: impl FnOnce(Python<'_>, &Bound<'_, PyDict>)) {
    Python::attach(|py| {
        let module = pyo3::wrap_pymodule!(firecube::firecube)(py);
        let globals = PyDict::new(py);
        globals.set_item("firecube", module).unwrap();
        locals(py, &globals);
        let code = CString::new(code).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            e.print(py);
            panic!("python snippet failed");
        }
    });
}

#[test]
fn grid_and_axis() {
    run(
        r#"
g = firecube.GeoGrid(30.0)
assert (g.n_lat, g.n_lon) == (6, 12)
assert g.latlon_to_index(89.9, -179.9) == (0, 0)
a = firecube.TimeAxis(2003, 2003)
assert len(a) == 46
assert a.period(45) == ("2003-12-27", "2003-12-31")
assert a.date_to_step("2003-12-31") == 45
"#,
        |_, _| {},
    );
}

#[test]
fn metrics_match_exact_forms() {
    run(
        r#"
scores = [0.05, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95]
labels = [0, 0, 1, 0, 1, 1, 1]
acc = firecube.MetricAccumulator()
acc.update(scores, labels)
other = firecube.MetricAccumulator()
other.update([0.4], [1], [0])
acc.merge(other)
m = acc.finalize()
assert m["n_pixels"] == 7 and m["n_positive"] == 4
assert abs(m["auroc"] - firecube.auroc_exact(scores, [bool(l) for l in labels])) < 1e-12
assert abs(m["auroc"] - 11 / 12) < 1e-12
"#,
        |_, _| {},
    );
}

#[test]
fn errors_carry_their_kind() {
    run(
        r#"
for call, kind in [
    (lambda: firecube.GeoGrid(7.0), "domain"),
    (lambda: firecube.PredictionBatch(2, [0.5] * 3, [(0, 1, 0, 0)]), "shape"),
    (lambda: firecube.Cube.open(missing), "io"),
]:
    try:
        call()
    except firecube.FirecubeError as e:
        assert e.kind == kind, (e.kind, kind, str(e))
    else:
        raise AssertionError(kind)
"#,
        |_, g| {
            let dir = tempfile::tempdir().unwrap();
            g.set_item("missing", dir.path().join("absent.zarr")).unwrap();
        },
    );
}

#[test]
fn prediction_shards_round_trip_and_validate() {
    let dir = tempfile::tempdir().unwrap();
    run(
        r#"
import os
p = os.path.join(tmp, "val_00000.fcs")
b = firecube.PredictionBatch(2, [0.0, 0.25, 0.5, 1.0, 0.1, 0.2, 0.3, 0.4], [(3, 1, 0, 0), (3, 1, 0, 2)])
b.write(p)
r = firecube.PredictionBatch.read(p)
assert len(r) == 2 and r.patch == 2
assert r.meta == [(3, 1, 0, 0), (3, 1, 0, 2)]
assert r.preds == [0.0, 0.25, 0.5, 1.0, 0.10000000149011612, 0.20000000298023224, 0.30000001192092896, 0.4000000059604645]
h = firecube.validate_shard(p, "predictions")
assert [a["name"] for a in h["arrays"]] == ["preds", "meta"]
try:
    firecube.validate_shard(p, "dataset")
except firecube.FirecubeError as e:
    assert e.kind == "format"
else:
    raise AssertionError("prediction shard accepted as dataset shard")
"#,
        |_, g| g.set_item("tmp", dir.path()).unwrap(),
    );
}
