use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::types::PyModule;

fn with_module(code: &str) {
    Python::initialize();
    Python::attach(|py| {
        let m = PyModule::new(py, "ssrgan").unwrap();
        ssrgan_py::ssrgan_module(&m).unwrap();
        py.import("sys")
            .unwrap()
            .getattr("modules")
            .unwrap()
            .set_item("ssrgan", &m)
            .unwrap();
        let code = CString::new(code).unwrap();
        if let Err(e) = py.run(&code, None, None) {
            e.print(py);
            panic!("python code failed");
        }
    });
}

#[test]
fn recording_and_metrics_round_trip() {
    with_module(
        r#"
import math, ssrgan
x = [math.sin(2 * math.pi * 10 * t / 250) for t in range(1000)]
before = ssrgan.Recording(250.0, [x])
after = ssrgan.Recording(250.0, [[v / 2 for v in x]])
assert len(before) == 1000 and before.n_channels == 1
assert abs(ssrgan.inps_db(before, after) - 20 * math.log10(2)) < 1e-6
assert abs(ssrgan.ptpr(before, after) - 2.0) < 1e-9
r = ssrgan.metrics(before, after, clean=before)
assert r["n"] == 1 and abs(r["clean_correlation"] - 1.0) < 1e-12
"#,
    );
}

#[test]
fn model_shapes_and_errors() {
    with_module(
        r#"
import ssrgan
m = ssrgan.Model()
w = [[0.01 * ((i * 7) % 13 - 6) for i in range(250)] for _ in range(3)]
assert len(m.forward(w)) == 3 and len(m.forward(w)[0]) == 250
assert len(m.reverse(w)[0]) == 250
phi1, phi2 = m.features(w, "a"), m.features(w, "b")
assert (len(phi1[0]), len(phi1[0][0])) == (len(phi2[0]), len(phi2[0][0]))
clone = ssrgan.Model.from_bytes(m.to_bytes())
assert clone.forward(w) == m.forward(w)
try:
    m.forward([[0.0] * 100])
except ValueError:
    pass
else:
    raise AssertionError("expected ValueError for a short window")
assert ssrgan.mmd([[0.0], [1.0]], [[0.0], [1.0]]) == 0.0
"#,
    );
}
