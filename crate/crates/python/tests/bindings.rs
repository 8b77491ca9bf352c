use pyo3::prelude::*;
use pyo3::types::PyDict;

use graphpcg::graphpcg;

fn run(py: Python<'_>, code: &std::ffi::CStr) -> PyResult<()> {
    let globals = PyDict::new(py);
    globals.set_item("graphpcg", py.import("graphpcg")?)?;
    py.run(code, Some(&globals), None)
}

#[test]
fn module_exposes_the_core_operations() {
    pyo3::append_to_inittab!(graphpcg);
    Python::attach(|py| {
        run(
            py,
            cr#"
cs = graphpcg.ConstraintSet.builtin(5)
g, stats = graphpcg.ea_generate(cs, "U=2,V=2,W=1", 5, seed=1)
assert stats["success"] and cs.is_valid(g)
h, stats = graphpcg.random_search(cs, "U=2,V=2,W=1", 5, seed=1)
assert stats["success"] and cs.violations(h) == 0
env = graphpcg.Env(cs, 5, "graph-narrow")
assert env.action_count == 2
env.reset(None, 4)
_, _, _, info = env.step(0)
assert info["changed"] is False
"#,
        )
        .unwrap();

        let err = run(py, c"graphpcg.GraphState([0, 1], 2, [(5, 0)])").unwrap_err();
        assert!(err.is_instance_of::<pyo3::exceptions::PyValueError>(py));
    });
}
