use pyo3::prelude::*;

#[pyfunction]
fn probe() -> PyResult<usize> {
    Ok(qheat_core::bath::probe_eig().len())
}

#[pymodule]
fn qheat(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(probe, m)?)?;
    Ok(())
}
