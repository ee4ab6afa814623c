use pyo3::prelude::*;

#[pymodule]
fn spectra_shape_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
