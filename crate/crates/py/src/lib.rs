//! Python module `neurolgp`: genotype decoding, quality metrics and
//! experiment runs. Structured results cross the boundary as JSON strings.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use neurolgp::decoder::{decode, NetworkConfig, NetworkGraph, Shape};
use neurolgp::engine::{self, RunConfig};
use neurolgp::genotype::{mark_effective, repair, Genotype, GenotypeConfig};
use neurolgp::{metrics, rundir, Error};

fn value_error(e: Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse(text: &str, do_repair: bool) -> PyResult<Genotype> {
    let cfg = GenotypeConfig {
        min_len: 1,
        max_len: usize::MAX,
        ..GenotypeConfig::default()
    };
    let g = Genotype::parse(text, &cfg).map_err(value_error)?;
    Ok(if do_repair { repair(g) } else { g })
}

fn graph(text: &str, input: &str, classes: usize) -> PyResult<NetworkGraph> {
    let shape: Shape = input.parse().map_err(PyValueError::new_err)?;
    let cfg = NetworkConfig {
        num_classes: classes,
        ..NetworkConfig::default()
    };
    let g = decode(&parse(text, true)?, shape, &cfg).map_err(value_error)?;
    g.validate(cfg.max_channels).map_err(value_error)?;
    Ok(g)
}

/// Execution positions of the effective instructions.
#[pyfunction]
#[pyo3(signature = (genotype, repair = false))]
fn effective(genotype: &str, repair: bool) -> PyResult<Vec<usize>> {
    let g = parse(genotype, repair)?;
    Ok(mark_effective(&g).map_err(value_error)?.effective)
}

/// Graph as JSON: nodes (id, op, params, shape) and edges.
#[pyfunction]
#[pyo3(signature = (genotype, input = "16x16x1", classes = 2))]
fn decode_json(genotype: &str, input: &str, classes: usize) -> PyResult<String> {
    let g = graph(genotype, input, classes)?;
    Ok(g.to_json().to_string())
}

#[pyfunction]
#[pyo3(signature = (genotype, input = "16x16x1", classes = 2))]
fn decode_dot(genotype: &str, input: &str, classes: usize) -> PyResult<String> {
    Ok(graph(genotype, input, classes)?.to_dot())
}

/// `(layer_count, concat_count, concat_fraction)`.
#[pyfunction]
#[pyo3(signature = (genotype, input = "16x16x1"))]
fn graph_stats(genotype: &str, input: &str) -> PyResult<(usize, usize, f64)> {
    let s = graph(genotype, input, 2)?.stats();
    Ok((s.layer_count, s.concat_count, s.concat_fraction))
}

#[pyfunction]
fn kendall_tau(pred: Vec<f64>, actual: Vec<f64>) -> PyResult<f64> {
    metrics::kendall_tau(&pred, &actual).map_err(value_error)
}

#[pyfunction]
fn mse(pred: Vec<f64>, actual: Vec<f64>) -> PyResult<f64> {
    metrics::mse(&pred, &actual).map_err(value_error)
}

#[pyfunction]
fn r_squared(pred: Vec<f64>, actual: Vec<f64>) -> PyResult<f64> {
    metrics::r_squared(&pred, &actual).map_err(value_error)
}

#[pyfunction]
fn expected_evolution_budget(config_json: &str) -> PyResult<usize> {
    let cfg = RunConfig::from_json(config_json).map_err(value_error)?;
    cfg.validate().map_err(value_error)?;
    Ok(engine::expected_evolution_budget(&cfg))
}

/// Runs an experiment and returns its summary JSON; with `out` the full
/// run directory is written too.
#[pyfunction]
#[pyo3(signature = (config_json, workers = 1, out = None))]
fn run_experiment(py: Python<'_>, config_json: &str, workers: usize, out: Option<String>) -> PyResult<String> {
    let cfg = RunConfig::from_json(config_json).map_err(value_error)?;
    let evaluator = cfg.build_evaluator().map_err(value_error)?;
    py.detach(|| {
        let output = engine::run_experiment(&cfg, evaluator.as_ref(), workers)?;
        if let Some(dir) = &out {
            rundir::write_run_dir(std::path::Path::new(dir), &output)?;
        }
        rundir::summary_json(&output.result)
    })
    .map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule(name = "neurolgp")]
fn neurolgp_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(effective, m)?)?;
    m.add_function(wrap_pyfunction!(decode_json, m)?)?;
    m.add_function(wrap_pyfunction!(decode_dot, m)?)?;
    m.add_function(wrap_pyfunction!(graph_stats, m)?)?;
    m.add_function(wrap_pyfunction!(kendall_tau, m)?)?;
    m.add_function(wrap_pyfunction!(mse, m)?)?;
    m.add_function(wrap_pyfunction!(r_squared, m)?)?;
    m.add_function(wrap_pyfunction!(expected_evolution_budget, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn effective_code_without_python() {
        let g = "CONV_32_3x3 r1 <- r0\nMAXPOOL_3x3 r2 <- r0\nCONV_32_3x3 r0 <- r1\n";
        assert_eq!(effective(g, false).unwrap(), vec![0, 2]);
        assert!(effective("CONV_32_3x3 r1 <- r0\n", false).is_err());
        assert_eq!(effective("CONV_32_3x3 r1 <- r0\n", true).unwrap(), vec![0]);
    }

    #[test]
    fn stats_and_budget() {
        let g = "CONV_32_3x3 r1 <- r0\nCONCAT r0 <- r1, r0\n";
        assert_eq!(graph_stats(g, "8x8x1").unwrap(), (2, 1, 0.5));
        let cfg = r#"{"mode": "surrogate", "pop_size": 10, "generations": 3, "e_full": 30, "e_partial": 10}"#;
        assert_eq!(expected_evolution_budget(cfg).unwrap(), 660);
    }
}
