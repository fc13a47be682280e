//! Python bindings. Structured results (plans, steps, reports, transcripts)
//! cross the boundary as JSON text.

use std::sync::Arc;

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyKeyError};
use pyo3::prelude::*;
use veriq_core::engine::{self, Query};
use veriq_core::psychometrics::transcript::{self, Clock};
use veriq_core::psychometrics::{self, Age, Composition, ItemPool, NormTable};
use veriq_core::{container, Category, Error, IngestConfig, KnowledgeModel, PipelineConfig, PruneConfig, Subtest, SvdOptions};

create_exception!(veriq, VeriqError, PyException);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::UnknownConcepts(words) => PyKeyError::new_err(words),
        other => VeriqError::new_err(other.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    VeriqError::new_err(e.to_string())
}

type Ranked = Vec<(String, f64)>;

/// A knowledge model: vocabulary, weighted matrix and truncated SVD.
#[pyclass(module = "veriq", frozen)]
struct Model {
    inner: Arc<KnowledgeModel>,
}

#[pymethods]
impl Model {
    #[staticmethod]
    #[pyo3(signature = (path, k = 500, min_strength = 1.0, min_degree = 2, seed = 0, language = Some("en".to_string())))]
    fn ingest(
        path: std::path::PathBuf,
        k: usize,
        min_strength: f64,
        min_degree: usize,
        seed: u64,
        language: Option<String>,
    ) -> PyResult<Self> {
        let file = std::fs::File::open(&path).map_err(|e| py_err(e.into()))?;
        let config = IngestConfig {
            language,
            prune: PruneConfig {
                min_strength,
                min_concept_degree: min_degree,
            },
            k,
            svd: SvdOptions {
                seed,
                ..SvdOptions::default()
            },
            ..IngestConfig::default()
        };
        let (model, _) = KnowledgeModel::ingest(std::io::BufReader::new(file), &config).map_err(py_err)?;
        Ok(Self { inner: Arc::new(model) })
    }

    #[staticmethod]
    fn load(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: Arc::new(container::load(path).map_err(py_err)?),
        })
    }

    fn save(&self, path: std::path::PathBuf) -> PyResult<()> {
        container::save(&self.inner, path).map_err(py_err)
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.spectral().k()
    }

    #[getter]
    fn n_concepts(&self) -> usize {
        self.inner.vocabulary().n_concepts()
    }

    #[getter]
    fn n_features(&self) -> usize {
        self.inner.vocabulary().n_features()
    }

    fn singular_values(&self) -> Vec<f64> {
        self.inner.spectral().singular_values().to_vec()
    }

    fn concepts(&self) -> Vec<String> {
        self.inner.vocabulary().concepts().to_vec()
    }

    fn __contains__(&self, concept: &str) -> bool {
        self.inner.vocabulary().contains(concept)
    }

    /// Features ranked for a uniform category of concepts.
    #[pyo3(signature = (concepts, relations = None, limit = Some(5)))]
    fn predict_features(&self, concepts: Vec<String>, relations: Option<Vec<String>>, limit: Option<usize>) -> PyResult<Ranked> {
        let allowed = relations.map(|r| r.into_iter().collect());
        let ranked = self
            .inner
            .predict_features(&Category::uniform(concepts), allowed.as_ref(), limit)
            .map_err(py_err)?;
        Ok(ranked.into_iter().map(|sf| (sf.feature.render(), sf.score)).collect())
    }

    #[pyo3(signature = (concept, count = 5))]
    fn neighbors(&self, concept: &str, count: usize) -> PyResult<Ranked> {
        self.inner.concept_neighbors(concept, count).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Model(concepts={}, features={}, k={})", self.n_concepts(), self.n_features(), self.k())
    }
}

/// Answers questions of every verbal subtest against one model.
#[pyclass(module = "veriq", frozen)]
struct Engine {
    inner: Arc<engine::Engine>,
}

impl Engine {
    fn ranked(&self, query: &Query) -> PyResult<Ranked> {
        let answer = self.inner.answer(query).map_err(py_err)?;
        Ok(answer.candidates().into_iter().map(|c| (c.text, c.score)).collect())
    }
}

#[pymethods]
impl Engine {
    #[new]
    #[pyo3(signature = (model, drop_subsumed = true))]
    fn new(model: &Model, drop_subsumed: bool) -> Self {
        let config = PipelineConfig {
            drop_subsumed,
            ..PipelineConfig::default()
        };
        Self {
            inner: Arc::new(engine::Engine::new((*model.inner).clone(), config)),
        }
    }

    /// An Information, Comprehension or Similarities-frame question.
    #[pyo3(signature = (question, subtest = "information"))]
    fn answer(&self, question: String, subtest: &str) -> PyResult<Ranked> {
        let subtest: Subtest = subtest.parse().map_err(py_err)?;
        self.ranked(&Query::Open { subtest, question })
    }

    fn vocabulary(&self, word: String) -> PyResult<Ranked> {
        self.ranked(&Query::Vocabulary(word))
    }

    fn word_reasoning(&self, clues: Vec<String>) -> PyResult<Ranked> {
        self.ranked(&Query::WordReasoning(clues))
    }

    fn similarities(&self, a: String, b: String) -> PyResult<Ranked> {
        self.ranked(&Query::Similarities(a, b))
    }

    /// The question plan (retained and removed concepts, relation filter)
    /// as JSON.
    #[pyo3(signature = (question, subtest = "information"))]
    fn plan(&self, question: String, subtest: &str) -> PyResult<String> {
        let subtest: Subtest = subtest.parse().map_err(py_err)?;
        let answer = self.inner.answer(&Query::Open { subtest, question }).map_err(py_err)?;
        serde_json::to_string(&answer.plan).map_err(json_err)
    }
}

fn parse_clock(clock: &str) -> PyResult<Clock> {
    match clock {
        "logical" => Ok(Clock::Logical),
        "system" => Ok(Clock::System),
        other => Err(VeriqError::new_err(format!("unknown clock {other:?}; use logical or system"))),
    }
}

/// A live examiner session over an item pool.
#[pyclass(module = "veriq")]
struct Administration {
    inner: engine::Administration,
}

#[pymethods]
impl Administration {
    #[new]
    #[pyo3(signature = (engine, pool, clock = "logical"))]
    fn new(engine: &Engine, pool: std::path::PathBuf, clock: &str) -> PyResult<Self> {
        let pool = ItemPool::load(pool).map_err(py_err)?;
        Ok(Self {
            inner: engine::Administration::new(engine.inner.clone(), Arc::new(pool), parse_clock(clock)?),
        })
    }

    #[getter]
    fn is_complete(&self) -> bool {
        self.inner.session().is_complete()
    }

    /// The presentation awaiting scores as JSON, or None when finished.
    fn current(&self) -> PyResult<Option<String>> {
        self.inner.current().map(|p| serde_json::to_string(p).map_err(json_err)).transpose()
    }

    /// Records one score per shown candidate; returns the next step as JSON.
    fn record_scores(&mut self, item_id: &str, scores: Vec<u8>) -> PyResult<String> {
        let step = self.inner.record_scores(item_id, &scores).map_err(py_err)?;
        serde_json::to_string(&step).map_err(json_err)
    }

    #[pyo3(signature = (norms, age, compositions = None))]
    fn report(&self, norms: std::path::PathBuf, age: &str, compositions: Option<Vec<String>>) -> PyResult<String> {
        let norms = NormTable::load(norms).map_err(py_err)?;
        let age: Age = age.parse().map_err(py_err)?;
        let compositions = match compositions {
            Some(names) => names
                .iter()
                .map(|c| c.parse::<Composition>())
                .collect::<veriq_core::Result<Vec<_>>>()
                .map_err(py_err)?,
            None => Composition::NAMED.to_vec(),
        };
        let report = self.inner.report(&norms, age, &compositions).map_err(py_err)?;
        report.to_json_pretty().map_err(py_err)
    }

    /// The transcript so far as JSON lines.
    fn transcript(&self) -> PyResult<String> {
        let mut buf = Vec::new();
        transcript::write_transcript(&mut buf, self.inner.transcript()).map_err(py_err)?;
        String::from_utf8(buf).map_err(|e| VeriqError::new_err(e.to_string()))
    }
}

/// Percentile of a VIQ under the normal model (mean 100, sd 15).
#[pyfunction]
fn viq_percentile(viq: f64) -> f64 {
    psychometrics::viq_percentile(viq)
}

#[pymodule]
fn veriq(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("VeriqError", m.py().get_type::<VeriqError>())?;
    m.add_class::<Model>()?;
    m.add_class::<Engine>()?;
    m.add_class::<Administration>()?;
    m.add_function(wrap_pyfunction!(viq_percentile, m)?)?;
    Ok(())
}
