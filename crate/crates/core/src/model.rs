//! The loaded knowledge model and the spectral queries served from it.

use std::collections::BTreeSet;
use std::io::BufRead;

use crate::error::{Error, Result};
use crate::kb::{self, Feature, ParseReport, PruneConfig, Vocabulary, Weighting};
use crate::sparse::CsrMatrix;
use crate::spectral::{self, Category, ScoredFeature, SpectralModel, SvdOptions};

/// Relation names an answer may use; `None` or an empty set means any.
pub type RelationSet = BTreeSet<String>;

/// Vocabulary, raw matrix and its truncated SVD. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeModel {
    pub(crate) vocabulary: Vocabulary,
    pub(crate) matrix: CsrMatrix,
    pub(crate) spectral: SpectralModel,
    pub(crate) weighting: Weighting,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestConfig {
    pub language: Option<String>,
    pub prune: PruneConfig,
    pub weighting: Weighting,
    pub k: usize,
    pub svd: SvdOptions,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            language: Some("en".to_string()),
            prune: PruneConfig::default(),
            weighting: Weighting::default(),
            k: spectral::DEFAULT_RANK,
            svd: SvdOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct IngestSummary {
    pub parse: ParseReport,
    pub n_concepts: usize,
    pub n_features: usize,
    pub nnz: usize,
    pub requested_k: usize,
}

/// Singular values at or below this fraction of the largest are treated as
/// numerically zero when the requested rank exceeds the matrix rank.
pub const RANK_TOLERANCE: f64 = 1e-10;

impl KnowledgeModel {
    pub fn new(vocabulary: Vocabulary, matrix: CsrMatrix, spectral: SpectralModel, weighting: Weighting) -> Result<Self> {
        if matrix.rows() != vocabulary.n_concepts()
            || matrix.cols() != vocabulary.n_features()
            || spectral.n_rows() != matrix.rows()
            || spectral.n_cols() != matrix.cols()
        {
            return Err(Error::Format("vocabulary, matrix and factors disagree on shape".into()));
        }
        Ok(Self {
            vocabulary,
            matrix,
            spectral,
            weighting,
        })
    }

    /// parse -> prune -> build matrix -> truncated SVD. The rank is clamped
    /// to the matrix's smaller dimension and then to its numerical rank.
    pub fn ingest<R: BufRead>(dump: R, config: &IngestConfig) -> Result<(Self, IngestSummary)> {
        let parse = kb::parse_assertions(dump, config.language.as_deref())?;
        let vocabulary = kb::prune_and_index(&parse.assertions, config.prune)?;
        let retained: Vec<_> = parse.assertions.iter().filter(|a| vocabulary.retains(a)).cloned().collect();
        let matrix = kb::build_matrix(&retained, &vocabulary, config.weighting)?.matrix;
        let k = config.k.min(matrix.rows().min(matrix.cols()));
        if k == 0 {
            return Err(Error::Argument("rank k must be at least 1".into()));
        }
        let spectral = spectral::truncated_svd(&matrix, k, config.svd)?.trim_to_numerical_rank(RANK_TOLERANCE);
        let summary = IngestSummary {
            n_concepts: vocabulary.n_concepts(),
            n_features: vocabulary.n_features(),
            nnz: matrix.nnz(),
            requested_k: config.k,
            parse,
        };
        Ok((Self::new(vocabulary, matrix, spectral, config.weighting)?, summary))
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn spectral(&self) -> &SpectralModel {
        &self.spectral
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    /// Same vocabulary and matrix, different factors (e.g. another rank).
    pub fn with_spectral(&self, spectral: SpectralModel) -> Result<Self> {
        Self::new(self.vocabulary.clone(), self.matrix.clone(), spectral, self.weighting)
    }

    fn concept_id(&self, concept: &str) -> Result<usize> {
        self.vocabulary
            .concept_id(concept)
            .ok_or_else(|| Error::UnknownConcepts(vec![concept.to_string()]))
    }

    /// Scores every feature against the L2-normalized category vector and
    /// returns the best `limit` (all when `None`) under the answer ordering.
    /// Concepts missing from the vocabulary are ignored unless all are.
    pub fn predict_features(
        &self,
        category: &Category,
        allowed: Option<&RelationSet>,
        limit: Option<usize>,
    ) -> Result<Vec<ScoredFeature>> {
        let mut weights = Vec::new();
        let mut misses = Vec::new();
        for (concept, w) in category.weights() {
            match self.vocabulary.concept_id(concept) {
                Some(id) => weights.push((id, w)),
                None => misses.push(concept.to_string()),
            }
        }
        if weights.is_empty() {
            return Err(Error::UnknownConcepts(misses));
        }
        if !misses.is_empty() {
            log::debug!("ignoring unknown category concepts {misses:?}");
        }
        let norm = weights.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm > 0.0 {
            weights.iter_mut().for_each(|(_, w)| *w /= norm);
        }
        let scores = self.spectral.project(&weights);
        let allowed = allowed.filter(|set| !set.is_empty());
        let mut ranked: Vec<ScoredFeature> = self
            .vocabulary
            .features()
            .iter()
            .zip(scores)
            .filter(|(f, _)| allowed.is_none_or(|set| set.contains(&f.relation)))
            .map(|(f, score)| ScoredFeature {
                feature: f.clone(),
                score,
            })
            .collect();
        ranked.sort_by(ScoredFeature::rank_cmp);
        if let Some(limit) = limit {
            ranked.truncate(limit);
        }
        Ok(ranked)
    }

    /// Other concepts ranked by cosine similarity of their rows in
    /// `U diag(S)`; ties go to the lexicographically smaller concept.
    pub fn concept_neighbors(&self, concept: &str, count: usize) -> Result<Vec<(String, f64)>> {
        if count == 0 {
            return Err(Error::Argument("neighbor count must be at least 1".into()));
        }
        let id = self.concept_id(concept)?;
        let target = self.spectral.scaled_row(id);
        let target_norm = target.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut sims: Vec<(String, f64)> = self
            .vocabulary
            .concepts()
            .iter()
            .enumerate()
            .filter(|&(other, _)| other != id)
            .map(|(other, name)| {
                let row = self.spectral.scaled_row(other);
                let row_norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                let sim = if target_norm == 0.0 || row_norm == 0.0 {
                    0.0
                } else {
                    target.iter().zip(&row).map(|(a, b)| a * b).sum::<f64>() / (target_norm * row_norm)
                };
                (name.clone(), sim)
            })
            .collect();
        sims.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        sims.truncate(count);
        Ok(sims)
    }

    /// Reconstructed cell for `(concept, feature)`; a feature with no column
    /// in the matrix scores 0.
    pub fn feature_score(&self, concept: &str, feature: &Feature) -> Result<f64> {
        let row = self.concept_id(concept)?;
        if !self.vocabulary.contains(&feature.concept) {
            return Err(Error::UnknownConcepts(vec![feature.concept.clone()]));
        }
        Ok(self
            .vocabulary
            .feature_id(feature)
            .map_or(0.0, |col| self.spectral.cell(row, col)))
    }
}
