//! Truncated SVD of the concept x feature matrix.
//!
//! The solver is Golub-Kahan-Lanczos bidiagonalization with full
//! reorthogonalization. The Krylov basis grows until the top `k` Ritz
//! triplets have residual `<= tol * sigma_1`; at the smaller matrix dimension
//! the factorization is exact, so the loop always terminates.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kb::Feature;
use crate::sparse::CsrMatrix;

pub const DEFAULT_RANK: usize = 500;
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdOptions {
    pub seed: u64,
    /// Relative residual bound `||A^T u - s v|| <= tolerance * s_1`.
    pub tolerance: f64,
    /// Cap on Lanczos steps; defaults to the smaller matrix dimension.
    pub max_steps: Option<usize>,
}

impl Default for SvdOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            tolerance: DEFAULT_TOLERANCE,
            max_steps: None,
        }
    }
}

/// `A ~ U diag(S) V^T` with `U: rows x k`, `V: cols x k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel {
    u: DMatrix<f64>,
    s: Vec<f64>,
    v: DMatrix<f64>,
    seed: u64,
    tolerance: f64,
}

impl SpectralModel {
    /// Assembles a model from existing factors; only the shapes are checked.
    pub fn from_parts(u: DMatrix<f64>, s: Vec<f64>, v: DMatrix<f64>, seed: u64, tolerance: f64) -> Result<Self> {
        if u.ncols() != s.len() || v.ncols() != s.len() {
            return Err(Error::Format("spectral factor shapes disagree".into()));
        }
        Ok(Self {
            u,
            s,
            v,
            seed,
            tolerance,
        })
    }

    pub fn k(&self) -> usize {
        self.s.len()
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.s
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn n_rows(&self) -> usize {
        self.u.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.v.nrows()
    }

    /// Reconstructed cell `U_r diag(S) V_c^T`.
    pub fn cell(&self, row: usize, col: usize) -> f64 {
        (0..self.k()).map(|i| self.u[(row, i)] * self.s[i] * self.v[(col, i)]).sum()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (i, s) in self.s.iter().enumerate() {
            us.column_mut(i).scale_mut(*s);
        }
        us * self.v.transpose()
    }

    /// Keeps the leading `k` triplets.
    pub fn truncate(&self, k: usize) -> Self {
        let k = k.min(self.k());
        Self {
            u: self.u.columns(0, k).into_owned(),
            s: self.s[..k].to_vec(),
            v: self.v.columns(0, k).into_owned(),
            seed: self.seed,
            tolerance: self.tolerance,
        }
    }

    /// Drops trailing singular values at or below `rel_tol * s_1`.
    pub fn trim_to_numerical_rank(&self, rel_tol: f64) -> Self {
        let top = self.s.first().copied().unwrap_or(0.0);
        let rank = self.s.iter().take_while(|&&s| s > rel_tol * top && s > 0.0).count();
        self.truncate(rank.max(1))
    }

    /// Row `r` of `U diag(S)`: the concept's position in the reduced space.
    pub fn scaled_row(&self, r: usize) -> Vec<f64> {
        (0..self.k()).map(|i| self.u[(r, i)] * self.s[i]).collect()
    }

    /// Scores every column for a row-space weight vector: `V diag(S) U^T w`.
    pub fn project(&self, weights: &[(usize, f64)]) -> Vec<f64> {
        let mut t = vec![0.0; self.k()];
        for &(r, w) in weights {
            for (i, ti) in t.iter_mut().enumerate() {
                *ti += w * self.u[(r, i)];
            }
        }
        for (ti, s) in t.iter_mut().zip(&self.s) {
            *ti *= s;
        }
        let mut scores = vec![0.0; self.n_cols()];
        for (i, ti) in t.iter().enumerate() {
            if *ti == 0.0 {
                continue;
            }
            for (score, vji) in scores.iter_mut().zip(self.v.column(i).iter()) {
                *score += vji * ti;
            }
        }
        scores
    }
}

/// Best rank-`k` approximation of `matrix`, deterministic for a fixed seed.
pub fn truncated_svd(matrix: &CsrMatrix, k: usize, options: SvdOptions) -> Result<SpectralModel> {
    let min_dim = matrix.rows().min(matrix.cols());
    if min_dim == 0 {
        return Err(Error::Argument("cannot decompose an empty matrix".into()));
    }
    if k == 0 || k > min_dim {
        return Err(Error::Argument(format!("rank k = {k} must lie in 1..={min_dim}")));
    }
    if options.tolerance.is_nan() || options.tolerance <= 0.0 {
        return Err(Error::Argument("solver tolerance must be positive".into()));
    }
    // Run the recurrence on the orientation whose column count is the smaller
    // dimension so the right Krylov space can be exhausted.
    let transposed = matrix.cols() > matrix.rows();
    let op = if transposed { matrix.transpose() } else { matrix.clone() };
    let result = bidiagonal_lanczos(&op, k, &options)?;
    let (mut u, mut v) = if transposed {
        (result.right, result.left)
    } else {
        (result.left, result.right)
    };
    canonicalize_signs(&mut u, &mut v);
    SpectralModel::from_parts(u, result.sigma, v, options.seed, options.tolerance)
}

struct LanczosResult {
    sigma: Vec<f64>,
    left: DMatrix<f64>,
    right: DMatrix<f64>,
}

fn bidiagonal_lanczos(a: &CsrMatrix, k: usize, options: &SvdOptions) -> Result<LanczosResult> {
    let (m, n) = (a.rows(), a.cols());
    debug_assert!(n <= m);
    let max_steps = options.max_steps.unwrap_or(n).clamp(k, n);
    let scale = a.frobenius_norm();
    let breakdown = 1e-13 * scale;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);

    let mut us: Vec<Vec<f64>> = Vec::new();
    let mut vs: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    let mut v = fresh_direction(&mut rng, n, &vs);
    let mut next_check = (2 * k).max(k + 10).min(max_steps);
    let stride = (k / 2).max(10);
    let mut scratch_u = vec![0.0; m];
    let mut scratch_v = vec![0.0; n];

    loop {
        // u_j = A v_j - beta_{j-1} u_{j-1}
        a.mul_vec(&v, &mut scratch_u);
        if let (Some(prev), Some(&beta)) = (us.last(), betas.last()) {
            axpy(-beta, prev, &mut scratch_u);
        }
        vs.push(v);
        reorthogonalize(&mut scratch_u, &us);
        let mut alpha = norm(&scratch_u);
        let u_j = if alpha <= breakdown {
            alpha = 0.0;
            fresh_direction(&mut rng, m, &us)
        } else {
            scratch_u.iter().map(|x| x / alpha).collect()
        };
        alphas.push(alpha);

        // v_{j+1} = A^T u_j - alpha_j v_j
        a.mul_vec_transposed(&u_j, &mut scratch_v);
        axpy(-alpha, vs.last().expect("basis is non-empty"), &mut scratch_v);
        us.push(u_j);
        let steps = vs.len();
        let exhausted = steps >= max_steps;
        let mut beta = 0.0;
        let mut next_v = None;
        let mut restarted = false;
        if steps < n {
            reorthogonalize(&mut scratch_v, &vs);
            beta = norm(&scratch_v);
            next_v = Some(if beta <= breakdown {
                beta = 0.0;
                restarted = true;
                fresh_direction(&mut rng, n, &vs)
            } else {
                scratch_v.iter().map(|x| x / beta).collect()
            });
        }
        betas.push(beta);

        // An invariant block only proves its own Ritz pairs exact, not that
        // they are the leading ones, so defer the check past a restart.
        if restarted && !exhausted {
            next_check = next_check.max(steps + 1);
        } else if steps >= next_check || exhausted || next_v.is_none() {
            let b = bidiagonal(&alphas, &betas[..steps - 1]);
            let svd = b.svd(true, true);
            let p = svd.u.expect("requested left vectors");
            let qt = svd.v_t.expect("requested right vectors");
            let mut order: Vec<usize> = (0..steps).collect();
            order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]).then(i.cmp(&j)));
            let sigma_1 = svd.singular_values[order[0]];
            let residual = order[..k]
                .iter()
                .map(|&i| (beta * p[(steps - 1, i)]).abs())
                .fold(0.0, f64::max);
            let converged = next_v.is_none() || residual <= options.tolerance * sigma_1.max(f64::MIN_POSITIVE);
            if converged {
                let basis_u = DMatrix::from_fn(m, steps, |r, c| us[c][r]);
                let basis_v = DMatrix::from_fn(n, steps, |r, c| vs[c][r]);
                let pick_p = DMatrix::from_fn(steps, k, |r, c| p[(r, order[c])]);
                let pick_q = DMatrix::from_fn(steps, k, |r, c| qt[(order[c], r)]);
                return Ok(LanczosResult {
                    sigma: order[..k].iter().map(|&i| svd.singular_values[i]).collect(),
                    left: basis_u * pick_p,
                    right: basis_v * pick_q,
                });
            }
            if exhausted || next_v.is_none() {
                return Err(Error::Solver {
                    iterations: steps,
                    residual,
                });
            }
            next_check = (steps + stride).min(max_steps);
        }
        v = next_v.expect("checked above");
    }
}

fn bidiagonal(alphas: &[f64], betas: &[f64]) -> DMatrix<f64> {
    let n = alphas.len();
    let mut b = DMatrix::zeros(n, n);
    for (i, &a) in alphas.iter().enumerate() {
        b[(i, i)] = a;
    }
    for (i, &beta) in betas.iter().enumerate() {
        b[(i, i + 1)] = beta;
    }
    b
}

fn fresh_direction(rng: &mut ChaCha8Rng, dim: usize, basis: &[Vec<f64>]) -> Vec<f64> {
    loop {
        let mut x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
        reorthogonalize(&mut x, basis);
        let nrm = norm(&x);
        if nrm > 1e-8 {
            x.iter_mut().for_each(|xi| *xi /= nrm);
            return x;
        }
    }
}

/// Two passes of classical Gram-Schmidt.
fn reorthogonalize(x: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        let coeffs: Vec<f64> = basis.iter().map(|b| dot(b, x)).collect();
        for (b, c) in basis.iter().zip(coeffs) {
            axpy(-c, b, x);
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Flips each singular pair so the largest-magnitude entry of the left
/// vector is positive.
fn canonicalize_signs(u: &mut DMatrix<f64>, v: &mut DMatrix<f64>) {
    for i in 0..u.ncols() {
        let pivot = u
            .column(i)
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            u.column_mut(i).neg_mut();
            v.column_mut(i).neg_mut();
        }
    }
}

/// Weighted concept set used as a query.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Category(BTreeMap<String, f64>);

impl Category {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every concept gets weight 1.
    pub fn uniform<I, S>(concepts: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self(concepts.into_iter().map(|c| (c.into(), 1.0)).collect())
    }

    pub fn insert(&mut self, concept: impl Into<String>, weight: f64) -> Result<()> {
        if !weight.is_finite() {
            return Err(Error::Argument(format!("category weight {weight} is not finite")));
        }
        self.0.insert(concept.into(), weight);
        Ok(())
    }

    pub fn weights(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(c, w)| (c.as_str(), *w))
    }

    pub fn concepts(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn contains(&self, concept: &str) -> bool {
        self.0.contains_key(concept)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredFeature {
    pub feature: Feature,
    pub score: f64,
}

impl ScoredFeature {
    /// Descending score, then ascending `(relation, concept, direction)`.
    pub fn rank_cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.score.total_cmp(&self.score).then_with(|| self.feature.cmp(&other.feature))
    }
}

pub const ANSWER_LIST_LEN: usize = 5;

/// The top five candidates for one question, best first.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnswerList(Vec<ScoredFeature>);

impl AnswerList {
    pub fn from_ranked(mut ranked: Vec<ScoredFeature>) -> Self {
        ranked.sort_by(ScoredFeature::rank_cmp);
        ranked.truncate(ANSWER_LIST_LEN);
        Self(ranked)
    }

    pub fn as_slice(&self) -> &[ScoredFeature] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<&ScoredFeature> {
        self.0.first()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ScoredFeature> {
        self.0.iter()
    }

    pub fn into_vec(self) -> Vec<ScoredFeature> {
        self.0
    }
}

impl<'a> IntoIterator for &'a AnswerList {
    type Item = &'a ScoredFeature;
    type IntoIter = std::slice::Iter<'a, ScoredFeature>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}
