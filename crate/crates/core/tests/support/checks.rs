//! One check per headline property. Core integration tests assert on them
//! and the acceptance runner prints their outcomes.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::io::Cursor;
use std::path::PathBuf;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use rand::Rng;
use veriq_core::kb::Feature;
use veriq_core::pipeline::{self, RemovalReason};
use veriq_core::psychometrics::{
    build_report, viq_percentile, Age, AgeBand, Composition, Item, ItemContent, ItemPool, NormTable, RangeRow, Regimen,
    Session, SubtestPool,
};
use veriq_core::sparse::CsrMatrix;
use veriq_core::spectral::truncated_svd;
use veriq_core::text::{self, TextConfig};
use veriq_core::{IngestConfig, KnowledgeModel, PipelineConfig, SpecialFilter, Subtest, SvdOptions};

use super::*;

pub type CheckResult = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($fmt)+));
        }
    };
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn row(l: &str, r: &str, rr: &str, s: f64) -> Row {
    (l.to_string(), r.to_string(), rr.to_string(), s, 1)
}

pub fn ingest_rows(rows: &[Row], k: usize) -> Result<KnowledgeModel, String> {
    let config = IngestConfig {
        k,
        ..IngestConfig::default()
    };
    KnowledgeModel::ingest(Cursor::new(dump(rows)), &config).map(|(m, _)| m).map_err(err)
}

pub fn fixture_model_at(k: usize) -> KnowledgeModel {
    let config = IngestConfig {
        k,
        ..IngestConfig::default()
    };
    let file = std::fs::File::open(fixture("synthetic_kb.tsv")).expect("fixture KB");
    KnowledgeModel::ingest(std::io::BufReader::new(file), &config).expect("fixture ingest").0
}

pub fn fixture_model() -> &'static KnowledgeModel {
    static MODEL: OnceLock<KnowledgeModel> = OnceLock::new();
    MODEL.get_or_init(|| fixture_model_at(FIXTURE_K))
}

pub fn synthetic_norms() -> NormTable {
    NormTable::load(fixture("synthetic_norms.csv")).expect("synthetic norms")
}

macro_rules! to_dense {
    ($m:expr) => {{
        let m = $m;
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect::<Vec<f64>>()).collect::<Dense>()
    }};
}

// ---------------------------------------------------------------------------

pub fn svd_oracle() -> CheckResult {
    let mut rng = rng(0x51d);
    let (mut worst_s, mut worst_r) = (0.0f64, 0.0f64);
    let mut solver_time = Duration::ZERO;
    for case in 0..25u64 {
        let m = rng.random_range(15..=50);
        let n = rng.random_range(15..=80);
        let density = rng.random_range(0.1..0.35);
        let a = random_sparse(&mut rng, m, n, density);
        let csr = CsrMatrix::from_triplets(m, n, &triplets(&a)).map_err(err)?;
        let start = Instant::now();
        let svd = truncated_svd(
            &csr,
            10,
            SvdOptions {
                seed: case,
                ..SvdOptions::default()
            },
        )
        .map_err(err)?;
        solver_time += start.elapsed();

        let (_, sigma, _) = jacobi_svd(&a);
        let got = svd.singular_values();
        ensure!(got.len() == 10, "case {case}: expected 10 singular values, got {}", got.len());
        let diff: f64 = (0..10).map(|i| (got[i] - sigma[i]).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = sigma[..10].iter().map(|x| x * x).sum::<f64>().sqrt();
        worst_s = worst_s.max(diff / norm);

        let expected = rank_k(&a, 10);
        let recon = to_dense!(svd.reconstruct());
        worst_r = worst_r.max(frobenius(&sub(&recon, &expected)) / frobenius(&expected));
    }
    ensure!(worst_s <= 1e-6, "singular values off by {worst_s:e} (relative)");
    ensure!(worst_r <= 1e-6, "rank-10 reconstruction off by {worst_r:e} (relative Frobenius)");
    ensure!(solver_time < Duration::from_secs(2), "25 decompositions took {solver_time:?}");
    Ok(format!(
        "25 matrices: sigma err {worst_s:.1e}, reconstruction err {worst_r:.1e}, {:.0} ms",
        solver_time.as_secs_f64() * 1e3
    ))
}

// ---------------------------------------------------------------------------

/// Seven concepts in a ring, random strengths so every row's nonzero cells
/// are distinct.
pub fn ring_kb(seed: u64) -> Vec<Row> {
    const NAMES: [&str; 7] = ["ant", "bee", "cat", "dog", "eel", "fox", "gnu"];
    const RELATIONS: [&str; 3] = ["IsA", "HasA", "AtLocation"];
    let mut rng = rng(seed);
    let mut rows = Vec::new();
    let n = NAMES.len();
    let mut strength = || rng.random_range(1.0..9.0);
    for i in 0..n {
        rows.push(row(NAMES[i], RELATIONS[i % 3], NAMES[(i + 1) % n], strength()));
        rows.push(row(NAMES[i], RELATIONS[(i + 1) % 3], NAMES[(i + 3) % n], strength()));
    }
    rows
}

pub fn full_rank_identity() -> CheckResult {
    let mut checked = 0;
    for seed in 0..5 {
        let rows = ring_kb(seed);
        let model = ingest_rows(&rows, 1000)?;
        let concepts = prune_oracle(&rows, 1.0, 2);
        let (names, features, a) = dense_matrix(&rows, &concepts);
        ensure!(names.len() <= 20 && features.len() <= 30, "KB is {}x{}", names.len(), features.len());
        ensure!(
            model.vocabulary().concepts() == names.as_slice(),
            "vocabulary differs from the pruning oracle"
        );
        let lib_features: Vec<String> = model.vocabulary().features().iter().map(Feature::render).collect();
        let oracle_features: Vec<String> = features.iter().map(render).collect();
        ensure!(lib_features == oracle_features, "feature index differs from the oracle");
        let raw = model.matrix().to_dense();
        let cols = features.len();
        for (i, r) in a.iter().enumerate() {
            for (j, &x) in r.iter().enumerate() {
                ensure!((raw[i * cols + j] - x).abs() < 1e-12, "matrix cell ({i},{j}) differs from the oracle");
            }
        }
        let recon = to_dense!(model.spectral().reconstruct());
        let residual = frobenius(&sub(&recon, &a));
        ensure!(residual <= 1e-8, "full-rank reconstruction error {residual:e}");

        for (i, concept) in names.iter().enumerate() {
            let ranked = model
                .predict_features(&veriq_core::Category::uniform([concept.as_str()]), None, None)
                .map_err(err_fmt)?;
            // descending cell value, ties by (relation, concept, direction)
            let mut oracle: Vec<(f64, FeatureKey)> = a[i].iter().copied().zip(features.iter().cloned()).collect();
            oracle.sort_by(|x, y| {
                y.0.total_cmp(&x.0)
                    .then_with(|| (&x.1 .0, &x.1 .1, x.1 .2).cmp(&(&y.1 .0, &y.1 .1, y.1 .2)))
            });
            let nonzero = oracle.iter().filter(|(x, _)| *x != 0.0).count();
            ensure!(ranked.len() == oracle.len(), "{concept}: ranking length differs");
            for (pos, (sf, (x, f))) in ranked.iter().zip(&oracle).enumerate() {
                if pos < nonzero {
                    ensure!(
                        sf.feature.render() == render(f),
                        "{concept}: rank {} is {} but the row sort gives {}",
                        pos + 1,
                        sf.feature,
                        render(f)
                    );
                }
                ensure!((sf.score - x).abs() <= 1e-9, "{concept}: score of {} off", sf.feature);
            }
            checked += 1;
        }
    }
    Ok(format!("{checked} concept rankings over 5 KBs match the row sort; reconstruction <= 1e-8"))
}

fn err_fmt(e: veriq_core::Error) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------

/// (question, removed tokens as "word/q" or "word/p", relation set, filter)
pub const ROUTING_TABLE: &[(&str, &[&str], &str, SpecialFilter)] = &[
    ("Why do we shower?", &["why/q"], "why", SpecialFilter::None),
    ("Why do people wear sunscreen in the summer?", &["why/q"], "why", SpecialFilter::None),
    ("Why do we shake hands?", &["why/q"], "why", SpecialFilter::None),
    ("Why do we put sunscreen on in summer?", &["why/q"], "why", SpecialFilter::None),
    ("Where can you find a penguin?", &["where/q"], "where", SpecialFilter::None),
    ("Where do you put food to keep it cold?", &["where/q"], "where", SpecialFilter::None),
    ("Where would you find a lion?", &["where/q"], "where", SpecialFilter::None),
    ("What is a house?", &["what/q"], "what", SpecialFilter::None),
    ("What does a cow give us?", &["what/q"], "what", SpecialFilter::None),
    ("What color is the sky?", &["what/q", "color/p"], "what", SpecialFilter::Color),
    ("What color is snow?", &["what/q", "color/p"], "what", SpecialFilter::Color),
    ("What colors are leaves in the fall?", &["what/q", "color/p"], "what", SpecialFilter::Color),
    ("What is the color of grass?", &["what/q", "color/p"], "what", SpecialFilter::Color),
    ("How many legs does a spider have?", &["how/q", "many/q"], "", SpecialFilter::Number),
    ("How many wheels does a bicycle have?", &["how/q", "many/q"], "", SpecialFilter::Number),
    ("How many eyes do you have?", &["how/q", "many/q"], "", SpecialFilter::Number),
    ("What is made out of wood?", &["what/q", "make/p", "out/p"], "MadeOf", SpecialFilter::None),
    ("What is paper made of?", &["what/q", "make/p"], "MadeOf", SpecialFilter::None),
    ("What do we make from milk?", &["what/q", "make/p"], "MadeOf", SpecialFilter::None),
    ("What do you use to cut paper?", &["what/q", "use/p"], "UsedFor", SpecialFilter::None),
    ("What is a knife used for?", &["what/q", "use/p"], "UsedFor", SpecialFilter::None),
    ("Why do we use umbrellas?", &["why/q", "use/p"], "UsedFor", SpecialFilter::None),
    ("Where is a refrigerator used?", &["where/q", "use/p"], "UsedFor", SpecialFilter::None),
    ("Tell me what a zebra is.", &[], "", SpecialFilter::None),
    ("Name something that is hot.", &[], "", SpecialFilter::None),
];

fn relation_set(key: &str, config: &PipelineConfig) -> BTreeSet<String> {
    match key {
        "why" => config.why_relations.clone(),
        "where" => config.where_relations.clone(),
        "what" => config.what_relations.clone(),
        "" => BTreeSet::new(),
        single => BTreeSet::from([single.to_string()]),
    }
}

pub fn routing_table() -> CheckResult {
    let config = PipelineConfig::default();
    ensure!(config.why_relations.len() == 7, "why-set has {} relations", config.why_relations.len());
    ensure!(
        config.where_relations == BTreeSet::from(["AtLocation".to_string(), "NearLocation".to_string()]),
        "where-set is {:?}",
        config.where_relations
    );
    for &(question, removed, relations, special) in ROUTING_TABLE {
        let tokens = text::normalize_text(question, &TextConfig::default());
        let route = pipeline::route_question(question, &tokens, &config);
        let got: Vec<String> = route
            .removed
            .iter()
            .map(|r| {
                let tag = match r.reason {
                    RemovalReason::QuestionWord => "q",
                    RemovalReason::PhraseTrigger => "p",
                    other => unreachable!("routing never removes for {other:?}"),
                };
                format!("{}/{tag}", r.concept)
            })
            .collect();
        ensure!(got == removed, "{question:?}: removed {got:?}, expected {removed:?}");
        let expected = relation_set(relations, &config);
        ensure!(
            route.allowed_relations == expected,
            "{question:?}: relations {:?}, expected {expected:?}",
            route.allowed_relations
        );
        ensure!(route.special == special, "{question:?}: filter {:?}, expected {special:?}", route.special);
    }
    Ok(format!("{} questions routed exactly", ROUTING_TABLE.len()))
}

// ---------------------------------------------------------------------------

const SUBSUMPTION_CONCEPTS: &[&str] = &[
    "why", "put sunscreen", "put", "sunscreen", "summer", "shake hand", "shake", "hand", "ice cream", "ice", "go home",
    "home",
];
const SUBSUMPTION_WORDS: &[&str] = &[
    "why", "put", "sunscreen", "summer", "shake", "hand", "ice", "cream", "go", "home", "zzz",
];

fn chain_kb(concepts: &[&str]) -> Vec<Row> {
    let n = concepts.len();
    (0..n)
        .flat_map(|i| {
            [
                row(concepts[i], "RelatedTo", concepts[(i + 1) % n], 2.0),
                row(concepts[i], "IsA", concepts[(i + 2) % n], 3.0),
            ]
        })
        .collect()
}

pub fn subsumption() -> CheckResult {
    let model = ingest_rows(&chain_kb(SUBSUMPTION_CONCEPTS), 50)?;
    let vocab = model.vocabulary();
    let tokens: Vec<String> = ["why", "put", "sunscreen", "summer"].iter().map(|s| s.to_string()).collect();
    let sunscreen = pipeline::extract_concepts(&tokens, vocab, true).map_err(err_fmt)?;
    ensure!(
        sunscreen.retained == ["why", "put sunscreen", "summer"],
        "sunscreen example kept {:?}",
        sunscreen.retained
    );

    let mut rng = rng(0x5b5);
    for case in 0..1000 {
        let len = rng.random_range(1..=8);
        let tokens: Vec<String> = (0..len)
            .map(|_| SUBSUMPTION_WORDS[rng.random_range(0..SUBSUMPTION_WORDS.len())].to_string())
            .collect();
        let Ok(extraction) = pipeline::extract_concepts(&tokens, vocab, true) else {
            ensure!(
                tokens.iter().all(|t| !vocab.contains(t))
                    && tokens.windows(2).all(|w| !vocab.contains(&format!("{} {}", w[0], w[1]))),
                "case {case}: {tokens:?} has concepts but extraction failed"
            );
            continue;
        };
        let bigram_words: BTreeSet<&str> = extraction
            .retained
            .iter()
            .filter(|c| c.contains(' '))
            .flat_map(|c| c.split(' '))
            .collect();
        for c in &extraction.retained {
            ensure!(vocab.contains(c), "case {case}: retained {c:?} is not a concept");
            ensure!(
                c.contains(' ') || !bigram_words.contains(c.as_str()),
                "case {case}: {tokens:?} retained {c:?} inside a retained bigram"
            );
        }
    }
    Ok("sunscreen example reduces to {why, put sunscreen, summer}; 1000 random token lists clean".into())
}

// ---------------------------------------------------------------------------

pub fn snow_sky_kb() -> Vec<Row> {
    [
        ("snow", "HasProperty", "white", 9.0),
        ("snow", "HasProperty", "cold", 6.0),
        ("snow", "AtLocation", "mountain", 4.0),
        ("snow", "IsA", "weather", 3.0),
        ("sky", "HasProperty", "blue", 9.0),
        ("sky", "AtLocation", "outside", 4.0),
        ("sky", "HasA", "cloud", 4.0),
        ("cloud", "AtLocation", "outside", 3.0),
        ("cloud", "IsA", "weather", 3.0),
        ("mountain", "AtLocation", "outside", 3.0),
        ("rain", "IsA", "weather", 4.0),
        ("rain", "HasProperty", "cold", 2.0),
        ("rain", "AtLocation", "outside", 2.0),
        ("cold", "IsA", "temperature", 3.0),
        ("hot", "IsA", "temperature", 3.0),
        ("hot", "HasProperty", "red", 1.0),
        ("fire", "HasProperty", "hot", 6.0),
        ("fire", "HasProperty", "red", 2.0),
        ("fire", "AtLocation", "mountain", 1.0),
        ("white", "IsA", "color", 9.0),
        ("blue", "IsA", "color", 9.0),
        ("red", "IsA", "color", 9.0),
        ("green", "IsA", "color", 9.0),
        ("grass", "HasProperty", "green", 4.0),
        ("grass", "AtLocation", "outside", 4.0),
        ("grass", "AtLocation", "mountain", 2.0),
    ]
    .iter()
    .map(|&(l, r, rr, s)| row(l, r, rr, s))
    .collect()
}

/// Exhaustive color answer at full rank: every what-relation feature of the
/// subject row, kept when its concept clears the reference floor.
fn color_oracle(
    rows: &[Row],
    subject: &str,
    exclusions: &BTreeSet<String>,
    config: &PipelineConfig,
) -> Vec<(String, f64)> {
    let concepts = prune_oracle(rows, 1.0, 2);
    let (names, features, a) = dense_matrix(rows, &concepts);
    let ci = |c: &str| names.iter().position(|n| n == c);
    let isa_color = features
        .iter()
        .position(|f| f.0 == "IsA" && f.1 == "color" && f.2)
        .expect("IsA color column");
    let floor = config
        .colors
        .iter()
        .filter_map(|c| ci(c))
        .map(|i| a[i][isa_color])
        .fold(f64::INFINITY, f64::min);
    let threshold = config.threshold_ratio * floor;
    let s = ci(subject).expect("subject concept");
    let mut kept: Vec<(f64, &FeatureKey)> = features
        .iter()
        .enumerate()
        .filter(|(_, f)| config.what_relations.contains(&f.0))
        .filter(|(_, f)| !exclusions.contains(&f.1))
        .filter(|(_, f)| ci(&f.1).is_some_and(|c| a[c][isa_color] >= threshold))
        .map(|(j, f)| (a[s][j], f))
        .collect();
    kept.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| (&x.1 .0, &x.1 .1, x.1 .2).cmp(&(&y.1 .0, &y.1 .1, y.1 .2))));
    kept.into_iter().take(5).map(|(x, f)| (render(f), x)).collect()
}

pub fn color_filter() -> CheckResult {
    let rows = snow_sky_kb();
    let model = ingest_rows(&rows, 1000)?;
    let mut config = PipelineConfig::default();
    ensure!(
        config.answer_exclusions.contains("color") && config.answer_exclusions.contains("number"),
        "default exclusions miss color or number"
    );
    let cases = [
        ("What color is the sky?", "sky", "HasProperty blue"),
        ("What color is snow?", "snow", "HasProperty white"),
    ];
    for (question, subject, top) in cases {
        for exclusions in [config.answer_exclusions.clone(), BTreeSet::from(["white".to_string(), "blue".to_string()])] {
            config.answer_exclusions = exclusions.clone();
            let answer = pipeline::answer_open_question(question, Subtest::Information, &model, &config).map_err(err_fmt)?;
            ensure!(answer.plan.special == SpecialFilter::Color, "{question:?} not routed to the color filter");
            let oracle = color_oracle(&rows, subject, &exclusions, &config);
            ensure!(answer.answers.len() == oracle.len(), "{question:?}: {} answers, oracle {}", answer.answers.len(), oracle.len());
            for (got, (text, score)) in answer.answers.iter().zip(&oracle) {
                ensure!((got.score - score).abs() <= 1e-9, "{question:?}: score {} vs oracle {score}", got.score);
                ensure!(
                    got.feature.render() == *text || score.abs() <= 1e-9,
                    "{question:?}: {} where enumeration gives {text}",
                    got.feature
                );
                ensure!(!exclusions.contains(&got.feature.concept), "{question:?}: excluded {} returned", got.feature);
            }
            if exclusions.contains("color") {
                let first = answer.answers.first().map(|sf| sf.feature.render()).unwrap_or_default();
                ensure!(first == top, "{question:?}: rank 1 is {first:?}, expected {top:?}");
            }
        }
        config = PipelineConfig::default();
    }
    Ok("sky -> HasProperty blue, snow -> HasProperty white; enumeration agrees with and without exclusions".into())
}

// ---------------------------------------------------------------------------

const SIM_CONCEPTS: [&str; 10] = ["apple", "bread", "chair", "drum", "egg", "flute", "glove", "hat", "ink", "jar"];
const SIM_RELATIONS: [&str; 4] = ["IsA", "HasA", "UsedFor", "AtLocation"];

fn random_small_kb(rng: &mut rand_chacha::ChaCha8Rng) -> Vec<Row> {
    let n = rng.random_range(5..=10);
    let names = &SIM_CONCEPTS[..n];
    let mut rows = Vec::new();
    for i in 0..n {
        rows.push(row(names[i], SIM_RELATIONS[rng.random_range(0..4)], names[(i + 1) % n], rng.random_range(1.0..9.0)));
    }
    for _ in 0..rng.random_range(n..=2 * n) {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            rows.push(row(names[a], SIM_RELATIONS[rng.random_range(0..4)], names[b], rng.random_range(1.0..9.0)));
        }
    }
    rows
}

fn cosine(x: &[f64], y: &[f64]) -> f64 {
    let (nx, ny) = (dot(x, x).sqrt(), dot(y, y).sqrt());
    if nx == 0.0 || ny == 0.0 {
        0.0
    } else {
        dot(x, y) / (nx * ny)
    }
}

/// Neighbors by cosine of raw rows (equal to the reduced rows at full rank).
/// `None` when the last neighbor taken ties numerically with the next one.
fn neighbor_oracle(names: &[String], a: &Dense, i: usize, count: usize) -> Option<Vec<usize>> {
    let mut sims: Vec<(f64, usize)> = (0..names.len()).filter(|&j| j != i).map(|j| (cosine(&a[i], &a[j]), j)).collect();
    sims.sort_by(|x, y| y.0.total_cmp(&x.0).then_with(|| names[x.1].cmp(&names[y.1])));
    if let (Some(last), Some(next)) = (sims.get(count - 1), sims.get(count)) {
        if (last.0 - next.0).abs() < 1e-9 {
            return None;
        }
    }
    Some(sims.into_iter().take(count).map(|(_, j)| j).collect())
}

pub fn similarities_oracle() -> CheckResult {
    let config = PipelineConfig::default();
    let mut rng = rng(0x51a);
    let (mut compared, mut skipped) = (0, 0);
    while compared < 200 {
        let rows = random_small_kb(&mut rng);
        let concepts = prune_oracle(&rows, 1.0, 2);
        if concepts.len() < 4 {
            skipped += 1;
            continue;
        }
        let (names, features, a) = dense_matrix(&rows, &concepts);
        if features.len() > config.similarity_features {
            return Err("random KB exceeds the per-concept feature cap".into());
        }
        let model = ingest_rows(&rows, 1000)?;
        let (x, y) = (rng.random_range(0..names.len()), rng.random_range(0..names.len()));
        let (Some(nx), Some(ny)) = (neighbor_oracle(&names, &a, x, 2), neighbor_oracle(&names, &a, y, 2)) else {
            skipped += 1;
            continue;
        };
        // every feature is in every top-100 list, so each set is the max
        // over its three rows and the intersection is all features
        let merged = |rows_: Vec<usize>| -> Vec<f64> {
            (0..features.len())
                .map(|j| rows_.iter().map(|&r| a[r][j]).fold(f64::NEG_INFINITY, f64::max))
                .collect()
        };
        let set_x = merged([vec![x], nx].concat());
        let set_y = merged([vec![y], ny].concat());
        let mut oracle: Vec<(f64, &FeatureKey)> = features.iter().enumerate().map(|(j, f)| (set_x[j] + set_y[j], f)).collect();
        oracle.sort_by(|p, q| q.0.total_cmp(&p.0).then_with(|| (&p.1 .0, &p.1 .1, p.1 .2).cmp(&(&q.1 .0, &q.1 .1, q.1 .2))));
        let full = oracle.clone();
        oracle.truncate(5);

        let answer = pipeline::answer_similarities(&names[x], &names[y], &model, &config).map_err(err_fmt)?;
        ensure!(answer.answers.len() == oracle.len(), "{} / {}: answer length differs", names[x], names[y]);
        let by_feature: BTreeMap<String, f64> = features
            .iter()
            .enumerate()
            .map(|(j, f)| (render(f), set_x[j] + set_y[j]))
            .collect();
        let lib_x = pipeline::similarity_set(&names[x], &model, &config).map_err(err_fmt)?;
        let lib_y = pipeline::similarity_set(&names[y], &model, &config).map_err(err_fmt)?;
        for (got, (score, f)) in answer.answers.iter().zip(&oracle) {
            ensure!((got.score - score).abs() <= 1e-9, "{} / {}: score {} vs {score}", names[x], names[y], got.score);
            let own = by_feature[&got.feature.render()];
            ensure!((got.score - own).abs() <= 1e-9, "{}: score differs from its set sum", got.feature);
            if full.iter().filter(|(s, _)| (s - score).abs() <= 1e-9).count() == 1 {
                ensure!(got.feature.render() == render(f), "{}: expected {}", got.feature, render(f));
            }
            let exact = lib_x[&got.feature] + lib_y[&got.feature];
            ensure!(got.score == exact, "{}: score is not the exact set sum", got.feature);
        }
        compared += 1;
    }
    let shared = shared_feature_case()?;
    Ok(format!("200 random KBs of <= 10 concepts agree ({skipped} tie-ambiguous draws redrawn); {shared}"))
}

/// Two words whose rows share one nonzero feature.
fn shared_feature_case() -> CheckResult {
    let rows: Vec<Row> = [
        ("pen", "UsedFor", "write", 9.0),
        ("pencil", "UsedFor", "write", 9.0),
        ("pen", "HasA", "ink", 4.0),
        ("pencil", "HasA", "eraser", 4.0),
        ("ink", "AtLocation", "desk", 2.0),
        ("eraser", "AtLocation", "drawer", 2.0),
        ("desk", "HasA", "drawer", 2.0),
        ("write", "IsA", "action", 3.0),
        ("action", "HasA", "drawer", 1.0),
    ]
    .iter()
    .map(|&(l, r, rr, s)| row(l, r, rr, s))
    .collect();
    let model = ingest_rows(&rows, 1000)?;
    let config = PipelineConfig {
        similarity_neighbors: 0,
        ..PipelineConfig::default()
    };
    let set_a = pipeline::similarity_set("pen", &model, &config).map_err(err_fmt)?;
    let set_b = pipeline::similarity_set("pencil", &model, &config).map_err(err_fmt)?;
    let answer = pipeline::answer_similarities("pen", "pencil", &model, &config).map_err(err_fmt)?;
    let top = answer.answers.first().ok_or("pen / pencil: no answer")?;
    let write = Feature::right("UsedFor", "write");
    ensure!(top.feature == write, "pen / pencil: rank 1 is {}", top.feature);
    ensure!(top.score == set_a[&write] + set_b[&write], "pen / pencil: score is not the sum");
    ensure!((top.score - 2.0 * 3.0).abs() < 1e-9, "pen / pencil: score {} != 6", top.score);
    Ok(format!("pen / pencil -> {} {:.3}", top.feature, top.score))
}

// ---------------------------------------------------------------------------

fn question_item(subtest: Subtest, id: String, max_points: u8) -> Item {
    let content = match subtest {
        Subtest::Vocabulary => ItemContent::Word(format!("word {id}")),
        Subtest::Similarities => ItemContent::Pair {
            a: "pen".into(),
            b: "pencil".into(),
            prompt: "Pen and pencil are both".into(),
        },
        _ => ItemContent::Question(format!("question {id}?")),
    };
    Item {
        id,
        subtest,
        content,
        max_points,
        rubric: String::new(),
    }
}

pub fn random_pool(rng: &mut rand_chacha::ChaCha8Rng, run: usize) -> ItemPool {
    let subtests = Subtest::ALL
        .iter()
        .map(|&subtest| {
            let n = rng.random_range(1..=20);
            let items = (0..n)
                .map(|i| {
                    let id = format!("{}-{i:02}", subtest.as_str());
                    let max_points = rng.random_range(1..=2);
                    if subtest == Subtest::WordReasoning {
                        let clues = (0..rng.random_range(1..=3)).map(|c| format!("clue {c}")).collect();
                        Item {
                            id,
                            subtest,
                            content: ItemContent::Clues(clues),
                            max_points,
                            rubric: String::new(),
                        }
                    } else {
                        question_item(subtest, id, max_points)
                    }
                })
                .collect();
            SubtestPool {
                subtest,
                discontinue_run: run,
                items,
            }
        })
        .collect();
    ItemPool::new(subtests).expect("valid random pool")
}

/// Per-candidate scores with the given rank-1 score.
fn candidate_scores(rng: &mut rand_chacha::ChaCha8Rng, strict: u8, max_points: u8) -> Vec<u8> {
    let n = rng.random_range(1..=5);
    let mut scores: Vec<u8> = (0..n).map(|_| rng.random_range(0..=max_points)).collect();
    scores[0] = strict;
    scores
}

pub fn discontinue_rule() -> CheckResult {
    let mut rng = rng(0xd15c);
    let mut clue_advances = 0;
    for case in 0..1000 {
        let pool = Arc::new(random_pool(&mut rng, 5));
        let zero_bias = rng.random_range(0.3..0.9);
        // strict score for every item and clue, fixed up front
        let plan: BTreeMap<String, Vec<u8>> = pool
            .subtests()
            .iter()
            .flat_map(|s| s.items.iter())
            .map(|item| {
                let scores = (0..item.presentations())
                    .map(|_| if rng.random_bool(zero_bias) { 0 } else { rng.random_range(1..=item.max_points) })
                    .collect();
                (item.id.clone(), scores)
            })
            .collect();
        let mut session = Session::new(pool.clone());
        while let Some((item, clue)) = session.current_item() {
            let (id, max_points) = (item.id.clone(), item.max_points);
            let strict = plan[&id][clue];
            let scores = candidate_scores(&mut rng, strict, max_points);
            session.record_scores(&id, &scores).map_err(err_fmt)?;
        }
        for sp in pool.subtests() {
            let item_strict: Vec<u8> = sp
                .items
                .iter()
                .map(|item| plan[&item.id].iter().copied().find(|&s| s > 0).unwrap_or(0))
                .collect();
            let expected = administered_oracle(&item_strict, 5);
            let got = session.administered(sp.subtest);
            ensure!(got == expected, "case {case} {}: administered {got}, oracle {expected}", sp.subtest);
        }
        for result in session.results() {
            let clues = &plan[&result.item_id];
            let expected_clues = clues.iter().position(|&s| s > 0).map_or(clues.len(), |p| p + 1);
            ensure!(
                result.clues_used == expected_clues,
                "case {case} {}: {} clues used, expected {expected_clues}",
                result.item_id,
                result.clues_used
            );
            if result.subtest == Subtest::WordReasoning && result.clues_used > 1 {
                clue_advances += 1;
            }
        }
        // clue presentations precede the next item in the record order
        let records = session.records();
        for pair in records.windows(2) {
            if pair[0].item_id != pair[1].item_id {
                let item = pool.item(&pair[0].item_id).expect("item");
                ensure!(
                    pair[0].strict > 0 || pair[0].clue_index + 1 == item.presentations(),
                    "case {case}: left {} after a zero on clue {} of {}",
                    pair[0].item_id,
                    pair[0].clue_index + 1,
                    item.presentations()
                );
            }
        }
    }
    ensure!(clue_advances > 100, "only {clue_advances} clue advances exercised");
    Ok(format!("1000 sequences match the minimal-prefix oracle; {clue_advances} Word Reasoning items advanced clues"))
}

pub fn regimen_dominance() -> CheckResult {
    let norms = synthetic_norms();
    let mut rng = rng(0x4e9);
    for case in 0..1000 {
        let run = rng.random_range(1..=6);
        let pool = Arc::new(random_pool(&mut rng, run));
        let mut session = Session::new(pool);
        while let Some((item, _)) = session.current_item() {
            let (id, max_points) = (item.id.clone(), item.max_points);
            let n = rng.random_range(0..=5);
            let scores: Vec<u8> = (0..n).map(|_| rng.random_range(0..=max_points)).collect();
            session.record_scores(&id, &scores).map_err(err_fmt)?;
        }
        for r in session.results() {
            ensure!(r.relaxed >= r.strict, "case {case} {}: relaxed {} < strict {}", r.item_id, r.relaxed, r.strict);
        }
        let (strict, relaxed) = (session.raw_scores(Regimen::Strict), session.raw_scores(Regimen::Relaxed));
        for (subtest, s) in &strict {
            ensure!(relaxed[subtest] >= *s, "case {case} {subtest}: raw relaxed < strict");
        }
        let age = Age::from_months(rng.random_range(30..=87));
        let report = build_report(&session, &norms, age, &Composition::NAMED).map_err(err_fmt)?;
        for subtest in Subtest::ALL {
            ensure!(
                report.relaxed.scaled[&subtest] >= report.strict.scaled[&subtest],
                "case {case} {subtest}: scaled relaxed < strict"
            );
        }
        for (name, s) in &report.strict.compositions {
            let (Some(s), Some(r)) = (s, &report.relaxed.compositions[name]) else {
                return Err(format!("case {case}: composition {name} missing"));
            };
            ensure!(r.viq >= s.viq, "case {case} {name}: VIQ relaxed {} < strict {}", r.viq, s.viq);
        }
    }
    Ok("1000 random transcripts: relaxed >= strict for items, raw, scaled and VIQ".into())
}

// ---------------------------------------------------------------------------

fn random_norms(rng: &mut rand_chacha::ChaCha8Rng) -> NormTable {
    let mut scaled = BTreeMap::new();
    for subtest in Subtest::ALL {
        let mut bands = Vec::new();
        let mut start = 30;
        while start <= 87 {
            let end = (start + rng.random_range(5..=20)).min(87);
            let mut rows = Vec::new();
            let (mut min, mut value) = (0u32, rng.random_range(1..=5u8));
            while min <= 40 {
                let max = min + rng.random_range(0..=4);
                rows.push(RangeRow { min, max, value });
                min = max + 1;
                value = (value + rng.random_range(0..=2)).min(19);
            }
            bands.push(AgeBand {
                start_months: start,
                end_months: end,
                rows,
            });
            start = end + 1;
        }
        scaled.insert(subtest, bands);
    }
    let mut viq = Vec::new();
    let (mut min, mut value) = (3u32, rng.random_range(40..=60u32));
    while min <= 57 {
        let max = min + rng.random_range(0..=3);
        viq.push(RangeRow { min, max, value });
        min = max + 1;
        value += rng.random_range(0..=6);
    }
    NormTable::new(scaled, viq).expect("valid random norm table")
}

fn norms_monotone(norms: &NormTable) -> Result<(), String> {
    for subtest in Subtest::ALL {
        for months in 30..=87 {
            let age = Age::from_months(months);
            let mut last = 0;
            for raw in 0..=80 {
                let s = norms.scale(subtest, age, raw).map_err(err_fmt)?;
                ensure!((1..=19).contains(&s), "{subtest} at {age}: scaled {s} for raw {raw}");
                ensure!(s >= last, "{subtest} at {age}: scaled drops at raw {raw}");
                last = s;
            }
        }
    }
    let mut last = 0;
    for sum in 0..=100 {
        let v = norms.viq(sum);
        ensure!(v >= last, "VIQ drops at sum {sum}");
        last = v;
    }
    Ok(())
}

pub fn psychometric_pipeline() -> CheckResult {
    norms_monotone(&synthetic_norms())?;
    let mut rng = rng(0x9a7);
    for _ in 0..100 {
        norms_monotone(&random_norms(&mut rng))?;
    }
    let p100 = viq_percentile(100.0);
    ensure!(p100 == 50.0, "percentile(100) = {p100}");
    let (p88, p112) = (viq_percentile(88.0), viq_percentile(112.0));
    ensure!((p88 - 21.2).abs() <= 0.1, "percentile(88) = {p88}");
    ensure!((p112 - 78.8).abs() <= 0.1, "percentile(112) = {p112}");

    use Subtest::*;
    let expected = [
        (Composition::Standard, [Information, WordReasoning, Vocabulary]),
        (Composition::Best3, [Information, Vocabulary, Similarities]),
        (Composition::Worst3, [Information, WordReasoning, Comprehension]),
    ];
    for (composition, members) in expected {
        let got: BTreeSet<Subtest> = composition.members().into_iter().collect();
        ensure!(got == BTreeSet::from(members), "{composition} has members {got:?}");
        ensure!(composition.validate().is_ok(), "{composition} fails the 2-core rule");
    }
    let mut accepted = 0;
    for a in Subtest::ALL {
        for b in Subtest::ALL {
            for c in Subtest::ALL {
                let triple = [a, b, c];
                let distinct = a != b && b != c && a != c;
                let core = triple.iter().filter(|s| s.is_core()).count();
                let valid = distinct && core >= 2;
                let got = Composition::custom(triple).is_ok();
                ensure!(got == valid, "custom {triple:?}: accepted = {got}, expected {valid}");
                accepted += usize::from(got);
            }
        }
    }
    Ok(format!(
        "scaled in 1..19 and monotone (synthetic + 100 random tables); percentiles {p88:.2}/{p100}/{p112:.2}; {accepted}/125 ordered triples pass the 2-core rule"
    ))
}

// ---------------------------------------------------------------------------

pub const DUMP_ENV: &str = "VERIQ_CONCEPTNET_DUMP";

pub const GOLDEN: &[(Subtest, &str, &str)] = &[
    (Subtest::Information, "Where can you find a penguin?", "AtLocation zoo"),
    (Subtest::Comprehension, "Why do we shower?", "Causes become clean"),
    (Subtest::Information, "What is made out of wood?", "paper MadeOf"),
];

/// `Ok(None)` when no dump is configured.
pub fn real_dump_golden() -> Result<Option<String>, String> {
    let Some(path) = std::env::var_os(DUMP_ENV).map(PathBuf::from) else {
        return Ok(None);
    };
    let file = std::fs::File::open(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let (model, summary) =
        KnowledgeModel::ingest(std::io::BufReader::new(file), &IngestConfig::default()).map_err(err_fmt)?;
    let config = PipelineConfig::default();
    let mut misses = Vec::new();
    for &(subtest, question, expected) in GOLDEN {
        let answer = pipeline::answer_open_question(question, subtest, &model, &config).map_err(err_fmt)?;
        let top = answer.answers.first().map(|sf| sf.feature.render()).unwrap_or_default();
        if top != expected {
            misses.push(format!("{question:?} -> {top:?} (expected {expected:?})"));
        }
    }
    ensure!(misses.is_empty(), "{}", misses.join("; "));
    Ok(Some(format!(
        "{} concepts, k = {}: all {} golden answers at rank 1",
        summary.n_concepts,
        model.spectral().k(),
        GOLDEN.len()
    )))
}
