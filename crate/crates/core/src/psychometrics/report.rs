use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::psychometrics::norms::{Age, NormTable};
use crate::psychometrics::session::{Regimen, Session};
use crate::subtest::Subtest;

pub const REPORT_SCHEMA: &str = "veriq.report.v1";
pub const VIQ_MEAN: f64 = 100.0;
pub const VIQ_SD: f64 = 15.0;

/// Percentile rank of a VIQ under the N(100, 15) model.
pub fn viq_percentile(viq: f64) -> f64 {
    let normal = Normal::new(VIQ_MEAN, VIQ_SD).expect("valid normal parameters");
    normal.cdf(viq) * 100.0
}

/// Three subtests whose scaled scores sum to a VIQ. At least two must be
/// core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Composition {
    Standard,
    Best3,
    Worst3,
    Custom([Subtest; 3]),
}

impl Composition {
    pub const NAMED: [Composition; 3] = [Composition::Standard, Composition::Best3, Composition::Worst3];

    pub fn custom(subtests: [Subtest; 3]) -> Result<Self> {
        let c = Composition::Custom(subtests);
        c.validate()?;
        Ok(c)
    }

    pub fn members(self) -> [Subtest; 3] {
        use Subtest::*;
        match self {
            Composition::Standard => [Information, WordReasoning, Vocabulary],
            Composition::Best3 => [Information, Vocabulary, Similarities],
            Composition::Worst3 => [Information, WordReasoning, Comprehension],
            Composition::Custom(members) => members,
        }
    }

    pub fn validate(self) -> Result<()> {
        let m = self.members();
        if m[0] == m[1] || m[0] == m[2] || m[1] == m[2] {
            return Err(Error::Composition(format!("{self}: subtests must be distinct")));
        }
        let core = m.iter().filter(|s| s.is_core()).count();
        if core < 2 {
            return Err(Error::Composition(format!("{self}: needs at least two core subtests, has {core}")));
        }
        Ok(())
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Composition::Standard => f.write_str("standard"),
            Composition::Best3 => f.write_str("best3"),
            Composition::Worst3 => f.write_str("worst3"),
            Composition::Custom([a, b, c]) => write!(f, "custom:{a},{b},{c}"),
        }
    }
}

/// "standard", "best3", "worst3" or "custom:a,b,c".
impl FromStr for Composition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "standard" => Ok(Composition::Standard),
            "best3" => Ok(Composition::Best3),
            "worst3" => Ok(Composition::Worst3),
            other => {
                let list = other
                    .strip_prefix("custom:")
                    .ok_or_else(|| Error::Composition(format!("unknown composition {other:?}")))?;
                let parsed = list.split(',').map(str::parse).collect::<Result<Vec<Subtest>>>()?;
                let members: [Subtest; 3] = parsed
                    .try_into()
                    .map_err(|_| Error::Composition(format!("{other:?}: expected three subtests")))?;
                Composition::custom(members)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionScore {
    pub subtests: [Subtest; 3],
    pub sum: u32,
    pub viq: u32,
    pub percentile: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimenReport {
    pub raw: BTreeMap<Subtest, u32>,
    pub scaled: BTreeMap<Subtest, u8>,
    /// `None` when a member subtest is missing from the pool.
    pub compositions: BTreeMap<String, Option<CompositionScore>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub age: Age,
    pub age_months: u32,
    pub administered: BTreeMap<Subtest, usize>,
    pub strict: RegimenReport,
    pub relaxed: RegimenReport,
}

impl Report {
    pub fn regimen(&self, regimen: Regimen) -> &RegimenReport {
        match regimen {
            Regimen::Strict => &self.strict,
            Regimen::Relaxed => &self.relaxed,
        }
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub fn regimen_report(
    raw: BTreeMap<Subtest, u32>,
    norms: &NormTable,
    age: Age,
    compositions: &[Composition],
) -> Result<RegimenReport> {
    let scaled = raw
        .iter()
        .map(|(&subtest, &r)| Ok((subtest, norms.scale(subtest, age, r)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let mut scored = BTreeMap::new();
    for &composition in compositions {
        composition.validate()?;
        let members = composition.members();
        let sum = members
            .iter()
            .map(|s| scaled.get(s).map(|&v| u32::from(v)))
            .sum::<Option<u32>>();
        let score = sum.map(|sum| {
            let viq = norms.viq(sum);
            CompositionScore {
                subtests: members,
                sum,
                viq,
                percentile: viq_percentile(f64::from(viq)),
            }
        });
        scored.insert(composition.to_string(), score);
    }
    Ok(RegimenReport {
        raw,
        scaled,
        compositions: scored,
    })
}

/// Raw, scaled and composite scores for both regimens at `age`.
pub fn build_report(session: &Session, norms: &NormTable, age: Age, compositions: &[Composition]) -> Result<Report> {
    let administered = session
        .progress()
        .iter()
        .map(|p| (p.subtest, session.administered(p.subtest)))
        .collect();
    Ok(Report {
        schema: REPORT_SCHEMA.to_string(),
        age,
        age_months: age.months(),
        administered,
        strict: regimen_report(session.raw_scores(Regimen::Strict), norms, age, compositions)?,
        relaxed: regimen_report(session.raw_scores(Regimen::Relaxed), norms, age, compositions)?,
    })
}
