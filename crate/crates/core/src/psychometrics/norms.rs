use std::collections::BTreeMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subtest::Subtest;

pub const NORMS_SCHEMA: &str = "veriq.norms.v1";
pub const SCALED_MIN: u8 = 1;
pub const SCALED_MAX: u8 = 19;

const SCALED_HEADER: &[&str] = &["subtest", "age_band_start_months", "age_band_end_months", "raw_min", "raw_max", "scaled"];
const VIQ_HEADER: &[&str] = &["sum_min", "sum_max", "viq"];

/// Chronological age in whole months.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Age {
    months: u32,
}

impl Age {
    pub fn from_months(months: u32) -> Self {
        Self { months }
    }

    pub fn new(years: u32, months: u32) -> Self {
        Self {
            months: years * 12 + months,
        }
    }

    pub fn months(self) -> u32 {
        self.months
    }
}

impl fmt::Display for Age {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}y{}m", self.months / 12, self.months % 12)
    }
}

/// Accepts "4y0m", "4y", "4" (years) and "54m".
impl FromStr for Age {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Argument(format!("unparseable age {s:?}; expected e.g. 4y0m, 4 or 54m"));
        let t = s.trim().to_ascii_lowercase();
        let num = |x: &str| x.trim().parse::<u32>().map_err(|_| bad());
        if let Some((years, rest)) = t.split_once('y') {
            let months = match rest.strip_suffix('m') {
                Some(m) => num(m)?,
                None if rest.is_empty() => 0,
                None => return Err(bad()),
            };
            if months >= 12 {
                return Err(bad());
            }
            Ok(Age::new(num(years)?, months))
        } else if let Some(months) = t.strip_suffix('m') {
            Ok(Age::from_months(num(months)?))
        } else {
            Ok(Age::new(num(&t)?, 0))
        }
    }
}

impl TryFrom<String> for Age {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Age> for String {
    fn from(age: Age) -> String {
        age.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RangeRow<T> {
    pub min: u32,
    pub max: u32,
    pub value: T,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AgeBand {
    pub start_months: u32,
    pub end_months: u32,
    pub rows: Vec<RangeRow<u8>>,
}

impl AgeBand {
    fn covers(&self, age: Age) -> bool {
        (self.start_months..=self.end_months).contains(&age.months())
    }
}

/// Raw to scaled maps per subtest and age band, plus the scaled-sum to VIQ
/// map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormTable {
    scaled: BTreeMap<Subtest, Vec<AgeBand>>,
    viq: Vec<RangeRow<u32>>,
}

/// The row whose range starts at or below `x`; values below the first row
/// clamp to it and values above the last clamp to the last.
fn lookup<T: Copy>(rows: &[RangeRow<T>], x: u32) -> T {
    let idx = rows.partition_point(|r| r.min <= x);
    rows[idx.saturating_sub(1)].value
}

fn check_rows<T: Copy + Ord + fmt::Debug>(rows: &mut [RangeRow<T>], what: &str) -> Result<()> {
    rows.sort_by_key(|r| r.min);
    for r in rows.iter() {
        if r.min > r.max {
            return Err(Error::Norms(format!("{what}: range {}..{} is inverted", r.min, r.max)));
        }
    }
    for pair in rows.windows(2) {
        if pair[1].min <= pair[0].max {
            return Err(Error::Norms(format!("{what}: ranges starting at {} and {} overlap", pair[0].min, pair[1].min)));
        }
        if pair[1].value < pair[0].value {
            return Err(Error::Norms(format!("{what}: not monotone at {}", pair[1].min)));
        }
    }
    Ok(())
}

impl NormTable {
    pub fn new(scaled: BTreeMap<Subtest, Vec<AgeBand>>, mut viq: Vec<RangeRow<u32>>) -> Result<Self> {
        let mut checked = BTreeMap::new();
        for (subtest, mut bands) in scaled {
            bands.sort_by_key(|b| b.start_months);
            for band in &mut bands {
                let what = format!("{subtest} {}..{} months", band.start_months, band.end_months);
                if band.start_months > band.end_months {
                    return Err(Error::Norms(format!("{what}: inverted age band")));
                }
                if band.rows.is_empty() {
                    return Err(Error::Norms(format!("{what}: no rows")));
                }
                if let Some(r) = band.rows.iter().find(|r| !(SCALED_MIN..=SCALED_MAX).contains(&r.value)) {
                    return Err(Error::Norms(format!("{what}: scaled score {} outside 1..19", r.value)));
                }
                check_rows(&mut band.rows, &what)?;
            }
            for pair in bands.windows(2) {
                if pair[1].start_months <= pair[0].end_months {
                    return Err(Error::Norms(format!("{subtest}: age bands overlap at {} months", pair[1].start_months)));
                }
            }
            checked.insert(subtest, bands);
        }
        if viq.is_empty() {
            return Err(Error::Norms("no VIQ rows".into()));
        }
        check_rows(&mut viq, "viq")?;
        Ok(Self { scaled: checked, viq })
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut csv = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut records = csv.records();
        let first = records
            .next()
            .ok_or_else(|| Error::Norms("empty file".into()))??;
        if first.len() != 2 || &first[0] != "schema" || &first[1] != NORMS_SCHEMA {
            return Err(Error::Norms(format!("first row must be schema,{NORMS_SCHEMA}")));
        }

        enum Block {
            None,
            Scaled,
            Viq,
        }
        let mut block = Block::None;
        let mut scaled: BTreeMap<Subtest, Vec<AgeBand>> = BTreeMap::new();
        let mut viq = Vec::new();
        for record in records {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let fields: Vec<&str> = record.iter().collect();
            if fields.iter().all(|f| f.is_empty()) {
                continue;
            }
            if fields == SCALED_HEADER {
                block = Block::Scaled;
                continue;
            }
            if fields == VIQ_HEADER {
                block = Block::Viq;
                continue;
            }
            let num = |s: &str, name: &str| -> Result<u32> {
                s.parse()
                    .map_err(|_| Error::Norms(format!("line {line}: {name} {s:?} is not a non-negative integer")))
            };
            match block {
                Block::None => return Err(Error::Norms(format!("line {line}: row before any block header"))),
                Block::Scaled => {
                    let [subtest, start, end, raw_min, raw_max, value] = fields[..] else {
                        return Err(Error::Norms(format!("line {line}: expected {} fields", SCALED_HEADER.len())));
                    };
                    let subtest: Subtest = subtest.parse().map_err(|e| Error::Norms(format!("line {line}: {e}")))?;
                    let (start, end) = (num(start, "age_band_start_months")?, num(end, "age_band_end_months")?);
                    let value = num(value, "scaled")?;
                    let row = RangeRow {
                        min: num(raw_min, "raw_min")?,
                        max: num(raw_max, "raw_max")?,
                        value: u8::try_from(value).unwrap_or(u8::MAX),
                    };
                    let bands = scaled.entry(subtest).or_default();
                    match bands.iter_mut().find(|b| b.start_months == start && b.end_months == end) {
                        Some(band) => band.rows.push(row),
                        None => bands.push(AgeBand {
                            start_months: start,
                            end_months: end,
                            rows: vec![row],
                        }),
                    }
                }
                Block::Viq => {
                    let [min, max, value] = fields[..] else {
                        return Err(Error::Norms(format!("line {line}: expected {} fields", VIQ_HEADER.len())));
                    };
                    viq.push(RangeRow {
                        min: num(min, "sum_min")?,
                        max: num(max, "sum_max")?,
                        value: num(value, "viq")?,
                    });
                }
            }
        }
        Self::new(scaled, viq)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn subtests(&self) -> impl Iterator<Item = Subtest> + '_ {
        self.scaled.keys().copied()
    }

    pub fn bands(&self, subtest: Subtest) -> &[AgeBand] {
        self.scaled.get(&subtest).map_or(&[], Vec::as_slice)
    }

    pub fn viq_rows(&self) -> &[RangeRow<u32>] {
        &self.viq
    }

    pub fn scale(&self, subtest: Subtest, age: Age, raw: u32) -> Result<u8> {
        let bands = self
            .scaled
            .get(&subtest)
            .ok_or_else(|| Error::Norms(format!("no rows for subtest {subtest}")))?;
        let band = bands
            .iter()
            .find(|b| b.covers(age))
            .ok_or_else(|| Error::AgeOutOfRange(age.to_string()))?;
        Ok(lookup(&band.rows, raw))
    }

    pub fn viq(&self, scaled_sum: u32) -> u32 {
        lookup(&self.viq, scaled_sum)
    }
}
