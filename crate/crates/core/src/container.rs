//! Versioned binary model file.
//!
//! Layout (little endian):
//!
//! ```text
//! magic "VERIQMDL" | u32 version | u32 block count
//! repeated: [u8; 4] tag | u64 payload length | payload | u32 crc32(payload)
//! u32 crc32(all preceding bytes)
//! ```
//!
//! Blocks: `VOCB` (prune config, weighting, concepts with degrees, features),
//! `MTRX` (CSR arrays) and `SPEC` (k, seed, tolerance, S, U, V row-major).

use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kb::{Direction, Feature, PruneConfig, Vocabulary, Weighting};
use crate::model::KnowledgeModel;
use crate::sparse::CsrMatrix;
use crate::spectral::SpectralModel;

pub const MAGIC: &[u8; 8] = b"VERIQMDL";
pub const FORMAT_VERSION: u32 = 1;

const TAG_VOCAB: &[u8; 4] = b"VOCB";
const TAG_MATRIX: &[u8; 4] = b"MTRX";
const TAG_SPECTRAL: &[u8; 4] = b"SPEC";

pub fn save(model: &KnowledgeModel, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&to_bytes(model)?)?;
    out.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<KnowledgeModel> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

pub fn to_bytes(model: &KnowledgeModel) -> Result<Vec<u8>> {
    let blocks = [
        (TAG_VOCAB, encode_vocabulary(&model.vocabulary, model.weighting)?),
        (TAG_MATRIX, encode_matrix(&model.matrix)?),
        (TAG_SPECTRAL, encode_spectral(&model.spectral)?),
    ];
    let mut out = Vec::new();
    out.write_all(MAGIC)?;
    out.write_u32::<LE>(FORMAT_VERSION)?;
    out.write_u32::<LE>(blocks.len() as u32)?;
    for (tag, payload) in &blocks {
        out.write_all(*tag)?;
        out.write_u64::<LE>(payload.len() as u64)?;
        out.write_all(payload)?;
        out.write_u32::<LE>(crc32fast::hash(payload))?;
    }
    let total = crc32fast::hash(&out);
    out.write_u32::<LE>(total)?;
    Ok(out)
}

pub fn from_bytes(bytes: &[u8]) -> Result<KnowledgeModel> {
    if bytes.len() < MAGIC.len() + 12 || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::Format("not a veriq model file".into()));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    let expected = u32::from_le_bytes(trailer.try_into().expect("4-byte trailer"));
    if crc32fast::hash(body) != expected {
        return Err(Error::Format("file checksum mismatch".into()));
    }
    let mut cur = Cursor::new(&body[MAGIC.len()..]);
    let version = cur.read_u32::<LE>()?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let count = cur.read_u32::<LE>()?;
    let (mut vocab, mut matrix, mut spectral) = (None, None, None);
    for _ in 0..count {
        let mut tag = [0u8; 4];
        cur.read_exact(&mut tag)?;
        let len = cur.read_u64::<LE>()? as usize;
        let start = cur.position() as usize;
        let payload = cur
            .get_ref()
            .get(start..start + len)
            .ok_or_else(|| Error::Format("truncated block".into()))?;
        cur.set_position((start + len) as u64);
        let crc = cur.read_u32::<LE>()?;
        if crc32fast::hash(payload) != crc {
            return Err(Error::Format(format!(
                "checksum mismatch in block {}",
                String::from_utf8_lossy(&tag)
            )));
        }
        match &tag {
            TAG_VOCAB => vocab = Some(decode_vocabulary(payload)?),
            TAG_MATRIX => matrix = Some(decode_matrix(payload)?),
            TAG_SPECTRAL => spectral = Some(decode_spectral(payload)?),
            other => log::warn!("skipping unknown block {}", String::from_utf8_lossy(other)),
        }
    }
    let (vocabulary, weighting) = vocab.ok_or_else(|| Error::Format("missing vocabulary block".into()))?;
    let matrix = matrix.ok_or_else(|| Error::Format("missing matrix block".into()))?;
    let spectral = spectral.ok_or_else(|| Error::Format("missing spectral block".into()))?;
    KnowledgeModel::new(vocabulary, matrix, spectral, weighting)
}

fn write_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    out.write_u32::<LE>(s.len() as u32)?;
    out.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str(cur: &mut Cursor<&[u8]>) -> Result<String> {
    let len = cur.read_u32::<LE>()? as usize;
    let mut buf = vec![0u8; len];
    cur.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| Error::Format("invalid utf-8 string".into()))
}

fn read_len(cur: &mut Cursor<&[u8]>, elem_size: usize) -> Result<usize> {
    let n = cur.read_u64::<LE>()? as usize;
    let remaining = cur.get_ref().len() - cur.position() as usize;
    if n.saturating_mul(elem_size) > remaining {
        return Err(Error::Format("length field exceeds block".into()));
    }
    Ok(n)
}

fn encode_vocabulary(vocab: &Vocabulary, weighting: Weighting) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let config = vocab.config();
    out.write_f64::<LE>(config.min_strength)?;
    out.write_u64::<LE>(config.min_concept_degree as u64)?;
    match weighting {
        Weighting::SqrtCapped { cap } => {
            out.write_u8(0)?;
            out.write_f64::<LE>(cap)?;
        }
        Weighting::Identity => {
            out.write_u8(1)?;
            out.write_f64::<LE>(0.0)?;
        }
    }
    out.write_u64::<LE>(vocab.n_concepts() as u64)?;
    for (concept, degree) in vocab.concepts().iter().zip(vocab.degrees()) {
        write_str(&mut out, concept)?;
        out.write_u64::<LE>(*degree as u64)?;
    }
    out.write_u64::<LE>(vocab.n_features() as u64)?;
    for f in vocab.features() {
        out.write_u8(match f.direction {
            Direction::Left => 0,
            Direction::Right => 1,
        })?;
        write_str(&mut out, &f.relation)?;
        write_str(&mut out, &f.concept)?;
    }
    Ok(out)
}

fn decode_vocabulary(payload: &[u8]) -> Result<(Vocabulary, Weighting)> {
    let mut cur = Cursor::new(payload);
    let min_strength = cur.read_f64::<LE>()?;
    let min_concept_degree = cur.read_u64::<LE>()? as usize;
    let weighting = match (cur.read_u8()?, cur.read_f64::<LE>()?) {
        (0, cap) => Weighting::SqrtCapped { cap },
        (1, _) => Weighting::Identity,
        (tag, _) => return Err(Error::Format(format!("unknown weighting tag {tag}"))),
    };
    let n = read_len(&mut cur, 12)?;
    let mut concepts = Vec::with_capacity(n);
    let mut degrees = Vec::with_capacity(n);
    for _ in 0..n {
        concepts.push(read_str(&mut cur)?);
        degrees.push(cur.read_u64::<LE>()? as usize);
    }
    let n = read_len(&mut cur, 9)?;
    let mut features = Vec::with_capacity(n);
    for _ in 0..n {
        let direction = match cur.read_u8()? {
            0 => Direction::Left,
            1 => Direction::Right,
            other => return Err(Error::Format(format!("unknown direction tag {other}"))),
        };
        let relation = read_str(&mut cur)?;
        let concept = read_str(&mut cur)?;
        features.push(Feature::new(direction, relation, concept));
    }
    let config = PruneConfig {
        min_strength,
        min_concept_degree,
    };
    Ok((Vocabulary::from_parts(concepts, features, degrees, config)?, weighting))
}

fn encode_matrix(m: &CsrMatrix) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.write_u64::<LE>(m.rows() as u64)?;
    out.write_u64::<LE>(m.cols() as u64)?;
    out.write_u64::<LE>(m.nnz() as u64)?;
    for &p in m.indptr() {
        out.write_u64::<LE>(p as u64)?;
    }
    for &i in m.indices() {
        out.write_u64::<LE>(i as u64)?;
    }
    for &v in m.values() {
        out.write_f64::<LE>(v)?;
    }
    Ok(out)
}

fn decode_matrix(payload: &[u8]) -> Result<CsrMatrix> {
    let mut cur = Cursor::new(payload);
    let rows = cur.read_u64::<LE>()? as usize;
    let cols = cur.read_u64::<LE>()? as usize;
    let nnz = read_len(&mut cur, 16)?;
    if rows.saturating_add(1).saturating_mul(8) > payload.len() {
        return Err(Error::Format("row count exceeds block".into()));
    }
    let indptr = (0..=rows).map(|_| cur.read_u64::<LE>().map(|x| x as usize)).collect::<Result<_, _>>()?;
    let indices = (0..nnz).map(|_| cur.read_u64::<LE>().map(|x| x as usize)).collect::<Result<_, _>>()?;
    let values = (0..nnz).map(|_| cur.read_f64::<LE>()).collect::<Result<_, _>>()?;
    CsrMatrix::from_raw_parts(rows, cols, indptr, indices, values)
}

fn encode_spectral(s: &SpectralModel) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.write_u64::<LE>(s.k() as u64)?;
    out.write_u64::<LE>(s.seed())?;
    out.write_f64::<LE>(s.tolerance())?;
    out.write_u64::<LE>(s.n_rows() as u64)?;
    out.write_u64::<LE>(s.n_cols() as u64)?;
    for &x in s.singular_values() {
        out.write_f64::<LE>(x)?;
    }
    for factor in [s.u(), s.v()] {
        for r in 0..factor.nrows() {
            for c in 0..factor.ncols() {
                out.write_f64::<LE>(factor[(r, c)])?;
            }
        }
    }
    Ok(out)
}

fn decode_spectral(payload: &[u8]) -> Result<SpectralModel> {
    let mut cur = Cursor::new(payload);
    let k = cur.read_u64::<LE>()? as usize;
    let seed = cur.read_u64::<LE>()?;
    let tolerance = cur.read_f64::<LE>()?;
    let rows = cur.read_u64::<LE>()? as usize;
    let cols = cur.read_u64::<LE>()? as usize;
    let needed = k
        .checked_add(rows.saturating_mul(k))
        .and_then(|x| x.checked_add(cols.checked_mul(k)?))
        .and_then(|x| x.checked_mul(8));
    if needed.is_none_or(|n| n > payload.len()) {
        return Err(Error::Format("spectral block is truncated".into()));
    }
    let s = (0..k).map(|_| cur.read_f64::<LE>()).collect::<Result<Vec<_>, _>>()?;
    let mut read_factor = |n: usize| -> Result<DMatrix<f64>> {
        let data = (0..n * k).map(|_| cur.read_f64::<LE>()).collect::<Result<Vec<_>, _>>()?;
        Ok(DMatrix::from_row_slice(n, k, &data))
    };
    let u = read_factor(rows)?;
    let v = read_factor(cols)?;
    SpectralModel::from_parts(u, s, v, seed, tolerance)
}
