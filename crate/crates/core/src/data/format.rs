//! `PASSDESC` binary descriptor files and CSV import.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "PASSDESC" | u32 version = 1 | u32 D | u64 N | u32 attr_count
//! per attribute: u16 name_len | name bytes (utf-8) | u32 N_att
//! features: N·D f32, row-major
//! identity labels: N u32
//! per attribute: N u16
//! ```

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{AttributeColumn, DataError, DescriptorSet};

pub const DESCRIPTOR_MAGIC: &[u8; 8] = b"PASSDESC";
pub const DESCRIPTOR_VERSION: u32 = 1;

pub fn encode_descriptors(set: &DescriptorSet) -> Vec<u8> {
    let n = set.len();
    let d = set.dim();
    let mut out = Vec::with_capacity(32 + n * d * 4 + n * 4 + n * 2 * set.attributes().len());
    out.extend_from_slice(DESCRIPTOR_MAGIC);
    out.extend_from_slice(&DESCRIPTOR_VERSION.to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(set.attributes().len() as u32).to_le_bytes());
    for attr in set.attributes() {
        out.extend_from_slice(&(attr.name.len() as u16).to_le_bytes());
        out.extend_from_slice(attr.name.as_bytes());
        out.extend_from_slice(&attr.categories.to_le_bytes());
    }
    for v in set.features().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for id in set.identities() {
        out.extend_from_slice(&id.to_le_bytes());
    }
    for attr in set.attributes() {
        for l in &attr.labels {
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], DataError> {
        let available = self.bytes.len() - self.pos;
        if len > available {
            return Err(DataError::Truncated {
                offset: self.pos,
                needed: len,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, DataError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, DataError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Fails before allocating if `count * width` bytes are not present.
    fn array(&mut self, count: u64, width: usize) -> Result<&'a [u8], DataError> {
        let available = self.bytes.len() - self.pos;
        let needed = count
            .checked_mul(width as u64)
            .filter(|&b| b <= available as u64)
            .ok_or(DataError::Truncated {
                offset: self.pos,
                needed: usize::try_from(count.saturating_mul(width as u64)).unwrap_or(usize::MAX),
                available,
            })?;
        self.take(needed as usize)
    }
}

pub fn decode_descriptors(bytes: &[u8]) -> Result<DescriptorSet, DataError> {
    let mut r = Reader { bytes, pos: 0 };
    let head = &bytes[..bytes.len().min(8)];
    if head != &DESCRIPTOR_MAGIC[..head.len()] {
        return Err(DataError::BadMagic {
            expected: "PASSDESC",
        });
    }
    r.take(8)?;
    let version = r.u32()?;
    if version != DESCRIPTOR_VERSION {
        return Err(DataError::Version {
            found: version,
            expected: DESCRIPTOR_VERSION,
        });
    }
    let d = r.u32()? as u64;
    let n = r.u64()?;
    let attr_count = r.u32()?;
    let mut headers = Vec::new();
    for _ in 0..attr_count {
        let len = r.u16()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| DataError::Csv("attribute name is not utf-8".into()))?;
        let categories = r.u32()?;
        headers.push((name, categories));
    }
    let feat_bytes = r.array(n.saturating_mul(d), 4)?;
    let features: Vec<f32> = feat_bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let id_bytes = r.array(n, 4)?;
    let identities: Vec<u32> = id_bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut attributes = Vec::with_capacity(headers.len());
    for (name, categories) in headers {
        let bytes = r.array(n, 2)?;
        let labels = bytes
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes(c.try_into().unwrap()))
            .collect();
        attributes.push(AttributeColumn {
            name,
            categories,
            labels,
        });
    }
    let rest = bytes.len() - r.pos;
    if rest != 0 {
        return Err(DataError::TrailingBytes(rest));
    }
    let features = Array2::from_shape_vec((n as usize, d as usize), features)
        .map_err(|_| DataError::Empty)?;
    DescriptorSet::new(features, identities, attributes)
}

pub fn write_descriptors(set: &DescriptorSet, path: impl AsRef<Path>) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, encode_descriptors(set)).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_descriptors(path: impl AsRef<Path>) -> Result<DescriptorSet, DataError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    decode_descriptors(&bytes)
}

/// Imports descriptors from CSV with header `id,a1,...,aD,<attr>...`.
///
/// Feature columns are the contiguous `a<k>` columns after `id`; every later
/// column is an integer-coded attribute whose category count is `max + 1`.
pub fn read_descriptors_csv(path: impl AsRef<Path>) -> Result<DescriptorSet, DataError> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| DataError::Csv(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| DataError::Csv(e.to_string()))?
        .clone();
    if headers.get(0).map(str::trim) != Some("id") {
        return Err(DataError::Csv("first column must be `id`".into()));
    }
    let is_feature = |h: &str| {
        h.strip_prefix('a')
            .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
    };
    let dim = headers
        .iter()
        .skip(1)
        .take_while(|h| is_feature(h.trim()))
        .count();
    if dim == 0 {
        return Err(DataError::Csv("no feature columns a1..aD".into()));
    }
    let attr_names: Vec<String> = headers
        .iter()
        .skip(1 + dim)
        .map(|h| h.trim().to_string())
        .collect();

    let mut features = Vec::new();
    let mut identities = Vec::new();
    let mut labels: Vec<Vec<u16>> = vec![Vec::new(); attr_names.len()];
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| DataError::Csv(e.to_string()))?;
        let field = |i: usize| record.get(i).map(str::trim).unwrap_or("");
        let bad = |col: &str| DataError::Csv(format!("row {}: bad value in column {col}", line + 1));
        identities.push(field(0).parse::<u32>().map_err(|_| bad("id"))?);
        for k in 0..dim {
            features.push(
                field(1 + k)
                    .parse::<f32>()
                    .map_err(|_| bad(&headers[1 + k]))?,
            );
        }
        for (a, name) in attr_names.iter().enumerate() {
            labels[a].push(field(1 + dim + a).parse::<u16>().map_err(|_| bad(name))?);
        }
    }
    let n = identities.len();
    let features =
        Array2::from_shape_vec((n, dim), features).map_err(|e| DataError::Csv(e.to_string()))?;
    let attributes = attr_names
        .into_iter()
        .zip(labels)
        .map(|(name, labels)| {
            let categories = labels.iter().copied().max().map_or(1, |m| m as u32 + 1);
            AttributeColumn {
                name,
                categories,
                labels,
            }
        })
        .collect();
    DescriptorSet::new(features, identities, attributes)
}
