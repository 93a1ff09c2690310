use std::collections::BTreeMap;
use std::path::Path;

use ndarray::ArrayView2;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::data::DescriptorSet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub i: usize,
    pub j: usize,
    pub genuine: bool,
    /// Shared category of both endpoints, when the pair belongs to a group.
    pub group: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairList {
    pub pairs: Vec<Pair>,
}

impl PairList {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn genuine_flags(&self) -> Vec<bool> {
        self.pairs.iter().map(|p| p.genuine).collect()
    }

    /// Distinct group tags in sorted order.
    pub fn groups(&self) -> Vec<String> {
        let mut g: Vec<String> = self.pairs.iter().filter_map(|p| p.group.clone()).collect();
        g.sort();
        g.dedup();
        g
    }

    pub fn check_indices(&self, rows: usize) -> Result<(), MetricsError> {
        for (n, p) in self.pairs.iter().enumerate() {
            for row in [p.i, p.j] {
                if row >= rows {
                    return Err(MetricsError::PairIndex { pair: n, row, rows });
                }
            }
        }
        Ok(())
    }

    /// CSV with header `i,j,genuine,group`; `genuine` is 0/1 and `group` may be empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("i,j,genuine,group\n");
        for p in &self.pairs {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.i,
                p.j,
                u8::from(p.genuine),
                p.group.as_deref().unwrap_or("")
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, MetricsError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| MetricsError::Csv(e.to_string()))?
            .clone();
        let expected = ["i", "j", "genuine", "group"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(MetricsError::Csv(format!(
                "pair header must be i,j,genuine,group, got {}",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut pairs = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| MetricsError::Csv(e.to_string()))?;
            let bad = |what: &str| MetricsError::Csv(format!("row {}: bad {what}", line + 1));
            let i = rec[0].trim().parse().map_err(|_| bad("i"))?;
            let j = rec[1].trim().parse().map_err(|_| bad("j"))?;
            let genuine = match rec[2].trim() {
                "1" | "true" => true,
                "0" | "false" => false,
                _ => return Err(bad("genuine flag")),
            };
            let group = Some(rec[3].trim().to_string()).filter(|g| !g.is_empty());
            pairs.push(Pair {
                i,
                j,
                genuine,
                group,
            });
        }
        Ok(Self { pairs })
    }

    pub fn read_csv(path: &Path) -> Result<Self, MetricsError> {
        let text = std::fs::read_to_string(path).map_err(|source| MetricsError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv(&text)
    }

    pub fn write_csv(&self, path: &Path) -> Result<(), MetricsError> {
        std::fs::write(path, self.to_csv()).map_err(|source| MetricsError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Cosine similarity of each pair's rows.
pub fn cosine_scores(
    features: ArrayView2<f64>,
    pairs: &PairList,
) -> Result<Vec<f64>, MetricsError> {
    pairs.check_indices(features.nrows())?;
    let norms: Vec<f64> = features.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    pairs
        .pairs
        .iter()
        .map(|p| {
            for row in [p.i, p.j] {
                if norms[row] == 0.0 {
                    return Err(MetricsError::ZeroNorm(row));
                }
            }
            let dot = features.row(p.i).dot(&features.row(p.j));
            Ok((dot / (norms[p.i] * norms[p.j])).clamp(-1.0, 1.0))
        })
        .collect()
}

/// How [`verification_pairs`] draws pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct PairProtocol {
    pub genuine: usize,
    pub impostor: usize,
    /// When set, every pair is drawn inside one category of this attribute
    /// (categories chosen in turn) and tagged with it.
    pub group_attribute: Option<String>,
    pub seed: u64,
}

/// Random genuine and impostor pairs over the rows of `set`, drawn with replacement.
pub fn verification_pairs(
    set: &DescriptorSet,
    protocol: &PairProtocol,
) -> Result<PairList, MetricsError> {
    let mut rows_by_id: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (row, &id) in set.identities().iter().enumerate() {
        rows_by_id.entry(id).or_default().push(row);
    }
    // Pools of identities, one per group (or a single untagged pool).
    let mut pools: Vec<(Option<String>, Vec<u32>)> = Vec::new();
    match &protocol.group_attribute {
        Some(name) => {
            let col = set.attribute(name)?;
            let mut by_cat: BTreeMap<u16, Vec<u32>> = BTreeMap::new();
            for (&id, rows) in &rows_by_id {
                let cat = col.labels[rows[0]];
                if rows.iter().any(|&r| col.labels[r] != cat) {
                    return Err(MetricsError::Protocol(format!(
                        "identity {id} spans several {name} categories"
                    )));
                }
                by_cat.entry(cat).or_default().push(id);
            }
            for (cat, ids) in by_cat {
                pools.push((Some(cat.to_string()), ids));
            }
        }
        None => pools.push((None, rows_by_id.keys().copied().collect())),
    }
    for (tag, ids) in &pools {
        let label = tag.as_deref().unwrap_or("all");
        if protocol.impostor > 0 && ids.len() < 2 {
            return Err(MetricsError::Protocol(format!(
                "group {label} needs two identities for impostor pairs"
            )));
        }
        if protocol.genuine > 0 && !ids.iter().any(|id| rows_by_id[id].len() >= 2) {
            return Err(MetricsError::Protocol(format!(
                "group {label} has no identity with two samples"
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(protocol.seed);
    let mut pairs = Vec::with_capacity(protocol.genuine + protocol.impostor);
    for n in 0..protocol.genuine {
        let (tag, ids) = &pools[n % pools.len()];
        let multi: Vec<u32> = ids
            .iter()
            .copied()
            .filter(|id| rows_by_id[id].len() >= 2)
            .collect();
        let id = *multi.choose(&mut rng).expect("checked above");
        let rows = &rows_by_id[&id];
        let a = rng.random_range(0..rows.len());
        let mut b = rng.random_range(0..rows.len() - 1);
        if b >= a {
            b += 1;
        }
        pairs.push(Pair {
            i: rows[a],
            j: rows[b],
            genuine: true,
            group: tag.clone(),
        });
    }
    for n in 0..protocol.impostor {
        let (tag, ids) = &pools[n % pools.len()];
        let a = rng.random_range(0..ids.len());
        let mut b = rng.random_range(0..ids.len() - 1);
        if b >= a {
            b += 1;
        }
        let ra = rows_by_id[&ids[a]].choose(&mut rng).copied().expect("non-empty");
        let rb = rows_by_id[&ids[b]].choose(&mut rng).copied().expect("non-empty");
        pairs.push(Pair {
            i: ra,
            j: rb,
            genuine: false,
            group: tag.clone(),
        });
    }
    Ok(PairList { pairs })
}
