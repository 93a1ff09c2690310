use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AttributeColumn, DataError, DescriptorSet};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Stratify {
    /// Whole identities go to exactly one split.
    Identity,
    /// Each category of the named attribute is split proportionally.
    Attribute(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub stratify: Stratify,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train: f64, val: f64, test: f64, stratify: Stratify, seed: u64) -> Self {
        Self {
            train,
            val,
            test,
            stratify,
            seed,
        }
    }

    fn fractions(&self) -> Result<[f64; 3], DataError> {
        let f = [self.train, self.val, self.test];
        if f.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            return Err(DataError::Split(format!(
                "fractions must lie in (0, 1), got {f:?}"
            )));
        }
        if (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(DataError::Split(format!("fractions must sum to 1, got {f:?}")));
        }
        Ok(f)
    }
}

/// Largest-remainder apportionment of `n` units over `fractions`.
fn apportion(n: usize, fractions: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let mut left = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = raw[a] - raw[a].floor();
        let rb = raw[b] - raw[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

/// Like [`apportion`] but moves units so every part gets at least one, when possible.
fn apportion_nonempty(n: usize, fractions: &[f64]) -> Option<Vec<usize>> {
    if n < fractions.len() {
        return None;
    }
    let mut counts = apportion(n, fractions);
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let donor = (0..counts.len()).max_by_key(|&i| (counts[i], usize::MAX - i))?;
        counts[donor] -= 1;
        counts[empty] += 1;
    }
    Some(counts)
}

/// Partition rows into `(train, val, test)`; deterministic given the seed.
pub fn split(
    set: &DescriptorSet,
    spec: &SplitSpec,
) -> Result<(DescriptorSet, DescriptorSet, DescriptorSet), DataError> {
    let fractions = spec.fractions()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut parts: [Vec<usize>; 3] = Default::default();
    match &spec.stratify {
        Stratify::Identity => {
            let mut ids = set.identity_set();
            ids.shuffle(&mut rng);
            let counts = apportion_nonempty(ids.len(), &fractions).ok_or_else(|| {
                DataError::Split(format!(
                    "{} identities cannot fill three non-empty splits",
                    ids.len()
                ))
            })?;
            let mut which = BTreeMap::new();
            let mut it = ids.into_iter();
            for (p, &c) in counts.iter().enumerate() {
                for id in it.by_ref().take(c) {
                    which.insert(id, p);
                }
            }
            for (row, id) in set.identities().iter().enumerate() {
                parts[which[id]].push(row);
            }
        }
        Stratify::Attribute(name) => {
            let col = set.attribute(name)?;
            let mut by_cat: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
            for (row, &c) in col.labels.iter().enumerate() {
                by_cat.entry(c).or_default().push(row);
            }
            for rows in by_cat.values_mut() {
                rows.shuffle(&mut rng);
                let counts = apportion(rows.len(), &fractions);
                let mut it = rows.iter().copied();
                for (p, &c) in counts.iter().enumerate() {
                    parts[p].extend(it.by_ref().take(c));
                }
            }
            for p in &mut parts {
                p.sort_unstable();
            }
        }
    }
    if let Some(i) = parts.iter().position(Vec::is_empty) {
        let name = ["train", "val", "test"][i];
        return Err(DataError::Split(format!("{name} split is empty")));
    }
    Ok((
        set.subset(&parts[0]),
        set.subset(&parts[1]),
        set.subset(&parts[2]),
    ))
}

/// Two identity-disjoint parts with about `fraction` of the identities in the first.
pub fn identity_halves(
    set: &DescriptorSet,
    fraction: f64,
    seed: u64,
) -> Result<(DescriptorSet, DescriptorSet), DataError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::Split(format!(
            "fraction must lie in (0, 1), got {fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = set.identity_set();
    ids.shuffle(&mut rng);
    let counts = apportion_nonempty(ids.len(), &[fraction, 1.0 - fraction]).ok_or_else(|| {
        DataError::Split(format!("{} identities cannot fill two non-empty parts", ids.len()))
    })?;
    let first: std::collections::BTreeSet<u32> = ids[..counts[0]].iter().copied().collect();
    let (a, b): (Vec<usize>, Vec<usize>) =
        (0..set.len()).partition(|&r| first.contains(&set.identities()[r]));
    Ok((set.subset(&a), set.subset(&b)))
}

/// Seeded two-way split of row indices, stratified by `labels`: returns
/// `(kept, held_out)` with about `fraction` of each category held out.
pub fn stratified_holdout(labels: &[u16], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_cat: BTreeMap<u16, Vec<usize>> = BTreeMap::new();
    for (row, &c) in labels.iter().enumerate() {
        by_cat.entry(c).or_default().push(row);
    }
    let mut kept = Vec::new();
    let mut held = Vec::new();
    for rows in by_cat.values_mut() {
        rows.shuffle(&mut rng);
        let counts = apportion(rows.len(), &[1.0 - fraction, fraction]);
        kept.extend_from_slice(&rows[..counts[0]]);
        held.extend_from_slice(&rows[counts[0]..]);
    }
    kept.sort_unstable();
    held.sort_unstable();
    (kept, held)
}

/// Remaps the categories of one attribute; `mapping[old] = new`.
pub fn regroup_attribute(
    set: &DescriptorSet,
    name: &str,
    mapping: &BTreeMap<u16, u16>,
) -> Result<DescriptorSet, DataError> {
    let col = set.attribute(name)?;
    let missing: Vec<u16> = (0..col.categories as u16)
        .filter(|c| !mapping.contains_key(c))
        .collect();
    if !missing.is_empty() {
        return Err(DataError::Mapping(format!(
            "attribute {name:?}: no target for categories {missing:?}"
        )));
    }
    let categories = mapping.values().copied().max().map_or(1, |m| m as u32 + 1);
    let labels = col.labels.iter().map(|l| mapping[l]).collect();
    set.with_attribute(AttributeColumn {
        name: name.to_string(),
        categories,
        labels,
    })
}
