//! Synthetic descriptors with a tunable amount of attribute leakage.
//!
//! Each identity gets a random unit-norm center. Every attribute category owns a
//! fixed unit direction; all category directions are mutually orthonormal and,
//! when the dimension leaves room, orthogonal to the subspace the centers live in.
//! A sample is `center + spread·N(0, I) + Σ_attr leak·direction(category)`.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{AttributeColumn, DataError, DescriptorSet};

/// How identities are mapped to the categories of one attribute.
#[derive(Debug, Clone, PartialEq)]
pub enum Assignment {
    /// Random permutation of identities, then category `position mod N_att`.
    Balanced,
    /// Category per identity, indexed by identity label.
    Explicit(Vec<u16>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeSpec {
    pub name: String,
    pub categories: usize,
    pub leak_strength: f64,
    pub assignment: Assignment,
}

impl AttributeSpec {
    pub fn balanced(name: impl Into<String>, categories: usize, leak_strength: f64) -> Self {
        Self {
            name: name.into(),
            categories,
            leak_strength,
            assignment: Assignment::Balanced,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_identities: usize,
    pub samples_per_identity: usize,
    pub dim: usize,
    pub attributes: Vec<AttributeSpec>,
    pub cluster_spread: f64,
    pub seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<(), DataError> {
        let spec = |m: String| Err(DataError::Spec(m));
        if self.n_identities == 0 || self.samples_per_identity == 0 || self.dim == 0 {
            return spec("identities, samples per identity and dim must be positive".into());
        }
        if !(self.cluster_spread > 0.0 && self.cluster_spread.is_finite()) {
            return spec(format!(
                "cluster spread must be positive, got {}",
                self.cluster_spread
            ));
        }
        let needed: usize = self.attributes.iter().map(|a| a.categories).sum();
        if needed > self.dim {
            return spec(format!(
                "dim {} cannot host {needed} orthogonal attribute directions",
                self.dim
            ));
        }
        for a in &self.attributes {
            if a.categories < 2 {
                return spec(format!("attribute {:?} needs at least 2 categories", a.name));
            }
            if a.categories > u16::MAX as usize {
                return spec(format!("attribute {:?} has too many categories", a.name));
            }
            if !(a.leak_strength >= 0.0 && a.leak_strength.is_finite()) {
                return spec(format!("attribute {:?} leak strength must be >= 0", a.name));
            }
            if let Assignment::Explicit(map) = &a.assignment {
                if map.len() != self.n_identities {
                    return spec(format!(
                        "attribute {:?} assignment covers {} of {} identities",
                        a.name,
                        map.len(),
                        self.n_identities
                    ));
                }
                if map.iter().any(|&c| c as usize >= a.categories) {
                    return spec(format!("attribute {:?} assignment out of range", a.name));
                }
            }
        }
        Ok(())
    }
}

/// Random orthonormal basis of R^dim (rows), via Gram-Schmidt on Gaussian draws.
fn orthonormal_basis(dim: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut basis = Array2::<f64>::zeros((dim, dim));
    let mut k = 0;
    while k < dim {
        let mut v: Array1<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        for j in 0..k {
            let proj = v.dot(&basis.row(j));
            v.scaled_add(-proj, &basis.row(j));
        }
        let norm = v.dot(&v).sqrt();
        if norm < 1e-8 {
            continue;
        }
        basis.row_mut(k).assign(&(v / norm));
        k += 1;
    }
    basis
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<DescriptorSet, DataError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = spec.dim;
    let basis = orthonormal_basis(dim, &mut rng);

    // Attribute directions take the first rows of the basis; centers use the rest.
    let mut offset = 0;
    let mut directions = Vec::with_capacity(spec.attributes.len());
    for a in &spec.attributes {
        directions.push(basis.slice(ndarray::s![offset..offset + a.categories, ..]).to_owned());
        offset += a.categories;
    }
    let center_space = if offset < dim {
        basis.slice(ndarray::s![offset.., ..]).to_owned()
    } else {
        basis.clone()
    };

    let mut centers = Array2::<f64>::zeros((spec.n_identities, dim));
    for mut c in centers.rows_mut() {
        let coeffs: Array1<f64> = (0..center_space.nrows())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let v = coeffs.dot(&center_space);
        let norm = v.dot(&v).sqrt().max(f64::MIN_POSITIVE);
        c.assign(&(v / norm));
    }

    let mut assignments = Vec::with_capacity(spec.attributes.len());
    for a in &spec.attributes {
        let map = match &a.assignment {
            Assignment::Explicit(map) => map.clone(),
            Assignment::Balanced => {
                let mut order: Vec<usize> = (0..spec.n_identities).collect();
                order.shuffle(&mut rng);
                let mut map = vec![0u16; spec.n_identities];
                for (pos, &id) in order.iter().enumerate() {
                    map[id] = (pos % a.categories) as u16;
                }
                map
            }
        };
        assignments.push(map);
    }

    let n = spec.n_identities * spec.samples_per_identity;
    let mut features = Array2::<f32>::zeros((n, dim));
    let mut identities = Vec::with_capacity(n);
    let mut labels = vec![Vec::with_capacity(n); spec.attributes.len()];
    let mut row = 0;
    #[allow(clippy::needless_range_loop)]
    for id in 0..spec.n_identities {
        let mut base = centers.row(id).to_owned();
        for (a, attr) in spec.attributes.iter().enumerate() {
            let cat = assignments[a][id] as usize;
            base.scaled_add(attr.leak_strength, &directions[a].row(cat));
        }
        for _ in 0..spec.samples_per_identity {
            for (j, out) in features.row_mut(row).iter_mut().enumerate() {
                let noise: f64 = StandardNormal.sample(&mut rng);
                *out = (base[j] + spec.cluster_spread * noise) as f32;
            }
            identities.push(id as u32);
            for (a, l) in labels.iter_mut().enumerate() {
                l.push(assignments[a][id]);
            }
            row += 1;
        }
    }

    let attributes = spec
        .attributes
        .iter()
        .zip(labels)
        .map(|(a, labels)| AttributeColumn {
            name: a.name.clone(),
            categories: a.categories as u32,
            labels,
        })
        .collect();
    DescriptorSet::new(features, identities, attributes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(leak: f64) -> SynthSpec {
        SynthSpec {
            n_identities: 12,
            samples_per_identity: 4,
            dim: 16,
            attributes: vec![
                AttributeSpec::balanced("gender", 2, leak),
                AttributeSpec::balanced("skintone", 3, leak),
            ],
            cluster_spread: 0.1,
            seed: 11,
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = generate_synthetic(&spec(0.5)).unwrap();
        let b = generate_synthetic(&spec(0.5)).unwrap();
        assert_eq!(a, b);
        let mut other = spec(0.5);
        other.seed = 12;
        assert_ne!(generate_synthetic(&other).unwrap(), a);
    }

    #[test]
    fn identity_tied_to_single_category() {
        let set = generate_synthetic(&spec(1.0)).unwrap();
        let g = set.attribute("gender").unwrap();
        for id in set.identity_set() {
            let cats: std::collections::BTreeSet<u16> = set
                .identities()
                .iter()
                .zip(&g.labels)
                .filter(|(&i, _)| i == id)
                .map(|(_, &c)| c)
                .collect();
            assert_eq!(cats.len(), 1);
        }
        let ones = g.labels.iter().filter(|&&c| c == 1).count();
        assert_eq!(ones, set.len() / 2);
    }

    #[test]
    fn dim_too_small_is_spec_error() {
        let mut s = spec(1.0);
        s.dim = 2;
        s.attributes.push(AttributeSpec::balanced("age", 2, 1.0));
        assert!(matches!(generate_synthetic(&s), Err(DataError::Spec(_))));
    }

    #[test]
    fn single_category_rejected() {
        let mut s = spec(1.0);
        s.attributes[0].categories = 1;
        assert!(generate_synthetic(&s).is_err());
    }

    #[test]
    fn basis_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = orthonormal_basis(10, &mut rng);
        let gram = b.dot(&b.t());
        for i in 0..10 {
            for j in 0..10 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - want).abs() < 1e-10);
            }
        }
    }
}
