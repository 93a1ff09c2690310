//! Descriptor datasets: storage, file formats, splits and the synthetic generator.

mod format;
mod split;
mod synth;

pub use format::{
    decode_descriptors, encode_descriptors, read_descriptors, read_descriptors_csv,
    write_descriptors, DESCRIPTOR_MAGIC, DESCRIPTOR_VERSION,
};
pub use split::{identity_halves, regroup_attribute, split, stratified_holdout, SplitSpec, Stratify};
pub use synth::{generate_synthetic, Assignment, AttributeSpec, SynthSpec};

use std::collections::BTreeSet;

use ndarray::{Array2, ArrayView2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("truncated file: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("label count mismatch for {column}: expected {expected}, found {found}")]
    LabelCount {
        column: String,
        expected: usize,
        found: usize,
    },
    #[error("label {label} of attribute {attribute:?} is outside its {categories} categories")]
    LabelRange {
        attribute: String,
        label: u32,
        categories: u32,
    },
    #[error("feature matrix contains a non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("descriptor set must have at least one row and one column")]
    Empty,
    #[error("unknown attribute {name:?}; available: [{}]", available.join(", "))]
    UnknownAttribute { name: String, available: Vec<String> },
    #[error("duplicate attribute {0:?}")]
    DuplicateAttribute(String),
    #[error("invalid synthetic spec: {0}")]
    Spec(String),
    #[error("invalid split: {0}")]
    Split(String),
    #[error("invalid mapping: {0}")]
    Mapping(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// One categorical label column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeColumn {
    pub name: String,
    /// Number of categories (`N_att`).
    pub categories: u32,
    pub labels: Vec<u16>,
}

impl AttributeColumn {
    pub fn new(name: impl Into<String>, categories: u32, labels: Vec<u16>) -> Self {
        Self {
            name: name.into(),
            categories,
            labels,
        }
    }

    pub fn labels_usize(&self) -> Vec<usize> {
        self.labels.iter().map(|&l| l as usize).collect()
    }
}

/// Feature vectors with an identity label and any number of categorical attributes.
///
/// Features are stored in single precision; training code converts to `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    features: Array2<f32>,
    identities: Vec<u32>,
    attributes: Vec<AttributeColumn>,
}

impl DescriptorSet {
    pub fn new(
        features: Array2<f32>,
        identities: Vec<u32>,
        attributes: Vec<AttributeColumn>,
    ) -> Result<Self, DataError> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(DataError::Empty);
        }
        if let Some(((row, col), _)) = features.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(DataError::NonFinite { row, col });
        }
        if identities.len() != n {
            return Err(DataError::LabelCount {
                column: "identity".into(),
                expected: n,
                found: identities.len(),
            });
        }
        let mut seen = BTreeSet::new();
        for attr in &attributes {
            if !seen.insert(attr.name.as_str()) {
                return Err(DataError::DuplicateAttribute(attr.name.clone()));
            }
            if attr.labels.len() != n {
                return Err(DataError::LabelCount {
                    column: attr.name.clone(),
                    expected: n,
                    found: attr.labels.len(),
                });
            }
            if let Some(&bad) = attr.labels.iter().find(|&&l| l as u32 >= attr.categories) {
                return Err(DataError::LabelRange {
                    attribute: attr.name.clone(),
                    label: bad as u32,
                    categories: attr.categories,
                });
            }
        }
        Ok(Self {
            features,
            identities,
            attributes,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, f32> {
        self.features.view()
    }

    pub fn features_f64(&self) -> Array2<f64> {
        self.features.mapv(f64::from)
    }

    pub fn identities(&self) -> &[u32] {
        &self.identities
    }

    /// Distinct identity labels in ascending order.
    pub fn identity_set(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.identities.iter().copied().collect();
        set.into_iter().collect()
    }

    pub fn attributes(&self) -> &[AttributeColumn] {
        &self.attributes
    }

    pub fn attribute_names(&self) -> Vec<String> {
        self.attributes.iter().map(|a| a.name.clone()).collect()
    }

    pub fn attribute(&self, name: &str) -> Result<&AttributeColumn, DataError> {
        self.attributes
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| DataError::UnknownAttribute {
                name: name.to_string(),
                available: self.attribute_names(),
            })
    }

    /// Rows selected by index, in the given order. Category counts are kept.
    pub fn subset(&self, rows: &[usize]) -> DescriptorSet {
        let features = self.features.select(ndarray::Axis(0), rows);
        let identities = rows.iter().map(|&r| self.identities[r]).collect();
        let attributes = self
            .attributes
            .iter()
            .map(|a| AttributeColumn {
                name: a.name.clone(),
                categories: a.categories,
                labels: rows.iter().map(|&r| a.labels[r]).collect(),
            })
            .collect();
        DescriptorSet {
            features,
            identities,
            attributes,
        }
    }

    /// Same labels, new feature matrix (row count must match).
    pub fn with_features(&self, features: Array2<f32>) -> Result<DescriptorSet, DataError> {
        DescriptorSet::new(features, self.identities.clone(), self.attributes.clone())
    }

    /// Replace (or append) an attribute column.
    pub fn with_attribute(&self, column: AttributeColumn) -> Result<DescriptorSet, DataError> {
        let mut attributes = self.attributes.clone();
        match attributes.iter_mut().find(|a| a.name == column.name) {
            Some(slot) => *slot = column,
            None => attributes.push(column),
        }
        DescriptorSet::new(self.features.clone(), self.identities.clone(), attributes)
    }
}
