use std::collections::HashSet;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Rgb,
    Thermal,
}

impl Modality {
    pub fn code(self) -> u8 {
        match self {
            Modality::Rgb => 0,
            Modality::Thermal => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Modality::Rgb),
            1 => Some(Modality::Thermal),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Rgb => "rgb",
            Modality::Thermal => "thermal",
        }
    }
}

/// Where each row was captured: metric positions, frame indices, or nothing.
#[derive(Debug, Clone, PartialEq)]
pub enum Locations {
    None,
    Geographic(Vec<[f64; 3]>),
    Frame(Vec<i64>),
}

impl Locations {
    pub fn len(&self) -> Option<usize> {
        match self {
            Locations::None => None,
            Locations::Geographic(v) => Some(v.len()),
            Locations::Frame(v) => Some(v.len()),
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, Locations::None)
    }
}

/// Distance between row `i` of `a` and row `j` of `b`; `None` if the two
/// location kinds are incompatible or absent.
pub fn location_distance(a: &Locations, i: usize, b: &Locations, j: usize) -> Option<f64> {
    match (a, b) {
        (Locations::Geographic(p), Locations::Geographic(q)) => {
            let (p, q) = (p[i], q[j]);
            Some(((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2)).sqrt())
        }
        (Locations::Frame(p), Locations::Frame(q)) => Some((p[i] - q[j]).abs() as f64),
        _ => None,
    }
}

/// A block of row descriptors for one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    vectors: Array2<f64>,
    ids: Vec<String>,
    locations: Locations,
    modality: Modality,
}

impl EmbeddingSet {
    pub fn new(vectors: Array2<f64>, ids: Vec<String>, locations: Locations, modality: Modality) -> Result<Self> {
        let n = vectors.nrows();
        if ids.len() != n {
            return Err(Error::Dimension(format!("{} ids for {} rows", ids.len(), n)));
        }
        if let Some(m) = locations.len() {
            if m != n {
                return Err(Error::Dimension(format!("{m} locations for {n} rows")));
            }
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("embedding contains non-finite values".into()));
        }
        if let Locations::Geographic(p) = &locations {
            if p.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::Validation("positions contain non-finite values".into()));
            }
        }
        let mut seen = HashSet::with_capacity(n);
        for id in &ids {
            if id.contains('\n') {
                return Err(Error::Validation(format!("id {id:?} contains a newline")));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::Validation(format!("duplicate id {id:?}")));
            }
        }
        Ok(EmbeddingSet {
            vectors,
            ids,
            locations,
            modality,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn locations(&self) -> &Locations {
        &self.locations
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    /// Sequence part of an id (`"seq/frame"` -> `"seq"`; ids without a
    /// slash belong to the unnamed sequence `""`).
    pub fn sequence_of(id: &str) -> &str {
        id.rfind('/').map_or("", |i| &id[..i])
    }

    pub fn with_vectors(&self, vectors: Array2<f64>) -> Result<Self> {
        Self::new(vectors, self.ids.clone(), self.locations.clone(), self.modality)
    }

    /// Rows `indices`, in order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let vectors = self.vectors.select(ndarray::Axis(0), indices);
        let ids = indices.iter().map(|&i| self.ids[i].clone()).collect();
        let locations = match &self.locations {
            Locations::None => Locations::None,
            Locations::Geographic(p) => Locations::Geographic(indices.iter().map(|&i| p[i]).collect()),
            Locations::Frame(f) => Locations::Frame(indices.iter().map(|&i| f[i]).collect()),
        };
        EmbeddingSet {
            vectors,
            ids,
            locations,
            modality: self.modality,
        }
    }
}
