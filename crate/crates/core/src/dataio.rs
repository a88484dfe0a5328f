//! Datasets of (subject, attribute vector, image feature vector) records, the
//! synthetic generator, and the line-oriented dataset format
//! `subject_id | a₀ a₁ … | f₀ f₁ …`.

use std::fmt::Write as _;
use std::io::BufRead;

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::adcmh::InputBatch;
use crate::channel::rng_stream;
use crate::error::{Error, Result};
use crate::retrieval::ItemMeta;

pub const DEFAULT_D_ATTR: usize = 40;
pub const DEFAULT_D_IMG: usize = 128;

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRecord {
    pub subject_id: u64,
    pub attributes: Vec<u8>,
    pub image_features: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub records: Vec<DatasetRecord>,
}

impl Dataset {
    pub fn new(records: Vec<DatasetRecord>) -> Result<Self> {
        let ds = Self { records };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.records.first() else {
            return Ok(());
        };
        let (da, di) = (first.attributes.len(), first.image_features.len());
        for (i, r) in self.records.iter().enumerate() {
            if r.attributes.len() != da {
                return Err(Error::Format(format!("record {i}: {} attributes, expected {da}", r.attributes.len())));
            }
            if r.image_features.len() != di {
                return Err(Error::Format(format!("record {i}: {} features, expected {di}", r.image_features.len())));
            }
            if r.attributes.iter().any(|&a| a > 1) {
                return Err(Error::Format(format!("record {i}: attribute outside {{0, 1}}")));
            }
            if r.image_features.iter().any(|f| !f.is_finite()) {
                return Err(Error::Format(format!("record {i}: non-finite feature")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn d_attr(&self) -> usize {
        self.records.first().map_or(0, |r| r.attributes.len())
    }

    pub fn d_img(&self) -> usize {
        self.records.first().map_or(0, |r| r.image_features.len())
    }

    /// `S[i][j] = 1` iff the subject of image `i` has exactly attribute set `j`.
    pub fn similar(&self, i: usize, j: usize) -> bool {
        self.records[i].attributes == self.records[j].attributes
    }

    pub fn metadata(&self) -> Vec<ItemMeta> {
        self.records
            .iter()
            .map(|r| ItemMeta {
                subject_id: r.subject_id,
                attributes: r.attributes.clone(),
            })
            .collect()
    }

    pub fn image_matrix(&self, indices: &[usize]) -> Array2<f64> {
        let mut m = Array2::zeros((indices.len(), self.d_img()));
        for (row, &i) in indices.iter().enumerate() {
            for (c, &v) in self.records[i].image_features.iter().enumerate() {
                m[[row, c]] = v;
            }
        }
        m
    }

    pub fn attribute_matrix(&self, indices: &[usize]) -> Array2<f64> {
        let mut m = Array2::zeros((indices.len(), self.d_attr()));
        for (row, &i) in indices.iter().enumerate() {
            for (c, &v) in self.records[i].attributes.iter().enumerate() {
                m[[row, c]] = f64::from(v);
            }
        }
        m
    }

    pub fn similarity_matrix(&self, indices: &[usize]) -> Array2<f64> {
        Array2::from_shape_fn((indices.len(), indices.len()), |(a, b)| {
            f64::from(u8::from(self.similar(indices[a], indices[b])))
        })
    }

    pub fn batch(&self, indices: &[usize]) -> InputBatch {
        InputBatch {
            images: self.image_matrix(indices),
            attributes: self.attribute_matrix(indices),
            similarity: self.similarity_matrix(indices),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let attrs: Vec<String> = r.attributes.iter().map(u8::to_string).collect();
            let feats: Vec<String> = r.image_features.iter().map(f64::to_string).collect();
            let _ = writeln!(out, "{} | {} | {}", r.subject_id, attrs.join(" "), feats.join(" "));
        }
        out
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read(std::io::BufReader::new(f))
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut records = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split('|').collect();
            if parts.len() != 3 {
                return Err(Error::parse(lineno, "expected `subject_id | attributes | features`"));
            }
            let subject_id = parts[0]
                .trim()
                .parse::<u64>()
                .map_err(|e| Error::parse(lineno, format!("subject id: {e}")))?;
            let attributes = parts[1]
                .split_whitespace()
                .map(|a| match a {
                    "0" => Ok(0u8),
                    "1" => Ok(1u8),
                    other => Err(Error::parse(lineno, format!("attribute value {other:?} is not 0 or 1"))),
                })
                .collect::<Result<Vec<_>>>()?;
            let image_features = parts[2]
                .split_whitespace()
                .map(|f| {
                    let v = f
                        .parse::<f64>()
                        .map_err(|e| Error::parse(lineno, format!("feature {f:?}: {e}")))?;
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(Error::parse(lineno, format!("feature {f:?} is not finite")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = records.first() {
                let first: &DatasetRecord = first;
                if first.attributes.len() != attributes.len() || first.image_features.len() != image_features.len() {
                    return Err(Error::parse(lineno, "record width differs from the first record"));
                }
            }
            records.push(DatasetRecord {
                subject_id,
                attributes,
                image_features,
            });
        }
        Ok(Self { records })
    }

    /// Moves the last `test_per_subject` records of every subject into a
    /// second dataset, preserving order.
    pub fn split_per_subject(&self, test_per_subject: usize) -> (Dataset, Dataset) {
        let mut remaining = std::collections::HashMap::new();
        for r in &self.records {
            *remaining.entry(r.subject_id).or_insert(0usize) += 1;
        }
        let mut train = Vec::new();
        let mut test = Vec::new();
        for r in &self.records {
            let left = remaining.get_mut(&r.subject_id).expect("counted");
            if *left <= test_per_subject {
                test.push(r.clone());
            } else {
                train.push(r.clone());
            }
            *left -= 1;
        }
        (Dataset { records: train }, Dataset { records: test })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub n_subjects: usize,
    pub images_per_subject: usize,
    pub d_attr: usize,
    pub d_img: usize,
    pub attribute_density: f64,
    pub feature_noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_subjects: 50,
            images_per_subject: 10,
            d_attr: DEFAULT_D_ATTR,
            d_img: DEFAULT_D_IMG,
            attribute_density: 0.5,
            feature_noise_std: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_subjects == 0 || self.images_per_subject == 0 || self.d_attr == 0 || self.d_img == 0 {
            return Err(Error::Parameter("synthetic counts must all be ≥ 1".into()));
        }
        if !(self.attribute_density > 0.0 && self.attribute_density < 1.0) {
            return Err(Error::Parameter(format!(
                "attribute density {} outside (0, 1)",
                self.attribute_density
            )));
        }
        if !(self.feature_noise_std >= 0.0) || !self.feature_noise_std.is_finite() {
            return Err(Error::Parameter("feature noise must be finite and ≥ 0".into()));
        }
        Ok(())
    }
}

/// Subjects get Bernoulli attribute vectors; the subject prototype is a fixed
/// random linear map of the ±1-coded attributes, and every image is the
/// prototype plus isotropic Gaussian noise.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut embed_rng = rng_stream(spec.seed, 0);
    let mut attr_rng = rng_stream(spec.seed, 1);
    let mut noise_rng = rng_stream(spec.seed, 2);
    let scale = 1.0 / (spec.d_attr as f64).sqrt();
    let embedding: Vec<f64> = (0..spec.d_img * spec.d_attr)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut embed_rng);
            z * scale
        })
        .collect();
    let mut records = Vec::with_capacity(spec.n_subjects * spec.images_per_subject);
    for subject in 0..spec.n_subjects {
        let attributes: Vec<u8> = (0..spec.d_attr)
            .map(|_| u8::from(attr_rng.random_bool(spec.attribute_density)))
            .collect();
        let signed: Vec<f64> = attributes.iter().map(|&a| 2.0 * f64::from(a) - 1.0).collect();
        let prototype: Vec<f64> = embedding
            .chunks(spec.d_attr)
            .map(|row| row.iter().zip(&signed).map(|(w, s)| w * s).sum())
            .collect();
        for _ in 0..spec.images_per_subject {
            let image_features = prototype
                .iter()
                .map(|&p| {
                    let z: f64 = StandardNormal.sample(&mut noise_rng);
                    p + spec.feature_noise_std * z
                })
                .collect();
            records.push(DatasetRecord {
                subject_id: subject as u64,
                attributes: attributes.clone(),
                image_features,
            });
        }
    }
    Ok(Dataset { records })
}
