use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Images stored as 8-bit channel-planar pixels; batches are scaled to `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pixels: Vec<u8>,
    labels: Vec<usize>,
    shape: [usize; 3],
    classes: usize,
    provenance: String,
}

impl Dataset {
    pub fn new(
        pixels: Vec<u8>,
        labels: Vec<usize>,
        shape: [usize; 3],
        classes: usize,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::contract("dataset has no samples"));
        }
        if shape.contains(&0) || classes == 0 {
            return Err(Error::contract(format!(
                "dataset shape {shape:?} with {classes} classes"
            )));
        }
        let per: usize = shape.iter().product();
        if pixels.len() != per * labels.len() {
            return Err(Error::contract(format!(
                "{} pixel bytes for {} samples of {shape:?}",
                pixels.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::contract(format!(
                "label {l} out of range for {classes} classes"
            )));
        }
        Ok(Dataset {
            pixels,
            labels,
            shape,
            classes,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let per = self.sample_len();
        &self.pixels[i * per..(i + 1) * per]
    }

    fn sample_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for &l in &self.labels {
            c[l] += 1;
        }
        c
    }

    /// `[N, C, H, W]` tensor of the selected samples, scaled to `[0, 1]`.
    pub fn batch(&self, indices: &[usize]) -> Tensor {
        let per = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend(self.image(i).iter().map(|&p| p as f64 / 255.0));
        }
        let [c, h, w] = self.shape;
        Tensor::new(vec![indices.len(), c, h, w], data).expect("batch extents match")
    }

    pub fn batch_labels(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let mut pixels = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            pixels.extend_from_slice(self.image(i));
        }
        Dataset::new(
            pixels,
            self.batch_labels(indices),
            self.shape,
            self.classes,
            self.provenance.clone(),
        )
    }
}
