//! Gaussian-blob classification task, the desk-scale stand-in for image
//! benchmarks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::federation::LabeledDataset;
use crate::rng::Rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BlobsSpec {
    pub classes: usize,
    pub dims: usize,
    pub per_class: usize,
    /// Class centers sit on a circle of this radius in the first two dims.
    pub radius: f64,
    /// Within-class standard deviation.
    pub std: f64,
}

impl BlobsSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.dims == 0 || self.per_class == 0 {
            return Err(Error::InvalidArgument("blob counts must be positive".into()));
        }
        if self.radius <= 0.0 || self.std < 0.0 {
            return Err(Error::InvalidArgument("blob geometry must be positive".into()));
        }
        Ok(())
    }

    fn center(&self, class: usize) -> Vec<f64> {
        let mut c = vec![0.0; self.dims];
        let angle = 2.0 * std::f64::consts::PI * class as f64 / self.classes as f64;
        c[0] = self.radius * angle.cos();
        if self.dims > 1 {
            c[1] = self.radius * angle.sin();
        }
        c
    }
}

/// Samples `per_class` points per class around fixed circle centers.
pub fn generate_blobs(spec: &BlobsSpec, rng: &mut Rng) -> Result<LabeledDataset> {
    spec.validate()?;
    let n = spec.classes * spec.per_class;
    let mut data = Vec::with_capacity(n * spec.dims);
    let mut labels = Vec::with_capacity(n);
    for k in 0..spec.classes {
        let center = spec.center(k);
        for _ in 0..spec.per_class {
            for &c in &center {
                data.push(c + spec.std * rng.normal());
            }
            labels.push(k);
        }
    }
    LabeledDataset::new(Tensor::new(vec![n, spec.dims], data)?, labels, spec.classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::federation::{evaluate, local_train, ClientShard};
    use crate::mlp::{init_params, MlpSpec};
    use crate::optim::OptimizerConfig;

    #[test]
    fn zero_std_puts_samples_on_centers() {
        let spec = BlobsSpec { classes: 3, dims: 4, per_class: 2, radius: 2.0, std: 0.0 };
        let d = generate_blobs(&spec, &mut Rng::new(1)).unwrap();
        for i in 0..2 {
            assert_eq!(d.inputs.row(i), d.inputs.row(0));
        }
        assert_eq!(d.inputs.row(0)[2], 0.0);
        assert_eq!(d.inputs.row(0)[3], 0.0);
    }

    #[test]
    fn same_seed_same_dataset() {
        let spec = BlobsSpec { classes: 2, dims: 2, per_class: 5, radius: 4.0, std: 0.5 };
        let a = generate_blobs(&spec, &mut Rng::new(3)).unwrap();
        let b = generate_blobs(&spec, &mut Rng::new(3)).unwrap();
        assert_eq!(a.inputs.data(), b.inputs.data());
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn reference_task_is_separable_by_a_small_mlp() {
        // K=5, d=2, 200/class, R=4, std=0.5: centralized training passes 95%.
        let spec = BlobsSpec { classes: 5, dims: 2, per_class: 200, radius: 4.0, std: 0.5 };
        let train = generate_blobs(&spec, &mut Rng::new(10)).unwrap();
        let test = generate_blobs(
            &BlobsSpec { per_class: 50, ..spec },
            &mut Rng::new(11),
        )
        .unwrap();
        let mspec = MlpSpec::new(vec![2, 32, 5]).unwrap();
        let w0 = init_params(&mspec, &mut Rng::new(12));
        let indices: Vec<usize> = (0..train.len()).collect();
        let shard = ClientShard { data: &train, indices: &indices };
        let opt = OptimizerConfig { learning_rate: 5e-3, ..OptimizerConfig::default() };
        let w = local_train(&w0, &shard, 20, &opt, &mut Rng::new(13)).unwrap();
        let (_, acc) = evaluate(&w, &test).unwrap();
        assert!(acc >= 0.95, "centralized accuracy {acc}");
    }

    #[test]
    fn converged_model_is_perfect_on_wide_margins() {
        let spec = BlobsSpec { classes: 3, dims: 2, per_class: 40, radius: 4.0, std: 0.2 };
        let train = generate_blobs(&spec, &mut Rng::new(20)).unwrap();
        let test = generate_blobs(&BlobsSpec { per_class: 20, ..spec }, &mut Rng::new(21)).unwrap();
        let mspec = MlpSpec::new(vec![2, 16, 3]).unwrap();
        let w0 = init_params(&mspec, &mut Rng::new(22));
        let indices: Vec<usize> = (0..train.len()).collect();
        let shard = ClientShard { data: &train, indices: &indices };
        let opt = OptimizerConfig { learning_rate: 5e-3, ..OptimizerConfig::default() };
        let w = local_train(&w0, &shard, 40, &opt, &mut Rng::new(23)).unwrap();
        let (_, acc) = evaluate(&w, &test).unwrap();
        assert_eq!(acc, 1.0, "accuracy {acc} on a cleanly separable set");
    }
}
