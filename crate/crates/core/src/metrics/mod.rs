//! Supervised disentanglement scores and rank-correlation reports.

mod fvae;
mod info;
mod rank;
pub mod report;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::synthdata::{sample_random, GroundTruthDataset};
use crate::vae::LatentModel;

pub use fvae::{fvae_metric, majority_vote_accuracy, FvaeConfig, FvaeResult, Vote, COLLAPSED_VARIANCE};
pub use info::{
    dci_disentanglement, dci_from_importance, discretize, entropy, importance_matrix, mig, mutual_information,
    mutual_information_matrix, RepresentationSample, DCI_MIN_ROW_SUM, DEFAULT_BINS,
};
pub use rank::{fractional_ranks, spearman};
pub use report::{correlation_report, CorrelationMatrix, MetricRow};

/// Posterior means and factor labels of `n` random observations.
pub fn representation_sample(model: &dyn LatentModel, dataset: &GroundTruthDataset, n: usize, seed: u64) -> Result<RepresentationSample> {
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut latents, mut factors) = (Vec::new(), Vec::new());
    let mut left = n;
    while left > 0 {
        let m = left.min(256);
        let batch = sample_random(dataset, m, &mut rng)?;
        latents.extend(model.encode_batch(&batch)?.mean.into_iter().map(f64::from));
        factors.extend_from_slice(batch.factors.as_deref().expect("sampled batches carry factors"));
        left -= m;
    }
    RepresentationSample::new(latents, model.z_dim(), factors, dataset.space().num_factors())
}
