//! Sequence VAEs, their losses, scoring, and trainers.

mod any;
mod batch;
mod loss;
mod mlp;
mod model;
mod score;
mod train;

pub use any::{load_checkpoint, save_checkpoint, AdamSnapshot, AnyModel, Loaded, ModelSpec};
pub use batch::{Instance, SeqBatch};
pub use loss::{bce_rows, instance_errors, pairwise_margin, source_loss, vae_loss, LossTerms, EPS};
pub use mlp::{MlpVaeConfig, MlpVaeModel};
pub use model::{
    gaussian_kl, reparameterize, Latent, RvaeConfig, RvaeModel, SequenceVae, VaeOutput,
};
pub use score::{anomaly_scores, instance_of, instance_scores, timestep_scores, ScoreRecord};
pub use train::{
    evaluate_loss, select_bottom_fraction, train_semisupervised, train_transfer_with_label,
    train_transfer_without_label, BatchStream, LogRecord, Phase, TrainConfig, TrainLog,
    TrainOutcome,
};
