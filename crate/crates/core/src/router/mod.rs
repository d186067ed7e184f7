//! The trainable subject router: a small message-passing network over the
//! complete subject graph with separate node and edge heads.

mod checkpoint;
mod generate;
mod gradcheck;
mod metrics;
mod model;
mod params;
mod train;

pub use checkpoint::{
    checkpoint_from_str, checkpoint_to_string, load_checkpoint, save_checkpoint, Checkpoint,
    CHECKPOINT_VERSION,
};
pub use generate::{generate_sdag, route, sdag_from_output, GenerateConfig};
pub use model::{
    backward, compute_loss, forward, init_node_features, loss_and_logit_grad, loss_value,
    message_pass, predict, sigmoid, ForwardCache, Labels, LossGrad, LossWeights, RouterOutput,
    BCE_EPS,
};
pub use gradcheck::{gradient_check, relative_error, GradCheckReport, REL_ERROR_FLOOR};
pub use metrics::{routing_metrics, Counts, RoutingMetrics};
pub use params::{Activation, Head, Linear, Matrix, MessageLayer, RouterDims, RouterParams, INIT_SCALE};
pub use train::{samples_from_records, train, TrainConfig, TrainOutcome, TrainSample};
