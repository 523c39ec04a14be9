//! Dense networks, stochastic heads, a recurrent classifier, Adam and the
//! checkpoint format. Everything is 64-bit floating point.

pub mod adam;
pub mod checkpoint;
pub mod dist;
pub mod gru;
pub mod mlp;
pub mod params;

pub use adam::{adam_step, gradient_clip, AdamConfig, AdamState};
pub use dist::{
    categorical_entropy, head_entropy, head_log_prob, softmax, Action, ActionDistribution, ActionSpace, HeadGrad, NetConfig, PolicyNet,
    PolicyTrace, ValueNet,
};
pub use gru::GruClassifier;
pub use mlp::{backward, forward, Activation, Mlp, MlpSpec, MlpTrace};
pub use params::{ParamBlock, ParameterSet};
