//! OSEN architectures, inference, training loop and the weight codec.

mod codec;
mod spec;
mod train;

pub use codec::{decode_params, decode_params_for, encode_params, FORMAT_VERSION, MAGIC};
pub use spec::{
    binarize, build, build_structure, infer, input_scale_from, param_count, Head, Inference, ModelInput, ModelParams,
    ModelSpec, Variant,
};
pub use train::{train_model, Dataset, EpochRecord, Sample, TrainConfig, TrainHistory, Trainer};
