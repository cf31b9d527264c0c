//! The embedding stack: MLP backbone, plain and angular-margin classifier
//! heads, classification losses with analytic gradients, SGD with linear
//! learning-rate decay, and a finite-difference gradient checker.

mod backbone;
mod classifier;
mod gradcheck;
mod io;
mod loss;
mod optim;
mod train;

pub use backbone::{Backbone, BackboneGrads, DenseLayer, ForwardTrace};
pub use classifier::{Classifier, ClassifierKind};
pub use gradcheck::gradient_check;
pub use io::{load_model, save_model};
pub use loss::{
    classification_loss, loss_arcface, loss_cross_entropy, softmax_cross_entropy, LossOutput,
    COS_CLAMP,
};
pub use optim::{lr_at, sgd_step, SgdState};
pub use train::{extract_features, train_classifier, TrainConfig};

pub(crate) use train::total_steps as train_total_steps;
