//! Loss, optimizer, learning-rate schedule, data splitting and the
//! training loop.

mod loss;
mod schedule;
mod softmax_regression;
mod split;
mod trainer;

pub use loss::{cross_entropy, one_hot, CrossEntropy, PROBABILITY_FLOOR};
pub use schedule::{lr_at, sgd_step, TrainConfig};
pub use softmax_regression::SoftmaxRegression;
pub use split::{k_fold, split, Fold, Split, SplitSpec};
pub use trainer::{
    accuracy, cross_validate, evaluate, fit, train_loop, CvSummary, Dataset, EpochLog, TrainRun, Trainable,
};
