//! Window-length experiments: frequency tracking with a loss sweep, and
//! joint training of `theta` with a small classifier.

pub mod joint;
pub mod tracking;

pub use joint::{
    cross_entropy, cross_entropy_and_grad, joint_forward, joint_train, mean_pool, softmax, FmClassData, JointConfig,
    JointGrad, JointModel, JointRun, LabeledSignal, ThetaCheck,
};
pub use tracking::{
    default_tracking_optim, run_tracking, sweep_loss, theta_grid, SignalFamily, SweepResult, TrackingData,
    TrackingRun, TrackingSetup,
};
