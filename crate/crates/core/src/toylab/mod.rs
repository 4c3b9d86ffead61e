//! Synthetic multi-task regression problems with analytic gradients, and a
//! plain gradient-descent trainer that hosts the combiners and monitors.
//!
//! The model is `pred_i(x) = v_i . act(W x)`: a shared layer `W` (m x n)
//! producing the shared representation `z = act(W x)`, and one linear head per
//! task. Heads are routed: each head only reads the feature coordinates of
//! its task's planted support.

mod problem;
mod trainer;

pub use problem::{Activation, Evaluation, Params, ProblemSpec, ToyProblem};
pub use trainer::{train_run, train_step, RunOutput, Step, TrainConfig, TrainState};
