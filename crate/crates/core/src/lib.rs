//! lp-norm coupled multi-task kernel machines.
//!
//! * [`norms`]: dual exponents, Hölder maximizers, `lr`-ball projections.
//! * [`kernels`]: kernel specs and per-task Gram stacks.
//! * [`rademacher`]: Monte Carlo complexity estimates and closed-form bounds.
//! * [`qp`]: SMO solver for the SVM dual.
//! * [`mtl`]: the coupled multi-task SVM with a fixed kernel.
//! * [`mkl`]: the same with a learned conic kernel combination.
//! * [`data`]: CSV I/O, one-vs-one task construction, splits, synthetic data.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix `f64`.

pub mod data;
pub mod error;
pub mod kernels;
pub mod matrix;
pub mod mkl;
pub mod mtl;
pub mod norms;
pub mod qp;
pub mod rademacher;
pub mod scalar;

pub use data::{load_csv, one_vs_one_tasks, save_csv, split, synth_multitask, CsvSchema, MultiTaskDataset, Task};
pub use error::{Error, Result};
pub use kernels::{build_gram, check_bound_assumption, GramStack, KernelKind, KernelSpec};
pub use matrix::SquareMatrix;
pub use mkl::{predict_mkl, train_mkl, train_mkl_large_s, train_mkl_small_s, MklModel};
pub use mtl::{
    lambda_step_large_s, lambda_step_small_s, objective_value, predict, train_large_s, train_mtl, train_small_s, AnyModel,
    MtlModel, Predictor, TrainOptions,
};
pub use norms::{dual_exponent, holder_maximizer, lp_norm, project_lr_ball, Exponent};
pub use qp::{solve_svm_dual, DualSolution, SolverOptions};
pub use rademacher::{erc_bound, erc_multi_kernel, erc_single_kernel, generalization_bound, ErcParams, ErcReport};
pub use scalar::Real;

pub type Dataset = MultiTaskDataset<f64>;
pub type Grams = GramStack<f64>;
pub type Matrix = SquareMatrix<f64>;
pub type Model = MtlModel<f64>;
pub type MklModel64 = MklModel<f64>;
pub type AnyModel64 = AnyModel<f64>;
pub type Solution = DualSolution<f64>;
