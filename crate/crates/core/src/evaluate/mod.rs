//! Forecast evaluation: losses, the model confidence set and out-of-sample R².

mod loss;
mod mcs;
mod oos;

pub use loss::{loss_matrix, loss_value, losses, LossKind, LossMatrix, LossSummary};
pub use mcs::{default_block_len, mcs, McsConfig, McsResult, McsStatistic, McsStep};
pub use oos::{mspe_adjusted, oos_r2, OosR2Result, OosR2Row};
