pub mod bayes;
pub mod eval_attention;
pub mod generate;
pub mod report;
pub mod sweep;
pub mod train_cmd;

pub use bayes::cmd_bayes;
pub use eval_attention::{cmd_eval_attention, write_report, AttentionSource};
pub use generate::cmd_generate;
pub use report::cmd_report;
pub use sweep::cmd_sweep;
pub use train_cmd::cmd_train;
