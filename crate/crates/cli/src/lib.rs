//! IO, file formats, and experiment drivers around the `cdp-core`
//! algorithms: checkpoints, dataset and record files, the training loop,
//! evaluation, analysis exports, and ablation comparisons.

pub mod ablate;
pub mod analyze_driver;
pub mod checkpoint;
pub mod dataset_io;
pub mod error;
pub mod eval_driver;
pub mod jsonl;
pub mod maze_file;
pub mod records_io;
pub mod runcfg;
pub mod svg;
pub mod train_driver;

pub use error::{CliError, Result};
