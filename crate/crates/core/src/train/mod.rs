//! Losses, schedules, the alternating optimizer step, the epoch loop and
//! gradient verification.

pub mod adam;
pub mod config;
pub mod fit;
pub mod gradcheck;
pub mod losses;
pub mod schedule;
pub mod step;

pub use adam::{Adam, AdamConfig};
pub use config::TrainConfig;
pub use fit::{
    fit, steps_per_epoch, CsvObserver, FitObserver, FitOutcome, MemoryObserver, StepLog, ValidRecord, STEP_LOG_HEADER,
    VALID_LOG_HEADER,
};
pub use gradcheck::{gradcheck, GradcheckOptions, GradcheckReport};
pub use losses::*;
pub use schedule::{lambda_at, lr_at};
pub use step::{train_step, validation_loss, StepScalars};
