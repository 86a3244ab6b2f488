//! Epoch loop with logging, validation and resume.

use std::io::Write;
use std::time::Instant;

use crate::checkpoint::TrainSnapshot;
use crate::data::batch::{epoch_seed, make_batches};
use crate::data::sample::Sample;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::params::ParamStore;
use crate::train::adam::Adam;
use crate::train::config::TrainConfig;
use crate::train::step::{train_step, validation_loss, StepScalars};

pub const STEP_LOG_HEADER: &str = "step,lambda,lr,L_dis,L_rec,L_adv,L_total,wall_ms";
pub const VALID_LOG_HEADER: &str = "epoch,step,L_rec";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLog {
    pub scalars: StepScalars,
    pub wall_ms: u128,
}

impl StepLog {
    pub fn csv_row(&self) -> String {
        let s = &self.scalars;
        format!(
            "{},{},{},{},{},{},{},{}",
            s.step, s.lambda, s.lr, s.l_dis, s.l_rec, s.l_adv, s.l_total, self.wall_ms
        )
    }
}

/// Validation is reconstruction only: the adversarial term is non-stationary in λ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidRecord {
    pub epoch: u64,
    /// Steps completed when validation ran.
    pub step: u64,
    pub l_rec: f64,
}

impl ValidRecord {
    pub fn csv_row(&self) -> String {
        format!("{},{},{}", self.epoch, self.step, self.l_rec)
    }
}

/// Receives training progress; every method may abort the run with an error.
pub trait FitObserver {
    fn on_step(&mut self, _log: &StepLog) -> Result<()> {
        Ok(())
    }

    /// Called after each epoch's validation; `is_best` marks a new best.
    fn on_validation(&mut self, _rec: &ValidRecord, _is_best: bool, _params: &ParamStore, _state: &TrainSnapshot) -> Result<()> {
        Ok(())
    }
}

/// Collects logs in memory.
#[derive(Debug, Default)]
pub struct MemoryObserver {
    pub steps: Vec<StepLog>,
    pub valid: Vec<ValidRecord>,
}

impl FitObserver for MemoryObserver {
    fn on_step(&mut self, log: &StepLog) -> Result<()> {
        self.steps.push(*log);
        Ok(())
    }

    fn on_validation(&mut self, rec: &ValidRecord, _: bool, _: &ParamStore, _: &TrainSnapshot) -> Result<()> {
        self.valid.push(*rec);
        Ok(())
    }
}

/// Appends CSV rows to any writer.
pub struct CsvObserver<W: Write, V: Write> {
    pub steps: W,
    pub valid: V,
}

impl<W: Write, V: Write> FitObserver for CsvObserver<W, V> {
    fn on_step(&mut self, log: &StepLog) -> Result<()> {
        writeln!(self.steps, "{}", log.csv_row()).map_err(|e| Error::io("step log", e))
    }

    fn on_validation(&mut self, rec: &ValidRecord, _: bool, _: &ParamStore, _: &TrainSnapshot) -> Result<()> {
        writeln!(self.valid, "{}", rec.csv_row()).map_err(|e| Error::io("validation log", e))
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: ParamStore,
    pub state: TrainSnapshot,
    /// Parameters at the best validation loss seen in this run.
    pub best: Option<ParamStore>,
}

pub fn steps_per_epoch(n: usize, batch_size: usize) -> u64 {
    n.div_ceil(batch_size) as u64
}

/// Runs `epochs × ⌈n/batch_size⌉` steps (capped by `max_steps`), validating
/// after every complete epoch. With `resume`, training continues from the
/// snapshot's step with its optimizer moments.
pub fn fit(
    model: &Model,
    mut params: ParamStore,
    train: &[Sample],
    valid: &[Sample],
    cfg: &TrainConfig,
    resume: Option<TrainSnapshot>,
    observer: &mut dyn FitObserver,
) -> Result<FitOutcome> {
    cfg.validate()?;
    model.check_params(&params)?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (mut step, mut best_valid, mut adam) = match resume {
        Some(s) => {
            if s.m.len() != params.len() || s.v.len() != params.len() {
                return Err(Error::Checkpoint("optimizer state does not match parameters".into()));
            }
            (s.step, s.best_valid, Adam { m: s.m, v: s.v })
        }
        None => (0, f64::INFINITY, Adam::new(&params)),
    };
    let per_epoch = steps_per_epoch(train.len(), cfg.batch_size);
    let total = match cfg.max_steps {
        0 => cfg.epochs * per_epoch,
        m => m.min(cfg.epochs * per_epoch),
    };
    let mut best = None;
    while step < total {
        let epoch = step / per_epoch;
        let batches = make_batches(train.len(), cfg.batch_size, epoch_seed(cfg.seed, epoch))?;
        for idx in &batches[(step % per_epoch) as usize..] {
            if step >= total {
                break;
            }
            let started = Instant::now();
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train[i]).collect();
            let scalars = train_step(model, &mut params, &mut adam, step, &batch, cfg)?;
            step += 1;
            observer.on_step(&StepLog { scalars, wall_ms: started.elapsed().as_millis() })?;
        }
        if step % per_epoch == 0 && !valid.is_empty() {
            let l_rec = validation_loss(model, &params, valid)?;
            let is_best = l_rec < best_valid;
            if is_best {
                best_valid = l_rec;
                best = Some(params.clone());
            }
            let state = TrainSnapshot { step, best_valid, m: adam.m.clone(), v: adam.v.clone() };
            observer.on_validation(&ValidRecord { epoch, step, l_rec }, is_best, &params, &state)?;
        }
    }
    Ok(FitOutcome { params, state: TrainSnapshot { step, best_valid, m: adam.m, v: adam.v }, best })
}
