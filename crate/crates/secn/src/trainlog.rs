//! Training log: one CSV row per optimiser step.

use std::fs::File;
use std::path::Path;

use anyhow::{Context, Result};
use secn_core::trainer::StepLog;

pub const HEADER: [&str; 6] = ["step", "L", "L_e", "L_l", "L_f", "lr"];

pub struct TrainLog {
    writer: csv::Writer<File>,
}

impl TrainLog {
    pub fn create(path: &Path) -> Result<Self> {
        let mut writer = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        writer.write_record(HEADER)?;
        Ok(TrainLog { writer })
    }

    pub fn record(&mut self, log: &StepLog) -> Result<()> {
        let l = &log.loss;
        self.writer.write_record([
            log.step.to_string(),
            l.total.to_string(),
            l.le().to_string(),
            l.ll().to_string(),
            l.lf().to_string(),
            log.lr.to_string(),
        ])?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.writer.flush()?;
        Ok(())
    }
}
