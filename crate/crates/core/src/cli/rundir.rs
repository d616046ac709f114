//! Run directory layout and the observer that fills it.
//!
//! ```text
//! <output_dir>/
//!   config.json          resolved configuration
//!   seed                 run seed as text
//!   metrics.jsonl        one StepRecord per line
//!   checkpoints/         <stage>-<iteration>.nivel.json
//!   snapshots/           step-<iteration>-render.png, step-<iteration>-grad.png
//!   final.nivel.json     final parameters
//!   final.png            final render
//!   summary.json         end-of-run figures
//! ```

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use crate::checkpoint::{Checkpoint, CheckpointMeta, EXTENSION};
use crate::compositor::Palette;
use crate::error::Result;
use crate::field::FieldParams;
use crate::raster::RasterImage;
use crate::training::{StepRecord, TrainObserver};

pub struct RunDir {
    root: PathBuf,
    echo: serde_json::Value,
    seed: u64,
    metrics: BufWriter<File>,
}

impl RunDir {
    pub fn create(cfg: &RunConfig) -> Result<Self> {
        let root = cfg.output_dir.clone();
        fs::create_dir_all(root.join("checkpoints"))?;
        if cfg.snapshot_grads {
            fs::create_dir_all(root.join("snapshots"))?;
        }
        fs::write(root.join("config.json"), serde_json::to_string_pretty(cfg)? + "\n")?;
        fs::write(root.join("seed"), format!("{}\n", cfg.seed))?;
        let metrics = BufWriter::new(File::create(root.join("metrics.jsonl"))?);
        Ok(Self {
            root,
            echo: cfg.echo()?,
            seed: cfg.seed,
            metrics,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn checkpoint(&self, stage: &str, iteration: u64, field: &FieldParams, palette: &Palette) -> Checkpoint {
        Checkpoint {
            field: field.clone(),
            palette: palette.clone(),
            meta: CheckpointMeta {
                stage: stage.to_string(),
                iteration,
                seed: self.seed,
                config: self.echo.clone(),
            },
        }
    }

    pub fn save_checkpoint(
        &self,
        name: &str,
        stage: &str,
        iteration: u64,
        field: &FieldParams,
        palette: &Palette,
    ) -> Result<PathBuf> {
        let path = self.root.join(format!("{name}.{EXTENSION}"));
        self.checkpoint(stage, iteration, field, palette).save(&path)?;
        Ok(path)
    }

    pub fn write_summary(&self, summary: &serde_json::Value) -> Result<()> {
        fs::write(self.root.join("summary.json"), serde_json::to_string_pretty(summary)? + "\n")?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.metrics.flush()?;
        Ok(())
    }
}

impl TrainObserver for RunDir {
    fn on_step(&mut self, record: &StepRecord) -> Result<()> {
        serde_json::to_writer(&mut self.metrics, record)?;
        self.metrics.write_all(b"\n")?;
        if record.iteration.is_multiple_of(100) {
            log::info!("{} {:>6}  loss {:.6}", record.stage, record.iteration, record.loss);
        }
        Ok(())
    }

    fn on_snapshot(&mut self, iteration: u64, render: &RasterImage, gradient: &RasterImage) -> Result<()> {
        let dir = self.root.join("snapshots");
        render.write_png(dir.join(format!("step-{iteration:06}-render.png")))?;
        gradient.write_png(dir.join(format!("step-{iteration:06}-grad.png")))?;
        Ok(())
    }

    fn on_checkpoint(&mut self, stage: &str, iteration: u64, field: &FieldParams, palette: &Palette) -> Result<()> {
        self.flush()?;
        self.save_checkpoint(&format!("checkpoints/{stage}-{iteration:06}"), stage, iteration, field, palette)?;
        Ok(())
    }

    fn on_abort(&mut self, stage: &str, iteration: u64, field: &FieldParams, palette: &Palette) -> Result<()> {
        self.flush()?;
        let path = self.save_checkpoint("abort", stage, iteration, field, palette)?;
        log::error!("{stage} diverged at iteration {iteration}; last finite parameters in {}", path.display());
        Ok(())
    }
}
