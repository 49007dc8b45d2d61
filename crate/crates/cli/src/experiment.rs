use std::fs;
use std::sync::Arc;

use rayon::prelude::*;

use ragan_core::channels::{dataset_load, Split};
use ragan_core::training::{evaluate_bler, train, TrainOutcome, TrainReport};
use ragan_core::{ChannelModel, Streams};

use crate::config::{ChannelKind, ExperimentConfig};
use crate::csv_out::{bler_path, losses_path, write_bler, write_losses, BlerCurve, BlerPoint};
use crate::CliError;

pub const ABORT_FILE: &str = "abort.txt";

pub fn build_channel(cfg: &ExperimentConfig) -> Result<ChannelModel, CliError> {
    Ok(match cfg.channel {
        ChannelKind::Awgn => ChannelModel::Awgn,
        ChannelKind::Rayleigh => ChannelModel::Rayleigh,
        ChannelKind::Dataset => {
            let path = cfg
                .dataset_path
                .as_ref()
                .ok_or_else(|| CliError::Config("channel = dataset requires `dataset_path`".into()))?;
            ChannelModel::Dataset(Arc::new(dataset_load(path)?))
        }
    })
}

/// BLER of a trained pair at every grid point. Point `i` draws from the
/// `eval/i` stream, so the result does not depend on scheduling.
pub fn evaluate_grid(
    cfg: &ExperimentConfig,
    outcome: &TrainOutcome,
    channel: &ChannelModel,
    streams: &Streams,
) -> Result<BlerCurve, CliError> {
    let points = cfg
        .eval_grid
        .par_iter()
        .enumerate()
        .map(|(i, &db)| {
            let mut rng = streams.eval_point(i);
            let bler = evaluate_bler(
                &outcome.transmitter,
                &outcome.receiver,
                channel,
                &cfg.link,
                db,
                cfg.eval_n,
                Split::Valid,
                &mut rng,
            )?;
            Ok(BlerPoint {
                ebn0_db: db,
                bler,
                trials: cfg.eval_n,
            })
        })
        .collect::<Result<Vec<_>, ragan_core::Error>>()
        .map_err(CliError::Abort)?;
    Ok(BlerCurve {
        scheme: cfg.scheme.name().to_string(),
        seed: cfg.seed,
        points,
    })
}

#[derive(Debug)]
pub struct ExperimentResult {
    pub outcome: TrainOutcome,
    pub curve: BlerCurve,
}

impl ExperimentResult {
    pub fn report(&self) -> &TrainReport {
        &self.outcome.report
    }
}

/// Trains and evaluates without touching the file system.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult, CliError> {
    cfg.validate()?;
    let channel = build_channel(cfg)?;
    let streams = Streams::new(cfg.seed);
    let outcome = train(&cfg.train_config(), &channel, &streams).map_err(|e| match e {
        ragan_core::Error::Config(_) => CliError::from(e),
        other => CliError::Abort(other),
    })?;
    let curve = evaluate_grid(cfg, &outcome, &channel, &streams)?;
    Ok(ExperimentResult { outcome, curve })
}

/// Runs the experiment and writes `losses.csv` and `bler.csv` to `cfg.out`.
/// On a training abort only `abort.txt` is written.
pub fn run_and_emit(cfg: &ExperimentConfig) -> Result<ExperimentResult, CliError> {
    fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    let result = match run_experiment(cfg) {
        Err(CliError::Abort(err)) => {
            let path = cfg.out.join(ABORT_FILE);
            let text = format!(
                "training aborted\nscheme = {}\nseed = {}\nerror = {err}\n",
                cfg.scheme, cfg.seed
            );
            fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
            return Err(CliError::Abort(err));
        }
        other => other?,
    };
    let lp = losses_path(&cfg.out);
    write_losses(&lp, &result.outcome.report.epochs).map_err(|e| CliError::io(&lp, e))?;
    let bp = bler_path(&cfg.out);
    if let Err(e) = write_bler(&bp, &result.curve) {
        let _ = fs::remove_file(&lp);
        return Err(CliError::io(&bp, e));
    }
    Ok(result)
}
