use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use binscene_core::eval::pit_align;
use binscene_core::signal::Rng;
use rayon::prelude::*;

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{loss, loss_and_grad, separate, Example, Objective};
use crate::params::Params;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Adam over a contiguous slice of the parameters.
pub struct Adam {
    range: Range<usize>,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(range: Range<usize>) -> Self {
        let n = range.len();
        Adam {
            range,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - BETA1.powi(self.t);
        let c2 = 1.0 - BETA2.powi(self.t);
        let r = self.range.clone();
        for (((p, g), m), v) in params[r.clone()].iter_mut().zip(&grad[r]).zip(&mut self.m).zip(&mut self.v) {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub rows: Vec<HistoryRow>,
}

impl History {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("epoch,lr,trainLoss,valLoss\n");
        for r in &self.rows {
            text.push_str(&format!("{},{:e},{},{}\n", r.epoch, r.lr, r.train_loss, r.val_loss));
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub struct TrainOutcome {
    pub params: Params,
    pub history: History,
    pub doa_history: History,
    pub steps: usize,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

/// Mean loss over a set of examples; NaN when empty.
pub fn mean_loss(params: &Params, examples: &[Example], objective: Objective) -> Result<f64> {
    if examples.is_empty() {
        return Ok(f64::NAN);
    }
    let losses = examples
        .par_iter()
        .map(|ex| loss(params, ex, objective))
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(&losses))
}

/// Mean raw SNR of the separated talkers per ear, under the best assignment.
pub fn mean_pit_snr(params: &Params, examples: &[Example]) -> Result<f64> {
    let scores = examples
        .par_iter()
        .map(|ex| {
            let est = separate(params, &ex.mixture)?;
            Ok(pit_align(&ex.references, &est)?.1 / 4.0)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(mean(&scores))
}

fn batch_grad(params: &Params, batch: &[&Example], objective: Objective) -> Result<(f64, Vec<f64>)> {
    let scale = 1.0 / batch.len() as f64;
    // Collected in batch order and summed sequentially, so the result does
    // not depend on the thread count.
    let parts = batch
        .par_iter()
        .map(|ex| loss_and_grad(params, ex, objective, scale))
        .collect::<Vec<_>>();
    let mut total = 0.0;
    let mut grad = vec![0.0; params.len()];
    for part in parts {
        let (l, g) = part?;
        total += l * scale;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((total, grad))
}

struct Phase<'a> {
    objective: Objective,
    epochs: usize,
    range: Range<usize>,
    tcfg: &'a TrainConfig,
    label: &'a str,
}

fn run_phase(
    params: &mut Params,
    phase: &Phase,
    train: &[Example],
    val: &[Example],
    steps: &mut usize,
) -> Result<History> {
    let tcfg = phase.tcfg;
    let mut adam = Adam::new(phase.range.clone());
    let mut history = History::default();
    let root = Rng::new(tcfg.seed).derive(phase.label);
    let batch_size = tcfg.batch_size.max(1);
    'epochs: for epoch in 0..phase.epochs {
        let lr = tcfg.learning_rate_at(epoch);
        let mut order: Vec<usize> = (0..train.len()).collect();
        root.derive(&format!("epoch/{epoch}")).shuffle(&mut order);
        let mut losses = Vec::new();
        for chunk in order.chunks(batch_size) {
            if tcfg.max_steps.is_some_and(|m| *steps >= m) {
                break;
            }
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train[i]).collect();
            let result = batch_grad(params, &batch, phase.objective);
            let (l, g) = match result {
                Ok(v) => v,
                Err(Error::NonFinite { .. }) => (f64::NAN, Vec::new()),
                Err(e) => return Err(e),
            };
            if !l.is_finite() || g.iter().any(|v| !v.is_finite()) {
                log::error!("{} loss diverged at step {}", phase.label, *steps);
                return Err(Error::Diverged {
                    step: *steps,
                    last_good: Box::new(params.clone()),
                });
            }
            let before = params.values.clone();
            adam.step(&mut params.values, &g, lr);
            if !params.is_finite() {
                params.values = before;
                return Err(Error::Diverged {
                    step: *steps,
                    last_good: Box::new(params.clone()),
                });
            }
            losses.push(l);
            *steps += 1;
        }
        if losses.is_empty() {
            break 'epochs;
        }
        let val_loss = mean_loss(params, val, phase.objective)?;
        let row = HistoryRow {
            epoch,
            lr,
            train_loss: mean(&losses),
            val_loss,
        };
        log::info!(
            "{} epoch {epoch}: lr {lr:.3e} train {:.4} val {:.4}",
            phase.label,
            row.train_loss,
            row.val_loss
        );
        history.rows.push(row);
    }
    Ok(history)
}

/// Trains the separator (and enhancer) jointly, then the DoA head alone
/// with every other parameter frozen.
pub fn train_micro(init: Params, train: &[Example], val: &[Example], tcfg: &TrainConfig) -> Result<TrainOutcome> {
    if train.is_empty() {
        return Err(binscene_core::Error::invalid("no training scenes").into());
    }
    let mut params = init;
    let layout = params.layout();
    let mut steps = 0;
    let history = run_phase(
        &mut params,
        &Phase {
            objective: Objective::Separation,
            epochs: tcfg.epochs,
            range: layout.separation_range(),
            tcfg,
            label: "separation",
        },
        train,
        val,
        &mut steps,
    )?;
    let doa_history = match &layout.doa {
        Some(d) if tcfg.doa_epochs > 0 => {
            let mut doa_steps = 0;
            let doa_cfg = TrainConfig {
                max_steps: None,
                ..tcfg.clone()
            };
            run_phase(
                &mut params,
                &Phase {
                    objective: Objective::Doa,
                    epochs: tcfg.doa_epochs,
                    range: d.w.start..d.b.end,
                    tcfg: &doa_cfg,
                    label: "doa",
                },
                train,
                val,
                &mut doa_steps,
            )?
        }
        _ => History::default(),
    };
    Ok(TrainOutcome {
        params,
        history,
        doa_history,
        steps,
    })
}
