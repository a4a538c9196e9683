use binscene_core::eval::Permutation;
use binscene_core::motion::Trajectory;
use binscene_core::signal::{AudioBuffer, BinauralBuffer};

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::features::compute_spatial_features;
use crate::layers::{bias_back, conv3, conv3_back, dense, dense_back, frame, overlap_add, Mat};
use crate::loss::{doa_ce_grad, doa_ce_loss, doa_class, pair_of, pit_grad, pit_loss_slices, Pair};
use crate::params::{Layout, Params, StageLayout};

/// Encodings masked by output `2 * speaker + ear` in each stage.
const SEPARATOR_SOURCES: [usize; 4] = [0, 1, 0, 1];
const ENHANCER_SOURCES: [usize; 4] = [2, 3, 4, 5];

struct StageCache {
    frames: Vec<Mat>,
    enc: Vec<Mat>,
    concat: Mat,
    h_in: Vec<Mat>,
    u: Vec<Mat>,
    h_out: Mat,
    masks: Mat,
    outputs: [Vec<f64>; 4],
}

fn finite(m: &Mat, stage: &str, layer: &str) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            layer: format!("{stage}.{layer}"),
        })
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn stage_forward(
    p: &[f64],
    l: &StageLayout,
    cfg: &ModelConfig,
    signals: &[&[f64]],
    feat: &Mat,
    sources: &[usize; 4],
    name: &str,
) -> Result<StageCache> {
    let (w, s, n, c) = (cfg.encoder_window, cfg.encoder_stride, cfg.basis_size, cfg.tcn_channels);
    let (nf, len) = (feat.rows, signals[0].len());
    let frames: Vec<Mat> = signals.iter().map(|x| frame(x, w, s, nf)).collect();
    let enc: Vec<Mat> = frames.iter().map(|x| dense(x, &p[l.enc.clone()], None, n)).collect();
    for e in &enc {
        finite(e, name, "encoder")?;
    }
    let mut concat = Mat::zeros(nf, l.inputs * n);
    for f in 0..nf {
        for (j, e) in enc.iter().enumerate() {
            concat.row_mut(f)[j * n..(j + 1) * n].copy_from_slice(e.row(f));
        }
    }
    let mut h = dense(&concat, &p[l.bw.clone()], Some(&p[l.bb.clone()]), c);
    h.add_assign(&dense(feat, &p[l.sw.clone()], None, c));
    finite(&h, name, "bottleneck")?;

    let mut h_in = Vec::with_capacity(l.blocks.len());
    let mut us = Vec::with_capacity(l.blocks.len());
    for (i, b) in l.blocks.iter().enumerate() {
        let mut u = dense(&h, &p[b.pw.clone()], Some(&p[b.pb.clone()]), c);
        u.data.iter_mut().for_each(|v| *v = v.tanh());
        let v = conv3(&u, &p[b.dw.clone()], &p[b.db.clone()], b.dilation);
        h_in.push(h.clone());
        h.add_assign(&v);
        finite(&h, name, &format!("block{i}"))?;
        us.push(u);
    }

    let mut masks = dense(&h, &p[l.mw.clone()], Some(&p[l.mb.clone()]), 4 * n);
    masks.data.iter_mut().for_each(|v| *v = sigmoid(*v));
    finite(&masks, name, "mask")?;

    let outputs: [Vec<f64>; 4] = std::array::from_fn(|j| {
        let masked = masked_encoding(&masks, &enc[sources[j]], j, n);
        let y = dense(&masked, &p[l.dec.clone()], None, w);
        overlap_add(&y, s, len)
    });
    if outputs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            layer: format!("{name}.decoder"),
        });
    }
    Ok(StageCache {
        frames,
        enc,
        concat,
        h_in,
        u: us,
        h_out: h,
        masks,
        outputs,
    })
}

fn masked_encoding(masks: &Mat, enc: &Mat, j: usize, n: usize) -> Mat {
    let mut out = Mat::zeros(enc.rows, n);
    for f in 0..enc.rows {
        let m = &masks.row(f)[j * n..(j + 1) * n];
        for ((o, a), b) in out.row_mut(f).iter_mut().zip(m).zip(enc.row(f)) {
            *o = a * b;
        }
    }
    out
}

/// Backpropagates output gradients through one stage, accumulating into
/// `g`, and returns the gradients of the requested input signals.
#[allow(clippy::too_many_arguments)]
fn stage_backward(
    p: &[f64],
    l: &StageLayout,
    cfg: &ModelConfig,
    cache: &StageCache,
    feat: &Mat,
    sources: &[usize; 4],
    d_out: &[Vec<f64>; 4],
    g: &mut [f64],
    want_input: &[bool],
) -> Vec<Option<Vec<f64>>> {
    let (w, s, n) = (cfg.encoder_window, cfg.encoder_stride, cfg.basis_size);
    let nf = feat.rows;
    let len = cache.outputs[0].len();

    let mut d_enc: Vec<Mat> = cache.enc.iter().map(|e| Mat::zeros(e.rows, e.cols)).collect();
    let mut dz = Mat::zeros(nf, 4 * n);
    for j in 0..4 {
        let dy = frame(&d_out[j], w, s, nf);
        let src = sources[j];
        let masked = masked_encoding(&cache.masks, &cache.enc[src], j, n);
        let dm = dense_back(&masked, &p[l.dec.clone()], &dy, &mut g[l.dec.clone()], true).unwrap();
        for f in 0..nf {
            let mrow = &cache.masks.row(f)[j * n..(j + 1) * n];
            let erow = cache.enc[src].row(f);
            let dmrow = dm.row(f);
            let dzrow = &mut dz.row_mut(f)[j * n..(j + 1) * n];
            for k in 0..n {
                dzrow[k] = dmrow[k] * erow[k] * mrow[k] * (1.0 - mrow[k]);
            }
            for (de, (d, m)) in d_enc[src].row_mut(f).iter_mut().zip(dmrow.iter().zip(mrow)) {
                *de += d * m;
            }
        }
    }
    bias_back(&dz, &mut g[l.mb.clone()]);
    let mut dh = dense_back(&cache.h_out, &p[l.mw.clone()], &dz, &mut g[l.mw.clone()], true).unwrap();

    for (i, b) in l.blocks.iter().enumerate().rev() {
        let u = &cache.u[i];
        bias_back(&dh, &mut g[b.db.clone()]);
        let mut du = conv3_back(u, &p[b.dw.clone()], &dh, b.dilation, &mut g[b.dw.clone()]);
        for (d, v) in du.data.iter_mut().zip(&u.data) {
            *d *= 1.0 - v * v;
        }
        bias_back(&du, &mut g[b.pb.clone()]);
        let back = dense_back(&cache.h_in[i], &p[b.pw.clone()], &du, &mut g[b.pw.clone()], true).unwrap();
        dh.add_assign(&back);
    }

    bias_back(&dh, &mut g[l.bb.clone()]);
    dense_back(feat, &p[l.sw.clone()], &dh, &mut g[l.sw.clone()], false);
    let dcat = dense_back(&cache.concat, &p[l.bw.clone()], &dh, &mut g[l.bw.clone()], true).unwrap();
    for f in 0..nf {
        for (j, de) in d_enc.iter_mut().enumerate() {
            for (a, b) in de.row_mut(f).iter_mut().zip(&dcat.row(f)[j * n..(j + 1) * n]) {
                *a += b;
            }
        }
    }

    let mut out = Vec::with_capacity(cache.frames.len());
    for (j, (x, de)) in cache.frames.iter().zip(&d_enc).enumerate() {
        let want = want_input.get(j).copied().unwrap_or(false);
        let dx = dense_back(x, &p[l.enc.clone()], de, &mut g[l.enc.clone()], want);
        out.push(dx.map(|dx| overlap_add(&dx, s, len)));
    }
    out
}

/// Activations of one forward pass, kept for backpropagation.
pub struct Forward {
    feat: Mat,
    separator: StageCache,
    enhancer: Option<StageCache>,
    rate: u32,
}

fn to_pair(outputs: &[Vec<f64>; 4], rate: u32) -> Result<[BinauralBuffer; 2]> {
    let mk = |v: &Vec<f64>| AudioBuffer::new(v.clone(), rate);
    Ok([
        BinauralBuffer::new(mk(&outputs[0])?, mk(&outputs[1])?)?,
        BinauralBuffer::new(mk(&outputs[2])?, mk(&outputs[3])?)?,
    ])
}

fn view(outputs: &[Vec<f64>; 4]) -> Pair<'_> {
    [[&outputs[0], &outputs[1]], [&outputs[2], &outputs[3]]]
}

impl Forward {
    pub fn frames(&self) -> usize {
        self.feat.rows
    }

    fn last(&self) -> &StageCache {
        self.enhancer.as_ref().unwrap_or(&self.separator)
    }

    /// Final two-talker estimates.
    pub fn estimates(&self) -> Result<[BinauralBuffer; 2]> {
        to_pair(&self.last().outputs, self.rate)
    }

    /// Estimates before the enhancement stage.
    pub fn first_pass(&self) -> Result<[BinauralBuffer; 2]> {
        to_pair(&self.separator.outputs, self.rate)
    }

    /// Separator masks, frame-major with `4 * basis_size` values per frame.
    pub fn separator_masks(&self) -> &[f64] {
        &self.separator.masks.data
    }
}

pub fn forward(params: &Params, mixture: &BinauralBuffer) -> Result<Forward> {
    let cfg = &params.config;
    let layout = Layout::new(cfg);
    let nf = cfg.frames(mixture.len())?;
    let sf = compute_spatial_features(mixture.left(), mixture.right(), cfg.encoder_window, cfg.encoder_stride)?;
    let feat = Mat::from_vec(nf, cfg.feature_dim(), sf.model_input());
    let mix = [mixture.left().samples(), mixture.right().samples()];
    let p = &params.values;
    let separator = stage_forward(p, &layout.separator, cfg, &mix, &feat, &SEPARATOR_SOURCES, "separator")?;
    let enhancer = match &layout.enhancer {
        Some(l) => {
            let o = &separator.outputs;
            let inputs = [mix[0], mix[1], &o[0], &o[1], &o[2], &o[3]];
            Some(stage_forward(p, l, cfg, &inputs, &feat, &ENHANCER_SOURCES, "enhancer")?)
        }
        None => None,
    };
    Ok(Forward {
        feat,
        separator,
        enhancer,
        rate: mixture.rate(),
    })
}

/// Separates a binaural mixture into two binaural talker estimates.
pub fn separate(params: &Params, mixture: &BinauralBuffer) -> Result<[BinauralBuffer; 2]> {
    forward(params, mixture)?.estimates()
}

/// Per-frame logits, `2 * doa_classes` per frame (speaker-major).
pub fn doa_logits(params: &Params, fwd: &Forward) -> Result<Vec<f64>> {
    let layout = Layout::new(&params.config);
    let d = layout
        .doa
        .as_ref()
        .ok_or_else(|| Error::Config("model has no DoA head".into()))?;
    let k = 2 * params.config.doa_classes;
    Ok(dense(&fwd.last().h_out, &params.values[d.w.clone()], Some(&params.values[d.b.clone()]), k).data)
}

/// One supervised training example.
#[derive(Clone, Debug)]
pub struct Example {
    pub mixture: BinauralBuffer,
    pub references: [BinauralBuffer; 2],
    pub trajectories: Option<[Trajectory; 2]>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    /// PIT capped SNR of the final estimates, plus that of the first pass
    /// when an enhancement stage is present.
    Separation,
    /// Cross-entropy of the DoA head against the assigned trajectories.
    Doa,
}

fn doa_labels(cfg: &ModelConfig, frames: usize, rate: u32, trajectories: &[Trajectory; 2], perm: Permutation) -> Result<Vec<usize>> {
    let mut labels = Vec::with_capacity(2 * frames);
    for f in 0..frames {
        let t = (f * cfg.encoder_stride + cfg.encoder_window / 2) as f64 / rate as f64;
        for &r in &perm {
            let tr = &trajectories[r];
            labels.push(doa_class(tr.at(t.min(tr.duration))?)?);
        }
    }
    Ok(labels)
}

/// Loss and its exact gradient with respect to every parameter, times
/// `scale`.
pub fn loss_and_grad(params: &Params, ex: &Example, objective: Objective, scale: f64) -> Result<(f64, Vec<f64>)> {
    let cfg = &params.config;
    let layout = Layout::new(cfg);
    let p = &params.values;
    let fwd = forward(params, &ex.mixture)?;
    let refs = pair_of(&ex.references);
    let mut g = vec![0.0; p.len()];

    let (last_loss, perm) = pit_loss_slices(&refs, &view(&fwd.last().outputs))?;
    if objective == Objective::Doa {
        let trajectories = ex
            .trajectories
            .as_ref()
            .ok_or_else(|| binscene_core::Error::invalid("DoA objective needs trajectories"))?;
        let d = layout
            .doa
            .as_ref()
            .ok_or_else(|| Error::Config("model has no DoA head".into()))?;
        let classes = cfg.doa_classes;
        let logits = doa_logits(params, &fwd)?;
        let labels = doa_labels(cfg, fwd.frames(), fwd.rate, trajectories, perm)?;
        let loss = doa_ce_loss(&logits, classes, &labels)?;
        let dl = Mat::from_vec(fwd.frames(), 2 * classes, doa_ce_grad(&logits, classes, &labels, scale));
        bias_back(&dl, &mut g[d.b.clone()]);
        dense_back(&fwd.last().h_out, &p[d.w.clone()], &dl, &mut g[d.w.clone()], false);
        return Ok((loss, g));
    }

    let flat = |gr: [[Vec<f64>; 2]; 2]| -> [Vec<f64>; 4] {
        let [[a, b], [c, d]] = gr;
        [a, b, c, d]
    };
    let mut loss = last_loss;
    let d_sep = match (&layout.enhancer, &fwd.enhancer) {
        (Some(l), Some(cache)) => {
            let d_last = flat(pit_grad(&refs, &view(&cache.outputs), perm, scale));
            let want = [false, false, true, true, true, true];
            let din = stage_backward(p, l, cfg, cache, &fwd.feat, &ENHANCER_SOURCES, &d_last, &mut g, &want);
            let (first_loss, first_perm) = pit_loss_slices(&refs, &view(&fwd.separator.outputs))?;
            loss += first_loss;
            let mut d = flat(pit_grad(&refs, &view(&fwd.separator.outputs), first_perm, scale));
            for (dj, ij) in d.iter_mut().zip(&din[2..]) {
                for (a, b) in dj.iter_mut().zip(ij.as_ref().unwrap()) {
                    *a += b;
                }
            }
            d
        }
        _ => flat(pit_grad(&refs, &view(&fwd.separator.outputs), perm, scale)),
    };
    let sep_cache = &fwd.separator;
    stage_backward(p, &layout.separator, cfg, sep_cache, &fwd.feat, &SEPARATOR_SOURCES, &d_sep, &mut g, &[]);
    Ok((loss, g))
}

/// Loss only.
pub fn loss(params: &Params, ex: &Example, objective: Objective) -> Result<f64> {
    let fwd = forward(params, &ex.mixture)?;
    let refs = pair_of(&ex.references);
    let (last, perm) = pit_loss_slices(&refs, &view(&fwd.last().outputs))?;
    match objective {
        Objective::Separation => {
            let first = match fwd.enhancer {
                Some(_) => pit_loss_slices(&refs, &view(&fwd.separator.outputs))?.0,
                None => 0.0,
            };
            Ok(last + first)
        }
        Objective::Doa => {
            let trajectories = ex
                .trajectories
                .as_ref()
                .ok_or_else(|| binscene_core::Error::invalid("DoA objective needs trajectories"))?;
            let logits = doa_logits(params, &fwd)?;
            let labels = doa_labels(&params.config, fwd.frames(), fwd.rate, trajectories, perm)?;
            doa_ce_loss(&logits, params.config.doa_classes, &labels)
        }
    }
}
