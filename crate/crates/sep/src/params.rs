use std::ops::Range;

use binscene_core::signal::Rng;

use crate::config::ModelConfig;

/// Offsets of one residual TCN block inside the flat parameter vector.
#[derive(Clone, Debug)]
pub struct BlockLayout {
    pub dilation: usize,
    /// 1x1 conv, C x C.
    pub pw: Range<usize>,
    pub pb: Range<usize>,
    /// Dilated conv taps, 3 x C x C.
    pub dw: Range<usize>,
    pub db: Range<usize>,
}

#[derive(Clone, Debug)]
pub struct StageLayout {
    /// Number of encoded input signals.
    pub inputs: usize,
    /// Encoder basis, N x W.
    pub enc: Range<usize>,
    /// Bottleneck over the concatenated encodings, C x (inputs * N).
    pub bw: Range<usize>,
    /// Bottleneck over the spatial features, C x feature_dim.
    pub sw: Range<usize>,
    pub bb: Range<usize>,
    pub blocks: Vec<BlockLayout>,
    /// Mask head, 4N x C (speaker-major, then ear).
    pub mw: Range<usize>,
    pub mb: Range<usize>,
    /// Decoder basis, W x N.
    pub dec: Range<usize>,
}

#[derive(Clone, Debug)]
pub struct DoaLayout {
    /// Per-speaker class logits, (2 * classes) x C.
    pub w: Range<usize>,
    pub b: Range<usize>,
}

#[derive(Clone, Debug)]
pub struct Layout {
    pub separator: StageLayout,
    pub enhancer: Option<StageLayout>,
    pub doa: Option<DoaLayout>,
    pub total: usize,
}

struct Cursor(usize);

impl Cursor {
    fn take(&mut self, n: usize) -> Range<usize> {
        let r = self.0..self.0 + n;
        self.0 += n;
        r
    }
}

fn stage(cur: &mut Cursor, cfg: &ModelConfig, inputs: usize) -> StageLayout {
    let (n, w, c) = (cfg.basis_size, cfg.encoder_window, cfg.tcn_channels);
    let outs = cfg.num_speakers * 2;
    StageLayout {
        inputs,
        enc: cur.take(n * w),
        bw: cur.take(c * inputs * n),
        sw: cur.take(c * cfg.feature_dim()),
        bb: cur.take(c),
        blocks: (0..cfg.tcn_blocks)
            .map(|b| BlockLayout {
                dilation: 1 << b,
                pw: cur.take(c * c),
                pb: cur.take(c),
                dw: cur.take(cfg.kernel * c * c),
                db: cur.take(c),
            })
            .collect(),
        mw: cur.take(outs * n * c),
        mb: cur.take(outs * n),
        dec: cur.take(w * n),
    }
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let mut cur = Cursor(0);
        let separator = stage(&mut cur, cfg, 2);
        // Mixture ears plus the four first-pass estimates.
        let enhancer = cfg.enhancement_stage.then(|| stage(&mut cur, cfg, 2 + 2 * cfg.num_speakers));
        let doa = cfg.doa_head.then(|| DoaLayout {
            w: cur.take(cfg.num_speakers * cfg.doa_classes * cfg.tcn_channels),
            b: cur.take(cfg.num_speakers * cfg.doa_classes),
        });
        Layout {
            separator,
            enhancer,
            doa,
            total: cur.0,
        }
    }

    /// Every parameter outside the DoA head.
    pub fn separation_range(&self) -> Range<usize> {
        match &self.doa {
            Some(d) => 0..d.w.start,
            None => 0..self.total,
        }
    }
}

/// Flat parameter vector of a model.
#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    pub config: ModelConfig,
    pub values: Vec<f64>,
}

impl Params {
    pub fn zeros(config: &ModelConfig) -> Self {
        let n = Layout::new(config).total;
        Params {
            config: config.clone(),
            values: vec![0.0; n],
        }
    }

    /// Uniform Glorot initialisation of the weights; biases start at zero.
    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Self {
        let layout = Layout::new(config);
        let mut p = Params::zeros(config);
        let (n, w, c) = (config.basis_size, config.encoder_window, config.tcn_channels);
        let mut fill = |r: &Range<usize>, fan_in: usize, fan_out: usize| {
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for v in &mut p.values[r.clone()] {
                *v = rng.uniform(-a, a);
            }
        };
        let stages = std::iter::once(&layout.separator).chain(layout.enhancer.as_ref());
        for s in stages {
            fill(&s.enc, w, n);
            fill(&s.bw, s.inputs * n + config.feature_dim(), c);
            fill(&s.sw, s.inputs * n + config.feature_dim(), c);
            for b in &s.blocks {
                fill(&b.pw, c, c);
                fill(&b.dw, 3 * c, c);
            }
            fill(&s.mw, c, 4 * n);
            fill(&s.dec, n, w);
        }
        if let Some(d) = &layout.doa {
            fill(&d.w, c, 2 * config.doa_classes);
        }
        p
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
