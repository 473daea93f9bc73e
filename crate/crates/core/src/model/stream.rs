use crate::csc::{forward_step_into, CscStreamCache};
use crate::error::{shape, Error, Result};
use crate::scalar::Scalar;

use super::{gelu, Fcnet, FcnetConfig};

/// Per-stream inference state: one sliding-DFT cache per layer plus scratch
/// buffers, so a step allocates nothing.
#[derive(Debug, Clone)]
pub struct StreamState<S> {
    config: FcnetConfig,
    caches: Vec<CscStreamCache<S>>,
    steps: u64,
    hidden: Vec<S>,
    normed: Vec<S>,
    mixed: Vec<S>,
    ffn: Vec<S>,
    residual: Vec<S>,
    dec: Vec<S>,
}

impl<S: Scalar> StreamState<S> {
    pub fn new(config: &FcnetConfig) -> Self {
        let csc = config.csc();
        Self {
            config: *config,
            caches: (0..config.layers).map(|_| CscStreamCache::new(&csc)).collect(),
            steps: 0,
            hidden: vec![S::zero(); config.d_h],
            normed: vec![S::zero(); config.d_h],
            mixed: vec![S::zero(); config.d_h],
            ffn: vec![S::zero(); config.ffn_width()],
            residual: vec![S::zero(); config.d_h],
            dec: vec![S::zero(); config.d_q],
        }
    }

    /// Zero every cache and counter; the next step behaves like a new stream.
    pub fn reset(&mut self) {
        for cache in &mut self.caches {
            cache.reset();
        }
        self.steps = 0;
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn caches(&self) -> &[CscStreamCache<S>] {
        &self.caches
    }

    pub(super) fn step(&mut self, model: &Fcnet<S>, x_new: &[S], out: &mut [S]) -> Result<()> {
        let cfg = &model.config;
        if *cfg != self.config {
            return Err(shape(format!("{:?}", cfg), format!("stream built for {:?}", self.config)));
        }
        if x_new.len() != cfg.d_s {
            return Err(shape(format!("{} state dims", cfg.d_s), x_new.len()));
        }
        if out.len() != cfg.d_a {
            return Err(shape(format!("{} action dims", cfg.d_a), out.len()));
        }
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("stream input"));
        }
        let p = &model.params;
        let csc_cfg = cfg.csc();
        p.encoder.forward_into(x_new, &mut self.hidden);
        for (layer, cache) in p.layers.iter().zip(self.caches.iter_mut()) {
            layer.ln1.forward_into(&self.hidden, &mut self.normed);
            forward_step_into(&self.normed, &layer.csc, cache, &csc_cfg, &mut self.mixed)?;
            for (h, &y) in self.hidden.iter_mut().zip(&self.mixed) {
                *h += gelu(y);
            }
            layer.ln2.forward_into(&self.hidden, &mut self.normed);
            layer.ffn_in.forward_into(&self.normed, &mut self.ffn);
            for v in self.ffn.iter_mut() {
                *v = gelu(*v);
            }
            layer.ffn_out.forward_into(&self.ffn, &mut self.residual);
            for (h, &r) in self.hidden.iter_mut().zip(&self.residual) {
                *h += r;
            }
        }
        p.dec_hidden.forward_into(&self.hidden, &mut self.dec);
        for v in self.dec.iter_mut() {
            *v = gelu(*v);
        }
        p.dec_out.forward_into(&self.dec, out);
        self.steps += 1;
        Ok(())
    }
}
