//! Single-head causal attention baseline with a sliding-window KV cache.
//!
//! Same shape as FCNet with the CSC mixer swapped for attention over the
//! last `n` positions:
//!
//! ```text
//! Y = Attn(LN(X)) + X
//! X' = FFN(LN(Y)) + Y
//! ```
//!
//! Encoder, FFN, LayerNorm and decoder are the FCNet layer types, so a
//! latency comparison isolates the token mixer.

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, shape, Error, Result};
use crate::model::{gelu, FcnetConfig, LayerNorm, Linear};
use crate::scalar::Scalar;
use crate::spectral::require_cols;

#[derive(Debug, Clone, PartialEq)]
pub struct AttnLayer<S> {
    pub ln1: LayerNorm<S>,
    pub query: Linear<S>,
    pub key: Linear<S>,
    pub value: Linear<S>,
    pub output: Linear<S>,
    pub ln2: LayerNorm<S>,
    pub ffn_in: Linear<S>,
    pub ffn_out: Linear<S>,
}

/// Uses every [`FcnetConfig`] field except `m`; `n` is the attention span.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnBaseline<S> {
    pub config: FcnetConfig,
    pub encoder: Linear<S>,
    pub layers: Vec<AttnLayer<S>>,
    pub dec_hidden: Linear<S>,
    pub dec_out: Linear<S>,
}

fn softmax_in_place<S: Scalar>(scores: &mut [S]) {
    let max = scores.iter().copied().fold(S::neg_infinity(), S::max);
    let mut sum = S::zero();
    for s in scores.iter_mut() {
        *s = (*s - max).exp();
        sum += *s;
    }
    for s in scores.iter_mut() {
        *s /= sum;
    }
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    // four accumulators so the loop vectorizes
    let mut acc = [S::zero(); 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for (j, slot) in acc.iter_mut().enumerate() {
            *slot += a[4 * i + j] * b[4 * i + j];
        }
    }
    let mut total = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        total += a[i] * b[i];
    }
    total
}

impl<S: Scalar> AttnBaseline<S> {
    pub fn init(config: FcnetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d_h, f) = (config.d_h, config.ffn_width());
        let encoder = Linear::init(config.d_s, d_h, &mut rng);
        let layers = (0..config.layers)
            .map(|_| AttnLayer {
                ln1: LayerNorm::new(d_h),
                query: Linear::init(d_h, d_h, &mut rng),
                key: Linear::init(d_h, d_h, &mut rng),
                value: Linear::init(d_h, d_h, &mut rng),
                output: Linear::init(d_h, d_h, &mut rng),
                ln2: LayerNorm::new(d_h),
                ffn_in: Linear::init(d_h, f, &mut rng),
                ffn_out: Linear::init(f, d_h, &mut rng),
            })
            .collect();
        let dec_hidden = Linear::init(d_h, config.d_q, &mut rng);
        let dec_out = Linear::init(config.d_q, config.d_a, &mut rng);
        Ok(Self {
            config,
            encoder,
            layers,
            dec_hidden,
            dec_out,
        })
    }

    fn scale(&self) -> S {
        S::one() / S::of_usize(self.config.d_h).sqrt()
    }

    /// Whole-sequence forward pass; position `t` attends to
    /// `max(0, t - n + 1) ..= t`.
    pub fn forward_parallel(&self, x: ArrayView2<'_, S>) -> Result<Array2<S>> {
        require_cols(x, self.config.d_s)?;
        if x.nrows() == 0 {
            return Err(invalid("empty sequence"));
        }
        let (t_len, n, d_h) = (x.nrows(), self.config.n, self.config.d_h);
        let scale = self.scale();
        let mut h = self.encoder.forward(x);
        let mut scores = Vec::with_capacity(n);
        for layer in &self.layers {
            let (z, _) = layer.ln1.forward(h.view());
            let q = layer.query.forward(z.view());
            let k = layer.key.forward(z.view());
            let v = layer.value.forward(z.view());
            let mut mixed = Array2::zeros((t_len, d_h));
            for t in 0..t_len {
                let lo = (t + 1).saturating_sub(n);
                let qt = q.row(t);
                let qt = qt.as_slice().expect("row-major");
                scores.clear();
                scores.extend((lo..=t).map(|s| dot(qt, k.row(s).as_slice().expect("row-major")) * scale));
                softmax_in_place(&mut scores);
                let mut row = mixed.row_mut(t);
                for (s, &p) in (lo..=t).zip(&scores) {
                    row.scaled_add(p, &v.row(s));
                }
            }
            h += &layer.output.forward(mixed.view());
            let (z, _) = layer.ln2.forward(h.view());
            h += &layer.ffn_out.forward(layer.ffn_in.forward(z.view()).mapv(gelu).view());
        }
        Ok(self.dec_out.forward(self.dec_hidden.forward(h.view()).mapv(gelu).view()))
    }

    pub fn new_stream(&self) -> AttnStream<S> {
        AttnStream::new(&self.config)
    }

    pub fn forward_step_into(&self, x_new: &[S], state: &mut AttnStream<S>, out: &mut [S]) -> Result<()> {
        state.step(self, x_new, out)
    }

    pub fn forward_step(&self, x_new: &[S], state: &mut AttnStream<S>) -> Result<Vec<S>> {
        let mut out = vec![S::zero(); self.config.d_a];
        self.forward_step_into(x_new, state, &mut out)?;
        Ok(out)
    }
}

/// Per-stream KV cache: for each layer an `n x d_h` ring of keys and values
/// holding the most recent `min(steps, n)` positions.
#[derive(Debug, Clone)]
pub struct AttnStream<S> {
    config: FcnetConfig,
    keys: Vec<Array2<S>>,
    values: Vec<Array2<S>>,
    head: usize,
    filled: usize,
    steps: u64,
    hidden: Vec<S>,
    normed: Vec<S>,
    q: Vec<S>,
    mixed: Vec<S>,
    proj: Vec<S>,
    ffn: Vec<S>,
    dec: Vec<S>,
    scores: Vec<S>,
}

impl<S: Scalar> AttnStream<S> {
    pub fn new(config: &FcnetConfig) -> Self {
        let (n, d_h) = (config.n, config.d_h);
        let z = |len| vec![S::zero(); len];
        Self {
            config: *config,
            keys: (0..config.layers).map(|_| Array2::zeros((n, d_h))).collect(),
            values: (0..config.layers).map(|_| Array2::zeros((n, d_h))).collect(),
            head: 0,
            filled: 0,
            steps: 0,
            hidden: z(d_h),
            normed: z(d_h),
            q: z(d_h),
            mixed: z(d_h),
            proj: z(d_h),
            ffn: z(config.ffn_width()),
            dec: z(config.d_q),
            scores: Vec::with_capacity(n),
        }
    }

    pub fn reset(&mut self) {
        for k in &mut self.keys {
            k.fill(S::zero());
        }
        for v in &mut self.values {
            v.fill(S::zero());
        }
        self.head = 0;
        self.filled = 0;
        self.steps = 0;
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Number of cached positions, `min(steps, n)`.
    pub fn cached(&self) -> usize {
        self.filled
    }

    fn step(&mut self, model: &AttnBaseline<S>, x_new: &[S], out: &mut [S]) -> Result<()> {
        let cfg = &model.config;
        if self.config != *cfg {
            return Err(invalid("stream state was built for a different configuration"));
        }
        if x_new.len() != cfg.d_s || out.len() != cfg.d_a {
            return Err(shape(format!("{} inputs and {} outputs", cfg.d_s, cfg.d_a), format!("{} and {}", x_new.len(), out.len())));
        }
        if x_new.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("attention stream input"));
        }
        let n = cfg.n;
        let slot = self.head;
        let filled = (self.filled + 1).min(n);
        let scale = model.scale();
        model.encoder.forward_into(x_new, &mut self.hidden);
        for (l, layer) in model.layers.iter().enumerate() {
            layer.ln1.forward_into(&self.hidden, &mut self.normed);
            layer.query.forward_into(&self.normed, &mut self.q);
            {
                let mut k_row = self.keys[l].row_mut(slot);
                layer.key.forward_into(&self.normed, k_row.as_slice_mut().expect("row-major"));
                let mut v_row = self.values[l].row_mut(slot);
                layer.value.forward_into(&self.normed, v_row.as_slice_mut().expect("row-major"));
            }
            // ring rows 0..filled are all live; attention is order-free
            let keys = self.keys[l].as_slice().expect("row-major");
            let values = self.values[l].as_slice().expect("row-major");
            let d_h = cfg.d_h;
            self.scores.clear();
            for s in 0..filled {
                self.scores.push(dot(&self.q, &keys[s * d_h..(s + 1) * d_h]) * scale);
            }
            softmax_in_place(&mut self.scores);
            self.mixed.fill(S::zero());
            for (s, &p) in self.scores.iter().enumerate() {
                for (m, &v) in self.mixed.iter_mut().zip(&values[s * d_h..(s + 1) * d_h]) {
                    *m += p * v;
                }
            }
            layer.output.forward_into(&self.mixed, &mut self.proj);
            for (h, &p) in self.hidden.iter_mut().zip(&self.proj) {
                *h += p;
            }
            layer.ln2.forward_into(&self.hidden, &mut self.normed);
            layer.ffn_in.forward_into(&self.normed, &mut self.ffn);
            for v in self.ffn.iter_mut() {
                *v = gelu(*v);
            }
            layer.ffn_out.forward_into(&self.ffn, &mut self.proj);
            for (h, &p) in self.hidden.iter_mut().zip(&self.proj) {
                *h += p;
            }
        }
        model.dec_hidden.forward_into(&self.hidden, &mut self.dec);
        for v in self.dec.iter_mut() {
            *v = gelu(*v);
        }
        model.dec_out.forward_into(&self.dec, out);
        self.head = (slot + 1) % n;
        self.filled = filled;
        self.steps += 1;
        Ok(())
    }
}
