//! The FCNet stack: position-wise encoder, `L` Fourier layers and a
//! position-wise decoder.
//!
//! Each Fourier layer computes
//!
//! ```text
//! Y = gelu(CSC(LN(X))) + X
//! X' = FFN(LN(Y)) + Y
//! ```
//!
//! with a two-layer GELU FFN. The decoder reads the output of the last layer.

mod checkpoint;
mod layers;
mod stream;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use layers::{gelu, gelu_grad, gelu_pair, gelu_with_grad, LayerNorm, Linear, LnTape, LN_EPS};
pub use stream::StreamState;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::csc::{self, suggest_modes, CscConfig, CscWeights};
use crate::error::{invalid, Result};
use crate::scalar::Scalar;
use crate::spectral::require_cols;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FcnetConfig {
    /// State (input token) dimension.
    pub d_s: usize,
    /// Action dimension.
    pub d_a: usize,
    /// Hidden width of the encoder and Fourier layers.
    pub d_h: usize,
    /// Hidden width of the two-layer decoder.
    pub d_q: usize,
    pub layers: usize,
    /// Context (window) length.
    pub n: usize,
    /// Retained modes per window.
    pub m: usize,
    /// FFN expansion factor inside each Fourier layer.
    pub ffn_mult: usize,
}

impl FcnetConfig {
    /// Defaults: `d_h = 256`, `d_q = 128`, four layers, `n = 64`,
    /// `m = suggest_modes(n)`, FFN expansion 2.
    pub fn new(d_s: usize, d_a: usize) -> Self {
        Self {
            d_s,
            d_a,
            d_h: 256,
            d_q: 128,
            layers: 4,
            n: 64,
            m: suggest_modes(64),
            ffn_mult: 2,
        }
    }

    /// Set the context length and re-derive `m` from it.
    pub fn with_context(mut self, n: usize) -> Self {
        self.n = n;
        self.m = suggest_modes(n);
        self
    }

    pub fn csc(&self) -> CscConfig {
        CscConfig {
            n: self.n,
            m: self.m,
            d: self.d_h,
        }
    }

    pub fn ffn_width(&self) -> usize {
        self.ffn_mult * self.d_h
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("d_s", self.d_s),
            ("d_a", self.d_a),
            ("d_h", self.d_h),
            ("d_q", self.d_q),
            ("layers", self.layers),
            ("ffn_mult", self.ffn_mult),
        ] {
            if v == 0 {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        self.csc().validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FourierLayer<S> {
    pub ln1: LayerNorm<S>,
    pub csc: CscWeights<S>,
    pub ln2: LayerNorm<S>,
    pub ffn_in: Linear<S>,
    pub ffn_out: Linear<S>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcnetParams<S> {
    /// `P`: `d_s -> d_h`.
    pub encoder: Linear<S>,
    pub layers: Vec<FourierLayer<S>>,
    /// `Q` first layer: `d_h -> d_q`.
    pub dec_hidden: Linear<S>,
    /// `Q` second layer: `d_q -> d_a`.
    pub dec_out: Linear<S>,
}

impl<S: Scalar> FcnetParams<S> {
    /// All-zero parameters with the shapes of `cfg` (gradient accumulator).
    pub fn zeros(cfg: &FcnetConfig) -> Self {
        let (d_h, f) = (cfg.d_h, cfg.ffn_width());
        Self {
            encoder: Linear::zeros(cfg.d_s, d_h),
            layers: (0..cfg.layers)
                .map(|_| FourierLayer {
                    ln1: LayerNorm::zeros(d_h),
                    csc: CscWeights::zeros(cfg.m),
                    ln2: LayerNorm::zeros(d_h),
                    ffn_in: Linear::zeros(d_h, f),
                    ffn_out: Linear::zeros(f, d_h),
                })
                .collect(),
            dec_hidden: Linear::zeros(d_h, cfg.d_q),
            dec_out: Linear::zeros(cfg.d_q, cfg.d_a),
        }
    }

    /// Named flat views of every trainable tensor, in a fixed order shared by
    /// the optimizer and the checkpoint format.
    pub fn tensors<'a>(&'a self) -> Vec<(String, &'a [S])> {
        let mut out: Vec<(String, &[S])> = Vec::new();
        let mut push = |name: String, a: &'a [S]| out.push((name, a));
        fn s<A: ndarray::Data<Elem = T>, T, D: ndarray::Dimension>(a: &ndarray::ArrayBase<A, D>) -> &[T] {
            a.as_slice().expect("parameters are contiguous")
        }
        push("encoder.w".into(), s(&self.encoder.w));
        push("encoder.b".into(), s(&self.encoder.b));
        for (l, layer) in self.layers.iter().enumerate() {
            push(format!("layers.{l}.ln1.gamma"), s(&layer.ln1.gamma));
            push(format!("layers.{l}.ln1.beta"), s(&layer.ln1.beta));
            push(format!("layers.{l}.csc.re"), s(&layer.csc.re));
            push(format!("layers.{l}.csc.im"), s(&layer.csc.im));
            push(format!("layers.{l}.ln2.gamma"), s(&layer.ln2.gamma));
            push(format!("layers.{l}.ln2.beta"), s(&layer.ln2.beta));
            push(format!("layers.{l}.ffn_in.w"), s(&layer.ffn_in.w));
            push(format!("layers.{l}.ffn_in.b"), s(&layer.ffn_in.b));
            push(format!("layers.{l}.ffn_out.w"), s(&layer.ffn_out.w));
            push(format!("layers.{l}.ffn_out.b"), s(&layer.ffn_out.b));
        }
        push("decoder.hidden.w".into(), s(&self.dec_hidden.w));
        push("decoder.hidden.b".into(), s(&self.dec_hidden.b));
        push("decoder.out.w".into(), s(&self.dec_out.w));
        push("decoder.out.b".into(), s(&self.dec_out.b));
        out
    }

    /// Mutable counterpart of [`FcnetParams::tensors`], same order. Callers
    /// that change CSC weights must call [`FcnetParams::refresh_folded`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [S]> {
        fn s<A: ndarray::DataMut<Elem = T>, T, D: ndarray::Dimension>(a: &mut ndarray::ArrayBase<A, D>) -> &mut [T] {
            a.as_slice_mut().expect("parameters are contiguous")
        }
        let mut out: Vec<&mut [S]> = vec![s(&mut self.encoder.w), s(&mut self.encoder.b)];
        for layer in self.layers.iter_mut() {
            layer.csc.clear_folded();
            out.push(s(&mut layer.ln1.gamma));
            out.push(s(&mut layer.ln1.beta));
            out.push(s(&mut layer.csc.re));
            out.push(s(&mut layer.csc.im));
            out.push(s(&mut layer.ln2.gamma));
            out.push(s(&mut layer.ln2.beta));
            out.push(s(&mut layer.ffn_in.w));
            out.push(s(&mut layer.ffn_in.b));
            out.push(s(&mut layer.ffn_out.w));
            out.push(s(&mut layer.ffn_out.b));
        }
        out.push(s(&mut self.dec_hidden.w));
        out.push(s(&mut self.dec_hidden.b));
        out.push(s(&mut self.dec_out.w));
        out.push(s(&mut self.dec_out.b));
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn refresh_folded(&mut self, n: usize) {
        for layer in &mut self.layers {
            layer.csc.refresh_folded(n);
        }
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, scale: S) {
        let src = other.tensors();
        for (dst, (_, src)) in self.tensors_mut().into_iter().zip(src) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

/// Intermediate activations of one Fourier layer kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerTape<S> {
    pub ln1: LnTape<S>,
    pub csc_in: Array2<S>,
    /// GELU derivative at the CSC output.
    pub csc_dact: Array2<S>,
    pub ln2: LnTape<S>,
    pub ffn_in: Array2<S>,
    pub ffn_act: Array2<S>,
    pub ffn_dact: Array2<S>,
}

/// Everything [`Fcnet::forward_tape`] records.
#[derive(Debug, Clone)]
pub struct ForwardTape<S> {
    pub input: Array2<S>,
    pub layers: Vec<LayerTape<S>>,
    pub dec_in: Array2<S>,
    pub dec_act: Array2<S>,
    pub dec_dact: Array2<S>,
    pub output: Array2<S>,
}

/// Configuration plus parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Fcnet<S> {
    pub config: FcnetConfig,
    pub params: FcnetParams<S>,
}

impl<S: Scalar> Fcnet<S> {
    /// Deterministic initialization: affine weights uniform on
    /// `(-1/sqrt(fan_in), 1/sqrt(fan_in))`, zero biases, unit LayerNorm
    /// scales, CSC weights uniform on `(-1/m, 1/m)`.
    pub fn init(config: FcnetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d_h, f) = (config.d_h, config.ffn_width());
        let encoder = Linear::init(config.d_s, d_h, &mut rng);
        let layers = (0..config.layers)
            .map(|_| FourierLayer {
                ln1: LayerNorm::new(d_h),
                csc: CscWeights::random(config.m, &mut rng),
                ln2: LayerNorm::new(d_h),
                ffn_in: Linear::init(d_h, f, &mut rng),
                ffn_out: Linear::init(f, d_h, &mut rng),
            })
            .collect();
        let dec_hidden = Linear::init(d_h, config.d_q, &mut rng);
        let dec_out = Linear::init(config.d_q, config.d_a, &mut rng);
        let mut params = FcnetParams {
            encoder,
            layers,
            dec_hidden,
            dec_out,
        };
        params.refresh_folded(config.n);
        Ok(Self { config, params })
    }

    pub fn from_parts(config: FcnetConfig, mut params: FcnetParams<S>) -> Result<Self> {
        config.validate()?;
        let expected = FcnetParams::<S>::zeros(&config);
        let shapes_match = expected
            .tensors()
            .iter()
            .zip(params.tensors())
            .all(|((_, a), (_, b))| a.len() == b.len())
            && expected.layers.len() == params.layers.len();
        if !shapes_match {
            return Err(invalid("parameter shapes do not match the configuration"));
        }
        params.refresh_folded(config.n);
        Ok(Self { config, params })
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    /// The same model at another precision.
    pub fn cast<T: Scalar>(&self) -> Fcnet<T> {
        let mut params = FcnetParams::<T>::zeros(&self.config);
        for (dst, (_, src)) in params.tensors_mut().into_iter().zip(self.params.tensors()) {
            for (d, &v) in dst.iter_mut().zip(src) {
                *d = T::of(v.as_f64());
            }
        }
        params.refresh_folded(self.config.n);
        Fcnet {
            config: self.config,
            params,
        }
    }

    /// Whole-sequence forward pass, `T x d_s -> T x d_a`, with CSC on the
    /// FFT-convolution path.
    pub fn forward_parallel(&self, x: ArrayView2<'_, S>) -> Result<Array2<S>> {
        Ok(self.forward_tape(x)?.output)
    }

    /// Forward pass that also records the activations needed by
    /// [`Fcnet::backward_tape`].
    pub fn forward_tape(&self, x: ArrayView2<'_, S>) -> Result<ForwardTape<S>> {
        require_cols(x, self.config.d_s)?;
        if x.nrows() == 0 {
            return Err(invalid("empty sequence"));
        }
        let csc_cfg = self.config.csc();
        let mut h = self.params.encoder.forward(x);
        let mut tapes = Vec::with_capacity(self.params.layers.len());
        for layer in &self.params.layers {
            let (csc_in, ln1) = layer.ln1.forward(h.view());
            let csc_out = csc::forward_parallel(csc_in.view(), &layer.csc, &csc_cfg)?;
            let (csc_act, csc_dact) = gelu_pair(&csc_out);
            h += &csc_act;
            let (ffn_in, ln2) = layer.ln2.forward(h.view());
            let (ffn_act, ffn_dact) = gelu_pair(&layer.ffn_in.forward(ffn_in.view()));
            h += &layer.ffn_out.forward(ffn_act.view());
            tapes.push(LayerTape {
                ln1,
                csc_in,
                csc_dact,
                ln2,
                ffn_in,
                ffn_act,
                ffn_dact,
            });
        }
        let (dec_act, dec_dact) = gelu_pair(&self.params.dec_hidden.forward(h.view()));
        let output = self.params.dec_out.forward(dec_act.view());
        Ok(ForwardTape {
            input: x.to_owned(),
            layers: tapes,
            dec_in: h,
            dec_act,
            dec_dact,
            output,
        })
    }

    /// Reverse pass for an output adjoint `d_out` (`T x d_a`); gradients are
    /// accumulated into `grads`.
    pub fn backward_tape(&self, tape: &ForwardTape<S>, d_out: ArrayView2<'_, S>, grads: &mut FcnetParams<S>) -> Result<()> {
        let p = &self.params;
        let csc_cfg = self.config.csc();
        let d_act = p.dec_out.backward(tape.dec_act.view(), d_out, &mut grads.dec_out);
        let d_pre = d_act * &tape.dec_dact;
        let mut dh = p.dec_hidden.backward(tape.dec_in.view(), d_pre.view(), &mut grads.dec_hidden);

        for (l, layer) in p.layers.iter().enumerate().rev() {
            let t = &tape.layers[l];
            let g = &mut grads.layers[l];
            // X' = FFN(LN2(Y)) + Y
            let d_act = layer.ffn_out.backward(t.ffn_act.view(), dh.view(), &mut g.ffn_out);
            let d_pre = d_act * &t.ffn_dact;
            let d_ln2 = layer.ffn_in.backward(t.ffn_in.view(), d_pre.view(), &mut g.ffn_in);
            dh += &layer.ln2.backward(&t.ln2, d_ln2.view(), &mut g.ln2);
            // Y = gelu(CSC(LN1(X))) + X
            let d_csc_out = &dh * &t.csc_dact;
            let cg = csc::backward(t.csc_in.view(), &layer.csc, &csc_cfg, d_csc_out.view())?;
            g.csc.re += &cg.dw_re;
            g.csc.im += &cg.dw_im;
            dh += &layer.ln1.backward(&t.ln1, cg.dx.view(), &mut g.ln1);
        }
        p.encoder.backward(tape.input.view(), dh.view(), &mut grads.encoder);
        Ok(())
    }

    /// Fresh, zeroed streaming state for this model.
    pub fn new_stream(&self) -> StreamState<S> {
        StreamState::new(&self.config)
    }

    /// Streaming pass for one token; writes the action into `out`.
    ///
    /// Order of work per layer: LayerNorm, sliding-DFT CSC update, GELU,
    /// residual add, LayerNorm, FFN, residual add. `O(L (m d_h + d_h^2))`
    /// with no dependence on the context length beyond the CSC ring write.
    pub fn forward_step_into(&self, x_new: &[S], state: &mut StreamState<S>, out: &mut [S]) -> Result<()> {
        state.step(self, x_new, out)
    }

    pub fn forward_step(&self, x_new: &[S], state: &mut StreamState<S>) -> Result<Vec<S>> {
        let mut out = vec![S::zero(); self.config.d_a];
        self.forward_step_into(x_new, state, &mut out)?;
        Ok(out)
    }
}
