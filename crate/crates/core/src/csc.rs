//! Causal spectral convolution (CSC).
//!
//! For every time step `t` the block takes the length-`n` window ending at
//! `t` (zeros before the start of the sequence), keeps its `m` lowest DFT
//! modes, mixes them with a complex `m x m` matrix `W`, rebuilds the full
//! spectrum by conjugate symmetry and reads the inverse DFT at the newest
//! position. Four execution paths compute the same map:
//!
//! * [`forward_direct`]: the definition, one windowed DFT per step.
//! * [`forward_parallel_modes`]: all window spectra at once as FFT
//!   convolutions of `A_i = u^(i+1)` against the input differences
//!   `f_t = x_t - x_{t-n}`, one per mode and channel.
//! * [`forward_parallel`]: the same sum collapsed to one real length-`n`
//!   kernel (see [`window_kernel`]) applied to every channel by FFT
//!   convolution. This is the training path.
//! * [`forward_step`]: sliding-DFT recurrence over a cached spectrum.
//!
//! All but the direct path read the output through the folded kernel
//! `v = c^T W` (see [`fold_inference_kernel`]); the direct path keeps the
//! unfolded pipeline so it can serve as the reference.

use ndarray::{Array1, Array2, Array3, ArrayView2};
use num_complex::Complex;
use rand::Rng;

use crate::error::{invalid, shape, Error, Result};
use crate::scalar::Scalar;
use crate::spectral::{
    conjugate_extend, dft_window, idft_at, max_modes, require_cols, FftPlan,
    ModeMatrix,
};

/// Mode-count heuristic `min(floor(2.5 ln n), floor(n/2) + 1)` (natural log),
/// clamped below at 1.
pub fn suggest_modes(n: usize) -> usize {
    let by_log = (2.5 * (n.max(1) as f64).ln()).floor() as usize;
    by_log.min(max_modes(n)).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CscConfig {
    /// Window length.
    pub n: usize,
    /// Retained modes, `1 <= m <= 1 + n/2`.
    pub m: usize,
    /// Channels.
    pub d: usize,
}

impl CscConfig {
    pub fn new(n: usize, m: usize, d: usize) -> Result<Self> {
        let cfg = Self { n, m, d };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid(format!("window length {} < 2", self.n)));
        }
        if self.m == 0 || self.m > max_modes(self.n) {
            return Err(invalid(format!(
                "mode count {} outside [1, {}] for n = {}",
                self.m,
                max_modes(self.n),
                self.n
            )));
        }
        if self.d == 0 {
            return Err(invalid("channel count must be positive"));
        }
        Ok(())
    }
}

/// Complex mode-mixing matrix stored as real and imaginary parts, plus the
/// optional cached folded kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct CscWeights<S> {
    pub re: Array2<S>,
    pub im: Array2<S>,
    folded: Option<Vec<Complex<S>>>,
}

impl<S: Scalar> CscWeights<S> {
    pub fn zeros(m: usize) -> Self {
        Self::from_parts(Array2::zeros((m, m)), Array2::zeros((m, m)))
    }

    pub fn identity(m: usize) -> Self {
        Self::from_parts(Array2::eye(m), Array2::zeros((m, m)))
    }

    pub fn from_parts(re: Array2<S>, im: Array2<S>) -> Self {
        assert_eq!(re.dim(), im.dim());
        assert_eq!(re.nrows(), re.ncols(), "mixing matrix must be square");
        Self { re, im, folded: None }
    }

    /// Real and imaginary entries i.i.d. uniform on `(-1/m, 1/m)`.
    pub fn random(m: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / m as f64;
        let mut draw = || S::of(rng.random_range(-bound..bound));
        let re = Array2::from_shape_simple_fn((m, m), &mut draw);
        let im = Array2::from_shape_simple_fn((m, m), &mut draw);
        Self::from_parts(re, im)
    }

    pub fn m(&self) -> usize {
        self.re.nrows()
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex<S> {
        Complex::new(self.re[[row, col]], self.im[[row, col]])
    }

    pub fn to_complex(&self) -> Array2<Complex<S>> {
        Array2::from_shape_fn(self.re.dim(), |(r, c)| self.entry(r, c))
    }

    /// Cached folded kernel, if [`CscWeights::refresh_folded`] has been called
    /// since the last change to `re`/`im`.
    pub fn folded(&self) -> Option<&[Complex<S>]> {
        self.folded.as_deref()
    }

    /// Recompute and cache `v = c^T W` for window length `n`. Must be called
    /// after mutating `re` or `im` in place.
    pub fn refresh_folded(&mut self, n: usize) {
        self.folded = Some(fold_with(&self.re, &self.im, n));
    }

    pub fn clear_folded(&mut self) {
        self.folded = None;
    }

    fn kernel(&self, n: usize) -> Vec<Complex<S>> {
        match &self.folded {
            Some(v) if v.len() == self.m() => v.clone(),
            _ => fold_with(&self.re, &self.im, n),
        }
    }
}

/// Twiddles `u_k = exp(j 2 pi k / n)`, their powers `A_i = u^(i+1)` over one
/// period, and the IDFT-at-last-position coefficients `c`.
#[derive(Debug, Clone)]
pub struct TwiddleTable<S> {
    n: usize,
    m: usize,
    /// `n x m`, row `i` holds `u^(i+1)`.
    powers: Array2<Complex<S>>,
    coeffs: Vec<Complex<S>>,
}

impl<S: Scalar> TwiddleTable<S> {
    pub fn new(n: usize, m: usize) -> Self {
        let nf = S::of_usize(n);
        let powers = Array2::from_shape_fn((n, m), |(i, k)| {
            let ang = S::TAU() * S::of_usize((k * (i + 1)) % n) / nf;
            Complex::new(ang.cos(), ang.sin())
        });
        Self {
            n,
            m,
            powers,
            coeffs: last_position_coeffs(n, m),
        }
    }

    pub fn u(&self, k: usize) -> Complex<S> {
        self.powers[[0, k]]
    }

    /// `A_i` for mode `k`, periodic in `i` with period `n`.
    pub fn power(&self, i: usize, k: usize) -> Complex<S> {
        self.powers[[i % self.n, k]]
    }

    pub fn coeffs(&self) -> &[Complex<S>] {
        &self.coeffs
    }

    pub fn m(&self) -> usize {
        self.m
    }
}

/// Coefficients `c` with `Re(idft_at(conjugate_extend(Y), n-1)) = Re(c . Y) / n`:
/// `c_0 = 1`, `c_k = 2 exp(-j 2 pi k / n)`, and `c_{n/2} = -1` for the
/// self-conjugate Nyquist mode.
pub fn last_position_coeffs<S: Scalar>(n: usize, m: usize) -> Vec<Complex<S>> {
    let nf = S::of_usize(n);
    (0..m)
        .map(|k| {
            let ang = -S::TAU() * S::of_usize(k) / nf;
            let base = Complex::new(ang.cos(), ang.sin());
            if k == 0 || 2 * k == n {
                base
            } else {
                base * (S::one() + S::one())
            }
        })
        .collect()
}

fn fold_with<S: Scalar>(re: &Array2<S>, im: &Array2<S>, n: usize) -> Vec<Complex<S>> {
    let m = re.nrows();
    let c = last_position_coeffs::<S>(n, m);
    (0..m)
        .map(|k| {
            (0..m).fold(Complex::new(S::zero(), S::zero()), |acc, j| {
                acc + c[j] * Complex::new(re[[j, k]], im[[j, k]])
            })
        })
        .collect()
}

/// Fold mode mixing and the inverse DFT at the newest position into one
/// vector `v = c^T W`, so that `y = Re(v . X) / n`.
pub fn fold_inference_kernel<S: Scalar>(w: &CscWeights<S>, cfg: &CscConfig) -> Vec<Complex<S>> {
    fold_with(&w.re, &w.im, cfg.n)
}

fn check_weights<S: Scalar>(w: &CscWeights<S>, cfg: &CscConfig) -> Result<()> {
    if w.m() != cfg.m || w.im.dim() != (cfg.m, cfg.m) {
        return Err(shape(format!("{0}x{0} mixing matrix", cfg.m), format!("{:?}", w.re.dim())));
    }
    Ok(())
}

fn check_input<S: Scalar>(x: ArrayView2<'_, S>, w: &CscWeights<S>, cfg: &CscConfig) -> Result<()> {
    cfg.validate()?;
    check_weights(w, cfg)?;
    require_cols(x, cfg.d)?;
    if x.nrows() == 0 {
        return Err(invalid("empty sequence"));
    }
    Ok(())
}

/// Reference path: explicit window, truncated DFT, mixing, conjugate
/// extension and inverse DFT at position `n - 1` for every step.
/// `O(T n m d)`; meant for verification.
pub fn forward_direct<S: Scalar>(x: ArrayView2<'_, S>, w: &CscWeights<S>, cfg: &CscConfig) -> Result<Array2<S>> {
    check_input(x, w, cfg)?;
    let (t_len, d) = x.dim();
    let n = cfg.n;
    let wc = w.to_complex();
    let mut y = Array2::zeros((t_len, d));
    let mut window = Array2::zeros((n, d));
    for t in 0..t_len {
        window.fill(S::zero());
        for i in 0..n {
            // window row i holds x_{t-n+1+i}
            if let Some(s) = (t + 1 + i).checked_sub(n) {
                window.row_mut(i).assign(&x.row(s));
            }
        }
        let xh = dft_window(window.view(), cfg.m)?;
        let yh = ModeMatrix {
            modes: wc.dot(&xh.modes),
            n,
        };
        let z = conjugate_extend(&yh);
        let out = idft_at(z.view(), n - 1)?;
        for c in 0..d {
            y[[t, c]] = out[c].re;
        }
    }
    Ok(y)
}

/// `f_t = x_t - x_{t-n}` with zero history.
fn differences<S: Scalar>(x: ArrayView2<'_, S>, n: usize) -> Array2<S> {
    let mut f = x.to_owned();
    for t in n..x.nrows() {
        for c in 0..x.ncols() {
            f[[t, c]] -= x[[t - n, c]];
        }
    }
    f
}

struct ConvPlan<S> {
    plan: FftPlan<S>,
    /// FFT of `A_i` (`i < T`, zero-padded) per mode.
    a_hat: Vec<Vec<Complex<S>>>,
}

impl<S: Scalar> ConvPlan<S> {
    fn new(tw: &TwiddleTable<S>, t_len: usize) -> Self {
        let len = (2 * t_len - 1).next_power_of_two();
        let plan = FftPlan::new(len);
        let zero = Complex::new(S::zero(), S::zero());
        let a_hat = (0..tw.m())
            .map(|k| {
                let mut buf = vec![zero; len];
                for (i, slot) in buf.iter_mut().take(t_len).enumerate() {
                    *slot = tw.power(i, k);
                }
                plan.forward(&mut buf);
                buf
            })
            .collect();
        Self { plan, a_hat }
    }

    fn channel_hat(&self, f: &Array2<S>, c: usize) -> Vec<Complex<S>> {
        let mut buf = vec![Complex::new(S::zero(), S::zero()); self.plan.len()];
        for (slot, &v) in buf.iter_mut().zip(f.column(c)) {
            *slot = Complex::new(v, S::zero());
        }
        self.plan.forward(&mut buf);
        buf
    }
}

/// Window spectra `X^(t)` for every step, shape `T x m x d`, computed as the
/// linear convolutions `sum_i A_i . f_{t-i}` (one per mode/channel pair,
/// sharing the transforms of `A` and `f`).
pub fn parallel_spectra<S: Scalar>(x: ArrayView2<'_, S>, cfg: &CscConfig) -> Result<Array3<Complex<S>>> {
    cfg.validate()?;
    require_cols(x, cfg.d)?;
    let t_len = x.nrows();
    if t_len == 0 {
        return Err(invalid("empty sequence"));
    }
    let tw = TwiddleTable::new(cfg.n, cfg.m);
    let conv = ConvPlan::new(&tw, t_len);
    let f = differences(x, cfg.n);
    let mut out = Array3::from_elem((t_len, cfg.m, cfg.d), Complex::new(S::zero(), S::zero()));
    let mut buf = vec![Complex::new(S::zero(), S::zero()); conv.plan.len()];
    for c in 0..cfg.d {
        let f_hat = conv.channel_hat(&f, c);
        for k in 0..cfg.m {
            for ((b, a), fh) in buf.iter_mut().zip(&conv.a_hat[k]).zip(&f_hat) {
                *b = *a * *fh;
            }
            conv.plan.inverse(&mut buf);
            for t in 0..t_len {
                out[[t, k, c]] = buf[t];
            }
        }
    }
    Ok(out)
}

/// Per-mode parallel path: FFT-convolution spectra read out through the
/// folded kernel. `O(m d T log T)`.
pub fn forward_parallel_modes<S: Scalar>(x: ArrayView2<'_, S>, w: &CscWeights<S>, cfg: &CscConfig) -> Result<Array2<S>> {
    check_input(x, w, cfg)?;
    let (t_len, d) = x.dim();
    let v = w.kernel(cfg.n);
    let scale = S::one() / S::of_usize(cfg.n);
    let tw = TwiddleTable::new(cfg.n, cfg.m);
    let conv = ConvPlan::new(&tw, t_len);
    let f = differences(x, cfg.n);
    let mut y = Array2::zeros((t_len, d));
    let mut buf = vec![Complex::new(S::zero(), S::zero()); conv.plan.len()];
    for c in 0..d {
        let f_hat = conv.channel_hat(&f, c);
        for (k, vk) in v.iter().enumerate() {
            for ((b, a), fh) in buf.iter_mut().zip(&conv.a_hat[k]).zip(&f_hat) {
                *b = *a * *fh;
            }
            conv.plan.inverse(&mut buf);
            for t in 0..t_len {
                y[[t, c]] += (*vk * buf[t]).re * scale;
            }
        }
    }
    Ok(y)
}

/// Real FIR kernel of the block: `y_t = sum_{i<n} h_i x_{t-i}` with
/// `h_i = Re(sum_k v_k u_k^(i+1)) / n`.
///
/// Because `u_k^n = 1`, the convolution of `A` with `f_t = x_t - x_{t-n}`
/// telescopes to this length-`n` filter, shared by all channels.
pub fn window_kernel<S: Scalar>(w: &CscWeights<S>, cfg: &CscConfig) -> Vec<S> {
    let tw = TwiddleTable::new(cfg.n, cfg.m);
    kernel_from_folded(&w.kernel(cfg.n), &tw, cfg.n)
}

fn kernel_from_folded<S: Scalar>(v: &[Complex<S>], tw: &TwiddleTable<S>, n: usize) -> Vec<S> {
    let scale = S::one() / S::of_usize(n);
    (0..n)
        .map(|i| {
            v.iter()
                .enumerate()
                .fold(S::zero(), |acc, (k, vk)| acc + (*vk * tw.power(i, k)).re)
                * scale
        })
        .collect()
}

/// FFT plan and kernel transform for convolving `T`-step channels with a
/// length-`n` real kernel. Channels go through the FFT two at a time as
/// the real and imaginary parts of one complex sequence; the kernel is real,
/// so the two results separate again into real and imaginary parts.
struct KernelConv<S> {
    plan: FftPlan<S>,
    h_hat: Vec<Complex<S>>,
    t_len: usize,
}

impl<S: Scalar> KernelConv<S> {
    fn new(h: &[S], t_len: usize) -> Self {
        let plan = FftPlan::new((t_len + h.len() - 1).next_power_of_two());
        let mut h_hat = vec![Complex::new(S::zero(), S::zero()); plan.len()];
        for (slot, &v) in h_hat.iter_mut().zip(h) {
            slot.re = v;
        }
        plan.forward(&mut h_hat);
        Self { plan, h_hat, t_len }
    }

    /// Packs columns `c` and `c + 1` (if present) of `a` and transforms them.
    fn load_pair(&self, a: ArrayView2<'_, S>, c: usize, buf: &mut [Complex<S>]) {
        let pair = c + 1 < a.ncols();
        buf.fill(Complex::new(S::zero(), S::zero()));
        for t in 0..self.t_len {
            buf[t] = Complex::new(a[[t, c]], if pair { a[[t, c + 1]] } else { S::zero() });
        }
        self.plan.forward(buf);
    }

    fn store_pair(&self, buf: &[Complex<S>], out: &mut Array2<S>, c: usize) {
        let pair = c + 1 < out.ncols();
        for t in 0..self.t_len {
            out[[t, c]] = buf[t].re;
            if pair {
                out[[t, c + 1]] = buf[t].im;
            }
        }
    }
}

/// How [`forward_parallel`] and [`backward`] apply the window kernel.
/// Both methods compute the same sums; they differ only in rounding and cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConvMethod {
    /// Pick by estimated cost (see [`ConvMethod::resolve`]).
    #[default]
    Auto,
    /// FFT convolution, `O(d T log T)`.
    Fft,
    /// Direct sum over the `n` kernel taps, `O(d T n)`.
    Direct,
}

impl ConvMethod {
    /// `Auto` becomes `Direct` when the tap count is small next to the FFT
    /// length; the factor 16 reflects measured constant factors of the two
    /// loops.
    pub fn resolve(self, t_len: usize, n: usize) -> ConvMethod {
        match self {
            ConvMethod::Auto => {
                let len = (t_len + n - 1).next_power_of_two();
                let fft_cost = 16 * len * (len.trailing_zeros() as usize + 1);
                if t_len * n.min(t_len) <= fft_cost {
                    ConvMethod::Direct
                } else {
                    ConvMethod::Fft
                }
            }
            m => m,
        }
    }
}

/// Parallel (training) path: the window kernel applied to every channel.
pub fn forward_parallel<S: Scalar>(x: ArrayView2<'_, S>, w: &CscWeights<S>, cfg: &CscConfig) -> Result<Array2<S>> {
    forward_parallel_with(x, w, cfg, ConvMethod::Auto)
}

/// [`forward_parallel`] with an explicit convolution method.
pub fn forward_parallel_with<S: Scalar>(
    x: ArrayView2<'_, S>,
    w: &CscWeights<S>,
    cfg: &CscConfig,
    method: ConvMethod,
) -> Result<Array2<S>> {
    check_input(x, w, cfg)?;
    let (t_len, d) = x.dim();
    let h = window_kernel(w, cfg);
    let mut y = Array2::zeros((t_len, d));
    if method.resolve(t_len, cfg.n) == ConvMethod::Direct {
        let x = x.as_standard_layout();
        let xs = x.as_slice().expect("standard layout");
        let ys = y.as_slice_mut().expect("fresh array");
        for t in 0..t_len {
            let out = &mut ys[t * d..(t + 1) * d];
            for (i, &hi) in h.iter().enumerate().take(t + 1) {
                let src = &xs[(t - i) * d..(t - i + 1) * d];
                for (o, &v) in out.iter_mut().zip(src) {
                    *o += hi * v;
                }
            }
        }
        return Ok(y);
    }
    let conv = KernelConv::new(&h, t_len);
    let mut buf = vec![Complex::new(S::zero(), S::zero()); conv.plan.len()];
    for c in (0..d).step_by(2) {
        conv.load_pair(x, c, &mut buf);
        for (b, h) in buf.iter_mut().zip(&conv.h_hat) {
            *b *= *h;
        }
        conv.plan.inverse(&mut buf);
        conv.store_pair(&buf, &mut y, c);
    }
    Ok(y)
}

/// Per-stream sliding-DFT state for one CSC block.
#[derive(Debug, Clone)]
pub struct CscStreamCache<S> {
    /// Spectrum of the ring contents in arrival order.
    pub spectrum: ModeMatrix<S>,
    ring: Array2<S>,
    /// Index of the oldest ring row.
    head: usize,
    steps: u64,
    u: Vec<Complex<S>>,
    delta: Vec<S>,
}

impl<S: Scalar> CscStreamCache<S> {
    pub fn new(cfg: &CscConfig) -> Self {
        let tw = TwiddleTable::<S>::new(cfg.n, cfg.m);
        Self {
            spectrum: ModeMatrix::zeros(cfg.n, cfg.m, cfg.d),
            ring: Array2::zeros((cfg.n, cfg.d)),
            head: 0,
            steps: 0,
            u: (0..cfg.m).map(|k| tw.u(k)).collect(),
            delta: vec![S::zero(); cfg.d],
        }
    }

    pub fn reset(&mut self) {
        self.spectrum.modes.fill(Complex::new(S::zero(), S::zero()));
        self.ring.fill(S::zero());
        self.head = 0;
        self.steps = 0;
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Last `n` inputs, oldest first (zeros before the stream start).
    pub fn window(&self) -> Array2<S> {
        let n = self.ring.nrows();
        Array2::from_shape_fn(self.ring.dim(), |(i, c)| self.ring[[(self.head + i) % n, c]])
    }

    /// Max-abs gap between the cached spectrum and a fresh DFT of the window.
    pub fn drift(&self) -> S {
        let fresh = dft_window(self.window().view(), self.spectrum.m()).expect("cache dimensions are valid");
        fresh
            .modes
            .iter()
            .zip(self.spectrum.modes.iter())
            .fold(S::zero(), |acc, (a, b)| acc.max((*a - *b).norm()))
    }

    /// Recompute the spectrum from the window, discarding accumulated rounding.
    pub fn resync(&mut self) {
        self.spectrum = dft_window(self.window().view(), self.spectrum.m()).expect("cache dimensions are valid");
    }
}

/// Streaming path: one sliding-DFT update `X_k <- u_k (X_k - x_old + x_new)`
/// per mode, then `y = Re(v . X) / n`. `O(m d)` per call.
pub fn forward_step_into<S: Scalar>(
    x_new: &[S],
    w: &CscWeights<S>,
    cache: &mut CscStreamCache<S>,
    cfg: &CscConfig,
    out: &mut [S],
) -> Result<()> {
    if x_new.len() != cfg.d || out.len() != cfg.d {
        return Err(shape(format!("{} channels", cfg.d), x_new.len()));
    }
    if cache.spectrum.m() != cfg.m || cache.ring.dim() != (cfg.n, cfg.d) {
        return Err(invalid("stream cache was built for a different configuration"));
    }
    if x_new.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("csc stream input"));
    }
    let scale = S::one() / S::of_usize(cfg.n);
    let head = cache.head;
    for c in 0..cfg.d {
        cache.delta[c] = x_new[c] - cache.ring[[head, c]];
        cache.ring[[head, c]] = x_new[c];
    }
    cache.head = (head + 1) % cfg.n;
    cache.steps += 1;

    out.fill(S::zero());
    let folded_storage;
    let v: &[Complex<S>] = match w.folded() {
        Some(v) if v.len() == cfg.m => v,
        _ => {
            folded_storage = fold_inference_kernel(w, cfg);
            &folded_storage
        }
    };
    for k in 0..cfg.m {
        let uk = cache.u[k];
        let vk = v[k];
        let mut row = cache.spectrum.modes.row_mut(k);
        let row = row.as_slice_mut().expect("spectrum rows are contiguous");
        for ((xk, &dc), o) in row.iter_mut().zip(&cache.delta).zip(out.iter_mut()) {
            let updated = uk * Complex::new(xk.re + dc, xk.im);
            *xk = updated;
            *o += (vk.re * updated.re - vk.im * updated.im) * scale;
        }
    }
    Ok(())
}

pub fn forward_step<S: Scalar>(
    x_new: &[S],
    w: &CscWeights<S>,
    cache: &mut CscStreamCache<S>,
    cfg: &CscConfig,
) -> Result<Array1<S>> {
    let mut out = vec![S::zero(); cfg.d];
    forward_step_into(x_new, w, cache, cfg, &mut out)?;
    Ok(Array1::from(out))
}

/// Gradients of a scalar loss through [`forward_parallel`].
#[derive(Debug, Clone)]
pub struct CscGrads<S> {
    pub dx: Array2<S>,
    pub dw_re: Array2<S>,
    pub dw_im: Array2<S>,
}

/// Reverse-mode pass through [`forward_parallel`], treating the real and
/// imaginary parts of `W` as independent real parameters.
///
/// With `y_t = sum_i h_i x_{t-i}`: `dx_s = sum_i h_i dy_{s+i}` and
/// `dh_i = sum_{t,c} dy_{t,c} x_{t-i,c}`, both as FFT correlations. The
/// kernel adjoint then flows to `v` through `h_i = Re(v . u^(i+1)) / n` and
/// to `W` through `v = c^T W`.
pub fn backward<S: Scalar>(
    x: ArrayView2<'_, S>,
    w: &CscWeights<S>,
    cfg: &CscConfig,
    dy: ArrayView2<'_, S>,
) -> Result<CscGrads<S>> {
    backward_with(x, w, cfg, dy, ConvMethod::Auto)
}

/// `dx` and the kernel adjoint `dh` (length `n`) by direct sums.
fn kernel_adjoints_direct<S: Scalar>(x: ArrayView2<'_, S>, dy: ArrayView2<'_, S>, h: &[S]) -> (Array2<S>, Vec<S>) {
    let (t_len, d) = x.dim();
    let x = x.as_standard_layout();
    let dy = dy.as_standard_layout();
    let xs = x.as_slice().expect("standard layout");
    let gs = dy.as_slice().expect("standard layout");
    let mut dx = Array2::zeros((t_len, d));
    let dxs = dx.as_slice_mut().expect("fresh array");
    let mut dh = vec![S::zero(); h.len()];
    for t in 0..t_len {
        let g = &gs[t * d..(t + 1) * d];
        for (i, (&hi, dhi)) in h.iter().zip(dh.iter_mut()).enumerate().take(t + 1) {
            let s = t - i;
            let src = &xs[s * d..(s + 1) * d];
            let mut acc = S::zero();
            for ((o, &gv), &xv) in dxs[s * d..(s + 1) * d].iter_mut().zip(g).zip(src) {
                *o += hi * gv;
                acc += gv * xv;
            }
            *dhi += acc;
        }
    }
    (dx, dh)
}

/// `dx` and `dh` by FFT correlation.
fn kernel_adjoints_fft<S: Scalar>(x: ArrayView2<'_, S>, dy: ArrayView2<'_, S>, h: &[S]) -> (Array2<S>, Vec<S>) {
    let (t_len, d) = x.dim();
    let conv = KernelConv::new(h, t_len);
    let len = conv.plan.len();
    let zero = Complex::new(S::zero(), S::zero());
    let mut dx = Array2::zeros((t_len, d));
    let mut x_hat = vec![zero; len];
    let mut dy_hat = vec![zero; len];
    let mut buf = vec![zero; len];
    // sum over channel pairs of DY . conj(X); its real inverse is the
    // channel-summed correlation (the cross terms land in the imaginary part)
    let mut cross = vec![zero; len];
    for c in (0..d).step_by(2) {
        conv.load_pair(x, c, &mut x_hat);
        conv.load_pair(dy, c, &mut dy_hat);
        for i in 0..len {
            cross[i] += dy_hat[i] * x_hat[i].conj();
            buf[i] = dy_hat[i] * conv.h_hat[i].conj();
        }
        conv.plan.inverse(&mut buf);
        conv.store_pair(&buf, &mut dx, c);
    }
    conv.plan.inverse(&mut cross);
    (dx, cross.iter().take(h.len()).map(|c| c.re).collect())
}

/// [`backward`] with an explicit convolution method.
pub fn backward_with<S: Scalar>(
    x: ArrayView2<'_, S>,
    w: &CscWeights<S>,
    cfg: &CscConfig,
    dy: ArrayView2<'_, S>,
    method: ConvMethod,
) -> Result<CscGrads<S>> {
    check_input(x, w, cfg)?;
    if dy.dim() != x.dim() {
        return Err(shape(format!("{:?}", x.dim()), format!("{:?}", dy.dim())));
    }
    let t_len = x.nrows();
    let (n, m) = (cfg.n, cfg.m);
    let tw = TwiddleTable::new(n, m);
    let h = kernel_from_folded(&w.kernel(n), &tw, n);
    let (dx, dh) = match method.resolve(t_len, n) {
        ConvMethod::Direct => kernel_adjoints_direct(x, dy, &h),
        _ => kernel_adjoints_fft(x, dy, &h),
    };
    let zero = Complex::new(S::zero(), S::zero());

    let scale = S::one() / S::of_usize(n);
    // dL/dRe(v_k) and dL/dIm(v_k)
    let mut gv_re = vec![S::zero(); m];
    let mut gv_im = vec![S::zero(); m];
    for k in 0..m {
        let g = dh.iter().enumerate().fold(zero, |acc, (i, &r)| acc + tw.power(i, k) * r);
        gv_re[k] = g.re * scale;
        gv_im[k] = -g.im * scale;
    }
    // v_k = sum_j c_j W_jk
    let coeffs = tw.coeffs();
    let mut dw_re = Array2::zeros((m, m));
    let mut dw_im = Array2::zeros((m, m));
    for j in 0..m {
        let cj = coeffs[j];
        for k in 0..m {
            dw_re[[j, k]] = cj.re * gv_re[k] + cj.im * gv_im[k];
            dw_im[[j, k]] = -cj.im * gv_re[k] + cj.re * gv_im[k];
        }
    }
    Ok(CscGrads { dx, dw_re, dw_im })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mode_heuristic() {
        assert_eq!(suggest_modes(64), 10);
        assert_eq!(suggest_modes(4), 3);
        assert_eq!(suggest_modes(2048), 19);
        assert_eq!(suggest_modes(2), 1);
        let mut prev = 0;
        for n in 2..5000 {
            let m = suggest_modes(n);
            assert!(m >= prev && m <= max_modes(n));
            prev = m;
        }
    }

    #[test]
    fn config_bounds() {
        assert!(CscConfig::new(4, 3, 1).is_ok());
        assert!(CscConfig::new(4, 4, 1).is_err());
        assert!(CscConfig::new(1, 1, 1).is_err());
        assert!(CscConfig::new(8, 0, 1).is_err());
        assert!(CscConfig::new(8, 2, 0).is_err());
    }

    #[test]
    fn folded_kernel_identity_small() {
        let cfg = CscConfig::new(4, 2, 1).unwrap();
        let v = fold_inference_kernel(&CscWeights::<f64>::identity(2), &cfg);
        assert!((v[0] - Complex::new(1.0, 0.0)).norm() < 1e-15);
        assert!((v[1] - Complex::new(0.0, -2.0)).norm() < 1e-15);
        let v = fold_inference_kernel(&CscWeights::<f64>::zeros(2), &cfg);
        assert!(v.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn nyquist_coefficient_is_self_conjugate() {
        let c = last_position_coeffs::<f64>(4, 3);
        assert!((c[2] - Complex::new(-1.0, 0.0)).norm() < 1e-15);
        let c = last_position_coeffs::<f64>(5, 3);
        assert!((c[2].norm() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn constant_input_through_parallel_path() {
        let cfg = CscConfig::new(4, 2, 1).unwrap();
        let x = Array2::from_elem((8, 1), 1.0f64);
        let spectra = parallel_spectra(x.view(), &cfg).unwrap();
        for t in 3..8 {
            assert!((spectra[[t, 0, 0]] - Complex::new(4.0, 0.0)).norm() < 1e-12);
            assert!(spectra[[t, 1, 0]].norm() < 1e-12);
        }
        let y = forward_parallel(x.view(), &CscWeights::identity(2), &cfg).unwrap();
        for t in 3..8 {
            assert!((y[[t, 0]] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_sample_spectrum() {
        let cfg = CscConfig::new(8, 5, 2).unwrap();
        let x = array![[0.7f64, -1.3]];
        let spectra = parallel_spectra(x.view(), &cfg).unwrap();
        let mut window = Array2::zeros((8, 2));
        window.row_mut(7).assign(&x.row(0));
        let want = dft_window(window.view(), 5).unwrap();
        let tw = TwiddleTable::<f64>::new(8, 5);
        for k in 0..5 {
            for c in 0..2 {
                assert!((spectra[[0, k, c]] - want.modes[[k, c]]).norm() < 1e-12);
                assert!((spectra[[0, k, c]] - tw.u(k) * x[[0, c]]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_stream_stays_zero() {
        let cfg = CscConfig::new(8, 3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = CscWeights::<f64>::random(3, &mut rng);
        let mut cache = CscStreamCache::new(&cfg);
        for _ in 0..20 {
            let y = forward_step(&[0.0, 0.0], &w, &mut cache, &cfg).unwrap();
            assert!(y.iter().all(|v| *v == 0.0));
        }
        assert!(cache.spectrum.modes.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn constant_stream_identity_weights() {
        let cfg = CscConfig::new(8, 3, 1).unwrap();
        let w = CscWeights::<f64>::identity(3);
        let mut cache = CscStreamCache::new(&cfg);
        let mut last = 0.0;
        for _ in 0..8 {
            last = forward_step(&[2.5], &w, &mut cache, &cfg).unwrap()[0];
        }
        assert!((last - 2.5).abs() < 1e-10);
    }

    #[test]
    fn nan_input_rejected_without_touching_cache() {
        let cfg = CscConfig::new(4, 2, 1).unwrap();
        let w = CscWeights::<f64>::identity(2);
        let mut cache = CscStreamCache::new(&cfg);
        forward_step(&[1.0], &w, &mut cache, &cfg).unwrap();
        let before = cache.spectrum.clone();
        assert!(matches!(
            forward_step(&[f64::NAN], &w, &mut cache, &cfg),
            Err(Error::NonFinite(_))
        ));
        assert_eq!(cache.spectrum, before);
        assert_eq!(cache.steps(), 1);
    }

    #[test]
    fn zero_weights_and_zero_adjoint() {
        let cfg = CscConfig::new(8, 3, 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_simple_fn((12, 2), || rng.random_range(-1.0..1.0));
        let dy = Array2::from_shape_simple_fn((12, 2), || rng.random_range(-1.0..1.0));
        let g = backward(x.view(), &CscWeights::<f64>::zeros(3), &cfg, dy.view()).unwrap();
        assert!(g.dx.iter().all(|v| v.abs() < 1e-15));
        let w = CscWeights::<f64>::random(3, &mut rng);
        let g = backward(x.view(), &w, &cfg, Array2::zeros((12, 2)).view()).unwrap();
        assert!(g.dx.iter().chain(g.dw_re.iter()).chain(g.dw_im.iter()).all(|v| *v == 0.0));
    }

    #[test]
    fn shape_errors() {
        let cfg = CscConfig::new(8, 3, 2).unwrap();
        let x = Array2::<f64>::zeros((5, 3));
        assert!(forward_parallel(x.view(), &CscWeights::identity(3), &cfg).is_err());
        let x = Array2::<f64>::zeros((5, 2));
        assert!(forward_direct(x.view(), &CscWeights::identity(2), &cfg).is_err());
        let dy = Array2::<f64>::zeros((4, 2));
        assert!(backward(x.view(), &CscWeights::identity(3), &cfg, dy.view()).is_err());
    }
}
