//! A deliberately small convolutional noise predictor with hand-written
//! forward and backward passes, so the whole training path stays inside this
//! crate and stays deterministic.
//!
//! Architecture, for `C`-channel images (latent and condition concatenated to
//! `2C` input planes):
//!
//! ```text
//! conv 3x3 (2C -> 32, zero pad) -> SiLU
//! conv 3x3 (32 -> 32, zero pad) + time embedding (32-dim sinusoid,
//!     linear 32 -> 32, added per channel)            -> SiLU
//! conv 3x3 (32 -> C, zero pad, zero-initialised)
//! ```
//!
//! The final layer starts at zero so an untrained model predicts zero noise
//! and the expected initial training loss is the variance of the targets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, ImageGrid, Result, ValueDomain};

pub const HIDDEN_CHANNELS: usize = 32;
pub const TIME_EMBED_DIM: usize = 32;
pub const KERNEL_SIZE: usize = 3;

const K: usize = KERNEL_SIZE * KERNEL_SIZE;

/// Byte offsets of each parameter block inside the flat vector, in storage
/// order. Weight files serialise the flat vector as-is, so this layout is
/// part of the on-disk format.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    conv1_w: usize,
    conv1_b: usize,
    conv2_w: usize,
    conv2_b: usize,
    temb_w: usize,
    temb_b: usize,
    conv3_w: usize,
    conv3_b: usize,
    total: usize,
}

impl Layout {
    fn for_channels(channels: usize) -> Layout {
        let in_c = 2 * channels;
        let h = HIDDEN_CHANNELS;
        let e = TIME_EMBED_DIM;
        let conv1_w = 0;
        let conv1_b = conv1_w + h * in_c * K;
        let conv2_w = conv1_b + h;
        let conv2_b = conv2_w + h * h * K;
        let temb_w = conv2_b + h;
        let temb_b = temb_w + h * e;
        let conv3_w = temb_b + h;
        let conv3_b = conv3_w + channels * h * K;
        let total = conv3_b + channels;
        Layout {
            conv1_w,
            conv1_b,
            conv2_w,
            conv2_b,
            temb_w,
            temb_b,
            conv3_w,
            conv3_b,
            total,
        }
    }
}

/// Trainable convolutional noise predictor. Parameters live in one flat
/// `f64` vector but every value is exactly representable as `f32`, which is
/// what the weight file stores; initialisation and loading both quantise.
#[derive(Debug, Clone)]
pub struct TinyCnn {
    channels: usize,
    receptive: usize,
    seed: u64,
    layout: Layout,
    params: Vec<f64>,
}

/// Intermediate activations of one forward pass, kept for the backward pass.
/// All planes are stored channel-major (`[channel][row][col]`).
#[derive(Debug, Clone)]
pub struct ForwardCache {
    height: usize,
    width: usize,
    emb: [f64; TIME_EMBED_DIM],
    x_in: Vec<f64>,
    c1: Vec<f64>,
    h1: Vec<f64>,
    c2: Vec<f64>,
    h2: Vec<f64>,
}

impl TinyCnn {
    /// Fresh model for `channels`-channel images. Hidden convolutions get
    /// scaled normal draws (He-style, quantised to `f32`), the output
    /// convolution and all biases start at zero.
    pub fn new(channels: usize, seed: u64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidConfig("channels must be >= 1".into()));
        }
        let layout = Layout::for_channels(channels);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |range: std::ops::Range<usize>, std: f64, params: &mut Vec<f64>| {
            for i in range {
                let draw: f64 = StandardNormal.sample(&mut rng);
                params[i] = (draw * std) as f32 as f64;
            }
        };
        let in_c = 2 * channels;
        fill(
            layout.conv1_w..layout.conv1_b,
            (2.0 / (in_c * K) as f64).sqrt(),
            &mut params,
        );
        fill(
            layout.conv2_w..layout.conv2_b,
            (2.0 / (HIDDEN_CHANNELS * K) as f64).sqrt(),
            &mut params,
        );
        fill(
            layout.temb_w..layout.temb_b,
            (TIME_EMBED_DIM as f64).sqrt().recip(),
            &mut params,
        );
        Ok(TinyCnn {
            channels,
            receptive: 64,
            seed,
            layout,
            params,
        })
    }

    /// Reconstructs a model from stored parameters (e.g. a weight file).
    pub fn from_params(
        channels: usize,
        receptive: usize,
        seed: u64,
        params: Vec<f64>,
    ) -> Result<Self> {
        if channels == 0 || receptive == 0 {
            return Err(Error::InvalidConfig(
                "channels and receptive window must be >= 1".into(),
            ));
        }
        let layout = Layout::for_channels(channels);
        if params.len() != layout.total {
            return Err(Error::ParameterCount {
                expected: layout.total,
                got: params.len(),
            });
        }
        for (index, &value) in params.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    value,
                    index,
                    context: "TinyCnn::from_params",
                });
            }
        }
        // Parameters always live on the f32 grid so weight files round-trip
        // bit for bit; snap incoming values the same way init and training
        // updates do.
        let params = params.into_iter().map(|v| v as f32 as f64).collect();
        Ok(TinyCnn {
            channels,
            receptive,
            seed,
            layout,
            params,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Window side length the model is trained on. Metadata only: the
    /// convolutions are size-agnostic.
    pub fn receptive(&self) -> usize {
        self.receptive
    }

    pub fn set_receptive(&mut self, m: usize) {
        self.receptive = m.max(1);
    }

    /// Seed the parameters were initialised from (survives save/load).
    pub fn init_seed(&self) -> u64 {
        self.seed
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Identifies the parameter layout; weight files refuse to load into a
    /// model with a different id.
    pub fn architecture_id(&self) -> String {
        format!(
            "tiny-cnn-v1/in{}-h{}-e{}-k{}",
            self.channels, HIDDEN_CHANNELS, TIME_EMBED_DIM, KERNEL_SIZE
        )
    }

    /// Sinusoidal embedding of the normalised timestep `t / t_max`:
    /// 16 sine / 16 cosine features at geometrically spaced frequencies
    /// between 1 and 1000 radians per unit.
    pub fn time_embedding(t: usize, t_max: usize) -> [f64; TIME_EMBED_DIM] {
        let tau = t as f64 / t_max as f64;
        let half = TIME_EMBED_DIM / 2;
        let mut emb = [0.0; TIME_EMBED_DIM];
        for i in 0..half {
            let freq = (1000f64.ln() * i as f64 / (half - 1) as f64).exp();
            emb[i] = (tau * freq).sin();
            emb[half + i] = (tau * freq).cos();
        }
        emb
    }

    /// Noise prediction without keeping activations.
    pub fn predict(
        &self,
        x_t: &ImageGrid,
        condition: &ImageGrid,
        t: usize,
        t_max: usize,
    ) -> Result<ImageGrid> {
        let (out, _) = self.forward_cached(x_t, condition, t, t_max)?;
        Ok(out)
    }

    /// Forward pass that also returns the activations needed by
    /// [`backward`](Self::backward).
    pub fn forward_cached(
        &self,
        x_t: &ImageGrid,
        condition: &ImageGrid,
        t: usize,
        t_max: usize,
    ) -> Result<(ImageGrid, ForwardCache)> {
        if t == 0 || t > t_max {
            return Err(Error::TimestepOutOfRange { t, t_max });
        }
        x_t.expect_same_shape(condition, "TinyCnn::forward")?;
        let (h, w, c) = x_t.shape();
        if c != self.channels {
            return Err(Error::ShapeMismatch {
                expected: (h, w, self.channels),
                got: (h, w, c),
                context: "TinyCnn::forward channels",
            });
        }

        let hw = h * w;
        let in_c = 2 * c;
        let hidden = HIDDEN_CHANNELS;
        let l = &self.layout;

        let mut x_in = vec![0.0; in_c * hw];
        planar_from_interleaved(x_t, &mut x_in[..c * hw]);
        planar_from_interleaved(condition, &mut x_in[c * hw..]);

        let mut c1 = vec![0.0; hidden * hw];
        conv3x3_forward(
            &x_in,
            in_c,
            h,
            w,
            &self.params[l.conv1_w..l.conv1_b],
            &self.params[l.conv1_b..l.conv2_w],
            &mut c1,
            hidden,
        );
        let h1: Vec<f64> = c1.iter().map(|&v| silu(v)).collect();

        let mut c2 = vec![0.0; hidden * hw];
        conv3x3_forward(
            &h1,
            hidden,
            h,
            w,
            &self.params[l.conv2_w..l.conv2_b],
            &self.params[l.conv2_b..l.temb_w],
            &mut c2,
            hidden,
        );
        let emb = Self::time_embedding(t, t_max);
        let temb_w = &self.params[l.temb_w..l.temb_b];
        let temb_b = &self.params[l.temb_b..l.conv3_w];
        for o in 0..hidden {
            let mut proj = temb_b[o];
            let row = &temb_w[o * TIME_EMBED_DIM..(o + 1) * TIME_EMBED_DIM];
            for (wv, ev) in row.iter().zip(&emb) {
                proj += wv * ev;
            }
            for v in &mut c2[o * hw..(o + 1) * hw] {
                *v += proj;
            }
        }
        let h2: Vec<f64> = c2.iter().map(|&v| silu(v)).collect();

        let mut out = vec![0.0; c * hw];
        conv3x3_forward(
            &h2,
            hidden,
            h,
            w,
            &self.params[l.conv3_w..l.conv3_b],
            &self.params[l.conv3_b..l.total],
            &mut out,
            c,
        );

        let grid = interleaved_from_planar(&out, h, w, c)?;
        let cache = ForwardCache {
            height: h,
            width: w,
            emb,
            x_in,
            c1,
            h1,
            c2,
            h2,
        };
        Ok((grid, cache))
    }

    /// Backpropagates `grad_out` (same shape as the prediction) through the
    /// cached forward pass. Returns the gradient with respect to every
    /// parameter, flat in storage order, plus the gradient with respect to
    /// the `2C`-channel input (latent channels first, condition channels
    /// after), which exposes the receptive-field structure.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &ImageGrid) -> Result<(Vec<f64>, ImageGrid)> {
        let (h, w) = (cache.height, cache.width);
        let c = self.channels;
        if grad_out.shape() != (h, w, c) {
            return Err(Error::ShapeMismatch {
                expected: (h, w, c),
                got: grad_out.shape(),
                context: "TinyCnn::backward",
            });
        }
        let hw = h * w;
        let in_c = 2 * c;
        let hidden = HIDDEN_CHANNELS;
        let l = &self.layout;
        let mut grads = vec![0.0; l.total];

        let mut g_out = vec![0.0; c * hw];
        planar_from_interleaved(grad_out, &mut g_out);

        // conv3
        let mut g_h2 = vec![0.0; hidden * hw];
        conv3x3_backward(
            &g_out,
            c,
            &cache.h2,
            hidden,
            h,
            w,
            &self.params[l.conv3_w..l.conv3_b],
            &mut grads[l.conv3_w..l.conv3_b],
            None,
            Some(&mut g_h2),
        );
        for (o, gb) in grads[l.conv3_b..l.total].iter_mut().enumerate() {
            *gb = g_out[o * hw..(o + 1) * hw].iter().sum();
        }

        // SiLU before conv3 (c2 holds pre-activations including the
        // time-embedding shift).
        let mut g_c2 = g_h2;
        for (g, &pre) in g_c2.iter_mut().zip(&cache.c2) {
            *g *= silu_grad(pre);
        }

        // Time embedding: the projection is added uniformly over each plane,
        // so its gradient is the plane sum.
        for o in 0..hidden {
            let g_proj: f64 = g_c2[o * hw..(o + 1) * hw].iter().sum();
            grads[l.temb_b + o] = g_proj;
            let row = &mut grads[l.temb_w + o * TIME_EMBED_DIM..l.temb_w + (o + 1) * TIME_EMBED_DIM];
            for (gw, &e) in row.iter_mut().zip(&cache.emb) {
                *gw = g_proj * e;
            }
        }

        // conv2
        let mut g_h1 = vec![0.0; hidden * hw];
        conv3x3_backward(
            &g_c2,
            hidden,
            &cache.h1,
            hidden,
            h,
            w,
            &self.params[l.conv2_w..l.conv2_b],
            &mut grads[l.conv2_w..l.conv2_b],
            None,
            Some(&mut g_h1),
        );
        for (o, gb) in grads[l.conv2_b..l.temb_w].iter_mut().enumerate() {
            *gb = g_c2[o * hw..(o + 1) * hw].iter().sum();
        }

        // SiLU before conv2.
        let mut g_c1 = g_h1;
        for (g, &pre) in g_c1.iter_mut().zip(&cache.c1) {
            *g *= silu_grad(pre);
        }

        // conv1
        let mut g_x = vec![0.0; in_c * hw];
        conv3x3_backward(
            &g_c1,
            hidden,
            &cache.x_in,
            in_c,
            h,
            w,
            &self.params[l.conv1_w..l.conv1_b],
            &mut grads[l.conv1_w..l.conv1_b],
            None,
            Some(&mut g_x),
        );
        for (o, gb) in grads[l.conv1_b..l.conv2_w].iter_mut().enumerate() {
            *gb = g_c1[o * hw..(o + 1) * hw].iter().sum();
        }

        let g_input = interleaved_from_planar_unchecked(&g_x, h, w, in_c);
        Ok((grads, g_input))
    }
}

#[inline]
fn silu(x: f64) -> f64 {
    x / (1.0 + (-x).exp())
}

#[inline]
fn silu_grad(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 + x * (1.0 - s))
}

fn planar_from_interleaved(g: &ImageGrid, out: &mut [f64]) {
    let (h, w, c) = g.shape();
    let hw = h * w;
    debug_assert_eq!(out.len(), hw * c);
    let v = g.values();
    for ch in 0..c {
        let plane = &mut out[ch * hw..(ch + 1) * hw];
        for (p, slot) in plane.iter_mut().enumerate() {
            *slot = v[p * c + ch];
        }
    }
}

fn interleaved_from_planar(buf: &[f64], h: usize, w: usize, c: usize) -> Result<ImageGrid> {
    let mut g = ImageGrid::zeros(h, w, c, ValueDomain::Unconstrained)?;
    fill_interleaved(buf, h, w, c, g.values_mut());
    g.check_finite("TinyCnn output")?;
    Ok(g)
}

fn interleaved_from_planar_unchecked(buf: &[f64], h: usize, w: usize, c: usize) -> ImageGrid {
    let mut g = ImageGrid::zeros(h, w, c, ValueDomain::Unconstrained).expect("non-empty dims");
    fill_interleaved(buf, h, w, c, g.values_mut());
    g
}

fn fill_interleaved(buf: &[f64], h: usize, w: usize, c: usize, out: &mut [f64]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &buf[ch * hw..(ch + 1) * hw];
        for (p, &v) in plane.iter().enumerate() {
            out[p * c + ch] = v;
        }
    }
}

/// Direct 3x3 convolution with zero padding, channel-major planes.
/// `weights` is `[out][in][ky][kx]` flattened; `out` is overwritten.
fn conv3x3_forward(
    input: &[f64],
    in_c: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    bias: &[f64],
    out: &mut [f64],
    out_c: usize,
) {
    let hw = h * w;
    debug_assert_eq!(weights.len(), out_c * in_c * K);
    debug_assert_eq!(bias.len(), out_c);
    debug_assert_eq!(out.len(), out_c * hw);
    for o in 0..out_c {
        out[o * hw..(o + 1) * hw].fill(bias[o]);
        for i in 0..in_c {
            let in_plane = &input[i * hw..(i + 1) * hw];
            for ky in 0..3usize {
                let wk = &weights[((o * in_c + i) * 3 + ky) * 3..][..3];
                // Output row y reads input row y + ky - 1.
                let (y0, y1) = match ky {
                    0 => (1, h),
                    1 => (0, h),
                    _ => (0, h.saturating_sub(1)),
                };
                for y in y0..y1 {
                    let yy = y + ky - 1;
                    let in_row = &in_plane[yy * w..(yy + 1) * w];
                    let out_row = &mut out[o * hw + y * w..o * hw + (y + 1) * w];
                    accumulate_row(out_row, in_row, wk, w);
                }
            }
        }
    }
}

/// `out_row[x] += wk[kx] * in_row[x + kx - 1]` for the in-bounds positions.
#[inline]
fn accumulate_row(out_row: &mut [f64], in_row: &[f64], wk: &[f64], w: usize) {
    let (w0, w1, w2) = (wk[0], wk[1], wk[2]);
    for (o, &i) in out_row[1..].iter_mut().zip(&in_row[..w - 1]) {
        *o += w0 * i;
    }
    for (o, &i) in out_row.iter_mut().zip(in_row) {
        *o += w1 * i;
    }
    for (o, &i) in out_row[..w - 1].iter_mut().zip(&in_row[1..]) {
        *o += w2 * i;
    }
}

/// Gradients of a 3x3 convolution. Accumulates weight gradients into
/// `g_weights` (and optionally `g_bias`), and input gradients into `g_input`
/// when provided. `g_out` is the gradient at the layer output; `input` is the
/// activation the forward pass consumed.
#[allow(clippy::too_many_arguments)]
fn conv3x3_backward(
    g_out: &[f64],
    out_c: usize,
    input: &[f64],
    in_c: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    g_weights: &mut [f64],
    g_bias: Option<&mut [f64]>,
    g_input: Option<&mut Vec<f64>>,
) {
    let hw = h * w;
    debug_assert_eq!(g_weights.len(), out_c * in_c * K);
    if let Some(gb) = g_bias {
        for o in 0..out_c {
            gb[o] = g_out[o * hw..(o + 1) * hw].iter().sum();
        }
    }
    let g_input = g_input.map(|v| v.as_mut_slice());
    let mut g_in_ptr = g_input;
    for o in 0..out_c {
        let g_plane = &g_out[o * hw..(o + 1) * hw];
        for i in 0..in_c {
            let in_plane = &input[i * hw..(i + 1) * hw];
            for ky in 0..3usize {
                let (y0, y1) = match ky {
                    0 => (1, h),
                    1 => (0, h),
                    _ => (0, h.saturating_sub(1)),
                };
                let mut acc = [0.0f64; 3];
                for y in y0..y1 {
                    let yy = y + ky - 1;
                    let in_row = &in_plane[yy * w..(yy + 1) * w];
                    let g_row = &g_plane[y * w..(y + 1) * w];
                    // Weight gradient: correlate the output gradient with the
                    // input at each of the three horizontal offsets.
                    let mut a0 = 0.0;
                    for (g, &iv) in g_row[1..].iter().zip(&in_row[..w - 1]) {
                        a0 += g * iv;
                    }
                    let mut a1 = 0.0;
                    for (g, &iv) in g_row.iter().zip(in_row) {
                        a1 += g * iv;
                    }
                    let mut a2 = 0.0;
                    for (g, &iv) in g_row[..w - 1].iter().zip(&in_row[1..]) {
                        a2 += g * iv;
                    }
                    acc[0] += a0;
                    acc[1] += a1;
                    acc[2] += a2;
                }
                let widx = ((o * in_c + i) * 3 + ky) * 3;
                g_weights[widx] += acc[0];
                g_weights[widx + 1] += acc[1];
                g_weights[widx + 2] += acc[2];

                // Input gradient: scatter g_out back through the kernel.
                if let Some(gi) = g_in_ptr.as_deref_mut() {
                    let wk = &weights[widx..widx + 3];
                    let gi_plane = &mut gi[i * hw..(i + 1) * hw];
                    for y in y0..y1 {
                        let yy = y + ky - 1;
                        let g_row = &g_plane[y * w..(y + 1) * w];
                        let gi_row = &mut gi_plane[yy * w..(yy + 1) * w];
                        // gi_row[x + kx - 1] += wk[kx] * g_row[x]
                        let (w0, w1, w2) = (wk[0], wk[1], wk[2]);
                        for (gi_v, &g) in gi_row[..w - 1].iter_mut().zip(&g_row[1..]) {
                            *gi_v += w0 * g;
                        }
                        for (gi_v, &g) in gi_row.iter_mut().zip(g_row) {
                            *gi_v += w1 * g;
                        }
                        for (gi_v, &g) in gi_row[1..].iter_mut().zip(&g_row[..w - 1]) {
                            *gi_v += w2 * g;
                        }
                    }
                }
            }
        }
    }
}
