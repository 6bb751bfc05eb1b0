//! The encoder-decoder itself: configuration, parameter layout, forward pass
//! with a tape, and the reverse pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    col2im, gemm, im2col, maxpool2, maxpool2_backward, upsample2, upsample2_backward, Padding, Real,
};
use crate::error::{Error, Result};
use crate::swath::{N_QUANTILES, N_TB_CHANNELS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    /// slope 0.01 below zero
    LeakyRelu,
}

const LEAK: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// number of 2x downsampling stages
    pub depth: usize,
    /// channels of the first stage; doubled at every stage
    pub width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub activation: Activation,
    /// parameter-init seed
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            depth: 4,
            width: 8,
            in_channels: N_TB_CHANNELS,
            out_channels: N_QUANTILES,
            activation: Activation::Relu,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.depth > 10 {
            return Err(Error::invalid("model depth", format!("{} not in 1..=10", self.depth)));
        }
        if self.width == 0 || self.in_channels == 0 {
            return Err(Error::invalid("model config", "width and in_channels must be >= 1"));
        }
        if self.out_channels != N_QUANTILES {
            return Err(Error::invalid(
                "model out_channels",
                format!("{} but there are {N_QUANTILES} quantile levels", self.out_channels),
            ));
        }
        Ok(())
    }

    /// Tile dims must be multiples of this.
    pub fn tile_factor(&self) -> usize {
        1 << self.depth
    }
}

/// One convolution in the parameter blob: weights `[cout][cin][k][k]` at
/// `w_off`, then `cout` biases at `b_off`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub w_off: usize,
    pub b_off: usize,
    /// followed by the activation (all but the head)
    pub activated: bool,
}

impl ConvSpec {
    fn n_params(&self) -> usize {
        self.cout * self.cin * self.k * self.k + self.cout
    }
}

/// Layer list in forward order: `enc{s}.conv{1,2}`, `mid.conv{1,2}`, then for
/// s = depth-1 down to 0 `dec{s}.up`, `dec{s}.conv{1,2}`, and `head`.
fn layout(cfg: &ModelConfig) -> Vec<ConvSpec> {
    let mut convs = Vec::new();
    let mut off = 0;
    let mut push = |name: String, cin: usize, cout: usize, k: usize, activated: bool| {
        let c = ConvSpec { name, cin, cout, k, w_off: off, b_off: off + cout * cin * k * k, activated };
        off += c.n_params();
        convs.push(c);
    };
    let w = cfg.width;
    let mut cin = cfg.in_channels;
    for s in 0..cfg.depth {
        let c = w << s;
        push(format!("enc{s}.conv1"), cin, c, 3, true);
        push(format!("enc{s}.conv2"), c, c, 3, true);
        cin = c;
    }
    let c = w << cfg.depth;
    push("mid.conv1".into(), cin, c, 3, true);
    push("mid.conv2".into(), c, c, 3, true);
    for s in (0..cfg.depth).rev() {
        let c = w << s;
        push(format!("dec{s}.up"), 2 * c, c, 3, true);
        push(format!("dec{s}.conv1"), 2 * c, c, 3, true);
        push(format!("dec{s}.conv2"), c, c, 3, true);
    }
    push("head".into(), w, cfg.out_channels, 1, false);
    convs
}

struct ConvRecord<T> {
    /// im2col matrix (or the input itself for 1x1)
    cols: Vec<T>,
    /// post-activation output
    out: Vec<T>,
    h: usize,
    w: usize,
}

/// Intermediate values of one forward pass, consumed by [`QuantileUNet::backward`].
pub struct Tape<T> {
    convs: Vec<ConvRecord<T>>,
    pools: Vec<(Vec<u32>, usize)>,
}

impl<T: Real> Tape<T> {
    /// Network output, `out_channels x h x w`.
    pub fn output(&self) -> &[T] {
        &self.convs.last().expect("non-empty tape").out
    }

    /// Sign pattern of every activated unit; identical patterns at two
    /// parameter vectors mean the network is on the same linear piece.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let n = self.convs.len();
        self.convs[..n - 1]
            .iter()
            .flat_map(|r| r.out.iter().map(|v| *v > T::zero()))
            .collect()
    }
}

/// Quantile U-net with parameters of type `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileUNet<T: Real = f32> {
    cfg: ModelConfig,
    convs: Vec<ConvSpec>,
    params: Vec<T>,
    padding: Padding,
}

impl<T: Real> QuantileUNet<T> {
    /// Glorot-uniform weights drawn in layer order from `cfg.seed`, zero biases.
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let convs = layout(&cfg);
        let n = convs.last().map_or(0, |c| c.b_off + c.cout);
        let mut params = vec![T::zero(); n];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for c in &convs {
            let kk = c.k * c.k;
            let limit = (6.0 / ((c.cin * kk + c.cout * kk) as f64)).sqrt();
            for p in &mut params[c.w_off..c.b_off] {
                *p = T::lit(rng.random_range(-limit..limit));
            }
        }
        Ok(QuantileUNet { cfg, convs, params, padding: Padding::Zero })
    }

    /// Rebuild from a stored parameter vector.
    pub fn from_params(cfg: ModelConfig, params: Vec<T>) -> Result<Self> {
        cfg.validate()?;
        let convs = layout(&cfg);
        let n = convs.last().map_or(0, |c| c.b_off + c.cout);
        if params.len() != n {
            return Err(Error::DimensionMismatch(format!("{} parameters, architecture has {n}", params.len())));
        }
        Ok(QuantileUNet { cfg, convs, params, padding: Padding::Zero })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn layers(&self) -> &[ConvSpec] {
        &self.convs
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn cast<U: Real>(&self) -> QuantileUNet<U> {
        QuantileUNet {
            cfg: self.cfg.clone(),
            convs: self.convs.clone(),
            params: self.params.iter().map(|p| U::lit(p.as_f64())).collect(),
            padding: self.padding,
        }
    }

    #[cfg(test)]
    pub(crate) fn set_padding(&mut self, padding: Padding) {
        self.padding = padding;
    }

    fn check_input(&self, input: &[T], h: usize, w: usize) -> Result<()> {
        let f = self.cfg.tile_factor();
        if h % f != 0 || w % f != 0 || h == 0 || w == 0 {
            return Err(Error::TileNotDivisible { rows: h, cols: w, factor: f });
        }
        if input.len() != self.cfg.in_channels * h * w {
            return Err(Error::DimensionMismatch(format!(
                "input has {} values, expected {} x {h} x {w}",
                input.len(),
                self.cfg.in_channels
            )));
        }
        Ok(())
    }

    fn conv_forward(&self, li: usize, x: &[T], h: usize, w: usize, tape: &mut Tape<T>) {
        let s = &self.convs[li];
        let hw = h * w;
        let cols = if s.k == 3 {
            let mut c = vec![T::zero(); s.cin * 9 * hw];
            im2col(x, s.cin, h, w, self.padding, &mut c);
            c
        } else {
            x.to_vec()
        };
        let mut out = vec![T::zero(); s.cout * hw];
        gemm(false, false, s.cout, s.cin * s.k * s.k, hw, &self.params[s.w_off..s.b_off], &cols, T::zero(), &mut out);
        let leak = T::lit(LEAK);
        for (co, plane) in out.chunks_mut(hw).enumerate() {
            let b = self.params[s.b_off + co];
            for v in plane.iter_mut() {
                *v += b;
                if s.activated && *v <= T::zero() {
                    *v = match self.cfg.activation {
                        Activation::Relu => T::zero(),
                        Activation::LeakyRelu => *v * leak,
                    };
                }
            }
        }
        tape.convs.push(ConvRecord { cols, out, h, w });
    }

    /// Forward pass keeping every intermediate needed by [`Self::backward`].
    /// `input` is `in_channels x h x w`.
    pub fn forward_train(&self, input: &[T], h: usize, w: usize) -> Result<Tape<T>> {
        self.check_input(input, h, w)?;
        let d = self.cfg.depth;
        let mut tape = Tape { convs: Vec::with_capacity(self.convs.len()), pools: Vec::with_capacity(d) };
        let (mut h, mut w) = (h, w);
        let mut cur = input.to_vec();
        let mut li = 0;
        let mut skips = Vec::with_capacity(d);
        for _ in 0..d {
            self.conv_forward(li, &cur, h, w, &mut tape);
            let x = std::mem::take(&mut tape.convs[li].out);
            self.conv_forward(li + 1, &x, h, w, &mut tape);
            tape.convs[li].out = x;
            li += 2;
            skips.push(li - 1);
            let c = self.convs[li - 1].cout;
            let (p, arg) = maxpool2(&tape.convs[li - 1].out, c, h, w);
            tape.pools.push((arg, c * h * w));
            cur = p;
            h /= 2;
            w /= 2;
        }
        for _ in 0..2 {
            self.conv_forward(li, &cur, h, w, &mut tape);
            cur = tape.convs[li].out.clone();
            li += 1;
        }
        for _ in 0..d {
            let c_low = self.convs[li - 1].cout;
            let up = upsample2(&cur, c_low, h, w);
            h *= 2;
            w *= 2;
            self.conv_forward(li, &up, h, w, &mut tape);
            let skip = skips.pop().expect("one skip per stage");
            let mut cat = tape.convs[li].out.clone();
            cat.extend_from_slice(&tape.convs[skip].out);
            self.conv_forward(li + 1, &cat, h, w, &mut tape);
            let x = std::mem::take(&mut tape.convs[li + 1].out);
            self.conv_forward(li + 2, &x, h, w, &mut tape);
            tape.convs[li + 1].out = x;
            cur = tape.convs[li + 2].out.clone();
            li += 3;
        }
        self.conv_forward(li, &cur, h, w, &mut tape);
        Ok(tape)
    }

    /// Raw network output, `out_channels x h x w` (quantile-plane-major).
    pub fn forward(&self, input: &[T], h: usize, w: usize) -> Result<Vec<T>> {
        let mut tape = self.forward_train(input, h, w)?;
        Ok(tape.convs.pop().expect("head record").out)
    }

    fn conv_backward(&self, li: usize, mut dy: Vec<T>, tape: &Tape<T>, grads: &mut [T], need_dx: bool) -> Vec<T> {
        let s = &self.convs[li];
        let r = &tape.convs[li];
        let hw = r.h * r.w;
        if s.activated {
            let leak = T::lit(LEAK);
            for (g, o) in dy.iter_mut().zip(&r.out) {
                if *o <= T::zero() {
                    *g = match self.cfg.activation {
                        Activation::Relu => T::zero(),
                        Activation::LeakyRelu => *g * leak,
                    };
                }
            }
        }
        for (co, plane) in dy.chunks(hw).enumerate() {
            let mut acc = T::zero();
            for g in plane {
                acc += *g;
            }
            grads[s.b_off + co] += acc;
        }
        let kdim = s.cin * s.k * s.k;
        gemm(false, true, s.cout, hw, kdim, &dy, &r.cols, T::one(), &mut grads[s.w_off..s.b_off]);
        if !need_dx {
            return Vec::new();
        }
        let mut dcols = vec![T::zero(); kdim * hw];
        gemm(true, false, kdim, s.cout, hw, &self.params[s.w_off..s.b_off], &dy, T::zero(), &mut dcols);
        if s.k == 1 {
            return dcols;
        }
        let mut dx = vec![T::zero(); s.cin * hw];
        col2im(&dcols, s.cin, r.h, r.w, self.padding, &mut dx);
        dx
    }

    /// Accumulate d(loss)/d(params) into `grads`, given d(loss)/d(output).
    pub fn backward(&self, tape: &Tape<T>, d_output: Vec<T>, grads: &mut [T]) -> Result<()> {
        if grads.len() != self.params.len() || d_output.len() != tape.output().len() {
            return Err(Error::DimensionMismatch("gradient buffers do not match the model".into()));
        }
        let d = self.cfg.depth;
        let mut li = self.convs.len() - 1;
        let mut dy = self.conv_backward(li, d_output, tape, grads, true);
        let mut d_skips: Vec<Vec<T>> = Vec::with_capacity(d);
        for _ in 0..d {
            // decoder stages were run deepest first, so walk them shallowest first
            li -= 3;
            dy = self.conv_backward(li + 2, dy, tape, grads, true);
            let dcat = self.conv_backward(li + 1, dy, tape, grads, true);
            let c = self.convs[li].cout;
            let hw = tape.convs[li].h * tape.convs[li].w;
            let (dup, dskip) = dcat.split_at(c * hw);
            d_skips.push(dskip.to_vec());
            let dx = self.conv_backward(li, dup.to_vec(), tape, grads, true);
            let r = &tape.convs[li];
            dy = upsample2_backward(&dx, self.convs[li].cin, r.h / 2, r.w / 2);
        }
        for _ in 0..2 {
            li -= 1;
            dy = self.conv_backward(li, dy, tape, grads, true);
        }
        for s in (0..d).rev() {
            let (arg, len) = &tape.pools[s];
            let mut dx = maxpool2_backward(&dy, arg, *len);
            // d_skips were pushed shallowest first
            for (a, b) in dx.iter_mut().zip(&d_skips[s]) {
                *a += *b;
            }
            li -= 2;
            let mid = self.conv_backward(li + 1, dx, tape, grads, true);
            dy = self.conv_backward(li, mid, tape, grads, li > 0);
        }
        Ok(())
    }
}
