use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelState;
use crate::clinalg::{random_complex_gaussian, ComplexMatrix};
use crate::error::{invalid, Error, Result};

/// A fully connected layer realized as `K` rounds of precode → transmit → combine.
///
/// Round `k` sends `x_t = P·W̃_k·x` and combines with `Cᴴ`, producing `r`
/// outputs; the rounds are concatenated and the tail beyond `n_o` dropped.
/// The bias is added at the receiver.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OacLinearLayer {
    pub n_i: usize,
    pub n_o: usize,
    pub r: usize,
    pub p: ComplexMatrix,
    pub w_tilde: Vec<ComplexMatrix>,
    pub c: ComplexMatrix,
    pub bias: ComplexMatrix,
}

/// Intermediate signals of one forward pass. Every matrix holds one column per sample.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub x: ComplexMatrix,
    pub x_t: Vec<ComplexMatrix>,
    pub y_r: Vec<ComplexMatrix>,
    pub y: ComplexMatrix,
}

/// Gradients of one backward pass, shaped like the corresponding parameters.
#[derive(Debug, Clone)]
pub struct BackwardTrace {
    pub g_x: ComplexMatrix,
    pub g_p: ComplexMatrix,
    pub g_w_tilde: Vec<ComplexMatrix>,
    pub g_c: ComplexMatrix,
    pub g_b: ComplexMatrix,
    pub g_xt: Vec<ComplexMatrix>,
}

impl BackwardTrace {
    /// Largest componentwise difference over every gradient group.
    pub fn max_abs_diff(&self, other: &BackwardTrace) -> f64 {
        let mut worst = self
            .g_x
            .max_abs_diff(&other.g_x)
            .max(self.g_p.max_abs_diff(&other.g_p))
            .max(self.g_c.max_abs_diff(&other.g_c))
            .max(self.g_b.max_abs_diff(&other.g_b));
        for (a, b) in self.g_w_tilde.iter().zip(&other.g_w_tilde) {
            worst = worst.max(a.max_abs_diff(b));
        }
        for (a, b) in self.g_xt.iter().zip(&other.g_xt) {
            worst = worst.max(a.max_abs_diff(b));
        }
        worst
    }
}

impl OacLinearLayer {
    /// Complex Glorot-style init: every entry has variance `1/fan_in`, where
    /// `fan_in` is the length of the vector the matrix acts on (`r` for `P`,
    /// `n_i` for `W̃_k`, `n_r` for `Cᴴ`). Bias starts at zero.
    pub fn init<R: Rng + ?Sized>(
        n_i: usize,
        n_o: usize,
        n_t: usize,
        n_r: usize,
        r: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if n_i == 0 || n_o == 0 || n_t == 0 || n_r == 0 || r == 0 {
            return Err(invalid("OAC layer dimensions must all be >= 1"));
        }
        if r > n_t.min(n_r) {
            return Err(invalid(format!(
                "r = {r} streams cannot be carried by a {n_r}x{n_t} link"
            )));
        }
        let k = n_o.div_ceil(r);
        let p = random_complex_gaussian(n_t, r, 1.0 / r as f64, rng)?;
        let w_tilde = (0..k)
            .map(|_| random_complex_gaussian(r, n_i, 1.0 / n_i as f64, rng))
            .collect::<Result<Vec<_>>>()?;
        let c = random_complex_gaussian(n_r, r, 1.0 / n_r as f64, rng)?;
        Ok(Self {
            n_i,
            n_o,
            r,
            p,
            w_tilde,
            c,
            bias: ComplexMatrix::zeros(n_o, 1),
        })
    }

    pub fn k_rounds(&self) -> usize {
        self.w_tilde.len()
    }

    pub fn n_t(&self) -> usize {
        self.p.rows()
    }

    pub fn n_r(&self) -> usize {
        self.c.rows()
    }

    /// Outputs of the last round that are discarded.
    pub fn surplus(&self) -> usize {
        self.k_rounds() * self.r - self.n_o
    }

    /// The equivalent dense weight `[Cᴴ H P W̃_1; …; Cᴴ H P W̃_K]`, truncated to `n_o` rows.
    pub fn effective_weight(&self, h: &ComplexMatrix) -> Result<ComplexMatrix> {
        let chp = self.c.adjoint_matmul(&h.matmul(&self.p)?)?;
        let blocks = self
            .w_tilde
            .iter()
            .map(|w| chp.matmul(w))
            .collect::<Result<Vec<_>>>()?;
        Ok(ComplexMatrix::vstack(&blocks)?.row_block(0, self.n_o))
    }

    fn check_channel(&self, channel: &ChannelState) -> Result<()> {
        if channel.n_t() != self.n_t() || channel.n_r() != self.n_r() {
            return Err(Error::Shape {
                op: "oac channel",
                left: (self.n_r(), self.n_t()),
                right: channel.h.shape(),
            });
        }
        Ok(())
    }

    pub fn forward<R: Rng + ?Sized>(
        &self,
        channel: &mut ChannelState,
        x: &ComplexMatrix,
        rng: &mut R,
    ) -> Result<(ComplexMatrix, ForwardTrace)> {
        self.check_channel(channel)?;
        if x.rows() != self.n_i {
            return Err(Error::Shape {
                op: "oac forward",
                left: (self.n_o, self.n_i),
                right: x.shape(),
            });
        }
        let batch = x.cols();
        let mut x_t = Vec::with_capacity(self.k_rounds());
        let mut y_r = Vec::with_capacity(self.k_rounds());
        let mut outputs = Vec::with_capacity(self.k_rounds());
        for w in &self.w_tilde {
            let xt = self.p.matmul(&w.matmul(x)?)?;
            let yr = channel.transmit_forward(&xt, rng)?;
            outputs.push(self.c.adjoint_matmul(&yr)?);
            x_t.push(xt);
            y_r.push(yr);
        }
        let mut y = ComplexMatrix::vstack(&outputs)?.row_block(0, self.n_o);
        for i in 0..self.n_o {
            let b = self.bias[(i, 0)];
            for v in y.row_mut(i) {
                *v += b;
            }
        }
        debug_assert_eq!(y.shape(), (self.n_o, batch));
        let trace = ForwardTrace {
            x: x.clone(),
            x_t,
            y_r,
            y: y.clone(),
        };
        Ok((y, trace))
    }

    fn check_trace(&self, trace: &ForwardTrace, g_y: &ComplexMatrix) -> Result<()> {
        if trace.x_t.len() != self.k_rounds()
            || trace.y_r.len() != self.k_rounds()
            || trace.x.rows() != self.n_i
        {
            return Err(invalid("forward trace does not belong to this layer"));
        }
        if g_y.rows() != self.n_o || g_y.cols() != trace.x.cols() {
            return Err(Error::Shape {
                op: "oac backward",
                left: (self.n_o, trace.x.cols()),
                right: g_y.shape(),
            });
        }
        Ok(())
    }

    /// Rows of `g_y` belonging to round `k`, zero-padded past `n_o`.
    fn round_grad(&self, g_y: &ComplexMatrix, k: usize) -> ComplexMatrix {
        let start = k * self.r;
        ComplexMatrix::from_fn(self.r, g_y.cols(), |i, j| {
            if start + i < self.n_o {
                g_y[(start + i, j)]
            } else {
                Default::default()
            }
        })
    }

    /// Reference backpropagation that reads `H` directly:
    /// `g_{x_t,k} = Hᴴ C g_{y_k}`, then the same local gradients as the OTA path.
    pub fn backward_ideal(
        &self,
        channel: &ChannelState,
        trace: &ForwardTrace,
        g_y: &ComplexMatrix,
    ) -> Result<BackwardTrace> {
        self.check_channel(channel)?;
        self.check_trace(trace, g_y)?;
        let g_xt = (0..self.k_rounds())
            .map(|k| {
                let cg = self.c.matmul(&self.round_grad(g_y, k))?;
                channel.h.adjoint_matmul(&cg)
            })
            .collect::<Result<Vec<_>>>()?;
        self.local_grads(trace, g_y, g_xt)
    }

    /// Backpropagation over the reverse link.
    ///
    /// The receiver sends `conj(C·g_{y_k})` through `Hᵀ`; conjugating what the
    /// transmitter hears gives `Hᴴ C g_{y_k}` plus noise. `H` itself is never read.
    pub fn backward_ota<R: Rng + ?Sized>(
        &self,
        channel: &ChannelState,
        trace: &ForwardTrace,
        g_y: &ComplexMatrix,
        rng: &mut R,
    ) -> Result<BackwardTrace> {
        self.check_channel(channel)?;
        self.check_trace(trace, g_y)?;
        let g_xt = (0..self.k_rounds())
            .map(|k| {
                let sent = self.c.matmul(&self.round_grad(g_y, k))?.conj();
                Ok(channel.transmit_backward(&sent, rng)?.conj())
            })
            .collect::<Result<Vec<_>>>()?;
        self.local_grads(trace, g_y, g_xt)
    }

    fn local_grads(
        &self,
        trace: &ForwardTrace,
        g_y: &ComplexMatrix,
        g_xt: Vec<ComplexMatrix>,
    ) -> Result<BackwardTrace> {
        let mut g_x = ComplexMatrix::zeros(self.n_i, trace.x.cols());
        let mut g_p = ComplexMatrix::zeros(self.n_t(), self.r);
        let mut g_c = ComplexMatrix::zeros(self.n_r(), self.r);
        let mut g_w_tilde = Vec::with_capacity(self.k_rounds());
        for (k, w) in self.w_tilde.iter().enumerate() {
            let gyk = self.round_grad(g_y, k);
            // receiver side: y_k = Cᴴ y_r  ⇒  g_C += y_r g_ykᴴ
            g_c.add_assign(&trace.y_r[k].matmul_adjoint(&gyk)?)?;
            // transmitter side
            let wx = w.matmul(&trace.x)?;
            g_p.add_assign(&g_xt[k].matmul_adjoint(&wx)?)?;
            let ph_g = self.p.adjoint_matmul(&g_xt[k])?;
            g_w_tilde.push(ph_g.matmul_adjoint(&trace.x)?);
            g_x.add_assign(&w.adjoint_matmul(&ph_g)?)?;
        }
        Ok(BackwardTrace {
            g_x,
            g_p,
            g_w_tilde,
            g_c,
            g_b: g_y.sum_cols(),
            g_xt,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite()
            && self.c.is_finite()
            && self.bias.is_finite()
            && self.w_tilde.iter().all(ComplexMatrix::is_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{gen_channel, PathParams};
    use crate::clinalg::Complex;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    fn scalar_setup(h: Complex) -> (OacLinearLayer, ChannelState) {
        let one = ComplexMatrix::column(vec![c(1.0, 0.0)]);
        let layer = OacLinearLayer {
            n_i: 1,
            n_o: 1,
            r: 1,
            p: one.clone(),
            w_tilde: vec![one.clone()],
            c: one,
            bias: ComplexMatrix::zeros(1, 1),
        };
        (layer, ChannelState::new(ComplexMatrix::column(vec![h]), 1))
    }

    fn random_instance(seed: u64, n: usize, r: usize) -> (OacLinearLayer, ChannelState, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer = OacLinearLayer::init(n, n, n, n, r, &mut rng).unwrap();
        let channel = gen_channel(&PathParams::default(), n, n, &mut rng).unwrap();
        (layer, channel, rng)
    }

    #[test]
    fn ceiling_rounds_and_surplus() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let layer = OacLinearLayer::init(3, 7, 4, 4, 4, &mut rng).unwrap();
        assert_eq!(layer.k_rounds(), 2);
        assert_eq!(layer.surplus(), 1);
        assert!(OacLinearLayer::init(3, 7, 4, 2, 4, &mut rng).is_err());
        assert!(OacLinearLayer::init(0, 7, 4, 4, 4, &mut rng).is_err());
    }

    #[test]
    fn init_is_seeded() {
        let a = OacLinearLayer::init(5, 6, 4, 4, 2, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = OacLinearLayer::init(5, 6, 4, 4, 2, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a.p, b.p);
        assert_eq!(a.c, b.c);
        assert_eq!(a.w_tilde, b.w_tilde);
        assert_eq!(a.bias, ComplexMatrix::zeros(6, 1));
    }

    #[test]
    fn init_variance_monte_carlo() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut total = 0.0;
        let mut count = 0usize;
        for _ in 0..1000 {
            let layer = OacLinearLayer::init(32, 32, 32, 32, 32, &mut rng).unwrap();
            for w in &layer.w_tilde {
                total += w.norm_sqr();
                count += w.len();
            }
        }
        let mean = total / count as f64;
        assert!((mean * 32.0 - 1.0).abs() < 0.1, "mean |w|^2 = {mean}");
    }

    #[test]
    fn scalar_chain() {
        let h = c(0.7, -0.4);
        let (layer, mut ch) = scalar_setup(h);
        let x = ComplexMatrix::column(vec![c(1.5, 2.0)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (y, _) = layer.forward(&mut ch, &x, &mut rng).unwrap();
        assert_eq!(y[(0, 0)], h * c(1.5, 2.0));
    }

    #[test]
    fn zero_input_gives_bias() {
        let (mut layer, mut ch, mut rng) = random_instance(5, 6, 2);
        layer.bias = random_complex_gaussian(6, 1, 1.0, &mut rng).unwrap();
        let (y, _) = layer.forward(&mut ch, &ComplexMatrix::zeros(6, 1), &mut rng).unwrap();
        assert_eq!(y, layer.bias);
    }

    #[test]
    fn noiseless_forward_matches_product() {
        let (layer, mut ch, mut rng) = random_instance(6, 8, 3);
        let x = random_complex_gaussian(8, 4, 1.0, &mut rng).unwrap();
        let (y, trace) = layer.forward(&mut ch, &x, &mut rng).unwrap();
        let direct = layer.effective_weight(&ch.h).unwrap().matmul(&x).unwrap();
        assert!(y.max_abs_diff(&direct) <= 1e-10 * direct.max_abs().max(1.0));
        assert_eq!(trace.x_t.len(), 3);
        assert_eq!(trace.y_r[0].shape(), (8, 4));
    }

    #[test]
    fn zero_gradient_is_zero() {
        let (layer, mut ch, mut rng) = random_instance(7, 4, 2);
        let x = random_complex_gaussian(4, 2, 1.0, &mut rng).unwrap();
        let (_, trace) = layer.forward(&mut ch, &x, &mut rng).unwrap();
        let g = ComplexMatrix::zeros(4, 2);
        for bt in [
            layer.backward_ideal(&ch, &trace, &g).unwrap(),
            layer.backward_ota(&ch, &trace, &g, &mut rng).unwrap(),
        ] {
            assert_eq!(bt.g_x.max_abs(), 0.0);
            assert_eq!(bt.g_p.max_abs(), 0.0);
            assert_eq!(bt.g_c.max_abs(), 0.0);
            assert_eq!(bt.g_b.max_abs(), 0.0);
            assert!(bt.g_w_tilde.iter().all(|w| w.max_abs() == 0.0));
        }
    }

    #[test]
    fn scalar_backward_is_conjugate_channel() {
        let h = c(0.3, 0.9);
        let (layer, mut ch) = scalar_setup(h);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = ComplexMatrix::column(vec![c(1.0, -1.0)]);
        let (_, trace) = layer.forward(&mut ch, &x, &mut rng).unwrap();
        let gy = ComplexMatrix::column(vec![c(0.5, 2.0)]);
        let ideal = layer.backward_ideal(&ch, &trace, &gy).unwrap();
        assert_eq!(ideal.g_x[(0, 0)], h.conj() * c(0.5, 2.0));
        let ota = layer.backward_ota(&ch, &trace, &gy, &mut rng).unwrap();
        assert!((ota.g_xt[0][(0, 0)] - h.conj() * c(0.5, 2.0)).norm() < 1e-15);
    }

    #[test]
    fn ota_equals_ideal_without_noise() {
        let (layer, mut ch, mut rng) = random_instance(8, 16, 4);
        assert_eq!(layer.k_rounds(), 4);
        let x = random_complex_gaussian(16, 3, 1.0, &mut rng).unwrap();
        let (_, trace) = layer.forward(&mut ch, &x, &mut rng).unwrap();
        let gy = random_complex_gaussian(16, 3, 1.0, &mut rng).unwrap();
        let ideal = layer.backward_ideal(&ch, &trace, &gy).unwrap();
        let ota = layer.backward_ota(&ch, &trace, &gy, &mut rng).unwrap();
        assert!(ota.max_abs_diff(&ideal) <= 1e-9);
    }

    #[test]
    fn mismatched_trace_rejected() {
        let (layer, mut ch, mut rng) = random_instance(9, 4, 2);
        let x = random_complex_gaussian(4, 2, 1.0, &mut rng).unwrap();
        let (_, trace) = layer.forward(&mut ch, &x, &mut rng).unwrap();
        assert!(layer.backward_ideal(&ch, &trace, &ComplexMatrix::zeros(4, 3)).is_err());
        let mut other = layer.clone();
        other.w_tilde.pop();
        assert!(other.backward_ideal(&ch, &trace, &ComplexMatrix::zeros(4, 2)).is_err());
        assert!(layer.forward(&mut ch, &ComplexMatrix::zeros(3, 1), &mut rng).is_err());
    }
}
