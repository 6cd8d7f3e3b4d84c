//! Algebraic and statistical invariants over randomized inputs.

use oac_split::beamform::{forward_subspace_loss, CovarianceAccumulator};
use oac_split::channel::{gen_channel, PathParams};
use oac_split::clinalg::{hermitian_eig, random_complex_gaussian, Complex, ComplexMatrix};
use oac_split::data::parse_cifar10;
use oac_split::nn::{qam_activate, qam_backward, BatchNormState, Constellation};
use oac_split::oac::OacLinearLayer;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn gauss(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    random_complex_gaussian(rows, cols, 1.0, rng).unwrap()
}

/// A random unitary: eigenvectors of a random Hermitian matrix.
fn unitary(n: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let a = gauss(n, n, rng);
    let h = a.add(&a.adjoint()).unwrap();
    let eig = hermitian_eig(&h).unwrap();
    eig.leading(n)
}

fn rel(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.max_abs_diff(b) / a.max_abs().max(b.max_abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_associates(seed in any::<u64>(), m in 1usize..7, k in 1usize..7, l in 1usize..7, n in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, c) = (gauss(m, k, &mut rng), gauss(k, l, &mut rng), gauss(l, n, &mut rng));
        let left = a.matmul(&b).unwrap().matmul(&c).unwrap();
        let right = a.matmul(&b.matmul(&c).unwrap()).unwrap();
        prop_assert!(rel(&left, &right) <= 1e-12);
    }

    #[test]
    fn adjoint_reverses_products(seed in any::<u64>(), m in 1usize..7, k in 1usize..7, n in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (gauss(m, k, &mut rng), gauss(k, n, &mut rng));
        let lhs = a.matmul(&b).unwrap().adjoint();
        let rhs = b.adjoint().matmul(&a.adjoint()).unwrap();
        prop_assert!(rel(&lhs, &rhs) <= 1e-14);
        prop_assert_eq!(a.adjoint().adjoint(), a.clone());
        let c = gauss(m, 2, &mut rng);
        prop_assert!(rel(&a.adjoint_matmul(&c).unwrap(), &a.adjoint().matmul(&c).unwrap()) <= 1e-14);
    }

    #[test]
    fn reciprocity_bilinear_identity(seed in any::<u64>(), n_t in 1usize..9, n_r in 1usize..9) {
        // sᵀ(Hx) = (Hᵀs)ᵀx: the reverse link is the transpose of the forward one
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut link = gen_channel(&PathParams::default(), n_t, n_r, &mut rng).unwrap();
        let x = gauss(n_t, 1, &mut rng);
        let s = gauss(n_r, 1, &mut rng);
        let fwd = s.transpose().matmul(&link.transmit_forward(&x, &mut rng).unwrap()).unwrap()[(0, 0)];
        let bwd = link.transmit_backward(&s, &mut rng).unwrap().transpose().matmul(&x).unwrap()[(0, 0)];
        prop_assert!((fwd - bwd).norm() <= 1e-12 * fwd.norm().max(1.0));
    }

    #[test]
    fn noiseless_layer_is_affine(seed in any::<u64>(), alpha_re in -2.0..2.0f64, alpha_im in -2.0..2.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layer = OacLinearLayer::init(5, 6, 8, 8, 4, &mut rng).unwrap();
        let link = gen_channel(&PathParams::default(), 8, 8, &mut rng).unwrap();
        let f = |x: &ComplexMatrix| {
            let (y, _) = layer.forward(&mut link.clone(), x, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
            y
        };
        let (x1, x2) = (gauss(5, 3, &mut rng), gauss(5, 3, &mut rng));
        let alpha = Complex::new(alpha_re, alpha_im);
        let b = f(&ComplexMatrix::zeros(5, 3));
        let lhs = f(&x1.scale(alpha).add(&x2).unwrap()).sub(&b).unwrap();
        let rhs = f(&x1).sub(&b).unwrap().scale(alpha).add(&f(&x2).sub(&b).unwrap()).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-10 * rhs.max_abs().max(1.0));
    }

    #[test]
    fn quantizer_idempotent_and_nearest(re in -5.0..5.0f64, im in -5.0..5.0f64, n in 2usize..9, delta in 0.25..3.0f64) {
        let c = Constellation::square(n, delta).unwrap();
        let z = Complex::new(re, im);
        let q = c.quantize(z);
        prop_assert_eq!(c.quantize(q), q);
        let levels = c.axis_levels(delta);
        prop_assert!(levels.contains(&q.re) && levels.contains(&q.im));
        for l in &levels {
            prop_assert!((re - q.re).abs() <= (re - l).abs());
            prop_assert!((im - q.im).abs() <= (im - l).abs());
        }
    }

    #[test]
    fn straight_through_gate(seed in any::<u64>(), delta in 0.25..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = Constellation::square(4, delta).unwrap();
        let x = random_complex_gaussian(6, 4, 4.0, &mut rng).unwrap();
        let g = gauss(6, 4, &mut rng);
        let out = qam_backward(&x, &g, &c).unwrap();
        for ((o, gi), xi) in out.as_slice().iter().zip(g.as_slice()).zip(x.as_slice()) {
            prop_assert_eq!(o.re, if xi.re.abs() <= delta { gi.re } else { 0.0 });
            prop_assert_eq!(o.im, if xi.im.abs() <= delta { gi.im } else { 0.0 });
        }
        prop_assert_eq!(qam_activate(&qam_activate(&x, &c), &c), qam_activate(&x, &c));
    }

    #[test]
    fn batchnorm_ignores_input_scale(seed in any::<u64>(), s in 0.5..4.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_complex_gaussian(3, 16, 4.0, &mut rng).unwrap();
        let mut bn = BatchNormState::new(3, 1);
        bn.gamma = gauss(3, 1, &mut rng);
        bn.beta = gauss(3, 1, &mut rng);
        let (a, _) = bn.clone().forward_train(&x).unwrap();
        let (b, _) = bn.clone().forward_train(&x.scale_real(s)).unwrap();
        prop_assert!(a.max_abs_diff(&b) <= 1e-4 * a.max_abs().max(1.0));
    }

    #[test]
    fn subspace_loss_is_basis_invariant(seed in any::<u64>(), r in 1usize..5) {
        // ℓ_f depends on span(C) only through a unitary change of stream basis
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut acc = CovarianceAccumulator::new(6);
        acc.accumulate(&gauss(6, 24, &mut rng)).unwrap();
        let c = gauss(6, r, &mut rng);
        let q = unitary(r, &mut rng);
        let (a, _) = forward_subspace_loss(&c, &acc, r).unwrap();
        let (b, _) = forward_subspace_loss(&c.matmul(&q).unwrap(), &acc, r).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.max(1.0));
    }

    #[test]
    fn cifar_parser_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..8000)) {
        let _ = parse_cifar10(&bytes, "fuzz.bin");
    }
}

#[test]
fn noisy_backward_is_unbiased() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let layer = OacLinearLayer::init(4, 8, 8, 8, 4, &mut rng).unwrap();
    let mut link = gen_channel(&PathParams::default(), 8, 8, &mut rng).unwrap().with_noise_variance(0.01);
    let x = gauss(4, 3, &mut rng);
    let g_y = gauss(8, 3, &mut rng);
    let (_, trace) = layer.forward(&mut link, &x, &mut rng).unwrap();
    let ideal = layer.backward_ideal(&link, &trace, &g_y).unwrap();

    let runs = 1000;
    let stats = |pick: &dyn Fn(&oac_split::oac::BackwardTrace) -> Vec<f64>| {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(99);
        let reference = pick(&ideal);
        let mut sum = vec![0.0; reference.len()];
        let mut sum_sq = vec![0.0; reference.len()];
        for _ in 0..runs {
            let g = layer.backward_ota(&link, &trace, &g_y, &mut noise_rng).unwrap();
            for (i, v) in pick(&g).into_iter().enumerate() {
                sum[i] += v;
                sum_sq[i] += v * v;
            }
        }
        (reference, sum, sum_sq)
    };
    // one real statistic per parameter group
    let first = |m: &ComplexMatrix| m.as_slice()[0].re;
    let (reference, sum, sum_sq) = stats(&|g| vec![first(&g.g_x), first(&g.g_p), first(&g.g_w_tilde[1]), g.g_p.as_slice()[3].im]);
    let n = runs as f64;
    for i in 0..reference.len() {
        let mean = sum[i] / n;
        let var = (sum_sq[i] / n - mean * mean) * n / (n - 1.0);
        let se = (var / n).sqrt();
        assert!(se > 0.0);
        assert!((mean - reference[i]).abs() <= 3.0 * se, "stat {i}: mean {mean} vs {} (se {se})", reference[i]);
    }
}
