//! Finite-difference verification of every operation's analytic gradient,
//! over multiple random seeds, plus broadcasting-soundness and determinism
//! properties.

use samamba_tensor::init::{seeded_rng, uniform_tensor};
use samamba_tensor::{concat, finite_diff_check, Result, Tensor};

const SEEDS: [u64; 5] = [1, 2, 3, 5, 8];
const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn check(
    name: &str,
    seed: u64,
    shape: &[usize],
    lo: f64,
    hi: f64,
    f: impl Fn(&Tensor<f64>) -> Result<Tensor<f64>>,
) {
    let mut rng = seeded_rng(seed, 77);
    let x = uniform_tensor::<f64>(&mut rng, shape, lo, hi);
    let report = finite_diff_check(f, &x, H, TOL).unwrap();
    report
        .ensure(name, TOL)
        .unwrap_or_else(|e| panic!("{} (seed {}): {}", name, seed, e));
}

#[test]
fn elementwise_binary_gradients() {
    for &seed in &SEEDS {
        let mut rng = seeded_rng(seed, 78);
        let other = uniform_tensor::<f64>(&mut rng, &[2, 3], 0.5, 2.0);
        check("add", seed, &[2, 3], -2.0, 2.0, |x| x.add(&other)?.sum_all());
        check("sub", seed, &[2, 3], -2.0, 2.0, |x| x.sub(&other)?.sum_all());
        check("mul", seed, &[2, 3], -2.0, 2.0, |x| x.mul(&other)?.sum_all());
        check("div", seed, &[2, 3], -2.0, 2.0, |x| x.div(&other)?.sum_all());
        check("div_rhs", seed, &[2, 3], 0.5, 2.0, |x| other.div(x)?.sum_all());
        check("maximum", seed, &[2, 3], -2.0, 2.0, |x| {
            x.maximum(&other)?.sum_all()
        });
        // broadcast versions: [3] against [2,3]
        let big = uniform_tensor::<f64>(&mut rng, &[2, 3], 0.5, 2.0);
        check("mul_broadcast", seed, &[3], -2.0, 2.0, |x| {
            big.mul(x)?.sum_all()
        });
        check("div_broadcast", seed, &[3], 0.5, 2.0, |x| {
            big.div(x)?.sum_all()
        });
    }
}

#[test]
fn unary_gradients() {
    for &seed in &SEEDS {
        check("neg", seed, &[5], -2.0, 2.0, |x| x.neg()?.sum_all());
        check("exp", seed, &[5], -2.0, 2.0, |x| x.exp()?.sum_all());
        check("ln", seed, &[5], 0.2, 3.0, |x| x.ln()?.sum_all());
        check("sqrt", seed, &[5], 0.2, 3.0, |x| x.sqrt()?.sum_all());
        check("abs", seed, &[5], 0.1, 2.0, |x| x.abs()?.sum_all());
        check("relu", seed, &[5], 0.1, 2.0, |x| x.relu()?.sum_all());
        check("sigmoid", seed, &[5], -3.0, 3.0, |x| x.sigmoid()?.sum_all());
        check("silu", seed, &[5], -3.0, 3.0, |x| x.silu()?.sum_all());
        check("softplus", seed, &[5], -3.0, 3.0, |x| x.softplus()?.sum_all());
        check("log_sigmoid", seed, &[5], -3.0, 3.0, |x| {
            x.log_sigmoid()?.sum_all()
        });
        check("pow_scalar", seed, &[5], 0.2, 2.0, |x| {
            x.pow_scalar(2.0)?.sum_all()
        });
        check("add_scalar", seed, &[5], -2.0, 2.0, |x| {
            x.add_scalar(1.5)?.sum_all()
        });
        check("mul_scalar", seed, &[5], -2.0, 2.0, |x| {
            x.mul_scalar(-0.7)?.sum_all()
        });
        check("softmax", seed, &[2, 4], -2.0, 2.0, |x| {
            // weighted sum so the gradient is not trivially zero
            let w = Tensor::from_vec(vec![0.3, -0.9, 1.7, 0.2, -0.4, 0.8, 1.1, -1.2], &[2, 4])
                .unwrap();
            x.softmax_lastdim()?.mul(&w)?.sum_all()
        });
    }
}

#[test]
fn matmul_gradients() {
    for &seed in &SEEDS {
        let mut rng = seeded_rng(seed, 79);
        let b = uniform_tensor::<f64>(&mut rng, &[4, 3], -1.0, 1.0);
        check("matmul_lhs", seed, &[2, 4], -1.0, 1.0, |x| {
            x.matmul(&b)?.sum_all()
        });
        let a = uniform_tensor::<f64>(&mut rng, &[2, 4], -1.0, 1.0);
        check("matmul_rhs", seed, &[4, 3], -1.0, 1.0, |x| {
            a.matmul(x)?.sum_all()
        });
    }
}

#[test]
fn reduction_and_layout_gradients() {
    for &seed in &SEEDS {
        check("sum_axis", seed, &[2, 3, 2], -1.0, 1.0, |x| {
            x.sum_axis(1)?.mul_scalar(2.0)?.sum_all()
        });
        check("mean_axis", seed, &[2, 3, 2], -1.0, 1.0, |x| {
            x.mean_axis(0)?.sum_all()
        });
        check("max_axis", seed, &[2, 5], -1.0, 1.0, |x| {
            x.max_axis(1)?.sum_all()
        });
        check("mean_all", seed, &[2, 5], -1.0, 1.0, |x| x.mean_all());
        check("reshape", seed, &[2, 6], -1.0, 1.0, |x| {
            x.reshape(&[3, 4])?.mul(&Tensor::ones(&[3, 4]))?.sum_all()
        });
        check("permute", seed, &[2, 3, 4], -1.0, 1.0, |x| {
            let w = Tensor::from_vec((0..24).map(|i| (i % 7) as f64 - 3.0).collect(), &[4, 2, 3])
                .unwrap();
            x.permute(&[2, 0, 1])?.mul(&w)?.sum_all()
        });
        check("slice", seed, &[2, 5], -1.0, 1.0, |x| {
            x.slice(1, 1, 3)?.sum_all()
        });
        check("index_select", seed, &[4, 2], -1.0, 1.0, |x| {
            x.index_select(0, &[3, 0, 0, 2])?.sum_all()
        });
        check("reverse_axis", seed, &[3, 3], -1.0, 1.0, |x| {
            let w = Tensor::from_vec((0..9).map(|i| i as f64).collect(), &[3, 3]).unwrap();
            x.reverse_axis(0)?.mul(&w)?.sum_all()
        });
        let mut rng = seeded_rng(seed, 80);
        let other = uniform_tensor::<f64>(&mut rng, &[2, 3], -1.0, 1.0);
        check("concat", seed, &[2, 2], -1.0, 1.0, |x| {
            let c = concat(1, &[x, &other])?;
            let w = Tensor::from_vec((0..10).map(|i| i as f64 * 0.3 - 1.0).collect(), &[2, 5])
                .unwrap();
            c.mul(&w)?.sum_all()
        });
    }
}

#[test]
fn conv_and_resize_gradients() {
    for &seed in &SEEDS {
        let mut rng = seeded_rng(seed, 81);
        let w = uniform_tensor::<f64>(&mut rng, &[3, 2, 3, 3], -0.5, 0.5);
        check("conv2d_input", seed, &[1, 2, 6, 5], -1.0, 1.0, |x| {
            x.conv2d(&w, 1, 1)?.sum_all()
        });
        let x = uniform_tensor::<f64>(&mut rng, &[1, 2, 6, 5], -1.0, 1.0);
        check("conv2d_weight", seed, &[3, 2, 3, 3], -0.5, 0.5, |w| {
            x.conv2d(w, 2, 1)?.sum_all()
        });

        let wt = uniform_tensor::<f64>(&mut rng, &[2, 3, 4, 4], -0.5, 0.5);
        check("conv_transpose_input", seed, &[1, 2, 3, 3], -1.0, 1.0, |x| {
            x.conv_transpose2d(&wt, 4, 0)?.sum_all()
        });
        let xt = uniform_tensor::<f64>(&mut rng, &[1, 2, 3, 3], -1.0, 1.0);
        check("conv_transpose_weight", seed, &[2, 3, 4, 4], -0.5, 0.5, |w| {
            xt.conv_transpose2d(w, 4, 0)?.sum_all()
        });

        check("bilinear", seed, &[1, 2, 3, 3], -1.0, 1.0, |x| {
            let y = x.bilinear_upsample(7, 5)?;
            let w = Tensor::from_vec(
                (0..70).map(|i| ((i * 13) % 11) as f64 / 5.0 - 1.0).collect(),
                &[1, 2, 7, 5],
            )
            .unwrap();
            y.mul(&w)?.sum_all()
        });
    }
}

#[test]
fn norm_gradients() {
    for &seed in &SEEDS {
        let mut rng = seeded_rng(seed, 82);
        let scale = uniform_tensor::<f64>(&mut rng, &[4], 0.5, 1.5);
        let shift = uniform_tensor::<f64>(&mut rng, &[4], -0.5, 0.5);
        check("layer_norm_x", seed, &[3, 4], -1.0, 1.0, |x| {
            x.layer_norm(&scale, &shift, 1e-6)?.sum_axis(1)?.mul(
                &Tensor::from_vec(vec![1.0, -2.0, 0.5], &[3, 1]).unwrap(),
            )?.sum_all()
        });
        let x = uniform_tensor::<f64>(&mut rng, &[3, 4], -1.0, 1.0);
        check("layer_norm_scale", seed, &[4], 0.5, 1.5, |s| {
            x.layer_norm(s, &shift, 1e-6)?
                .pow_scalar(2.0)?
                .sum_all()
        });

        let bn_scale = uniform_tensor::<f64>(&mut rng, &[3], 0.5, 1.5);
        let bn_shift = uniform_tensor::<f64>(&mut rng, &[3], -0.5, 0.5);
        let weights = uniform_tensor::<f64>(&mut rng, &[2, 3, 4, 4], -1.0, 1.0);
        check("batch_norm_x", seed, &[2, 3, 4, 4], -1.0, 1.0, |x| {
            let rm = Tensor::zeros(&[3]);
            let rv = Tensor::ones(&[3]);
            x.batch_norm(&bn_scale, &bn_shift, &rm, &rv, 0.1, 1e-5, true)?
                .mul(&weights)?
                .sum_all()
        });
        let bx = uniform_tensor::<f64>(&mut rng, &[2, 3, 4, 4], -1.0, 1.0);
        check("batch_norm_scale", seed, &[3], 0.5, 1.5, |s| {
            let rm = Tensor::zeros(&[3]);
            let rv = Tensor::ones(&[3]);
            bx.batch_norm(s, &bn_shift, &rm, &rv, 0.1, 1e-5, true)?
                .mul(&weights)?
                .sum_all()
        });
        check("batch_norm_eval_x", seed, &[2, 3, 4, 4], -1.0, 1.0, |x| {
            let rm = Tensor::from_vec(vec![0.1, -0.2, 0.05], &[3]).unwrap();
            let rv = Tensor::from_vec(vec![0.9, 1.1, 0.7], &[3]).unwrap();
            x.batch_norm(&bn_scale, &bn_shift, &rm, &rv, 0.1, 1e-5, false)?
                .mul(&weights)?
                .sum_all()
        });
    }
}

/// Broadcasting soundness: the gradient of a broadcast input equals the
/// sum-reduction of the upstream gradient, i.e. it matches the gradient
/// computed against a materialized expansion.
#[test]
fn broadcast_grad_matches_materialized_expansion() {
    for &seed in &SEEDS {
        let mut rng = seeded_rng(seed, 83);
        let a = uniform_tensor::<f64>(&mut rng, &[4, 1, 3], -1.0, 1.0);
        let b = uniform_tensor::<f64>(&mut rng, &[2, 3], -1.0, 1.0);

        // broadcast path
        let tape = samamba_tensor::Tape::<f64>::new();
        let grad_b = {
            let _g = tape.activate();
            let bp = b.detach();
            bp.set_requires_grad(true);
            a.mul(&bp).unwrap().sum_all().unwrap().backward().unwrap();
            bp.grad().unwrap()
        };

        // materialized path: tile b into [4,2,3] by hand
        let tape2 = samamba_tensor::Tape::<f64>::new();
        let grad_manual = {
            let _g = tape2.activate();
            let bp = b.detach();
            bp.set_requires_grad(true);
            let tiled = concat(
                0,
                &[
                    &bp.reshape(&[1, 2, 3]).unwrap(),
                    &bp.reshape(&[1, 2, 3]).unwrap(),
                    &bp.reshape(&[1, 2, 3]).unwrap(),
                    &bp.reshape(&[1, 2, 3]).unwrap(),
                ],
            )
            .unwrap();
            a.mul(&tiled).unwrap().sum_all().unwrap().backward().unwrap();
            bp.grad().unwrap()
        };

        for (x, y) in grad_b.iter().zip(&grad_manual) {
            assert!((x - y).abs() < 1e-12, "{} vs {}", x, y);
        }
    }
}

/// Unreachable leaves receive no gradient (implicitly zero).
#[test]
fn unreachable_grads_are_zero() {
    let tape = samamba_tensor::Tape::<f64>::new();
    let _g = tape.activate();
    let x = Tensor::<f64>::param(vec![1.0, 2.0], &[2]).unwrap();
    let y = Tensor::<f64>::param(vec![3.0], &[1]).unwrap();
    let _unused = y.mul_scalar(2.0).unwrap();
    x.sum_all().unwrap().backward().unwrap();
    assert_eq!(x.grad().unwrap(), vec![1.0, 1.0]);
    assert!(y.grad().is_none());
}

/// Identical seed and config give bit-identical forward outputs.
#[test]
fn forward_determinism() {
    let run = || {
        let mut rng = seeded_rng(123, 9);
        let x = uniform_tensor::<f64>(&mut rng, &[2, 3, 8, 8], -1.0, 1.0);
        let w = uniform_tensor::<f64>(&mut rng, &[4, 3, 3, 3], -0.5, 0.5);
        let y = x.conv2d(&w, 1, 1).unwrap().silu().unwrap();
        y.to_vec().iter().map(|v| v.to_bits()).collect::<Vec<u64>>()
    };
    assert_eq!(run(), run());
}
