#![allow(clippy::needless_range_loop)]
mod support;

use support::random_unit_rows;
use ucr_core::encoder::{EncoderParams, EncoderSet};
use ucr_core::losses::{loss_cluster, loss_old, loss_sim, mean_kl, sim_distributions};
use ucr_core::{Matrix, Rng};

#[test]
fn single_prototype_cluster_loss_is_zero() {
    let mut rng = Rng::new(2);
    let f = random_unit_rows(5, 4, &mut rng);
    let p = random_unit_rows(1, 4, &mut rng);
    let l = loss_cluster(&f, &[0; 5], &p, 0.5).unwrap();
    assert!(l.value.abs() < 1e-15);
    assert!(l.grad.frobenius() < 1e-15);
}

#[test]
fn equal_logits_give_ln2() {
    let f = Matrix::from_rows(&[[1.0, 0.0, 0.0]]);
    let p = Matrix::from_rows(&[[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
    let l = loss_cluster(&f, &[1], &p, 0.5).unwrap();
    assert!((l.value - std::f64::consts::LN_2).abs() < 1e-15);
    let o = loss_old(&f, &[0], &p, 0.5).unwrap();
    assert!((o.value - std::f64::consts::LN_2).abs() < 1e-15);
}

#[test]
fn kl_of_hand_distributions() {
    let p = Matrix::from_rows(&[[0.5, 0.5]]);
    let q = Matrix::from_rows(&[[0.9, 0.1]]);
    let want = 0.5 * (25.0f64 / 9.0).ln();
    assert!((mean_kl(&p, &q) - want).abs() < 1e-9);
    assert!((want - 0.5108).abs() < 1e-4);
}

#[test]
fn similarity_loss_vanishes_for_equal_encoders() {
    let mut rng = Rng::new(8);
    let mut set = EncoderSet::new(EncoderParams::init(&[5, 7, 4], &mut rng));
    set.snapshot_frozen();
    let x = support::random_matrix(6, 5, &mut rng);
    let f = set.online.embed(&x).unwrap();
    let m = set.momentum.embed(&x).unwrap();
    let g = set.frozen.as_ref().unwrap().embed(&x).unwrap();
    let d = sim_distributions(&f, &m, &g, 0.2).unwrap();
    assert_eq!(d.p, d.q);
    let l = loss_sim(&d);
    assert!(l.value.abs() < 1e-15);
    assert!(l.grad.frobenius() < 1e-12);
}

#[test]
fn two_sample_batch_with_equal_similarities_is_uniform() {
    let flat = Matrix::from_rows(&[[1.0, 0.0], [1.0, 0.0]]);
    let d = sim_distributions(&flat, &flat, &flat, 0.2).unwrap();
    for i in 0..2 {
        assert_eq!(d.p.row(i), &[0.5, 0.5]);
        assert_eq!(d.q.row(i), &[0.5, 0.5]);
    }
}

/// Closed form of the moving average for an arbitrary online trajectory:
/// `θ_m^t = α^t θ_m^0 + (1 − α) Σ_s α^{t−s} θ_s`.
#[test]
fn ema_closed_form_with_moving_online() {
    let alpha: f64 = 0.999;
    let mut rng = Rng::new(11);
    let dims = [3, 5, 2];
    let mut set = EncoderSet::new(EncoderParams::init(&dims, &mut rng));
    let start = set.momentum.to_flat();
    let mut trajectory = Vec::new();
    for _ in 0..1000 {
        let p = EncoderParams::init(&dims, &mut rng);
        set.online = p.clone();
        trajectory.push(p.to_flat());
        set.ema_update(alpha);
    }
    let t = trajectory.len();
    let got = set.momentum.to_flat();
    for k in 0..got.len() {
        let mut want = alpha.powi(t as i32) * start[k];
        for (s, th) in trajectory.iter().enumerate() {
            want += (1.0 - alpha) * alpha.powi((t - 1 - s) as i32) * th[k];
        }
        assert!((got[k] - want).abs() <= 1e-6 * want.abs().max(1e-3), "{k}: {} vs {want}", got[k]);
    }
}

#[test]
fn ema_scalar_examples() {
    let one = |v: f64| EncoderParams {
        layers: vec![ucr_core::encoder::Layer {
            weights: Matrix::from_rows(&[[v]]),
            bias: vec![v],
        }],
    };
    let mut set = EncoderSet::new(one(0.0));
    set.momentum = one(1.0);
    set.ema_update(0.999);
    assert_eq!(set.momentum.to_flat(), vec![0.999, 0.999]);
    set.ema_update(1.0);
    assert_eq!(set.momentum.to_flat(), vec![0.999, 0.999]);
    set.ema_update(0.0);
    assert_eq!(set.momentum.to_flat(), vec![0.0, 0.0]);
}

/// Projected gradient descent on a free unit anchor under the rehearsal loss
/// lowers the loss at every step and moves the anchor toward its stored
/// prototype until it is the closest one.
#[test]
fn rehearsal_loss_pulls_anchor_to_its_prototype() {
    for seed in 0..10 {
        let mut rng = Rng::new(seed);
        let protos = random_unit_rows(8, 6, &mut rng);
        let target = 5;
        let mut z = random_unit_rows(1, 6, &mut rng).row(0).to_vec();
        let cos = |z: &[f64]| {
            let n = z.iter().map(|x| x * x).sum::<f64>().sqrt();
            z.iter().zip(protos.row(target)).map(|(a, b)| a * b).sum::<f64>() / n
        };
        let start = cos(&z);
        let mut last_loss = f64::INFINITY;
        for step in 0..100 {
            let n = z.iter().map(|x| x * x).sum::<f64>().sqrt();
            let f: Vec<f64> = z.iter().map(|x| x / n).collect();
            let l = loss_old(&Matrix::from_rows(std::slice::from_ref(&f)), &[target], &protos, 0.5).unwrap();
            assert!(l.value <= last_loss + 1e-12, "seed {seed} step {step}: loss rose");
            last_loss = l.value;
            let g = l.grad.row(0);
            let radial: f64 = g.iter().zip(&f).map(|(a, b)| a * b).sum();
            for k in 0..6 {
                z[k] -= 0.05 * (g[k] - radial * f[k]) / n;
            }
        }
        let end = cos(&z);
        assert!(end > start, "seed {seed}: cosine {start} -> {end}");
        let nearest = (0..8)
            .max_by(|&a, &b| {
                let s = |k: usize| protos.row(k).iter().zip(&z).map(|(x, y)| x * y).sum::<f64>();
                s(a).total_cmp(&s(b))
            })
            .unwrap();
        assert_eq!(nearest, target, "seed {seed}");
    }
}
