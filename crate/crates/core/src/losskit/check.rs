//! Finite-difference verification of the analytic gradients, plus the
//! closed-form and property checks behind the `losscheck` command.
//!
//! Relative error of one instance is `max|a - n| / max(max|a|, max|n|)`
//! over the whole gradient, with a tiny floor so an all-zero gradient does
//! not divide by zero.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::*;
use crate::datamodel::Matrix;

pub const FD_STEP: f64 = 1e-5;
pub const ITC_TOL: f64 = 1e-4;
pub const GROUNDING_TOL: f64 = 1e-4;
pub const ITM_TOL: f64 = 1e-6;
pub const SPATIAL_TOL: f64 = 1e-6;

/// Central differences of `f` at `x`.
pub fn central_difference(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + h;
            let up = f(&probe);
            probe[i] = orig - h;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let diff = analytic
        .iter()
        .zip(numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    diff / inf(analytic).max(inf(numeric)).max(1e-300)
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Worst observed error (or the value, for closed-form checks).
    pub observed: f64,
    pub tolerance: f64,
    pub instances: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct LossCheckReport {
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

impl LossCheckReport {
    pub fn get(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn outcome(name: &str, observed: f64, tolerance: f64, instances: usize) -> CheckOutcome {
    CheckOutcome {
        name: name.into(),
        passed: observed.is_finite() && observed < tolerance,
        observed,
        tolerance,
        instances,
    }
}

fn closed_form(name: &str, value: f64, expected: f64, tolerance: f64) -> CheckOutcome {
    CheckOutcome {
        name: name.into(),
        passed: (value - expected).abs() <= tolerance,
        observed: value,
        tolerance,
        instances: 1,
    }
}

fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| loop {
            let row: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            if row.iter().map(|x| x * x).sum::<f64>() > 0.05 {
                break row;
            }
        })
        .collect()
}

fn itc_value(x: &[f64], n: usize, d: usize) -> f64 {
    let v = Matrix::from_flat(d, x[..n * d].to_vec()).expect("flat");
    let t = Matrix::from_flat(d, x[n * d..2 * n * d].to_vec()).expect("flat");
    let batch = BatchEmbeddings::new(v, t, x[2 * n * d]).expect("probe stays valid");
    itc_loss(&batch).loss
}

/// Worst relative gradient error of the contrastive loss over random batches.
pub fn check_itc(instances: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(2..=8);
        let d = rng.random_range(2..=16);
        let tau = rng.random_range(0.05..1.0);
        let v = random_rows(rng, n, d);
        let t = random_rows(rng, n, d);
        let batch = BatchEmbeddings::new(Matrix::from_rows(&v).unwrap(), Matrix::from_rows(&t).unwrap(), tau).unwrap();
        let out = itc_loss(&batch);
        let mut x: Vec<f64> = batch.visual.as_flat().to_vec();
        x.extend_from_slice(batch.textual.as_flat());
        x.push(tau);
        let mut analytic: Vec<f64> = out.grad_visual.as_flat().to_vec();
        analytic.extend_from_slice(out.grad_textual.as_flat());
        analytic.push(out.grad_tau);
        let numeric = central_difference(|p| itc_value(p, n, d), &x, FD_STEP);
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    worst
}

pub fn check_itm(instances: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(1..=16);
        let labels: Vec<MatchLabel<f64>> = (0..n)
            .map(|_| MatchLabel::new(rng.random_bool(0.5), rng.random_range(0.05..0.95)).unwrap())
            .collect();
        let (_, analytic) = itm_loss(&labels).unwrap();
        let x: Vec<f64> = labels.iter().map(|l| l.p_match).collect();
        let numeric = central_difference(
            |p| {
                let probe: Vec<MatchLabel<f64>> = labels
                    .iter()
                    .zip(p)
                    .map(|(l, &pm)| MatchLabel::new(l.positive, pm).unwrap())
                    .collect();
                itm_loss(&probe).unwrap().0
            },
            &x,
            FD_STEP,
        );
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    worst
}

/// Overlapping box pair at least `margin` away from every kink and boundary.
fn smooth_box_pair(rng: &mut ChaCha8Rng, margin: f64) -> (BoundingBox<f64>, BoundingBox<f64>) {
    loop {
        let t = [
            rng.random_range(0.3..0.7),
            rng.random_range(0.3..0.7),
            rng.random_range(0.2..0.5),
            rng.random_range(0.2..0.5),
        ];
        let p: [f64; 4] = std::array::from_fn(|k| t[k] + rng.random_range(-0.12..0.12));
        let (Ok(tb), Ok(pb)) = (BoundingBox::from_array(t), BoundingBox::from_array(p)) else {
            continue;
        };
        let (te, pe) = (tb.raw_extent(), pb.raw_extent());
        let gaps = [
            (p[0] - t[0]).abs(),
            (p[1] - t[1]).abs(),
            (p[2] - t[2]).abs(),
            (p[3] - t[3]).abs(),
            (pe.x1 - te.x1).abs(),
            (pe.x2 - te.x2).abs(),
            (pe.y1 - te.y1).abs(),
            (pe.y2 - te.y2).abs(),
            pe.x1,
            1.0 - pe.x2,
            pe.y1,
            1.0 - pe.y2,
            pe.x2.min(te.x2) - pe.x1.max(te.x1),
            pe.y2.min(te.y2) - pe.y1.max(te.y1),
        ];
        if gaps.iter().all(|g| *g > margin) {
            return (tb, pb);
        }
    }
}

pub fn check_grounding(instances: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(1..=4);
        let pairs: Vec<_> = (0..n).map(|_| smooth_box_pair(rng, 1e-3)).collect();
        let (_, grads) = grounding_loss_mean(&pairs).unwrap();
        let analytic: Vec<f64> = grads.iter().flatten().copied().collect();
        let x: Vec<f64> = pairs.iter().flat_map(|(_, p)| p.to_array()).collect();
        let numeric = central_difference(
            |p| {
                let probe: Vec<_> = pairs
                    .iter()
                    .zip(p.chunks_exact(4))
                    .map(|((t, _), c)| (*t, BoundingBox::new(c[0], c[1], c[2], c[3]).unwrap()))
                    .collect();
                grounding_loss_mean(&probe).unwrap().0
            },
            &x,
            FD_STEP,
        );
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    worst
}

/// Softmax of logits in [-1, 1], so every entry is at least about 0.017
/// and the step-size error of a central difference of `-ln p` stays
/// near `h^2 / (3 p^2)`, well under the tolerance.
fn random_simplex(rng: &mut ChaCha8Rng) -> [f64; 9] {
    let logits: [f64; 9] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let total: f64 = logits.iter().map(|z| z.exp()).sum();
    logits.map(|z| z.exp() / total)
}

pub fn check_spatial(instances: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(1..=8);
        let pairs: Vec<SpatialPair<f64>> = (0..n)
            .map(|_| SpatialPair::new(rng.random_range(0..9), random_simplex(rng)).unwrap())
            .collect();
        let (_, grads) = spatial_loss(&pairs).unwrap();
        let analytic: Vec<f64> = grads.iter().flatten().copied().collect();
        let labels: Vec<usize> = pairs.iter().map(|p| p.label).collect();
        let x: Vec<f64> = pairs.iter().flat_map(|p| p.p_hat).collect();
        let numeric = central_difference(
            |p| {
                let rows: Vec<[f64; 9]> = p.chunks_exact(9).map(|c| c.try_into().unwrap()).collect();
                spatial_nll(&rows, &labels)
            },
            &x,
            FD_STEP,
        );
        worst = worst.max(max_relative_error(&analytic, &numeric));
    }
    worst
}

/// Worst change in the contrastive loss when one row is rescaled by c > 0.
pub fn check_itc_scale_invariance(instances: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(1..=8);
        let d = rng.random_range(2..=16);
        let tau = rng.random_range(0.05..1.0);
        let v = random_rows(rng, n, d);
        let mut t = random_rows(rng, n, d);
        let base = itc_loss(&BatchEmbeddings::new(Matrix::from_rows(&v).unwrap(), Matrix::from_rows(&t).unwrap(), tau).unwrap()).loss;
        let row = rng.random_range(0..n);
        let c = rng.random_range(0.1..10.0);
        t[row].iter_mut().for_each(|x| *x *= c);
        let scaled = itc_loss(&BatchEmbeddings::new(Matrix::from_rows(&v).unwrap(), Matrix::from_rows(&t).unwrap(), tau).unwrap()).loss;
        worst = worst.max((base - scaled).abs());
    }
    worst
}

/// Number of box pairs whose class is not mirrored when the pair is swapped.
pub fn check_spatial_antisymmetry(instances: usize, rng: &mut ChaCha8Rng) -> usize {
    (0..instances)
        .filter(|_| {
            let mut b = || {
                BoundingBox::new(rng.random_range(0.0..1.0), rng.random_range(0.0..1.0), 0.1, 0.1).unwrap()
            };
            let (i, j) = (b(), b());
            let ij = spatial_class(&i, &j, DEFAULT_SPATIAL_THETA).unwrap();
            let ji = spatial_class(&j, &i, DEFAULT_SPATIAL_THETA).unwrap();
            ji != ij.mirrored()
        })
        .count()
}

/// Smallest loss value seen over random valid inputs of every loss.
pub fn check_nonnegative(instances: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut lowest = f64::INFINITY;
    for _ in 0..instances {
        let n = rng.random_range(1..=6);
        let d = rng.random_range(2..=8);
        let batch = BatchEmbeddings::new(
            Matrix::from_rows(&random_rows(rng, n, d)).unwrap(),
            Matrix::from_rows(&random_rows(rng, n, d)).unwrap(),
            rng.random_range(0.05..1.0),
        )
        .unwrap();
        lowest = lowest.min(itc_loss(&batch).loss);
        let labels = [MatchLabel::new(rng.random_bool(0.5), rng.random_range(0.0..=1.0)).unwrap()];
        lowest = lowest.min(itm_loss(&labels).unwrap().0);
        let (t, p) = smooth_box_pair(rng, 0.0);
        lowest = lowest.min(grounding_loss(&t, &p).loss);
        let pair = SpatialPair::new(rng.random_range(0..9), random_simplex(rng)).unwrap();
        lowest = lowest.min(spatial_loss(&[pair]).unwrap().0);
    }
    lowest
}

fn softmax_row_error(instances: usize, rng: &mut ChaCha8Rng) -> f64 {
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let n = rng.random_range(1..=16);
        let logits: Vec<f64> = (0..n * n).map(|_| rng.random_range(-50.0..50.0)).collect();
        for row in softmax_rows(&logits, n).chunks(n) {
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
        }
    }
    worst
}

/// Runs every gradient, closed-form and property check.
#[allow(clippy::approx_constant)]
pub fn run_losscheck(instances: usize, seed: u64) -> LossCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let single = Matrix::from_rows(&[vec![0.2, 0.7, -0.1]]).unwrap();
    let checks = vec![
        outcome("itc_gradient", check_itc(instances, &mut rng), ITC_TOL, instances),
        outcome("itm_gradient", check_itm(instances, &mut rng), ITM_TOL, instances),
        outcome("grounding_gradient", check_grounding(instances, &mut rng), GROUNDING_TOL, instances),
        outcome("spatial_gradient", check_spatial(instances, &mut rng), SPATIAL_TOL, instances),
        closed_form(
            "itc_singleton",
            itc_loss(&BatchEmbeddings::new(single.clone(), single, 0.07).unwrap()).loss,
            0.0,
            1e-12,
        ),
        closed_form(
            "itc_identity_2x2",
            itc_loss(&BatchEmbeddings::new(id.clone(), id, 1.0).unwrap()).loss,
            0.313262,
            1e-5,
        ),
        closed_form(
            "itm_half",
            itm_loss(&[MatchLabel::new(true, 0.5).unwrap()]).unwrap().0,
            0.693147,
            1e-6,
        ),
        closed_form(
            "spatial_uniform",
            spatial_loss(&[SpatialPair::new(0, [1.0 / 9.0; 9]).unwrap()]).unwrap().0,
            2.197225,
            1e-6,
        ),
        closed_form("total_loss_weights", total_loss(1.0, 1.0, 1.0, 1.0, DEFAULT_LAMBDA), 2.2, 1e-12),
        outcome("itc_row_scale_invariance", check_itc_scale_invariance(instances, &mut rng), 1e-9, instances),
        outcome("softmax_rows_sum", softmax_row_error(instances, &mut rng), 1e-12, instances),
        CheckOutcome {
            name: "spatial_antisymmetry".into(),
            observed: check_spatial_antisymmetry(instances, &mut rng) as f64,
            passed: false,
            tolerance: 0.0,
            instances,
        },
        CheckOutcome {
            name: "losses_nonnegative".into(),
            observed: check_nonnegative(instances, &mut rng),
            passed: false,
            tolerance: 0.0,
            instances,
        },
    ];
    let checks: Vec<CheckOutcome> = checks
        .into_iter()
        .map(|mut c| {
            match c.name.as_str() {
                "spatial_antisymmetry" => c.passed = c.observed == 0.0,
                "losses_nonnegative" => c.passed = c.observed >= 0.0,
                _ => {}
            }
            c
        })
        .collect();
    LossCheckReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}
