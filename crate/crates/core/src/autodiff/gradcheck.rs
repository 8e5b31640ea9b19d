//! Finite-difference verification of the analytic gradients.

use super::graph::{Graph, Mode, OpKind};
use super::tensor::{Scalar, Tensor};
use crate::error::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
}

/// Compare analytic parameter gradients against central differences
/// `(f(p + eps) - f(p - eps)) / (2 eps)` on a sampled parameter subset
/// (all parameters when there are at most `max_samples`).
///
/// The loss is the mean cross-entropy against fixed targets when the graph
/// ends in a softmax, otherwise a fixed +/-1-weighted sum of the outputs.
/// Relative error uses a `max(|analytic|, |numeric|, 1e-8)` denominator.
/// Parameters sitting on a non-differentiable point (a max-pool tie about to
/// switch winners) are detected by disagreeing one-sided slopes and excluded.
///
/// Run this on an `f64` graph; truncation noise at `f32` swamps `eps^2`.
pub fn gradient_check<S: Scalar>(
    graph: &mut Graph<S>,
    input: &Tensor<S>,
    eps: f64,
    max_samples: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let softmax_out = graph.nodes().last().map(|n| n.op.kind()) == Some(OpKind::Softmax);
    let batch = input.shape()[0];
    let classes = *graph.output_shape().last().unwrap();
    let targets: Vec<usize> = (0..batch).map(|n| n % classes).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out_len: usize = batch * graph.output_shape().iter().product::<usize>();
    let sum_weights: Vec<f64> =
        (0..out_len).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect();

    graph.set_noise_frozen(true);
    graph.set_stats_frozen(true);

    let result = (|| -> Result<GradCheckReport> {
        let loss_of = |graph: &mut Graph<S>| -> Result<f64> {
            let out = graph.forward(input, Mode::Train)?;
            if softmax_out {
                let probs = out.as_f64_vec();
                let mut loss = 0.0;
                for (row, &t) in targets.iter().enumerate() {
                    loss -= probs[row * classes + t].max(1e-300).ln();
                }
                Ok(loss / batch as f64)
            } else {
                Ok(out
                    .as_f64_vec()
                    .iter()
                    .zip(&sum_weights)
                    .map(|(v, w)| v * w)
                    .sum())
            }
        };

        let loss0 = loss_of(graph)?;
        if softmax_out {
            graph.backward_cross_entropy(&targets)?;
        } else {
            let seed_grad = Tensor::from_f64(
                &std::iter::once(batch)
                    .chain(graph.output_shape().iter().copied())
                    .collect::<Vec<_>>(),
                &sum_weights,
            );
            graph.backward(&seed_grad)?;
        }
        let analytic: Vec<f64> = graph.grads_flat().iter().map(|g| g.as_f64()).collect();

        let total = graph.num_params();
        let indices: Vec<usize> = if total <= max_samples {
            (0..total).collect()
        } else {
            let mut seen = std::collections::HashSet::new();
            let mut picks = Vec::with_capacity(max_samples);
            while picks.len() < max_samples {
                let i = rng.random_range(0..total);
                if seen.insert(i) {
                    picks.push(i);
                }
            }
            picks
        };

        let mut max_rel: f64 = 0.0;
        let mut skipped = 0usize;
        for &i in &indices {
            let original = graph.get_param(i);
            graph.set_param(i, original + eps);
            let l_plus = loss_of(graph)?;
            graph.set_param(i, original - eps);
            let l_minus = loss_of(graph)?;
            graph.set_param(i, original);

            let d_plus = (l_plus - loss0) / eps;
            let d_minus = (loss0 - l_minus) / eps;
            let side_gap = (d_plus - d_minus).abs();
            if side_gap > 0.5 * d_plus.abs().max(d_minus.abs()) && side_gap > 1e-10 {
                skipped += 1;
                continue;
            }

            let numeric = (l_plus - l_minus) / (2.0 * eps);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max((analytic[i] - numeric).abs() / denom);
        }

        Ok(GradCheckReport { max_rel_error: max_rel, checked: indices.len() - skipped, skipped_kinks: skipped })
    })();

    graph.set_noise_frozen(false);
    graph.set_stats_frozen(false);
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::GraphBuilder;

    fn random_input(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let len: usize = shape.iter().product();
        Tensor::from_f64(shape, &(0..len).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())
    }

    #[test]
    fn dense_layer_is_tight() {
        let mut b = GraphBuilder::<f64>::new(&[6], 1);
        b.dense("fc", 4).unwrap();
        let mut g = b.build();
        let report = gradient_check(&mut g, &random_input(&[3, 6], 2), 1e-5, 1000, 3).unwrap();
        assert!(report.max_rel_error < 1e-7, "{report:?}");
    }

    #[test]
    fn conv_and_pools() {
        let mut b = GraphBuilder::<f64>::new(&[2, 4, 12], 1);
        b.conv2d("c1", 3, 1, 5, false).unwrap();
        b.elu("e1");
        b.max_pool("mp", 1, 2).unwrap();
        b.conv2d("c2", 4, 3, 1, false).unwrap();
        b.avg_pool("ap", 2, 1).unwrap();
        let mut g = b.build();
        let report = gradient_check(&mut g, &random_input(&[2, 2, 4, 12], 5), 1e-5, 400, 7).unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn conv_same_padding() {
        let mut b = GraphBuilder::<f64>::new(&[1, 2, 9], 11);
        b.conv2d("c", 3, 1, 4, true).unwrap();
        assert_eq!(b.current_shape(), &[3, 2, 9]);
        let mut g = b.build();
        let report = gradient_check(&mut g, &random_input(&[2, 1, 2, 9], 6), 1e-5, 400, 7).unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn batchnorm_train_mode() {
        let mut b = GraphBuilder::<f64>::new(&[3, 2, 5], 2);
        b.batch_norm("bn").unwrap();
        b.elu("e");
        let mut g = b.build();
        let report = gradient_check(&mut g, &random_input(&[4, 3, 2, 5], 8), 1e-5, 400, 9).unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn lstm_single_step_and_sequence() {
        let mut b = GraphBuilder::<f64>::new(&[1, 5], 3);
        b.lstm("lstm", 4, false).unwrap();
        let mut g = b.build();
        let report = gradient_check(&mut g, &random_input(&[3, 1, 5], 10), 1e-5, 1000, 11).unwrap();
        assert!(report.max_rel_error < 1e-5, "single step {report:?}");

        let mut b = GraphBuilder::<f64>::new(&[6, 5], 4);
        b.lstm("l1", 4, true).unwrap();
        b.lstm("l2", 3, false).unwrap();
        let mut g = b.build();
        let report = gradient_check(&mut g, &random_input(&[2, 6, 5], 12), 1e-5, 600, 13).unwrap();
        assert!(report.max_rel_error < 1e-5, "stacked {report:?}");
    }

    #[test]
    fn softmax_cross_entropy_path() {
        let mut b = GraphBuilder::<f64>::new(&[8], 5);
        b.dense("fc1", 6).unwrap();
        b.elu("e");
        b.dense("fc2", 3).unwrap();
        b.softmax("sm");
        let mut g = b.build();
        let report = gradient_check(&mut g, &random_input(&[4, 8], 14), 1e-5, 1000, 15).unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn dropout_with_frozen_mask() {
        let mut b = GraphBuilder::<f64>::new(&[10], 6);
        b.dense("fc", 8).unwrap();
        b.dropout("do", 0.5).unwrap();
        b.dense("out", 3).unwrap();
        b.softmax("sm");
        let mut g = b.build();
        let report = gradient_check(&mut g, &random_input(&[4, 10], 16), 1e-5, 1000, 17).unwrap();
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn maxpool_tie_points_are_excluded() {
        // With a zero 1x1 conv weight and inputs of opposite sign, the two
        // pooled values tie at 0 and the winner flips between +eps and -eps:
        // the pooled output is |w|, a genuine kink.
        let mut b = GraphBuilder::<f64>::new(&[1, 1, 2], 7);
        b.conv2d("c", 1, 1, 1, false).unwrap();
        b.max_pool("mp", 1, 2).unwrap();
        let mut g = b.build();
        g.set_param(0, 0.0); // weight
        g.set_param(1, 0.0); // bias
        let input = Tensor::from_f64(&[1, 1, 1, 2], &[1.0, -1.0]);
        let report = gradient_check(&mut g, &input, 1e-5, 10, 18).unwrap();
        // The weight sits exactly on the tie: it must be excluded, not
        // reported as a gradient error. The bias stays smooth.
        assert!(report.skipped_kinks >= 1, "{report:?}");
        assert!(report.max_rel_error < 1e-7, "{report:?}");

        // First-index tie rule: backward routes the whole gradient to the
        // first of the tied positions.
        let x: Tensor<f64> = Tensor::from_f64(&[1, 1, 1, 2], &[2.0, 2.0]);
        let (y, argmax) = super::super::ops::maxpool_forward(&x, 1, 2);
        assert_eq!(y.as_f64_vec(), vec![2.0]);
        assert_eq!(argmax, vec![0]);
    }
}
