//! Training losses and class-balancing weights with analytic gradients.
//!
//! These are desk-scale numerical implementations used for verification;
//! batched training loops are out of scope. Optimizer settings used for the
//! reference trainings are recorded as metadata constants only.

use thiserror::Error;

/// Probability floor applied before any logarithm.
pub const PROB_EPSILON: f64 = 1e-7;
/// Focusing parameter default from the focal-loss reference work.
pub const FOCAL_GAMMA_DEFAULT: f64 = 2.0;
/// Class-weight default from the focal-loss reference work.
pub const FOCAL_ALPHA_DEFAULT: f64 = 0.25;
/// Classification term weight in the combined detection loss.
pub const CLASSIFICATION_WEIGHT: f64 = 1.5;

/// Optimizer metadata for the two reference trainings (not implemented
/// here, recorded for configuration completeness).
pub const OPTIMIZER_NAME: &str = "adam";
pub const SEGMENTATION_INITIAL_LR: f64 = 1e-3;
pub const DETECTION_INITIAL_LR: f64 = 4e-4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LossError {
    #[error("probability vector must have at least one entry")]
    EmptyVector,
    #[error("probability vector entry {index} = {value} outside [0, 1]")]
    OutOfRange { index: usize, value: String },
    #[error("probability vector sums to {0}, expected 1 within 1e-6")]
    NotNormalized(String),
    #[error("class index {index} out of range for {classes} classes")]
    BadClassIndex { index: usize, classes: usize },
    #[error("all class counts are zero")]
    AllZeroCounts,
    #[error("weight vector length {got} does not match {expected} classes")]
    WeightLength { got: usize, expected: usize },
}

/// Per-class weights, non-negative and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights(Vec<f64>);

impl ClassWeights {
    pub fn new(alpha: Vec<f64>) -> Self {
        assert!(
            alpha.iter().all(|a| a.is_finite() && *a >= 0.0),
            "weights must be finite and non-negative"
        );
        ClassWeights(alpha)
    }

    pub fn uniform(classes: usize) -> Self {
        ClassWeights(vec![1.0; classes])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A length-C probability vector summing to one (within 1e-6). One-hot
/// ground truth uses the same carrier.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(values: Vec<f64>) -> Result<Self, LossError> {
        if values.is_empty() {
            return Err(LossError::EmptyVector);
        }
        for (index, &v) in values.iter().enumerate() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(LossError::OutOfRange {
                    index,
                    value: format!("{v}"),
                });
            }
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(LossError::NotNormalized(format!("{sum}")));
        }
        Ok(ProbVector(values))
    }

    /// Skips validation; used for gradient checks that evaluate the loss at
    /// perturbed, slightly off-simplex points.
    pub fn new_unchecked(values: Vec<f64>) -> Self {
        ProbVector(values)
    }

    pub fn one_hot(true_class: usize, classes: usize) -> Result<Self, LossError> {
        if true_class >= classes {
            return Err(LossError::BadClassIndex {
                index: true_class,
                classes,
            });
        }
        let mut values = vec![0.0; classes];
        values[true_class] = 1.0;
        Ok(ProbVector(values))
    }

    pub fn uniform(classes: usize) -> Self {
        ProbVector(vec![1.0 / classes as f64; classes])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[inline]
fn clamped_ln(p: f64) -> f64 {
    p.max(PROB_EPSILON).ln()
}

fn check_lengths(y: &ProbVector, y_hat: &ProbVector, alpha: &ClassWeights) -> Result<(), LossError> {
    if y.len() != y_hat.len() {
        return Err(LossError::WeightLength {
            got: y.len(),
            expected: y_hat.len(),
        });
    }
    if alpha.len() != y_hat.len() {
        return Err(LossError::WeightLength {
            got: alpha.len(),
            expected: y_hat.len(),
        });
    }
    Ok(())
}

/// Weighted categorical cross-entropy `-sum_i alpha_i y_i ln(y_hat_i)`.
/// Predictions are clamped by [`PROB_EPSILON`] before the log, so the
/// result is always finite.
pub fn weighted_ce(
    y: &ProbVector,
    y_hat: &ProbVector,
    alpha: &ClassWeights,
) -> Result<f64, LossError> {
    check_lengths(y, y_hat, alpha)?;
    Ok(y
        .values()
        .iter()
        .zip(y_hat.values())
        .zip(alpha.values())
        .map(|((&yi, &pi), &ai)| {
            if yi == 0.0 {
                0.0
            } else {
                -ai * yi * clamped_ln(pi)
            }
        })
        .sum())
}

/// Gradient of [`weighted_ce`] with respect to the prediction:
/// `d/d y_hat_i = -alpha_i y_i / y_hat_i` (with the same epsilon clamp).
pub fn weighted_ce_grad(
    y: &ProbVector,
    y_hat: &ProbVector,
    alpha: &ClassWeights,
) -> Result<Vec<f64>, LossError> {
    check_lengths(y, y_hat, alpha)?;
    Ok(y
        .values()
        .iter()
        .zip(y_hat.values())
        .zip(alpha.values())
        .map(|((&yi, &pi), &ai)| {
            if yi == 0.0 {
                0.0
            } else {
                -ai * yi / pi.max(PROB_EPSILON)
            }
        })
        .collect())
}

/// Median-frequency balancing: `alpha_c = median(f) / f_c` with
/// `f_c = count_c / total`, the median taken over classes with nonzero
/// counts. Absent classes get weight zero.
pub fn median_frequency_weights(class_pixel_counts: &[u64]) -> Result<ClassWeights, LossError> {
    let total: u64 = class_pixel_counts.iter().sum();
    if total == 0 {
        return Err(LossError::AllZeroCounts);
    }
    let frequencies: Vec<f64> = class_pixel_counts
        .iter()
        .map(|&c| c as f64 / total as f64)
        .collect();
    let mut nonzero: Vec<f64> = frequencies.iter().copied().filter(|&f| f > 0.0).collect();
    nonzero.sort_by(|a, b| a.total_cmp(b));
    // Even length takes the mean of the two middle values.
    let median = if nonzero.len() % 2 == 1 {
        nonzero[nonzero.len() / 2]
    } else {
        let hi = nonzero.len() / 2;
        (nonzero[hi - 1] + nonzero[hi]) / 2.0
    };
    Ok(ClassWeights::new(
        frequencies
            .iter()
            .map(|&f| if f > 0.0 { median / f } else { 0.0 })
            .collect(),
    ))
}

/// Focal loss `-alpha_t (1 - p_t)^gamma ln(p_t)` where `p_t` is the
/// predicted probability of the true class.
pub fn focal_loss(
    y_hat: &ProbVector,
    true_class: usize,
    gamma: f64,
    alpha_t: f64,
) -> Result<f64, LossError> {
    debug_assert!(gamma >= 0.0 && (0.0..=1.0).contains(&alpha_t));
    if true_class >= y_hat.len() {
        return Err(LossError::BadClassIndex {
            index: true_class,
            classes: y_hat.len(),
        });
    }
    let p_t = y_hat.values()[true_class];
    Ok(-alpha_t * (1.0 - p_t).powf(gamma) * clamped_ln(p_t))
}

/// Gradient of [`focal_loss`] with respect to the prediction vector; only
/// the true-class coordinate is nonzero:
/// `alpha_t [ gamma (1-p)^(gamma-1) ln(p) - (1-p)^gamma / p ]`.
pub fn focal_loss_grad(
    y_hat: &ProbVector,
    true_class: usize,
    gamma: f64,
    alpha_t: f64,
) -> Result<Vec<f64>, LossError> {
    if true_class >= y_hat.len() {
        return Err(LossError::BadClassIndex {
            index: true_class,
            classes: y_hat.len(),
        });
    }
    let p = y_hat.values()[true_class].max(PROB_EPSILON);
    let one_minus = 1.0 - p;
    let modulating_grad = if gamma == 0.0 {
        0.0
    } else {
        gamma * one_minus.powf(gamma - 1.0) * clamped_ln(p)
    };
    let mut grad = vec![0.0; y_hat.len()];
    grad[true_class] = alpha_t * (modulating_grad - one_minus.powf(gamma) / p);
    Ok(grad)
}

/// Smooth L1: `0.5 x^2` for `|x| < 1`, `|x| - 0.5` otherwise.
pub fn smooth_l1(x: f64) -> f64 {
    debug_assert!(x.is_finite());
    if x.abs() < 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

/// Derivative of [`smooth_l1`]; at `|x| = 1` both branches agree on `x`.
pub fn smooth_l1_grad(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        x
    } else {
        x.signum()
    }
}

/// Combined detection loss: classification term up-weighted by
/// [`CLASSIFICATION_WEIGHT`] plus the regression term.
pub fn detection_loss(classification_term: f64, regression_term: f64) -> f64 {
    CLASSIFICATION_WEIGHT * classification_term + regression_term
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub(crate) const FD_STEP: f64 = 1e-5;
    pub(crate) const FD_REL_TOL: f64 = 1e-4;

    /// Central finite difference of `f` along coordinate `i`.
    pub(crate) fn central_diff(f: impl Fn(&[f64]) -> f64, at: &[f64], i: usize) -> f64 {
        let mut plus = at.to_vec();
        let mut minus = at.to_vec();
        plus[i] += FD_STEP;
        minus[i] -= FD_STEP;
        (f(&plus) - f(&minus)) / (2.0 * FD_STEP)
    }

    pub(crate) fn rel_err(got: f64, want: f64) -> f64 {
        (got - want).abs() / want.abs().max(1e-12)
    }

    /// Random interior simplex point with all coordinates comfortably away
    /// from 0 and 1.
    pub(crate) fn random_interior_prob(rng: &mut ChaCha8Rng, classes: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.2..1.0)).collect();
        let sum: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / sum).collect()
    }

    #[test]
    fn weighted_ce_examples() {
        let y = ProbVector::one_hot(1, 4).unwrap();
        let alpha = ClassWeights::uniform(4);
        // Perfect prediction.
        assert_eq!(weighted_ce(&y, &y, &alpha).unwrap(), 0.0);
        // Uniform prediction over 4 classes.
        let uniform = ProbVector::uniform(4);
        let loss = weighted_ce(&y, &uniform, &alpha).unwrap();
        assert!((loss - 4.0f64.ln()).abs() < 1e-12);
        // Linear in alpha.
        let doubled = ClassWeights::new(vec![2.0; 4]);
        assert!((weighted_ce(&y, &uniform, &doubled).unwrap() - 2.0 * loss).abs() < 1e-12);
    }

    #[test]
    fn weighted_ce_clamps_zero_prediction() {
        let y = ProbVector::one_hot(0, 2).unwrap();
        let y_hat = ProbVector::new_unchecked(vec![0.0, 1.0]);
        let loss = weighted_ce(&y, &y_hat, &ClassWeights::uniform(2)).unwrap();
        assert!(loss.is_finite());
        assert!((loss - (-PROB_EPSILON.ln())).abs() < 1e-9);
    }

    #[test]
    fn median_frequency_examples() {
        // Equal counts give exactly ones.
        let w = median_frequency_weights(&[10, 10, 10]).unwrap();
        assert_eq!(w.values(), &[1.0, 1.0, 1.0]);

        // counts (90, 10): f = (0.9, 0.1), median 0.5.
        let w = median_frequency_weights(&[90, 10]).unwrap();
        assert!((w.values()[0] - 0.5 / 0.9).abs() < 1e-12);
        assert!((w.values()[1] - 5.0).abs() < 1e-12);

        // Absent class gets zero weight; median over nonzero classes.
        let w = median_frequency_weights(&[1, 0]).unwrap();
        assert_eq!(w.values(), &[1.0, 0.0]);

        assert_eq!(
            median_frequency_weights(&[0, 0]),
            Err(LossError::AllZeroCounts)
        );
    }

    #[test]
    fn reweighted_frequencies_are_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let counts: Vec<u64> = (0..6).map(|_| rng.gen_range(0..1000)).collect();
            if counts.iter().all(|&c| c == 0) {
                continue;
            }
            let total: u64 = counts.iter().sum();
            let weights = median_frequency_weights(&counts).unwrap();
            let products: Vec<f64> = counts
                .iter()
                .zip(weights.values())
                .filter(|(&c, _)| c > 0)
                .map(|(&c, &a)| a * c as f64 / total as f64)
                .collect();
            for pair in products.windows(2) {
                assert!((pair[0] - pair[1]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn focal_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        // gamma = 0, alpha = 1 reduces to cross-entropy.
        for _ in 0..200 {
            let p = random_interior_prob(&mut rng, 5);
            let y_hat = ProbVector::new_unchecked(p.clone());
            let ce = -clamped_ln(p[2]);
            assert!((focal_loss(&y_hat, 2, 0.0, 1.0).unwrap() - ce).abs() < 1e-12);
        }
        // Perfectly classified.
        let perfect = ProbVector::one_hot(0, 3).unwrap();
        assert_eq!(focal_loss(&perfect, 0, 2.0, 0.25).unwrap(), 0.0);
        // p_t = 0.5, gamma 2, alpha 1.
        let half = ProbVector::new(vec![0.5, 0.5]).unwrap();
        let expected = 0.25 * 2.0f64.ln();
        assert!((focal_loss(&half, 0, 2.0, 1.0).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn focal_never_exceeds_cross_entropy() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let p = random_interior_prob(&mut rng, 4);
            let y_hat = ProbVector::new_unchecked(p.clone());
            let ce = -clamped_ln(p[0]);
            let focal = focal_loss(&y_hat, 0, 2.0, 1.0).unwrap();
            assert!(focal <= ce + 1e-12);
            assert!(focal >= 0.0);
        }
    }

    #[test]
    fn smooth_l1_examples() {
        assert_eq!(smooth_l1(0.0), 0.0);
        // Both branches meet at |x| = 1.
        assert!((0.5 * 1.0 * 1.0 - (1.0f64 - 0.5)).abs() < 1e-15);
        assert_eq!(smooth_l1(1.0), 0.5);
        assert_eq!(smooth_l1(-1.0), 0.5);
        assert_eq!(smooth_l1(3.0), 2.5);
        assert_eq!(smooth_l1(-3.0), 2.5);
    }

    #[test]
    fn detection_loss_examples() {
        assert_eq!(detection_loss(0.0, 0.0), 0.0);
        assert_eq!(detection_loss(1.0, 0.0), 1.5);
        assert_eq!(detection_loss(2.0, 3.0), 6.0);
    }

    #[test]
    fn weighted_ce_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let alpha = ClassWeights::new(vec![0.6, 1.4, 2.0, 0.9]);
        let y = ProbVector::one_hot(2, 4).unwrap();
        for _ in 0..100 {
            let at = random_interior_prob(&mut rng, 4);
            let grad =
                weighted_ce_grad(&y, &ProbVector::new_unchecked(at.clone()), &alpha).unwrap();
            for i in 0..4 {
                let fd = central_diff(
                    |p| {
                        weighted_ce(&y, &ProbVector::new_unchecked(p.to_vec()), &alpha).unwrap()
                    },
                    &at,
                    i,
                );
                if fd == 0.0 && grad[i] == 0.0 {
                    continue;
                }
                assert!(
                    rel_err(grad[i], fd) < FD_REL_TOL,
                    "coordinate {i}: analytic {} vs fd {fd}",
                    grad[i]
                );
            }
        }
    }

    #[test]
    fn focal_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        for _ in 0..100 {
            let at = random_interior_prob(&mut rng, 4);
            let grad = focal_loss_grad(&ProbVector::new_unchecked(at.clone()), 1, 2.0, 0.25)
                .unwrap();
            let fd = central_diff(
                |p| {
                    focal_loss(&ProbVector::new_unchecked(p.to_vec()), 1, 2.0, 0.25).unwrap()
                },
                &at,
                1,
            );
            assert!(
                rel_err(grad[1], fd) < FD_REL_TOL,
                "analytic {} vs fd {fd}",
                grad[1]
            );
        }
    }

    #[test]
    fn focal_gradient_vanishes_at_perfect_prediction() {
        let perfect = ProbVector::one_hot(0, 3).unwrap();
        for gamma in [1.0, 2.0, 4.0] {
            let grad = focal_loss_grad(&perfect, 0, gamma, 0.25).unwrap();
            assert_eq!(grad[0], 0.0, "gamma {gamma}");
        }
    }

    #[test]
    fn smooth_l1_gradient() {
        assert_eq!(smooth_l1_grad(3.0), 1.0);
        assert_eq!(smooth_l1_grad(-3.0), -1.0);
        assert_eq!(smooth_l1_grad(1.0), 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        for _ in 0..100 {
            let x: f64 = rng.gen_range(-4.0..4.0);
            if (x.abs() - 1.0).abs() < 10.0 * FD_STEP {
                continue; // finite differences straddle the branch point
            }
            let fd = (smooth_l1(x + FD_STEP) - smooth_l1(x - FD_STEP)) / (2.0 * FD_STEP);
            if fd == 0.0 && smooth_l1_grad(x) == 0.0 {
                continue;
            }
            assert!(rel_err(smooth_l1_grad(x), fd) < FD_REL_TOL, "x = {x}");
        }
    }

    #[test]
    fn losses_are_non_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let alpha = ClassWeights::uniform(4);
        for _ in 0..200 {
            let p = ProbVector::new_unchecked(random_interior_prob(&mut rng, 4));
            let y = ProbVector::one_hot(rng.gen_range(0..4), 4).unwrap();
            assert!(weighted_ce(&y, &p, &alpha).unwrap() >= 0.0);
            assert!(focal_loss(&p, 0, 2.0, 0.25).unwrap() >= 0.0);
            assert!(smooth_l1(rng.gen_range(-10.0..10.0)) >= 0.0);
        }
    }
}
