//! Activation and stochastic-masking layers.
//!
//! Every elementwise layer is realized as a per-element multiplier mask: the
//! forward pass samples (train) or derives (eval) the mask and returns
//! `y = x ⊙ mask`, the backward pass is `grad ⊙ mask`, and replaying a stored
//! mask against a perturbed input reproduces the exact sampled linear map —
//! which is what makes frozen-mask gradient checks exact.
//!
//! The width-doubling layers (CReLU, Fourier features) carry kind-specific
//! caches instead of a multiplier mask.
//!
//! Conventions:
//! - `x = 0` belongs to the non-negative interval everywhere (intervals are
//!   half-open `[l, u)`).
//! - The negative rectifier is implemented as `-r(-x)`, so a single scalar
//!   rectifier kernel exists.
//! - Simplified AID uses standard (non-inverted) dropout: no train-time
//!   rescaling, eval applies the mean map `r_p`. Baseline Dropout is
//!   inverted: kept values are scaled by `1/(1-p)` at train time and eval is
//!   the identity.

use crate::error::{Error, Result};
use crate::numkit::{Matrix, Rng};

/// Train/eval phase selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[inline]
fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Modified leaky ReLU `r_alpha`: positive side scaled by `alpha`, negative
/// side by `1 - alpha`. `r_1` is ReLU, `r_0` the negative ReLU, `r_{1/2}` is
/// `x/2`.
#[inline]
pub fn mod_leaky_relu_scalar(x: f64, alpha: f64) -> f64 {
    if x >= 0.0 {
        alpha * x
    } else {
        (1.0 - alpha) * x
    }
}

/// Elementwise `r_alpha` over a matrix.
pub fn mod_leaky_relu(x: &Matrix, alpha: f64) -> Matrix {
    x.map(|v| mod_leaky_relu_scalar(v, alpha))
}

/// Interval partition of the real line plus one drop probability per
/// interval. `boundaries` are the strictly increasing split points
/// `b_1 < … < b_{k-1}`; interval `j` is `[b_j, b_{j+1})` with `b_0 = -inf`
/// and `b_k = +inf`, so the intervals are disjoint and cover all reals by
/// construction.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalScheme {
    boundaries: Vec<f64>,
    probs: Vec<f64>,
}

impl IntervalScheme {
    pub fn new(boundaries: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != boundaries.len() + 1 {
            return Err(Error::invalid(
                "IntervalScheme",
                format!(
                    "{} boundaries define {} intervals but {} probabilities given",
                    boundaries.len(),
                    boundaries.len() + 1,
                    probs.len()
                ),
            ));
        }
        if boundaries.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid(
                "IntervalScheme",
                "boundaries must be strictly increasing",
            ));
        }
        if boundaries.iter().any(|b| !b.is_finite()) {
            return Err(Error::invalid("IntervalScheme", "boundaries must be finite"));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid(
                "IntervalScheme",
                "drop probabilities must lie in [0, 1]",
            ));
        }
        Ok(IntervalScheme { boundaries, probs })
    }

    /// Index of the interval containing `x`.
    #[inline]
    pub fn interval_of(&self, x: f64) -> usize {
        self.boundaries.partition_point(|b| *b <= x)
    }

    /// Drop probability of the interval containing `x`.
    #[inline]
    pub fn drop_prob_at(&self, x: f64) -> f64 {
        self.probs[self.interval_of(x)]
    }

    pub fn num_intervals(&self) -> usize {
        self.probs.len()
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// The two-interval scheme split at zero used by simplified AID:
    /// negatives dropped with probability `p`, non-negatives with `1 - p`.
    pub fn simplified_aid(p: f64) -> Result<Self> {
        IntervalScheme::new(vec![0.0], vec![p, 1.0 - p])
    }
}

/// Which activation/stochastic layer a network uses.
#[derive(Debug, Clone, PartialEq)]
pub enum ActivationSpec {
    Identity,
    Relu,
    /// `min(x, 0)`.
    NegRelu,
    ModLeakyRelu {
        alpha: f64,
    },
    /// Simplified AID: positives kept with probability `p`, negatives with
    /// `1 - p`; eval applies `r_p`.
    Aid {
        p: f64,
    },
    /// Interval-wise dropout with an arbitrary interval scheme.
    AidGeneral {
        scheme: IntervalScheme,
    },
    /// Two intervals split at zero with independent drop rates: `p_pos` for
    /// non-negative values, `q_neg` for negatives.
    AidPq {
        p_pos: f64,
        q_neg: f64,
    },
    /// Inverted dropout: kept entries scaled by `1/(1-p)` in train mode,
    /// identity in eval mode.
    Dropout {
        p: f64,
    },
    /// Per element: ReLU with probability `p`, identity otherwise.
    DropRelu {
        p: f64,
    },
    /// Negative side scaled by a slope drawn uniformly from
    /// `[lower, upper]` in train mode, by the mean slope in eval mode.
    RRelu {
        lower: f64,
        upper: f64,
    },
    /// `concat(r(x), r(-x))`; doubles the width.
    CRelu,
    /// `concat(sin x, cos x)`; doubles the width.
    Fourier,
}

impl ActivationSpec {
    pub fn validate(&self) -> Result<()> {
        let check_prob = |p: f64, what: &str| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::invalid(
                    "ActivationSpec",
                    format!("{what} must lie in [0, 1], got {p}"),
                ))
            }
        };
        match self {
            ActivationSpec::Identity
            | ActivationSpec::Relu
            | ActivationSpec::NegRelu
            | ActivationSpec::CRelu
            | ActivationSpec::Fourier => Ok(()),
            ActivationSpec::ModLeakyRelu { alpha } => {
                if alpha.is_finite() {
                    Ok(())
                } else {
                    Err(Error::invalid("ActivationSpec", "alpha must be finite"))
                }
            }
            ActivationSpec::Aid { p } => check_prob(*p, "AID p"),
            ActivationSpec::AidGeneral { .. } => Ok(()),
            ActivationSpec::AidPq { p_pos, q_neg } => {
                check_prob(*p_pos, "AID p_pos")?;
                check_prob(*q_neg, "AID q_neg")
            }
            ActivationSpec::Dropout { p } => {
                check_prob(*p, "dropout p")?;
                if *p >= 1.0 {
                    Err(Error::invalid("ActivationSpec", "dropout p = 1 is rejected"))
                } else {
                    Ok(())
                }
            }
            ActivationSpec::DropRelu { p } => check_prob(*p, "DropReLU p"),
            ActivationSpec::RRelu { lower, upper } => {
                if 0.0 <= *lower && lower <= upper && *upper <= 1.0 {
                    Ok(())
                } else {
                    Err(Error::invalid(
                        "ActivationSpec",
                        format!("RReLU requires 0 <= lower <= upper <= 1, got ({lower}, {upper})"),
                    ))
                }
            }
        }
    }

    /// Output width per input unit (2 for the concatenating kinds).
    pub fn width_factor(&self) -> usize {
        match self {
            ActivationSpec::CRelu | ActivationSpec::Fourier => 2,
            _ => 1,
        }
    }

    /// Whether the train-mode forward consumes randomness.
    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            ActivationSpec::Aid { .. }
                | ActivationSpec::AidGeneral { .. }
                | ActivationSpec::AidPq { .. }
                | ActivationSpec::Dropout { .. }
                | ActivationSpec::DropRelu { .. }
                | ActivationSpec::RRelu { .. }
        )
    }
}

/// What the forward pass stored for the backward pass.
#[derive(Debug, Clone)]
pub enum CacheKind {
    /// Per-element multipliers actually applied: 0/1 for the dropout
    /// family, sampled slopes for RReLU, deterministic slopes in eval.
    Elementwise { mask: Matrix },
    /// CReLU: 0/1 pass-through patterns of the two rectifier branches.
    Split { pos: Matrix, neg: Matrix },
    /// Fourier: the input itself (the map is smooth; no mask exists).
    Smooth { input: Matrix },
}

/// Forward-pass cache: the phase it was produced in plus the sampled state.
#[derive(Debug, Clone)]
pub struct MaskCache {
    pub mode: Mode,
    pub kind: CacheKind,
}

impl MaskCache {
    /// The multiplier mask, for elementwise kinds.
    pub fn mask(&self) -> Option<&Matrix> {
        match &self.kind {
            CacheKind::Elementwise { mask } => Some(mask),
            _ => None,
        }
    }
}

impl ActivationSpec {
    /// Train/eval forward. Eval mode is a pure function of the input and
    /// consumes no randomness.
    pub fn forward(&self, x: &Matrix, mode: Mode, rng: &mut Rng) -> Result<(Matrix, MaskCache)> {
        self.validate()?;
        match self {
            ActivationSpec::CRelu => return crelu_forward(x, mode),
            ActivationSpec::Fourier => return fourier_forward(x, mode),
            _ => {}
        }
        let mask = self.multiplier_mask(x, mode, rng);
        let y = x.hadamard(&mask)?;
        Ok((
            y,
            MaskCache {
                mode,
                kind: CacheKind::Elementwise { mask },
            },
        ))
    }

    /// Per-element multiplier for the elementwise kinds.
    fn multiplier_mask(&self, x: &Matrix, mode: Mode, rng: &mut Rng) -> Matrix {
        let elem = |v: f64, rng: &mut Rng| -> f64 {
            match (self, mode) {
                (ActivationSpec::Identity, _) => 1.0,
                (ActivationSpec::Relu, _) => {
                    if v >= 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                }
                (ActivationSpec::NegRelu, _) => {
                    // Multiplier view of -r(-v).
                    if v >= 0.0 {
                        0.0
                    } else {
                        1.0
                    }
                }
                (ActivationSpec::ModLeakyRelu { alpha }, _) => {
                    if v >= 0.0 {
                        *alpha
                    } else {
                        1.0 - alpha
                    }
                }
                (ActivationSpec::Aid { p }, Mode::Train) => {
                    // Bernoulli(p) selects the r branch, else the -r(-x) branch.
                    let r_branch = rng.bernoulli(*p);
                    let kept = if v >= 0.0 { r_branch } else { !r_branch };
                    if kept {
                        1.0
                    } else {
                        0.0
                    }
                }
                (ActivationSpec::Aid { p }, Mode::Eval) => {
                    if v >= 0.0 {
                        *p
                    } else {
                        1.0 - p
                    }
                }
                (ActivationSpec::AidGeneral { scheme }, Mode::Train) => {
                    let drop = scheme.drop_prob_at(v);
                    if rng.bernoulli(1.0 - drop) {
                        1.0
                    } else {
                        0.0
                    }
                }
                (ActivationSpec::AidGeneral { scheme }, Mode::Eval) => {
                    1.0 - scheme.drop_prob_at(v)
                }
                (ActivationSpec::AidPq { p_pos, q_neg }, Mode::Train) => {
                    let drop = if v >= 0.0 { *p_pos } else { *q_neg };
                    if rng.bernoulli(1.0 - drop) {
                        1.0
                    } else {
                        0.0
                    }
                }
                (ActivationSpec::AidPq { p_pos, q_neg }, Mode::Eval) => {
                    if v >= 0.0 {
                        1.0 - p_pos
                    } else {
                        1.0 - q_neg
                    }
                }
                (ActivationSpec::Dropout { p }, Mode::Train) => {
                    if rng.bernoulli(1.0 - p) {
                        1.0 / (1.0 - p)
                    } else {
                        0.0
                    }
                }
                (ActivationSpec::Dropout { .. }, Mode::Eval) => 1.0,
                (ActivationSpec::DropRelu { p }, Mode::Train) => {
                    if rng.bernoulli(*p) {
                        // ReLU branch.
                        if v >= 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        1.0
                    }
                }
                (ActivationSpec::DropRelu { p }, Mode::Eval) => {
                    if v >= 0.0 {
                        1.0
                    } else {
                        1.0 - p
                    }
                }
                (ActivationSpec::RRelu { lower, upper }, Mode::Train) => {
                    // One draw per element keeps the stream shape-determined.
                    let slope = lower + rng.uniform() * (upper - lower);
                    if v < 0.0 {
                        slope
                    } else {
                        1.0
                    }
                }
                (ActivationSpec::RRelu { lower, upper }, Mode::Eval) => {
                    if v < 0.0 {
                        (lower + upper) / 2.0
                    } else {
                        1.0
                    }
                }
                (ActivationSpec::CRelu, _) | (ActivationSpec::Fourier, _) => {
                    unreachable!("width-doubling kinds handled separately")
                }
            }
        };
        let mut mask = Matrix::zeros(x.rows(), x.cols());
        for (m, &v) in mask.data_mut().iter_mut().zip(x.data()) {
            *m = elem(v, rng);
        }
        mask
    }

    /// Gradient of the sampled (mask-frozen) computation.
    pub fn backward(&self, grad_y: &Matrix, cache: &MaskCache) -> Result<Matrix> {
        match &cache.kind {
            CacheKind::Elementwise { mask } => {
                if grad_y.shape() != mask.shape() {
                    return Err(Error::dims(
                        "activation_backward",
                        format!("{}x{}", mask.rows(), mask.cols()),
                        format!("{}x{}", grad_y.rows(), grad_y.cols()),
                    ));
                }
                grad_y.hadamard(mask)
            }
            CacheKind::Split { pos, neg } => {
                let n = pos.cols();
                check_doubled_shape(grad_y, pos, "activation_backward")?;
                let mut gx = Matrix::zeros(grad_y.rows(), n);
                for r in 0..grad_y.rows() {
                    for c in 0..n {
                        let g = grad_y.get(r, c) * pos.get(r, c)
                            - grad_y.get(r, c + n) * neg.get(r, c);
                        gx.set(r, c, g);
                    }
                }
                Ok(gx)
            }
            CacheKind::Smooth { input } => {
                let n = input.cols();
                check_doubled_shape(grad_y, input, "activation_backward")?;
                let mut gx = Matrix::zeros(grad_y.rows(), n);
                for r in 0..grad_y.rows() {
                    for c in 0..n {
                        let v = input.get(r, c);
                        let g = grad_y.get(r, c) * v.cos() - grad_y.get(r, c + n) * v.sin();
                        gx.set(r, c, g);
                    }
                }
                Ok(gx)
            }
        }
    }

    /// Re-apply a stored cache to a (possibly perturbed) input: the frozen
    /// forward. For elementwise kinds this is `x ⊙ mask`; for CReLU the
    /// stored branch patterns; Fourier is smooth and simply recomputed.
    pub fn replay(&self, x: &Matrix, cache: &MaskCache) -> Result<Matrix> {
        match &cache.kind {
            CacheKind::Elementwise { mask } => x.hadamard(mask),
            CacheKind::Split { pos, neg } => {
                check_doubled_input(x, pos, "activation replay")?;
                let n = x.cols();
                let mut y = Matrix::zeros(x.rows(), 2 * n);
                for r in 0..x.rows() {
                    for c in 0..n {
                        y.set(r, c, x.get(r, c) * pos.get(r, c));
                        y.set(r, c + n, -x.get(r, c) * neg.get(r, c));
                    }
                }
                Ok(y)
            }
            CacheKind::Smooth { .. } => Ok(fourier_map(x)),
        }
    }
}

fn check_doubled_shape(grad_y: &Matrix, half: &Matrix, op: &'static str) -> Result<()> {
    if grad_y.rows() != half.rows() || grad_y.cols() != 2 * half.cols() {
        return Err(Error::dims(
            op,
            format!("{}x{}", half.rows(), 2 * half.cols()),
            format!("{}x{}", grad_y.rows(), grad_y.cols()),
        ));
    }
    Ok(())
}

fn check_doubled_input(x: &Matrix, half: &Matrix, op: &'static str) -> Result<()> {
    if x.shape() != half.shape() {
        return Err(Error::dims(
            op,
            format!("{}x{}", half.rows(), half.cols()),
            format!("{}x{}", x.rows(), x.cols()),
        ));
    }
    Ok(())
}

fn crelu_forward(x: &Matrix, mode: Mode) -> Result<(Matrix, MaskCache)> {
    let n = x.cols();
    let mut pos = Matrix::zeros(x.rows(), n);
    let mut neg = Matrix::zeros(x.rows(), n);
    let mut y = Matrix::zeros(x.rows(), 2 * n);
    for r in 0..x.rows() {
        for c in 0..n {
            let v = x.get(r, c);
            let p = if v >= 0.0 { 1.0 } else { 0.0 };
            // r(-v) passes when -v >= 0.
            let q = if -v >= 0.0 { 1.0 } else { 0.0 };
            pos.set(r, c, p);
            neg.set(r, c, q);
            y.set(r, c, relu(v));
            y.set(r, c + n, relu(-v));
        }
    }
    Ok((
        y,
        MaskCache {
            mode,
            kind: CacheKind::Split { pos, neg },
        },
    ))
}

fn fourier_map(x: &Matrix) -> Matrix {
    let n = x.cols();
    let mut y = Matrix::zeros(x.rows(), 2 * n);
    for r in 0..x.rows() {
        for c in 0..n {
            let v = x.get(r, c);
            y.set(r, c, v.sin());
            y.set(r, c + n, v.cos());
        }
    }
    y
}

fn fourier_forward(x: &Matrix, mode: Mode) -> Result<(Matrix, MaskCache)> {
    Ok((
        fourier_map(x),
        MaskCache {
            mode,
            kind: CacheKind::Smooth { input: x.clone() },
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Matrix {
        Matrix::from_vec(rows, cols, v.to_vec()).unwrap()
    }

    fn all_kinds() -> Vec<ActivationSpec> {
        vec![
            ActivationSpec::Identity,
            ActivationSpec::Relu,
            ActivationSpec::NegRelu,
            ActivationSpec::ModLeakyRelu { alpha: 0.7 },
            ActivationSpec::Aid { p: 0.9 },
            ActivationSpec::AidGeneral {
                scheme: IntervalScheme::new(vec![-1.0, 0.0, 2.0], vec![0.9, 0.4, 0.1, 0.6])
                    .unwrap(),
            },
            ActivationSpec::AidPq {
                p_pos: 0.2,
                q_neg: 0.6,
            },
            ActivationSpec::Dropout { p: 0.3 },
            ActivationSpec::DropRelu { p: 0.5 },
            ActivationSpec::RRelu {
                lower: 0.125,
                upper: 0.333,
            },
        ]
    }

    #[test]
    fn aid_general_single_interval_p0_is_identity() {
        let scheme = IntervalScheme::new(vec![], vec![0.0]).unwrap();
        let spec = ActivationSpec::AidGeneral { scheme };
        let x = m(1, 4, &[-2.0, -0.5, 0.0, 3.0]);
        for mode in [Mode::Train, Mode::Eval] {
            let mut rng = Rng::new(1);
            let (y, _) = spec.forward(&x, mode, &mut rng).unwrap();
            assert_eq!(y, x);
        }
    }

    #[test]
    fn aid_general_p_neg_1_p_pos_0_is_relu_in_train_mode() {
        // Negatives always dropped, non-negatives always kept.
        let scheme = IntervalScheme::new(vec![0.0], vec![1.0, 0.0]).unwrap();
        let spec = ActivationSpec::AidGeneral { scheme };
        let x = m(2, 3, &[-3.0, -0.1, 0.0, 0.5, 2.0, -7.0]);
        let mut rng = Rng::new(3);
        let (y, _) = spec.forward(&x, Mode::Train, &mut rng).unwrap();
        let expected: Vec<f64> = x.data().iter().map(|&v| relu(v)).collect();
        assert_eq!(y.data(), &expected[..]);
    }

    #[test]
    fn aid_general_eval_scales_by_keep_probability() {
        let scheme = IntervalScheme::new(vec![0.0], vec![0.1, 0.9]).unwrap();
        let spec = ActivationSpec::AidGeneral { scheme };
        let x = m(1, 2, &[2.0, -2.0]);
        let mut rng = Rng::new(0);
        let (y, _) = spec.forward(&x, Mode::Eval, &mut rng).unwrap();
        assert!((y.get(0, 0) - 0.2).abs() < 1e-15);
        assert!((y.get(0, 1) - (-1.8)).abs() < 1e-15);
    }

    #[test]
    fn aid_p1_train_is_relu_always() {
        let spec = ActivationSpec::Aid { p: 1.0 };
        let x = m(1, 2, &[-1.0, 2.0]);
        for seed in 0..50 {
            let mut rng = Rng::new(seed);
            let (y, _) = spec.forward(&x, Mode::Train, &mut rng).unwrap();
            assert_eq!(y.data(), &[0.0, 2.0]);
        }
    }

    #[test]
    fn aid_p0_train_is_negative_relu_always() {
        let spec = ActivationSpec::Aid { p: 0.0 };
        let x = m(1, 2, &[-1.0, 2.0]);
        let mut rng = Rng::new(9);
        let (y, _) = spec.forward(&x, Mode::Train, &mut rng).unwrap();
        assert_eq!(y.data(), &[-1.0, 0.0]);
    }

    #[test]
    fn aid_eval_examples() {
        let mut rng = Rng::new(0);
        let x = m(1, 2, &[-2.0, 4.0]);
        let (y, _) = ActivationSpec::Aid { p: 0.5 }
            .forward(&x, Mode::Eval, &mut rng)
            .unwrap();
        assert_eq!(y.data(), &[-1.0, 2.0]);

        let x = m(1, 2, &[-1.0, 2.0]);
        let (y, _) = ActivationSpec::Aid { p: 0.9 }
            .forward(&x, Mode::Eval, &mut rng)
            .unwrap();
        assert!((y.get(0, 0) - (-0.1)).abs() < 1e-15);
        assert!((y.get(0, 1) - 1.8).abs() < 1e-15);
    }

    #[test]
    fn aid_eval_equals_mod_leaky_relu_bit_for_bit() {
        let mut rng = Rng::new(12);
        let x = Matrix::from_fn(8, 9, |_, _| rng.normal() * 3.0);
        for p in [0.0, 0.1, 0.5, 0.9, 1.0] {
            let (y, _) = ActivationSpec::Aid { p }
                .forward(&x, Mode::Eval, &mut rng)
                .unwrap();
            assert_eq!(y, mod_leaky_relu(&x, p));
        }
    }

    #[test]
    fn mod_leaky_relu_examples() {
        assert_eq!(mod_leaky_relu_scalar(-3.0, 1.0), 0.0);
        assert_eq!(mod_leaky_relu_scalar(3.0, 1.0), 3.0);
        assert_eq!(mod_leaky_relu_scalar(-3.0, 0.0), -3.0);
        assert_eq!(mod_leaky_relu_scalar(3.0, 0.0), 0.0);
        assert!((mod_leaky_relu_scalar(2.0, 0.7) - 1.4).abs() < 1e-15);
        assert!((mod_leaky_relu_scalar(-2.0, 0.7) - (-0.6)).abs() < 1e-15);
    }

    #[test]
    fn mod_leaky_relu_matches_half_abs_formula() {
        let mut rng = Rng::new(2);
        for _ in 0..2000 {
            let x = rng.normal() * 5.0;
            let alpha = rng.uniform();
            let sides = mod_leaky_relu_scalar(x, alpha);
            let formula = 0.5 * x + (alpha - 0.5) * x.abs();
            assert!(
                (sides - formula).abs() <= 1e-15 * formula.abs().max(1.0),
                "x={x} alpha={alpha}: {sides} vs {formula}"
            );
        }
    }

    #[test]
    fn dropout_p0_and_eval_are_identity() {
        let x = m(1, 3, &[-1.0, 0.0, 2.5]);
        let mut rng = Rng::new(4);
        let (y, _) = ActivationSpec::Dropout { p: 0.0 }
            .forward(&x, Mode::Train, &mut rng)
            .unwrap();
        assert_eq!(y, x);
        let (y, _) = ActivationSpec::Dropout { p: 0.7 }
            .forward(&x, Mode::Eval, &mut rng)
            .unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn dropout_p1_is_rejected() {
        let x = m(1, 1, &[1.0]);
        let mut rng = Rng::new(0);
        assert!(ActivationSpec::Dropout { p: 1.0 }
            .forward(&x, Mode::Train, &mut rng)
            .is_err());
    }

    #[test]
    fn dropout_train_scales_kept_values_by_inverse_keep_probability() {
        // Seed 2 gives the mask pattern [keep, drop] for p = 0.5.
        let spec = ActivationSpec::Dropout { p: 0.5 };
        let x = m(1, 2, &[2.0, 4.0]);
        let mut seed = None;
        for s in 0..100 {
            let mut rng = Rng::new(s);
            let (_, cache) = spec.forward(&x, Mode::Train, &mut rng).unwrap();
            let mask = cache.mask().unwrap();
            if mask.get(0, 0) != 0.0 && mask.get(0, 1) == 0.0 {
                seed = Some(s);
                break;
            }
        }
        let seed = seed.expect("some small seed keeps the first element only");
        let mut rng = Rng::new(seed);
        let (y, _) = spec.forward(&x, Mode::Train, &mut rng).unwrap();
        assert_eq!(y.data(), &[4.0, 0.0]);
    }

    #[test]
    fn droprelu_degenerate_probabilities() {
        let x = m(1, 3, &[-2.0, 0.0, 3.0]);
        for mode in [Mode::Train, Mode::Eval] {
            let mut rng = Rng::new(8);
            let (y, _) = ActivationSpec::DropRelu { p: 1.0 }
                .forward(&x, mode, &mut rng)
                .unwrap();
            assert_eq!(y.data(), &[0.0, 0.0, 3.0]);
            let (y, _) = ActivationSpec::DropRelu { p: 0.0 }
                .forward(&x, mode, &mut rng)
                .unwrap();
            assert_eq!(y, x);
        }
    }

    #[test]
    fn droprelu_eval_scales_negative_side_only() {
        let x = m(1, 2, &[-2.0, 2.0]);
        let mut rng = Rng::new(0);
        let (y, _) = ActivationSpec::DropRelu { p: 0.3 }
            .forward(&x, Mode::Eval, &mut rng)
            .unwrap();
        assert!((y.get(0, 0) - (-1.4)).abs() < 1e-15);
        assert_eq!(y.get(0, 1), 2.0);
    }

    #[test]
    fn rrelu_eval_uses_mean_slope() {
        let x = m(1, 1, &[-8.0]);
        let mut rng = Rng::new(0);
        let (y, _) = ActivationSpec::RRelu {
            lower: 0.125,
            upper: 0.333,
        }
        .forward(&x, Mode::Eval, &mut rng)
        .unwrap();
        assert!((y.get(0, 0) - (-1.832)).abs() < 1e-12);
    }

    #[test]
    fn rrelu_train_slopes_stay_in_bounds() {
        let spec = ActivationSpec::RRelu {
            lower: 0.25,
            upper: 0.5,
        };
        let x = Matrix::from_fn(4, 16, |_, c| if c % 2 == 0 { -1.0 } else { 1.0 });
        let mut rng = Rng::new(3);
        let (_, cache) = spec.forward(&x, Mode::Train, &mut rng).unwrap();
        let mask = cache.mask().unwrap();
        for (v, s) in x.data().iter().zip(mask.data()) {
            if *v < 0.0 {
                assert!((0.25..=0.5).contains(s));
            } else {
                assert_eq!(*s, 1.0);
            }
        }
    }

    #[test]
    fn crelu_example_and_width() {
        let x = m(1, 2, &[-1.0, 2.0]);
        let mut rng = Rng::new(0);
        let (y, _) = ActivationSpec::CRelu
            .forward(&x, Mode::Train, &mut rng)
            .unwrap();
        assert_eq!(y.data(), &[0.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn fourier_example() {
        let x = m(1, 1, &[0.0]);
        let mut rng = Rng::new(0);
        let (y, _) = ActivationSpec::Fourier
            .forward(&x, Mode::Eval, &mut rng)
            .unwrap();
        assert_eq!(y.data(), &[0.0, 1.0]);
    }

    #[test]
    fn mask_consistency_for_every_elementwise_kind_and_seed() {
        let mut src = Rng::new(99);
        let x = Matrix::from_fn(5, 7, |_, _| src.normal() * 2.0);
        for spec in all_kinds() {
            for seed in [0u64, 1, 17, 255] {
                for mode in [Mode::Train, Mode::Eval] {
                    let mut rng = Rng::new(seed);
                    let (y, cache) = spec.forward(&x, mode, &mut rng).unwrap();
                    let mask = cache.mask().expect("elementwise kind");
                    let replay = x.hadamard(mask).unwrap();
                    assert_eq!(y, replay, "kind {spec:?} mode {mode:?}");
                }
            }
        }
    }

    #[test]
    fn eval_mode_is_pure_and_consumes_no_randomness() {
        let mut src = Rng::new(5);
        let x = Matrix::from_fn(3, 4, |_, _| src.normal());
        let mut kinds = all_kinds();
        kinds.push(ActivationSpec::CRelu);
        kinds.push(ActivationSpec::Fourier);
        for spec in kinds {
            let mut rng = Rng::new(1);
            let before = rng.draw_count();
            let (y1, _) = spec.forward(&x, Mode::Eval, &mut rng).unwrap();
            assert_eq!(rng.draw_count(), before, "kind {spec:?} drew from the rng");
            let (y2, _) = spec.forward(&x, Mode::Eval, &mut rng).unwrap();
            assert_eq!(y1, y2);
        }
    }

    #[test]
    fn backward_identity_leaves_gradient_unchanged() {
        let x = m(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let mut rng = Rng::new(0);
        let (_, cache) = ActivationSpec::Identity
            .forward(&x, Mode::Train, &mut rng)
            .unwrap();
        let g = m(2, 2, &[0.1, 0.2, 0.3, 0.4]);
        let gx = ActivationSpec::Identity.backward(&g, &cache).unwrap();
        assert_eq!(gx, g);
    }

    #[test]
    fn backward_shape_mismatch_is_an_error() {
        let x = m(2, 2, &[1.0, -2.0, 0.5, 3.0]);
        let mut rng = Rng::new(0);
        let (_, cache) = ActivationSpec::Relu
            .forward(&x, Mode::Train, &mut rng)
            .unwrap();
        let g = m(1, 2, &[0.1, 0.2]);
        assert!(ActivationSpec::Relu.backward(&g, &cache).is_err());
    }

    #[test]
    fn fourier_backward_sin_branch_multiplies_by_cos() {
        let x = m(1, 3, &[0.3, -1.2, 2.0]);
        let mut rng = Rng::new(0);
        let (_, cache) = ActivationSpec::Fourier
            .forward(&x, Mode::Train, &mut rng)
            .unwrap();
        // Upstream gradient only on the sin half.
        let g = m(1, 6, &[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let gx = ActivationSpec::Fourier.backward(&g, &cache).unwrap();
        for c in 0..3 {
            assert!((gx.get(0, c) - x.get(0, c).cos()).abs() < 1e-15);
        }
    }

    fn dot_all(a: &Matrix, b: &Matrix) -> f64 {
        a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
    }

    /// Central finite differences of the frozen (replayed) map.
    fn frozen_fd_check(spec: &ActivationSpec, mode: Mode) {
        let mut src = Rng::new(321);
        // Inputs bounded away from interval boundaries by at least 1e-3.
        let x = Matrix::from_fn(3, 5, |_, _| loop {
            let v = src.normal() * 2.0;
            let clear = match spec {
                ActivationSpec::AidGeneral { scheme } => scheme
                    .boundaries()
                    .iter()
                    .all(|b| (v - b).abs() > 1e-3),
                _ => v.abs() > 1e-3,
            };
            if clear {
                break v;
            }
        });
        let mut rng = Rng::new(7);
        let (y0, cache) = spec.forward(&x, mode, &mut rng).unwrap();
        // Scalar objective: a fixed random linear functional of the output.
        let weights = Matrix::from_fn(y0.rows(), y0.cols(), |_, _| src.normal());
        let objective = |y: &Matrix| dot_all(y, &weights);
        let gx = spec.backward(&weights, &cache).unwrap();
        let h = 1e-5;
        for r in 0..x.rows() {
            for c in 0..x.cols() {
                let mut xp = x.clone();
                xp.set(r, c, x.get(r, c) + h);
                let mut xm = x.clone();
                xm.set(r, c, x.get(r, c) - h);
                let fp = objective(&spec.replay(&xp, &cache).unwrap());
                let fm = objective(&spec.replay(&xm, &cache).unwrap());
                let fd = (fp - fm) / (2.0 * h);
                let an = gx.get(r, c);
                assert!(
                    (fd - an).abs() <= 1e-5 * an.abs().max(1.0),
                    "kind {spec:?} mode {mode:?} at ({r},{c}): fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn frozen_mask_backward_matches_finite_differences_for_all_kinds() {
        let mut kinds = all_kinds();
        kinds.push(ActivationSpec::CRelu);
        kinds.push(ActivationSpec::Fourier);
        for spec in kinds {
            frozen_fd_check(&spec, Mode::Train);
            frozen_fd_check(&spec, Mode::Eval);
        }
    }

    #[test]
    fn interval_scheme_rejects_bad_inputs() {
        assert!(IntervalScheme::new(vec![0.0, 0.0], vec![0.1, 0.2, 0.3]).is_err());
        assert!(IntervalScheme::new(vec![1.0, 0.0], vec![0.1, 0.2, 0.3]).is_err());
        assert!(IntervalScheme::new(vec![0.0], vec![0.1]).is_err());
        assert!(IntervalScheme::new(vec![0.0], vec![0.1, 1.2]).is_err());
    }

    #[test]
    fn zero_belongs_to_the_non_negative_interval() {
        let scheme = IntervalScheme::new(vec![0.0], vec![1.0, 0.0]).unwrap();
        assert_eq!(scheme.interval_of(0.0), 1);
        assert_eq!(scheme.interval_of(-0.0), 1);
        assert_eq!(scheme.interval_of(-1e-300), 0);
    }
}
