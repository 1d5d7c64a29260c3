//! SGD and Adam optimizers, L2 / L2-Init regularization, and the
//! between-task interventions Shrink & Perturb and dormant-unit recycling.
//!
//! Regularizers are applied as gradient additions rather than loss terms so
//! loss logs stay comparable across methods.

use crate::error::{Error, Result};
use crate::nn::{LayerGrads, Network};
use crate::numkit::{Matrix, Rng};

/// Optimizer family and hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    /// Adam with the usual defaults (beta1 = 0.9, beta2 = 0.999, eps = 1e-8).
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RegularizerSpec {
    None,
    L2 { lambda: f64 },
    L2Init { lambda: f64 },
}

impl RegularizerSpec {
    pub fn validate(&self) -> Result<()> {
        let lambda = match self {
            RegularizerSpec::None => return Ok(()),
            RegularizerSpec::L2 { lambda } | RegularizerSpec::L2Init { lambda } => *lambda,
        };
        if lambda >= 0.0 {
            Ok(())
        } else {
            Err(Error::invalid("RegularizerSpec", "lambda must be >= 0"))
        }
    }

    /// Gradient contribution at parameter value `theta` with initial value
    /// `theta0`.
    #[inline]
    pub fn grad(&self, theta: f64, theta0: f64) -> f64 {
        match self {
            RegularizerSpec::None => 0.0,
            RegularizerSpec::L2 { lambda } => lambda * theta,
            RegularizerSpec::L2Init { lambda } => lambda * (theta - theta0),
        }
    }
}

/// First/second moment buffers for one parameter block.
#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Optimizer state tied to a network's parameter shapes.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    step: u64,
    // Two moment blocks per layer: weights then biases.
    moments: Vec<Moments>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, net: &Network) -> Self {
        let mut moments = Vec::new();
        for layer in net.layers() {
            moments.push(Moments {
                m: vec![0.0; layer.w.data().len()],
                v: vec![0.0; layer.w.data().len()],
            });
            moments.push(Moments {
                m: vec![0.0; layer.b.len()],
                v: vec![0.0; layer.b.len()],
            });
        }
        OptimizerState {
            kind,
            step: 0,
            moments,
        }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Clear moments and the step counter (used at task boundaries when the
    /// run is configured to reset the optimizer).
    pub fn reset(&mut self) {
        self.step = 0;
        for m in &mut self.moments {
            m.m.iter_mut().for_each(|v| *v = 0.0);
            m.v.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// Apply one update to every parameter of the network.
    pub fn step(
        &mut self,
        net: &mut Network,
        grads: &[LayerGrads],
        reg: &RegularizerSpec,
    ) -> Result<()> {
        reg.validate()?;
        if grads.len() != net.layers().len() {
            return Err(Error::dims(
                "OptimizerState::step",
                format!("{} layer grads", net.layers().len()),
                format!("{}", grads.len()),
            ));
        }
        self.step += 1;
        let t = self.step;
        let kind = self.kind;
        for (i, (layer, g)) in net.layers_mut().iter_mut().zip(grads).enumerate() {
            if g.dw.shape() != layer.w.shape() || g.db.len() != layer.b.len() {
                return Err(Error::dims(
                    "OptimizerState::step",
                    "gradient shapes matching layer shapes".to_string(),
                    "mismatched gradient block".to_string(),
                ));
            }
            let w0: Vec<f64> = layer.initial_w().data().to_vec();
            let mw = &mut self.moments[2 * i];
            update_slice(
                kind,
                t,
                layer.w.data_mut(),
                g.dw.data(),
                &w0,
                reg,
                &mut mw.m,
                &mut mw.v,
            );
            let b0: Vec<f64> = layer.initial_b().to_vec();
            let mb = &mut self.moments[2 * i + 1];
            update_slice(
                kind,
                t,
                &mut layer.b,
                &g.db,
                &b0,
                reg,
                &mut mb.m,
                &mut mb.v,
            );
            layer.w.ensure_finite("OptimizerState::step")?;
            if layer.b.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    op: "OptimizerState::step",
                });
            }
        }
        Ok(())
    }
}

/// One optimizer update over a flat parameter block. Pure: the update is a
/// function of its arguments only.
#[allow(clippy::too_many_arguments)]
pub fn update_slice(
    kind: OptimizerKind,
    t: u64,
    params: &mut [f64],
    grads: &[f64],
    initial: &[f64],
    reg: &RegularizerSpec,
    m: &mut [f64],
    v: &mut [f64],
) {
    match kind {
        OptimizerKind::Sgd { lr } => {
            for i in 0..params.len() {
                let g = grads[i] + reg.grad(params[i], initial[i]);
                params[i] -= lr * g;
            }
        }
        OptimizerKind::Adam {
            lr,
            beta1,
            beta2,
            eps,
        } => {
            let bc1 = 1.0 - beta1.powi(t as i32);
            let bc2 = 1.0 - beta2.powi(t as i32);
            for i in 0..params.len() {
                let g = grads[i] + reg.grad(params[i], initial[i]);
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

/// Blend every parameter toward its stored initial value:
/// `theta <- (1 - lambda) * theta + lambda * theta0`.
pub fn shrink_perturb(net: &mut Network, lambda: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid("shrink_perturb", "lambda must lie in [0, 1]"));
    }
    for layer in net.layers_mut() {
        let w0: Vec<f64> = layer.initial_w().data().to_vec();
        for (w, w0) in layer.w.data_mut().iter_mut().zip(&w0) {
            *w = (1.0 - lambda) * *w + lambda * w0;
        }
        let b0: Vec<f64> = layer.initial_b().to_vec();
        for (b, b0) in layer.b.iter_mut().zip(&b0) {
            *b = (1.0 - lambda) * *b + lambda * b0;
        }
    }
    Ok(())
}

/// Recycle dormant units: any hidden unit whose normalized mean absolute
/// post-activation score on `batch` is `<= tau` gets its incoming weights
/// re-initialized (He), its bias zeroed, and its outgoing weights zeroed.
/// A layer whose mean activation is identically zero has no usable scores
/// and is treated as fully dormant.
///
/// For width-doubling activations the two output columns of a unit are
/// folded together before scoring.
///
/// Returns the number of units reset per hidden layer.
pub fn redo_reset(
    net: &mut Network,
    batch: &Matrix,
    tau: f64,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    if tau < 0.0 {
        return Err(Error::invalid("redo_reset", "tau must be >= 0"));
    }
    let (_, trace) = net.forward(batch, crate::activations::Mode::Eval, rng)?;
    let factor = net.activation().width_factor();
    let num_hidden = net.num_hidden();
    let mut dormant_per_layer: Vec<Vec<usize>> = Vec::with_capacity(num_hidden);
    {
        let postacts = trace.hidden_postactivations();
        for post in postacts.iter().take(num_hidden) {
            let units = post.cols() / factor;
            let rows = post.rows() as f64;
            let mut mean_abs = vec![0.0; units];
            for r in 0..post.rows() {
                let row = post.row(r);
                for (u, acc) in mean_abs.iter_mut().enumerate() {
                    let mut s = row[u].abs();
                    if factor == 2 {
                        s += row[u + units].abs();
                    }
                    *acc += s;
                }
            }
            for acc in &mut mean_abs {
                *acc /= rows;
            }
            let layer_mean: f64 = mean_abs.iter().sum::<f64>() / units as f64;
            let dormant: Vec<usize> = if layer_mean == 0.0 {
                (0..units).collect()
            } else {
                mean_abs
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| **s / layer_mean <= tau)
                    .map(|(u, _)| u)
                    .collect()
            };
            dormant_per_layer.push(dormant);
        }
    }

    let mut counts = vec![0usize; num_hidden];
    for (l, dormant) in dormant_per_layer.iter().enumerate() {
        counts[l] = dormant.len();
        for &u in dormant {
            let units = net.layers()[l].out_dim();
            net.layers_mut()[l].reinit_unit(u, rng);
            net.layers_mut()[l + 1].zero_input_column(u);
            if factor == 2 {
                net.layers_mut()[l + 1].zero_input_column(u + units);
            }
        }
    }
    Ok(counts)
}
