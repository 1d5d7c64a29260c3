//! Linear layers, He initialization, network assembly, forward/backward
//! passes, and losses.
//!
//! Reverse-mode differentiation is realized as per-layer forward/backward
//! pairs with explicit caches rather than a general tape: the architecture
//! is a fixed MLP chain and this keeps every gradient auditable.

use crate::activations::{ActivationSpec, MaskCache, Mode};
use crate::error::{Error, Result};
use crate::numkit::{Matrix, Rng};
use std::io::{Read, Write};
use std::path::Path;

/// Fully connected layer `y = x W^T + b` with `W` of shape `out x in`.
///
/// `w0`/`b0` snapshot the values at construction and are never mutated
/// afterwards; they anchor L2-Init regularization and Shrink & Perturb.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub w: Matrix,
    pub b: Vec<f64>,
    w0: Matrix,
    b0: Vec<f64>,
}

impl LinearLayer {
    /// He initialization: weights from `Normal(0, 2 / fan_in)`, biases zero.
    pub fn he_init(out_dim: usize, in_dim: usize, rng: &mut Rng) -> Result<Self> {
        if out_dim == 0 || in_dim == 0 {
            return Err(Error::invalid("he_init", "layer dimensions must be positive"));
        }
        let std = (2.0 / in_dim as f64).sqrt();
        let w = Matrix::from_fn(out_dim, in_dim, |_, _| rng.normal() * std);
        let b = vec![0.0; out_dim];
        Ok(LinearLayer {
            w0: w.clone(),
            b0: b.clone(),
            w,
            b,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn initial_w(&self) -> &Matrix {
        &self.w0
    }

    pub fn initial_b(&self) -> &[f64] {
        &self.b0
    }

    /// `x (batch x in) -> batch x out`.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.in_dim() {
            return Err(Error::dims(
                "LinearLayer::forward",
                format!("{} input columns", self.in_dim()),
                format!("{}", x.cols()),
            ));
        }
        let mut y = x.matmul_nt(&self.w)?;
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(&self.b) {
                *v += b;
            }
        }
        y.ensure_finite("LinearLayer::forward")?;
        Ok(y)
    }

    /// Re-initialize the incoming weights of one unit (He) and zero its bias.
    pub(crate) fn reinit_unit(&mut self, unit: usize, rng: &mut Rng) {
        let std = (2.0 / self.in_dim() as f64).sqrt();
        for c in 0..self.in_dim() {
            self.w.set(unit, c, rng.normal() * std);
        }
        self.b[unit] = 0.0;
    }

    /// Zero the weights reading from input column `col`.
    pub(crate) fn zero_input_column(&mut self, col: usize) {
        for r in 0..self.out_dim() {
            self.w.set(r, col, 0.0);
        }
    }
}

/// Geometry plus activation choice for a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub input_dim: usize,
    /// Hidden widths as configured; the builder rescales these for
    /// width-doubling activations to keep the parameter count comparable.
    pub hidden_widths: Vec<usize>,
    pub output_dim: usize,
    pub activation: ActivationSpec,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_widths.is_empty() {
            return Err(Error::invalid("NetworkConfig", "at least one hidden layer"));
        }
        if self.input_dim == 0
            || self.output_dim == 0
            || self.hidden_widths.iter().any(|w| *w == 0)
        {
            return Err(Error::invalid("NetworkConfig", "widths must be positive"));
        }
        self.activation.validate()
    }
}

/// Per-layer snapshot of one forward pass.
///
/// `input` is what entered the linear layer, so hidden post-activations are
/// the `input` of the following layer and the penultimate feature matrix is
/// the `input` of the final layer. `preact`/`cache` are present for hidden
/// layers only.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub input: Matrix,
    pub preact: Option<Matrix>,
    pub cache: Option<MaskCache>,
}

/// Full forward trace: one [`LayerTrace`] per linear layer.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
}

impl ForwardTrace {
    /// Pre-activation matrices of the hidden layers.
    pub fn preactivations(&self) -> Vec<&Matrix> {
        self.layers
            .iter()
            .filter_map(|l| l.preact.as_ref())
            .collect()
    }

    /// Post-activation matrices of the hidden layers.
    pub fn hidden_postactivations(&self) -> Vec<&Matrix> {
        self.layers[1..].iter().map(|l| &l.input).collect()
    }

    /// Feature matrix entering the final (logits) layer.
    pub fn features(&self) -> &Matrix {
        &self.layers.last().expect("nonempty trace").input
    }
}

/// Parameter gradients for one linear layer.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub dw: Matrix,
    pub db: Vec<f64>,
}

/// An MLP: hidden linear layers each followed by the configured activation,
/// then a bare linear logits layer.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<LinearLayer>,
    activation: ActivationSpec,
    config: NetworkConfig,
}

/// Total parameter count of an MLP whose hidden linear layers have output
/// widths `hidden`, with an activation that multiplies hidden widths by
/// `factor`.
fn param_count_for(input: usize, hidden: &[usize], factor: usize, output: usize) -> usize {
    let mut count = 0;
    let mut fan_in = input;
    for &h in hidden {
        count += h * fan_in + h;
        fan_in = h * factor;
    }
    count + output * fan_in + output
}

/// Linear output widths for the hidden layers. For width-doubling
/// activations the configured widths are rescaled by a common factor chosen
/// so the total parameter count lands as close as possible to the
/// single-width reference network.
pub fn adjusted_hidden_dims(cfg: &NetworkConfig) -> Vec<usize> {
    let factor = cfg.activation.width_factor();
    if factor == 1 {
        return cfg.hidden_widths.clone();
    }
    let target = param_count_for(cfg.input_dim, &cfg.hidden_widths, 1, cfg.output_dim) as i64;
    let mut best: Option<(i64, Vec<usize>)> = None;
    for step in 1..=2000usize {
        let s = step as f64 / 2000.0;
        let dims: Vec<usize> = cfg
            .hidden_widths
            .iter()
            .map(|&w| ((w as f64 * s).round() as usize).max(1))
            .collect();
        let count = param_count_for(cfg.input_dim, &dims, factor, cfg.output_dim) as i64;
        let gap = (count - target).abs();
        if best.as_ref().map_or(true, |(g, _)| gap < *g) {
            best = Some((gap, dims));
        }
    }
    best.expect("non-empty scan").1
}

impl Network {
    pub fn new(cfg: &NetworkConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::new(cfg.seed);
        let factor = cfg.activation.width_factor();
        let hidden = adjusted_hidden_dims(cfg);
        let mut layers = Vec::with_capacity(hidden.len() + 1);
        let mut fan_in = cfg.input_dim;
        for &h in &hidden {
            layers.push(LinearLayer::he_init(h, fan_in, &mut rng)?);
            fan_in = h * factor;
        }
        layers.push(LinearLayer::he_init(cfg.output_dim, fan_in, &mut rng)?);
        Ok(Network {
            layers,
            activation: cfg.activation.clone(),
            config: cfg.clone(),
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn activation(&self) -> &ActivationSpec {
        &self.activation
    }

    pub fn layers(&self) -> &[LinearLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LinearLayer] {
        &mut self.layers
    }

    pub fn num_hidden(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.rows() * l.w.cols() + l.b.len())
            .sum()
    }

    /// Forward pass; the trace is populated in both train and eval mode.
    pub fn forward(&self, x: &Matrix, mode: Mode, rng: &mut Rng) -> Result<(Matrix, ForwardTrace)> {
        if x.cols() != self.config.input_dim {
            return Err(Error::dims(
                "Network::forward",
                format!("{} input columns", self.config.input_dim),
                format!("{}", x.cols()),
            ));
        }
        let mut traces = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers[..self.layers.len() - 1] {
            let pre = layer.forward(&cur)?;
            let (post, cache) = self.activation.forward(&pre, mode, rng)?;
            traces.push(LayerTrace {
                input: cur,
                preact: Some(pre),
                cache: Some(cache),
            });
            cur = post;
        }
        let logits = self.layers[self.layers.len() - 1].forward(&cur)?;
        traces.push(LayerTrace {
            input: cur,
            preact: None,
            cache: None,
        });
        Ok((logits, ForwardTrace { layers: traces }))
    }

    /// Replay a stored trace against the current parameters: every sampled
    /// mask is reused, so the computation is the exact sampled linear map
    /// the trace came from. Used by gradient checks.
    pub fn forward_frozen(&self, x: &Matrix, trace: &ForwardTrace) -> Result<Matrix> {
        self.check_trace(trace)?;
        let mut cur = x.clone();
        for (layer, t) in self.layers[..self.layers.len() - 1].iter().zip(&trace.layers) {
            let pre = layer.forward(&cur)?;
            let cache = t.cache.as_ref().expect("hidden layer cache");
            cur = self.activation.replay(&pre, cache)?;
        }
        self.layers[self.layers.len() - 1].forward(&cur)
    }

    fn check_trace(&self, trace: &ForwardTrace) -> Result<()> {
        if trace.layers.len() != self.layers.len() {
            return Err(Error::invalid(
                "Network::backward",
                format!(
                    "stale trace: {} layer snapshots for {} layers",
                    trace.layers.len(),
                    self.layers.len()
                ),
            ));
        }
        for (layer, t) in self.layers.iter().zip(&trace.layers) {
            if t.input.cols() != layer.in_dim() {
                return Err(Error::invalid(
                    "Network::backward",
                    format!(
                        "stale trace: input width {} does not match layer fan-in {}",
                        t.input.cols(),
                        layer.in_dim()
                    ),
                ));
            }
        }
        Ok(())
    }

    /// Exact gradients of the sampled (mask-frozen) computation.
    pub fn backward(&self, trace: &ForwardTrace, grad_logits: &Matrix) -> Result<Vec<LayerGrads>> {
        self.check_trace(trace)?;
        let n = self.layers.len();
        let mut grads: Vec<Option<LayerGrads>> = (0..n).map(|_| None).collect();
        let mut g = grad_logits.clone();
        for l in (0..n).rev() {
            let t = &trace.layers[l];
            let dw = g.matmul_tn(&t.input)?;
            let mut db = vec![0.0; g.cols()];
            for r in 0..g.rows() {
                for (acc, v) in db.iter_mut().zip(g.row(r)) {
                    *acc += v;
                }
            }
            grads[l] = Some(LayerGrads { dw, db });
            if l > 0 {
                let gx = g.matmul(&self.layers[l].w)?;
                let cache = trace.layers[l - 1]
                    .cache
                    .as_ref()
                    .ok_or_else(|| Error::invalid("Network::backward", "stale trace: missing cache"))?;
                g = self.activation.backward(&gx, cache)?;
            }
        }
        Ok(grads.into_iter().map(|g| g.expect("filled")).collect())
    }

    // ---- checkpoint -----------------------------------------------------
    //
    // Versioned little-endian binary dump; f64 bits are written verbatim so
    // the round-trip is lossless.

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        write_u64(&mut buf, self.config.seed);
        write_u64(&mut buf, self.config.input_dim as u64);
        write_u64(&mut buf, self.config.output_dim as u64);
        write_u64(&mut buf, self.config.hidden_widths.len() as u64);
        for &w in &self.config.hidden_widths {
            write_u64(&mut buf, w as u64);
        }
        write_activation(&mut buf, &self.activation);
        write_u64(&mut buf, self.layers.len() as u64);
        for layer in &self.layers {
            write_u64(&mut buf, layer.out_dim() as u64);
            write_u64(&mut buf, layer.in_dim() as u64);
            write_floats(&mut buf, layer.w.data());
            write_floats(&mut buf, &layer.b);
            write_floats(&mut buf, layer.w0.data());
            write_floats(&mut buf, &layer.b0);
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Network> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        let mut r = Cursor {
            bytes: &bytes,
            pos: 0,
            path,
        };
        let magic = r.take(CHECKPOINT_MAGIC.len())?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::invalid(
                "Network::load",
                format!("{} is not a network checkpoint", path.display()),
            ));
        }
        let seed = r.u64()?;
        let input_dim = r.u64()? as usize;
        let output_dim = r.u64()? as usize;
        let n_widths = r.u64()? as usize;
        let mut hidden_widths = Vec::with_capacity(n_widths);
        for _ in 0..n_widths {
            hidden_widths.push(r.u64()? as usize);
        }
        let activation = read_activation(&mut r)?;
        let n_layers = r.u64()? as usize;
        let mut layers = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let out = r.u64()? as usize;
            let inp = r.u64()? as usize;
            let w = Matrix::from_vec(out, inp, r.floats(out * inp)?)?;
            let b = r.floats(out)?;
            let w0 = Matrix::from_vec(out, inp, r.floats(out * inp)?)?;
            let b0 = r.floats(out)?;
            layers.push(LinearLayer { w, b, w0, b0 });
        }
        let config = NetworkConfig {
            input_dim,
            hidden_widths,
            output_dim,
            activation: activation.clone(),
            seed,
        };
        config.validate()?;
        Ok(Network {
            layers,
            activation,
            config,
        })
    }
}

const CHECKPOINT_MAGIC: &[u8] = b"AIDNETV1";

fn write_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn write_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn write_floats(buf: &mut Vec<u8>, vs: &[f64]) {
    for &v in vs {
        write_f64(buf, v);
    }
}

fn write_activation(buf: &mut Vec<u8>, spec: &ActivationSpec) {
    match spec {
        ActivationSpec::Identity => buf.push(0),
        ActivationSpec::Relu => buf.push(1),
        ActivationSpec::NegRelu => buf.push(2),
        ActivationSpec::ModLeakyRelu { alpha } => {
            buf.push(3);
            write_f64(buf, *alpha);
        }
        ActivationSpec::Aid { p } => {
            buf.push(4);
            write_f64(buf, *p);
        }
        ActivationSpec::AidGeneral { scheme } => {
            buf.push(5);
            write_u64(buf, scheme.boundaries().len() as u64);
            write_floats(buf, scheme.boundaries());
            write_floats(buf, scheme.probs());
        }
        ActivationSpec::AidPq { p_pos, q_neg } => {
            buf.push(6);
            write_f64(buf, *p_pos);
            write_f64(buf, *q_neg);
        }
        ActivationSpec::Dropout { p } => {
            buf.push(7);
            write_f64(buf, *p);
        }
        ActivationSpec::DropRelu { p } => {
            buf.push(8);
            write_f64(buf, *p);
        }
        ActivationSpec::RRelu { lower, upper } => {
            buf.push(9);
            write_f64(buf, *lower);
            write_f64(buf, *upper);
        }
        ActivationSpec::CRelu => buf.push(10),
        ActivationSpec::Fourier => buf.push(11),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Truncated {
                path: self.path.display().to_string(),
                needed: self.pos + n,
                found: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.f64()?);
        }
        Ok(out)
    }
}

fn read_activation(r: &mut Cursor) -> Result<ActivationSpec> {
    use crate::activations::IntervalScheme;
    Ok(match r.u8()? {
        0 => ActivationSpec::Identity,
        1 => ActivationSpec::Relu,
        2 => ActivationSpec::NegRelu,
        3 => ActivationSpec::ModLeakyRelu { alpha: r.f64()? },
        4 => ActivationSpec::Aid { p: r.f64()? },
        5 => {
            let n = r.u64()? as usize;
            let boundaries = r.floats(n)?;
            let probs = r.floats(n + 1)?;
            ActivationSpec::AidGeneral {
                scheme: IntervalScheme::new(boundaries, probs)?,
            }
        }
        6 => ActivationSpec::AidPq {
            p_pos: r.f64()?,
            q_neg: r.f64()?,
        },
        7 => ActivationSpec::Dropout { p: r.f64()? },
        8 => ActivationSpec::DropRelu { p: r.f64()? },
        9 => ActivationSpec::RRelu {
            lower: r.f64()?,
            upper: r.f64()?,
        },
        10 => ActivationSpec::CRelu,
        11 => ActivationSpec::Fourier,
        tag => {
            return Err(Error::invalid(
                "Network::load",
                format!("unknown activation tag {tag}"),
            ))
        }
    })
}

// ---- losses ---------------------------------------------------------------

/// Mean softmax cross-entropy over the batch plus the analytic gradient
/// w.r.t. the logits.
pub fn softmax_cross_entropy(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    if logits.rows() != labels.len() {
        return Err(Error::dims(
            "softmax_cross_entropy",
            format!("{} labels", logits.rows()),
            format!("{}", labels.len()),
        ));
    }
    let k = logits.cols();
    let m = logits.rows();
    let mut grad = Matrix::zeros(m, k);
    let mut loss = 0.0;
    for r in 0..m {
        let label = labels[r];
        if label >= k {
            return Err(Error::invalid(
                "softmax_cross_entropy",
                format!("label {label} out of range for {k} classes"),
            ));
        }
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for &v in row {
            sum += (v - max).exp();
        }
        loss += sum.ln() + max - row[label];
        for c in 0..k {
            let p = (row[c] - max).exp() / sum;
            let target = if c == label { 1.0 } else { 0.0 };
            grad.set(r, c, (p - target) / m as f64);
        }
    }
    let loss = loss / m as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            op: "softmax_cross_entropy",
        });
    }
    Ok((loss, grad))
}

/// Mean (over the batch) squared L2 error plus the analytic gradient.
pub fn mse(pred: &Matrix, target: &Matrix) -> Result<(f64, Matrix)> {
    if pred.shape() != target.shape() {
        return Err(Error::dims(
            "mse",
            format!("{:?}", target.shape()),
            format!("{:?}", pred.shape()),
        ));
    }
    let m = pred.rows() as f64;
    let diff = pred.sub(target)?;
    let loss = diff.frobenius_norm_sq() / m;
    let grad = diff.scale(2.0 / m)?;
    Ok((loss, grad))
}
