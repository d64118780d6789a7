//! Dense layers and the encoder / selection / decoder network, with
//! hand-written backward passes.
//!
//! Data matrices are feature-major: a batch of `n` samples with `d`
//! features is a `d x n` matrix, one sample per column. A layer maps
//! `in x n` to `out x n` as `act(W h + b)`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DualError, Result};
use crate::linalg::{frobenius_sq, matmul, Matrix};

/// Smoothing constant for the row-sparsity penalty.
pub const L21_SMOOTHING: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// `out x in`
    pub weight: Matrix,
    pub bias: Option<Vec<f64>>,
    pub activation: Activation,
}

/// What a layer remembers from its forward pass.
#[derive(Clone, Debug)]
struct LayerCache {
    input: Matrix,
    pre: Matrix,
}

impl DenseLayer {
    pub fn new(weight: Matrix, bias: Option<Vec<f64>>, activation: Activation) -> Self {
        if let Some(b) = &bias {
            assert_eq!(b.len(), weight.rows(), "bias length must equal output width");
        }
        DenseLayer {
            weight,
            bias,
            activation,
        }
    }

    pub fn in_width(&self) -> usize {
        self.weight.cols()
    }

    pub fn out_width(&self) -> usize {
        self.weight.rows()
    }

    fn forward(&self, input: &Matrix) -> Result<(Matrix, Matrix)> {
        if input.rows() != self.in_width() {
            return Err(DualError::contract(format!(
                "layer expects {} input rows, got {}",
                self.in_width(),
                input.rows()
            )));
        }
        let mut pre = matmul(&self.weight, input)?;
        if let Some(b) = &self.bias {
            for (i, &bi) in b.iter().enumerate() {
                pre.row_mut(i).iter_mut().for_each(|v| *v += bi);
            }
        }
        let out = pre.map(|v| self.activation.apply(v));
        Ok((pre, out))
    }

    fn backward(&self, cache: &LayerCache, d_out: &Matrix) -> Result<(LayerGrad, Matrix)> {
        let d_pre = d_out.zip_with(&cache.pre, |g, z| g * self.activation.derivative(z))?;
        let weight = matmul(&d_pre, &cache.input.transpose())?;
        let bias = self.bias.as_ref().map(|_| d_pre.row_sums());
        let d_input = matmul(&self.weight.transpose(), &d_pre)?;
        Ok((LayerGrad { weight, bias }, d_input))
    }
}

fn run_layers(layers: &[DenseLayer], input: &Matrix) -> Result<(Vec<LayerCache>, Matrix)> {
    let mut caches = Vec::with_capacity(layers.len());
    let mut h = input.clone();
    for layer in layers {
        let (pre, out) = layer.forward(&h)?;
        caches.push(LayerCache { input: h, pre });
        h = out;
    }
    Ok((caches, h))
}

fn backprop_layers(
    layers: &[DenseLayer],
    caches: &[LayerCache],
    d_out: Matrix,
) -> Result<(Vec<LayerGrad>, Matrix)> {
    let mut grads = Vec::with_capacity(layers.len());
    let mut d = d_out;
    for (layer, cache) in layers.iter().zip(caches).rev() {
        let (g, d_in) = layer.backward(cache, &d)?;
        grads.push(g);
        d = d_in;
    }
    grads.reverse();
    Ok((grads, d))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrad {
    pub weight: Matrix,
    pub bias: Option<Vec<f64>>,
}

/// Gradients with exactly the shapes of the network parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub encoder: Vec<LayerGrad>,
    pub q: Matrix,
    pub p: Matrix,
    pub decoder: Vec<LayerGrad>,
}

impl GradientSet {
    /// Flat views in the same order as [`DualNetwork::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        push_grad_slices(&self.encoder, &mut out);
        out.push(self.q.as_slice());
        out.push(self.p.as_slice());
        push_grad_slices(&self.decoder, &mut out);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

fn push_grad_slices<'a>(layers: &'a [LayerGrad], out: &mut Vec<&'a [f64]>) {
    for g in layers {
        out.push(g.weight.as_slice());
        if let Some(b) = &g.bias {
            out.push(b);
        }
    }
}

/// Sizes needed to build a network.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkDims {
    pub input_dim: usize,
    /// Encoder hidden widths, input side first. The decoder mirrors them.
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    /// Activation of the last encoder layer.
    pub latent_activation: Activation,
    pub n_samples: usize,
    pub n_clusters: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualNetwork {
    pub encoder: Vec<DenseLayer>,
    /// Self-expression coefficients, `n x n`, zero diagonal.
    pub q: Matrix,
    /// Centroid coefficients, `n x K`.
    pub p: Matrix,
    pub decoder: Vec<DenseLayer>,
}

/// Glorot-uniform weights, zero biases, zero selection layers.
pub fn init_params(dims: &NetworkDims, seed: u64) -> Result<DualNetwork> {
    if dims.input_dim == 0 || dims.latent_dim == 0 || dims.hidden.contains(&0) {
        return Err(DualError::contract("layer widths must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut enc_widths = vec![dims.input_dim];
    enc_widths.extend(&dims.hidden);
    enc_widths.push(dims.latent_dim);
    let dec_widths: Vec<usize> = enc_widths.iter().rev().copied().collect();

    let encoder = build_stack(&enc_widths, dims.latent_activation, &mut rng);
    let decoder = build_stack(&dec_widths, Activation::Identity, &mut rng);

    Ok(DualNetwork {
        encoder,
        q: Matrix::zeros(dims.n_samples, dims.n_samples),
        p: Matrix::zeros(dims.n_samples, dims.n_clusters),
        decoder,
    })
}

fn build_stack(widths: &[usize], last: Activation, rng: &mut ChaCha8Rng) -> Vec<DenseLayer> {
    let n_layers = widths.len() - 1;
    (0..n_layers)
        .map(|l| {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let bound = glorot_bound(fan_in, fan_out);
            let weight = Matrix::from_fn(fan_out, fan_in, |_, _| rng.random_range(-bound..bound));
            let activation = if l + 1 == n_layers {
                last
            } else {
                Activation::Relu
            };
            DenseLayer::new(weight, Some(vec![0.0; fan_out]), activation)
        })
        .collect()
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Penalty weights of the joint objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// `||X - G||_F^2`
    pub reconstruction: f64,
    /// `||Phi - Phi Q||_F^2 + gamma ||Q||_{2,1}`
    pub self_expression: f64,
    /// `||C - Phi P||_F^2 + eta ||P||_{2,1}`
    pub centroid: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
enum Objective {
    /// Plain autoencoder; the decoder reads the latent code directly.
    Autoencoder,
    Joint {
        centroids: Matrix,
        weights: LossWeights,
        /// `Phi Q`, the decoder input.
        phi_q: Matrix,
        /// `Phi P`
        phi_p: Matrix,
    },
}

/// Everything the backward pass needs from one forward evaluation.
#[derive(Clone, Debug)]
pub struct ForwardTrace<'a> {
    net: &'a DualNetwork,
    x: Matrix,
    enc_caches: Vec<LayerCache>,
    pub phi: Matrix,
    dec_caches: Vec<LayerCache>,
    pub output: Matrix,
    objective: Objective,
    pub loss: LossBreakdown,
}

impl ForwardTrace<'_> {
    pub fn phi_q(&self) -> Option<&Matrix> {
        match &self.objective {
            Objective::Joint { phi_q, .. } => Some(phi_q),
            Objective::Autoencoder => None,
        }
    }

    pub fn phi_p(&self) -> Option<&Matrix> {
        match &self.objective {
            Objective::Joint { phi_p, .. } => Some(phi_p),
            Objective::Autoencoder => None,
        }
    }
}

impl DualNetwork {
    pub fn input_dim(&self) -> usize {
        self.encoder.first().map_or(0, |l| l.in_width())
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.last().map_or(0, |l| l.out_width())
    }

    pub fn n_samples(&self) -> usize {
        self.q.rows()
    }

    pub fn n_clusters(&self) -> usize {
        self.p.cols()
    }

    /// Every parameter as a flat mutable slice: encoder (weight, bias)
    /// pairs, then Q, then P, then decoder pairs.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        push_layer_slices(&mut self.encoder, &mut out);
        out.push(self.q.as_mut_slice());
        out.push(self.p.as_mut_slice());
        push_layer_slices(&mut self.decoder, &mut out);
        out
    }

    pub fn param_count(&self) -> usize {
        let layers = |ls: &[DenseLayer]| {
            ls.iter()
                .map(|l| l.weight.as_slice().len() + l.bias.as_ref().map_or(0, Vec::len))
                .sum::<usize>()
        };
        layers(&self.encoder) + self.q.as_slice().len() + self.p.as_slice().len() + layers(&self.decoder)
    }

    /// Re-imposes the zero-diagonal constraint on Q.
    pub fn project_constraints(&mut self) {
        self.q.zero_diagonal();
    }

    /// Resizes the selection layers to a new sample count / cluster count,
    /// zero-filled.
    pub fn reset_selection(&mut self, n_samples: usize, n_clusters: usize) {
        self.q = Matrix::zeros(n_samples, n_samples);
        self.p = Matrix::zeros(n_samples, n_clusters);
    }

    pub fn to_json(&self) -> Result<String> {
        let mut map = BTreeMap::new();
        let mut put_stack = |prefix: &str, layers: &[DenseLayer]| {
            for (i, l) in layers.iter().enumerate() {
                map.insert(
                    format!("{prefix}.{i}.weight"),
                    ParamEntry::from_matrix(&l.weight, Some(l.activation)),
                );
                if let Some(b) = &l.bias {
                    map.insert(
                        format!("{prefix}.{i}.bias"),
                        ParamEntry {
                            shape: vec![b.len()],
                            values: b.clone(),
                            activation: None,
                        },
                    );
                }
            }
        };
        put_stack("encoder", &self.encoder);
        put_stack("decoder", &self.decoder);
        map.insert("selection.q".into(), ParamEntry::from_matrix(&self.q, None));
        map.insert("selection.p".into(), ParamEntry::from_matrix(&self.p, None));
        Ok(serde_json::to_string_pretty(&map)?)
    }

    pub fn from_json(text: &str) -> Result<DualNetwork> {
        let mut map: BTreeMap<String, ParamEntry> = serde_json::from_str(text)?;
        let encoder = take_stack(&mut map, "encoder")?;
        let decoder = take_stack(&mut map, "decoder")?;
        let q = take_matrix(&mut map, "selection.q")?;
        let p = take_matrix(&mut map, "selection.p")?;
        if let Some(extra) = map.keys().next() {
            return Err(DualError::contract(format!("unknown parameter {extra}")));
        }
        let net = DualNetwork {
            encoder,
            q,
            p,
            decoder,
        };
        net.validate()?;
        Ok(net)
    }

    /// Checks the structural invariants of the network.
    pub fn validate(&self) -> Result<()> {
        let chain_ok = |ls: &[DenseLayer]| ls.windows(2).all(|w| w[0].out_width() == w[1].in_width());
        if self.encoder.is_empty() || self.decoder.is_empty() {
            return Err(DualError::contract("encoder and decoder need at least one layer"));
        }
        if !chain_ok(&self.encoder) || !chain_ok(&self.decoder) {
            return Err(DualError::contract("layer widths do not chain"));
        }
        let dec_in = self.decoder[0].in_width();
        let dec_out = self.decoder.last().map_or(0, |l| l.out_width());
        if dec_in != self.latent_dim() || dec_out != self.input_dim() {
            return Err(DualError::contract("decoder does not mirror encoder widths"));
        }
        if self.q.rows() != self.q.cols() || self.p.rows() != self.q.rows() {
            return Err(DualError::contract("selection layer shapes disagree"));
        }
        if self.q.max_abs_diagonal() != 0.0 {
            return Err(DualError::contract("Q has a nonzero diagonal"));
        }
        Ok(())
    }
}

fn push_layer_slices<'a>(layers: &'a mut [DenseLayer], out: &mut Vec<&'a mut [f64]>) {
    for l in layers {
        out.push(l.weight.as_mut_slice());
        if let Some(b) = &mut l.bias {
            out.push(b.as_mut_slice());
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ParamEntry {
    shape: Vec<usize>,
    values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    activation: Option<Activation>,
}

impl ParamEntry {
    fn from_matrix(m: &Matrix, activation: Option<Activation>) -> Self {
        ParamEntry {
            shape: vec![m.rows(), m.cols()],
            values: m.as_slice().to_vec(),
            activation,
        }
    }

    fn into_matrix(self, name: &str) -> Result<Matrix> {
        match self.shape[..] {
            [r, c] => Matrix::from_vec(r, c, self.values),
            _ => Err(DualError::contract(format!("{name}: expected a 2-d shape"))),
        }
    }
}

fn take_matrix(map: &mut BTreeMap<String, ParamEntry>, name: &str) -> Result<Matrix> {
    map.remove(name)
        .ok_or_else(|| DualError::contract(format!("missing parameter {name}")))?
        .into_matrix(name)
}

fn take_stack(map: &mut BTreeMap<String, ParamEntry>, prefix: &str) -> Result<Vec<DenseLayer>> {
    let mut layers = Vec::new();
    loop {
        let wname = format!("{prefix}.{}.weight", layers.len());
        let Some(entry) = map.remove(&wname) else { break };
        let activation = entry
            .activation
            .ok_or_else(|| DualError::contract(format!("{wname}: missing activation")))?;
        let weight = entry.into_matrix(&wname)?;
        let bias = match map.remove(&format!("{prefix}.{}.bias", layers.len())) {
            Some(b) if b.values.len() == weight.rows() => Some(b.values),
            Some(_) => return Err(DualError::contract(format!("{wname}: bias length mismatch"))),
            None => None,
        };
        layers.push(DenseLayer::new(weight, bias, activation));
    }
    Ok(layers)
}

/// `Phi(X)`: runs the encoder over a `d x n` batch.
pub fn encode(net: &DualNetwork, x: &Matrix) -> Result<Matrix> {
    Ok(run_layers(&net.encoder, x)?.1)
}

/// Runs the decoder over a `d' x n` batch of latent codes.
pub fn decode(net: &DualNetwork, z: &Matrix) -> Result<Matrix> {
    Ok(run_layers(&net.decoder, z)?.1)
}

/// Smoothed row-sparsity penalty, `sum_i sqrt(|r_i|^2 + eps^2) - eps`.
/// Exactly zero on zero rows and within `eps` per row of the plain
/// L2,1 norm elsewhere.
pub fn smoothed_l21(m: &Matrix) -> f64 {
    (0..m.rows())
        .map(|i| {
            let sq: f64 = m.row(i).iter().map(|v| v * v).sum();
            sq / ((sq + L21_SMOOTHING * L21_SMOOTHING).sqrt() + L21_SMOOTHING)
        })
        .sum()
}

/// `scale * d/dM smoothed_l21(M)` added into `grad`.
fn add_smoothed_l21_grad(grad: &mut Matrix, m: &Matrix, scale: f64) {
    if scale == 0.0 {
        return;
    }
    for i in 0..m.rows() {
        let row = m.row(i);
        let sq: f64 = row.iter().map(|v| v * v).sum();
        let inv = scale / (sq + L21_SMOOTHING * L21_SMOOTHING).sqrt();
        for (g, &v) in grad.row_mut(i).iter_mut().zip(row) {
            *g += v * inv;
        }
    }
}

fn check_finite(m: &Matrix, stage: &str) -> Result<()> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(DualError::Numeric {
            stage: stage.to_string(),
            epoch: None,
        })
    }
}

/// Autoencoder pass used for pretraining: `||X - decode(encode(X))||^2`.
pub fn forward_autoencoder<'a>(net: &'a DualNetwork, x: &Matrix) -> Result<ForwardTrace<'a>> {
    let (enc_caches, phi) = run_layers(&net.encoder, x)?;
    check_finite(&phi, "encoder")?;
    let (dec_caches, output) = run_layers(&net.decoder, &phi)?;
    check_finite(&output, "decoder")?;
    let reconstruction = frobenius_sq(&x.sub(&output)?);
    Ok(ForwardTrace {
        net,
        x: x.clone(),
        enc_caches,
        phi,
        dec_caches,
        output,
        objective: Objective::Autoencoder,
        loss: LossBreakdown {
            reconstruction,
            self_expression: 0.0,
            centroid: 0.0,
            total: reconstruction,
        },
    })
}

/// Full joint objective `L_r + alpha L_a + beta L_c`, with the decoder
/// fed by the self-expressed codes `Phi Q`.
pub fn forward_full<'a>(
    net: &'a DualNetwork,
    x: &Matrix,
    centroids: &Matrix,
    weights: LossWeights,
) -> Result<ForwardTrace<'a>> {
    if centroids.rows() != net.latent_dim() || centroids.cols() != net.n_clusters() {
        return Err(DualError::contract(format!(
            "centroids must be {}x{}, got {:?}",
            net.latent_dim(),
            net.n_clusters(),
            centroids.shape()
        )));
    }
    if x.cols() != net.n_samples() {
        return Err(DualError::contract(format!(
            "network has selection layers for {} samples, batch has {}",
            net.n_samples(),
            x.cols()
        )));
    }
    let (enc_caches, phi) = run_layers(&net.encoder, x)?;
    check_finite(&phi, "encoder")?;
    let phi_q = matmul(&phi, &net.q)?;
    let phi_p = matmul(&phi, &net.p)?;
    check_finite(&phi_q, "selection")?;
    check_finite(&phi_p, "selection")?;
    let (dec_caches, output) = run_layers(&net.decoder, &phi_q)?;
    check_finite(&output, "decoder")?;

    let reconstruction = frobenius_sq(&x.sub(&output)?);
    let self_expression = frobenius_sq(&phi.sub(&phi_q)?) + weights.gamma * smoothed_l21(&net.q);
    let centroid = frobenius_sq(&centroids.sub(&phi_p)?) + weights.eta * smoothed_l21(&net.p);
    let total = reconstruction + weights.alpha * self_expression + weights.beta * centroid;
    if !total.is_finite() {
        return Err(DualError::Numeric {
            stage: "loss".into(),
            epoch: None,
        });
    }

    Ok(ForwardTrace {
        net,
        x: x.clone(),
        enc_caches,
        phi,
        dec_caches,
        output,
        objective: Objective::Joint {
            centroids: centroids.clone(),
            weights,
            phi_q,
            phi_p,
        },
        loss: LossBreakdown {
            reconstruction,
            self_expression,
            centroid,
            total,
        },
    })
}

/// Exact gradient of the traced objective with respect to every parameter.
/// The Q gradient has its diagonal zeroed.
pub fn backward_full(trace: &ForwardTrace<'_>) -> Result<GradientSet> {
    let net = trace.net;
    let d_output = trace.output.zip_with(&trace.x, |g, x| 2.0 * (g - x))?;
    let (decoder, d_code) = backprop_layers(&net.decoder, &trace.dec_caches, d_output)?;

    let (d_phi, q, p) = match &trace.objective {
        Objective::Autoencoder => (
            d_code,
            Matrix::zeros(net.q.rows(), net.q.cols()),
            Matrix::zeros(net.p.rows(), net.p.cols()),
        ),
        Objective::Joint {
            centroids,
            weights,
            phi_q,
            phi_p,
        } => {
            let phi = &trace.phi;
            let phi_t = phi.transpose();

            // Phi Q is used twice: as decoder input and inside the
            // self-expression residual E = Phi - Phi Q.
            let d_resid = phi.zip_with(phi_q, |a, b| 2.0 * weights.alpha * (a - b))?;
            let d_phi_q = d_code.sub(&d_resid)?;
            let mut q = matmul(&phi_t, &d_phi_q)?;
            add_smoothed_l21_grad(&mut q, &net.q, weights.alpha * weights.gamma);
            q.zero_diagonal();
            let mut d_phi = matmul(&d_phi_q, &net.q.transpose())?;
            d_phi.add_scaled(&d_resid, 1.0)?;

            // F = C - Phi P
            let d_cent = centroids.zip_with(phi_p, |c, r| 2.0 * weights.beta * (c - r))?;
            let mut p = matmul(&phi_t, &d_cent)?.scale(-1.0);
            add_smoothed_l21_grad(&mut p, &net.p, weights.beta * weights.eta);
            d_phi.add_scaled(&matmul(&d_cent, &net.p.transpose())?, -1.0)?;

            (d_phi, q, p)
        }
    };

    let (encoder, _) = backprop_layers(&net.encoder, &trace.enc_caches, d_phi)?;
    let grads = GradientSet {
        encoder,
        q,
        p,
        decoder,
    };
    if !grads.is_finite() {
        return Err(DualError::Numeric {
            stage: "backward".into(),
            epoch: None,
        });
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(weight: Matrix, bias: Vec<f64>, act: Activation) -> DenseLayer {
        DenseLayer::new(weight, Some(bias), act)
    }

    fn net_with(encoder: Vec<DenseLayer>, decoder: Vec<DenseLayer>, n: usize, k: usize) -> DualNetwork {
        DualNetwork {
            encoder,
            q: Matrix::zeros(n, n),
            p: Matrix::zeros(n, k),
            decoder,
        }
    }

    #[test]
    fn encode_examples() {
        let id = || single(Matrix::identity(2), vec![0.0; 2], Activation::Relu);
        let net = net_with(vec![id()], vec![id()], 1, 1);
        let x = Matrix::from_rows(&[[1.0], [2.0]]);
        assert_eq!(encode(&net, &x).unwrap(), x);
        let x = Matrix::from_rows(&[[-1.0], [2.0]]);
        assert_eq!(encode(&net, &x).unwrap(), Matrix::from_rows(&[[0.0], [2.0]]));

        let two = net_with(
            vec![
                single(Matrix::from_rows(&[[2.0]]), vec![0.0], Activation::Relu),
                single(Matrix::from_rows(&[[3.0]]), vec![0.0], Activation::Relu),
            ],
            vec![single(Matrix::identity(1), vec![0.0], Activation::Identity)],
            1,
            1,
        );
        assert_eq!(
            encode(&two, &Matrix::from_rows(&[[1.0]])).unwrap(),
            Matrix::from_rows(&[[6.0]])
        );
    }

    #[test]
    fn encode_width_mismatch() {
        let net = net_with(
            vec![single(Matrix::identity(2), vec![0.0; 2], Activation::Relu)],
            vec![single(Matrix::identity(2), vec![0.0; 2], Activation::Identity)],
            1,
            1,
        );
        assert!(matches!(
            encode(&net, &Matrix::zeros(3, 1)),
            Err(DualError::Contract(_))
        ));
    }

    #[test]
    fn decode_examples() {
        let enc = || single(Matrix::identity(2), vec![0.0; 2], Activation::Relu);
        let net = net_with(
            vec![enc()],
            vec![single(Matrix::identity(2), vec![0.0; 2], Activation::Identity)],
            1,
            1,
        );
        let z = Matrix::from_rows(&[[1.0, -3.0], [2.0, 0.5]]);
        assert_eq!(decode(&net, &z).unwrap(), z);

        let net = net_with(
            vec![enc()],
            vec![single(Matrix::zeros(2, 2), vec![4.0, -1.0], Activation::Identity)],
            1,
            1,
        );
        let out = decode(&net, &z).unwrap();
        for j in 0..2 {
            assert_eq!(out.column(j), vec![4.0, -1.0]);
        }

        let net = net_with(
            vec![single(Matrix::identity(1), vec![0.0], Activation::Relu)],
            vec![single(Matrix::from_rows(&[[-1.0]]), vec![0.0], Activation::Identity)],
            1,
            1,
        );
        assert_eq!(
            decode(&net, &Matrix::from_rows(&[[2.0]])).unwrap(),
            Matrix::from_rows(&[[-2.0]])
        );
    }

    #[test]
    fn identity_autoencoder_on_nonnegative_input() {
        let id = || single(Matrix::identity(3), vec![0.0; 3], Activation::Relu);
        let mut dec = id();
        dec.activation = Activation::Identity;
        let net = net_with(vec![id(), id()], vec![id(), dec], 4, 1);
        let x = Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 * 0.5);
        assert_eq!(decode(&net, &encode(&net, &x).unwrap()).unwrap(), x);
    }

    fn dims() -> NetworkDims {
        NetworkDims {
            input_dim: 4,
            hidden: vec![5, 4],
            latent_dim: 3,
            latent_activation: Activation::Relu,
            n_samples: 6,
            n_clusters: 2,
        }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_params(&dims(), 7).unwrap();
        let b = init_params(&dims(), 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_params(&dims(), 8).unwrap());
        assert_eq!(a.q, Matrix::zeros(6, 6));
        assert_eq!(a.p, Matrix::zeros(6, 2));
        a.validate().unwrap();
        assert_eq!(a.decoder.last().unwrap().activation, Activation::Identity);
        assert!(a.encoder.iter().all(|l| l.activation == Activation::Relu));

        let wide = NetworkDims {
            input_dim: 100,
            hidden: vec![100],
            latent_dim: 50,
            latent_activation: Activation::Identity,
            n_samples: 1,
            n_clusters: 1,
        };
        let net = init_params(&wide, 1).unwrap();
        assert_eq!(net.encoder.last().unwrap().activation, Activation::Identity);
        let bound = glorot_bound(100, 100);
        let w = net.encoder[0].weight.as_slice();
        assert_eq!(w.len(), 10_000);
        assert!(w.iter().all(|v| v.abs() <= bound));
        // the draws should actually use the range
        assert!(w.iter().any(|v| v.abs() > 0.95 * bound));
        assert!(net.encoder[0].bias.as_ref().unwrap().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn zero_selection_regularizers_vanish() {
        let net = init_params(&dims(), 3).unwrap();
        let x = Matrix::from_fn(4, 6, |i, j| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let c = Matrix::from_fn(3, 2, |i, j| (i + j) as f64 * 0.3);
        let w = LossWeights {
            alpha: 1.0,
            beta: 1.0,
            gamma: 0.5,
            eta: 0.5,
        };
        let trace = forward_full(&net, &x, &c, w).unwrap();
        let phi = encode(&net, &x).unwrap();
        assert_eq!(trace.loss.self_expression, frobenius_sq(&phi));
        assert_eq!(trace.loss.centroid, frobenius_sq(&c));
        let l = trace.loss;
        assert_eq!(l.total, l.reconstruction + 1.0 * l.self_expression + 1.0 * l.centroid);

        let none = LossWeights {
            alpha: 0.0,
            beta: 0.0,
            ..w
        };
        let trace = forward_full(&net, &x, &c, none).unwrap();
        assert_eq!(trace.loss.total, trace.loss.reconstruction);
    }

    #[test]
    fn forward_full_rejects_bad_centroids() {
        let net = init_params(&dims(), 3).unwrap();
        let x = Matrix::zeros(4, 6);
        let w = LossWeights {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            eta: 1.0,
        };
        assert!(forward_full(&net, &x, &Matrix::zeros(2, 2), w).is_err());
    }

    #[test]
    fn zero_point_has_zero_gradient() {
        let mut net = init_params(&dims(), 3).unwrap();
        for s in net.param_slices_mut() {
            s.iter_mut().for_each(|v| *v = 0.0);
        }
        let x = Matrix::zeros(4, 6);
        let c = Matrix::zeros(3, 2);
        let w = LossWeights {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            eta: 1.0,
        };
        let trace = forward_full(&net, &x, &c, w).unwrap();
        assert_eq!(trace.loss.total, 0.0);
        let g = backward_full(&trace).unwrap();
        assert!(g.slices().iter().all(|s| s.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut net = init_params(&dims(), 11).unwrap();
        net.q = Matrix::from_fn(6, 6, |i, j| if i == j { 0.0 } else { (i as f64 + 0.1) / (j as f64 + 3.0) });
        net.p = Matrix::from_fn(6, 2, |i, j| 1.0 / 3.0 + (i * j) as f64 * 1e-17);
        let text = net.to_json().unwrap();
        let back = DualNetwork::from_json(&text).unwrap();
        let bits = |n: &mut DualNetwork| {
            n.param_slices_mut()
                .iter()
                .flat_map(|s| s.iter().map(|v| v.to_bits()).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        };
        let mut back2 = back.clone();
        assert_eq!(bits(&mut net.clone()), bits(&mut back2));
        assert_eq!(back, net);
    }

    #[test]
    fn from_json_rejects_nonzero_diagonal() {
        let mut net = init_params(&dims(), 11).unwrap();
        net.q[(1, 1)] = 0.5;
        let text = net.to_json().unwrap();
        assert!(DualNetwork::from_json(&text).is_err());
    }
}
