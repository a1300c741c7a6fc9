use serde::{Deserialize, Serialize};

use super::{clipped_l1_subgrad_unchecked, clipped_l1_unchecked, truncate_scalar, FastNnConfig, NetMode};
use crate::error::{FiddleError, Result};
use crate::numerics::{gemm, Matrix, SeededRng};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Network inputs for a set of observations.
///
/// `dense` is fed straight into the first layer (factor scores, or the raw covariates in raw
/// mode); `sparse` is the covariate matrix seen through `Tr_M(Θᵀx)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub dense: Matrix,
    pub sparse: Option<Matrix>,
}

impl Features {
    pub fn factor_augmented(factors: Matrix, covariates: Matrix) -> Result<Self> {
        if factors.rows() != covariates.rows() {
            return Err(FiddleError::Shape(format!(
                "{} factor rows vs {} covariate rows",
                factors.rows(),
                covariates.rows()
            )));
        }
        Ok(Self {
            dense: factors,
            sparse: Some(covariates),
        })
    }

    pub fn raw(covariates: Matrix) -> Self {
        Self {
            dense: covariates,
            sparse: None,
        }
    }

    pub fn n(&self) -> usize {
        self.dense.rows()
    }

    pub fn select_rows(&self, idx: &[usize]) -> Features {
        Features {
            dense: self.dense.select_rows(idx),
            sparse: self.sparse.as_ref().map(|s| s.select_rows(idx)),
        }
    }

    pub(crate) fn gather_into(&self, idx: &[usize], out: &mut Features) {
        self.dense.gather_rows_into(idx, &mut out.dense);
        match (&self.sparse, &mut out.sparse) {
            (Some(src), Some(dst)) => src.gather_rows_into(idx, dst),
            (Some(src), dst @ None) => *dst = Some(src.select_rows(idx)),
            (None, dst) => *dst = None,
        }
    }
}

/// Fully connected layer `z = W h + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    fn zeros(out: usize, inp: usize) -> Self {
        Self {
            weight: Matrix::zeros(out, inp),
            bias: vec![0.0; out],
        }
    }
}

/// Penalty weights applied on top of the mean squared error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularization {
    /// Weight of `Σ ψ_τ(Θᵢⱼ)`.
    pub lambda: f64,
    pub tau: f64,
    /// Weight of `Σ ‖Wₗ‖²_F` over layer weights (biases excluded).
    pub weight_decay: f64,
}

impl Regularization {
    pub fn none() -> Self {
        Self {
            lambda: 0.0,
            tau: 1.0,
            weight_decay: 0.0,
        }
    }
}

/// A FAST-NN (or raw-mode) regressor with output truncation at `trunc_level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastNnModel {
    /// `p × N` variable-selection matrix; absent in raw mode.
    pub theta: Option<Matrix>,
    /// `L` hidden layers followed by the `1 × N` output layer.
    pub layers: Vec<Dense>,
    pub trunc_level: f64,
}

/// Gradient with the same layout as [`FastNnModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub theta: Option<Matrix>,
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(1 + 2 * self.layers.len());
        if let Some(t) = &self.theta {
            out.push(t.as_slice());
        }
        for l in &self.layers {
            out.push(l.weight.as_slice());
            out.push(&l.bias);
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Versioned serialization envelope.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelBlob {
    pub format_version: u32,
    pub model: FastNnModel,
}

/// Intermediate values of a batch forward pass.
#[derive(Debug, Default)]
pub(crate) struct Workspace {
    /// Pre-truncation throughput `XΘ`, `B × N`.
    z0: Matrix,
    /// Layer inputs `H₀ … H_L` (`H₀ = [f̃, Tr_M(XΘ)]`).
    acts: Vec<Matrix>,
    /// Hidden pre-activations `Z₁ … Z_L`.
    pre: Vec<Matrix>,
    out: Matrix,
    delta: Matrix,
    delta_next: Matrix,
}

fn resize(m: &mut Matrix, rows: usize, cols: usize) {
    if m.shape() != (rows, cols) {
        *m = Matrix::zeros(rows, cols);
    }
}

fn uniform_matrix(rows: usize, cols: usize, bound: f64, rng: &mut SeededRng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.uniform_unchecked(-bound, bound))
}

/// Θ starts in `U(±τ/5)`, inside the region where the clipped-L1 penalty has a gradient.
/// Started at fan-in scale, almost every entry would sit on the flat part of ψ_τ and the
/// penalty would never act.
pub const THETA_INIT_FRACTION: f64 = 0.2;

impl FastNnModel {
    /// Dense layers use fan-in scaled uniform `U(±√(6/fan_in))`, Θ uses `U(±τ/5)`; biases zero.
    pub fn init(
        dense_dim: usize,
        sparse_dim: Option<usize>,
        config: &FastNnConfig,
        trunc_level: f64,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        config.validate()?;
        if !(trunc_level > 0.0) || !trunc_level.is_finite() {
            return Err(FiddleError::InvalidArgument(format!(
                "truncation level {trunc_level} must be finite and > 0"
            )));
        }
        let n = config.width;
        let theta = match (config.mode, sparse_dim) {
            (NetMode::FactorAugmented, Some(p)) => {
                Some(uniform_matrix(p, n, THETA_INIT_FRACTION * config.clip_tau, rng))
            }
            (NetMode::FactorAugmented, None) => {
                return Err(FiddleError::InvalidArgument(
                    "factor-augmented mode needs covariates for the throughput layer".into(),
                ))
            }
            (NetMode::Raw, _) => None,
        };
        let first_in = dense_dim + if theta.is_some() { n } else { 0 };
        if first_in == 0 {
            return Err(FiddleError::InvalidArgument("network has no inputs".into()));
        }
        let mut layers = Vec::with_capacity(config.depth + 1);
        let mut fan_in = first_in;
        for _ in 0..config.depth {
            layers.push(Dense {
                weight: uniform_matrix(n, fan_in, (6.0 / fan_in as f64).sqrt(), rng),
                bias: vec![0.0; n],
            });
            fan_in = n;
        }
        layers.push(Dense {
            weight: uniform_matrix(1, n, (6.0 / n as f64).sqrt(), rng),
            bias: vec![0.0; 1],
        });
        Ok(Self {
            theta,
            layers,
            trunc_level,
        })
    }

    pub fn mode(&self) -> NetMode {
        if self.theta.is_some() {
            NetMode::FactorAugmented
        } else {
            NetMode::Raw
        }
    }

    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn width(&self) -> usize {
        self.layers[0].weight.rows()
    }

    /// Width of the `dense` input block.
    pub fn dense_dim(&self) -> usize {
        let first = self.layers[0].weight.cols();
        match &self.theta {
            Some(t) => first - t.cols(),
            None => first,
        }
    }

    pub fn sparse_dim(&self) -> Option<usize> {
        self.theta.as_ref().map(Matrix::rows)
    }

    /// Largest absolute weight (the empirical `B` of the network class).
    pub fn weight_bound(&self) -> f64 {
        self.param_slices()
            .iter()
            .flat_map(|s| s.iter())
            .fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(1 + 2 * self.layers.len());
        if let Some(t) = &self.theta {
            out.push(t.as_slice());
        }
        for l in &self.layers {
            out.push(l.weight.as_slice());
            out.push(&l.bias);
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(1 + 2 * self.layers.len());
        if let Some(t) = &mut self.theta {
            out.push(t.as_mut_slice());
        }
        for l in &mut self.layers {
            out.push(l.weight.as_mut_slice());
            out.push(&mut l.bias);
        }
        out
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            theta: self.theta.as_ref().map(|t| Matrix::zeros(t.rows(), t.cols())),
            layers: self
                .layers
                .iter()
                .map(|l| Dense::zeros(l.weight.rows(), l.weight.cols()))
                .collect(),
        }
    }

    fn check_features(&self, features: &Features) -> Result<()> {
        if features.dense.cols() != self.dense_dim() {
            return Err(FiddleError::Shape(format!(
                "dense input has {} columns, model expects {}",
                features.dense.cols(),
                self.dense_dim()
            )));
        }
        match (&self.theta, &features.sparse) {
            (Some(t), Some(x)) => {
                if x.cols() != t.rows() || x.rows() != features.dense.rows() {
                    return Err(FiddleError::Shape(format!(
                        "covariates are {}x{}, Θ expects {} columns and {} rows",
                        x.rows(),
                        x.cols(),
                        t.rows(),
                        features.dense.rows()
                    )));
                }
            }
            (Some(_), None) => {
                return Err(FiddleError::Shape(
                    "factor-augmented model needs covariates".into(),
                ))
            }
            (None, _) => {}
        }
        Ok(())
    }

    /// Batch forward pass; fills `ws` and returns nothing (outputs in `ws.out`, pre-truncation).
    fn forward_ws(&self, features: &Features, ws: &mut Workspace) -> Result<()> {
        let b = features.n();
        let m = self.trunc_level;
        let depth = self.depth();
        ws.acts.resize_with(depth + 1, Matrix::default);
        ws.pre.resize_with(depth, Matrix::default);

        match (&self.theta, &features.sparse) {
            (Some(theta), Some(x)) => {
                let n = theta.cols();
                resize(&mut ws.z0, b, n);
                gemm(1.0, x, false, theta, false, 0.0, &mut ws.z0)?;
                let dd = features.dense.cols();
                let h0 = &mut ws.acts[0];
                resize(h0, b, dd + n);
                for i in 0..b {
                    let row = h0.row_mut(i);
                    row[..dd].copy_from_slice(features.dense.row(i));
                    for (dst, &z) in row[dd..].iter_mut().zip(ws.z0.row(i)) {
                        *dst = truncate_scalar(z, m);
                    }
                }
            }
            _ => {
                ws.acts[0].clone_from(&features.dense);
            }
        }

        for (l, layer) in self.layers[..depth].iter().enumerate() {
            let out = layer.weight.rows();
            let (before, after) = ws.acts.split_at_mut(l + 1);
            let input = &before[l];
            let z = &mut ws.pre[l];
            resize(z, b, out);
            gemm(1.0, input, false, &layer.weight, true, 0.0, z)?;
            let h = &mut after[0];
            resize(h, b, out);
            for i in 0..b {
                let zr = z.row_mut(i);
                for (zv, bv) in zr.iter_mut().zip(&layer.bias) {
                    *zv += bv;
                }
                for (hv, zv) in h.row_mut(i).iter_mut().zip(zr.iter()) {
                    *hv = zv.max(0.0);
                }
            }
        }
        let last = &self.layers[depth];
        resize(&mut ws.out, b, 1);
        gemm(1.0, &ws.acts[depth], false, &last.weight, true, 0.0, &mut ws.out)?;
        let bias = last.bias[0];
        ws.out.as_mut_slice().iter_mut().for_each(|v| *v += bias);
        Ok(())
    }

    /// Truncated predictions `Tr_M(g([f̃, Tr_M(Θᵀx)]))` for every row of `features`.
    pub fn predict(&self, features: &Features) -> Result<Vec<f64>> {
        self.check_features(features)?;
        let n = features.n();
        let mut out = Vec::with_capacity(n);
        let mut ws = Workspace::default();
        let mut chunk = Features {
            dense: Matrix::zeros(0, 0),
            sparse: None,
        };
        const CHUNK: usize = 512;
        let idx: Vec<usize> = (0..n).collect();
        for rows in idx.chunks(CHUNK) {
            features.gather_into(rows, &mut chunk);
            self.forward_ws(&chunk, &mut ws)?;
            out.extend(ws.out.as_slice().iter().map(|&v| truncate_scalar(v, self.trunc_level)));
        }
        Ok(out)
    }

    /// Single-observation forward pass.
    pub fn forward(&self, dense: &[f64], sparse: Option<&[f64]>) -> Result<f64> {
        let features = Features {
            dense: Matrix::from_vec(1, dense.len(), dense.to_vec())?,
            sparse: sparse
                .map(|s| Matrix::from_vec(1, s.len(), s.to_vec()))
                .transpose()?,
        };
        Ok(self.predict(&features)?[0])
    }

    /// Penalty part of the objective.
    pub fn penalty(&self, reg: &Regularization) -> f64 {
        let mut total = 0.0;
        if reg.lambda != 0.0 {
            if let Some(t) = &self.theta {
                total += reg.lambda
                    * t.as_slice()
                        .iter()
                        .map(|&v| clipped_l1_unchecked(v, reg.tau))
                        .sum::<f64>();
            }
        }
        if reg.weight_decay != 0.0 {
            total += reg.weight_decay
                * self
                    .layers
                    .iter()
                    .map(|l| l.weight.as_slice().iter().map(|v| v * v).sum::<f64>())
                    .sum::<f64>();
        }
        total
    }

    /// Mean squared residual over the batch.
    pub fn mse(&self, features: &Features, targets: &[f64]) -> Result<f64> {
        if targets.is_empty() {
            return Err(FiddleError::InvalidArgument("empty batch".into()));
        }
        if targets.len() != features.n() {
            return Err(FiddleError::Shape("targets and features differ in length".into()));
        }
        let pred = self.predict(features)?;
        Ok(pred
            .iter()
            .zip(targets)
            .map(|(p, y)| (y - p) * (y - p))
            .sum::<f64>()
            / targets.len() as f64)
    }

    /// Penalized objective: mean squared residual plus [`FastNnModel::penalty`].
    pub fn loss(&self, features: &Features, targets: &[f64], reg: &Regularization) -> Result<f64> {
        Ok(self.mse(features, targets)? + self.penalty(reg))
    }

    /// Gradient of [`FastNnModel::loss`]; see [`FastNnModel::grad_into`].
    pub fn grad(&self, features: &Features, targets: &[f64], reg: &Regularization) -> Result<Gradients> {
        let mut g = self.zero_gradients();
        let mut ws = Workspace::default();
        self.grad_into(features, targets, reg, &mut g, &mut ws)?;
        Ok(g)
    }

    /// Reverse-mode gradient written into `g`; returns the batch MSE.
    ///
    /// ReLU and truncation use the subgradient 0 at and beyond their kinks (truncation passes
    /// through on the closed interval `[-M, M]`). The `Θ` penalty contributes
    /// `λ·ψ′_τ(Θᵢⱼ)`; weight decay contributes `2·wd·W`.
    pub(crate) fn grad_into(
        &self,
        features: &Features,
        targets: &[f64],
        reg: &Regularization,
        g: &mut Gradients,
        ws: &mut Workspace,
    ) -> Result<f64> {
        if targets.is_empty() {
            return Err(FiddleError::InvalidArgument("empty batch".into()));
        }
        if targets.len() != features.n() {
            return Err(FiddleError::Shape("targets and features differ in length".into()));
        }
        self.check_features(features)?;
        self.forward_ws(features, ws)?;
        let b = targets.len();
        let m = self.trunc_level;
        let depth = self.depth();

        // output layer delta: d/d(out) of mean (y - Tr_M(out))²
        let mut mse = 0.0;
        resize(&mut ws.delta, b, 1);
        for (i, &y) in targets.iter().enumerate() {
            let raw = ws.out.as_slice()[i];
            let pred = truncate_scalar(raw, m);
            let resid = pred - y;
            mse += resid * resid;
            ws.delta.as_mut_slice()[i] = if raw.abs() <= m { 2.0 * resid / b as f64 } else { 0.0 };
        }
        mse /= b as f64;

        for l in (0..=depth).rev() {
            let layer = &self.layers[l];
            let input = &ws.acts[l];
            let gl = &mut g.layers[l];
            gemm(1.0, &ws.delta, true, input, false, 0.0, &mut gl.weight)?;
            gl.bias.iter_mut().for_each(|v| *v = 0.0);
            for i in 0..b {
                for (gb, d) in gl.bias.iter_mut().zip(ws.delta.row(i)) {
                    *gb += d;
                }
            }
            if l == 0 && self.theta.is_none() {
                break;
            }
            // delta w.r.t. this layer's input
            resize(&mut ws.delta_next, b, layer.weight.cols());
            gemm(1.0, &ws.delta, false, &layer.weight, false, 0.0, &mut ws.delta_next)?;
            if l > 0 {
                let z = &ws.pre[l - 1];
                for (d, zv) in ws.delta_next.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    if *zv <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_next);
        }

        if let (Some(theta), Some(x), Some(gt)) = (&self.theta, &features.sparse, &mut g.theta) {
            // ws.delta is now d/dH₀; keep the throughput block and gate by truncation
            let n = theta.cols();
            let dd = self.dense_dim();
            let mut dz0 = Matrix::zeros(b, n);
            for i in 0..b {
                let src = &ws.delta.row(i)[dd..];
                for ((dst, &d), &z) in dz0.row_mut(i).iter_mut().zip(src).zip(ws.z0.row(i)) {
                    *dst = if z.abs() <= m { d } else { 0.0 };
                }
            }
            gemm(1.0, x, true, &dz0, false, 0.0, gt)?;
            if reg.lambda != 0.0 {
                for (gv, &tv) in gt.as_mut_slice().iter_mut().zip(theta.as_slice()) {
                    *gv += reg.lambda * clipped_l1_subgrad_unchecked(tv, reg.tau);
                }
            }
        }
        if reg.weight_decay != 0.0 {
            for (gl, layer) in g.layers.iter_mut().zip(&self.layers) {
                for (gv, &wv) in gl.weight.as_mut_slice().iter_mut().zip(layer.weight.as_slice()) {
                    *gv += 2.0 * reg.weight_decay * wv;
                }
            }
        }
        Ok(mse)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&ModelBlob {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let blob: ModelBlob = serde_json::from_str(text)?;
        if blob.format_version != MODEL_FORMAT_VERSION {
            return Err(FiddleError::InvalidArgument(format!(
                "unsupported model format version {}",
                blob.format_version
            )));
        }
        blob.model.validate_shapes()?;
        Ok(blob.model)
    }

    fn validate_shapes(&self) -> Result<()> {
        let bad = |m: &str| Err(FiddleError::Shape(m.to_string()));
        if self.layers.len() < 2 {
            return bad("model needs at least one hidden layer and an output layer");
        }
        let n = self.width();
        if let Some(t) = &self.theta {
            if t.cols() != n || self.layers[0].weight.cols() < n {
                return bad("Θ width does not match the first layer");
            }
        }
        for (l, layer) in self.layers.iter().enumerate() {
            if layer.bias.len() != layer.weight.rows() || layer.weight.as_slice().len() != layer.weight.rows() * layer.weight.cols() {
                return bad("bias length does not match layer output");
            }
            if l > 0 && layer.weight.cols() != self.layers[l - 1].weight.rows() {
                return bad("consecutive layer shapes do not chain");
            }
        }
        if self.layers.last().map(|l| l.weight.rows()) != Some(1) {
            return bad("output layer must have one unit");
        }
        if !(self.trunc_level > 0.0) {
            return bad("truncation level must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(mode: NetMode) -> FastNnConfig {
        FastNnConfig {
            depth: 2,
            width: 3,
            mode,
            ..FastNnConfig::default()
        }
    }

    #[test]
    fn zero_model_predicts_zero() {
        let cfg = small_config(NetMode::FactorAugmented);
        let mut model = FastNnModel::init(2, Some(4), &cfg, 5.0, &mut SeededRng::new(1)).unwrap();
        for s in model.param_slices_mut() {
            s.iter_mut().for_each(|v| *v = 0.0);
        }
        let out = model.forward(&[0.3, -1.0], Some(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(out, 0.0);
    }

    #[test]
    fn hand_computed_single_layer() {
        // L = 1, N = 1, raw mode, scalar input:
        // h = relu(2x + 1), out = Tr_M(3h - 1) with M = 10
        let model = FastNnModel {
            theta: None,
            layers: vec![
                Dense {
                    weight: Matrix::from_vec(1, 1, vec![2.0]).unwrap(),
                    bias: vec![1.0],
                },
                Dense {
                    weight: Matrix::from_vec(1, 1, vec![3.0]).unwrap(),
                    bias: vec![-1.0],
                },
            ],
            trunc_level: 10.0,
        };
        assert_eq!(model.forward(&[0.5], None).unwrap(), 5.0);
        assert_eq!(model.forward(&[-2.0], None).unwrap(), -1.0);
        assert_eq!(model.forward(&[4.0], None).unwrap(), 10.0);
    }

    #[test]
    fn hand_computed_throughput() {
        // r̄ = 1, p = 2, N = 1, L = 1, M = 2:
        // t = Tr_2(θᵀx) with θ = (1, 1); h = relu(0.5 f + 1.0 t); out = h
        let model = FastNnModel {
            theta: Some(Matrix::from_vec(2, 1, vec![1.0, 1.0]).unwrap()),
            layers: vec![
                Dense {
                    weight: Matrix::from_vec(1, 2, vec![0.5, 1.0]).unwrap(),
                    bias: vec![0.0],
                },
                Dense {
                    weight: Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
                    bias: vec![0.0],
                },
            ],
            trunc_level: 2.0,
        };
        // θᵀx = 3 → truncated to 2; h = 0.5·1 + 2 = 2.5; output truncated to 2
        assert_eq!(model.forward(&[1.0], Some(&[1.0, 2.0])).unwrap(), 2.0);
        // θᵀx = 0.5; h = 0.5·(-0.4) + 0.5 = 0.3
        let v = model.forward(&[-0.4], Some(&[0.25, 0.25])).unwrap();
        assert!((v - 0.3).abs() < 1e-15);
    }

    #[test]
    fn zero_model_losses() {
        let cfg = small_config(NetMode::Raw);
        let mut model = FastNnModel::init(1, None, &cfg, 5.0, &mut SeededRng::new(1)).unwrap();
        for s in model.param_slices_mut() {
            s.iter_mut().for_each(|v| *v = 0.0);
        }
        let f = Features::raw(Matrix::from_vec(2, 1, vec![0.1, 0.2]).unwrap());
        let reg = Regularization::none();
        assert_eq!(model.loss(&f, &[0.0, 0.0], &reg).unwrap(), 0.0);
        assert_eq!(model.loss(&f, &[1.0, -1.0], &reg).unwrap(), 1.0);
        assert!(model.loss(&f, &[], &reg).is_err());
        let g = model.grad(&f, &[0.0, 0.0], &reg).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let cfg = small_config(NetMode::FactorAugmented);
        let model = FastNnModel::init(2, Some(4), &cfg, 5.0, &mut SeededRng::new(1)).unwrap();
        assert!(model.forward(&[0.0], Some(&[0.0; 4])).is_err());
        assert!(model.forward(&[0.0, 0.0], Some(&[0.0; 3])).is_err());
        assert!(model.forward(&[0.0, 0.0], None).is_err());
        assert!(FastNnModel::init(2, None, &cfg, 5.0, &mut SeededRng::new(1)).is_err());
    }

    #[test]
    fn json_round_trip() {
        let cfg = small_config(NetMode::FactorAugmented);
        let model = FastNnModel::init(2, Some(4), &cfg, 5.0, &mut SeededRng::new(3)).unwrap();
        let back = FastNnModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        let bumped = model.to_json().unwrap().replace("\"format_version\":1", "\"format_version\":9");
        assert!(FastNnModel::from_json(&bumped).is_err());
    }
}
