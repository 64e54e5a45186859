//! Point-cloud encoder: a pyramid of shared pointwise dense layers followed by
//! time-aware attention pooling (TAP), or single-frame max pooling for the
//! ablation.
//!
//! TAP scores every point with a small MLP over its normalized relative
//! timestamp, normalizes the scores with one softmax over the whole cloud and
//! returns the weighted sum of the pointwise features. Gradients are exact,
//! including the softmax coupling between the attention head and the pooled
//! feature.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, Block, BlockMut, Mlp, MlpTrace, Parameterized};
use crate::pointcloud::AggregatedCloud;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    TimeAware,
    Max,
}

impl Pooling {
    pub fn name(self) -> &'static str {
        match self {
            Pooling::TimeAware => "tap",
            Pooling::Max => "max",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    /// Widths after the 3-d input, e.g. `[32, 64, 128]`; the last is the feature size.
    pub widths: Vec<usize>,
    pub head_hidden: usize,
    pub pooling: Pooling,
    /// Lets attention logits also see the pointwise features. Off by default.
    pub feature_conditioned: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            widths: vec![32, 64, 128],
            head_hidden: 16,
            pooling: Pooling::TimeAware,
            feature_conditioned: false,
        }
    }
}

/// Shared pointwise MLP over `(x, y, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointFeatureEncoder {
    pub mlp: Mlp,
}

/// Small MLP mapping a relative timestamp to an attention logit.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalAttentionHead {
    pub mlp: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub points: PointFeatureEncoder,
    pub head: TemporalAttentionHead,
    pub pooling: Pooling,
    pub feature_conditioned: bool,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(cfg: &EncoderConfig, rng: &mut R) -> Result<Self> {
        if cfg.widths.is_empty() || cfg.widths.contains(&0) || cfg.head_hidden == 0 {
            return Err(Error::InvalidInput("encoder widths must be non-empty and positive".into()));
        }
        let mut widths = vec![3];
        widths.extend_from_slice(&cfg.widths);
        let points = PointFeatureEncoder {
            mlp: Mlp::init(&widths, Activation::Relu, Activation::Relu, rng),
        };
        let head_in = if cfg.feature_conditioned { 1 + cfg.widths[cfg.widths.len() - 1] } else { 1 };
        let head = TemporalAttentionHead {
            mlp: Mlp::init(&[head_in, cfg.head_hidden, 1], Activation::Tanh, Activation::Identity, rng),
        };
        Ok(Self {
            points,
            head,
            pooling: cfg.pooling,
            feature_conditioned: cfg.feature_conditioned,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.points.mlp.output_dim()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            points: PointFeatureEncoder {
                mlp: self.points.mlp.zeros_like(),
            },
            head: TemporalAttentionHead {
                mlp: self.head.mlp.zeros_like(),
            },
            pooling: self.pooling,
            feature_conditioned: self.feature_conditioned,
        }
    }

    pub fn check_shapes(&self) -> Result<()> {
        self.points.mlp.check_shapes()?;
        self.head.mlp.check_shapes()?;
        if self.points.mlp.input_dim() != 3 {
            return Err(Error::dims("point encoder input", 3, self.points.mlp.input_dim()));
        }
        let head_in = if self.feature_conditioned { 1 + self.feature_dim() } else { 1 };
        if self.head.mlp.input_dim() != head_in || self.head.mlp.output_dim() != 1 {
            return Err(Error::dims("attention head input", head_in, self.head.mlp.input_dim()));
        }
        Ok(())
    }
}

impl Parameterized for Encoder {
    fn blocks(&self) -> Vec<Block<'_>> {
        let mut b = self.points.mlp.named_blocks("encoder.points");
        b.extend(self.head.mlp.named_blocks("encoder.head"));
        b
    }

    fn blocks_mut(&mut self) -> Vec<BlockMut<'_>> {
        let mut b = self.points.mlp.named_blocks_mut("encoder.points");
        b.extend(self.head.mlp.named_blocks_mut("encoder.head"));
        b
    }
}

fn stack_positions(clouds: &[&AggregatedCloud]) -> Array2<f64> {
    let rows: usize = clouds.iter().map(|c| c.len()).sum();
    let mut x = Array2::zeros((rows, 3));
    for (r, p) in clouds.iter().flat_map(|c| c.points.iter()).enumerate() {
        x[[r, 0]] = p.position.x;
        x[[r, 1]] = p.position.y;
        x[[r, 2]] = p.position.z;
    }
    x
}

fn stack_times(clouds: &[&AggregatedCloud]) -> Array2<f64> {
    let t: Vec<f64> = clouds.iter().flat_map(|c| c.points.iter().map(|p| p.t_rel)).collect();
    Array2::from_shape_vec((t.len(), 1), t).expect("column vector")
}

fn head_input(times: &Array2<f64>, features: &Array2<f64>, feature_conditioned: bool) -> Array2<f64> {
    if feature_conditioned {
        ndarray::concatenate(Axis(1), &[times.view(), features.view()]).expect("same row count")
    } else {
        times.clone()
    }
}

/// Softmax over each row of a `B x N` logit matrix.
fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut w = logits.clone();
    for mut row in w.rows_mut() {
        let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row /= z;
    }
    w
}

/// Cached intermediate values of a batched encoder pass.
pub struct EncoderTrace {
    batch: usize,
    n: usize,
    points: MlpTrace,
    head: Option<MlpTrace>,
    /// `B x N` attention weights (TAP only).
    weights: Option<Array2<f64>>,
    /// `B x D` winning point index per channel (max pooling only).
    argmax: Option<Array2<usize>>,
}

impl EncoderTrace {
    pub fn weights(&self) -> Option<&Array2<f64>> {
        self.weights.as_ref()
    }
}

impl Encoder {
    /// Encodes a batch of equally sized clouds into a `B x D` feature matrix.
    pub fn forward_batch(&self, clouds: &[&AggregatedCloud]) -> Result<(Array2<f64>, EncoderTrace)> {
        let batch = clouds.len();
        let n = clouds.first().map_or(0, |c| c.len());
        if n == 0 {
            return Err(Error::EmptyCloud("encoder input holds no points".into()));
        }
        if let Some(c) = clouds.iter().find(|c| c.len() != n) {
            return Err(Error::dims("batched cloud size", n, c.len()));
        }
        let d = self.feature_dim();
        let points = self.points.mlp.forward(stack_positions(clouds));
        let feats = points.output();
        let mut pooled = Array2::zeros((batch, d));
        let (head, weights, argmax) = match self.pooling {
            Pooling::TimeAware => {
                let hin = head_input(&stack_times(clouds), feats, self.feature_conditioned);
                let head = self.head.mlp.forward(hin);
                let logits = head.output().view().into_shape_with_order((batch, n)).expect("one logit per point").to_owned();
                let w = softmax_rows(&logits);
                for b in 0..batch {
                    let fb = feats.slice(s![b * n..(b + 1) * n, ..]);
                    pooled.row_mut(b).assign(&w.row(b).dot(&fb));
                }
                (Some(head), Some(w), None)
            }
            Pooling::Max => {
                let mut arg = Array2::zeros((batch, d));
                for b in 0..batch {
                    for k in 0..d {
                        let mut best = f64::NEG_INFINITY;
                        let mut at = 0;
                        for i in 0..n {
                            let v = feats[[b * n + i, k]];
                            if v > best {
                                best = v;
                                at = i;
                            }
                        }
                        pooled[[b, k]] = best;
                        arg[[b, k]] = at;
                    }
                }
                (None, None, Some(arg))
            }
        };
        Ok((
            pooled,
            EncoderTrace {
                batch,
                n,
                points,
                head,
                weights,
                argmax,
            },
        ))
    }

    /// Accumulates parameter gradients for upstream `dL/dfeature` (`B x D`).
    pub fn backward_batch(&self, trace: &EncoderTrace, upstream: ArrayView2<f64>, grad: &mut Encoder) {
        let (batch, n) = (trace.batch, trace.n);
        let feats = trace.points.output();
        let d = feats.ncols();
        let mut dfeat = Array2::<f64>::zeros((batch * n, d));
        match self.pooling {
            Pooling::TimeAware => {
                let w = trace.weights.as_ref().expect("tap trace");
                let mut dlogit = Array2::<f64>::zeros((batch * n, 1));
                for b in 0..batch {
                    let g = upstream.row(b);
                    let fb = feats.slice(s![b * n..(b + 1) * n, ..]);
                    // dL/dw_i = f_i . g, then through the softmax.
                    let dw = fb.dot(&g);
                    let wb = w.row(b);
                    let mean = wb.dot(&dw);
                    for i in 0..n {
                        dlogit[[b * n + i, 0]] = wb[i] * (dw[i] - mean);
                        dfeat.row_mut(b * n + i).scaled_add(wb[i], &g);
                    }
                }
                let head = trace.head.as_ref().expect("tap trace");
                let dh = self.head.mlp.backward(head, dlogit, &mut grad.head.mlp, self.feature_conditioned);
                if let Some(dh) = dh {
                    dfeat += &dh.slice(s![.., 1..]);
                }
            }
            Pooling::Max => {
                let arg = trace.argmax.as_ref().expect("max trace");
                for b in 0..batch {
                    for k in 0..d {
                        dfeat[[b * n + arg[[b, k]], k]] += upstream[[b, k]];
                    }
                }
            }
        }
        self.points.mlp.backward(&trace.points, dfeat, &mut grad.points.mlp, false);
    }
}

/// Pointwise features (`N x D`); row `i` depends only on point `i`.
pub fn encode_points(enc: &PointFeatureEncoder, cloud: &AggregatedCloud) -> Array2<f64> {
    enc.mlp.predict(stack_positions(&[cloud]))
}

/// Softmax attention over the cloud from timestamp-only logits.
pub fn attention_weights(head: &TemporalAttentionHead, cloud: &AggregatedCloud) -> Result<Array1<f64>> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud("attention over an empty cloud".into()));
    }
    if head.mlp.input_dim() != 1 {
        return Err(Error::dims("timestamp-only attention head", 1, head.mlp.input_dim()));
    }
    let logits = head.mlp.predict(stack_times(&[cloud]));
    let row = logits.into_shape_with_order((1, cloud.len())).expect("one logit per point");
    Ok(softmax_rows(&row).row(0).to_owned())
}

/// `sum_i w_i f_i`.
pub fn tap_pool(features: ArrayView2<f64>, weights: ArrayView1<f64>) -> Result<Array1<f64>> {
    if features.nrows() != weights.len() {
        return Err(Error::dims("pooling weights", features.nrows(), weights.len()));
    }
    let total = weights.sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!("pooling weights sum to {total}, not 1")));
    }
    Ok(weights.dot(&features))
}

/// Channel-wise maximum over points.
pub fn max_pool(features: ArrayView2<f64>) -> Result<Array1<f64>> {
    if features.nrows() == 0 {
        return Err(Error::EmptyCloud("max pooling over no points".into()));
    }
    Ok(features.fold_axis(Axis(0), f64::NEG_INFINITY, |&a, &b| a.max(b)))
}

pub fn encoder_forward(enc: &Encoder, cloud: &AggregatedCloud) -> Result<Array1<f64>> {
    let (g, _) = enc.forward_batch(&[cloud])?;
    Ok(g.row(0).to_owned())
}

/// Exact parameter gradients of `upstream . encoder_forward(cloud)`.
pub fn encoder_backward(enc: &Encoder, cloud: &AggregatedCloud, upstream: ArrayView1<f64>) -> Result<Encoder> {
    if upstream.len() != enc.feature_dim() {
        return Err(Error::dims("upstream gradient", enc.feature_dim(), upstream.len()));
    }
    let (_, trace) = enc.forward_batch(&[cloud])?;
    let mut grad = enc.zeros_like();
    let up = upstream.to_owned().insert_axis(Axis(0));
    enc.backward_batch(&trace, up.view(), &mut grad);
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::nn::DenseLayer;
    use crate::pointcloud::TimedPoint;
    use crate::rng::seeded;
    use ndarray::array;
    use rand::seq::SliceRandom;

    fn random_cloud(n: usize, seed: u64) -> AggregatedCloud {
        let mut rng = seeded(seed);
        AggregatedCloud {
            points: (0..n)
                .map(|i| TimedPoint {
                    position: Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
                    t_rel: [0.0, 0.5, 1.0][i % 3],
                })
                .collect(),
        }
    }

    fn small_cfg() -> EncoderConfig {
        EncoderConfig {
            widths: vec![5, 6, 4],
            head_hidden: 3,
            ..EncoderConfig::default()
        }
    }

    #[test]
    fn zero_parameters_give_zero_features() {
        let mut enc = Encoder::new(&small_cfg(), &mut seeded(0)).unwrap();
        enc.fill(0.0);
        let cloud = random_cloud(20, 1);
        assert!(encode_points(&enc.points, &cloud).iter().all(|&v| v == 0.0));
        assert!(encoder_forward(&enc, &cloud).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_layer_reproduces_coordinates() {
        let mut layer = DenseLayer::zeros(3, 5, Activation::Identity);
        for i in 0..3 {
            layer.weight[[i, i]] = 1.0;
        }
        let enc = PointFeatureEncoder { mlp: Mlp { layers: vec![layer] } };
        let cloud = random_cloud(10, 2);
        let f = encode_points(&enc, &cloud);
        for (i, p) in cloud.points.iter().enumerate() {
            assert_eq!([f[[i, 0]], f[[i, 1]], f[[i, 2]]], [p.position.x, p.position.y, p.position.z]);
            assert_eq!(f[[i, 3]], 0.0);
        }
    }

    #[test]
    fn pointwise_rows_permute_with_points() {
        let enc = Encoder::new(&small_cfg(), &mut seeded(4)).unwrap();
        let cloud = random_cloud(30, 5);
        let mut perm: Vec<usize> = (0..30).collect();
        perm.shuffle(&mut seeded(6));
        let shuffled = AggregatedCloud { points: perm.iter().map(|&i| cloud.points[i]).collect() };
        let a = encode_points(&enc.points, &cloud);
        let b = encode_points(&enc.points, &shuffled);
        for (row, &i) in perm.iter().enumerate() {
            assert_eq!(b.row(row), a.row(i));
        }
    }

    #[test]
    fn attention_examples() {
        let enc = Encoder::new(&small_cfg(), &mut seeded(7)).unwrap();
        let mut flat = random_cloud(12, 8);
        for p in &mut flat.points {
            p.t_rel = 0.3;
        }
        let w = attention_weights(&enc.head, &flat).unwrap();
        assert!(w.iter().all(|&v| (v - 1.0 / 12.0).abs() < 1e-15));

        let single = random_cloud(1, 9);
        assert_eq!(attention_weights(&enc.head, &single).unwrap()[0], 1.0);

        // A head whose logit is 4 * t_rel: more recent points weigh more,
        // checked against a direct softmax.
        let mut head = TemporalAttentionHead {
            mlp: Mlp {
                layers: vec![DenseLayer::zeros(1, 1, Activation::Identity)],
            },
        };
        head.mlp.layers[0].weight[[0, 0]] = 4.0;
        let cloud = random_cloud(9, 10);
        let w = attention_weights(&head, &cloud).unwrap();
        let z: f64 = cloud.points.iter().map(|p| (4.0 * p.t_rel).exp()).sum();
        for (i, p) in cloud.points.iter().enumerate() {
            assert!((w[i] - (4.0 * p.t_rel).exp() / z).abs() < 1e-15);
            for (j, q) in cloud.points.iter().enumerate() {
                if p.t_rel > q.t_rel {
                    assert!(w[i] >= w[j]);
                }
            }
        }
        assert!(attention_weights(&head, &AggregatedCloud::default()).is_err());
    }

    #[test]
    fn pooling_examples() {
        let f = array![[1.0, 2.0], [3.0, 4.0], [5.0, -6.0]];
        assert_eq!(tap_pool(f.view(), array![0.0, 1.0, 0.0].view()).unwrap(), array![3.0, 4.0]);
        let mean = tap_pool(f.view(), array![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0].view()).unwrap();
        assert!((mean[0] - 3.0).abs() < 1e-15 && (mean[1] - 0.0).abs() < 1e-15);
        assert!(tap_pool(f.view(), array![0.5, 0.5].view()).is_err());
        assert!(tap_pool(f.view(), array![0.5, 0.6, 0.0].view()).is_err());
        assert_eq!(max_pool(f.view()).unwrap(), array![5.0, 4.0]);

        // Brute-force accumulation oracle.
        let mut rng = seeded(11);
        let feats = Array2::from_shape_fn((50, 7), |_| rng.random_range(-2.0..2.0));
        let raw: Vec<f64> = (0..50).map(|_| rng.random_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w = Array1::from_iter(raw.iter().map(|v| v / total));
        let g = tap_pool(feats.view(), w.view()).unwrap();
        for k in 0..7 {
            let mut acc = 0.0;
            for i in 0..50 {
                acc += w[i] * feats[[i, k]];
            }
            assert!((acc - g[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_is_permutation_invariant() {
        for pooling in [Pooling::TimeAware, Pooling::Max] {
            let cfg = EncoderConfig { pooling, ..small_cfg() };
            let enc = Encoder::new(&cfg, &mut seeded(12)).unwrap();
            let cloud = random_cloud(40, 13);
            let mut pts = cloud.points.clone();
            pts.shuffle(&mut seeded(14));
            let a = encoder_forward(&enc, &cloud).unwrap();
            let b = encoder_forward(&enc, &AggregatedCloud { points: pts }).unwrap();
            assert!((&a - &b).iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let enc = Encoder::new(&small_cfg(), &mut seeded(15)).unwrap();
        let cloud = random_cloud(16, 16);
        let g = encoder_backward(&enc, &cloud, Array1::zeros(4).view()).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
        assert!(encoder_backward(&enc, &cloud, Array1::zeros(3).view()).is_err());
    }

    #[test]
    fn dead_relu_weight_has_zero_gradient() {
        let mut enc = Encoder::new(&small_cfg(), &mut seeded(17)).unwrap();
        // Unit 0 of the first layer never activates: zero weights, negative bias.
        enc.points.mlp.layers[0].weight.row_mut(0).fill(0.0);
        enc.points.mlp.layers[0].bias[0] = -1.0;
        let cloud = random_cloud(16, 18);
        let g = encoder_backward(&enc, &cloud, Array1::from_elem(4, 1.0).view()).unwrap();
        assert!(g.points.mlp.layers[0].weight.row(0).iter().all(|&v| v == 0.0));
        assert_eq!(g.points.mlp.layers[0].bias[0], 0.0);
    }

    fn fd_check(enc: &mut Encoder, cloud: &AggregatedCloud, upstream: &Array1<f64>) {
        // Zero biases put dead units exactly on the ReLU kink.
        for l in enc.points.mlp.layers.iter_mut().chain(enc.head.mlp.layers.iter_mut()) {
            l.bias.fill(0.05);
        }
        let analytic = encoder_backward(enc, cloud, upstream.view()).unwrap().flat();
        let base = enc.flat();
        let h = 1e-5;
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] += h;
            enc.set_flat(&p);
            let up = encoder_forward(enc, cloud).unwrap().dot(upstream);
            p[i] -= 2.0 * h;
            enc.set_flat(&p);
            let down = encoder_forward(enc, cloud).unwrap().dot(upstream);
            let fd = (up - down) / (2.0 * h);
            let rel = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: fd {fd} analytic {}", analytic[i]);
        }
        enc.set_flat(&base);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut enc = Encoder::new(&small_cfg(), &mut seeded(19)).unwrap();
        let cloud = random_cloud(12, 20);
        fd_check(&mut enc, &cloud, &array![0.3, -1.0, 0.7, 0.2]);

        let cfg = EncoderConfig { feature_conditioned: true, ..small_cfg() };
        let mut enc = Encoder::new(&cfg, &mut seeded(21)).unwrap();
        fd_check(&mut enc, &cloud, &array![1.0, 0.5, -0.4, 0.1]);

        let cfg = EncoderConfig { pooling: Pooling::Max, ..small_cfg() };
        let mut enc = Encoder::new(&cfg, &mut seeded(22)).unwrap();
        fd_check(&mut enc, &cloud, &array![1.0, -0.5, 0.4, 2.0]);
    }
}
