//! A small decoder surrogate: learnable content queries refined by a
//! stack of attention layers, with classification and box heads after
//! every layer.
//!
//! The model is deliberately tiny and fully explicit — forward passes
//! cache what the hand-written backward pass needs, and gradients are
//! accumulated by reversing each operation.  Conventions: matrices are
//! row-major, weight tensors are stored `output_dim x input_dim` and
//! applied as `x * W^T`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::matcher::solve_assignment;
use crate::partition::PartitionSpec;
use crate::surrogate::scene::Scene;

/// Noise scale on warm-started parameters.
const INIT_JITTER: f64 = 0.02;
/// Noise scale on the content-query warm start.  Deliberately sized so
/// queries start only loosely tied to their group's direction: the
/// group *mean* stays aligned with its prototype but individual
/// queries scatter (same-group cosines around 0.4), so keeping a
/// coherent group-to-class binding through training is a property of
/// the objective, not of the initialization.
const QUERY_JITTER: f64 = 0.3;
/// Scale of the prototype-aligned class-head rows.  Kept moderate so
/// class identity is not hard-wired by the head alone and must be
/// sustained by the learned query geometry.
const CLASS_HEAD_SCALE: f64 = 1.0;
/// Scale of the identity-aligned feature projection.
const CROSS_PROJ_SCALE: f64 = 0.5;
/// Scale of the box-head initialization.
const BOX_HEAD_SCALE: f64 = 0.05;

/// One refinement layer.
#[derive(Debug, Clone)]
pub struct DecoderLayer {
    /// Query self-interaction, `dim x dim`.
    pub self_mix: Matrix,
    /// Feature projection into query space, `dim x feature_dim`.
    pub cross_proj: Matrix,
    /// Per-dimension bias.
    pub bias: Vec<f64>,
}

/// The surrogate model.
#[derive(Debug, Clone)]
pub struct SurrogateModel {
    /// Learnable content queries, `queries x dim`; also the layer-0 state.
    pub content_queries: Matrix,
    /// Refinement layers.
    pub layers: Vec<DecoderLayer>,
    /// Classification head, `(classes + 1) x dim`; the extra row scores
    /// the background ("no object") class.
    pub class_head: Matrix,
    /// Box regression head, `4 x dim`.
    pub box_head: Matrix,
    /// Number of real object classes.
    pub classes: usize,
}

/// Predictions read off one layer's refined queries.
#[derive(Debug, Clone)]
pub struct LayerPrediction {
    /// Class logits, `queries x (classes + 1)`.
    pub logits: Matrix,
    /// Boxes after the sigmoid, `queries x 4`.
    pub boxes: Matrix,
}

/// Forward-pass record: query states, per-layer predictions, and the
/// caches the backward pass consumes.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// `layers + 1` query states; index 0 is the content queries.
    pub states: Vec<Matrix>,
    /// Per-layer predictions, computed from `states[l + 1]`.
    pub predictions: Vec<LayerPrediction>,
    /// Per-layer attention rows (`queries x objects`), absent for empty
    /// scenes.
    attention: Vec<Option<Matrix>>,
    /// Per-layer projected features (`objects x dim`), absent for empty
    /// scenes.
    projected: Vec<Option<Matrix>>,
    /// Scene features (`objects x feature_dim`).
    features: Option<Matrix>,
}

/// Gradients of one layer's parameters.
#[derive(Debug, Clone)]
pub struct LayerGrads {
    /// Gradient of [`DecoderLayer::self_mix`].
    pub self_mix: Matrix,
    /// Gradient of [`DecoderLayer::cross_proj`].
    pub cross_proj: Matrix,
    /// Gradient of [`DecoderLayer::bias`].
    pub bias: Vec<f64>,
}

/// Gradients of every model parameter.
#[derive(Debug, Clone)]
pub struct ParamGrads {
    /// Gradient of the content queries.
    pub content_queries: Matrix,
    /// Per-layer gradients.
    pub layers: Vec<LayerGrads>,
    /// Gradient of the classification head.
    pub class_head: Matrix,
    /// Gradient of the box head.
    pub box_head: Matrix,
}

impl ParamGrads {
    /// Zero gradients with the model's shapes.
    pub fn zeros_like(model: &SurrogateModel) -> Self {
        Self {
            content_queries: Matrix::zeros(
                model.content_queries.rows(),
                model.content_queries.cols(),
            ),
            layers: model
                .layers
                .iter()
                .map(|l| LayerGrads {
                    self_mix: Matrix::zeros(l.self_mix.rows(), l.self_mix.cols()),
                    cross_proj: Matrix::zeros(l.cross_proj.rows(), l.cross_proj.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
            class_head: Matrix::zeros(model.class_head.rows(), model.class_head.cols()),
            box_head: Matrix::zeros(model.box_head.rows(), model.box_head.cols()),
        }
    }
}

/// Adjoints of one layer's predictions.
#[derive(Debug, Clone)]
pub struct PredictionAdjoint {
    /// Gradient with respect to the logits.
    pub dlogits: Matrix,
    /// Gradient with respect to the post-sigmoid boxes.
    pub dboxes: Matrix,
}

impl SurrogateModel {
    /// Warm-started initialization: queries of group `k` start near the
    /// lifted prototype of class `k`, the class head scores each class by
    /// its prototype direction, and the feature projection starts near a
    /// scaled identity.  This aligns group `k` with class `k` at epoch 0;
    /// whether training *keeps* that alignment is what the consistency
    /// metric measures.
    pub fn init(
        partition: &PartitionSpec,
        dim: usize,
        layers: usize,
        prototypes: &Matrix,
        seed: u64,
    ) -> Result<Self> {
        if dim == 0 || layers == 0 {
            return Err(Error::InvalidConfig(
                "surrogate needs dim >= 1 and at least one layer".into(),
            ));
        }
        if prototypes.rows() != partition.classes() {
            return Err(Error::InvalidConfig(format!(
                "{} prototypes for {} classes",
                prototypes.rows(),
                partition.classes()
            )));
        }
        let queries = partition.total_queries();
        let classes = partition.classes();
        let feature_dim = prototypes.cols();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut normal = |scale: f64| -> f64 {
            let g: f64 = rng.sample(rand_distr::StandardNormal);
            scale * g
        };

        let mut content_queries = Matrix::zeros(queries, dim);
        for i in 0..queries {
            let lifted = lift(prototypes.row(partition.group_of(i)), dim);
            let row = content_queries.row_mut(i);
            for d in 0..dim {
                row[d] = lifted[d] + normal(QUERY_JITTER);
            }
        }

        let mut model_layers = Vec::with_capacity(layers);
        for _ in 0..layers {
            let mut self_mix = Matrix::zeros(dim, dim);
            for v in self_mix.data_mut() {
                *v = normal(INIT_JITTER);
            }
            let mut cross_proj = Matrix::zeros(dim, feature_dim);
            for d in 0..dim {
                for f in 0..feature_dim {
                    let identity = if d == f { CROSS_PROJ_SCALE } else { 0.0 };
                    cross_proj.set(d, f, identity + normal(INIT_JITTER));
                }
            }
            model_layers.push(DecoderLayer { self_mix, cross_proj, bias: vec![0.0; dim] });
        }

        let mut class_head = Matrix::zeros(classes + 1, dim);
        for c in 0..classes {
            let lifted = lift(prototypes.row(c), dim);
            let row = class_head.row_mut(c);
            for d in 0..dim {
                row[d] = CLASS_HEAD_SCALE * lifted[d] + normal(INIT_JITTER);
            }
        }
        for d in 0..dim {
            class_head.set(classes, d, normal(INIT_JITTER));
        }
        let mut box_head = Matrix::zeros(4, dim);
        for v in box_head.data_mut() {
            *v = normal(BOX_HEAD_SCALE);
        }

        Ok(Self { content_queries, layers: model_layers, class_head, box_head, classes })
    }

    /// Feature dimension expected by the cross projection.
    pub fn feature_dim(&self) -> usize {
        self.layers[0].cross_proj.cols()
    }

    /// Runs the decoder on a scene.
    ///
    /// Each layer computes `Q' = Q + Q W_s^T + 1 b^T + A P` with
    /// `P = F W_c^T` and `A = softmax_rows(Q P^T)`; empty scenes skip the
    /// attention term.  Predictions are read off every refined state.
    pub fn forward(&self, scene: &Scene) -> Result<ForwardPass> {
        let features = scene.feature_matrix();
        if let Some(f) = &features {
            if f.cols() != self.feature_dim() {
                return Err(Error::InvalidInput(format!(
                    "scene features have dimension {}, model expects {}",
                    f.cols(),
                    self.feature_dim()
                )));
            }
        }
        if scene.objects.iter().any(|o| o.class >= self.classes) {
            return Err(Error::InvalidInput("scene contains an out-of-range class".into()));
        }
        let mut states = vec![self.content_queries.clone()];
        let mut predictions = Vec::with_capacity(self.layers.len());
        let mut attention = Vec::with_capacity(self.layers.len());
        let mut projected = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let q = states.last().expect("states never empty");
            let mut next = q.clone();
            next.add_scaled(1.0, &q.matmul_transpose(&layer.self_mix));
            for r in 0..next.rows() {
                let row = next.row_mut(r);
                for (slot, &b) in row.iter_mut().zip(layer.bias.iter()) {
                    *slot += b;
                }
            }
            if let Some(f) = &features {
                let p = f.matmul_transpose(&layer.cross_proj);
                let a = softmax_rows(&q.matmul_transpose(&p));
                next.add_scaled(1.0, &a.matmul(&p));
                attention.push(Some(a));
                projected.push(Some(p));
            } else {
                attention.push(None);
                projected.push(None);
            }
            predictions.push(LayerPrediction {
                logits: next.matmul_transpose(&self.class_head),
                boxes: sigmoid(&next.matmul_transpose(&self.box_head)),
            });
            states.push(next);
        }
        Ok(ForwardPass { states, predictions, attention, projected, features })
    }

    /// Reverse sweep: accumulates parameter gradients from per-layer
    /// prediction adjoints plus contrastive adjoints attached to chosen
    /// query states.
    ///
    /// With `stop_gradient` set, contrastive adjoints at states deeper
    /// than the content queries are not propagated through decoder layers
    /// (deeper targets then contribute nothing); the state-0 adjoint lands
    /// directly on the content queries either way, so the flag does not
    /// change behavior for the default target set `{0}`.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        prediction_adjoints: &[PredictionAdjoint],
        state_adjoints: &[(usize, Matrix)],
        stop_gradient: bool,
    ) -> ParamGrads {
        assert_eq!(prediction_adjoints.len(), self.layers.len());
        let n = self.content_queries.rows();
        let dim = self.content_queries.cols();
        let mut grads = ParamGrads::zeros_like(self);
        let mut d_state: Vec<Matrix> =
            (0..=self.layers.len()).map(|_| Matrix::zeros(n, dim)).collect();

        for (l, adj) in prediction_adjoints.iter().enumerate() {
            let q = &pass.states[l + 1];
            // logits = q * class_head^T
            d_state[l + 1].add_scaled(1.0, &adj.dlogits.matmul(&self.class_head));
            grads.class_head.add_scaled(1.0, &adj.dlogits.transpose_matmul(q));
            // boxes = sigmoid(q * box_head^T)
            let boxes = &pass.predictions[l].boxes;
            let mut dz = adj.dboxes.clone();
            for (slot, &b) in dz.data_mut().iter_mut().zip(boxes.data().iter()) {
                *slot *= b * (1.0 - b);
            }
            d_state[l + 1].add_scaled(1.0, &dz.matmul(&self.box_head));
            grads.box_head.add_scaled(1.0, &dz.transpose_matmul(q));
        }

        for (index, adjoint) in state_adjoints {
            debug_assert!(*index < d_state.len());
            if stop_gradient && *index > 0 {
                continue;
            }
            d_state[*index].add_scaled(1.0, adjoint);
        }

        for lay in (0..self.layers.len()).rev() {
            let layer = &self.layers[lay];
            let dq_out = d_state[lay + 1].clone();
            let q_in = &pass.states[lay];
            // Identity skip.
            d_state[lay].add_scaled(1.0, &dq_out);
            // Self interaction: out += q_in * self_mix^T.
            d_state[lay].add_scaled(1.0, &dq_out.matmul(&layer.self_mix));
            grads.layers[lay].self_mix.add_scaled(1.0, &dq_out.transpose_matmul(q_in));
            // Bias broadcast: column sums.
            for r in 0..n {
                let row = dq_out.row(r);
                for (slot, &g) in grads.layers[lay].bias.iter_mut().zip(row.iter()) {
                    *slot += g;
                }
            }
            // Attention: attended = A P, A = softmax(q_in P^T), P = F W_c^T.
            if let (Some(a), Some(p)) = (&pass.attention[lay], &pass.projected[lay]) {
                let features = pass.features.as_ref().expect("attention implies features");
                let d_a = dq_out.matmul_transpose(p);
                let mut d_p = a.transpose_matmul(&dq_out);
                let d_z = softmax_backward(a, &d_a);
                d_state[lay].add_scaled(1.0, &d_z.matmul(p));
                d_p.add_scaled(1.0, &d_z.transpose_matmul(q_in));
                grads.layers[lay].cross_proj.add_scaled(1.0, &d_p.transpose_matmul(features));
            }
        }
        grads.content_queries = d_state.into_iter().next().expect("state 0 exists");
        grads
    }
}

/// Zero-padded or truncated copy of `v` with length `dim`.
pub fn lift(v: &[f64], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    for (slot, &x) in out.iter_mut().zip(v.iter()) {
        *slot = x;
    }
    out
}

/// Row-wise softmax with max shifting.
fn softmax_rows(z: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(z.rows(), z.cols());
    for r in 0..z.rows() {
        let row = z.row(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut sum = 0.0;
        let dst = out.row_mut(r);
        for (slot, &v) in dst.iter_mut().zip(row.iter()) {
            let e = (v - max).exp();
            *slot = e;
            sum += e;
        }
        for slot in dst.iter_mut() {
            *slot /= sum;
        }
    }
    out
}

/// Backward of a row-wise softmax: `dZ = A ⊙ (dA - rowsum(A ⊙ dA))`.
fn softmax_backward(a: &Matrix, d_a: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.rows(), a.cols());
    for r in 0..a.rows() {
        let ar = a.row(r);
        let gr = d_a.row(r);
        let inner: f64 = ar.iter().zip(gr.iter()).map(|(&x, &g)| x * g).sum();
        let dst = out.row_mut(r);
        for m in 0..ar.len() {
            dst[m] = ar[m] * (gr[m] - inner);
        }
    }
    out
}

/// Element-wise logistic function.
fn sigmoid(z: &Matrix) -> Matrix {
    let mut out = z.clone();
    for v in out.data_mut() {
        *v = 1.0 / (1.0 + (-*v).exp());
    }
    out
}

/// Detection loss of one layer's predictions against a scene.
#[derive(Debug, Clone)]
pub struct BaseLoss {
    /// Mean matched cost plus mean background cross-entropy of unmatched
    /// queries.
    pub value: f64,
    /// Gradient with respect to the logits.
    pub grad_logits: Matrix,
    /// Gradient with respect to the post-sigmoid boxes.
    pub grad_boxes: Matrix,
    /// Matched `(query, object)` pairs in ascending query order.
    pub matches: Vec<(usize, usize)>,
}

/// Matches predictions to objects (cross-entropy plus L1 box cost) and
/// scores the assignment.  The assignment itself is treated as a constant
/// in the gradients.  Scenes with more objects than queries leave the
/// extra objects unmatched; empty scenes score every query against the
/// background class.
pub fn base_loss(prediction: &LayerPrediction, scene: &Scene, classes: usize) -> Result<BaseLoss> {
    let n = prediction.logits.rows();
    let width = prediction.logits.cols();
    if width != classes + 1 {
        return Err(Error::InvalidInput(format!(
            "logits have width {width}, expected {} classes plus background",
            classes
        )));
    }
    let background = classes;
    let m = scene.objects.len();

    // Per-query log-softmax and softmax.
    let mut log_sm = Matrix::zeros(n, width);
    let mut sm = Matrix::zeros(n, width);
    for i in 0..n {
        let row = prediction.logits.row(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |acc, &v| acc.max(v));
        let mut z = 0.0;
        for &v in row {
            z += (v - max).exp();
        }
        let log_z = z.ln();
        for c in 0..width {
            let lp = row[c] - max - log_z;
            log_sm.set(i, c, lp);
            sm.set(i, c, lp.exp());
        }
    }

    let mut grad_logits = Matrix::zeros(n, width);
    let mut grad_boxes = Matrix::zeros(n, 4);
    if m == 0 {
        let scale = 1.0 / n as f64;
        let mut value = 0.0;
        for i in 0..n {
            value -= log_sm.get(i, background);
            for c in 0..width {
                let indicator = if c == background { 1.0 } else { 0.0 };
                grad_logits.add_at(i, c, scale * (sm.get(i, c) - indicator));
            }
        }
        return Ok(BaseLoss {
            value: value * scale,
            grad_logits,
            grad_boxes,
            matches: Vec::new(),
        });
    }

    let mut costs = Matrix::zeros(n, m);
    for i in 0..n {
        for (j, object) in scene.objects.iter().enumerate() {
            let mut cost = -log_sm.get(i, object.class);
            for d in 0..4 {
                cost += (prediction.boxes.get(i, d) - object.bbox[d]).abs();
            }
            costs.set(i, j, cost);
        }
    }
    let assignment = solve_assignment(&costs)?;
    let matched_count = assignment.pairs.len();
    let matched_scale = 1.0 / matched_count as f64;
    let mut value = assignment.total_cost * matched_scale;
    let mut matched_query = vec![false; n];
    for &(i, j) in &assignment.pairs {
        matched_query[i] = true;
        let object = &scene.objects[j];
        for c in 0..width {
            let indicator = if c == object.class { 1.0 } else { 0.0 };
            grad_logits.add_at(i, c, matched_scale * (sm.get(i, c) - indicator));
        }
        for d in 0..4 {
            let diff = prediction.boxes.get(i, d) - object.bbox[d];
            let sign = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            grad_boxes.add_at(i, d, matched_scale * sign);
        }
    }
    let unmatched: Vec<usize> = (0..n).filter(|&i| !matched_query[i]).collect();
    if !unmatched.is_empty() {
        let bg_scale = 1.0 / unmatched.len() as f64;
        let mut bg_value = 0.0;
        for &i in &unmatched {
            bg_value -= log_sm.get(i, background);
            for c in 0..width {
                let indicator = if c == background { 1.0 } else { 0.0 };
                grad_logits.add_at(i, c, bg_scale * (sm.get(i, c) - indicator));
            }
        }
        value += bg_value * bg_scale;
    }
    Ok(BaseLoss { value, grad_logits, grad_boxes, matches: assignment.pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::partition_queries;
    use crate::surrogate::scene::{SceneGenerator, SceneParams};

    fn tiny_setup() -> (SurrogateModel, SceneGenerator, PartitionSpec) {
        let partition = partition_queries(5, 3).unwrap();
        let params = SceneParams {
            classes: 3,
            max_objects: 3,
            overlap_prob: 0.4,
            noise: 0.05,
            feature_dim: 4,
        };
        let generator = SceneGenerator::new(params, 31).unwrap();
        let model =
            SurrogateModel::init(&partition, 4, 2, generator.prototypes(), 77).unwrap();
        (model, generator, partition)
    }

    #[test]
    fn forward_shapes_and_finiteness() {
        let (model, generator, _) = tiny_setup();
        let scene = generator.generate(5);
        let pass = model.forward(&scene).unwrap();
        assert_eq!(pass.states.len(), 3);
        assert_eq!(pass.predictions.len(), 2);
        for state in &pass.states {
            assert_eq!((state.rows(), state.cols()), (5, 4));
            assert!(state.is_finite());
        }
        for pred in &pass.predictions {
            assert_eq!((pred.logits.rows(), pred.logits.cols()), (5, 4));
            assert_eq!((pred.boxes.rows(), pred.boxes.cols()), (5, 4));
            assert!(pred.boxes.data().iter().all(|&b| (0.0..=1.0).contains(&b)));
        }
    }

    #[test]
    fn empty_scene_is_background_only_and_finite() {
        let (model, _, _) = tiny_setup();
        let scene = Scene { objects: Vec::new(), overlap_edges: Vec::new() };
        let pass = model.forward(&scene).unwrap();
        let loss = base_loss(&pass.predictions[1], &scene, model.classes).unwrap();
        assert!(loss.value.is_finite());
        assert!(loss.matches.is_empty());
        assert!(loss.grad_boxes.data().iter().all(|&g| g == 0.0));
        assert!(loss.grad_logits.is_finite());
    }

    #[test]
    fn base_loss_drops_when_predictions_match_the_scene() {
        let (model, generator, _) = tiny_setup();
        let scene = generator.generate(9);
        let pass = model.forward(&scene).unwrap();
        let before = base_loss(&pass.predictions[1], &scene, model.classes).unwrap();
        // Hand the prediction the right answer: crank the matched logits.
        let mut better_logits = pass.predictions[1].logits.clone();
        for &(i, j) in &before.matches {
            for c in 0..model.classes + 1 {
                let v = if c == scene.objects[j].class { 10.0 } else { -10.0 };
                better_logits.set(i, c, v);
            }
        }
        let better = LayerPrediction { logits: better_logits, boxes: pass.predictions[1].boxes.clone() };
        let after = base_loss(&better, &scene, model.classes).unwrap();
        assert!(after.value < before.value);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let (mut model, generator, partition) = tiny_setup();
        let scene = generator.generate(3);
        let cfg = crate::losses::LossConfig::default();
        let targets = [0usize];

        // Scalar objective: per-layer detection losses (averaged) plus the
        // combined contrastive loss at the target states.
        let objective = |model: &SurrogateModel| -> f64 {
            let pass = model.forward(&scene).unwrap();
            let mut total = 0.0;
            for pred in &pass.predictions {
                total += base_loss(pred, &scene, model.classes).unwrap().value;
            }
            total /= pass.predictions.len() as f64;
            for &t in &targets {
                total += crate::losses::mmcl_loss(&pass.states[t], &partition, &cfg)
                    .unwrap()
                    .value;
            }
            total
        };

        let pass = model.forward(&scene).unwrap();
        let layer_scale = 1.0 / pass.predictions.len() as f64;
        let mut adjoints = Vec::new();
        for pred in &pass.predictions {
            let bl = base_loss(pred, &scene, model.classes).unwrap();
            let mut dlogits = bl.grad_logits;
            dlogits.scale(layer_scale);
            let mut dboxes = bl.grad_boxes;
            dboxes.scale(layer_scale);
            adjoints.push(PredictionAdjoint { dlogits, dboxes });
        }
        let state_adjoints: Vec<(usize, Matrix)> = targets
            .iter()
            .map(|&t| {
                (t, crate::losses::mmcl_loss(&pass.states[t], &partition, &cfg).unwrap().gradient)
            })
            .collect();
        let grads = model.backward(&pass, &adjoints, &state_adjoints, false);

        let h = 1e-6;
        let check = |analytic: f64, value_at: &mut dyn FnMut(f64) -> f64, label: &str| {
            let plus = value_at(h);
            let minus = value_at(-h);
            let fd = (plus - minus) / (2.0 * h);
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-3);
            assert!(rel < 1e-4, "{label}: analytic {analytic} vs fd {fd}");
        };

        // Content queries.
        for r in 0..model.content_queries.rows() {
            for c in 0..model.content_queries.cols() {
                let orig = model.content_queries.get(r, c);
                let analytic = grads.content_queries.get(r, c);
                let mut probe = |delta: f64| {
                    model.content_queries.set(r, c, orig + delta);
                    let v = objective(&model);
                    model.content_queries.set(r, c, orig);
                    v
                };
                check(analytic, &mut probe, &format!("queries ({r}, {c})"));
            }
        }
        // One layer's parameters.
        for idx in 0..model.layers[0].self_mix.data().len() {
            let orig = model.layers[0].self_mix.data()[idx];
            let analytic = grads.layers[0].self_mix.data()[idx];
            let mut probe = |delta: f64| {
                model.layers[0].self_mix.data_mut()[idx] = orig + delta;
                let v = objective(&model);
                model.layers[0].self_mix.data_mut()[idx] = orig;
                v
            };
            check(analytic, &mut probe, &format!("self_mix [{idx}]"));
        }
        for idx in 0..model.layers[1].cross_proj.data().len() {
            let orig = model.layers[1].cross_proj.data()[idx];
            let analytic = grads.layers[1].cross_proj.data()[idx];
            let mut probe = |delta: f64| {
                model.layers[1].cross_proj.data_mut()[idx] = orig + delta;
                let v = objective(&model);
                model.layers[1].cross_proj.data_mut()[idx] = orig;
                v
            };
            check(analytic, &mut probe, &format!("cross_proj [{idx}]"));
        }
        for idx in 0..model.layers[0].bias.len() {
            let orig = model.layers[0].bias[idx];
            let analytic = grads.layers[0].bias[idx];
            let mut probe = |delta: f64| {
                model.layers[0].bias[idx] = orig + delta;
                let v = objective(&model);
                model.layers[0].bias[idx] = orig;
                v
            };
            check(analytic, &mut probe, &format!("bias [{idx}]"));
        }
        // Heads.
        for idx in 0..model.class_head.data().len() {
            let orig = model.class_head.data()[idx];
            let analytic = grads.class_head.data()[idx];
            let mut probe = |delta: f64| {
                model.class_head.data_mut()[idx] = orig + delta;
                let v = objective(&model);
                model.class_head.data_mut()[idx] = orig;
                v
            };
            check(analytic, &mut probe, &format!("class_head [{idx}]"));
        }
        for idx in 0..model.box_head.data().len() {
            let orig = model.box_head.data()[idx];
            let analytic = grads.box_head.data()[idx];
            let mut probe = |delta: f64| {
                model.box_head.data_mut()[idx] = orig + delta;
                let v = objective(&model);
                model.box_head.data_mut()[idx] = orig;
                v
            };
            check(analytic, &mut probe, &format!("box_head [{idx}]"));
        }
    }

    #[test]
    fn stop_gradient_only_drops_deep_targets() {
        let (model, generator, partition) = tiny_setup();
        let scene = generator.generate(4);
        let cfg = crate::losses::LossConfig::default();
        let pass = model.forward(&scene).unwrap();
        let no_adjoints: Vec<PredictionAdjoint> = (0..model.layers.len())
            .map(|_| PredictionAdjoint {
                dlogits: Matrix::zeros(5, 4),
                dboxes: Matrix::zeros(5, 4),
            })
            .collect();
        let g0 = crate::losses::mmcl_loss(&pass.states[0], &partition, &cfg).unwrap().gradient;
        let g1 = crate::losses::mmcl_loss(&pass.states[1], &partition, &cfg).unwrap().gradient;

        // Target 0 behaves identically under both flag settings.
        let a = model.backward(&pass, &no_adjoints, &[(0, g0.clone())], false);
        let b = model.backward(&pass, &no_adjoints, &[(0, g0)], true);
        assert_eq!(a.content_queries.data(), b.content_queries.data());

        // A deeper target contributes nothing when stopped.
        let stopped = model.backward(&pass, &no_adjoints, &[(1, g1.clone())], true);
        assert!(stopped.content_queries.data().iter().all(|&g| g == 0.0));
        let flowing = model.backward(&pass, &no_adjoints, &[(1, g1)], false);
        assert!(flowing.content_queries.data().iter().any(|&g| g != 0.0));
    }
}
