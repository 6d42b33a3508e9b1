//! Synthetic detection scenes with controllable occlusion.
//!
//! A scene holds up to `max_objects` objects, each with a class, a box in
//! the unit square, and a feature vector derived from its class prototype.
//! Overlap between boxes can be forced with a configurable probability;
//! overlapping objects have their features blended toward their neighbors'
//! prototypes, which is what makes heavily occluded scenes hard to tell
//! apart by features alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix};
use crate::seeds;

/// Box width/height are drawn from this range; centers keep the whole box
/// inside the unit square.
const SIZE_RANGE: std::ops::Range<f64> = 0.05..0.25;

/// Placement attempts per size level when avoiding overlap.
const PLACEMENT_ATTEMPTS: usize = 60;

/// One object: class, box, and appearance feature.
#[derive(Debug, Clone)]
pub struct SceneObject {
    /// Class index in `0..classes`.
    pub class: usize,
    /// Box as `[center_x, center_y, width, height]`, contained in the
    /// unit square.
    pub bbox: [f64; 4],
    /// Appearance feature of length `feature_dim`.
    pub feature: Vec<f64>,
}

/// A generated scene.
#[derive(Debug, Clone)]
pub struct Scene {
    /// The objects, in generation order.
    pub objects: Vec<SceneObject>,
    /// Unordered pairs `(i, j)`, `i < j`, whose boxes intersect.
    pub overlap_edges: Vec<(usize, usize)>,
}

impl Scene {
    /// Object features stacked into a matrix, or `None` for an empty scene.
    pub fn feature_matrix(&self) -> Option<Matrix> {
        if self.objects.is_empty() {
            return None;
        }
        let rows: Vec<Vec<f64>> = self.objects.iter().map(|o| o.feature.clone()).collect();
        Some(Matrix::from_rows(&rows).expect("scene features are finite and rectangular"))
    }
}

/// Scene-generation parameters.
#[derive(Debug, Clone)]
pub struct SceneParams {
    /// Number of object classes.
    pub classes: usize,
    /// Upper bound (inclusive) on the object count; the count is uniform
    /// in `1..=max_objects`.
    pub max_objects: usize,
    /// Probability that each new object is forced to overlap an earlier
    /// one.
    pub overlap_prob: f64,
    /// Standard deviation of the additive Gaussian feature noise.
    pub noise: f64,
    /// Feature dimension.
    pub feature_dim: usize,
}

impl SceneParams {
    /// Checks ranges.
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 {
            return Err(Error::InvalidConfig("scenes need at least one class".into()));
        }
        if self.max_objects == 0 {
            return Err(Error::InvalidConfig("scenes need max_objects >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.overlap_prob) {
            return Err(Error::InvalidConfig(format!(
                "overlap probability {} outside [0, 1]",
                self.overlap_prob
            )));
        }
        if !self.noise.is_finite() || self.noise < 0.0 {
            return Err(Error::InvalidConfig(format!("noise {} must be >= 0", self.noise)));
        }
        if self.feature_dim == 0 {
            return Err(Error::InvalidConfig("feature dimension must be >= 1".into()));
        }
        Ok(())
    }
}

/// Deterministic scene source: class prototypes fixed once, scenes drawn
/// per-seed.
#[derive(Debug, Clone)]
pub struct SceneGenerator {
    params: SceneParams,
    prototypes: Matrix,
}

impl SceneGenerator {
    /// Builds a generator whose prototypes derive from `root_seed`.
    pub fn new(params: SceneParams, root_seed: u64) -> Result<Self> {
        params.validate()?;
        let proto_seed = seeds::derive(root_seed, seeds::stream::PROTOTYPES, 0);
        let prototypes = class_prototypes(params.classes, params.feature_dim, proto_seed);
        Ok(Self { params, prototypes })
    }

    /// The `classes x feature_dim` prototype matrix.
    pub fn prototypes(&self) -> &Matrix {
        &self.prototypes
    }

    /// The generation parameters.
    pub fn params(&self) -> &SceneParams {
        &self.params
    }

    /// Generates the scene for `seed`.
    pub fn generate(&self, seed: u64) -> Scene {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let count = rng.random_range(1..=self.params.max_objects);
        let classes: Vec<usize> =
            (0..count).map(|_| rng.random_range(0..self.params.classes)).collect();

        // Place boxes: each object either forces an overlap with one
        // earlier object or avoids all earlier boxes.
        let mut boxes: Vec<[f64; 4]> = Vec::with_capacity(count);
        for index in 0..count {
            let force_overlap = index > 0 && rng.random_bool(self.params.overlap_prob);
            let bbox = if force_overlap {
                let target = rng.random_range(0..index);
                place_overlapping(&mut rng, boxes[target])
            } else {
                place_avoiding(&mut rng, &boxes)
            };
            boxes.push(bbox);
        }

        // The overlap graph reflects actual geometry; forced placements
        // are guaranteed to appear in it.
        let mut overlap_edges = Vec::new();
        for i in 0..count {
            for j in (i + 1)..count {
                if boxes_intersect(boxes[i], boxes[j]) {
                    overlap_edges.push((i, j));
                }
            }
        }

        // Features: prototype of the own class, blended toward overlapping
        // neighbors' prototypes, plus optional noise.  Isolated objects
        // with zero noise carry their prototype exactly.
        let dim = self.params.feature_dim;
        let mut objects = Vec::with_capacity(count);
        for (index, (&class, &bbox)) in classes.iter().zip(boxes.iter()).enumerate() {
            let neighbors: Vec<usize> = overlap_edges
                .iter()
                .filter_map(|&(a, b)| {
                    if a == index {
                        Some(b)
                    } else if b == index {
                        Some(a)
                    } else {
                        None
                    }
                })
                .collect();
            let mut feature: Vec<f64> = self.prototypes.row(class).to_vec();
            if !neighbors.is_empty() {
                let lambda = rng.random_range(0.2..0.5);
                let mut blend = vec![0.0; dim];
                for &n in &neighbors {
                    let proto = self.prototypes.row(classes[n]);
                    for (slot, &v) in blend.iter_mut().zip(proto.iter()) {
                        *slot += v;
                    }
                }
                let scale = lambda / neighbors.len() as f64;
                for (f, b) in feature.iter_mut().zip(blend.iter()) {
                    *f = (1.0 - lambda) * *f + scale * b;
                }
            }
            if self.params.noise > 0.0 {
                for f in feature.iter_mut() {
                    let g: f64 = rng.sample(rand_distr::StandardNormal);
                    *f += self.params.noise * g;
                }
            }
            objects.push(SceneObject { class, bbox, feature });
        }
        Scene { objects, overlap_edges }
    }
}

/// Class prototype directions: orthonormalized Gaussian rows when the
/// feature dimension allows it, unit-normalized Gaussian rows otherwise.
pub fn class_prototypes(classes: usize, feature_dim: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(classes);
    for _ in 0..classes {
        loop {
            let mut row: Vec<f64> =
                (0..feature_dim).map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
            if feature_dim >= classes {
                // Gram-Schmidt against the accepted rows.
                for prev in &rows {
                    let proj = dot(&row, prev);
                    for (r, p) in row.iter_mut().zip(prev.iter()) {
                        *r -= proj * p;
                    }
                }
            }
            let len = norm(&row);
            if len > 1e-6 {
                for r in &mut row {
                    *r /= len;
                }
                rows.push(row);
                break;
            }
        }
    }
    Matrix::from_rows(&rows).expect("prototypes are finite")
}

fn sample_box(rng: &mut ChaCha8Rng) -> [f64; 4] {
    let w = rng.random_range(SIZE_RANGE);
    let h = rng.random_range(SIZE_RANGE);
    let cx = rng.random_range(w / 2.0..1.0 - w / 2.0);
    let cy = rng.random_range(h / 2.0..1.0 - h / 2.0);
    [cx, cy, w, h]
}

/// Places a box guaranteed to intersect `target` while staying inside the
/// unit square.
fn place_overlapping(rng: &mut ChaCha8Rng, target: [f64; 4]) -> [f64; 4] {
    let w = rng.random_range(SIZE_RANGE);
    let h = rng.random_range(SIZE_RANGE);
    let reach_x = 0.9 * (target[2] + w) / 2.0;
    let reach_y = 0.9 * (target[3] + h) / 2.0;
    let cx = (target[0] + rng.random_range(-reach_x..reach_x)).clamp(w / 2.0, 1.0 - w / 2.0);
    let cy = (target[1] + rng.random_range(-reach_y..reach_y)).clamp(h / 2.0, 1.0 - h / 2.0);
    let candidate = [cx, cy, w, h];
    if boxes_intersect(candidate, target) {
        return candidate;
    }
    // Clamping near the border can break the overlap; centering on the
    // target cannot, because the clamped center stays within half a width
    // of it.
    let cx = target[0].clamp(w / 2.0, 1.0 - w / 2.0);
    let cy = target[1].clamp(h / 2.0, 1.0 - h / 2.0);
    [cx, cy, w, h]
}

/// Places a box that intersects none of `existing`, shrinking the size on
/// repeated failure so termination is guaranteed in practice.
fn place_avoiding(rng: &mut ChaCha8Rng, existing: &[[f64; 4]]) -> [f64; 4] {
    let mut shrink = 1.0;
    for _level in 0..24 {
        for _attempt in 0..PLACEMENT_ATTEMPTS {
            let mut candidate = sample_box(rng);
            candidate[2] *= shrink;
            candidate[3] *= shrink;
            if existing.iter().all(|&b| !boxes_intersect(candidate, b)) {
                return candidate;
            }
        }
        shrink *= 0.5;
    }
    // Unreachable in practice: at the final shrink level the box is
    // microscopic.  Accept the overlap rather than looping forever.
    sample_box(rng)
}

/// Open-interval intersection test on center distances.
fn boxes_intersect(a: [f64; 4], b: [f64; 4]) -> bool {
    (a[0] - b[0]).abs() < (a[2] + b[2]) / 2.0 && (a[1] - b[1]).abs() < (a[3] + b[3]) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(overlap_prob: f64, noise: f64) -> SceneParams {
        SceneParams { classes: 4, max_objects: 6, overlap_prob, noise, feature_dim: 8 }
    }

    #[test]
    fn scenes_are_deterministic() {
        let generator = SceneGenerator::new(params(0.5, 0.05), 7).unwrap();
        let a = generator.generate(42);
        let b = generator.generate(42);
        assert_eq!(a.objects.len(), b.objects.len());
        for (x, y) in a.objects.iter().zip(b.objects.iter()) {
            assert_eq!(x.class, y.class);
            assert_eq!(x.bbox, y.bbox);
            assert_eq!(x.feature, y.feature);
        }
        assert_eq!(a.overlap_edges, b.overlap_edges);
    }

    #[test]
    fn boxes_stay_inside_the_unit_square() {
        let generator = SceneGenerator::new(params(0.8, 0.1), 3).unwrap();
        for seed in 0..200 {
            let scene = generator.generate(seed);
            for object in &scene.objects {
                let [cx, cy, w, h] = object.bbox;
                assert!(cx - w / 2.0 >= -1e-12 && cx + w / 2.0 <= 1.0 + 1e-12);
                assert!(cy - h / 2.0 >= -1e-12 && cy + h / 2.0 <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn zero_overlap_zero_noise_copies_prototypes_exactly() {
        let generator = SceneGenerator::new(params(0.0, 0.0), 11).unwrap();
        for seed in 0..100 {
            let scene = generator.generate(seed);
            assert!(scene.overlap_edges.is_empty(), "seed {seed}");
            for object in &scene.objects {
                assert_eq!(object.feature, generator.prototypes().row(object.class));
            }
        }
    }

    #[test]
    fn forced_overlap_with_two_objects_always_intersects() {
        let p = SceneParams { classes: 3, max_objects: 2, overlap_prob: 1.0, noise: 0.0, feature_dim: 4 };
        let generator = SceneGenerator::new(p, 5).unwrap();
        let mut saw_pair = false;
        for seed in 0..200 {
            let scene = generator.generate(seed);
            if scene.objects.len() == 2 {
                saw_pair = true;
                assert_eq!(scene.overlap_edges, vec![(0, 1)], "seed {seed}");
            }
        }
        assert!(saw_pair);
    }

    #[test]
    fn overlapping_features_are_blended_away_from_the_prototype() {
        let p = SceneParams { classes: 3, max_objects: 2, overlap_prob: 1.0, noise: 0.0, feature_dim: 8 };
        let generator = SceneGenerator::new(p, 9).unwrap();
        for seed in 0..100 {
            let scene = generator.generate(seed);
            if scene.objects.len() == 2 && scene.objects[0].class != scene.objects[1].class {
                for object in &scene.objects {
                    let proto = generator.prototypes().row(object.class);
                    let same: bool = object.feature.iter().zip(proto.iter()).all(|(a, b)| a == b);
                    assert!(!same, "seed {seed}: blended feature equals prototype");
                }
                return;
            }
        }
        panic!("no two-object mixed-class scene in 100 seeds");
    }

    #[test]
    fn prototypes_are_orthonormal_when_dimension_allows() {
        let protos = class_prototypes(4, 8, 123);
        for i in 0..4 {
            assert!((norm(protos.row(i)) - 1.0).abs() < 1e-12);
            for j in 0..i {
                assert!(dot(protos.row(i), protos.row(j)).abs() < 1e-10);
            }
        }
        // More classes than dimensions: unit rows, not orthogonal.
        let protos = class_prototypes(5, 3, 123);
        for i in 0..5 {
            assert!((norm(protos.row(i)) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn parameter_validation() {
        assert!(SceneParams { classes: 0, ..params(0.0, 0.0) }.validate().is_err());
        assert!(SceneParams { overlap_prob: 1.5, ..params(0.0, 0.0) }.validate().is_err());
        assert!(SceneParams { noise: -0.1, ..params(0.0, 0.0) }.validate().is_err());
    }
}
