//! Gradient-boosted decision trees for per-pixel land/ocean classification.
//!
//! Logistic loss, second-order leaf values, exact greedy splits over every
//! midpoint between consecutive distinct feature values. Trees grow level by
//! level over presorted feature columns.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::raster::{BandRole, RasterScene, SegMask};
use crate::seed;

pub const N_FEATURES: usize = BandRole::ALL.len();
pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_PIXELS_PER_IMAGE: usize = 100;
pub const DEFAULT_N_TREES: usize = 500;
pub const DEFAULT_MAX_DEPTH: usize = 3;
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;
pub const DEFAULT_LAMBDA: f64 = 1.0;

const PRIOR_CLAMP: f64 = 1e-6;
const PREDICT_CHUNK: usize = 4096;

/// One labelled pixel; features follow [`BandRole::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelSample {
    pub features: [f32; N_FEATURES],
    pub label: u8,
}

fn band_planes(scene: &RasterScene) -> Result<[&[f32]; N_FEATURES]> {
    let mut planes: [&[f32]; N_FEATURES] = [&[]; N_FEATURES];
    for (k, role) in BandRole::ALL.iter().enumerate() {
        planes[k] = scene.require_band(*role)?;
    }
    Ok(planes)
}

fn features_at(planes: &[&[f32]; N_FEATURES], i: usize) -> [f32; N_FEATURES] {
    std::array::from_fn(|k| planes[k][i])
}

/// Draws `per_image` distinct valid pixels from every crop.
pub fn sample_training_pixels(
    crops: &[(RasterScene, SegMask)],
    per_image: usize,
    seed: u64,
) -> Result<Vec<PixelSample>> {
    sample_training_pixels_with(crops, per_image, seed, Exec::default())
}

pub fn sample_training_pixels_with(
    crops: &[(RasterScene, SegMask)],
    per_image: usize,
    seed: u64,
    exec: Exec,
) -> Result<Vec<PixelSample>> {
    if per_image == 0 {
        return Err(Error::OutOfRange("pixels per image must be at least 1".into()));
    }
    let indexed: Vec<(usize, &(RasterScene, SegMask))> = crops.iter().enumerate().collect();
    let per_crop = exec.try_map(&indexed, |(k, (scene, mask))| {
        if !scene.same_shape(mask) {
            return Err(Error::Dimension(format!(
                "crop {} is {}x{} but its mask is {}x{}",
                scene.scene_id(),
                scene.width(),
                scene.height(),
                mask.width(),
                mask.height()
            )));
        }
        let planes = band_planes(scene)?;
        let valid: Vec<usize> = (0..scene.pixel_count())
            .filter(|&i| scene.is_valid(i) && mask.is_valid(i))
            .collect();
        if valid.len() < per_image {
            return Err(Error::InsufficientPixels {
                image_id: scene.scene_id().to_string(),
                valid: valid.len(),
                requested: per_image,
            });
        }
        let mut rng = seed::derived_rng(seed, &format!("pixels:{k}:{}", scene.scene_id()));
        Ok(index::sample(&mut rng, valid.len(), per_image)
            .into_iter()
            .map(|j| {
                let i = valid[j];
                PixelSample {
                    features: features_at(&planes, i),
                    label: mask.values()[i],
                }
            })
            .collect::<Vec<_>>())
    })?;
    Ok(per_crop.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Node {
    /// Samples with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { value: f64 },
}

/// Regression tree stored as a node array rooted at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f32; N_FEATURES]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if f64::from(x[feature]) < threshold { left } else { right },
            }
        }
    }

    /// Number of split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    fn check(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Model("tree has no nodes".into()));
        }
        let n = self.nodes.len();
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Split {
                feature, left, right, ..
            } = *node
            {
                if feature >= N_FEATURES {
                    return Err(Error::Model(format!("feature index {feature} out of range")));
                }
                // Children after parents rules out cycles.
                if left <= i || right <= i || left >= n || right >= n {
                    return Err(Error::Model(format!("node {i} has invalid children")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub lambda: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            n_trees: DEFAULT_N_TREES,
            max_depth: DEFAULT_MAX_DEPTH,
            learning_rate: DEFAULT_LEARNING_RATE,
            lambda: DEFAULT_LAMBDA,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    pub format_version: u32,
    pub bands: Vec<BandRole>,
    pub base_score: f64,
    pub learning_rate: f64,
    pub lambda: f64,
    pub n_trees: usize,
    pub max_depth: usize,
    /// Set when training data held a single class and no trees were fit.
    pub degenerate: bool,
    pub trees: Vec<Tree>,
    /// Mean logistic loss before the first round and after each tree.
    #[serde(default)]
    pub loss_history: Vec<f64>,
}

fn sigmoid(m: f64) -> f64 {
    1.0 / (1.0 + (-m).exp())
}

/// Mean logistic loss of margins `m` against labels.
fn logistic_loss(margins: &[f64], labels: &[f64]) -> f64 {
    let sum: f64 = margins
        .iter()
        .zip(labels)
        // log(1 + e^m) - y m, written stably.
        .map(|(&m, &y)| m.max(0.0) + (-m.abs()).exp().ln_1p() - y * m)
        .sum();
    sum / margins.len() as f64
}

impl GbdtModel {
    /// Model with no trees and the given base score.
    pub fn prior_only(base_score: f64, params: &TrainParams) -> Self {
        GbdtModel {
            format_version: MODEL_FORMAT_VERSION,
            bands: BandRole::ALL.to_vec(),
            base_score,
            learning_rate: params.learning_rate,
            lambda: params.lambda,
            n_trees: 0,
            max_depth: params.max_depth,
            degenerate: false,
            trees: Vec::new(),
            loss_history: Vec::new(),
        }
    }

    pub fn margin(&self, x: &[f32; N_FEATURES]) -> f64 {
        let mut m = self.base_score;
        for t in &self.trees {
            m += self.learning_rate * t.predict(x);
        }
        m
    }

    pub fn probability(&self, x: &[f32; N_FEATURES]) -> f64 {
        sigmoid(self.margin(x))
    }

    /// Ocean (1) when the probability is at least one half.
    pub fn classify(&self, x: &[f32; N_FEATURES]) -> u8 {
        u8::from(self.probability(x) >= 0.5)
    }

    /// Feature indices referenced by any split.
    pub fn used_features(&self) -> BTreeSet<usize> {
        self.trees
            .iter()
            .flat_map(|t| t.nodes.iter())
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Model(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        if self.bands != BandRole::ALL {
            return Err(Error::Model("model band roster differs from the 7-band roster".into()));
        }
        if self.trees.len() != self.n_trees {
            return Err(Error::Model(format!(
                "model declares {} trees but holds {}",
                self.n_trees,
                self.trees.len()
            )));
        }
        for t in &self.trees {
            t.check()?;
            if t.depth() > self.max_depth {
                return Err(Error::Model(format!(
                    "tree depth {} exceeds max_depth {}",
                    t.depth(),
                    self.max_depth
                )));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: GbdtModel = serde_json::from_str(&text)?;
        model.validate()?;
        Ok(model)
    }
}

pub fn train_gbdt(samples: &[PixelSample], n_trees: usize, max_depth: usize, learning_rate: f64) -> Result<GbdtModel> {
    let params = TrainParams {
        n_trees,
        max_depth,
        learning_rate,
        ..TrainParams::default()
    };
    train_gbdt_with(samples, &params, Exec::default())
}

/// Best split found for one node along one feature.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct NodeStats {
    g: f64,
    h: f64,
}

fn leaf_score(g: f64, h: f64, lambda: f64) -> f64 {
    g * g / (h + lambda)
}

pub fn train_gbdt_with(samples: &[PixelSample], params: &TrainParams, exec: Exec) -> Result<GbdtModel> {
    if !(params.learning_rate > 0.0) || !(params.lambda >= 0.0) {
        return Err(Error::OutOfRange(
            "learning rate must be positive and lambda non-negative".into(),
        ));
    }
    if samples.len() < 2 {
        return Err(Error::EmptyInput("training needs at least two samples"));
    }
    if let Some(s) = samples.iter().find(|s| s.label > 1 || s.features.iter().any(|v| !v.is_finite())) {
        return Err(Error::Model(format!(
            "training sample has label {} or a non-finite feature",
            s.label
        )));
    }
    let n = samples.len();
    let labels: Vec<f64> = samples.iter().map(|s| f64::from(s.label)).collect();
    let positives = labels.iter().sum::<f64>();
    let prior = (positives / n as f64).clamp(PRIOR_CLAMP, 1.0 - PRIOR_CLAMP);
    let base_score = (prior / (1.0 - prior)).ln();

    if positives == 0.0 || positives == n as f64 {
        log::warn!("training samples contain a single class; returning a prior-only model");
        let mut model = GbdtModel::prior_only(base_score, params);
        model.degenerate = true;
        return Ok(model);
    }

    // Stable sort keeps equal values in sample order.
    let sorted: Vec<Vec<u32>> = exec.map_range(N_FEATURES, |f| {
        let mut idx: Vec<u32> = (0..n as u32).collect();
        idx.sort_by(|&a, &b| samples[a as usize].features[f].total_cmp(&samples[b as usize].features[f]));
        idx
    });

    let mut margins = vec![base_score; n];
    let mut loss_history = vec![logistic_loss(&margins, &labels)];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut leaf_of = vec![0u32; n];

    for round in 0..params.n_trees {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = p - labels[i];
            hess[i] = p * (1.0 - p);
        }
        let tree = grow_tree(samples, &sorted, &grad, &hess, params, exec, &mut leaf_of);
        for i in 0..n {
            let Node::Leaf { value } = tree.nodes[leaf_of[i] as usize] else {
                unreachable!("samples end in leaves")
            };
            margins[i] += params.learning_rate * value;
        }
        let loss = logistic_loss(&margins, &labels);
        let prev = *loss_history.last().expect("history starts nonempty");
        debug_assert!(
            loss <= prev + 1e-12 * prev.abs(),
            "training loss rose in round {round}: {prev} -> {loss}"
        );
        loss_history.push(loss);
        trees.push(tree);
    }

    let model = GbdtModel {
        format_version: MODEL_FORMAT_VERSION,
        bands: BandRole::ALL.to_vec(),
        base_score,
        learning_rate: params.learning_rate,
        lambda: params.lambda,
        n_trees: trees.len(),
        max_depth: params.max_depth,
        degenerate: false,
        trees,
        loss_history,
    };
    Ok(model)
}

/// Grows one tree level by level. On return, `leaf_of[i]` is the node index
/// of the leaf holding sample `i`.
fn grow_tree(
    samples: &[PixelSample],
    sorted: &[Vec<u32>],
    grad: &[f64],
    hess: &[f64],
    params: &TrainParams,
    exec: Exec,
    leaf_of: &mut [u32],
) -> Tree {
    const DONE: u32 = u32::MAX;
    let n = samples.len();
    let lambda = params.lambda;
    let mut nodes: Vec<Option<Node>> = vec![None];
    // Node index per active frontier slot, and frontier slot per sample.
    let mut frontier: Vec<usize> = vec![0];
    let mut slot_of = vec![0u32; n];
    leaf_of.fill(0);

    for depth in 0..=params.max_depth {
        let mut stats = vec![NodeStats::default(); frontier.len()];
        for i in 0..n {
            let s = slot_of[i];
            if s != DONE {
                stats[s as usize].g += grad[i];
                stats[s as usize].h += hess[i];
            }
        }

        let best: Vec<Option<Candidate>> = if depth == params.max_depth {
            vec![None; frontier.len()]
        } else {
            let per_feature: Vec<Vec<Option<Candidate>>> = exec.map_range(N_FEATURES, |f| {
                scan_feature(f, samples, &sorted[f], grad, hess, &slot_of, &stats, lambda)
            });
            // Lowest feature index wins ties.
            (0..frontier.len())
                .map(|s| {
                    per_feature.iter().fold(None, |acc: Option<Candidate>, cands| match (acc, cands[s]) {
                        (Some(a), Some(c)) if c.gain > a.gain => Some(c),
                        (None, c) => c,
                        (a, _) => a,
                    })
                })
                .collect()
        };

        let mut next_frontier = Vec::new();
        let mut child_slots: Vec<Option<(u32, u32)>> = vec![None; frontier.len()];
        for (s, &node) in frontier.iter().enumerate() {
            match best[s] {
                Some(c) => {
                    let left = nodes.len();
                    nodes.push(None);
                    nodes.push(None);
                    nodes[node] = Some(Node::Split {
                        feature: c.feature,
                        threshold: c.threshold,
                        left,
                        right: left + 1,
                    });
                    let ls = next_frontier.len() as u32;
                    next_frontier.push(left);
                    next_frontier.push(left + 1);
                    child_slots[s] = Some((ls, ls + 1));
                }
                None => {
                    let st = stats[s];
                    nodes[node] = Some(Node::Leaf {
                        value: -st.g / (st.h + lambda),
                    });
                }
            }
        }
        for i in 0..n {
            let s = slot_of[i];
            if s == DONE {
                continue;
            }
            match (child_slots[s as usize], nodes[frontier[s as usize]]) {
                (
                    Some((l, r)),
                    Some(Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    }),
                ) => {
                    let go_left = f64::from(samples[i].features[feature]) < threshold;
                    slot_of[i] = if go_left { l } else { r };
                    leaf_of[i] = if go_left { left } else { right } as u32;
                }
                _ => {
                    leaf_of[i] = frontier[s as usize] as u32;
                    slot_of[i] = DONE;
                }
            }
        }
        if next_frontier.is_empty() {
            break;
        }
        frontier = next_frontier;
    }

    Tree {
        nodes: nodes
            .into_iter()
            .map(|n| n.expect("every node is resolved"))
            .collect(),
    }
}

/// Best midpoint split of every frontier slot along feature `f`. Only strict
/// gain improvements replace the incumbent, so the lowest threshold wins ties.
#[allow(clippy::too_many_arguments)]
fn scan_feature(
    f: usize,
    samples: &[PixelSample],
    order: &[u32],
    grad: &[f64],
    hess: &[f64],
    slot_of: &[u32],
    stats: &[NodeStats],
    lambda: f64,
) -> Vec<Option<Candidate>> {
    let k = stats.len();
    let mut left = vec![NodeStats::default(); k];
    let mut last: Vec<Option<f32>> = vec![None; k];
    let mut best: Vec<Option<Candidate>> = vec![None; k];
    let parent: Vec<f64> = stats.iter().map(|s| leaf_score(s.g, s.h, lambda)).collect();
    for &i in order {
        let i = i as usize;
        let s = slot_of[i];
        if s == u32::MAX {
            continue;
        }
        let s = s as usize;
        let x = samples[i].features[f];
        if let Some(prev) = last[s] {
            if x > prev {
                let l = left[s];
                let (gr, hr) = (stats[s].g - l.g, stats[s].h - l.h);
                let gain = 0.5 * (leaf_score(l.g, l.h, lambda) + leaf_score(gr, hr, lambda) - parent[s]);
                if gain > 0.0 && best[s].is_none_or(|b| gain > b.gain) {
                    best[s] = Some(Candidate {
                        gain,
                        feature: f,
                        threshold: midpoint(prev, x),
                    });
                }
            }
        }
        left[s].g += grad[i];
        left[s].h += hess[i];
        last[s] = Some(x);
    }
    best
}

/// Midpoint of two floats, exact in double precision and strictly between
/// them.
fn midpoint(a: f32, b: f32) -> f64 {
    (f64::from(a) + f64::from(b)) / 2.0
}

pub fn predict_gbdt(model: &GbdtModel, scene: &RasterScene) -> Result<SegMask> {
    predict_gbdt_with(model, scene, Exec::default())
}

pub fn predict_gbdt_with(model: &GbdtModel, scene: &RasterScene, exec: Exec) -> Result<SegMask> {
    if model.bands != BandRole::ALL {
        return Err(Error::Model("model band roster differs from the 7-band roster".into()));
    }
    let planes = band_planes(scene)?;
    let mut out = vec![SegMask::NODATA; scene.pixel_count()];
    exec.for_each_chunk_mut(&mut out, PREDICT_CHUNK, |ci, chunk| {
        let base = ci * PREDICT_CHUNK;
        for (k, o) in chunk.iter_mut().enumerate() {
            let i = base + k;
            if scene.is_valid(i) {
                *o = model.classify(&features_at(&planes, i));
            }
        }
    });
    SegMask::new(scene.width(), scene.height(), out)
}
