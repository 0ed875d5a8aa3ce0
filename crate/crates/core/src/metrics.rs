//! Model-agnostic explanation metrics.
//!
//! Heatmaps are consumed, never computed: anything that produces a per-pixel
//! attribution array can be scored here. Batch reductions average per-sample
//! values with [`pairwise_sum`](crate::exec::pairwise_sum) in index order so
//! results do not depend on the execution policy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::exec::{map_indexed, mean, Execution};
use crate::gpt_mnist::{derive_seed, SampleRecord, NUM_CLASSES};
use crate::grid::{Grid, Image, Site};

/// Half-width of the noise used when a heatmap is identically zero.
pub const ZERO_FILL_MAGNITUDE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("shape mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("stage {stage} has {got} heatmaps, reference has {expected}")]
    CountMismatch {
        stage: usize,
        expected: usize,
        got: usize,
    },
    #[error("L = {l} exceeds the {sites} available sites")]
    LTooLarge { l: usize, sites: usize },
    #[error("L must be at least 1")]
    LZero,
    #[error("repeats must be at least 1")]
    ZeroRepeats,
    #[error("label {value} at {site:?} is not below {num_classes}")]
    LabelOutOfRange {
        site: Site,
        value: u8,
        num_classes: usize,
    },
    #[error("no samples for class {0}")]
    MissingClass(u8),
    #[error("input is empty")]
    EmptyInput,
    #[error("ordering contains an out-of-bounds or repeated site {0:?}")]
    InvalidOrdering(Site),
}

fn check_shape<A, B>(a: &Grid<A>, b: &Grid<B>) -> Result<(), MetricsError> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(MetricsError::DimensionMismatch(
            a.width(),
            a.height(),
            b.width(),
            b.height(),
        ))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub values: Grid<f64>,
    pub normalized: bool,
    pub abs_applied: bool,
}

impl Heatmap {
    pub fn new(values: Grid<f64>) -> Self {
        Self {
            values,
            normalized: false,
            abs_applied: false,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values
            .as_slice()
            .iter()
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }
}

impl From<Grid<f64>> for Heatmap {
    fn from(values: Grid<f64>) -> Self {
        Self::new(values)
    }
}

/// Divides by the largest absolute value. An all-zero heatmap is first
/// replaced with small uniform noise drawn from `rng`.
pub fn normalize_heatmap<R: Rng + ?Sized>(h: &Heatmap, rng: &mut R) -> Heatmap {
    let mut values = h.values.clone();
    let mut max_abs = h.max_abs();
    if max_abs == 0.0 {
        for v in values.as_mut_slice() {
            *v = rng.random_range(-ZERO_FILL_MAGNITUDE..ZERO_FILL_MAGNITUDE);
        }
        max_abs = values
            .as_slice()
            .iter()
            .fold(0.0, |m: f64, v| m.max(v.abs()));
    }
    if max_abs > 0.0 {
        for v in values.as_mut_slice() {
            *v /= max_abs;
        }
    }
    Heatmap {
        values,
        normalized: true,
        abs_applied: h.abs_applied,
    }
}

pub fn to_abs(h: &Heatmap) -> Heatmap {
    Heatmap {
        values: h.values.map(|v| v.abs()),
        normalized: h.normalized,
        abs_applied: true,
    }
}

/// 1-based ranks, ties sharing the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

/// Spearman correlation of two equally long slices.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "spearman inputs differ in length");
    if a.is_empty() {
        return 0.0;
    }
    pearson(&average_ranks(a), &average_ranks(b))
}

/// Spearman rank correlation; 0 when either side has no rank variance.
pub fn spearman_rank_correlation(a: &Heatmap, b: &Heatmap) -> Result<f64, MetricsError> {
    check_shape(&a.values, &b.values)?;
    Ok(spearman(a.values.as_slice(), b.values.as_slice()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StageSrc {
    pub stage: usize,
    pub no_abs: f64,
    pub abs: f64,
}

/// Mean SRC of every stage against the reference heatmaps, with and without
/// absolute values. Every heatmap is normalized first; the zero-fill noise
/// for heatmap `i` of stage `k` (reference = stage 0) is seeded from
/// `derive_seed(seed, k * n + i)`.
pub fn cascade_src(
    reference: &[Heatmap],
    stages: &[Vec<Heatmap>],
    seed: u64,
    exec: Execution,
) -> Result<Vec<StageSrc>, MetricsError> {
    let n = reference.len();
    for (k, stage) in stages.iter().enumerate() {
        if stage.len() != n {
            return Err(MetricsError::CountMismatch {
                stage: k + 1,
                expected: n,
                got: stage.len(),
            });
        }
        for (r, h) in reference.iter().zip(stage) {
            check_shape(&r.values, &h.values)?;
        }
    }
    let normalize = |h: &Heatmap, slot: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, slot as u64));
        normalize_heatmap(h, &mut rng)
    };
    let refs: Vec<(Heatmap, Heatmap)> = map_indexed(exec, n, |i| {
        let h = normalize(&reference[i], i);
        let a = to_abs(&h);
        (h, a)
    });
    Ok(stages
        .iter()
        .enumerate()
        .map(|(k, stage)| {
            let pairs: Vec<(f64, f64)> = map_indexed(exec, n, |i| {
                let h = normalize(&stage[i], (k + 1) * n + i);
                let (rn, ra) = &refs[i];
                (
                    spearman(rn.values.as_slice(), h.values.as_slice()),
                    spearman(ra.values.as_slice(), to_abs(&h).values.as_slice()),
                )
            });
            let (no_abs, abs): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            StageSrc {
                stage: k + 1,
                no_abs: mean(&no_abs),
                abs: mean(&abs),
            }
        })
        .collect())
}

/// Sites in most-relevant-first order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MorfOrdering {
    pub sites: Vec<Site>,
}

impl MorfOrdering {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

fn morf_indices(h: &Heatmap, l: usize) -> Result<Vec<usize>, MetricsError> {
    let sites = h.values.len();
    if l > sites {
        return Err(MetricsError::LTooLarge { l, sites });
    }
    let v = h.values.as_slice();
    let mut order: Vec<usize> = (0..sites).collect();
    // stable sort: equal values keep row-major order
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]));
    order.truncate(l);
    Ok(order)
}

/// Top `l` sites by descending attribution, ties in row-major order.
pub fn morf_ordering(h: &Heatmap, l: usize) -> Result<MorfOrdering, MetricsError> {
    Ok(MorfOrdering {
        sites: morf_indices(h, l)?
            .into_iter()
            .map(|i| h.values.site_of(i))
            .collect(),
    })
}

/// Deterministic image classifier producing per-class confidences.
pub trait Scorer: Sync {
    fn num_classes(&self) -> usize;

    fn scores(&self, image: &Image) -> Vec<f64>;

    fn confidence(&self, image: &Image, class: usize) -> f64 {
        self.scores(image)[class]
    }

    fn predict(&self, image: &Image) -> usize {
        let scores = self.scores(image);
        (0..scores.len())
            .max_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(b.cmp(&a)))
            .unwrap_or(0)
    }
}

/// AOPC for every `L` in `1..=max_l`: entry `L - 1` is the mean over
/// `repeats` noise draws of `(1 / (L + 1)) * sum_{k=0}^{L} delta_k`, where
/// `delta_k = f(x) - f(x_k)` and `x_k` replaces the `k`-th most relevant
/// pixel of `x_{k-1}` with uniform `[0, 1)` noise.
///
/// A single trajectory serves every `L`, so the curve agrees with
/// [`aopc`] called separately for each `L` on the same generator state.
pub fn aopc_curve<S: Scorer + ?Sized, R: Rng + ?Sized>(
    scorer: &S,
    target: usize,
    x: &Image,
    h: &Heatmap,
    max_l: usize,
    rng: &mut R,
    repeats: usize,
) -> Result<Vec<f64>, MetricsError> {
    check_shape(x, &h.values)?;
    if max_l == 0 {
        return Err(MetricsError::LZero);
    }
    let order = morf_indices(h, max_l)?;
    perturbation_curve(scorer, target, x, &order, rng, repeats)
}

/// [`aopc_curve`] along an arbitrary ordering of distinct sites.
pub fn aopc_curve_for_ordering<S: Scorer + ?Sized, R: Rng + ?Sized>(
    scorer: &S,
    target: usize,
    x: &Image,
    sites: &[Site],
    rng: &mut R,
    repeats: usize,
) -> Result<Vec<f64>, MetricsError> {
    if sites.is_empty() {
        return Err(MetricsError::LZero);
    }
    if sites.len() > x.len() {
        return Err(MetricsError::LTooLarge {
            l: sites.len(),
            sites: x.len(),
        });
    }
    let mut seen = vec![false; x.len()];
    let mut order = Vec::with_capacity(sites.len());
    for &site in sites {
        if !x.contains(site) || std::mem::replace(&mut seen[x.index_of(site)], true) {
            return Err(MetricsError::InvalidOrdering(site));
        }
        order.push(x.index_of(site));
    }
    perturbation_curve(scorer, target, x, &order, rng, repeats)
}

fn perturbation_curve<S: Scorer + ?Sized, R: Rng + ?Sized>(
    scorer: &S,
    target: usize,
    x: &Image,
    order: &[usize],
    rng: &mut R,
    repeats: usize,
) -> Result<Vec<f64>, MetricsError> {
    if repeats == 0 {
        return Err(MetricsError::ZeroRepeats);
    }
    let base = scorer.confidence(x, target);
    let mut totals = vec![0.0; order.len()];
    for _ in 0..repeats {
        let mut perturbed = x.clone();
        // delta_0 = 0
        let mut running = 0.0;
        for (k, &i) in order.iter().enumerate() {
            perturbed.as_mut_slice()[i] = rng.random::<f64>();
            running += base - scorer.confidence(&perturbed, target);
            totals[k] += running / (k + 2) as f64;
        }
    }
    Ok(totals.into_iter().map(|t| t / repeats as f64).collect())
}

pub fn aopc<S: Scorer + ?Sized, R: Rng + ?Sized>(
    scorer: &S,
    target: usize,
    x: &Image,
    h: &Heatmap,
    l: usize,
    rng: &mut R,
    repeats: usize,
) -> Result<f64, MetricsError> {
    Ok(*aopc_curve(scorer, target, x, h, l, rng, repeats)?
        .last()
        .expect("l >= 1"))
}

/// One item of a dataset-level AOPC run.
pub struct AopcItem<'a> {
    pub image: &'a Image,
    pub heatmap: &'a Heatmap,
    pub target: usize,
}

/// Dataset average of [`aopc_curve`]; item `i` draws its noise from
/// `derive_seed(seed, i)`.
pub fn mean_aopc_curve<S: Scorer + ?Sized>(
    scorer: &S,
    items: &[AopcItem<'_>],
    max_l: usize,
    repeats: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<f64>, MetricsError> {
    if items.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let curves = map_indexed(exec, items.len(), |i| {
        let item = &items[i];
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        aopc_curve(
            scorer,
            item.target,
            item.image,
            item.heatmap,
            max_l,
            &mut rng,
            repeats,
        )
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;
    Ok((0..max_l)
        .map(|l| mean(&curves.iter().map(|c| c[l]).collect::<Vec<_>>()))
        .collect())
}

/// Hit/miss errors in percent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SegErrors {
    pub accuracy_err: f64,
    pub recall_err: f64,
    pub precision_err: f64,
}

/// `counts[truth][pred]`, accumulated over any number of lattices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn add(&mut self, pred: &Grid<u8>, truth: &Grid<u8>) -> Result<(), MetricsError> {
        check_shape(pred, truth)?;
        let k = self.num_classes;
        for (i, (&p, &t)) in pred.as_slice().iter().zip(truth.as_slice()).enumerate() {
            for value in [p, t] {
                if value as usize >= k {
                    return Err(MetricsError::LabelOutOfRange {
                        site: pred.site_of(i),
                        value,
                        num_classes: k,
                    });
                }
            }
        }
        for (&p, &t) in pred.as_slice().iter().zip(truth.as_slice()) {
            self.counts[t as usize * k + p as usize] += 1;
        }
        Ok(())
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Micro accuracy; recall averaged over classes present in the truth,
    /// precision over classes present in the prediction.
    pub fn errors(&self) -> Result<SegErrors, MetricsError> {
        let total = self.total();
        if total == 0 {
            return Err(MetricsError::EmptyInput);
        }
        let k = self.num_classes;
        let hits: u64 = (0..k).map(|c| self.get(c, c)).sum();
        let truth_count = |c: usize| (0..k).map(|p| self.get(c, p)).sum::<u64>();
        let pred_count = |c: usize| (0..k).map(|t| self.get(t, c)).sum::<u64>();
        let macro_avg = |count: &dyn Fn(usize) -> u64| {
            let per_class: Vec<f64> = (0..k)
                .filter_map(|c| {
                    let n = count(c);
                    (n > 0).then(|| self.get(c, c) as f64 / n as f64)
                })
                .collect();
            per_class.iter().sum::<f64>() / per_class.len() as f64
        };
        let pct = |metric: f64| 100.0 * (1.0 - metric);
        Ok(SegErrors {
            accuracy_err: pct(hits as f64 / total as f64),
            recall_err: pct(macro_avg(&truth_count)),
            precision_err: pct(macro_avg(&pred_count)),
        })
    }
}

pub fn segmentation_error_metrics(
    pred: &Grid<u8>,
    truth: &Grid<u8>,
    num_classes: usize,
) -> Result<SegErrors, MetricsError> {
    let mut cm = ConfusionMatrix::new(num_classes);
    cm.add(pred, truth)?;
    cm.errors()
}

/// Nearest-centroid classifier: confidences are the softmax of negative
/// Euclidean distances to the per-class mean images.
#[derive(Clone, Debug, PartialEq)]
pub struct CentroidScorer {
    centroids: Vec<Image>,
}

impl CentroidScorer {
    pub fn fit<'a>(
        labelled: impl IntoIterator<Item = (&'a Image, usize)>,
        num_classes: usize,
    ) -> Result<Self, MetricsError> {
        let mut sums: Vec<Option<(Image, usize)>> = vec![None; num_classes];
        for (image, class) in labelled {
            let slot = sums.get_mut(class).ok_or(MetricsError::LabelOutOfRange {
                site: (0, 0),
                value: class.min(255) as u8,
                num_classes,
            })?;
            match slot {
                None => *slot = Some((image.clone(), 1)),
                Some((sum, n)) => {
                    check_shape(sum, image)?;
                    for (s, &p) in sum.as_mut_slice().iter_mut().zip(image.as_slice()) {
                        *s += p;
                    }
                    *n += 1;
                }
            }
        }
        let centroids = sums
            .into_iter()
            .enumerate()
            .map(|(c, slot)| {
                let (sum, n) = slot.ok_or(MetricsError::MissingClass(c as u8))?;
                Ok(sum.map(|s| s / n as f64))
            })
            .collect::<Result<Vec<_>, MetricsError>>()?;
        Ok(Self { centroids })
    }

    pub fn centroids(&self) -> &[Image] {
        &self.centroids
    }

    pub fn distances(&self, image: &Image) -> Vec<f64> {
        self.centroids
            .iter()
            .map(|c| {
                c.as_slice()
                    .iter()
                    .zip(image.as_slice())
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }
}

impl Scorer for CentroidScorer {
    fn num_classes(&self) -> usize {
        self.centroids.len()
    }

    fn scores(&self, image: &Image) -> Vec<f64> {
        let logits: Vec<f64> = self.distances(image).into_iter().map(|d| -d).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        exp.into_iter().map(|e| e / z).collect()
    }
}

/// Centroid scorer over the ten dataset classes.
pub fn build_centroid_scorer(samples: &[SampleRecord]) -> Result<CentroidScorer, MetricsError> {
    CentroidScorer::fit(
        samples.iter().map(|s| (&s.image, s.class_label as usize)),
        NUM_CLASSES,
    )
}
