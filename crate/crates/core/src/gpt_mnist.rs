//! Synthetic 10-class digit dataset grown from sparse seed configurations.
//!
//! A sample is a seed configuration `c_0` (row-1 generators with a fixed
//! orientation at class-specific sites) developed for 8 to 12 steps with the
//! multi-competitor rule and rendered to a 28x28 binary image. The seed
//! configuration itself is kept as two label lattices: `y_g` (template row)
//! and `y_s` (orientation).
//!
//! Per-sample seeds come from a SplitMix64 stream: sample `i` of a run with
//! master seed `m` uses the `(i + 1)`-th SplitMix64 output for state `m`.
//! Each sample then draws from its own ChaCha8 generator, so any subset of a
//! dataset can be regenerated in any order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{map_indexed, Execution};
use crate::grid::{Grid, Image, Site};
use crate::growth::{develop, GrowthError, GrowthRule, GrowthVariant};
use crate::pattern::{Configuration, GeneratorInstance, GeneratorSpace};

pub const SIDE: usize = 28;
pub const NUM_CLASSES: usize = 10;
pub const MIN_STEPS: usize = 8;
pub const MAX_STEPS: usize = 12;
pub const MAX_JITTER: i64 = 2;
pub const MAX_ROTATION_DEG: f64 = 10.0;

/// Row of the generator every seed carries.
pub const SEED_ALPHA: u8 = 1;

/// Growth rule used for sampling and reconstruction.
pub const DATASET_RULE: GrowthRule = GrowthRule {
    variant: GrowthVariant::Modified,
    step_cap: MAX_STEPS,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DatasetError {
    #[error("class {0} has no template")]
    MissingClass(u8),
    #[error("class {0} has more than one template")]
    DuplicateClass(u8),
    #[error("class {0} is outside 0..=9")]
    UnknownClass(u8),
    #[error("class {0} template has no seeds")]
    NoSeeds(u8),
    #[error("class {class} seed at ({row}, {col}) is not inside the lattice with a margin of 1")]
    SeedOutOfBounds { class: u8, row: usize, col: usize },
    #[error("class {class} seed orientation {s} is outside 1..={order}")]
    InvalidOrientation { class: u8, s: u8, order: usize },
    #[error("class {class} has two seeds at ({row}, {col})")]
    DuplicateSeed { class: u8, row: usize, col: usize },
    #[error("expected a {expected}x{expected} lattice, got {width}x{height}")]
    DimensionMismatch {
        expected: usize,
        width: usize,
        height: usize,
    },
    #[error("label {value} at {site:?} is out of range")]
    LabelOutOfRange { site: Site, value: u8 },
    #[error("at least one sample is required")]
    NoSamples,
    #[error(transparent)]
    Growth(#[from] GrowthError),
}

/// Nominal seed sites of one class, each with a fixed orientation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTemplate {
    #[serde(rename = "class")]
    pub class_id: u8,
    /// `(row, col, s)`
    pub seeds: Vec<(usize, usize, u8)>,
}

impl ClassTemplate {
    pub fn validate(&self, order: usize) -> Result<(), DatasetError> {
        let class = self.class_id;
        if self.seeds.is_empty() {
            return Err(DatasetError::NoSeeds(class));
        }
        for (i, &(row, col, s)) in self.seeds.iter().enumerate() {
            if !(1..SIDE - 1).contains(&row) || !(1..SIDE - 1).contains(&col) {
                return Err(DatasetError::SeedOutOfBounds { class, row, col });
            }
            if s == 0 || s as usize > order {
                return Err(DatasetError::InvalidOrientation { class, s, order });
            }
            if self.seeds[..i]
                .iter()
                .any(|&(r, c, _)| (r, c) == (row, col))
            {
                return Err(DatasetError::DuplicateSeed { class, row, col });
            }
        }
        Ok(())
    }

    pub fn n_seeds(&self) -> usize {
        self.seeds.len()
    }
}

/// Digit-like stroke layouts for the ten classes (template set v1).
///
/// Orientations follow the Moore ordering: 1 up, 3 right, 5 down, 6 down-left,
/// 7 left.
pub fn default_templates() -> Vec<ClassTemplate> {
    let t = |class_id, seeds: &[(usize, usize, u8)]| ClassTemplate {
        class_id,
        seeds: seeds.to_vec(),
    };
    vec![
        t(0, &[(4, 9, 3), (5, 21, 5), (23, 19, 7), (22, 7, 1)]),
        t(1, &[(13, 14, 1), (15, 14, 5)]),
        t(2, &[(5, 8, 3), (6, 21, 6), (22, 7, 3)]),
        t(3, &[(4, 8, 3), (13, 10, 3), (23, 8, 3), (5, 21, 5)]),
        t(4, &[(3, 8, 5), (15, 6, 3), (4, 18, 5), (16, 18, 5)]),
        t(
            5,
            &[(4, 20, 7), (5, 7, 5), (14, 8, 3), (15, 21, 5), (24, 19, 7)],
        ),
        t(
            6,
            &[(4, 19, 6), (14, 8, 5), (24, 9, 3), (14, 10, 3), (15, 21, 5)],
        ),
        t(7, &[(4, 7, 3), (5, 21, 6)]),
        t(
            8,
            &[
                (4, 9, 3),
                (13, 9, 3),
                (23, 9, 3),
                (5, 7, 5),
                (14, 21, 5),
                (12, 21, 1),
                (15, 7, 5),
            ],
        ),
        t(
            9,
            &[(4, 9, 3), (14, 9, 3), (5, 7, 5), (5, 21, 5), (16, 21, 5)],
        ),
    ]
}

/// Checks that `templates` holds exactly one valid template per class.
pub fn validate_templates(templates: &[ClassTemplate], order: usize) -> Result<(), DatasetError> {
    let mut seen = [false; NUM_CLASSES];
    for t in templates {
        let slot = seen
            .get_mut(t.class_id as usize)
            .ok_or(DatasetError::UnknownClass(t.class_id))?;
        if std::mem::replace(slot, true) {
            return Err(DatasetError::DuplicateClass(t.class_id));
        }
        t.validate(order)?;
    }
    match seen.iter().position(|&s| !s) {
        Some(missing) => Err(DatasetError::MissingClass(missing as u8)),
        None => Ok(()),
    }
}

fn template_for(templates: &[ClassTemplate], class_id: u8) -> Result<&ClassTemplate, DatasetError> {
    if class_id as usize >= NUM_CLASSES {
        return Err(DatasetError::UnknownClass(class_id));
    }
    templates
        .iter()
        .find(|t| t.class_id == class_id)
        .ok_or(DatasetError::MissingClass(class_id))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleOptions {
    pub rotation: bool,
    pub jitter: bool,
}

impl Default for SampleOptions {
    fn default() -> Self {
        Self {
            rotation: false,
            jitter: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub image: Image,
    pub class_label: u8,
    /// Seed configuration, template rows (0 = empty).
    pub y_g: Grid<u8>,
    /// Seed configuration, orientations (1 at empty sites).
    pub y_s: Grid<u8>,
    pub steps: usize,
    pub rng_seed: u64,
}

impl SampleRecord {
    pub fn seed_configuration(&self) -> Configuration {
        Configuration::from_labels(&self.y_g, &self.y_s).expect("label lattices share a shape")
    }
}

pub fn splitmix64(state: u64) -> u64 {
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of sample `index` in a run started from `master_seed`.
pub fn derive_seed(master_seed: u64, index: u64) -> u64 {
    const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
    splitmix64(master_seed.wrapping_add(index.wrapping_add(1).wrapping_mul(GAMMA)))
}

/// Renders any lattice: non-empty sites are 1, empty sites 0.
pub fn lattice_image(config: &Configuration) -> Image {
    config.grid().map(|g| if g.is_empty() { 0.0 } else { 1.0 })
}

pub fn render(config: &Configuration) -> Result<Image, DatasetError> {
    check_side(config.width(), config.height())?;
    Ok(lattice_image(config))
}

fn check_side(width: usize, height: usize) -> Result<(), DatasetError> {
    if width != SIDE || height != SIDE {
        return Err(DatasetError::DimensionMismatch {
            expected: SIDE,
            width,
            height,
        });
    }
    Ok(())
}

/// Translation keeping every seed at least one site away from the border.
fn clipped_shift(template: &ClassTemplate, dr: i64, dc: i64) -> (i64, i64) {
    let (min_r, max_r) = bounds(template.seeds.iter().map(|s| s.0));
    let (min_c, max_c) = bounds(template.seeds.iter().map(|s| s.1));
    let limit = (SIDE - 2) as i64;
    (
        dr.clamp(1 - min_r, limit - max_r),
        dc.clamp(1 - min_c, limit - max_c),
    )
}

fn bounds(values: impl Iterator<Item = usize>) -> (i64, i64) {
    values.fold((i64::MAX, i64::MIN), |(lo, hi), v| {
        (lo.min(v as i64), hi.max(v as i64))
    })
}

fn seed_configuration(template: &ClassTemplate, (dr, dc): (i64, i64)) -> Configuration {
    let mut c0 = Configuration::empty(SIDE, SIDE);
    for &(row, col, s) in &template.seeds {
        let site = ((row as i64 + dr) as usize, (col as i64 + dc) as usize);
        c0.set(site, GeneratorInstance::new(SEED_ALPHA, s));
    }
    c0
}

/// Nearest-neighbour rotation about the lattice centre; sites that map from
/// outside take `fill`.
pub fn rotate_nearest<T: Copy>(grid: &Grid<T>, degrees: f64, fill: T) -> Grid<T> {
    let (sin, cos) = degrees.to_radians().sin_cos();
    let cy = (grid.height() as f64 - 1.0) / 2.0;
    let cx = (grid.width() as f64 - 1.0) / 2.0;
    Grid::from_fn(grid.width(), grid.height(), |(row, col)| {
        let y = row as f64 - cy;
        let x = col as f64 - cx;
        // inverse rotation: where did this output pixel come from
        let src_x = (cos * x + sin * y + cx).round();
        let src_y = (-sin * x + cos * y + cy).round();
        if src_x < 0.0 || src_y < 0.0 {
            return fill;
        }
        grid.get((src_y as usize, src_x as usize))
            .copied()
            .unwrap_or(fill)
    })
}

/// Draws one sample of `class_id` from `rng_seed`.
pub fn sample(
    space: &GeneratorSpace,
    templates: &[ClassTemplate],
    class_id: u8,
    rng_seed: u64,
    opts: SampleOptions,
) -> Result<SampleRecord, DatasetError> {
    let template = template_for(templates, class_id)?;
    template.validate(space.order())?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let steps = rng.random_range(MIN_STEPS..=MAX_STEPS);
    let shift = if opts.jitter {
        let dr = rng.random_range(-MAX_JITTER..=MAX_JITTER);
        let dc = rng.random_range(-MAX_JITTER..=MAX_JITTER);
        clipped_shift(template, dr, dc)
    } else {
        (0, 0)
    };
    let c0 = seed_configuration(template, shift);
    let grown = develop(space, &c0, DATASET_RULE, steps)?.config;
    let mut image = lattice_image(&grown);
    let mut y_g = c0.alpha_grid();
    let mut y_s = c0.s_grid();
    if opts.rotation {
        let angle = rng.random_range(-MAX_ROTATION_DEG..=MAX_ROTATION_DEG);
        image = rotate_nearest(&image, angle, 0.0);
        y_g = rotate_nearest(&y_g, angle, 0);
        y_s = rotate_nearest(&y_s, angle, 1);
        // keep the empty-site encoding canonical
        for (s, &g) in y_s.as_mut_slice().iter_mut().zip(y_g.as_slice()) {
            if g == 0 {
                *s = 1;
            }
        }
    }
    Ok(SampleRecord {
        image,
        class_label: class_id,
        y_g,
        y_s,
        steps,
        rng_seed,
    })
}

/// `count` samples of one class.
pub fn generate_class(
    space: &GeneratorSpace,
    templates: &[ClassTemplate],
    class_id: u8,
    master_seed: u64,
    count: usize,
    opts: SampleOptions,
    exec: Execution,
) -> Result<Vec<SampleRecord>, DatasetError> {
    template_for(templates, class_id)?;
    map_indexed(exec, count, |i| {
        sample(
            space,
            templates,
            class_id,
            derive_seed(master_seed, i as u64),
            opts,
        )
    })
    .into_iter()
    .collect()
}

/// Class and sample seed of dataset item `index`; classes are uniform.
pub fn dataset_item(master_seed: u64, index: u64) -> (u8, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master_seed, index));
    let class = rng.random_range(0..NUM_CLASSES as u8);
    (class, rng.next_u64())
}

/// `count` samples with uniformly drawn classes, in index order.
pub fn generate_dataset(
    space: &GeneratorSpace,
    templates: &[ClassTemplate],
    master_seed: u64,
    count: usize,
    opts: SampleOptions,
    exec: Execution,
) -> Result<Vec<SampleRecord>, DatasetError> {
    validate_templates(templates, space.order())?;
    map_indexed(exec, count, |i| {
        let (class, seed) = dataset_item(master_seed, i as u64);
        sample(space, templates, class, seed, opts)
    })
    .into_iter()
    .collect()
}

/// Grows the seed configuration given by label lattices and renders it.
/// `steps = None` develops to a fixed point within the step cap.
pub fn reconstruct(
    space: &GeneratorSpace,
    y_g: &Grid<u8>,
    y_s: &Grid<u8>,
    steps: Option<usize>,
) -> Result<Image, DatasetError> {
    check_side(y_g.width(), y_g.height())?;
    check_side(y_s.width(), y_s.height())?;
    for (i, (&g, &s)) in y_g.as_slice().iter().zip(y_s.as_slice()).enumerate() {
        if g as usize >= space.row_count() {
            return Err(DatasetError::LabelOutOfRange {
                site: y_g.site_of(i),
                value: g,
            });
        }
        if s == 0 || s as usize > space.order() {
            return Err(DatasetError::LabelOutOfRange {
                site: y_s.site_of(i),
                value: s,
            });
        }
    }
    let c0 = Configuration::from_labels(y_g, y_s).expect("shapes checked");
    let grown = develop(space, &c0, DATASET_RULE, steps.unwrap_or(MAX_STEPS))?.config;
    Ok(lattice_image(&grown))
}

/// Fraction of `n_samples` dataset items with a seed at each site.
pub fn spatial_distribution(
    space: &GeneratorSpace,
    templates: &[ClassTemplate],
    n_samples: usize,
    master_seed: u64,
    opts: SampleOptions,
    exec: Execution,
) -> Result<Grid<f64>, DatasetError> {
    if n_samples == 0 {
        return Err(DatasetError::NoSamples);
    }
    let records = generate_dataset(space, templates, master_seed, n_samples, opts, exec)?;
    let mut counts = Grid::filled(SIDE, SIDE, 0usize);
    for r in &records {
        for (count, &g) in counts.as_mut_slice().iter_mut().zip(r.y_g.as_slice()) {
            *count += usize::from(g != 0);
        }
    }
    Ok(counts.map(|&c| c as f64 / n_samples as f64))
}
