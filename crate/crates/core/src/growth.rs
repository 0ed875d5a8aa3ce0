//! Configuration transformations: environment computation, the single-step
//! growth rules, and the iterated develop loop.
//!
//! All placement rules share three constraints:
//! 1. only empty sites receive generators;
//! 2. a site is filled from the bond values its neighbours point at it
//!    (exactly one for [`GrowthVariant::Original`]/[`GrowthVariant::Revised`],
//!    at least one for [`GrowthVariant::Modified`]);
//! 3. a winning bond value `v` places row `v - 1`, oriented along the
//!    direction from parent to child.
//!
//! Every step reads a snapshot and writes a fresh configuration.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::grid::Site;
use crate::pattern::{
    step, Configuration, GeneratorInstance, GeneratorSpace, PatternError, Topology,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GrowthError {
    #[error("{0} is not a bond-driven growth rule")]
    UnsupportedVariant(GrowthVariant),
    #[error(transparent)]
    Pattern(#[from] PatternError),
    #[error("unknown growth rule {0:?}, expected original, revised, modified or max")]
    UnknownRule(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrowthVariant {
    /// Single-competitor rule with orientations taken in raw array-index
    /// order: a child grown in direction `d` receives `s = d - 1` (cyclic).
    Original,
    /// Single-competitor rule, child oriented along its growth direction.
    Revised,
    /// Multi-competitor rule: the largest contending bond value wins, ties
    /// go to the lowest direction index.
    Modified,
    /// Value-wise rule on plain integer lattices: an empty site takes the
    /// maximum of its Moore neighbours unless that maximum is `r`.
    MaxRule { r: u8 },
}

impl fmt::Display for GrowthVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GrowthVariant::Original => f.write_str("original"),
            GrowthVariant::Revised => f.write_str("revised"),
            GrowthVariant::Modified => f.write_str("modified"),
            GrowthVariant::MaxRule { r } => write!(f, "max(r={r})"),
        }
    }
}

impl FromStr for GrowthVariant {
    type Err = GrowthError;

    /// `max` parses to `MaxRule { r: 5 }`; `max:R` picks another threshold.
    fn from_str(s: &str) -> Result<Self, GrowthError> {
        match s {
            "original" => Ok(Self::Original),
            "revised" => Ok(Self::Revised),
            "modified" => Ok(Self::Modified),
            "max" => Ok(Self::MaxRule { r: 5 }),
            other => other
                .strip_prefix("max:")
                .and_then(|r| r.parse().ok())
                .map(|r| Self::MaxRule { r })
                .ok_or_else(|| GrowthError::UnknownRule(other.to_owned())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GrowthRule {
    pub variant: GrowthVariant,
    pub step_cap: usize,
}

impl GrowthRule {
    pub fn new(variant: GrowthVariant, step_cap: usize) -> Self {
        Self { variant, step_cap }
    }

    pub fn uncapped(variant: GrowthVariant) -> Self {
        Self::new(variant, usize::MAX)
    }
}

/// Incoming bond values per site and per growth direction.
///
/// `at(site)[d - 1]` is the value pointed at `site` by its neighbour one step
/// against direction `d` (the parent that would grow the site in direction
/// `d`), or 0 when that neighbour is empty, absent, or has no such bond.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Environment {
    width: usize,
    height: usize,
    arity: usize,
    values: Vec<u8>,
}

impl Environment {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn at(&self, (row, col): Site) -> &[u8] {
        let i = (row * self.width + col) * self.arity;
        &self.values[i..i + self.arity]
    }

    /// Nonzero `(direction, value)` pairs arriving at `site`.
    pub fn contributions(&self, site: Site) -> impl Iterator<Item = (usize, u8)> + '_ {
        self.at(site)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(|(d, &v)| (d + 1, v))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }
}

pub fn compenv(space: &GeneratorSpace, config: &Configuration) -> Result<Environment, GrowthError> {
    config.validate(space)?;
    let (width, height) = config.dims();
    let arity = space.arity();
    let offsets = space.topology().offsets();
    let mut values = vec![0u8; width * height * arity];
    for row in 0..height {
        for col in 0..width {
            let g = config.get((row, col));
            if g.is_empty() {
                continue;
            }
            for (d, (&bond, &offset)) in space.bonds_unchecked(g).iter().zip(offsets).enumerate() {
                if bond == 0 {
                    continue;
                }
                if let Some((r, c)) = step((row, col), offset, width, height) {
                    values[(r * width + c) * arity + d] = bond;
                }
            }
        }
    }
    Ok(Environment {
        width,
        height,
        arity,
        values,
    })
}

/// Picks the `(direction, value)` that fills a site, if any.
fn winner(variant: GrowthVariant, incoming: &[u8]) -> Option<(usize, u8)> {
    let mut nonzero = incoming
        .iter()
        .enumerate()
        .filter(|(_, &v)| v != 0)
        .map(|(d, &v)| (d + 1, v));
    match variant {
        GrowthVariant::Original | GrowthVariant::Revised => {
            let first = nonzero.next()?;
            nonzero.next().is_none().then_some(first)
        }
        // max_by_key keeps the last maximum, so walk directions in reverse
        // to let the lowest direction win ties.
        GrowthVariant::Modified => incoming
            .iter()
            .enumerate()
            .rev()
            .filter(|(_, &v)| v != 0)
            .max_by_key(|(_, &v)| v)
            .map(|(d, &v)| (d + 1, v)),
        GrowthVariant::MaxRule { .. } => None,
    }
}

/// Orientation given to a child grown in 1-based `direction`.
pub fn spawn_orientation(variant: GrowthVariant, direction: usize, arity: usize) -> u8 {
    match variant {
        GrowthVariant::Original => ((direction + arity - 2) % arity + 1) as u8,
        _ => direction as u8,
    }
}

/// One simultaneous application of a bond-driven rule.
pub fn growth_step(
    space: &GeneratorSpace,
    config: &Configuration,
    rule: GrowthRule,
) -> Result<Configuration, GrowthError> {
    if let GrowthVariant::MaxRule { .. } = rule.variant {
        return Err(GrowthError::UnsupportedVariant(rule.variant));
    }
    let env = compenv(space, config)?;
    let arity = space.arity();
    let mut next = config.clone();
    for row in 0..config.height() {
        for col in 0..config.width() {
            if !config.get((row, col)).is_empty() {
                continue;
            }
            if let Some((d, value)) = winner(rule.variant, env.at((row, col))) {
                let s = spawn_orientation(rule.variant, d, arity);
                next.set((row, col), GeneratorInstance::new(value - 1, s));
            }
        }
    }
    Ok(next)
}

/// Max-rule step on an integer lattice stored in the `alpha` channel.
pub fn max_rule_step(config: &Configuration, r: u8) -> Configuration {
    let moore = Topology::moore();
    let (width, height) = config.dims();
    let mut next = config.clone();
    for row in 0..height {
        for col in 0..width {
            if !config.get((row, col)).is_empty() {
                continue;
            }
            let m = moore
                .offsets()
                .iter()
                .filter_map(|&o| step((row, col), o, width, height))
                .map(|site| config.get(site).alpha)
                .max()
                .unwrap_or(0);
            if m > 0 && m != r {
                next.set((row, col), GeneratorInstance::new(m, 1));
            }
        }
    }
    next
}

fn apply(
    space: &GeneratorSpace,
    config: &Configuration,
    rule: GrowthRule,
) -> Result<Configuration, GrowthError> {
    match rule.variant {
        GrowthVariant::MaxRule { r } => Ok(max_rule_step(config, r)),
        _ => growth_step(space, config, rule),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Development {
    pub config: Configuration,
    pub steps_executed: usize,
}

/// Applies `rule` up to `min(steps, rule.step_cap)` times, stopping early at
/// a fixed point.
pub fn develop(
    space: &GeneratorSpace,
    config: &Configuration,
    rule: GrowthRule,
    steps: usize,
) -> Result<Development, GrowthError> {
    let mut current = config.clone();
    let mut executed = 0;
    while executed < steps.min(rule.step_cap) {
        let next = apply(space, &current, rule)?;
        if next == current {
            break;
        }
        current = next;
        executed += 1;
    }
    Ok(Development {
        config: current,
        steps_executed: executed,
    })
}

/// Like [`develop`] but keeps every intermediate configuration, starting with
/// the input.
pub fn develop_snapshots(
    space: &GeneratorSpace,
    config: &Configuration,
    rule: GrowthRule,
    steps: usize,
) -> Result<Vec<Configuration>, GrowthError> {
    let mut snapshots = vec![config.clone()];
    for _ in 0..steps.min(rule.step_cap) {
        let last = snapshots.last().expect("non-empty");
        let next = apply(space, last, rule)?;
        if &next == last {
            break;
        }
        snapshots.push(next);
    }
    Ok(snapshots)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::{diamond_space, illustrative_space, stroke_space, ILLUSTRATIVE_SEED};
    use proptest::prelude::*;

    const REVISED: GrowthRule = GrowthRule {
        variant: GrowthVariant::Revised,
        step_cap: usize::MAX,
    };
    const MODIFIED: GrowthRule = GrowthRule {
        variant: GrowthVariant::Modified,
        step_cap: usize::MAX,
    };

    fn seeded(width: usize, height: usize, seeds: &[(Site, GeneratorInstance)]) -> Configuration {
        let mut c = Configuration::empty(width, height);
        for &(site, g) in seeds {
            c.set(site, g);
        }
        c
    }

    fn ge_grid(space: &GeneratorSpace, c: &Configuration) -> Vec<Vec<usize>> {
        c.grid()
            .rows()
            .map(|r| r.iter().map(|&g| space.ge_index(g).unwrap()).collect())
            .collect()
    }

    /// Direct transcription of the placement rule for one site, reading
    /// neighbours instead of a precomputed environment.
    fn reference_step(
        space: &GeneratorSpace,
        c: &Configuration,
        variant: GrowthVariant,
    ) -> Configuration {
        let (w, h) = c.dims();
        let offsets = space.topology().offsets();
        let arity = space.arity();
        let mut next = c.clone();
        for row in 0..h {
            for col in 0..w {
                if !c.get((row, col)).is_empty() {
                    continue;
                }
                let mut incoming = Vec::new();
                for (d, &(dr, dc)) in offsets.iter().enumerate() {
                    let pr = row as i64 - dr as i64;
                    let pc = col as i64 - dc as i64;
                    if pr < 0 || pc < 0 || pr >= h as i64 || pc >= w as i64 {
                        continue;
                    }
                    let parent = c.get((pr as usize, pc as usize));
                    if parent.is_empty() {
                        continue;
                    }
                    let v = space.transformed_bonds(parent).unwrap()[d];
                    if v != 0 {
                        incoming.push((d + 1, v));
                    }
                }
                let chosen = match variant {
                    GrowthVariant::Modified => {
                        let best = incoming.iter().map(|x| x.1).max();
                        best.and_then(|b| incoming.iter().find(|x| x.1 == b).copied())
                    }
                    _ if incoming.len() == 1 => Some(incoming[0]),
                    _ => None,
                };
                if let Some((d, v)) = chosen {
                    let s = spawn_orientation(variant, d, arity);
                    next.set((row, col), GeneratorInstance::new(v - 1, s));
                }
            }
        }
        next
    }

    #[test]
    fn empty_configuration_has_zero_environment_and_is_fixed() {
        let space = stroke_space();
        let c = Configuration::empty(7, 5);
        assert!(compenv(&space, &c).unwrap().is_zero());
        for v in [
            GrowthVariant::Original,
            GrowthVariant::Revised,
            GrowthVariant::Modified,
        ] {
            assert_eq!(growth_step(&space, &c, GrowthRule::uncapped(v)).unwrap(), c);
        }
        assert_eq!(max_rule_step(&c, 5), c);
    }

    #[test]
    fn compenv_of_illustrative_seed() {
        let space = illustrative_space();
        let c = seeded(5, 5, &[((2, 2), ILLUSTRATIVE_SEED)]);
        let env = compenv(&space, &c).unwrap();
        // right, top, left, bottom neighbours receive 1, 2, 3, 4
        assert_eq!(env.at((2, 3)), &[1, 0, 0, 0]);
        assert_eq!(env.at((1, 2)), &[0, 2, 0, 0]);
        assert_eq!(env.at((2, 1)), &[0, 0, 3, 0]);
        assert_eq!(env.at((3, 2)), &[0, 0, 0, 4]);
        let nonzero: usize = (0..5)
            .flat_map(|r| (0..5).map(move |c| (r, c)))
            .map(|s| env.contributions(s).count())
            .sum();
        assert_eq!(nonzero, 4);
    }

    #[test]
    fn compenv_keeps_two_contributions_apart() {
        let space = illustrative_space();
        // row 2 bonds 4 everywhere; (1,1) sits below (0,1) and left of (1,2)
        let c = seeded(
            3,
            3,
            &[
                ((0, 1), GeneratorInstance::new(2, 1)),
                ((1, 2), GeneratorInstance::new(2, 1)),
            ],
        );
        let env = compenv(&space, &c).unwrap();
        let incoming: Vec<_> = env.contributions((1, 1)).collect();
        // grown leftwards (3) from (1,2) and downwards (4) from (0,1)
        assert_eq!(incoming, vec![(3, 4), (4, 4)]);
    }

    #[test]
    fn illustrative_first_step_places_1_6_11_16() {
        let space = illustrative_space();
        let c0 = seeded(5, 5, &[((2, 2), ILLUSTRATIVE_SEED)]);
        let c1 = growth_step(&space, &c0, REVISED).unwrap();
        let ge = ge_grid(&space, &c1);
        assert_eq!(ge[2][2], 5);
        assert_eq!([ge[2][3], ge[1][2], ge[2][1], ge[3][2]], [1, 6, 11, 16]);
        assert_eq!(c1.occupied(), 4);
    }

    #[test]
    fn illustrative_second_step_blocks_contested_site() {
        let space = illustrative_space();
        let c0 = seeded(5, 5, &[((2, 2), ILLUSTRATIVE_SEED)]);
        for variant in [GrowthVariant::Original, GrowthVariant::Revised] {
            let rule = GrowthRule::uncapped(variant);
            let c1 = growth_step(&space, &c0, rule).unwrap();
            let c2 = growth_step(&space, &c1, rule).unwrap();
            assert_eq!(
                compenv(&space, &c1).unwrap().contributions((3, 1)).count(),
                2
            );
            assert!(c2.get((3, 1)).is_empty(), "{variant}");
        }
        // the multi-competitor rule fills it
        let c1 = growth_step(&space, &c0, MODIFIED).unwrap();
        let c2 = growth_step(&space, &c1, MODIFIED).unwrap();
        assert!(!c2.get((3, 1)).is_empty());
    }

    #[test]
    fn original_and_revised_differ_only_in_orientation() {
        let space = illustrative_space();
        let c0 = seeded(5, 5, &[((2, 2), ILLUSTRATIVE_SEED)]);
        let orig = growth_step(&space, &c0, GrowthRule::uncapped(GrowthVariant::Original)).unwrap();
        let rev = growth_step(&space, &c0, REVISED).unwrap();
        assert_eq!(orig.alpha_grid(), rev.alpha_grid());
        // children grown top, left, bottom face right, top, left
        assert_eq!(orig.get((1, 2)), GeneratorInstance::new(1, 1));
        assert_eq!(orig.get((2, 1)), GeneratorInstance::new(2, 2));
        assert_eq!(orig.get((3, 2)), GeneratorInstance::new(3, 3));
        assert_eq!(spawn_orientation(GrowthVariant::Original, 1, 4), 4);
    }

    #[test]
    fn stroke_seed_first_step() {
        let space = stroke_space();
        let c0 = seeded(11, 11, &[((5, 5), GeneratorInstance::new(1, 1))]);
        let c1 = growth_step(&space, &c0, MODIFIED).unwrap();
        assert_eq!(c1.get((4, 5)), GeneratorInstance::new(1, 1));
        assert_eq!(c1.get((4, 6)), GeneratorInstance::new(2, 2));
        assert_eq!(c1.get((5, 6)), GeneratorInstance::new(3, 3));
        assert_eq!(c1.occupied(), 4);
    }

    #[test]
    fn stroke_is_two_wide_without_holes() {
        let space = stroke_space();
        let c0 = seeded(9, 9, &[((8, 4), GeneratorInstance::new(1, 1))]);
        let out = develop(&space, &c0, MODIFIED, 3).unwrap();
        assert_eq!(out.steps_executed, 3);
        let a = out.config.alpha_grid();
        for r in 5..8 {
            assert_eq!((a[(r, 4)], a[(r, 5)]), (1, 2), "row {r}");
        }
        assert_eq!((a[(8, 4)], a[(8, 5)]), (1, 3));
        assert_eq!(out.config.occupied(), 8);
    }

    #[test]
    fn capped_stroke_spine_length() {
        let space = stroke_space();
        let c0 = seeded(28, 28, &[((20, 10), GeneratorInstance::new(1, 1))]);
        let out = develop(
            &space,
            &c0,
            GrowthRule::new(GrowthVariant::Modified, 12),
            100,
        )
        .unwrap();
        assert_eq!(out.steps_executed, 12);
        let spine = (0..28)
            .filter(|&r| out.config.get((r, 10)).alpha == 1)
            .count();
        assert_eq!(spine, 13);
    }

    #[test]
    fn develop_zero_steps_is_identity() {
        let space = stroke_space();
        let c0 = seeded(5, 5, &[((2, 2), GeneratorInstance::new(1, 3))]);
        let out = develop(&space, &c0, MODIFIED, 0).unwrap();
        assert_eq!(out.config, c0);
        assert_eq!(out.steps_executed, 0);
    }

    #[test]
    fn diamond_at_radius_four() {
        let space = diamond_space();
        let c0 = seeded(9, 9, &[((4, 4), GeneratorInstance::new(1, 1))]);
        let out = develop(&space, &c0, GrowthRule::new(GrowthVariant::Modified, 4), 50).unwrap();
        assert_eq!(out.steps_executed, 4);
        for r in 0..9i32 {
            for c in 0..9i32 {
                let dist = (r - 4).abs() + (c - 4).abs();
                let expected = match dist {
                    0 => 1,
                    1..=4 => 2,
                    _ => 0,
                };
                assert_eq!(
                    out.config.get((r as usize, c as usize)).alpha,
                    expected,
                    "({r},{c})"
                );
            }
        }
    }

    #[test]
    fn max_rule_examples() {
        let lone_r = seeded(5, 5, &[((2, 2), GeneratorInstance::new(5, 1))]);
        assert_eq!(max_rule_step(&lone_r, 5), lone_r);

        let three = seeded(5, 5, &[((2, 2), GeneratorInstance::new(3, 1))]);
        let next = max_rule_step(&three, 5);
        for r in 0..5usize {
            for c in 0..5usize {
                let near = r.abs_diff(2) <= 1 && c.abs_diff(2) <= 1;
                assert_eq!(next.get((r, c)).alpha, if near { 3 } else { 0 });
            }
        }
    }

    #[test]
    fn max_rule_through_develop() {
        let space = stroke_space();
        let c0 = seeded(5, 5, &[((0, 0), GeneratorInstance::new(2, 1))]);
        let rule = GrowthRule::uncapped(GrowthVariant::MaxRule { r: 5 });
        let out = develop(&space, &c0, rule, 100).unwrap();
        assert_eq!(out.steps_executed, 4);
        assert_eq!(out.config.occupied(), 25);
        assert_eq!(
            growth_step(&space, &c0, rule),
            Err(GrowthError::UnsupportedVariant(rule.variant))
        );
    }

    #[test]
    fn rule_names_parse() {
        assert_eq!(
            "modified".parse::<GrowthVariant>(),
            Ok(GrowthVariant::Modified)
        );
        assert_eq!(
            "max".parse::<GrowthVariant>(),
            Ok(GrowthVariant::MaxRule { r: 5 })
        );
        assert_eq!(
            "max:3".parse::<GrowthVariant>(),
            Ok(GrowthVariant::MaxRule { r: 3 })
        );
        assert!("grow".parse::<GrowthVariant>().is_err());
    }

    #[test]
    fn rejects_generators_outside_space() {
        let space = illustrative_space();
        let c = seeded(3, 3, &[((1, 1), GeneratorInstance::new(7, 1))]);
        assert!(matches!(
            growth_step(&space, &c, MODIFIED),
            Err(GrowthError::Pattern(PatternError::InvalidGenerator { .. }))
        ));
    }

    fn arb_case() -> impl Strategy<Value = (GeneratorSpace, Configuration)> {
        (prop::bool::ANY, 2usize..5, 3usize..9, 3usize..9)
            .prop_flat_map(|(moore, rows, w, h)| {
                let arity = if moore { 8 } else { 4 };
                let table =
                    prop::collection::vec(prop::collection::vec(0..=rows as u8, arity), rows);
                let seeds =
                    prop::collection::vec((0..h, 0..w, 1..rows as u8, 1..=arity as u8), 1..4);
                (Just(moore), Just(w), Just(h), table, seeds)
            })
            .prop_map(|(moore, w, h, table, seeds)| {
                let topology = if moore {
                    Topology::moore()
                } else {
                    Topology::von_neumann()
                };
                let space = GeneratorSpace::new(table, topology).unwrap();
                let mut c = Configuration::empty(w, h);
                for (r, col, a, s) in seeds {
                    c.set((r, col), GeneratorInstance::new(a, s));
                }
                (space, c)
            })
    }

    proptest! {
        #[test]
        fn step_matches_reference((space, c) in arb_case()) {
            for variant in [GrowthVariant::Original, GrowthVariant::Revised, GrowthVariant::Modified] {
                let fast = growth_step(&space, &c, GrowthRule::uncapped(variant)).unwrap();
                prop_assert_eq!(fast, reference_step(&space, &c, variant));
            }
        }

        #[test]
        fn growth_is_monotone_and_terminates((space, c) in arb_case()) {
            let (w, h) = c.dims();
            let snaps = develop_snapshots(&space, &c, MODIFIED, usize::MAX).unwrap();
            prop_assert!(snaps.len() - 1 <= w * h);
            for pair in snaps.windows(2) {
                for (a, b) in pair[0].grid().as_slice().iter().zip(pair[1].grid().as_slice()) {
                    prop_assert!(a.is_empty() || a == b);
                }
            }
        }
    }
}
