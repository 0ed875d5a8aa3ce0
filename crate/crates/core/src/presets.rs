//! Ready-made generator spaces.

use crate::pattern::{GeneratorInstance, GeneratorSpace, Topology};

/// The 8-direction stroke space used for the digit dataset.
///
/// Row 1 spawns a copy of itself on top, a row-2 generator top-right and a
/// terminal row-3 generator on the right; row 2 bonds back into row 1 from its
/// top-left slot. Row 3 is terminal but non-empty.
pub fn stroke_space() -> GeneratorSpace {
    GeneratorSpace::new(
        vec![
            vec![0; 8],
            vec![2, 3, 4, 0, 0, 0, 0, 0],
            vec![0, 0, 0, 0, 0, 0, 0, 2],
            vec![0; 8],
        ],
        Topology::moore(),
    )
    .expect("stroke space is valid")
}

/// Four-direction space (right, top, left, bottom) for the illustrative
/// two-step example: row 1 carries bonds `1, 2, 3, 4`, rows 2 and 3 bond in
/// every direction.
pub fn illustrative_space() -> GeneratorSpace {
    GeneratorSpace::new(
        vec![vec![0; 4], vec![1, 2, 3, 4], vec![4; 4], vec![3; 4]],
        Topology::von_neumann(),
    )
    .expect("illustrative space is valid")
}

/// Seed of the illustrative example, `ge = 5`.
pub const ILLUSTRATIVE_SEED: GeneratorInstance = GeneratorInstance::new(1, 1);

/// Four-direction space whose seed and spawned rows bond `3` everywhere,
/// which grows a filled diamond of row-2 generators around the seed.
pub fn diamond_space() -> GeneratorSpace {
    GeneratorSpace::new(
        vec![vec![0; 4], vec![3; 4], vec![3; 4]],
        Topology::von_neumann(),
    )
    .expect("diamond space is valid")
}
