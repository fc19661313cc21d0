//! Geometric core for atomic systems: a unified representation of periodic
//! crystals and non-periodic molecules, plus the lattice/coordinate math and
//! data augmentation that everything downstream builds on.
//!
//! Conventions used throughout the workspace:
//! - lattice rows are the basis vectors `l1, l2, l3` (Å);
//! - Cartesian coordinates are recovered as `cart = frac · L` per atom
//!   (row-vector times row-basis matrix);
//! - fractional coordinates live in `[0, 1)` after wrapping;
//! - non-periodic systems carry all-zero lattice/frac sentinels and the
//!   `periodic` flag is authoritative.
//!
//! All operations here are pure functions of their inputs and safe for
//! unrestricted parallel use.

mod augment;
mod error;
mod lattice;
mod niggli;
mod pbc;
mod system;
mod vocab;

pub use augment::{augment, random_rotation, zero_center};
pub use error::GeomError;
pub use lattice::{
    cart_to_frac, frac_to_cart, lattice_matrix_to_params, lattice_params_to_matrix, lattice_volume,
    wrap_fractional, wrap_fractional_in_place, LatticeParams, DET_EPS,
};
pub use niggli::niggli_reduce;
pub use pbc::min_image_distance;
pub use system::{pairwise_distances, AtomicSystem, Mat3, Vec3};
pub use vocab::{AtomVocabulary, MASK_INDEX, PAD_INDEX, VOCAB_SIZE};
