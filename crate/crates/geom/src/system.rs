use crate::lattice::{det3, frac_to_cart, DET_EPS};
use crate::GeomError;
use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

pub(crate) const ZERO_MAT3: Mat3 = [[0.0; 3]; 3];

/// One crystal or molecule.
///
/// For non-periodic systems `lattice` and `frac_coords` hold all-zero
/// sentinels; the `periodic` flag, not the zeros, is authoritative. Arrays
/// stay rectangular so batching code never branches on domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicSystem {
    /// Element indices into the shared vocabulary (1..=100 for real atoms).
    pub atom_types: Vec<usize>,
    /// Cartesian coordinates, Å.
    pub cart_coords: Vec<Vec3>,
    /// Fractional coordinates in [0,1) for crystals; zero sentinel otherwise.
    pub frac_coords: Vec<Vec3>,
    /// Row-basis lattice matrix, Å; zero sentinel for molecules.
    pub lattice: Mat3,
    pub periodic: bool,
}

impl AtomicSystem {
    /// Build a molecule; frac/lattice sentinels are filled in.
    pub fn molecule(atom_types: Vec<usize>, cart_coords: Vec<Vec3>) -> Result<Self, GeomError> {
        let n = atom_types.len();
        let sys = AtomicSystem {
            atom_types,
            cart_coords,
            frac_coords: vec![[0.0; 3]; n],
            lattice: ZERO_MAT3,
            periodic: false,
        };
        sys.validate()?;
        Ok(sys)
    }

    /// Build a crystal from wrapped fractional coordinates; Cartesian
    /// coordinates are derived as `frac · L`.
    pub fn crystal(
        atom_types: Vec<usize>,
        frac_coords: Vec<Vec3>,
        lattice: Mat3,
    ) -> Result<Self, GeomError> {
        let cart_coords = frac_to_cart(&lattice, &frac_coords)?;
        let sys = AtomicSystem {
            atom_types,
            cart_coords,
            frac_coords,
            lattice,
            periodic: true,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn n_atoms(&self) -> usize {
        self.atom_types.len()
    }

    /// Check every documented invariant; cheap enough to run at import and
    /// after decoding.
    pub fn validate(&self) -> Result<(), GeomError> {
        let n = self.atom_types.len();
        if n == 0 {
            return Err(GeomError::InvalidSystem {
                reason: "empty system (N = 0)".to_string(),
            });
        }
        if self.cart_coords.len() != n || self.frac_coords.len() != n {
            return Err(GeomError::InvalidSystem {
                reason: format!(
                    "array lengths disagree: types {n}, cart {}, frac {}",
                    self.cart_coords.len(),
                    self.frac_coords.len()
                ),
            });
        }
        if self
            .cart_coords
            .iter()
            .flatten()
            .any(|v| !v.is_finite())
        {
            return Err(GeomError::NonFinite {
                what: "cartesian coordinates",
            });
        }
        for (i, &t) in self.atom_types.iter().enumerate() {
            if !(1..=100).contains(&t) {
                return Err(GeomError::InvalidSystem {
                    reason: format!("atom {i} has non-element type index {t}"),
                });
            }
        }
        if self.periodic {
            if self.lattice.iter().flatten().any(|v| !v.is_finite()) {
                return Err(GeomError::NonFinite { what: "lattice" });
            }
            let det = det3(&self.lattice);
            if det <= DET_EPS {
                return Err(GeomError::InvalidSystem {
                    reason: format!("periodic system with det(L) = {det:.3e} <= 0"),
                });
            }
            for (i, f) in self.frac_coords.iter().enumerate() {
                if f.iter().any(|v| !(0.0..1.0).contains(v)) {
                    return Err(GeomError::InvalidSystem {
                        reason: format!("atom {i} fractional coords {f:?} outside [0,1)"),
                    });
                }
            }
            // cart = frac · L within 1e-8 relative to the coordinate scale.
            let derived = frac_to_cart(&self.lattice, &self.frac_coords)?;
            let scale = self
                .cart_coords
                .iter()
                .flatten()
                .fold(1.0_f64, |m, v| m.max(v.abs()));
            for (i, (got, want)) in self.cart_coords.iter().zip(&derived).enumerate() {
                for k in 0..3 {
                    if (got[k] - want[k]).abs() > 1e-8 * scale {
                        return Err(GeomError::InvalidSystem {
                            reason: format!(
                                "atom {i}: cart {got:?} inconsistent with frac · L = {want:?}"
                            ),
                        });
                    }
                }
            }
        } else {
            let zeros = self.lattice.iter().flatten().all(|&v| v == 0.0)
                && self.frac_coords.iter().flatten().all(|&v| v == 0.0);
            if !zeros {
                return Err(GeomError::InvalidSystem {
                    reason: "non-periodic system must carry zero lattice/frac sentinels"
                        .to_string(),
                });
            }
        }
        Ok(())
    }
}

/// Plain (non-periodic) pairwise distance matrix, row-major N x N.
pub fn pairwise_distances(coords: &[Vec3]) -> Vec<f64> {
    let n = coords.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = coords[i][0] - coords[j][0];
            let dy = coords[i][1] - coords[j][1];
            let dz = coords[i][2] - coords[j][2];
            let dist = (dx * dx + dy * dy + dz * dz).sqrt();
            d[i * n + j] = dist;
            d[j * n + i] = dist;
        }
    }
    d
}
