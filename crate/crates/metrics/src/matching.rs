use atomgen_geom::{lattice_matrix_to_params, zero_center, AtomicSystem, Vec3};
use std::collections::BTreeMap;

/// Molecule match threshold: RMSD after optimal rigid alignment (Å).
pub const MOL_RMSD_THRESHOLD: f64 = 0.5;
/// Crystal match thresholds: cell lengths (Å), angles (degrees), and the
/// maximum minimum-image fractional deviation.
pub const CELL_LENGTH_THRESHOLD: f64 = 0.3;
pub const CELL_ANGLE_THRESHOLD_DEG: f64 = 5.0;
pub const FRAC_DEVIATION_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchOutcome {
    pub matched: bool,
    /// Molecules: RMSD after Kabsch alignment. Crystals: RMS minimum-image
    /// Cartesian deviation through the original cell. NaN when the systems
    /// are not comparable (different size or composition).
    pub rmsd: f64,
}

/// Tolerance-based equivalence between an original and a reconstruction.
///
/// Both sides must agree on atom count and composition. Molecules are
/// zero-centered, canonically sorted by (type, lexicographic coordinates),
/// and aligned with the optimal proper rotation; matched iff RMSD <= 0.5 Å.
/// Crystals match iff cell parameters agree within (0.3 Å, 5°) and the
/// maximum minimum-image fractional deviation after wrapping is <= 0.1, with
/// atoms likewise canonically sorted; the crystal branch is symmetric in its
/// arguments.
pub fn match_rate(original: &AtomicSystem, reconstructed: &AtomicSystem) -> MatchOutcome {
    let incomparable = MatchOutcome {
        matched: false,
        rmsd: f64::NAN,
    };
    if original.n_atoms() != reconstructed.n_atoms()
        || original.periodic != reconstructed.periodic
        || composition(original) != composition(reconstructed)
    {
        return incomparable;
    }

    if original.periodic {
        match_crystal(original, reconstructed)
    } else {
        match_molecule(original, reconstructed)
    }
}

fn composition(system: &AtomicSystem) -> BTreeMap<usize, usize> {
    let mut c = BTreeMap::new();
    for &t in &system.atom_types {
        *c.entry(t).or_insert(0) += 1;
    }
    c
}

fn match_molecule(original: &AtomicSystem, reconstructed: &AtomicSystem) -> MatchOutcome {
    let p = sorted_coords(&original.atom_types, &zero_center(&original.cart_coords));
    let q = sorted_coords(
        &reconstructed.atom_types,
        &zero_center(&reconstructed.cart_coords),
    );
    let rmsd = kabsch_rmsd(&p, &q);
    MatchOutcome {
        matched: rmsd <= MOL_RMSD_THRESHOLD,
        rmsd,
    }
}

fn match_crystal(original: &AtomicSystem, reconstructed: &AtomicSystem) -> MatchOutcome {
    let (pa, pb) = match (
        lattice_matrix_to_params(&original.lattice),
        lattice_matrix_to_params(&reconstructed.lattice),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        _ => {
            return MatchOutcome {
                matched: false,
                rmsd: f64::NAN,
            }
        }
    };
    let mut cell_ok = true;
    for k in 0..3 {
        if (pa.lengths[k] - pb.lengths[k]).abs() > CELL_LENGTH_THRESHOLD {
            cell_ok = false;
        }
        if (pa.angles_deg[k] - pb.angles_deg[k]).abs() > CELL_ANGLE_THRESHOLD_DEG {
            cell_ok = false;
        }
    }

    let fa = sorted_coords(&original.atom_types, &original.frac_coords);
    let fb = sorted_coords(&reconstructed.atom_types, &reconstructed.frac_coords);
    let mut max_dev = 0.0f64;
    let mut rms_cart = 0.0f64;
    for (a, b) in fa.iter().zip(&fb) {
        let mut wrapped = [0.0f64; 3];
        for k in 0..3 {
            let d = a[k] - b[k];
            wrapped[k] = d - d.round();
        }
        let dev = (wrapped[0].powi(2) + wrapped[1].powi(2) + wrapped[2].powi(2)).sqrt();
        max_dev = max_dev.max(dev);
        // Cartesian deviation through the original cell for the reported RMSD.
        let mut cart = [0.0f64; 3];
        for j in 0..3 {
            for (k, w) in wrapped.iter().enumerate() {
                cart[j] += w * original.lattice[k][j];
            }
        }
        rms_cart += cart[0].powi(2) + cart[1].powi(2) + cart[2].powi(2);
    }
    let rmsd = (rms_cart / fa.len() as f64).sqrt();
    MatchOutcome {
        matched: cell_ok && max_dev <= FRAC_DEVIATION_THRESHOLD,
        rmsd,
    }
}

/// Canonical atom order: by (type, lexicographic coordinates).
fn sorted_coords(types: &[usize], coords: &[Vec3]) -> Vec<Vec3> {
    let mut order: Vec<usize> = (0..types.len()).collect();
    order.sort_by(|&i, &j| {
        types[i].cmp(&types[j]).then_with(|| {
            coords[i]
                .partial_cmp(&coords[j])
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    order.into_iter().map(|i| coords[i]).collect()
}

/// RMSD under the optimal proper rotation (Horn's quaternion method): the
/// largest eigenvalue of the 4x4 correlation matrix gives
/// RMSD² = (Σ|p|² + Σ|q|² - 2 λ_max) / N.
fn kabsch_rmsd(p: &[Vec3], q: &[Vec3]) -> f64 {
    let n = p.len() as f64;
    let mut gp = 0.0;
    let mut gq = 0.0;
    let mut h = [[0.0f64; 3]; 3];
    for (a, b) in p.iter().zip(q) {
        for i in 0..3 {
            gp += a[i] * a[i];
            gq += b[i] * b[i];
            for j in 0..3 {
                h[i][j] += a[i] * b[j];
            }
        }
    }
    // Horn's symmetric 4x4 key matrix.
    let (sxx, sxy, sxz) = (h[0][0], h[0][1], h[0][2]);
    let (syx, syy, syz) = (h[1][0], h[1][1], h[1][2]);
    let (szx, szy, szz) = (h[2][0], h[2][1], h[2][2]);
    let key = [
        [
            sxx + syy + szz,
            syz - szy,
            szx - sxz,
            sxy - syx,
        ],
        [
            syz - szy,
            sxx - syy - szz,
            sxy + syx,
            szx + sxz,
        ],
        [
            szx - sxz,
            sxy + syx,
            -sxx + syy - szz,
            syz + szy,
        ],
        [
            sxy - syx,
            szx + sxz,
            syz + szy,
            -sxx - syy + szz,
        ],
    ];
    let lambda_max = max_eigenvalue_sym4(key);
    ((gp + gq - 2.0 * lambda_max).max(0.0) / n).sqrt()
}

/// Largest eigenvalue of a symmetric 4x4 matrix via cyclic Jacobi rotations.
fn max_eigenvalue_sym4(mut a: [[f64; 4]; 4]) -> f64 {
    for _ in 0..64 {
        // Locate the largest off-diagonal element.
        let (mut p, mut q, mut big) = (0, 1, 0.0f64);
        for i in 0..4 {
            for j in (i + 1)..4 {
                if a[i][j].abs() > big {
                    big = a[i][j].abs();
                    p = i;
                    q = j;
                }
            }
        }
        if big < 1e-13 {
            break;
        }
        let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
        let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
        let c = 1.0 / (t * t + 1.0).sqrt();
        let s = t * c;
        for k in 0..4 {
            let akp = a[k][p];
            let akq = a[k][q];
            a[k][p] = c * akp - s * akq;
            a[k][q] = s * akp + c * akq;
        }
        for k in 0..4 {
            let apk = a[p][k];
            let aqk = a[q][k];
            a[p][k] = c * apk - s * aqk;
            a[q][k] = s * apk + c * aqk;
        }
    }
    (0..4).map(|i| a[i][i]).fold(f64::NEG_INFINITY, f64::max)
}
