use crate::{GeomError, Mat3, Vec3};
use serde::{Deserialize, Serialize};

/// Determinant threshold below which a lattice is treated as singular (Å³).
pub const DET_EPS: f64 = 1e-10;

/// Rotation-invariant cell parameters: side lengths in Å and internal angles.
/// Angles are stored in degrees at the interface; [`LatticeParams::angles_rad`]
/// gives the radian view used inside losses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeParams {
    pub lengths: Vec3,
    /// Degrees. Training data keeps these within [60, 120] after Niggli
    /// reduction, but the type itself accepts any geometrically valid cell.
    pub angles_deg: Vec3,
}

impl LatticeParams {
    pub fn new(lengths: Vec3, angles_deg: Vec3) -> Self {
        LatticeParams {
            lengths,
            angles_deg,
        }
    }

    pub fn angles_rad(&self) -> Vec3 {
        [
            self.angles_deg[0].to_radians(),
            self.angles_deg[1].to_radians(),
            self.angles_deg[2].to_radians(),
        ]
    }

    /// Parallelepiped volume from the six parameters (Å³).
    pub fn volume(&self) -> f64 {
        let [a, b, c] = self.lengths;
        let [ca, cb, cg] = {
            let r = self.angles_rad();
            [r[0].cos(), r[1].cos(), r[2].cos()]
        };
        let arg = 1.0 - ca * ca - cb * cb - cg * cg + 2.0 * ca * cb * cg;
        a * b * c * arg.max(0.0).sqrt()
    }
}

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Inverse of a 3x3 matrix via the adjugate. Caller checks the determinant.
pub(crate) fn inv3(m: &Mat3) -> Result<Mat3, GeomError> {
    let det = det3(m);
    if det.abs() <= DET_EPS {
        return Err(GeomError::SingularLattice { det });
    }
    let inv_det = 1.0 / det;
    let mut out = [[0.0; 3]; 3];
    out[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv_det;
    out[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv_det;
    out[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv_det;
    out[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv_det;
    out[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv_det;
    out[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv_det;
    out[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv_det;
    out[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv_det;
    out[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv_det;
    Ok(out)
}

pub fn lattice_volume(lattice: &Mat3) -> f64 {
    det3(lattice)
}

/// Row-vector times row-basis matrix: `out_j = sum_k v_k * m[k][j]`.
pub(crate) fn row_mat_mul(v: &Vec3, m: &Mat3) -> Vec3 {
    [
        v[0] * m[0][0] + v[1] * m[1][0] + v[2] * m[2][0],
        v[0] * m[0][1] + v[1] * m[1][1] + v[2] * m[2][1],
        v[0] * m[0][2] + v[1] * m[1][2] + v[2] * m[2][2],
    ]
}

/// Cartesian -> fractional for every atom: `frac = cart · L⁻¹`.
///
/// Results are not wrapped; see [`wrap_fractional`].
pub fn cart_to_frac(lattice: &Mat3, cart: &[Vec3]) -> Result<Vec<Vec3>, GeomError> {
    let inv = inv3(lattice)?;
    Ok(cart.iter().map(|x| row_mat_mul(x, &inv)).collect())
}

/// Fractional -> Cartesian for every atom: `cart = frac · L`.
pub fn frac_to_cart(lattice: &Mat3, frac: &[Vec3]) -> Result<Vec<Vec3>, GeomError> {
    if lattice.iter().flatten().any(|v| !v.is_finite()) {
        return Err(GeomError::NonFinite { what: "lattice" });
    }
    if frac.iter().flatten().any(|v| !v.is_finite()) {
        return Err(GeomError::NonFinite {
            what: "fractional coordinates",
        });
    }
    Ok(frac.iter().map(|f| row_mat_mul(f, lattice)).collect())
}

/// Wrap each component to `[0, 1)` by subtracting the floor. Idempotent;
/// exact integers (including 1.0) map to 0.0.
pub fn wrap_fractional(frac: &[Vec3]) -> Vec<Vec3> {
    frac.iter()
        .map(|f| {
            let mut w = *f;
            wrap_vec3(&mut w);
            w
        })
        .collect()
}

pub fn wrap_fractional_in_place(frac: &mut [Vec3]) {
    for f in frac {
        wrap_vec3(f);
    }
}

fn wrap_vec3(f: &mut Vec3) {
    for v in f.iter_mut() {
        *v -= v.floor();
        // x - floor(x) can round up to exactly 1.0 for tiny negatives.
        if *v >= 1.0 {
            *v -= 1.0;
        }
    }
}

/// Rotation-invariant parameters of a lattice matrix: row lengths and the
/// angles between rows (alpha between l2 and l3, beta between l1 and l3,
/// gamma between l1 and l2), in degrees.
pub fn lattice_matrix_to_params(lattice: &Mat3) -> Result<LatticeParams, GeomError> {
    let det = det3(lattice);
    if det <= DET_EPS {
        return Err(GeomError::SingularLattice { det });
    }
    let rows = lattice;
    let mut lengths = [0.0; 3];
    for (i, len) in lengths.iter_mut().enumerate() {
        *len = norm(&rows[i]);
        if *len <= 0.0 {
            return Err(GeomError::DegenerateRow { row: i });
        }
    }
    let angle = |i: usize, j: usize| -> f64 {
        let c = dot(&rows[i], &rows[j]) / (lengths[i] * lengths[j]);
        c.clamp(-1.0, 1.0).acos().to_degrees()
    };
    Ok(LatticeParams {
        lengths,
        angles_deg: [angle(1, 2), angle(0, 2), angle(0, 1)],
    })
}

/// Canonical-orientation matrix for a parameter set: l1 along +x, l2 in the
/// xy-plane with positive y, l3 with positive z. Errors when the angles are
/// geometrically inconsistent (the Gram matrix is not positive definite).
pub fn lattice_params_to_matrix(params: &LatticeParams) -> Result<Mat3, GeomError> {
    let [a, b, c] = params.lengths;
    if !(a > 0.0 && b > 0.0 && c > 0.0) {
        return Err(GeomError::InconsistentParams {
            reason: format!("non-positive lengths ({a}, {b}, {c})"),
        });
    }
    let [alpha, beta, gamma] = params.angles_rad();
    if !alpha.is_finite() || !beta.is_finite() || !gamma.is_finite() {
        return Err(GeomError::NonFinite { what: "angles" });
    }
    let (sg, cg) = gamma.sin_cos();
    let ca = alpha.cos();
    let cb = beta.cos();
    if sg.abs() < 1e-12 {
        return Err(GeomError::InconsistentParams {
            reason: "gamma is 0 or 180 degrees".to_string(),
        });
    }
    let cy = (ca - cb * cg) / sg;
    let cz_sq = 1.0 - cb * cb - cy * cy;
    if cz_sq <= 0.0 {
        return Err(GeomError::InconsistentParams {
            reason: format!(
                "angles ({:.3}, {:.3}, {:.3}) deg admit no positive-volume cell",
                params.angles_deg[0], params.angles_deg[1], params.angles_deg[2]
            ),
        });
    }
    Ok([
        [a, 0.0, 0.0],
        [b * cg, b * sg, 0.0],
        [c * cb, c * cy, c * cz_sq.sqrt()],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

    #[test]
    fn cart_to_frac_identity_lattice() {
        let frac = cart_to_frac(&IDENTITY, &[[0.3, 0.4, 0.5]]).unwrap();
        assert_eq!(frac, vec![[0.3, 0.4, 0.5]]);
    }

    #[test]
    fn cart_to_frac_uniform_scaling() {
        let lat = [[2.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 2.0]];
        let frac = cart_to_frac(&lat, &[[1.0, 1.0, 1.0]]).unwrap();
        for v in frac[0] {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn cart_to_frac_rejects_singular() {
        let lat = [[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(matches!(
            cart_to_frac(&lat, &[[0.0; 3]]),
            Err(GeomError::SingularLattice { .. })
        ));
    }

    #[test]
    fn frac_to_cart_origin_any_lattice() {
        let lat = [[3.1, 0.2, -0.4], [0.7, 2.8, 0.1], [-0.3, 0.5, 4.2]];
        let cart = frac_to_cart(&lat, &[[0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(cart, vec![[0.0, 0.0, 0.0]]);
    }

    #[test]
    fn wrap_cases() {
        let w = wrap_fractional(&[[1.25, -0.1, 1.0]]);
        assert!((w[0][0] - 0.25).abs() < 1e-15);
        assert!((w[0][1] - 0.9).abs() < 1e-15);
        assert_eq!(w[0][2], 0.0);
        // idempotent
        assert_eq!(wrap_fractional(&w), w);
    }

    #[test]
    fn params_of_identity() {
        let p = lattice_matrix_to_params(&IDENTITY).unwrap();
        assert_eq!(p.lengths, [1.0, 1.0, 1.0]);
        for a in p.angles_deg {
            assert!((a - 90.0).abs() < 1e-12);
        }
    }

    #[test]
    fn params_of_diagonal() {
        let lat = [[2.0, 0.0, 0.0], [0.0, 3.0, 0.0], [0.0, 0.0, 4.0]];
        let p = lattice_matrix_to_params(&lat).unwrap();
        assert_eq!(p.lengths, [2.0, 3.0, 4.0]);
        for a in p.angles_deg {
            assert!((a - 90.0).abs() < 1e-12);
        }
    }

    #[test]
    fn matrix_of_cubic_params() {
        let p = LatticeParams::new([1.0, 1.0, 1.0], [90.0, 90.0, 90.0]);
        let m = lattice_params_to_matrix(&p).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((m[i][j] - want).abs() < 1e-15, "m[{i}][{j}] = {}", m[i][j]);
            }
        }
        let p2 = LatticeParams::new([2.0, 3.0, 4.0], [90.0, 90.0, 90.0]);
        let m2 = lattice_params_to_matrix(&p2).unwrap();
        assert!((m2[0][0] - 2.0).abs() < 1e-14);
        assert!((m2[1][1] - 3.0).abs() < 1e-14);
        assert!((m2[2][2] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn inconsistent_angles_rejected() {
        // alpha + beta + gamma constraints violated: 170/170/170 has no cell.
        let p = LatticeParams::new([1.0, 1.0, 1.0], [170.0, 170.0, 170.0]);
        assert!(matches!(
            lattice_params_to_matrix(&p),
            Err(GeomError::InconsistentParams { .. })
        ));
    }

    #[test]
    fn params_volume_matches_matrix_volume() {
        let p = LatticeParams::new([2.0, 3.0, 4.0], [80.0, 95.0, 104.0]);
        let m = lattice_params_to_matrix(&p).unwrap();
        assert!((p.volume() - lattice_volume(&m)).abs() < 1e-10);
    }
}
