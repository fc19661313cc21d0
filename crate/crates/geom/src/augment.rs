use crate::{AtomicSystem, Mat3, Vec3};
use rand::Rng;

/// Uniform random proper rotation (det +1) sampled via a normalized
/// quaternion of four i.i.d. standard normals.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Mat3 {
    let mut q = [0.0_f64; 4];
    let mut i = 0;
    while i < 4 {
        // Box-Muller; the (0,1] shift keeps ln away from zero.
        let u1: f64 = 1.0 - rng.random::<f64>();
        let u2: f64 = rng.random::<f64>();
        let r = (-2.0 * u1.ln()).sqrt();
        q[i] = r * (std::f64::consts::TAU * u2).cos();
        if i + 1 < 4 {
            q[i + 1] = r * (std::f64::consts::TAU * u2).sin();
        }
        i += 2;
    }
    let norm = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    let [w, x, y, z] = [q[0] / norm, q[1] / norm, q[2] / norm, q[3] / norm];
    [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - z * w),
            2.0 * (x * z + y * w),
        ],
        [
            2.0 * (x * y + z * w),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - x * w),
        ],
        [
            2.0 * (x * z - y * w),
            2.0 * (y * z + x * w),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ]
}

fn rotate(r: &Mat3, v: &Vec3) -> Vec3 {
    [
        r[0][0] * v[0] + r[0][1] * v[1] + r[0][2] * v[2],
        r[1][0] * v[0] + r[1][1] * v[1] + r[1][2] * v[2],
        r[2][0] * v[0] + r[2][1] * v[1] + r[2][2] * v[2],
    ]
}

/// Rotation/translation data augmentation.
///
/// Cartesian coordinates get a uniform random proper rotation; periodic
/// systems rotate the lattice rows by the same rotation and keep fractional
/// coordinates untouched (they are rotation-invariant). Non-periodic systems
/// additionally get a translation uniform in [-1, 1] Å per axis; losses
/// zero-center coordinates, so the exact range is immaterial.
pub fn augment<R: Rng + ?Sized>(system: &AtomicSystem, rng: &mut R) -> AtomicSystem {
    let rot = random_rotation(rng);
    let mut out = system.clone();
    for c in out.cart_coords.iter_mut() {
        *c = rotate(&rot, c);
    }
    if system.periodic {
        for row in out.lattice.iter_mut() {
            *row = rotate(&rot, row);
        }
    } else {
        let t: Vec3 = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        for c in out.cart_coords.iter_mut() {
            c[0] += t[0];
            c[1] += t[1];
            c[2] += t[2];
        }
    }
    out
}

/// Subtract the centroid; output mean is (0,0,0) to machine precision.
pub fn zero_center(coords: &[Vec3]) -> Vec<Vec3> {
    let n = coords.len() as f64;
    let mut mean = [0.0; 3];
    for c in coords {
        mean[0] += c[0];
        mean[1] += c[1];
        mean[2] += c[2];
    }
    mean[0] /= n;
    mean[1] /= n;
    mean[2] /= n;
    coords
        .iter()
        .map(|c| [c[0] - mean[0], c[1] - mean[1], c[2] - mean[2]])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_center_single_atom() {
        let out = zero_center(&[[5.0, 5.0, 5.0]]);
        assert_eq!(out, vec![[0.0, 0.0, 0.0]]);
    }

    #[test]
    fn zero_center_already_centered() {
        let coords = vec![[1.0, 0.0, 0.0], [-1.0, 0.0, 0.0]];
        let out = zero_center(&coords);
        for (a, b) in out.iter().zip(&coords) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_center_mean_is_zero() {
        let coords: Vec<[f64; 3]> = (0..7)
            .map(|i| [i as f64 * 0.37, (i * i) as f64 * 0.11, -(i as f64) * 1.3])
            .collect();
        let out = zero_center(&coords);
        for k in 0..3 {
            let m: f64 = out.iter().map(|c| c[k]).sum::<f64>() / out.len() as f64;
            assert!(m.abs() < 1e-12);
        }
    }

    #[test]
    fn rotation_is_proper_orthogonal() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let r = random_rotation(&mut rng);
        // R Rᵀ = I
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12);
            }
        }
        let det = crate::lattice::det3(&r);
        assert!((det - 1.0).abs() < 1e-12);
    }
}
