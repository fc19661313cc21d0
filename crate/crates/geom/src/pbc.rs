use crate::lattice::row_mat_mul;
use crate::{Mat3, Vec3};

/// Minimum-image distance between two sites given in fractional coordinates,
/// searched over the 3x3x3 shell of periodic images around the wrapped
/// separation. Adequate for Niggli-reduced (and generally well-conditioned)
/// cells.
pub fn min_image_distance(lattice: &Mat3, frac_a: &Vec3, frac_b: &Vec3) -> f64 {
    let mut delta = [0.0; 3];
    for k in 0..3 {
        let d = frac_a[k] - frac_b[k];
        delta[k] = d - d.floor();
    }
    let mut best = f64::INFINITY;
    for n0 in -1..=1 {
        for n1 in -1..=1 {
            for n2 in -1..=1 {
                let shifted = [
                    delta[0] + n0 as f64,
                    delta[1] + n1 as f64,
                    delta[2] + n2 as f64,
                ];
                let cart = row_mat_mul(&shifted, lattice);
                let d2 = cart[0] * cart[0] + cart[1] * cart[1] + cart[2] * cart[2];
                if d2 < best {
                    best = d2;
                }
            }
        }
    }
    best.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn near_boundary_sites_are_close() {
        let lat = [[10.0, 0.0, 0.0], [0.0, 10.0, 0.0], [0.0, 0.0, 10.0]];
        let d = min_image_distance(&lat, &[0.99, 0.0, 0.0], &[0.01, 0.0, 0.0]);
        assert!((d - 0.2).abs() < 1e-12, "got {d}");
    }

    #[test]
    fn same_site_distance_zero() {
        let lat = [[3.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 5.0]];
        let d = min_image_distance(&lat, &[0.25, 0.5, 0.75], &[0.25, 0.5, 0.75]);
        assert_eq!(d, 0.0);
    }
}
