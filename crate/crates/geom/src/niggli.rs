use crate::lattice::det3;
use crate::{GeomError, Mat3, Vec3};

const MAX_ITERATIONS: usize = 100;
/// Relative tolerance for the stabilized comparisons, scaled by the mean
/// squared lattice length of the current basis.
const RELATIVE_EPS: f64 = 1e-5;

fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn sub_scaled(a: &Vec3, s: f64, b: &Vec3) -> Vec3 {
    [a[0] - s * b[0], a[1] - s * b[1], a[2] - s * b[2]]
}

fn scaled(s: f64, a: &Vec3) -> Vec3 {
    [s * a[0], s * a[1], s * a[2]]
}

/// Characteristic of the current basis: (A, B, C, xi, eta, zeta) where
/// A = r1·r1 etc. and xi = 2 r2·r3, eta = 2 r1·r3, zeta = 2 r1·r2.
fn metric(rows: &Mat3) -> (f64, f64, f64, f64, f64, f64) {
    let a = dot(&rows[0], &rows[0]);
    let b = dot(&rows[1], &rows[1]);
    let c = dot(&rows[2], &rows[2]);
    let xi = 2.0 * dot(&rows[1], &rows[2]);
    let eta = 2.0 * dot(&rows[0], &rows[2]);
    let zeta = 2.0 * dot(&rows[0], &rows[1]);
    (a, b, c, xi, eta, zeta)
}

fn eps_sign(v: f64, eps: f64) -> i32 {
    if v > eps {
        1
    } else if v < -eps {
        -1
    } else {
        0
    }
}

/// Niggli-reduced cell of `lattice` via the Krivy–Gruber iteration with
/// epsilon-stabilized comparisons. Every step applies a unimodular (det +1)
/// integer combination of the basis rows, so the output spans the same
/// lattice and preserves handedness. Idempotent within the tolerance.
pub fn niggli_reduce(lattice: &Mat3) -> Result<Mat3, GeomError> {
    let det = det3(lattice);
    if det.abs() <= crate::DET_EPS {
        return Err(GeomError::SingularLattice { det });
    }
    let mut rows = *lattice;

    for _ in 0..MAX_ITERATIONS {
        let (a, b, c, xi, eta, _zeta) = metric(&rows);
        let eps = RELATIVE_EPS * (a + b + c) / 3.0;
        let eq = |x: f64, y: f64| (x - y).abs() <= eps;

        // Step 1: order |r1| <= |r2| (ties broken on |xi| vs |eta|).
        if a > b + eps || (eq(a, b) && xi.abs() > eta.abs() + eps) {
            rows = [scaled(-1.0, &rows[1]), scaled(-1.0, &rows[0]), scaled(-1.0, &rows[2])];
        }
        // Step 2: order |r2| <= |r3|; restart so step 1 sees the new pair.
        let (_, b, c, _, eta, zeta) = metric(&rows);
        if b > c + eps || (eq(b, c) && eta.abs() > zeta.abs() + eps) {
            rows = [scaled(-1.0, &rows[0]), scaled(-1.0, &rows[2]), scaled(-1.0, &rows[1])];
            continue;
        }

        // Steps 3/4: normalize the signs of (xi, eta, zeta) to all-positive
        // (when their sign product is positive) or all-non-positive.
        let (_, _, _, xi, eta, zeta) = metric(&rows);
        let l = eps_sign(xi, eps);
        let m = eps_sign(eta, eps);
        let n = eps_sign(zeta, eps);
        let (i, j, k) = if l * m * n == 1 {
            (
                if l == -1 { -1.0 } else { 1.0 },
                if m == -1 { -1.0 } else { 1.0 },
                if n == -1 { -1.0 } else { 1.0 },
            )
        } else {
            let mut i = if l == 1 { -1.0 } else { 1.0 };
            let mut j = if m == 1 { -1.0 } else { 1.0 };
            let mut k = if n == 1 { -1.0 } else { 1.0 };
            if i * j * k < 0.0 {
                // A zero-sign slot always exists here; flip it to keep det +1.
                if l == 0 {
                    i = -i;
                } else if m == 0 {
                    j = -j;
                } else {
                    k = -k;
                }
            }
            (i, j, k)
        };
        if i < 0.0 || j < 0.0 || k < 0.0 {
            rows = [scaled(i, &rows[0]), scaled(j, &rows[1]), scaled(k, &rows[2])];
        }

        let (a, b, _c, xi, eta, zeta) = metric(&rows);

        // Step 5: reduce xi against B.
        if xi.abs() > b + eps
            || (eq(xi, b) && 2.0 * eta < zeta - eps)
            || (eq(xi, -b) && zeta < -eps)
        {
            let s = if xi > 0.0 { 1.0 } else { -1.0 };
            rows[2] = sub_scaled(&rows[2], s, &rows[1]);
            continue;
        }
        // Step 6: reduce eta against A.
        if eta.abs() > a + eps
            || (eq(eta, a) && 2.0 * xi < zeta - eps)
            || (eq(eta, -a) && zeta < -eps)
        {
            let s = if eta > 0.0 { 1.0 } else { -1.0 };
            rows[2] = sub_scaled(&rows[2], s, &rows[0]);
            continue;
        }
        // Step 7: reduce zeta against A.
        if zeta.abs() > a + eps
            || (eq(zeta, a) && 2.0 * xi < eta - eps)
            || (eq(zeta, -a) && eta < -eps)
        {
            let s = if zeta > 0.0 { 1.0 } else { -1.0 };
            rows[1] = sub_scaled(&rows[1], s, &rows[0]);
            continue;
        }
        // Step 8: final body-diagonal condition.
        let total = xi + eta + zeta + a + b;
        if total < -eps || (eq(total, 0.0) && 2.0 * (a + eta) + zeta > eps) {
            rows[2] = [
                rows[2][0] + rows[0][0] + rows[1][0],
                rows[2][1] + rows[0][1] + rows[1][1],
                rows[2][2] + rows[0][2] + rows[1][2],
            ];
            continue;
        }

        return Ok(rows);
    }

    Err(GeomError::NiggliNonConvergence {
        iterations: MAX_ITERATIONS,
    })
}
