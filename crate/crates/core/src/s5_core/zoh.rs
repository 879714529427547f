//! Zero-order-hold discretization of a diagonal continuous-time system.

use num_complex::Complex64;

/// Below this `|lambda * delta|` the input gain is replaced by its limit `delta`.
pub const ZOH_GUARD: f64 = 1e-8;
/// Below this `|z|` the derivative of the input gain uses its Taylor series.
const SERIES_RADIUS: f64 = 1e-2;

/// `exp(z) - 1` without cancellation for small `|z|`.
fn expm1(z: Complex64) -> Complex64 {
    let half = (z.im / 2.0).sin();
    // cos y - 1 = -2 sin^2(y/2)
    Complex64::new(
        z.re.exp_m1() * z.im.cos() - 2.0 * half * half,
        z.re.exp() * z.im.sin(),
    )
}

/// `(exp(lambda delta), (exp(lambda delta) - 1) / lambda)`.
pub fn zoh_coefficients(lambda: Complex64, delta: f64) -> (Complex64, Complex64) {
    let z = lambda * delta;
    let lb = z.exp();
    if z.norm() < ZOH_GUARD {
        (lb, Complex64::new(delta, 0.0))
    } else {
        (lb, expm1(z) / lambda)
    }
}

/// `d/dz [(e^z - 1) / z]`.
fn phi1_prime(z: Complex64) -> Complex64 {
    if z.norm() < SERIES_RADIUS {
        // sum_k k z^(k-1) / (k+1)!
        let c = [
            1.0 / 2.0,
            1.0 / 3.0,
            1.0 / 8.0,
            1.0 / 30.0,
            1.0 / 144.0,
            1.0 / 840.0,
        ];
        let mut acc = Complex64::new(0.0, 0.0);
        for &ck in c.iter().rev() {
            acc = acc * z + ck;
        }
        acc
    } else {
        let e = z.exp();
        (z * e - e + 1.0) / (z * z)
    }
}

/// Partial derivatives of the ZOH coefficients.
#[derive(Debug, Clone, Copy)]
pub struct ZohJacobian {
    pub dlb_dlambda: Complex64,
    pub dlb_ddelta: Complex64,
    pub dkappa_dlambda: Complex64,
    pub dkappa_ddelta: Complex64,
}

pub fn zoh_jacobian(lambda: Complex64, delta: f64) -> ZohJacobian {
    let z = lambda * delta;
    let lb = z.exp();
    ZohJacobian {
        dlb_dlambda: lb * delta,
        dlb_ddelta: lb * lambda,
        dkappa_dlambda: phi1_prime(z) * (delta * delta),
        dkappa_ddelta: lb,
    }
}

/// Discretizes per state: `lambda_bar = exp(lambda delta)`, `B_bar = kappa B~`.
///
/// `b_tilde` is `[Q x P]` row-major.
pub fn zoh_discretize(
    lambda: &[Complex64],
    b_tilde: &[Complex64],
    delta: &[f64],
) -> (Vec<Complex64>, Vec<Complex64>) {
    let q = lambda.len();
    assert_eq!(delta.len(), q);
    assert_eq!(b_tilde.len() % q, 0);
    let p = b_tilde.len() / q;
    let mut lb = Vec::with_capacity(q);
    let mut bb = Vec::with_capacity(q * p);
    for i in 0..q {
        let (l, kappa) = zoh_coefficients(lambda[i], delta[i]);
        lb.push(l);
        let row = &b_tilde[i * p..(i + 1) * p];
        if kappa.im == 0.0 {
            bb.extend(row.iter().map(|b| b * kappa.re));
        } else {
            bb.extend(row.iter().map(|b| b * kappa));
        }
    }
    (lb, bb)
}
