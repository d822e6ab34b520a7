//! Oracles shared by the integration tests, computed independently of the
//! library.
#![allow(dead_code)]

/// `prod_{m <= M} m^2 / (m^2 + lambda)` and the bracket on the infinite
/// product from `sum_{m > M} 1/m^2 <= 1/M` and `log(1 + x) <= x`.
pub fn product_oracle(lambda: f64, from: usize, factors: usize) -> (f64, f64) {
    let mut p = 1.0;
    for m in from + 1..=from + factors {
        let m2 = (m * m) as f64;
        p *= m2 / (m2 + lambda);
    }
    let tail = 1.0 / (from + factors) as f64;
    (p * (-lambda * tail).exp(), p)
}

/// Survival of quadratic pure birth from state 0: `sum_m c_m e^{-m^2 t}`,
/// with `c_m = prod_{j != m} j^2 / (j^2 - m^2)` from the partial fraction
/// expansion of the Laplace transform `prod m^2 / (m^2 + s)`.
pub fn quadratic_survival(t: f64) -> f64 {
    let mut total = 0.0;
    for m in 1..=12usize {
        let mut c = 1.0;
        let big_j = 4000usize;
        let m2 = (m * m) as f64;
        for j in 1..=big_j {
            if j != m {
                let j2 = (j * j) as f64;
                c *= j2 / (j2 - m2);
            }
        }
        // factors beyond J: exp(m^2 sum 1/j^2 + m^4/2 sum 1/j^4) to high order
        let jf = big_j as f64;
        let s2 = 1.0 / jf - 0.5 / (jf * jf) + 1.0 / (6.0 * jf.powi(3));
        let s4 = 1.0 / (3.0 * jf.powi(3));
        c *= (m2 * s2 + 0.5 * m2 * m2 * s4).exp();
        total += c * (-((m * m) as f64) * t).exp();
    }
    total
}
