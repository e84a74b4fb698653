use crate::error::{invalid, Result};
use crate::kinetics::{rate_m1, rate_m1_prime, rate_m1_second, ModelParams};

/// Terms `[q1, q2, q3]` of the expansion of `q` in powers of `1/V`.
pub fn v_terms(s: f64, p: &ModelParams) -> [f64; 3] {
    let m1 = rate_m1(s, p.k);
    let d1 = rate_m1_prime(s, p.k);
    let d2 = rate_m1_second(s, p.k);
    let (v, l, kappa) = (p.v, p.l, p.kappa);
    let a = 2.0 * kappa - 1.0;
    let q1 = m1 / v;
    let q2 = m1 / (v * v) * (-a * m1 + d1 / l);
    let q3 = m1 / (v * v * v)
        * ((4.0 - 9.0 * kappa) * d1 * m1 / l
            + (2.0 * a * a - 1.0) * m1 * m1
            + (d2 * m1 + d1 * d1) / (l * l));
    [q1, q2, q3]
}

/// Partial sum `q1 + ... + q_order` of the large-`V` expansion.
pub fn expansion_q_v(s: f64, p: &ModelParams, order: usize) -> Result<f64> {
    if !(1..=3).contains(&order) {
        return Err(invalid(
            "order",
            format!("V expansion supports orders 1..=3, got {order}"),
        ));
    }
    Ok(v_terms(s, p)[..order].iter().sum())
}

/// Terms `[q1, q2]` of the expansion of `q` in powers of `1/sqrt(kappa)`.
pub fn kappa_terms(s: f64, p: &ModelParams) -> [f64; 2] {
    let m1 = rate_m1(s, p.k);
    let d1 = rate_m1_prime(s, p.k);
    let q1 = (m1 / (2.0 * p.v)).sqrt() / p.kappa.sqrt();
    let q2 = (d1 / (16.0 * p.l * p.v) - 0.25) / p.kappa;
    [q1, q2]
}

/// Partial sum `q1 + ... + q_order` of the large-`kappa` expansion.
pub fn expansion_q_kappa(s: f64, p: &ModelParams, order: usize) -> Result<f64> {
    if !(1..=2).contains(&order) {
        return Err(invalid(
            "order",
            format!("kappa expansion supports orders 1..=2, got {order}"),
        ));
    }
    if p.kappa <= 0.0 {
        return Err(invalid("kappa", "kappa expansion needs kappa > 0"));
    }
    Ok(kappa_terms(s, p)[..order].iter().sum())
}
