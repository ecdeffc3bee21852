//! CSV rendering shared by the command-line tool.

use crate::simulator::TrialReport;
use crate::solver::RdcPoint;

pub const RDC_HEADER: &str =
    "lambda_d,lambda_g,rate_bits_per_symbol,distortion,cost,iterations,converged";
pub const SIM_HEADER: &str =
    "rate,m,trials,eta,emp_distortion,stderr_d,emp_cost,stderr_c,seed";

/// `x` rounded to 12 significant digits, printed in the shortest form that
/// parses back to the rounded value.
pub fn sig12(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let rounded: f64 = format!("{x:.11e}").parse().expect("valid float text");
    // Avoid "-0".
    if rounded == 0.0 {
        return "0".to_string();
    }
    rounded.to_string()
}

pub fn rdc_row(p: &RdcPoint) -> String {
    format!(
        "{},{},{},{},{},{},{}",
        sig12(p.lambda_d),
        sig12(p.lambda_g),
        sig12(p.rate),
        sig12(p.distortion),
        sig12(p.cost),
        p.iterations,
        p.converged
    )
}

pub fn rdc_csv<'a>(points: impl IntoIterator<Item = &'a RdcPoint>) -> String {
    let mut out = String::from(RDC_HEADER);
    out.push('\n');
    for p in points {
        out.push_str(&rdc_row(p));
        out.push('\n');
    }
    out
}

pub fn sim_csv(r: &TrialReport) -> String {
    format!(
        "{SIM_HEADER}\n{},{},{},{},{},{},{},{},{}\n",
        sig12(r.rate),
        r.m,
        r.trials,
        sig12(r.eta),
        sig12(r.empirical_distortion),
        sig12(r.stderr_d),
        sig12(r.empirical_cost),
        sig12(r.stderr_c),
        r.seed
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn twelve_digits() {
        assert_eq!(sig12(0.1), "0.1");
        assert_eq!(sig12(1.0 / 3.0), "0.333333333333");
        assert_eq!(sig12(123456789.0123456), "123456789.012");
        assert_eq!(sig12(-0.0), "0");
        assert_eq!(sig12(2.0), "2");
    }

    proptest! {
        #[test]
        fn roundtrip_is_stable(x in -1e12f64..1e12) {
            let once: f64 = sig12(x).parse().unwrap();
            prop_assert_eq!(sig12(once), sig12(x));
            prop_assert!((once - x).abs() <= 1e-11 * x.abs().max(1e-300));
        }
    }
}
