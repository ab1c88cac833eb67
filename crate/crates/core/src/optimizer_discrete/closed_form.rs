use crate::error::{Error, Result};

fn check_binary(p1: f64, p0: f64) -> Result<()> {
    if !(p1 >= 0.0 && p0 >= 0.0 && (p1 + p0 - 1.0).abs() <= 1e-12) {
        return Err(Error::InvalidInput(format!(
            "binary probabilities must be nonnegative and sum to 1, got {p1} + {p0}"
        )));
    }
    Ok(())
}

/// Closed-form optimum for a binary bet paying `+gain` on a win and
/// `-loss` on a loss, unit weights, no riskless asset.
///
/// Returns `p1/loss - p0/gain` when it lies in `[0, 1)` and keeps the
/// losing factor `1 - D loss` at or above `b`; otherwise `0`.
pub fn closed_form_binary(p1: f64, p0: f64, gain: f64, loss: f64, b: f64) -> Result<f64> {
    check_binary(p1, p0)?;
    if !(gain > 0.0 && loss > 0.0) {
        return Err(Error::InvalidInput("payoffs must be positive".to_string()));
    }
    let d = p1 / loss - p0 / gain;
    let losing_factor = 1.0 - p1 + (loss / gain) * p0;
    if (0.0..1.0).contains(&d) && losing_factor >= b {
        Ok(d)
    } else {
        Ok(0.0)
    }
}

/// Closed-form optimum for a binary bet returning `+gamma` or `-gamma` per
/// unit next to a riskless asset, so the effective returns are
/// `gamma - (1 + rho)` and `-gamma - (1 + rho)`.
///
/// The stationary point is accepted only inside the no-ruin bound and
/// when it beats investing nothing by more than `1e-12`.
pub fn closed_form_binary_riskless(p1: f64, p0: f64, gamma: f64, rho: f64, b: f64) -> Result<f64> {
    check_binary(p1, p0)?;
    let base = 1.0 + rho;
    if !(gamma > 0.0) {
        return Err(Error::InvalidInput("gamma must be positive".to_string()));
    }
    if (gamma - base).abs() <= 1e-12 * base {
        return Err(Error::InvalidInput(format!(
            "gamma = 1 + rho = {base} makes the closed form singular"
        )));
    }
    if !(b > 0.0 && b <= base) {
        return Err(Error::InvalidInput(format!("b must lie in (0, {base}]")));
    }
    let d0 = base * (gamma * (p1 - p0) - base) / (gamma * gamma - base * base);
    let cap = ((base - b) / (gamma + base)).min(1.0);
    if !(d0 >= 0.0 && d0 <= cap) {
        return Ok(0.0);
    }
    let growth =
        |d: f64| p1 * (base + d * (gamma - base)).ln() + p0 * (base - d * (gamma + base)).ln();
    if growth(d0) - growth(0.0) > 1e-12 {
        Ok(d0)
    } else {
        Ok(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_fair_game() {
        assert_eq!(closed_form_binary(0.5, 0.5, 1.0, 1.0, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn even_money_edge() {
        let d = closed_form_binary(0.6, 0.4, 1.0, 1.0, 0.5).unwrap();
        assert!((d - 0.2).abs() < 1e-15);
    }

    #[test]
    fn asymmetric_payoffs() {
        let d = closed_form_binary(0.75, 0.25, 2.0, 1.0, 0.2).unwrap();
        assert!((d - 0.625).abs() < 1e-15);
        // The losing factor 1 - 0.625 = 0.375 falls short of b = 0.4.
        assert_eq!(closed_form_binary(0.75, 0.25, 2.0, 1.0, 0.4).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_guard_on_threshold() {
        // 2 p0 = 0.6 < b: the loss would breach the threshold.
        assert_eq!(closed_form_binary(0.7, 0.3, 1.0, 1.0, 0.65).unwrap(), 0.0);
        assert!(closed_form_binary(0.7, 0.3, 1.0, 1.0, 0.6).unwrap() > 0.0);
    }

    #[test]
    fn riskless_explicit_root() {
        let d = closed_form_binary_riskless(0.8, 0.2, 2.0, 0.0, 0.1).unwrap();
        assert!((d - 1.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn riskless_negative_root_rejected() {
        assert_eq!(
            closed_form_binary_riskless(0.5, 0.5, 2.0, 0.0, 0.1).unwrap(),
            0.0
        );
    }

    #[test]
    fn riskless_small_gamma_keeps_everything_riskless() {
        for &(p1, gamma, rho) in &[(0.9, 0.5, 0.0), (0.99, 1.0, 0.05), (0.6, 0.2, 0.1)] {
            let d = closed_form_binary_riskless(p1, 1.0 - p1, gamma, rho, 0.05).unwrap();
            assert_eq!(d, 0.0);
        }
    }

    #[test]
    fn riskless_singular_case_errors() {
        assert!(closed_form_binary_riskless(0.6, 0.4, 1.05, 0.05, 0.5).is_err());
    }
}
