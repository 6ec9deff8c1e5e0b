//! Per-route Lagrange multipliers and their decay.

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct LambdaSchedule {
    /// `λ_0 .. λ_{K-1}`, positive and non-decreasing.
    pub lambdas: Vec<f64>,
    /// Decay coefficient, strictly inside `(0, 1)`.
    pub kappa: f64,
}

impl LambdaSchedule {
    pub fn new(lambdas: Vec<f64>, kappa: f64) -> Result<Self> {
        let s = LambdaSchedule { lambdas, kappa };
        s.validate()?;
        Ok(s)
    }

    /// Every route at the same multiplier.
    pub fn uniform(routes: usize, lambda: f64, kappa: f64) -> Result<Self> {
        Self::new(vec![lambda; routes], kappa)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambdas.is_empty() {
            return Err(Error::invalid("lambda schedule is empty"));
        }
        if self.lambdas.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::invalid(format!("lambdas must be positive, got {:?}", self.lambdas)));
        }
        if self.lambdas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::invalid(format!("lambdas must be non-decreasing, got {:?}", self.lambdas)));
        }
        if !(self.kappa > 0.0 && self.kappa < 1.0) {
            return Err(Error::invalid(format!("kappa must lie in (0, 1), got {}", self.kappa)));
        }
        Ok(())
    }

    pub fn routes(&self) -> usize {
        self.lambdas.len()
    }
}

/// Scale `λ_0 ..= λ_k` by `kappa`, leaving the higher routes untouched.
/// `kappa = 1` is accepted and changes nothing.
pub fn decay_lambdas(schedule: &LambdaSchedule, k: usize, kappa: f64) -> Result<LambdaSchedule> {
    if k + 1 >= schedule.routes() {
        return Err(Error::invalid(format!("decay prefix ends at route {k}, must stay below the top route {}", schedule.routes() - 1)));
    }
    if !(kappa > 0.0 && kappa <= 1.0) {
        return Err(Error::invalid(format!("decay factor must lie in (0, 1], got {kappa}")));
    }
    let mut out = schedule.clone();
    for l in &mut out.lambdas[..=k] {
        *l *= kappa;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decays_the_inclusive_prefix() {
        let s = LambdaSchedule::new(vec![1.0, 2.0, 4.0, 8.0], 0.7).unwrap();
        assert_eq!(decay_lambdas(&s, 1, 0.5).unwrap().lambdas, [0.5, 1.0, 4.0, 8.0]);
        assert_eq!(decay_lambdas(&s, 2, 1.0).unwrap(), s);
        assert!(decay_lambdas(&s, 3, 0.5).is_err());
    }

    #[test]
    fn rejects_bad_schedules() {
        assert!(LambdaSchedule::new(vec![2.0, 1.0], 0.5).is_err());
        assert!(LambdaSchedule::new(vec![1.0, 0.0], 0.5).is_err());
        assert!(LambdaSchedule::new(vec![1.0, 2.0], 1.0).is_err());
        assert!(LambdaSchedule::uniform(4, 3.0, 0.7).is_ok());
    }
}
