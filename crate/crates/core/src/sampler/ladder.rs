use crate::error::{EplError, Result};

/// Chain temperatures; the first is always 1 (the posterior chain).
#[derive(Clone, Debug, PartialEq)]
pub struct TemperatureLadder {
    temps: Vec<f64>,
}

impl TemperatureLadder {
    pub fn new(temps: Vec<f64>) -> Result<Self> {
        if temps.is_empty() {
            return Err(EplError::config("temperature ladder needs at least one chain"));
        }
        if temps[0] != 1.0 {
            return Err(EplError::config(format!(
                "first temperature must be exactly 1, got {}",
                temps[0]
            )));
        }
        for w in temps.windows(2) {
            if !(w[1].is_finite() && w[1] >= w[0]) {
                return Err(EplError::config(format!(
                    "temperatures must be finite and nondecreasing, got {} after {}",
                    w[1], w[0]
                )));
            }
        }
        Ok(TemperatureLadder { temps })
    }

    /// `T_c = r^(c−1)` for `c = 1..=chains`.
    pub fn geometric(chains: usize, ratio: f64) -> Result<Self> {
        if chains == 0 {
            return Err(EplError::config("number of chains must be at least 1"));
        }
        if !(ratio.is_finite() && ratio > 1.0) {
            return Err(EplError::config(format!(
                "temperature ratio must exceed 1, got {ratio}"
            )));
        }
        let temps = (0..chains).map(|c| ratio.powi(c as i32)).collect();
        TemperatureLadder::new(temps)
    }

    pub fn single() -> Self {
        TemperatureLadder { temps: vec![1.0] }
    }

    pub fn temps(&self) -> &[f64] {
        &self.temps
    }

    pub fn len(&self) -> usize {
        self.temps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_examples() {
        assert_eq!(TemperatureLadder::geometric(1, 3.0).unwrap().temps(), &[1.0]);
        assert_eq!(
            TemperatureLadder::geometric(4, 2.0).unwrap().temps(),
            &[1.0, 2.0, 4.0, 8.0]
        );
        let t = TemperatureLadder::geometric(5, 1.5).unwrap();
        for (a, b) in t.temps().iter().zip([1.0, 1.5, 2.25, 3.375, 5.0625]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_ladders() {
        assert!(TemperatureLadder::geometric(0, 2.0).is_err());
        assert!(TemperatureLadder::geometric(3, 1.0).is_err());
        assert!(TemperatureLadder::geometric(3, f64::NAN).is_err());
        assert!(TemperatureLadder::new(vec![]).is_err());
        assert!(TemperatureLadder::new(vec![1.5, 2.0]).is_err());
        assert!(TemperatureLadder::new(vec![1.0, 3.0, 2.0]).is_err());
        assert!(TemperatureLadder::new(vec![1.0, 1.0, 2.0]).is_ok());
    }
}
