use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Constants of the deviation bounds.
///
/// `C3`, `C4`, `c` and `C5` follow from `eta`. The remaining constants have
/// no closed form and are carried only when supplied.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub eta: f64,
    #[serde(default = "default_k")]
    pub k: f64,
    /// Universal constant of the maximal inequality.
    #[serde(default = "default_universal")]
    pub c_universal: f64,
    #[serde(default)]
    pub c1_maximal: Option<f64>,
    #[serde(default)]
    pub c0_maximal: Option<f64>,
    /// Overrides the derived entropy constant.
    #[serde(default)]
    pub c5: Option<f64>,
    /// Bound on the normalized likelihood-ratio supremum.
    #[serde(default)]
    pub c0_lil: Option<f64>,
    #[serde(default)]
    pub c1_tail: Option<f64>,
    #[serde(default)]
    pub c1_prime_tail: Option<f64>,
    #[serde(default)]
    pub c2_tail: Option<f64>,
    #[serde(default)]
    pub c6: Option<f64>,
}

fn default_k() -> f64 {
    2.0
}

fn default_universal() -> f64 {
    100.0
}

impl BoundParams {
    pub fn new(eta: f64) -> Result<Self> {
        let p = BoundParams {
            eta,
            k: default_k(),
            c_universal: default_universal(),
            c1_maximal: None,
            c0_maximal: None,
            c5: None,
            c0_lil: None,
            c1_tail: None,
            c1_prime_tail: None,
            c2_tail: None,
            c6: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidParameter(format!("eta = {} must lie in (0, 1)", self.eta)));
        }
        let positive = [
            Some(self.k),
            Some(self.c_universal),
            self.c1_maximal,
            self.c0_maximal,
            self.c5,
            self.c0_lil,
            self.c1_tail,
            self.c1_prime_tail,
            self.c2_tail,
            self.c6,
        ];
        if positive.iter().flatten().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidParameter("bound constants must be positive and finite".into()));
        }
        Ok(())
    }

    /// `4 (1 + eta) / (1 - eta)`: `H_{2n} <= C3 H_n` on the typical event.
    pub fn c3(&self) -> f64 {
        4.0 * (1.0 + self.eta) / (1.0 - self.eta)
    }

    /// `1 / (1 - eta)`: comparison constant between `H_n / (n - r)` and `H`.
    pub fn c4(&self) -> f64 {
        1.0 / (1.0 - self.eta)
    }

    /// `sqrt(8 C3 / C4)`, the admissible range constant for `delta`.
    pub fn c_entropy(&self) -> f64 {
        (8.0 * self.c3() / self.c4()).sqrt()
    }

    /// `(8 sqrt(C4) + c) sqrt(2 pi e)` unless overridden.
    pub fn c5(&self) -> f64 {
        self.c5.unwrap_or_else(|| {
            (8.0 * self.c4().sqrt() + self.c_entropy()) * (2.0 * std::f64::consts::PI * std::f64::consts::E).sqrt()
        })
    }

    /// `1 / (8 C3)` unless overridden.
    pub fn c1(&self) -> f64 {
        self.c1_maximal.unwrap_or_else(|| 1.0 / (8.0 * self.c3()))
    }

    /// `C sqrt(c1 + 1)` unless overridden; the smallest value with `c0^2 >= C^2 (c1 + 1)`.
    pub fn c0(&self) -> f64 {
        self.c0_maximal.unwrap_or_else(|| self.c_universal * (self.c1() + 1.0).sqrt())
    }
}
