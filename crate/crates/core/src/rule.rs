//! Scaling rules such as `250*R^-1.5`, `L^-2` or `R/3`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// `coefficient · var^exponent`, with `var` a single-letter size variable.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleRule {
    pub coefficient: f64,
    pub var: char,
    pub exponent: f64,
}

impl ScaleRule {
    pub fn new(coefficient: f64, var: char, exponent: f64) -> Self {
        ScaleRule {
            coefficient,
            var,
            exponent,
        }
    }

    /// Constant rule.
    pub fn constant(c: f64) -> Self {
        ScaleRule::new(c, 'R', 0.0)
    }

    pub fn eval(&self, size: f64) -> f64 {
        if self.exponent == 0.0 {
            self.coefficient
        } else {
            self.coefficient * size.powf(self.exponent)
        }
    }
}

impl fmt::Display for ScaleRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exponent == 0.0 {
            write!(f, "{}", self.coefficient)
        } else {
            write!(f, "{}*{}^{}", self.coefficient, self.var, self.exponent)
        }
    }
}

fn number(s: &str, whole: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::InvalidParameter(format!("malformed scale rule `{whole}`")))
}

impl FromStr for ScaleRule {
    type Err = Error;

    /// Accepts `c`, `V`, `c*V`, `V/c`, `c*V/c'`, each optionally with `^e`
    /// on the variable.
    fn from_str(s: &str) -> Result<Self> {
        let whole = s;
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if s.is_empty() {
            return Err(Error::InvalidParameter("empty scale rule".into()));
        }
        let (head, divisor) = match s.split_once('/') {
            Some((h, d)) => (h.to_string(), number(d, whole)?),
            None => (s.clone(), 1.0),
        };
        if divisor == 0.0 {
            return Err(Error::InvalidParameter(format!("division by zero in `{whole}`")));
        }
        let (coef, term) = match head.split_once('*') {
            Some((c, t)) => (number(c, whole)?, t.to_string()),
            None if head.starts_with(|c: char| c.is_ascii_alphabetic()) => (1.0, head),
            None => return Ok(ScaleRule::constant(number(&head, whole)? / divisor)),
        };
        let mut chars = term.chars();
        let var = chars
            .next()
            .filter(|c| c.is_ascii_alphabetic())
            .ok_or_else(|| Error::InvalidParameter(format!("malformed scale rule `{whole}`")))?;
        let rest: String = chars.collect();
        let exponent = if rest.is_empty() {
            1.0
        } else {
            match rest.strip_prefix('^') {
                Some(e) => number(e.trim_start_matches('(').trim_end_matches(')'), whole)?,
                None => {
                    return Err(Error::InvalidParameter(format!(
                        "malformed scale rule `{whole}`"
                    )))
                }
            }
        };
        Ok(ScaleRule::new(coef / divisor, var, exponent))
    }
}
