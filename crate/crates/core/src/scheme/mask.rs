//! Filters and the associated normalized lattice masks.

use crate::error::{Error, Result};
use crate::lattice::{Lattice, LatticeField};

/// Averaging profile on `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Filter {
    /// `χ(t) ∝ (1 - t²)^p`, a filter of order `p`.
    Polynomial(u32),
    /// `χ(t) ∝ exp(-1/(1 - t²))`, smooth with all derivatives vanishing at ±1.
    SmoothBump,
}

impl Default for Filter {
    fn default() -> Self {
        Filter::SmoothBump
    }
}

impl Filter {
    /// Unnormalized profile; zero outside `(-1, 1)`.
    pub fn profile(&self, t: f64) -> f64 {
        let s = 1.0 - t * t;
        if s <= 0.0 {
            return 0.0;
        }
        match *self {
            Filter::Polynomial(p) => s.powi(p as i32),
            Filter::SmoothBump => (-1.0 / s).exp(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Filter::Polynomial(p) => format!("poly{p}"),
            Filter::SmoothBump => "smooth-bump".to_string(),
        }
    }
}

impl std::fmt::Display for Filter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.name())
    }
}

impl std::str::FromStr for Filter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if s == "smooth-bump" || s == "bump" || s == "smooth" {
            return Ok(Filter::SmoothBump);
        }
        let order = s
            .strip_prefix("poly:")
            .or_else(|| s.strip_prefix("poly"))
            .and_then(|p| p.parse::<u32>().ok());
        match order {
            Some(p) => Ok(Filter::Polynomial(p)),
            None => Err(Error::InvalidParameter(format!(
                "unknown filter `{s}` (expected smooth-bump or poly<p>)"
            ))),
        }
    }
}

/// `χ_L(x) ∝ ∏_i χ(x_i / L)` on the lattice points strictly inside
/// `(-L, L)^d`, normalized so that the lattice sum is 1.
pub fn build_mask(filter: Filter, half_width: f64, lattice: &Lattice) -> Result<LatticeField> {
    if !(half_width > 0.0 && half_width.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "mask half-width L must be positive, got {half_width}"
        )));
    }
    // Largest integer coordinate strictly inside (-L, L).
    let reach = (half_width.ceil() as i64) - 1;
    for i in 0..lattice.dim() {
        let lo = -lattice.offset(i);
        let hi = lattice.extents()[i] as i64 - 1 - lattice.offset(i);
        if -reach < lo || reach > hi {
            return Err(Error::InvalidParameter(format!(
                "mask cube (-{half_width}, {half_width}) does not fit axis {i} of extent {}",
                lattice.extents()[i]
            )));
        }
    }
    let mut field = LatticeField::from_fn(lattice, |x| {
        x.iter()
            .map(|&xi| filter.profile(xi as f64 / half_width))
            .product()
    });
    let total = field.sum();
    if !(total > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "mask {filter} with L = {half_width} has empty support"
        )));
    }
    field.values_mut().iter_mut().for_each(|m| *m /= total);
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Topology;

    #[test]
    fn polynomial_zero_is_uniform() {
        let lat = Lattice::cube_box(21, 2).unwrap();
        let m = build_mask(Filter::Polynomial(0), 4.5, &lat).unwrap();
        // points with |x_i| ≤ 4: 9 per axis
        let expected = 1.0 / 81.0;
        for (s, v) in m.values().iter().enumerate() {
            let inside = lat.coords(s).iter().all(|x| x.abs() <= 4);
            if inside {
                assert!((v - expected).abs() < 1e-17);
            } else {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn mask_sums_to_one() {
        let lat = Lattice::torus(vec![40, 40]).unwrap();
        for filter in [Filter::SmoothBump, Filter::Polynomial(0), Filter::Polynomial(3)] {
            for l in [3.0, 7.5, 20.0] {
                let m = build_mask(filter, l, &lat).unwrap();
                assert!((m.sum() - 1.0).abs() <= 1e-15);
                assert!(m.values().iter().all(|v| *v >= 0.0));
            }
        }
    }

    #[test]
    fn smooth_bump_is_reflection_symmetric() {
        let lat = Lattice::cube_box(25, 2).unwrap();
        let m = build_mask(Filter::SmoothBump, 10.0, &lat).unwrap();
        for s in 0..lat.num_sites() {
            let x = lat.coords(s);
            for axis in 0..2 {
                let mut y = x.clone();
                y[axis] = -y[axis];
                let t = lat.site_at(&y).unwrap();
                assert_eq!(m.values()[s].to_bits(), m.values()[t].to_bits());
            }
        }
    }

    #[test]
    fn oversized_or_empty_masks_are_rejected() {
        let lat = Lattice::cube_box(9, 2).unwrap();
        assert!(build_mask(Filter::SmoothBump, 6.0, &lat).is_err());
        assert!(build_mask(Filter::SmoothBump, 5.0, &lat).is_ok());
        assert!(build_mask(Filter::SmoothBump, 0.0, &lat).is_err());
        let torus = Lattice::new(vec![8], Topology::Torus).unwrap();
        assert!(build_mask(Filter::Polynomial(1), 4.0, &torus).is_ok());
        assert!(build_mask(Filter::Polynomial(1), 4.5, &torus).is_err());
    }

    #[test]
    fn parses_filter_names() {
        assert_eq!("smooth-bump".parse::<Filter>().unwrap(), Filter::SmoothBump);
        assert_eq!("poly3".parse::<Filter>().unwrap(), Filter::Polynomial(3));
        assert_eq!("poly:0".parse::<Filter>().unwrap(), Filter::Polynomial(0));
        assert!("gauss".parse::<Filter>().is_err());
    }
}
