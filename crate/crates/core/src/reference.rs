//! Built-in reference cells.

use crate::error::{Error, Result};
use crate::lattice::{Environment, Lattice, Topology};

/// Conductance of the strong phase in [`checkerboard4`].
pub const STRONG: f64 = 100.0;

/// Two-phase 4×4 periodic cell with conductances 1 and 100.
///
/// Every edge leaving `x` (in either direction) has conductance 100 when
/// `(x_1 + x_2) mod 4 ∈ {1, 2}` and 1 otherwise: diagonal stripes of width
/// two. For `ξ = e_1`, `ξ·A_hom ξ = 10601/404 ≈ 26.2401`.
pub fn checkerboard4() -> Environment {
    let lat = Lattice::torus(vec![4, 4]).expect("valid extents");
    Environment::from_fn(lat, (1.0, STRONG), |x, _| {
        if matches!((x[0] + x[1]).rem_euclid(4), 1 | 2) {
            STRONG
        } else {
            1.0
        }
    })
    .expect("valid cell")
}

/// Exact `e_1·A_hom e_1` of [`checkerboard4`].
pub const CHECKERBOARD4_AHOM: f64 = 10601.0 / 404.0;

/// Looks up a built-in cell by name (`checkerboard4`).
pub fn builtin(name: &str) -> Result<Environment> {
    match name {
        "checkerboard4" => Ok(checkerboard4()),
        other => Err(Error::InvalidEnvironment(format!(
            "unknown built-in environment `{other}`"
        ))),
    }
}

/// Periodic extension of a torus cell restricted to `lattice`, centred
/// coordinates matching. Inflow edges of a box come from the extension too.
pub fn restrict_periodic(cell: &Environment, lattice: Lattice) -> Result<Environment> {
    let cl = cell.lattice();
    if cl.topology() != Topology::Torus {
        return Err(Error::InvalidEnvironment(
            "periodic extension needs a torus cell".into(),
        ));
    }
    if cl.dim() != lattice.dim() {
        return Err(Error::GeometryMismatch(format!(
            "cell of dimension {} restricted to a lattice of dimension {}",
            cl.dim(),
            lattice.dim()
        )));
    }
    Environment::from_fn(lattice, cell.bounds(), |x, i| {
        let s = cl.site_at(x).expect("torus coordinates wrap");
        cell.forward_conductance(s, i)
    })
}
