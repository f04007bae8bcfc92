//! Lattice geometry, conductance environments and the discrete calculus.
//!
//! Sites are stored row-major with the last coordinate fastest. Site index
//! `j_i ∈ 0..N_i` corresponds to the centred coordinate `x_i = j_i - ⌊N_i/2⌋`,
//! so a box of side `2R̃+1` covers `{-R̃,…,R̃}^d` and masks are centred at the
//! origin for both topologies.
//!
//! Conductances are stored per site for the forward edges `(x, x+e_i)`. On a
//! torus the backward edge of a site on the lower face wraps around. On a box
//! the field vanishes outside, but the edges connecting the box to the outside
//! still carry conductances: forward edges leaving the upper faces are part of
//! the per-site layout, and the edges `(x-e_i, x)` entering through the lower
//! faces are stored separately as *inflow* conductances.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::sum::compensated_sum;

pub(crate) const NONE: usize = usize::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Topology {
    Torus,
    Box,
}

impl Topology {
    pub fn as_str(self) -> &'static str {
        match self {
            Topology::Torus => "torus",
            Topology::Box => "box",
        }
    }
}

impl std::str::FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "torus" => Ok(Topology::Torus),
            "box" => Ok(Topology::Box),
            other => Err(Error::InvalidParameter(format!("unknown topology `{other}`"))),
        }
    }
}

/// Extents and topology of a finite lattice domain.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lattice {
    extents: Vec<usize>,
    strides: Vec<usize>,
    topology: Topology,
}

impl Lattice {
    pub fn new(extents: Vec<usize>, topology: Topology) -> Result<Self> {
        if extents.is_empty() {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if extents.iter().any(|&n| n == 0) {
            return Err(Error::InvalidParameter(format!(
                "extents must be positive, got {extents:?}"
            )));
        }
        let d = extents.len();
        let mut strides = vec![1; d];
        for i in (0..d - 1).rev() {
            strides[i] = strides[i + 1] * extents[i + 1];
        }
        Ok(Lattice {
            extents,
            strides,
            topology,
        })
    }

    pub fn torus(extents: Vec<usize>) -> Result<Self> {
        Self::new(extents, Topology::Torus)
    }

    /// The lattice cube `{-⌊R/2⌋,…,⌊R/2⌋}^d` realising `Q_R` with Dirichlet data.
    pub fn cube_box(side: usize, dim: usize) -> Result<Self> {
        if side == 0 {
            return Err(Error::InvalidParameter("box side R must be positive".into()));
        }
        let n = 2 * (side / 2) + 1;
        Self::new(vec![n; dim], Topology::Box)
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn num_sites(&self) -> usize {
        self.extents.iter().product()
    }

    /// Offset between site index and centred coordinate along axis `i`.
    pub fn offset(&self, i: usize) -> i64 {
        (self.extents[i] / 2) as i64
    }

    pub fn index_of(&self, site: usize, i: usize) -> usize {
        (site / self.strides[i]) % self.extents[i]
    }

    /// Centred coordinates of a site.
    pub fn coords(&self, site: usize) -> Vec<i64> {
        (0..self.dim())
            .map(|i| self.index_of(site, i) as i64 - self.offset(i))
            .collect()
    }

    /// Site at centred coordinates; wraps on a torus, `None` outside a box.
    pub fn site_at(&self, coords: &[i64]) -> Option<usize> {
        debug_assert_eq!(coords.len(), self.dim());
        let mut site = 0;
        for (i, &x) in coords.iter().enumerate() {
            let n = self.extents[i] as i64;
            let j = x + self.offset(i);
            let j = match self.topology {
                Topology::Torus => j.rem_euclid(n),
                Topology::Box if (0..n).contains(&j) => j,
                Topology::Box => return None,
            };
            site += j as usize * self.strides[i];
        }
        Some(site)
    }

    pub fn forward(&self, site: usize, i: usize) -> Option<usize> {
        let j = self.index_of(site, i);
        if j + 1 < self.extents[i] {
            Some(site + self.strides[i])
        } else {
            match self.topology {
                Topology::Torus => Some(site + self.strides[i] - self.extents[i] * self.strides[i]),
                Topology::Box => None,
            }
        }
    }

    pub fn backward(&self, site: usize, i: usize) -> Option<usize> {
        let j = self.index_of(site, i);
        if j > 0 {
            Some(site - self.strides[i])
        } else {
            match self.topology {
                Topology::Torus => Some(site + (self.extents[i] - 1) * self.strides[i]),
                Topology::Box => None,
            }
        }
    }

    /// Number of sites on the face orthogonal to axis `i`.
    pub fn face_len(&self, i: usize) -> usize {
        self.num_sites() / self.extents[i]
    }

    /// Canonical rank of a site within the face orthogonal to axis `i`
    /// (the site index with coordinate `i` removed).
    pub fn face_rank(&self, site: usize, i: usize) -> usize {
        let mut rank = 0;
        for a in 0..self.dim() {
            if a != i {
                rank = rank * self.extents[a] + self.index_of(site, a);
            }
        }
        rank
    }

    pub(crate) fn check_same(&self, other: &Lattice) -> Result<()> {
        if self != other {
            return Err(Error::GeometryMismatch(format!(
                "{:?} {:?} vs {:?} {:?}",
                self.topology, self.extents, other.topology, other.extents
            )));
        }
        Ok(())
    }
}

/// A scalar function on the sites of a lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeField {
    lattice: Lattice,
    values: Vec<f64>,
}

impl LatticeField {
    pub fn new(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.num_sites() {
            return Err(Error::GeometryMismatch(format!(
                "{} values for {} sites",
                values.len(),
                lattice.num_sites()
            )));
        }
        Ok(LatticeField { lattice, values })
    }

    pub fn zeros(lattice: &Lattice) -> Self {
        let n = lattice.num_sites();
        LatticeField {
            lattice: lattice.clone(),
            values: vec![0.0; n],
        }
    }

    pub fn constant(lattice: &Lattice, c: f64) -> Self {
        let n = lattice.num_sites();
        LatticeField {
            lattice: lattice.clone(),
            values: vec![c; n],
        }
    }

    pub fn from_fn(lattice: &Lattice, mut f: impl FnMut(&[i64]) -> f64) -> Self {
        let values = (0..lattice.num_sites())
            .map(|s| f(&lattice.coords(s)))
            .collect();
        LatticeField {
            lattice: lattice.clone(),
            values,
        }
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sum(&self) -> f64 {
        compensated_sum(self.values.iter().copied())
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    pub fn norm(&self) -> f64 {
        crate::sum::dot(&self.values, &self.values).sqrt()
    }

    /// `self + s·other`.
    pub fn axpy(&self, s: f64, other: &LatticeField) -> Result<LatticeField> {
        self.lattice.check_same(&other.lattice)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + s * b)
            .collect();
        Ok(LatticeField {
            lattice: self.lattice.clone(),
            values,
        })
    }

    pub fn scaled(&self, s: f64) -> LatticeField {
        LatticeField {
            lattice: self.lattice.clone(),
            values: self.values.iter().map(|v| s * v).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// A vector field: `d` components per site, component `i` at `site*d + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    lattice: Lattice,
    values: Vec<f64>,
}

impl VectorField {
    pub fn new(lattice: Lattice, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.num_sites() * lattice.dim() {
            return Err(Error::GeometryMismatch(format!(
                "{} components for {} sites in dimension {}",
                values.len(),
                lattice.num_sites(),
                lattice.dim()
            )));
        }
        Ok(VectorField { lattice, values })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn component(&self, site: usize, i: usize) -> f64 {
        self.values[site * self.lattice.dim() + i]
    }
}

/// A direction `ξ ∈ R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Direction(Vec<f64>);

impl Direction {
    pub fn new(xi: Vec<f64>) -> Result<Self> {
        if xi.is_empty() || xi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("invalid direction {xi:?}")));
        }
        Ok(Direction(xi))
    }

    /// The unit vector `e_i` in dimension `d`.
    pub fn unit(i: usize, d: usize) -> Self {
        let mut xi = vec![0.0; d];
        xi[i] = 1.0;
        Direction(xi)
    }

    pub fn normalized(xi: Vec<f64>) -> Result<Self> {
        let n = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n == 0.0 {
            return Err(Error::InvalidParameter("zero direction".into()));
        }
        Direction::new(xi.into_iter().map(|v| v / n).collect())
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn negated(&self) -> Direction {
        Direction(self.0.iter().map(|v| -v).collect())
    }

    pub(crate) fn require_unit(&self) -> Result<()> {
        if (self.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "direction must have unit length, |ξ| = {}",
                self.norm()
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| format!("{v}")).collect();
        f.write_str(&parts.join(";"))
    }
}

/// Diagonal conductances on the edges of a lattice domain.
#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    lattice: Lattice,
    conductances: Vec<f64>,
    inflow: Vec<Vec<f64>>,
    bounds: (f64, f64),
}

impl Environment {
    /// Builds an environment from per-site forward conductances and, for a
    /// box, the inflow conductances of the lower faces (`inflow[i]` indexed by
    /// [`Lattice::face_rank`]). Tori take an empty `inflow`.
    pub fn new(
        lattice: Lattice,
        conductances: Vec<f64>,
        inflow: Vec<Vec<f64>>,
        bounds: (f64, f64),
    ) -> Result<Self> {
        let (alpha, beta) = bounds;
        if !(alpha > 0.0 && alpha <= beta && beta.is_finite()) {
            return Err(Error::InvalidEnvironment(format!(
                "bounds must satisfy 0 < α ≤ β, got ({alpha}, {beta})"
            )));
        }
        let d = lattice.dim();
        if conductances.len() != lattice.num_sites() * d {
            return Err(Error::GeometryMismatch(format!(
                "{} conductances for {} sites in dimension {d}",
                conductances.len(),
                lattice.num_sites()
            )));
        }
        match lattice.topology() {
            Topology::Torus if !inflow.is_empty() => {
                return Err(Error::InvalidEnvironment(
                    "a torus has no inflow conductances".into(),
                ))
            }
            Topology::Box => {
                if inflow.len() != d || (0..d).any(|i| inflow[i].len() != lattice.face_len(i)) {
                    return Err(Error::GeometryMismatch(
                        "box inflow conductances must cover every lower face".into(),
                    ));
                }
            }
            _ => {}
        }
        let in_range = |w: &f64| *w >= alpha && *w <= beta;
        if let Some(w) = conductances
            .iter()
            .chain(inflow.iter().flatten())
            .find(|w| !in_range(w))
        {
            return Err(Error::InvalidEnvironment(format!(
                "conductance {w} outside [{alpha}, {beta}]"
            )));
        }
        Ok(Environment {
            lattice,
            conductances,
            inflow,
            bounds,
        })
    }

    /// Evaluates `ω(x, i)`, the conductance of the edge `(x, x+e_i)` at centred
    /// coordinates `x`, on every edge of the domain (inflow edges included).
    pub fn from_fn(
        lattice: Lattice,
        bounds: (f64, f64),
        mut omega: impl FnMut(&[i64], usize) -> f64,
    ) -> Result<Self> {
        let d = lattice.dim();
        let mut conductances = Vec::with_capacity(lattice.num_sites() * d);
        for s in 0..lattice.num_sites() {
            let x = lattice.coords(s);
            for i in 0..d {
                conductances.push(omega(&x, i));
            }
        }
        let inflow = lower_face_edges(&lattice, &mut omega);
        Environment::new(lattice, conductances, inflow, bounds)
    }

    pub fn homogeneous(lattice: Lattice, c: f64) -> Result<Self> {
        Environment::from_fn(lattice, (c, c), |_, _| c)
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn dim(&self) -> usize {
        self.lattice.dim()
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.bounds
    }

    /// Forward conductances, `site*d + i`.
    pub fn conductances(&self) -> &[f64] {
        &self.conductances
    }

    pub fn inflow(&self) -> &[Vec<f64>] {
        &self.inflow
    }

    /// `ω_{x,x+e_i}`.
    pub fn forward_conductance(&self, site: usize, i: usize) -> f64 {
        self.conductances[site * self.dim() + i]
    }

    /// `ω_{x-e_i,x}`.
    pub fn backward_conductance(&self, site: usize, i: usize) -> f64 {
        match self.lattice.backward(site, i) {
            Some(b) => self.forward_conductance(b, i),
            None => self.inflow[i][self.lattice.face_rank(site, i)],
        }
    }

    /// Cell average of `ξ·A ξ`.
    pub fn mean_xi_a_xi(&self, xi: &Direction) -> Result<f64> {
        self.check_direction(xi)?;
        let d = self.dim();
        let xi = xi.components();
        let total = compensated_sum(
            self.conductances
                .chunks_exact(d)
                .flat_map(|w| w.iter().zip(xi).map(|(w, x)| w * x * x)),
        );
        Ok(total / self.lattice.num_sites() as f64)
    }

    /// Cell average of `|A|^2` (squared Frobenius norm of the diagonal matrix).
    pub fn mean_a_squared(&self) -> f64 {
        compensated_sum(self.conductances.iter().map(|w| w * w)) / self.lattice.num_sites() as f64
    }

    pub(crate) fn check_field(&self, field: &LatticeField) -> Result<()> {
        self.lattice.check_same(field.lattice())
    }

    pub(crate) fn check_direction(&self, xi: &Direction) -> Result<()> {
        if xi.dim() != self.dim() {
            return Err(Error::GeometryMismatch(format!(
                "direction of dimension {} in a {}-dimensional environment",
                xi.dim(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Writes the text format: a header line `d N_1 … N_d topology alpha beta`,
    /// then one line per site with its `d` forward conductances, and for a
    /// box one `inflow i …` line per axis listing the lower-face inflow
    /// conductances in face order.
    pub fn write_text<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = format!("{}", self.dim());
        for n in self.lattice.extents() {
            write!(header, " {n}").unwrap();
        }
        write!(
            header,
            " {} {:.16e} {:.16e}",
            self.lattice.topology().as_str(),
            self.bounds.0,
            self.bounds.1
        )
        .unwrap();
        writeln!(out, "{header}")?;
        for w in self.conductances.chunks_exact(self.dim()) {
            let line: Vec<String> = w.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        for (i, face) in self.inflow.iter().enumerate() {
            let mut line = format!("inflow {i}");
            for v in face {
                write!(line, " {v:.16e}").unwrap();
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write_text(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read_text<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input
            .lines()
            .enumerate()
            .map(|(n, l)| (n + 1, l))
            .filter(|(_, l)| match l {
                Ok(s) => !s.trim().is_empty() && !s.trim_start().starts_with('#'),
                Err(_) => true,
            });
        let parse_err = |line: usize, message: String| Error::Parse { line, message };
        let (hline, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty environment file".into()))?;
        let header = header?;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        let d: usize = tokens
            .first()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| parse_err(hline, "missing dimension".into()))?;
        if d == 0 || tokens.len() != d + 4 {
            return Err(parse_err(
                hline,
                format!("expected `d N_1 … N_d topology alpha beta`, got `{header}`"),
            ));
        }
        let extents = tokens[1..=d]
            .iter()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(hline, format!("bad extent: {e}")))?;
        let topology: Topology = tokens[d + 1].parse()?;
        let alpha: f64 = tokens[d + 2]
            .parse()
            .map_err(|e| parse_err(hline, format!("bad alpha: {e}")))?;
        let beta: f64 = tokens[d + 3]
            .parse()
            .map_err(|e| parse_err(hline, format!("bad beta: {e}")))?;
        let lattice = Lattice::new(extents, topology)?;

        let parse_floats = |line: usize, toks: &[&str]| -> Result<Vec<f64>> {
            toks.iter()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|e| parse_err(line, format!("bad conductance `{t}`: {e}")))
                })
                .collect()
        };

        let mut conductances = Vec::with_capacity(lattice.num_sites() * d);
        for _ in 0..lattice.num_sites() {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| parse_err(0, "unexpected end of file in site lines".into()))?;
            let line = line?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.len() != d {
                return Err(parse_err(ln, format!("expected {d} conductances")));
            }
            conductances.extend(parse_floats(ln, &toks)?);
        }
        let mut inflow = Vec::new();
        if topology == Topology::Box {
            for i in 0..d {
                let (ln, line) = lines
                    .next()
                    .ok_or_else(|| parse_err(0, format!("missing `inflow {i}` line")))?;
                let line = line?;
                let toks: Vec<&str> = line.split_whitespace().collect();
                if toks.len() < 2 || toks[0] != "inflow" || toks[1] != i.to_string() {
                    return Err(parse_err(ln, format!("expected `inflow {i} …`")));
                }
                let face = parse_floats(ln, &toks[2..])?;
                if face.len() != lattice.face_len(i) {
                    return Err(parse_err(
                        ln,
                        format!("expected {} inflow conductances", lattice.face_len(i)),
                    ));
                }
                inflow.push(face);
            }
        }
        if let Some((ln, _)) = lines.next() {
            return Err(parse_err(ln, "trailing data after environment".into()));
        }
        Environment::new(lattice, conductances, inflow, (alpha, beta))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::read_text(text.as_bytes())
    }
}

/// Conductances of the edges `(x-e_i, x)` entering a box through its lower
/// faces; empty for a torus.
fn lower_face_edges(
    lattice: &Lattice,
    omega: &mut impl FnMut(&[i64], usize) -> f64,
) -> Vec<Vec<f64>> {
    if lattice.topology() == Topology::Torus {
        return Vec::new();
    }
    let d = lattice.dim();
    let mut inflow: Vec<Vec<f64>> = (0..d).map(|i| vec![0.0; lattice.face_len(i)]).collect();
    for s in 0..lattice.num_sites() {
        for (i, face) in inflow.iter_mut().enumerate() {
            if lattice.index_of(s, i) == 0 {
                let mut x = lattice.coords(s);
                x[i] -= 1;
                face[lattice.face_rank(s, i)] = omega(&x, i);
            }
        }
    }
    inflow
}

/// Forward differences `∇u(x)_i = u(x+e_i) - u(x)`; `u ≡ 0` outside a box.
pub fn gradient(field: &LatticeField) -> VectorField {
    let lat = field.lattice();
    let d = lat.dim();
    let u = field.values();
    let mut out = Vec::with_capacity(u.len() * d);
    for (s, &us) in u.iter().enumerate() {
        for i in 0..d {
            let next = lat.forward(s, i).map_or(0.0, |t| u[t]);
            out.push(next - us);
        }
    }
    VectorField {
        lattice: lat.clone(),
        values: out,
    }
}

/// Backward divergence `∇*·v(x) = Σ_i v_i(x) - v_i(x-e_i)`; `v ≡ 0` outside a box.
pub fn divergence_star(v: &VectorField) -> LatticeField {
    let lat = v.lattice();
    let d = lat.dim();
    let values = (0..lat.num_sites())
        .map(|s| {
            (0..d)
                .map(|i| {
                    let prev = lat.backward(s, i).map_or(0.0, |b| v.component(b, i));
                    v.component(s, i) - prev
                })
                .sum()
        })
        .collect();
    LatticeField {
        lattice: lat.clone(),
        values,
    }
}

/// `A ξ` as a vector field (the flux of the linear profile `x ↦ ξ·x`).
pub fn flux_of_direction(env: &Environment, xi: &Direction) -> Result<VectorField> {
    env.check_direction(xi)?;
    let d = env.dim();
    let values = env
        .conductances()
        .chunks_exact(d)
        .flat_map(|w| w.iter().zip(xi.components()).map(|(w, x)| w * x))
        .collect();
    VectorField::new(env.lattice().clone(), values)
}

/// Applies `μ - ∇*·A∇`, i.e. `(μ + L) u` with `u ≡ 0` outside a box. Every
/// edge touching the domain contributes, inflow edges of a box included.
pub fn apply_operator(env: &Environment, mu: f64, field: &LatticeField) -> Result<LatticeField> {
    if !(mu >= 0.0) {
        return Err(Error::InvalidParameter(format!("μ must be ≥ 0, got {mu}")));
    }
    env.check_field(field)?;
    let stencil = crate::solver::Stencil::new(env);
    let mut out = vec![0.0; field.values().len()];
    stencil.apply(mu, field.values(), &mut out);
    LatticeField::new(env.lattice().clone(), out)
}

/// The local drift `𝔡(x) = ∇*·(A ξ)(x) = Σ_i ξ_i (ω_{x,x+e_i} - ω_{x-e_i,x})`.
///
/// On a box the backward edge on the lower face is the inflow edge, so the
/// drift is the restriction of the whole-space drift.
pub fn local_drift(env: &Environment, xi: &Direction) -> Result<LatticeField> {
    env.check_direction(xi)?;
    let d = env.dim();
    let values = (0..env.lattice().num_sites())
        .map(|s| {
            (0..d)
                .map(|i| {
                    xi.components()[i]
                        * (env.forward_conductance(s, i) - env.backward_conductance(s, i))
                })
                .sum()
        })
        .collect();
    LatticeField::new(env.lattice().clone(), values)
}

/// `Σ_x ∇u·A∇v / #sites` over the forward edges of every site.
pub fn dirichlet_form(env: &Environment, u: &LatticeField, v: &LatticeField) -> Result<f64> {
    env.check_field(u)?;
    env.check_field(v)?;
    let gu = gradient(u);
    let gv = gradient(v);
    let total = compensated_sum(
        gu.values()
            .iter()
            .zip(gv.values())
            .zip(env.conductances())
            .map(|((a, b), w)| a * w * b),
    );
    Ok(total / env.lattice().num_sites() as f64)
}

pub(crate) fn check_mask(mask: &LatticeField) -> Result<()> {
    if mask.values().iter().any(|m| !(*m >= 0.0)) {
        return Err(Error::InvalidParameter("mask has negative entries".into()));
    }
    let sum = mask.sum();
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::UnnormalizedMask { sum });
    }
    Ok(())
}

/// `⟨⟨(ξ+∇a)·A(ξ+∇b)⟩⟩` with mask weights; `None` stands for the zero field.
pub fn energy_average(
    env: &Environment,
    xi: &Direction,
    a: Option<&LatticeField>,
    b: Option<&LatticeField>,
    mask: &LatticeField,
) -> Result<f64> {
    env.check_field(mask)?;
    check_mask(mask)?;
    energy_sum(env, xi, a, b, Some(mask.values()))
}

/// `⟨(ξ+∇a)·A(ξ+∇b)⟩` over the whole domain, summed first and divided by
/// the number of sites once (exact for homogeneous environments).
pub fn energy_mean(
    env: &Environment,
    xi: &Direction,
    a: Option<&LatticeField>,
    b: Option<&LatticeField>,
) -> Result<f64> {
    Ok(energy_sum(env, xi, a, b, None)? / env.lattice().num_sites() as f64)
}

fn energy_sum(
    env: &Environment,
    xi: &Direction,
    a: Option<&LatticeField>,
    b: Option<&LatticeField>,
    weights: Option<&[f64]>,
) -> Result<f64> {
    env.check_direction(xi)?;
    let d = env.dim();
    let ga = a.map(|f| env.check_field(f).map(|_| gradient(f))).transpose()?;
    let gb = b.map(|f| env.check_field(f).map(|_| gradient(f))).transpose()?;
    let xi = xi.components();
    let mut acc = crate::sum::Neumaier::default();
    for s in 0..env.lattice().num_sites() {
        let m = weights.map_or(1.0, |w| w[s]);
        if m == 0.0 {
            continue;
        }
        let mut local = 0.0;
        for i in 0..d {
            let k = s * d + i;
            let da = ga.as_ref().map_or(0.0, |g| g.values()[k]);
            let db = gb.as_ref().map_or(0.0, |g| g.values()[k]);
            local += (xi[i] + da) * env.conductances()[k] * (xi[i] + db);
        }
        acc.add(m * local);
    }
    Ok(acc.value())
}

/// `⟨⟨a b⟩⟩` with mask weights.
pub fn masked_product(a: &LatticeField, b: &LatticeField, mask: &LatticeField) -> Result<f64> {
    a.lattice().check_same(b.lattice())?;
    a.lattice().check_same(mask.lattice())?;
    check_mask(mask)?;
    Ok(compensated_sum(
        a.values()
            .iter()
            .zip(b.values())
            .zip(mask.values())
            .filter(|(_, m)| **m != 0.0)
            .map(|((x, y), m)| m * x * y),
    ))
}

/// Uniform weights `1/#sites` over the whole domain.
pub fn uniform_mask(lattice: &Lattice) -> LatticeField {
    LatticeField::constant(lattice, 1.0 / lattice.num_sites() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn torus(extents: &[usize]) -> Lattice {
        Lattice::torus(extents.to_vec()).unwrap()
    }

    fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        // xorshift, only for test inputs
        let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        (0..n)
            .map(|_| {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect()
    }

    fn random_env(lat: Lattice, seed: u64) -> Environment {
        let n = lat.num_sites() * lat.dim();
        let w: Vec<f64> = pseudo_random(n, seed).iter().map(|u| 1.0 + 9.0 * u).collect();
        let inflow = if lat.topology() == Topology::Box {
            (0..lat.dim())
                .map(|i| {
                    pseudo_random(lat.face_len(i), seed + 1 + i as u64)
                        .iter()
                        .map(|u| 1.0 + 9.0 * u)
                        .collect()
                })
                .collect()
        } else {
            Vec::new()
        };
        Environment::new(lat, w, inflow, (1.0, 10.0)).unwrap()
    }

    #[test]
    fn coordinates_are_centred_row_major() {
        let lat = torus(&[4, 3]);
        assert_eq!(lat.coords(0), vec![-2, -1]);
        assert_eq!(lat.coords(1), vec![-2, 0]);
        assert_eq!(lat.coords(3), vec![-1, -1]);
        assert_eq!(lat.site_at(&[2, -1]), Some(0));
        let b = Lattice::cube_box(6, 2).unwrap();
        assert_eq!(b.extents(), &[7, 7]);
        assert_eq!(b.coords(0), vec![-3, -3]);
        assert_eq!(b.site_at(&[4, 0]), None);
    }

    #[test]
    fn gradient_of_constant_vanishes() {
        let lat = torus(&[4, 4]);
        let g = gradient(&LatticeField::constant(&lat, 3.5));
        assert!(g.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn gradient_of_ramp_has_seam() {
        let lat = torus(&[4, 4]);
        // u(x) = x_1 using the site index along axis 0 as coordinate
        let u = LatticeField::new(
            lat.clone(),
            (0..16).map(|s| lat.index_of(s, 0) as f64).collect(),
        )
        .unwrap();
        let g = gradient(&u);
        for s in 0..16 {
            let expected = if lat.index_of(s, 0) == 3 { -3.0 } else { 1.0 };
            assert_eq!(g.component(s, 0), expected);
            assert_eq!(g.component(s, 1), 0.0);
        }
    }

    #[test]
    fn gradient_of_impulse_on_box_has_2d_entries() {
        for d in 1..=3 {
            let lat = Lattice::cube_box(5, d).unwrap();
            let origin = lat.site_at(&vec![0; d]).unwrap();
            let mut u = LatticeField::zeros(&lat);
            u.values_mut()[origin] = 1.0;
            let nonzero = gradient(&u).values().iter().filter(|v| **v != 0.0).count();
            assert_eq!(nonzero, 2 * d);
        }
    }

    #[test]
    fn divergence_of_zero_and_constant_flux() {
        let lat = torus(&[3, 5]);
        let zero = VectorField::new(lat.clone(), vec![0.0; 30]).unwrap();
        assert!(divergence_star(&zero).values().iter().all(|v| *v == 0.0));
        let env = Environment::homogeneous(lat, 2.5).unwrap();
        let xi = Direction::normalized(vec![1.0, 2.0]).unwrap();
        let v = flux_of_direction(&env, &xi).unwrap();
        assert!(divergence_star(&v).values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn divergence_of_gradient_sums_to_zero_on_torus() {
        let lat = torus(&[5, 4]);
        let u = LatticeField::new(lat.clone(), pseudo_random(20, 3)).unwrap();
        assert!(divergence_star(&gradient(&u)).sum().abs() < 1e-14);
    }

    #[test]
    fn summation_by_parts() {
        // Σ v·∇u = -Σ u ∇*·v with the backward divergence.
        let lat = torus(&[4, 6]);
        let u = LatticeField::new(lat.clone(), pseudo_random(24, 7)).unwrap();
        let v = VectorField::new(lat.clone(), pseudo_random(48, 8)).unwrap();
        let lhs: f64 = gradient(&u).values().iter().zip(v.values()).map(|(a, b)| a * b).sum();
        let rhs: f64 = divergence_star(&v)
            .values()
            .iter()
            .zip(u.values())
            .map(|(a, b)| a * b)
            .sum();
        assert!((lhs + rhs).abs() < 1e-13);
    }

    #[test]
    fn operator_on_constant_and_laplacian() {
        let lat = torus(&[4, 4]);
        let env = random_env(lat.clone(), 1);
        let out = apply_operator(&env, 0.7, &LatticeField::constant(&lat, 2.0)).unwrap();
        assert!(out.values().iter().all(|v| (v - 1.4).abs() < 1e-12));

        let hom = Environment::homogeneous(lat.clone(), 1.0).unwrap();
        let u = LatticeField::new(lat.clone(), pseudo_random(16, 5)).unwrap();
        let lu = apply_operator(&hom, 0.0, &u).unwrap();
        for s in 0..16 {
            let mut expected = 4.0 * u.values()[s];
            for i in 0..2 {
                expected -= u.values()[lat.forward(s, i).unwrap()];
                expected -= u.values()[lat.backward(s, i).unwrap()];
            }
            assert!((lu.values()[s] - expected).abs() < 1e-14);
        }
        assert!(apply_operator(&env, -1.0, &u).is_err());
    }

    #[test]
    fn operator_matches_composition_on_torus() {
        let lat = torus(&[3, 4, 2]);
        let env = random_env(lat.clone(), 9);
        let u = LatticeField::new(lat.clone(), pseudo_random(24, 10)).unwrap();
        let g = gradient(&u);
        let flux: Vec<f64> = g
            .values()
            .iter()
            .zip(env.conductances())
            .map(|(a, w)| a * w)
            .collect();
        let div = divergence_star(&VectorField::new(lat.clone(), flux).unwrap());
        let lu = apply_operator(&env, 0.0, &u).unwrap();
        for (a, b) in lu.values().iter().zip(div.values()) {
            assert!((a + b).abs() < 1e-13);
        }
    }

    #[test]
    fn operator_is_symmetric_on_box() {
        let lat = Lattice::cube_box(5, 2).unwrap();
        let env = random_env(lat.clone(), 4);
        let u = LatticeField::new(lat.clone(), pseudo_random(25, 11)).unwrap();
        let v = LatticeField::new(lat.clone(), pseudo_random(25, 12)).unwrap();
        let vlu: f64 = apply_operator(&env, 0.3, &u)
            .unwrap()
            .values()
            .iter()
            .zip(v.values())
            .map(|(a, b)| a * b)
            .sum();
        let ulv: f64 = apply_operator(&env, 0.3, &v)
            .unwrap()
            .values()
            .iter()
            .zip(u.values())
            .map(|(a, b)| a * b)
            .sum();
        assert!((vlu - ulv).abs() < 1e-12 * vlu.abs());
    }

    #[test]
    fn drift_of_homogeneous_env_vanishes() {
        let env = Environment::homogeneous(torus(&[4, 4]), 3.0).unwrap();
        let xi = Direction::normalized(vec![0.3, -0.4]).unwrap();
        assert!(local_drift(&env, &xi).unwrap().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn drift_on_two_by_two_torus() {
        // ω_{x,x+e_1} alternates 1,2 along the first axis; vertical ω = 5.
        let lat = torus(&[2, 2]);
        let env = Environment::from_fn(lat.clone(), (1.0, 5.0), |x, i| {
            if i == 0 {
                if x[0].rem_euclid(2) == 0 {
                    1.0
                } else {
                    2.0
                }
            } else {
                5.0
            }
        })
        .unwrap();
        let dr = local_drift(&env, &Direction::unit(0, 2)).unwrap();
        for s in 0..4 {
            let x0 = lat.coords(s)[0].rem_euclid(2);
            let expected = if x0 == 0 { 1.0 - 2.0 } else { 2.0 - 1.0 };
            assert_eq!(dr.values()[s], expected);
        }
        assert_eq!(dr.sum(), 0.0);
    }

    #[test]
    fn drift_equals_divergence_of_flux_on_torus() {
        let env = random_env(torus(&[5, 3]), 21);
        let xi = Direction::normalized(vec![0.6, 0.8]).unwrap();
        let a = local_drift(&env, &xi).unwrap();
        let b = divergence_star(&flux_of_direction(&env, &xi).unwrap());
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!(a.sum().abs() < 1e-13);
    }

    #[test]
    fn energy_average_basics() {
        let lat = torus(&[4, 4]);
        let env = Environment::homogeneous(lat.clone(), 2.0).unwrap();
        let xi = Direction::normalized(vec![1.0, 1.0]).unwrap();
        let mask = uniform_mask(&lat);
        let e = energy_average(&env, &xi, None, None, &mask).unwrap();
        assert!((e - 2.0).abs() < 1e-15);
        let one = LatticeField::constant(&lat, 1.0);
        assert!((masked_product(&one, &one, &mask).unwrap() - 1.0).abs() < 1e-15);
        let bad = LatticeField::constant(&lat, 0.1);
        assert!(matches!(
            energy_average(&env, &xi, None, None, &bad),
            Err(Error::UnnormalizedMask { .. })
        ));
    }

    #[test]
    fn text_format_round_trips() {
        let env = random_env(torus(&[3, 2]), 2);
        let text = env.to_text();
        assert!(text.starts_with("2 3 2 torus"));
        assert_eq!(Environment::from_text(&text).unwrap(), env);

        let boxed = random_env(Lattice::cube_box(3, 2).unwrap(), 5);
        let text = boxed.to_text();
        assert!(text.contains("inflow 1"));
        assert_eq!(Environment::from_text(&text).unwrap(), boxed);
    }

    #[test]
    fn text_format_rejects_garbage() {
        assert!(Environment::from_text("").is_err());
        assert!(Environment::from_text("2 2 2 torus 1 2\n1 1\n1 1\n1 1\n").is_err());
        assert!(Environment::from_text("2 1 1 torus 1 2\n3 1\n").is_err());
        assert!(Environment::from_text("1 2 torus 1 2\n1\n1\n1\n").is_err());
    }

    #[test]
    fn environment_rejects_out_of_range() {
        let lat = torus(&[2]);
        assert!(Environment::new(lat.clone(), vec![1.0, 3.0], vec![], (1.0, 2.0)).is_err());
        assert!(Environment::new(lat, vec![1.0, 1.0], vec![], (0.0, 2.0)).is_err());
    }
}
