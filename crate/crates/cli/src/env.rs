//! Environment sources named on the command line.

use std::fs::File;
use std::io::BufReader;

use anyhow::Context;

use homog_core::reference::{self, restrict_periodic};
use homog_core::{sample_environment, Environment, EnvironmentLaw, LawKind, Lattice, Topology};

use crate::{usage, Usage};

pub enum EnvSource {
    /// A periodic cell, extended periodically when a box is requested.
    Cell(Environment),
    /// A random law, optionally with torus extents.
    Law {
        law: EnvironmentLaw,
        extents: Option<Vec<usize>>,
    },
    /// An environment read from a file, used as is.
    File(Environment),
}

fn parse_extents(s: &str) -> Option<Vec<usize>> {
    let v: Option<Vec<usize>> = s.split('x').map(|t| t.parse().ok()).collect();
    v.filter(|v| !v.is_empty() && v.iter().all(|n| *n > 0))
}

impl EnvSource {
    /// `builtin:NAME`, `homogeneous:C:NxN`, `law:KIND[:NxN]` or a file path.
    pub fn parse(spec: &str, seed: u64) -> anyhow::Result<EnvSource> {
        if let Some(name) = spec.strip_prefix("builtin:") {
            return Ok(EnvSource::Cell(reference::builtin(name)?));
        }
        if let Some(rest) = spec.strip_prefix("homogeneous:") {
            let (c, ext) = rest.split_once(':').unwrap_or((rest, "4x4"));
            let c: f64 = c
                .parse()
                .map_err(|_| Usage(format!("invalid conductance in `{spec}`")))?;
            let extents =
                parse_extents(ext).ok_or_else(|| Usage(format!("invalid extents in `{spec}`")))?;
            let lat = Lattice::torus(extents)?;
            return Ok(EnvSource::Cell(Environment::homogeneous(lat, c)?));
        }
        if let Some(rest) = spec.strip_prefix("law:") {
            let (kind_str, extents) = match rest.rsplit_once(':') {
                Some((k, e)) if e.contains('x') || k.matches(':').count() >= 3 => {
                    let ext = parse_extents(e)
                        .ok_or_else(|| Usage(format!("invalid extents in `{spec}`")))?;
                    (k, Some(ext))
                }
                _ => (rest, None),
            };
            let kind: LawKind = kind_str.parse()?;
            let dim = extents.as_ref().map_or(2, |e| e.len());
            let law = EnvironmentLaw::new(kind, dim, seed)?;
            return Ok(EnvSource::Law { law, extents });
        }
        let file = File::open(spec).map_err(|e| Usage(format!("cannot open `{spec}`: {e}")))?;
        let env = Environment::read_text(BufReader::new(file))
            .with_context(|| format!("reading environment `{spec}`"))?;
        Ok(EnvSource::File(env))
    }

    /// The periodic cell, sampling a law on its torus if needed.
    pub fn periodic_cell(self, stream: u64) -> anyhow::Result<Environment> {
        let env = match self {
            EnvSource::Cell(env) | EnvSource::File(env) => env,
            EnvSource::Law {
                law,
                extents: Some(extents),
            } => sample_environment(&law, &extents, Topology::Torus, stream)?,
            EnvSource::Law { extents: None, .. } => {
                return usage("a law needs torus extents here, e.g. `law:uniform:1:10:4x4`")
            }
        };
        if env.lattice().topology() != Topology::Torus {
            return usage("this command needs a periodic (torus) environment");
        }
        Ok(env)
    }

    /// Domain of an estimate: with `R`, the box `Q_R` (periodic extension of a
    /// cell, or fresh draws for a law); without, the environment itself.
    pub fn estimate_domain(self, r: Option<usize>, stream: u64) -> anyhow::Result<Environment> {
        match (self, r) {
            (EnvSource::Cell(cell), Some(r)) => {
                Ok(restrict_periodic(&cell, Lattice::cube_box(r, cell.dim())?)?)
            }
            (EnvSource::Law { law, .. }, Some(r)) => {
                let side = Lattice::cube_box(r, law.dim)?.extents()[0];
                Ok(sample_environment(&law, &vec![side; law.dim], Topology::Box, stream)?)
            }
            (EnvSource::File(env), Some(r)) => {
                let side = env.lattice().extents()[0];
                if env.lattice().topology() == Topology::Box
                    && side != Lattice::cube_box(r, env.dim())?.extents()[0]
                {
                    return usage(format!("--R {r} does not match the box of side {side} in the file"));
                }
                Ok(env)
            }
            (EnvSource::File(env), None) => Ok(env),
            (src, None) => src.periodic_cell(stream).or_else(|_| usage(
                "--R is required unless the environment is a torus",
            )),
        }
    }
}
