//! Built-in instance library and the text instance format.
//!
//! Families: regular (Hock–Schittkowski style and separable convex QPs),
//! nonconvex QPs that are bounded below on their feasible set, a toy power-flow
//! network, LICQ-degenerate duplicated rows, MPCC complementarity problems, and
//! infeasible problems.

mod builders;
mod parse;

use std::fmt;

use thiserror::Error;

use crate::model::NcoProblem;

pub use parse::{load_instance, parse_instance, ParseError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Regular,
    DegenerateLicq,
    Mpcc,
    Infeasible,
    NonconvexQp,
    OpfToy,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Regular,
        Family::DegenerateLicq,
        Family::Mpcc,
        Family::Infeasible,
        Family::NonconvexQp,
        Family::OpfToy,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Family::Regular => "regular",
            Family::DegenerateLicq => "degenerate-licq",
            Family::Mpcc => "mpcc",
            Family::Infeasible => "infeasible",
            Family::NonconvexQp => "nonconvex-qp",
            Family::OpfToy => "opf-toy",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.tag() == tag)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpectedStatus {
    Optimal,
    LocallyInfeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnownOptimum {
    pub value: f64,
    pub tol: f64,
    /// A minimizer, when it is unique.
    pub argmin: Option<Vec<f64>>,
    /// How the value was obtained.
    pub provenance: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSpec {
    pub name: String,
    pub base: &'static str,
    pub family: Family,
    pub size: Option<usize>,
    pub seed: u64,
    pub optimum: Option<KnownOptimum>,
    pub expected: ExpectedStatus,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("unknown instance '{0}'")]
    UnknownName(String),
    #[error("invalid size {size} for '{name}': {reason}")]
    InvalidSize { name: String, size: usize, reason: &'static str },
}

impl InstanceSpec {
    pub fn build(&self) -> NcoProblem {
        builders::build_base(self.base, self.size, self.seed).expect("registered instances build")
    }
}

/// Builds a base instance with explicit size and seed.
pub fn build(base: &str, size: Option<usize>, seed: u64) -> Result<NcoProblem, ProblemError> {
    builders::build_base(base, size, seed)
}

/// Registry names, base names, and `base-N` sizes are all accepted.
pub fn build_named(name: &str, seed: u64) -> Result<NcoProblem, ProblemError> {
    if let Some(spec) = lookup(name) {
        if spec.base == "ncvx-qp" && seed != spec.seed {
            return build(spec.base, spec.size, seed);
        }
        return Ok(spec.build());
    }
    if let Some((base, n)) = name.rsplit_once('-') {
        if let Ok(n) = n.parse::<usize>() {
            if builders::BASES.contains(&base) {
                return build(base, Some(n), seed);
            }
        }
    }
    build(name, None, seed)
}

pub fn lookup(name: &str) -> Option<InstanceSpec> {
    registry().into_iter().find(|s| s.name == name)
}

/// Base names accepted by [`build`].
pub fn base_names() -> &'static [&'static str] {
    builders::BASES
}

/// The registered instances, in a fixed order.
pub fn registry() -> Vec<InstanceSpec> {
    use ExpectedStatus::*;
    use Family::*;
    let mut out = Vec::new();
    let mut add = |name: String, base: &'static str, family: Family, size: Option<usize>, expected: ExpectedStatus| {
        let optimum = builders::known_optimum(base, size, 0);
        out.push(InstanceSpec { name, base, family, size, seed: 0, optimum, expected });
    };
    let named = |b: &str, n: usize| format!("{b}-{n}");
    for b in ["hs6", "hs7", "hs21", "hs28", "hs35", "hs76"] {
        add(b.to_string(), base_ref(b), Regular, None, Optimal);
    }
    for n in [10, 200] {
        add(named("convex-qp", n), "convex-qp", Regular, Some(n), Optimal);
    }
    for n in [12, 30, 300] {
        add(named("ncvx-qp", n), "ncvx-qp", NonconvexQp, Some(n), Optimal);
    }
    for n in [5, 1000] {
        add(named("opf-toy", n), "opf-toy", OpfToy, Some(n), Optimal);
    }
    add("dup-rows".into(), "dup-rows", DegenerateLicq, None, Optimal);
    add("dup-rows-hs6".into(), "dup-rows-hs6", DegenerateLicq, None, Optimal);
    for b in ["mpcc-basic", "mpcc-shift", "mpcc-slack"] {
        add(b.to_string(), base_ref(b), Mpcc, None, Optimal);
    }
    add(named("mpcc-chain", 4), "mpcc-chain", Mpcc, Some(4), Optimal);
    add("infeas-circle".into(), "infeas-circle", Infeasible, None, LocallyInfeasible);
    add("infeas-qp".into(), "infeas-qp", Infeasible, None, LocallyInfeasible);
    out
}

fn base_ref(b: &str) -> &'static str {
    builders::BASES.iter().copied().find(|x| *x == b).expect("known base")
}
