//! Covariant degree-of-freedom count of an involutive system,
//!
//! ```text
//! 𝒩 = Σₙ n (tₙ − Σₘ (−1)ᵐ (lₙᵐ + rₙᵐ))
//! ```
//!
//! with `tₙ` equations of order `n`, `lₙᵐ` gauge identities and `rₙᵐ` gauge
//! symmetries of order `n` and reducibility stage `m`.
//!
//! Tables are TOML:
//!
//! ```toml
//! label = "cotton"
//! equations = { 2 = 1, 3 = 24 }
//! identities = [[3, 0, 8], [4, 0, 15], [5, 1, 4]]   # [order, stage, count]
//! symmetries = [[1, 0, 4]]
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DofError {
    #[error("{0}")]
    Parse(String),
    #[error("order `{0}` is not a non-negative integer")]
    Order(String),
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
}

/// Counts keyed by `(order, reducibility)`.
pub type StagedCounts = BTreeMap<(u32, u32), u64>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InvolutiveTable {
    pub label: String,
    pub equations: BTreeMap<u32, u64>,
    pub identities: StagedCounts,
    pub symmetries: StagedCounts,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    #[serde(default)]
    label: String,
    #[serde(default)]
    equations: BTreeMap<String, u64>,
    #[serde(default)]
    identities: Vec<[u64; 3]>,
    #[serde(default)]
    symmetries: Vec<[u64; 3]>,
}

fn staged(rows: &[[u64; 3]]) -> Result<StagedCounts, DofError> {
    let mut out = StagedCounts::new();
    for &[n, m, c] in rows {
        let n = u32::try_from(n).map_err(|_| DofError::Order(n.to_string()))?;
        let m = u32::try_from(m).map_err(|_| DofError::Order(m.to_string()))?;
        *out.entry((n, m)).or_default() += c;
    }
    Ok(out)
}

fn rows(s: &StagedCounts) -> Vec<[u64; 3]> {
    s.iter()
        .map(|(&(n, m), &c)| [n as u64, m as u64, c])
        .collect()
}

impl InvolutiveTable {
    pub fn from_toml(src: &str) -> Result<Self, DofError> {
        let raw: RawTable = toml::from_str(src).map_err(|e| DofError::Parse(e.to_string()))?;
        let equations = raw
            .equations
            .iter()
            .map(|(k, &c)| {
                k.trim()
                    .parse::<u32>()
                    .map(|n| (n, c))
                    .map_err(|_| DofError::Order(k.clone()))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            label: raw.label,
            equations,
            identities: staged(&raw.identities)?,
            symmetries: staged(&raw.symmetries)?,
        })
    }

    pub fn to_toml(&self) -> String {
        let raw = RawTable {
            label: self.label.clone(),
            equations: self
                .equations
                .iter()
                .map(|(n, c)| (n.to_string(), *c))
                .collect(),
            identities: rows(&self.identities),
            symmetries: rows(&self.symmetries),
        };
        toml::to_string(&raw).expect("tables serialize")
    }

    /// Disjoint union: counts add.
    pub fn union(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.label = format!("{} + {}", self.label, other.label);
        for (n, c) in &other.equations {
            *out.equations.entry(*n).or_default() += c;
        }
        for (k, c) in &other.identities {
            *out.identities.entry(*k).or_default() += c;
        }
        for (k, c) in &other.symmetries {
            *out.symmetries.entry(*k).or_default() += c;
        }
        out
    }
}

/// Exact value of the alternating sum.
pub fn dof(table: &InvolutiveTable) -> i128 {
    let sign = |m: u32| if m.is_multiple_of(2) { 1i128 } else { -1 };
    let eq: i128 = table
        .equations
        .iter()
        .map(|(&n, &c)| n as i128 * c as i128)
        .sum();
    let gauge: i128 = table
        .identities
        .iter()
        .chain(&table.symmetries)
        .map(|(&(n, m), &c)| n as i128 * sign(m) * c as i128)
        .sum();
    eq - gauge
}

pub const FIXTURES: [&str; 4] = [
    "cotton",
    "einstein-linear",
    "central-field",
    "central-field-multiplier",
];

fn fixture_source(name: &str) -> Option<&'static str> {
    Some(match name {
        "cotton" => include_str!("../fixtures/dof/cotton.toml"),
        "einstein-linear" => include_str!("../fixtures/dof/einstein-linear.toml"),
        "central-field" => include_str!("../fixtures/dof/central-field.toml"),
        "central-field-multiplier" => include_str!("../fixtures/dof/central-field-multiplier.toml"),
        _ => return None,
    })
}

pub fn fixture(name: &str) -> Result<InvolutiveTable, DofError> {
    InvolutiveTable::from_toml(
        fixture_source(name).ok_or_else(|| DofError::UnknownFixture(name.into()))?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_table_has_no_freedom() {
        assert_eq!(dof(&InvolutiveTable::default()), 0);
    }

    #[test]
    fn single_ode_counts_its_order() {
        for n in 0..7 {
            let t = InvolutiveTable {
                equations: [(n, 1)].into(),
                ..Default::default()
            };
            assert_eq!(dof(&t), n as i128);
        }
    }

    #[test]
    fn reducible_identities_count_with_opposite_sign() {
        let t = InvolutiveTable {
            identities: [((5, 1), 4)].into(),
            ..Default::default()
        };
        assert_eq!(dof(&t), 20);
    }

    #[test]
    fn fixtures_parse_with_their_labels() {
        for name in FIXTURES {
            assert_eq!(fixture(name).unwrap().label, name);
        }
        assert!(matches!(fixture("nope"), Err(DofError::UnknownFixture(_))));
    }

    #[test]
    fn bad_orders_are_rejected() {
        assert!(matches!(
            InvolutiveTable::from_toml("equations = { two = 1 }"),
            Err(DofError::Order(_))
        ));
        assert!(matches!(
            InvolutiveTable::from_toml("equations = { 2 = -1 }"),
            Err(DofError::Parse(_))
        ));
    }
}
