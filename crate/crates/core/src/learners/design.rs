//! Design matrices over binary and continuous columns.
//!
//! Binary columns are stored as a per-row bit pattern over the base
//! columns; an expanded column is a subset mask over that pattern. This
//! makes coordinate descent work on per-pattern aggregates instead of raw
//! rows, which is what keeps the penalty path cheap.

use crate::error::Error;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Expansion {
    /// Base columns enter as-is.
    MainEffects,
    /// All products of non-empty subsets of the binary base columns;
    /// continuous columns still enter linearly.
    Saturated,
}

/// Which columns to build a design from, by name.
#[derive(Debug, Clone)]
pub struct DesignSpec {
    pub binary: Vec<String>,
    pub continuous: Vec<String>,
    pub expansion: Expansion,
}

/// Materialized design over `n` rows.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub n: usize,
    /// Number of base binary columns (pattern width in bits).
    pub k: usize,
    /// Per-row base pattern; bit `b` is base binary column `b`.
    pub pattern: Vec<u32>,
    /// Expanded binary columns as subset masks of the base pattern.
    pub masks: Vec<u32>,
    pub binary_names: Vec<String>,
    /// Continuous columns, each of length `n`.
    pub cont: Vec<Vec<f64>>,
    pub cont_names: Vec<String>,
}

impl DesignMatrix {
    /// Builds a design from named base columns.
    pub fn build(
        binary: &[(&str, &[u8])],
        continuous: &[(&str, &[f64])],
        expansion: Expansion,
    ) -> Result<Self> {
        let k = binary.len();
        if k > 20 {
            return Err(Error::InvalidParam {
                name: "binary columns",
                reason: format!("{k} base columns would expand to over a million terms"),
            });
        }
        let n = binary
            .first()
            .map(|(_, c)| c.len())
            .or_else(|| continuous.first().map(|(_, c)| c.len()))
            .unwrap_or(0);
        let mut names: Vec<&str> = Vec::new();
        for name in binary
            .iter()
            .map(|(n, _)| *n)
            .chain(continuous.iter().map(|(n, _)| *n))
        {
            if names.contains(&name) {
                return Err(Error::InvalidParam {
                    name: "columns",
                    reason: format!("duplicate column `{name}`"),
                });
            }
            names.push(name);
        }
        let mut pattern = vec![0u32; n];
        for (b, (_, col)) in binary.iter().enumerate() {
            assert_eq!(col.len(), n, "ragged binary column");
            for (p, &v) in pattern.iter_mut().zip(col.iter()) {
                debug_assert!(v <= 1);
                *p |= (v as u32) << b;
            }
        }
        let masks: Vec<u32> = match expansion {
            Expansion::MainEffects => (0..k).map(|b| 1u32 << b).collect(),
            Expansion::Saturated => (1u32..(1u32 << k)).collect(),
        };
        let binary_names = masks
            .iter()
            .map(|&m| {
                (0..k)
                    .filter(|b| m >> b & 1 == 1)
                    .map(|b| binary[b].0)
                    .collect::<Vec<_>>()
                    .join(":")
            })
            .collect();
        let cont = continuous
            .iter()
            .map(|(_, c)| {
                assert_eq!(c.len(), n, "ragged continuous column");
                c.to_vec()
            })
            .collect();
        Ok(Self {
            n,
            k,
            pattern,
            masks,
            binary_names,
            cont,
            cont_names: continuous.iter().map(|(n, _)| n.to_string()).collect(),
        })
    }

    /// Total number of coefficient columns (excluding the intercept).
    pub fn p(&self) -> usize {
        self.masks.len() + self.cont.len()
    }

    /// Number of distinct base patterns possible.
    pub fn n_patterns(&self) -> usize {
        1 << self.k
    }

    /// Whether expanded column `j` is active for base pattern `pat`.
    #[inline]
    pub fn mask_active(mask: u32, pat: u32) -> bool {
        pat & mask == mask
    }
}
