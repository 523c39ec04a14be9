//! Flat, named parameter storage shared by every learned component.

use crate::error::{AmiError, Result};

/// One named tensor of parameters, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl ParamBlock {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// An ordered collection of uniquely named parameter blocks.
///
/// Gradients and optimizer moments use the same layout as the parameters
/// they belong to (see [`ParameterSet::zeros_like`]).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet {
    blocks: Vec<ParamBlock>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a block and returns its index.
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<usize> {
        let name = name.into();
        if self.index_of(&name).is_some() {
            return Err(AmiError::Config(format!("duplicate parameter block `{name}`")));
        }
        let numel: usize = shape.iter().product();
        if numel != values.len() {
            return Err(AmiError::Dimension(format!(
                "block `{name}`: shape {shape:?} holds {numel} values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AmiError::NonFinite { block: name });
        }
        self.blocks.push(ParamBlock { name, shape, values });
        Ok(self.blocks.len() - 1)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.blocks.iter().position(|b| b.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn block(&self, idx: usize) -> &ParamBlock {
        &self.blocks[idx]
    }

    pub fn block_mut(&mut self, idx: usize) -> &mut ParamBlock {
        &mut self.blocks[idx]
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [ParamBlock] {
        &mut self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.blocks.iter().map(|b| b.values.len()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            blocks: self
                .blocks
                .iter()
                .map(|b| ParamBlock {
                    name: b.name.clone(),
                    shape: b.shape.clone(),
                    values: vec![0.0; b.values.len()],
                })
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for b in &mut self.blocks {
            b.values.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    /// True when both sets have identical names and shapes in the same order.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.blocks.len() == other.blocks.len()
            && self
                .blocks
                .iter()
                .zip(&other.blocks)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    pub fn ensure_layout(&self, other: &Self) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(AmiError::Dimension("parameter layouts differ".into()))
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.blocks
            .iter()
            .flat_map(|b| b.values.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for b in &mut self.blocks {
            b.values.iter_mut().for_each(|v| *v *= factor);
        }
    }

    /// `self += factor * other`; layouts must match.
    pub fn add_scaled(&mut self, other: &Self, factor: f64) -> Result<()> {
        self.ensure_layout(other)?;
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            for (x, y) in a.values.iter_mut().zip(&b.values) {
                *x += factor * y;
            }
        }
        Ok(())
    }

    /// Returns the first block holding a NaN or infinity.
    pub fn check_finite(&self) -> Result<()> {
        match self.blocks.iter().find(|b| b.values.iter().any(|v| !v.is_finite())) {
            Some(b) => Err(AmiError::NonFinite { block: b.name.clone() }),
            None => Ok(()),
        }
    }

    /// Order-sensitive FNV-1a hash over names, shapes and value bits.
    pub fn checksum(&self) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &byte in bytes {
                h ^= byte as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        for b in &self.blocks {
            eat(b.name.as_bytes());
            for d in &b.shape {
                eat(&(*d as u64).to_le_bytes());
            }
            for v in &b.values {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        h
    }

    /// Concatenates another set into this one, rejecting name collisions.
    pub fn extend(&mut self, other: ParameterSet) -> Result<()> {
        for b in other.blocks {
            self.push(b.name, b.shape, b.values)?;
        }
        Ok(())
    }

    /// Blocks whose name starts with `prefix`, as a new set.
    pub fn filter_prefix(&self, prefix: &str) -> ParameterSet {
        ParameterSet {
            blocks: self.blocks.iter().filter(|b| b.name.starts_with(prefix)).cloned().collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_bad_shapes() {
        let mut p = ParameterSet::new();
        p.push("a", vec![2, 2], vec![0.0; 4]).unwrap();
        assert!(matches!(p.push("a", vec![1], vec![0.0]), Err(AmiError::Config(_))));
        assert!(matches!(p.push("b", vec![3], vec![0.0; 2]), Err(AmiError::Dimension(_))));
        assert!(matches!(p.push("c", vec![1], vec![f64::NAN]), Err(AmiError::NonFinite { .. })));
        assert_eq!(p.numel(), 4);
    }

    #[test]
    fn checksum_tracks_values() {
        let mut p = ParameterSet::new();
        p.push("w", vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let before = p.checksum();
        assert_eq!(before, p.clone().checksum());
        p.block_mut(0).values[1] = 2.000_000_1;
        assert_ne!(before, p.checksum());
    }

    #[test]
    fn check_finite_names_block() {
        let mut p = ParameterSet::new();
        p.push("ok", vec![1], vec![1.0]).unwrap();
        p.push("bad", vec![1], vec![1.0]).unwrap();
        p.block_mut(1).values[0] = f64::INFINITY;
        match p.check_finite() {
            Err(AmiError::NonFinite { block }) => assert_eq!(block, "bad"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
