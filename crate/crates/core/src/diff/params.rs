use std::ops::Range;

use crate::error::{Error, Result};

/// Flat parameter storage with named, disjoint, contiguous slices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterVector {
    values: Vec<f64>,
    slices: Vec<(String, Range<usize>)>,
}

impl ParameterVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a named block. Names must be unique.
    pub fn push(&mut self, name: &str, values: &[f64]) -> Result<Range<usize>> {
        if self.slices.iter().any(|(n, _)| n == name) {
            return Err(Error::invalid(format!("duplicate parameter block `{name}`")));
        }
        let start = self.values.len();
        self.values.extend_from_slice(values);
        let range = start..self.values.len();
        self.slices.push((name.to_string(), range.clone()));
        Ok(range)
    }

    pub fn with(mut self, name: &str, values: &[f64]) -> Result<Self> {
        self.push(name, values)?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn range(&self, name: &str) -> Option<Range<usize>> {
        self.slices.iter().find(|(n, _)| n == name).map(|(_, r)| r.clone())
    }

    pub fn slice(&self, name: &str) -> Option<&[f64]> {
        self.range(name).map(|r| &self.values[r])
    }

    pub fn slice_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let r = self.range(name)?;
        Some(&mut self.values[r])
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slices.iter().map(|(n, _)| n.as_str())
    }
}
