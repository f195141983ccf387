//! Flat, segment-addressed parameter storage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// A flat `f64` vector with an ordered table of named segments.
///
/// Gradients are returned as a `ParamVector` sharing the layout of the
/// parameters they were taken against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Vec<Segment>,
}

impl ParamVector {
    /// Zero-filled vector with the given `(name, len)` segments in order.
    pub fn zeros<S: AsRef<str>>(segments: &[(S, usize)]) -> Result<Self> {
        let mut layout = Vec::with_capacity(segments.len());
        let mut offset = 0;
        for (name, len) in segments {
            let name = name.as_ref();
            if layout.iter().any(|s: &Segment| s.name == name) {
                return Err(Error::Config(format!("duplicate segment `{name}`")));
            }
            layout.push(Segment {
                name: name.to_string(),
                offset,
                len: *len,
            });
            offset += len;
        }
        Ok(Self {
            values: vec![0.0; offset],
            layout,
        })
    }

    pub fn from_parts(values: Vec<f64>, layout: Vec<Segment>) -> Result<Self> {
        let mut expected = 0;
        for (i, seg) in layout.iter().enumerate() {
            if seg.offset != expected {
                return Err(Error::Config(format!(
                    "segment `{}` starts at {} but previous segments end at {expected}",
                    seg.name, seg.offset
                )));
            }
            if layout[..i].iter().any(|s| s.name == seg.name) {
                return Err(Error::Config(format!("duplicate segment `{}`", seg.name)));
            }
            expected += seg.len;
        }
        if expected != values.len() {
            return Err(Error::Config(format!(
                "layout covers {expected} values but {} were supplied",
                values.len()
            )));
        }
        Ok(Self { values, layout })
    }

    /// Concatenate two vectors; segment names must stay unique.
    pub fn concat(&self, other: &ParamVector) -> Result<Self> {
        let base = self.values.len();
        let mut layout = self.layout.clone();
        layout.extend(other.layout.iter().map(|s| Segment {
            name: s.name.clone(),
            offset: s.offset + base,
            len: s.len,
        }));
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Self::from_parts(values, layout)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            values: vec![0.0; self.values.len()],
            layout: self.layout.clone(),
        }
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

    pub fn layout(&self) -> &[Segment] {
        &self.layout
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        self.layout == other.layout
    }

    pub fn find(&self, name: &str) -> Option<&Segment> {
        self.layout.iter().find(|s| s.name == name)
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.find(name)
            .map(|s| &self.values[s.offset..s.offset + s.len])
    }

    pub fn segment_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let seg = self.find(name)?.clone();
        Some(&mut self.values[seg.offset..seg.offset + seg.len])
    }

    /// Name of the segment owning flat index `i`.
    pub fn segment_of(&self, i: usize) -> Option<&str> {
        self.layout
            .iter()
            .find(|s| i >= s.offset && i < s.offset + s.len)
            .map(|s| s.name.as_str())
    }

    /// First segment holding a non-finite value, if any.
    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => Err(Error::numerical(self.segment_of(i).unwrap_or("<unlabelled>"))),
        }
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn scale(&mut self, k: f64) {
        self.values.iter_mut().for_each(|v| *v *= k);
    }

    pub fn add_assign(&mut self, other: &ParamVector) {
        debug_assert!(self.same_layout(other));
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_contiguous() {
        let p = ParamVector::zeros(&[("a", 3), ("b", 0), ("c", 2)]).unwrap();
        assert_eq!(p.len(), 5);
        assert_eq!(p.find("c").unwrap().offset, 3);
        assert_eq!(p.segment_of(4), Some("c"));
        assert_eq!(p.segment("b").unwrap().len(), 0);
    }

    #[test]
    fn duplicate_names_rejected() {
        assert!(ParamVector::zeros(&[("a", 1), ("a", 2)]).is_err());
        let a = ParamVector::zeros(&[("a", 1)]).unwrap();
        assert!(a.concat(&a).is_err());
    }

    #[test]
    fn from_parts_checks_length() {
        let p = ParamVector::zeros(&[("a", 2)]).unwrap();
        assert!(ParamVector::from_parts(vec![1.0], p.layout().to_vec()).is_err());
        assert!(ParamVector::from_parts(vec![1.0, 2.0], p.layout().to_vec()).is_ok());
    }

    #[test]
    fn non_finite_reports_segment() {
        let mut p = ParamVector::zeros(&[("w", 2), ("b", 2)]).unwrap();
        p.segment_mut("b").unwrap()[1] = f64::NAN;
        match p.check_finite() {
            Err(Error::Numerical { segment }) => assert_eq!(segment, "b"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
