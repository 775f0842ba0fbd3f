use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use super::AutodiffError;

/// One named block inside a [`ParamVector`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat parameter storage with a named, contiguous segment layout.
///
/// Segments are laid out back to back in insertion order, so offsets never
/// overlap and the flat view is exactly the concatenation of all segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<NamedBlock>", into = "Vec<NamedBlock>")]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Vec<Segment>,
}

impl ParamVector {
    pub fn new() -> Self {
        ParamVector { values: Vec::new(), layout: Vec::new() }
    }

    /// Builds a vector from `(name, tensor)` pairs.
    pub fn from_segments<'a, I>(segments: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, Tensor)>,
    {
        let mut pv = ParamVector::new();
        for (name, t) in segments {
            pv.push(name, t);
        }
        pv
    }

    pub fn push(&mut self, name: &str, t: Tensor) {
        let offset = self.values.len();
        self.layout.push(Segment { name: name.to_string(), rows: t.rows, cols: t.cols, offset });
        self.values.extend_from_slice(&t.data);
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

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.layout.iter().find(|s| s.name == name)
    }

    pub fn segment_values(&self, name: &str) -> Option<&[f64]> {
        self.segment(name).map(|s| &self.values[s.range()])
    }

    /// Copies every segment out as a standalone tensor.
    pub fn unflatten(&self) -> Vec<(String, Tensor)> {
        self.layout
            .iter()
            .map(|s| (s.name.clone(), Tensor::new(s.rows, s.cols, self.values[s.range()].to_vec())))
            .collect()
    }

    pub fn tensor(&self, index: usize) -> Tensor {
        let s = &self.layout[index];
        Tensor::new(s.rows, s.cols, self.values[s.range()].to_vec())
    }

    /// Same layout, new flat values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self, AutodiffError> {
        if values.len() != self.values.len() {
            return Err(AutodiffError::Layout(format!(
                "expected {} values, got {}",
                self.values.len(),
                values.len()
            )));
        }
        Ok(ParamVector { values, layout: self.layout.clone() })
    }

    pub fn zeros_like(&self) -> Self {
        ParamVector { values: vec![0.0; self.values.len()], layout: self.layout.clone() }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Checks that segments tile `0..len` without gaps or overlap.
    pub fn layout_is_contiguous(&self) -> bool {
        let mut next = 0;
        for s in &self.layout {
            if s.offset != next {
                return false;
            }
            next += s.len();
        }
        next == self.values.len()
    }
}

/// On-disk form: one named array per segment.
#[derive(Serialize, Deserialize)]
struct NamedBlock {
    name: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl From<Vec<NamedBlock>> for ParamVector {
    fn from(blocks: Vec<NamedBlock>) -> Self {
        let mut pv = ParamVector::new();
        for b in blocks {
            let offset = pv.values.len();
            pv.layout.push(Segment { name: b.name, rows: b.rows, cols: b.cols, offset });
            pv.values.extend(b.values);
        }
        pv
    }
}

impl From<ParamVector> for Vec<NamedBlock> {
    fn from(pv: ParamVector) -> Self {
        pv.layout
            .iter()
            .map(|s| NamedBlock { name: s.name.clone(), rows: s.rows, cols: s.cols, values: pv.values[s.range()].to_vec() })
            .collect()
    }
}

impl Default for ParamVector {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn flatten_unflatten_roundtrip(shapes in proptest::collection::vec((1usize..5, 1usize..5), 1..5), seed in 0u64..1000) {
            let mut pv = ParamVector::new();
            let mut x = seed as f64;
            for (i, (r, c)) in shapes.iter().enumerate() {
                let data: Vec<f64> = (0..r * c).map(|_| { x = (x * 1.37 + 0.11) % 7.0; x }).collect();
                pv.push(&format!("s{i}"), Tensor::new(*r, *c, data));
            }
            prop_assert!(pv.layout_is_contiguous());
            let rebuilt = ParamVector::from_segments(
                pv.unflatten().iter().map(|(n, t)| (n.as_str(), t.clone())).collect::<Vec<_>>(),
            );
            prop_assert_eq!(rebuilt, pv);
        }
    }
}
