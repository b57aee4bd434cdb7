use crate::error::{Error, Result};
use crate::Matrix;

/// Ordered collection of uniquely named parameter matrices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamRegistry {
    entries: Vec<(String, Matrix)>,
}

impl ParamRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Matrix) -> Result<()> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(Error::contract(format!("duplicate parameter name `{name}`")));
        }
        self.entries.push((name, value));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        self.entries.iter_mut().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    /// Looks up `name`, failing if absent or shaped differently from `shape`.
    pub fn expect(&self, name: &str, shape: (usize, usize)) -> Result<&Matrix> {
        let m = self
            .get(name)
            .ok_or_else(|| Error::contract(format!("missing parameter `{name}`")))?;
        if m.shape() != shape {
            return Err(Error::Shape {
                op: "ParamRegistry::expect",
                left: shape,
                right: m.shape(),
            });
        }
        Ok(m)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.entries.iter().map(|(n, m)| (n.as_str(), m))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Matrix)> {
        self.entries.iter_mut().map(|(n, m)| (n.as_str(), m))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, m)| m.rows() * m.cols()).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(n, m)| (n.clone(), Matrix::zeros(m.rows(), m.cols())))
                .collect(),
        }
    }

    /// Checks that `other` holds the same names, in order, with equal shapes.
    pub fn check_layout(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::contract(format!(
                "registry has {} parameters, expected {}",
                other.len(),
                self.len()
            )));
        }
        for ((n1, m1), (n2, m2)) in self.entries.iter().zip(&other.entries) {
            if n1 != n2 {
                return Err(Error::contract(format!("parameter `{n2}` where `{n1}` was expected")));
            }
            if m1.shape() != m2.shape() {
                return Err(Error::Shape {
                    op: "registry layout",
                    left: m1.shape(),
                    right: m2.shape(),
                });
            }
        }
        Ok(())
    }

    /// `self += s · other`, entry by entry.
    pub fn add_scaled(&mut self, other: &Self, s: f64) -> Result<()> {
        self.check_layout(other)?;
        for ((_, a), (_, b)) in self.entries.iter_mut().zip(&other.entries) {
            a.add_scaled(b, s)?;
        }
        Ok(())
    }
}
