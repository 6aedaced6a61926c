//! Time grids and labelled path sets.

use std::io::Write;
use std::sync::Arc;

use indexmap::IndexMap;

use crate::error::{Error, Result};

/// Discretisation of a time interval starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// Builds a grid from explicit times; the first entry must be exactly 0
    /// and the sequence strictly increasing.
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidParameter(
                "time grid needs at least two points".into(),
            ));
        }
        if times[0] != 0.0 {
            return Err(Error::InvalidParameter(
                "time grid must start at exactly 0".into(),
            ));
        }
        for w in times.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::InvalidParameter(
                    "time grid must be strictly increasing and finite".into(),
                ));
            }
        }
        Ok(Self { times })
    }

    /// Uniform grid on `[0, t_max]` with `n_steps` steps (`n_steps + 1` points).
    pub fn uniform(t_max: f64, n_steps: usize) -> Result<Self> {
        if !(t_max > 0.0) || n_steps == 0 {
            return Err(Error::InvalidParameter(
                "uniform grid needs t_max > 0 and n_steps >= 1".into(),
            ));
        }
        let dt = t_max / n_steps as f64;
        let mut times: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt).collect();
        // Pin the endpoint so t_max is represented exactly.
        times[n_steps] = t_max;
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of grid points (steps + 1).
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn t_max(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Largest step size on the grid.
    pub fn max_step(&self) -> f64 {
        self.times
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}

/// A single scalar sample path on a shared grid.
#[derive(Debug, Clone)]
pub struct Path {
    pub grid: Arc<TimeGrid>,
    pub values: Vec<f64>,
}

impl Path {
    pub fn new(grid: Arc<TimeGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "path has {} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }
}

/// Labelled sample paths of the traded vector on a shared grid, together
/// with the seed that produced them.
#[derive(Debug, Clone)]
pub struct PathSet {
    pub grid: Arc<TimeGrid>,
    pub components: IndexMap<String, Vec<f64>>,
    pub seed: u64,
    /// Diagnostic tags, e.g. "unspliced" when a splice trigger never fires.
    pub tags: Vec<String>,
    /// For spliced paths: grid index range `[start, end)` of the window where
    /// the replacement dynamics were active.
    pub splice_window: Option<(usize, usize)>,
}

impl PathSet {
    pub fn new(grid: Arc<TimeGrid>, seed: u64) -> Self {
        Self {
            grid,
            components: IndexMap::new(),
            seed,
            tags: Vec::new(),
            splice_window: None,
        }
    }

    pub fn insert(&mut self, label: &str, values: Vec<f64>) -> Result<()> {
        if values.len() != self.grid.len() {
            return Err(Error::GridMismatch(format!(
                "component {label} has {} values for a grid of {} points",
                values.len(),
                self.grid.len()
            )));
        }
        self.components.insert(label.to_string(), values);
        Ok(())
    }

    pub fn component(&self, label: &str) -> Result<&[f64]> {
        self.components
            .get(label)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Spec(format!("missing component label {label:?}")))
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.tags.iter().any(|t| t == tag)
    }

    /// Writes the path set as CSV: a time column followed by one column per
    /// component, in insertion order.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        write!(out, "time")?;
        for label in self.components.keys() {
            write!(out, ",{label}")?;
        }
        writeln!(out)?;
        for (k, t) in self.grid.times().iter().enumerate() {
            write!(out, "{t}")?;
            for values in self.components.values() {
                write!(out, ",{}", values[k])?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_zero_start_and_non_increasing() {
        assert!(TimeGrid::new(vec![0.1, 0.2]).is_err());
        assert!(TimeGrid::new(vec![0.0, 0.2, 0.2]).is_err());
        assert!(TimeGrid::new(vec![0.0]).is_err());
    }

    #[test]
    fn uniform_grid_hits_endpoint_exactly() {
        let g = TimeGrid::uniform(1.0, 3).unwrap();
        assert_eq!(g.t_max(), 1.0);
        assert_eq!(g.len(), 4);
        assert!((g.max_step() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn csv_has_time_then_components_in_insertion_order() {
        let grid = Arc::new(TimeGrid::uniform(1.0, 1).unwrap());
        let mut ps = PathSet::new(grid, 7);
        ps.insert("S", vec![1.0, 2.0]).unwrap();
        ps.insert("C", vec![3.0, 4.0]).unwrap();
        let mut buf = Vec::new();
        ps.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,S,C\n0,1,3\n1,2,4\n"));
    }

    #[test]
    fn mismatched_component_length_is_rejected() {
        let grid = Arc::new(TimeGrid::uniform(1.0, 2).unwrap());
        let mut ps = PathSet::new(grid, 0);
        assert!(ps.insert("S", vec![1.0, 2.0]).is_err());
    }
}
