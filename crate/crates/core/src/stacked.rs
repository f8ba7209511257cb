use crate::error::{Error, Result};
use crate::signals::{self, ReferenceSignal};

/// One `r`-vector per agent, stored contiguously agent-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentVectors {
    r: usize,
    data: Vec<f64>,
}

impl AgentVectors {
    pub fn zeros(n: usize, r: usize) -> Self {
        Self {
            r,
            data: vec![0.0; n * r],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.first().map_or(0, Vec::len);
        if r == 0 || rows.iter().any(|v| v.len() != r) {
            return Err(Error::Dimension(
                "agent vectors must be non-empty and share one dimension".into(),
            ));
        }
        Ok(Self {
            r,
            data: rows.concat(),
        })
    }

    /// Stacks `phi_i(t)` for every agent.
    pub fn from_signals(signals: &[ReferenceSignal], t: f64) -> Result<Self> {
        let rows: Vec<Vec<f64>> = signals.iter().map(|s| signals::evaluate(s, t)).collect();
        Self::from_rows(&rows)
    }

    pub fn agent_count(&self) -> usize {
        self.data.len().checked_div(self.r).unwrap_or(0)
    }

    pub fn dimension(&self) -> usize {
        self.r
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.data[i * self.r..(i + 1) * self.r]
    }

    pub fn agent_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.r..(i + 1) * self.r]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.r == other.r && self.data.len() == other.data.len()
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(Error::Dimension(format!(
                "{} agents x {} channels vs {} agents x {} channels",
                self.agent_count(),
                self.r,
                other.agent_count(),
                other.r
            )));
        }
        Ok(Self {
            r: self.r,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        })
    }

    /// Componentwise sum over the listed agents.
    pub fn sum_over(&self, members: impl IntoIterator<Item = usize>) -> Vec<f64> {
        let mut out = vec![0.0; self.r];
        for i in members {
            for (o, v) in out.iter_mut().zip(self.agent(i)) {
                *o += v;
            }
        }
        out
    }

    pub fn sum(&self) -> Vec<f64> {
        self.sum_over(0..self.agent_count())
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}
