//! Observed trial data: one outcome, one receipt indicator, one assignment
//! indicator per unit, plus optional covariates, block labels, cluster
//! labels, and cluster weights.

use crate::error::{Error, Result};
use crate::numerics::DesignMatrix;

/// A validated rectangular dataset for estimation.
#[derive(Debug, Clone)]
pub struct Dataset {
    y: Vec<f64>,
    d: Vec<u8>,
    t: Vec<u8>,
    x: DesignMatrix,
    block: Option<Vec<String>>,
    cluster: Option<Vec<String>>,
    weight: Option<Vec<f64>>,
}

impl Dataset {
    /// Builds a dataset and checks the simple-design invariants: both arms
    /// nonempty, binary receipt/assignment, finite outcomes and covariates.
    pub fn new(y: Vec<f64>, d: Vec<u8>, t: Vec<u8>, x: DesignMatrix) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::Domain("dataset needs at least two rows".into()));
        }
        if d.len() != n || t.len() != n || x.rows() != n {
            return Err(Error::Domain("dataset columns must share a length".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("outcomes must be finite".into()));
        }
        if d.iter().chain(t.iter()).any(|&b| b > 1) {
            return Err(Error::Domain(
                "receipt and assignment must be 0 or 1".into(),
            ));
        }
        let n1: usize = t.iter().map(|&b| b as usize).sum();
        if n1 == 0 || n1 == n {
            return Err(Error::EmptyArm);
        }
        Ok(Self {
            y,
            d,
            t,
            x,
            block: None,
            cluster: None,
            weight: None,
        })
    }

    pub fn with_blocks(mut self, block: Vec<String>) -> Result<Self> {
        if block.len() != self.n() {
            return Err(Error::Domain("block labels must match n".into()));
        }
        self.block = Some(block);
        Ok(self)
    }

    pub fn with_clusters(mut self, cluster: Vec<String>) -> Result<Self> {
        if cluster.len() != self.n() {
            return Err(Error::Domain("cluster labels must match n".into()));
        }
        self.cluster = Some(cluster);
        Ok(self)
    }

    pub fn with_weights(mut self, weight: Vec<f64>) -> Result<Self> {
        if weight.len() != self.n() {
            return Err(Error::Domain("weights must match n".into()));
        }
        if !weight.iter().all(|&w| w.is_finite() && w > 0.0) {
            return Err(Error::Domain("weights must be positive and finite".into()));
        }
        self.weight = Some(weight);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Treated arm size.
    pub fn n_treated(&self) -> usize {
        self.t.iter().map(|&b| b as usize).sum()
    }

    pub fn n_control(&self) -> usize {
        self.n() - self.n_treated()
    }

    /// Number of covariate columns.
    pub fn v(&self) -> usize {
        self.x.cols()
    }

    pub fn outcome(&self) -> &[f64] {
        &self.y
    }

    pub fn receipt(&self) -> &[u8] {
        &self.d
    }

    pub fn assignment(&self) -> &[u8] {
        &self.t
    }

    pub fn covariates(&self) -> &DesignMatrix {
        &self.x
    }

    pub fn blocks(&self) -> Option<&[String]> {
        self.block.as_deref()
    }

    pub fn clusters(&self) -> Option<&[String]> {
        self.cluster.as_deref()
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weight.as_deref()
    }

    /// Receipt as floats, for use as a regression response.
    pub fn receipt_f64(&self) -> Vec<f64> {
        self.d.iter().map(|&b| b as f64).collect()
    }

    /// A dataset restricted to the given rows, preserving optional columns.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        let pick_f = |v: &[f64]| rows.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let pick_b = |v: &[u8]| rows.iter().map(|&i| v[i]).collect::<Vec<u8>>();
        let mut x = DesignMatrix::zeros(rows.len(), self.v());
        for (r, &i) in rows.iter().enumerate() {
            for j in 0..self.v() {
                x.set(r, j, self.x.get(i, j));
            }
        }
        let mut out = Dataset::new(pick_f(&self.y), pick_b(&self.d), pick_b(&self.t), x)?;
        if let Some(b) = &self.block {
            out = out.with_blocks(rows.iter().map(|&i| b[i].clone()).collect())?;
        }
        if let Some(c) = &self.cluster {
            out = out.with_clusters(rows.iter().map(|&i| c[i].clone()).collect())?;
        }
        if let Some(w) = &self.weight {
            out = out.with_weights(pick_f(w))?;
        }
        Ok(out)
    }
}
