//! JSON field snapshots; complex matrices are nested `[re, im]` arrays.

use crate::error::{Error, Result};
use crate::latticeymh::{GaugeFieldA, LatticeSpec, ScalarMultipletB};
use crate::liealg::LieData;
use crate::linalg::{self, CMat};
use crate::ncgauge::MatrixConnection;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub type MatrixJson = Vec<Vec<[f64; 2]>>;

fn to_json(t: &[Vec<CMat>]) -> Vec<Vec<MatrixJson>> {
    t.iter().map(|s| s.iter().map(linalg::to_pairs).collect()).collect()
}

fn from_json(t: &[Vec<MatrixJson>]) -> Result<Vec<Vec<CMat>>> {
    t.iter()
        .map(|s| {
            s.iter()
                .map(|m| linalg::from_pairs(m).ok_or_else(|| Error::InvalidArgument("ragged matrix in snapshot".into())))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSnapshot {
    pub extents: Vec<usize>,
    pub spacing: f64,
    pub n: usize,
    /// `a[site][μ]`, sites ordered with the last axis fastest.
    pub a: Vec<Vec<MatrixJson>>,
    /// `b[site][k]`.
    pub b: Vec<Vec<MatrixJson>>,
}

impl LatticeSnapshot {
    pub fn from_fields(a: &GaugeFieldA, b: &ScalarMultipletB) -> Self {
        LatticeSnapshot {
            extents: a.lattice.extents.clone(),
            spacing: a.lattice.h,
            n: a.n,
            a: to_json(&a.a),
            b: to_json(&b.b),
        }
    }

    pub fn to_fields(&self) -> Result<(GaugeFieldA, ScalarMultipletB)> {
        let lat = LatticeSpec::new(self.extents.clone(), self.spacing)?;
        Ok((
            GaugeFieldA::new(lat.clone(), self.n, from_json(&self.a)?)?,
            ScalarMultipletB::new(lat, self.n, from_json(&self.b)?)?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixModelSnapshot {
    pub n: usize,
    /// `A_k`, one matrix per basis element of `su(n)`.
    pub a: Vec<MatrixJson>,
}

impl MatrixModelSnapshot {
    pub fn from_connection(conn: &MatrixConnection) -> Self {
        MatrixModelSnapshot { n: conn.lie.n, a: conn.a.iter().map(linalg::to_pairs).collect() }
    }

    pub fn to_connection(&self, lie: &Arc<LieData>) -> Result<MatrixConnection> {
        if lie.n != self.n {
            return Err(Error::IncompatibleAlgebras);
        }
        let a = self
            .a
            .iter()
            .map(|m| linalg::from_pairs(m).ok_or_else(|| Error::InvalidArgument("ragged matrix in snapshot".into())))
            .collect::<Result<Vec<_>>>()?;
        MatrixConnection::new(lie, a)
    }
}
