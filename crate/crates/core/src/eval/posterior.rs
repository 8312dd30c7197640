//! Marginals of `p̂(h | S = 1, c) ∝ r̂(c | S = 1, h) r̂(S = 1 | h) p(h)` by Monte Carlo.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::HandPrior;
use crate::error::{Error, Result};
use crate::hand::{GraspType, HandConfig};
use crate::persist::{write_atomic, write_json_atomic};
use crate::ratio::HandRatio;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PosteriorGrid {
    /// Cells per axis of the position grid.
    pub cells: [usize; 3],
    /// Grid bounds; the prior box when absent.
    pub low: Option<[f64; 3]>,
    pub high: Option<[f64; 3]>,
    /// Prior samples of `(q, g)` averaged at every grid position.
    pub position_mc: usize,
    /// Rotation samples drawn from the prior and reweighted.
    pub rotations: usize,
    /// Prior samples of `(x, g)` averaged for each rotation, and of `(x, q)` for each grasp type.
    pub marginal_mc: usize,
}

impl Default for PosteriorGrid {
    fn default() -> Self {
        Self { cells: [16, 16, 12], low: None, high: None, position_mc: 128, rotations: 2000, marginal_mc: 128 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionDensity {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotationDensity {
    pub w: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorExport {
    pub cells: [usize; 3],
    pub low: [f64; 3],
    pub high: [f64; 3],
    /// Cell centers in x-major order with densities integrating to 1 over the grid.
    pub positions: Vec<PositionDensity>,
    /// Prior rotation samples with the posterior density `p(q) E[r | q] / E[r]`.
    pub rotations: Vec<RotationDensity>,
    /// `p(g | ·)` in `basic, wide, pinch` order.
    pub grasp: [f64; 3],
}

impl PosteriorExport {
    /// Probability mass of the grid cells in z-layer `k`.
    pub fn layer_mass(&self, k: usize) -> f64 {
        let [nx, ny, _] = self.cells;
        let v = self.cell_volume();
        self.positions[k * nx * ny..(k + 1) * nx * ny].iter().map(|p| p.density * v).sum()
    }

    pub fn cell_volume(&self) -> f64 {
        (0..3).map(|i| (self.high[i] - self.low[i]) / self.cells[i] as f64).product()
    }
}

/// `r̂(S=1|h) r̂(c|S=1,h)` for many configurations, evaluated in one batch.
fn joint_ratio(
    success: &dyn HandRatio,
    conditioning: Option<&dyn HandRatio>,
    hands: &[HandConfig],
) -> Result<Vec<f64>> {
    let mut l = success.log_ratio_batch(hands)?;
    if let Some(c) = conditioning {
        for (a, b) in l.iter_mut().zip(c.log_ratio_batch(hands)?) {
            *a += b;
        }
    }
    l.into_iter()
        .map(|v| if v.is_finite() { Ok(v.exp()) } else { Err(Error::NonFinite(format!("log-ratio {v}"))) })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Evaluates the posterior marginals of position, rotation and grasp type.
/// Every Monte Carlo average uses one shared set of prior samples, so the
/// marginals differ only through the ratios.
pub fn export_posterior<R: Rng + ?Sized>(
    success: &dyn HandRatio,
    conditioning: Option<&dyn HandRatio>,
    prior: &HandPrior,
    grid: &PosteriorGrid,
    rng: &mut R,
) -> Result<PosteriorExport> {
    let low = grid.low.unwrap_or(prior.x_low);
    let high = grid.high.unwrap_or(prior.x_high);
    for i in 0..3 {
        if !(low[i] < high[i]) || low[i] < prior.x_low[i] || high[i] > prior.x_high[i] {
            return Err(Error::Invalid(format!(
                "posterior grid axis {i} [{}, {}] leaves the prior box",
                low[i], high[i]
            )));
        }
    }
    if grid.cells.contains(&0) || grid.position_mc == 0 || grid.rotations == 0 || grid.marginal_mc == 0 {
        return Err(Error::Invalid("posterior grid sizes must be positive".into()));
    }

    // (a) positions: p(x | ·) ∝ p(x) E_{q,g}[r(x, q, g)].
    let qg: Vec<(crate::UnitQuaternion, GraspType)> =
        (0..grid.position_mc).map(|_| (prior.rotation.sample(rng), prior.sample_grasp(rng))).collect();
    let [nx, ny, nz] = grid.cells;
    let step: Vec<f64> = (0..3).map(|i| (high[i] - low[i]) / grid.cells[i] as f64).collect();
    let mut positions = Vec::with_capacity(nx * ny * nz);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let x = Vector3::new(
                    low[0] + (i as f64 + 0.5) * step[0],
                    low[1] + (j as f64 + 0.5) * step[1],
                    low[2] + (k as f64 + 0.5) * step[2],
                );
                let hands: Vec<HandConfig> = qg.iter().map(|&(q, g)| HandConfig::new(x, q, g)).collect();
                let w = mean(&joint_ratio(success, conditioning, &hands)?);
                positions.push(PositionDensity { x: x.x, y: x.y, z: x.z, density: w });
            }
        }
    }
    let cell = step.iter().product::<f64>();
    let total: f64 = positions.iter().map(|p| p.density).sum::<f64>() * cell;
    if !(total > 0.0) {
        return Err(Error::NonFinite("posterior position mass vanished".into()));
    }
    positions.iter_mut().for_each(|p| p.density /= total);

    // (b) rotations: prior samples reweighted by E_{x,g}[r(x, q, g)].
    let xg: Vec<(Vector3<f64>, GraspType)> =
        (0..grid.marginal_mc).map(|_| (prior.sample_position(rng), prior.sample_grasp(rng))).collect();
    let qs: Vec<crate::UnitQuaternion> = (0..grid.rotations).map(|_| prior.rotation.sample(rng)).collect();
    let mut weights = Vec::with_capacity(qs.len());
    for q in &qs {
        let hands: Vec<HandConfig> = xg.iter().map(|&(x, g)| HandConfig::new(x, *q, g)).collect();
        weights.push(mean(&joint_ratio(success, conditioning, &hands)?));
    }
    let wmean = mean(&weights);
    if !(wmean > 0.0) {
        return Err(Error::NonFinite("posterior rotation mass vanished".into()));
    }
    let rotations = qs
        .iter()
        .zip(&weights)
        .map(|(q, w)| RotationDensity {
            w: q.w,
            x: q.x,
            y: q.y,
            z: q.z,
            density: prior.rotation.log_prob(q).exp() * w / wmean,
        })
        .collect();

    // (c) grasp types: p(g | ·) ∝ p(g) E_{x,q}[r(x, q, g)].
    let xq: Vec<(Vector3<f64>, crate::UnitQuaternion)> =
        (0..grid.marginal_mc).map(|_| (prior.sample_position(rng), prior.rotation.sample(rng))).collect();
    let mut grasp = [0.0; 3];
    for g in GraspType::ALL {
        let hands: Vec<HandConfig> = xq.iter().map(|&(x, q)| HandConfig::new(x, q, g)).collect();
        grasp[g.index()] = prior.grasp_probs[g.index()] * mean(&joint_ratio(success, conditioning, &hands)?);
    }
    let gsum: f64 = grasp.iter().sum();
    if !(gsum > 0.0) {
        return Err(Error::NonFinite("posterior grasp mass vanished".into()));
    }
    grasp.iter_mut().for_each(|p| *p /= gsum);

    Ok(PosteriorExport { cells: grid.cells, low, high, positions, rotations, grasp })
}

/// Writes `positions.csv`, `rotations.csv`, `grasp.csv` and `posterior.json` into `dir`.
pub fn write_posterior(dir: &Path, export: &PosteriorExport, meta: &serde_json::Value) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut s = String::from("x,y,z,density\n");
    for p in &export.positions {
        writeln!(s, "{},{},{},{}", p.x, p.y, p.z, p.density).expect("string write");
    }
    write_atomic(&dir.join("positions.csv"), s.as_bytes())?;
    let mut s = String::from("w,x,y,z,density\n");
    for r in &export.rotations {
        writeln!(s, "{},{},{},{},{}", r.w, r.x, r.y, r.z, r.density).expect("string write");
    }
    write_atomic(&dir.join("rotations.csv"), s.as_bytes())?;
    let mut s = String::from("type,prob\n");
    for g in GraspType::ALL {
        writeln!(s, "{},{}", g.name(), export.grasp[g.index()]).expect("string write");
    }
    write_atomic(&dir.join("grasp.csv"), s.as_bytes())?;
    let summary = serde_json::json!({
        "meta": meta,
        "cells": export.cells,
        "low": export.low,
        "high": export.high,
        "grasp": { "basic": export.grasp[0], "wide": export.grasp[1], "pinch": export.grasp[2] },
        "layer_mass": (0..export.cells[2]).map(|k| export.layer_mass(k)).collect::<Vec<_>>(),
    });
    write_json_atomic(&dir.join("posterior.json"), &summary)
}
