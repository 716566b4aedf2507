//! Blind two-stain basis estimation with a deterministic K-SVD variant.
//!
//! Each iteration alternates a nonnegative coding step (per-pixel NNLS
//! against the current basis) with a dictionary step that refits one stain
//! at a time as the leading singular vector of its residual, restricted to
//! the pixels that use it. A refit atom is projected onto the nonnegative
//! orthant and renormalized; the refit is kept only if it does not increase
//! the residual on its support, so the objective never goes up.

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::deconv::{angle_deg, StainMatrix, DAB, HEX, MIN_STAIN_ANGLE_DEG};
use crate::error::{Error, Result};
use crate::nnls::{dot, Nnls};

/// Pixels with `||od||₂` at or below this carry no stain direction.
pub const FOREGROUND_OD: f64 = 0.05;

/// Minimum foreground pixel count for estimation.
pub const MIN_FOREGROUND: usize = 100;

pub const DEFAULT_MAX_ITERS: usize = 50;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsvdOptions {
    pub max_iters: usize,
    /// Stop when the relative objective decrease falls below this.
    pub tol: f64,
}

impl Default for KsvdOptions {
    fn default() -> Self {
        Self { max_iters: DEFAULT_MAX_ITERS, tol: DEFAULT_TOL }
    }
}

#[derive(Debug, Clone)]
pub struct StainEstimate {
    pub stains: StainMatrix,
    /// `||Y - MᵀC||_F` after the initial coding step, then after every
    /// completed iteration.
    pub objectives: Vec<f64>,
    pub iterations: usize,
    pub foreground_pixels: usize,
}

/// Keeps only pixels with `||od||₂ > FOREGROUND_OD`, in input order.
pub fn foreground(od_sample: &[[f64; 3]]) -> Vec<[f64; 3]> {
    od_sample.iter().filter(|p| dot(p, p).sqrt() > FOREGROUND_OD).copied().collect()
}

/// Estimates `[HEX, DAB]` stain vectors from OD pixels. `init` may carry 2 or
/// 3 vectors; only its HEX and DAB rows seed the search.
pub fn estimate_stain_matrix(
    od_sample: &[[f64; 3]],
    init: &StainMatrix,
    options: KsvdOptions,
) -> Result<StainEstimate> {
    let data = foreground(od_sample);
    if data.len() < MIN_FOREGROUND {
        return Err(Error::DegenerateData { foreground: data.len(), required: MIN_FOREGROUND });
    }
    if !(options.tol.is_finite() && options.tol >= 0.0) {
        return Err(Error::InvalidConfig(format!("tol must be >= 0, got {}", options.tol)));
    }

    let labels = [HEX, DAB];
    let mut atoms = [init.hematoxylin(), init.dab()];
    let mut codes = code(&data, &atoms);
    let mut objectives = vec![objective(&data, &atoms, &codes)];
    let mut iterations = 0;

    while iterations < options.max_iters {
        if iterations > 0 {
            codes = code(&data, &atoms);
        }
        for (k, &label) in labels.iter().enumerate() {
            update_atom(&data, &mut atoms, &mut codes, k, label)?;
        }
        iterations += 1;

        let current = objective(&data, &atoms, &codes);
        let previous = *objectives.last().expect("seeded with initial objective");
        objectives.push(current);
        if previous <= f64::EPSILON || (previous - current) / previous < options.tol {
            break;
        }
    }

    let stains = StainMatrix::hd(atoms[0], atoms[1])?;
    Ok(StainEstimate { stains, objectives, iterations, foreground_pixels: data.len() })
}

/// NNLS coding of every pixel, results in input order.
fn code(data: &[[f64; 3]], atoms: &[[f64; 3]; 2]) -> Vec<[f64; 2]> {
    let solver = Nnls::new(atoms);
    data.par_iter()
        .map(|y| {
            let c = solver.solve(y);
            [c[0], c[1]]
        })
        .collect()
}

/// Frobenius norm of the coding residual.
pub fn objective(data: &[[f64; 3]], atoms: &[[f64; 3]; 2], codes: &[[f64; 2]]) -> f64 {
    data.iter()
        .zip(codes)
        .map(|(y, c)| {
            let r: [f64; 3] = std::array::from_fn(|i| y[i] - atoms[0][i] * c[0] - atoms[1][i] * c[1]);
            dot(&r, &r)
        })
        .sum::<f64>()
        .sqrt()
}

fn update_atom(
    data: &[[f64; 3]],
    atoms: &mut [[f64; 3]; 2],
    codes: &mut [[f64; 2]],
    k: usize,
    label: &str,
) -> Result<()> {
    let other = 1 - k;
    let support: Vec<usize> = (0..data.len()).filter(|&p| codes[p][k] > 0.0).collect();
    if support.is_empty() {
        return Err(Error::CollapsedAtom { stain: label.to_string() });
    }

    let residuals: Vec<[f64; 3]> =
        support.iter().map(|&p| std::array::from_fn(|i| data[p][i] - atoms[other][i] * codes[p][other])).collect();

    let mut scatter = Matrix3::<f64>::zeros();
    for e in &residuals {
        for i in 0..3 {
            for j in 0..3 {
                scatter[(i, j)] += e[i] * e[j];
            }
        }
    }
    let eigen = SymmetricEigen::new(scatter);
    let lead = eigen.eigenvalues.imax();
    let mut atom: [f64; 3] = std::array::from_fn(|i| eigen.eigenvectors[(i, lead)]);
    if atom.iter().sum::<f64>() < 0.0 {
        atom = atom.map(|v| -v);
    }
    atom = atom.map(|v| v.max(0.0));
    let norm = dot(&atom, &atom).sqrt();
    if norm <= 1e-12 {
        return Ok(());
    }
    atom = atom.map(|v| v / norm);
    if angle_deg(&atom, &atoms[other]) < MIN_STAIN_ANGLE_DEG {
        return Ok(());
    }

    let old = atoms[k];
    let mut old_err = 0.0;
    let mut new_err = 0.0;
    let mut new_codes = Vec::with_capacity(support.len());
    for (e, &p) in residuals.iter().zip(&support) {
        let c_old = codes[p][k];
        let c_new = dot(&atom, e).max(0.0);
        old_err += sq_dist(e, &old, c_old);
        new_err += sq_dist(e, &atom, c_new);
        new_codes.push(c_new);
    }
    if new_err <= old_err {
        atoms[k] = atom;
        for (&p, c) in support.iter().zip(new_codes) {
            codes[p][k] = c;
        }
    }
    Ok(())
}

fn sq_dist(e: &[f64; 3], atom: &[f64; 3], c: f64) -> f64 {
    (0..3).map(|i| (e[i] - atom[i] * c).powi(2)).sum()
}
