use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{sorted_symmetric_eigen, sorted_symmetric_eigenvalues, spd_inverse};

/// Spectral-gap ratio used to pick the basis dimension.
pub const GAP_RATIO: f64 = 0.1;
/// Relative length of the plateau required when choosing `ε_diff`.
pub const PLATEAU_FACTOR: f64 = 1.5;

/// Diffusion-maps basis of a point cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionBasis {
    pub eps_diff: f64,
    /// `N × m`, normalized so that `gᵀ b g = I`.
    pub g: DMatrix<f64>,
    /// `N × m`, `a = g (gᵀg)⁻¹`.
    pub a: DMatrix<f64>,
    /// Leading eigenvalues of the transition matrix, descending.
    pub lambdas: DVector<f64>,
    /// Kernel row sums (diagonal of `b`).
    pub degree: DVector<f64>,
}

impl DiffusionBasis {
    pub fn m(&self) -> usize {
        self.g.ncols()
    }

    /// The full-basis case where the projection is the identity.
    pub fn is_full(&self) -> bool {
        self.g.ncols() == self.g.nrows()
    }
}

/// Gaussian kernel `K_{jj'} = exp(−‖x_j − x_j'‖² / (4ε))` over the columns.
pub fn kernel_matrix(data: &DMatrix<f64>, eps: f64) -> Result<DMatrix<f64>> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidData(format!("ε_diff must be positive, got {eps}")));
    }
    let n = data.ncols();
    let mut k = DMatrix::from_element(n, n, 1.0);
    for j in 0..n {
        for i in 0..j {
            let d2 = (data.column(i) - data.column(j)).norm_squared();
            let v = (-d2 / (4.0 * eps)).exp();
            if !v.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite kernel entry between samples {i} and {j}"
                )));
            }
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

fn normalized_kernel(data: &DMatrix<f64>, eps: f64) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let k = kernel_matrix(data, eps)?;
    let degree = k.column_sum();
    let inv_sqrt = degree.map(|b| 1.0 / b.sqrt());
    let sym = DMatrix::from_fn(k.nrows(), k.ncols(), |i, j| inv_sqrt[i] * k[(i, j)] * inv_sqrt[j]);
    Ok((sym, degree))
}

/// All eigenvalues of the transition matrix `b⁻¹K`, descending.
pub fn dmaps_spectrum(data: &DMatrix<f64>, eps: f64) -> Result<DVector<f64>> {
    let (sym, _) = normalized_kernel(data, eps)?;
    Ok(sorted_symmetric_eigenvalues(&sym))
}

/// The first `m` diffusion-maps basis vectors of the columns of `data`.
pub fn dmaps_basis(data: &DMatrix<f64>, eps: f64, m: usize) -> Result<DiffusionBasis> {
    let n = data.ncols();
    if m < 1 || m > n {
        return Err(Error::InvalidData(format!(
            "basis dimension m = {m} must lie in [1, N = {n}]"
        )));
    }
    let (sym, degree) = normalized_kernel(data, eps)?;
    let (vals, vecs) = sorted_symmetric_eigen(&sym);
    let mut g = vecs.columns(0, m).into_owned();
    for (i, mut row) in g.row_iter_mut().enumerate() {
        row /= degree[i].sqrt();
    }
    let gram_inv = spd_inverse(&(g.transpose() * &g))
        .ok_or_else(|| Error::Numerical("diffusion basis Gram matrix is singular".into()))?;
    let a = &g * gram_inv;
    Ok(DiffusionBasis {
        eps_diff: eps,
        g,
        a,
        lambdas: vals.rows(0, m).into_owned(),
        degree,
    })
}

/// Smallest `α ≥ 3` (1-based) with `Λ_α / Λ_2 < 0.1`, or `None` when the
/// spectrum has no such gap.
pub fn m_hat(spectrum: &[f64]) -> Option<usize> {
    if spectrum.len() < 3 {
        return None;
    }
    let l2 = spectrum[1];
    if l2 <= 0.0 {
        return Some(3);
    }
    (3..=spectrum.len()).find(|&alpha| spectrum[alpha - 1] / l2 < GAP_RATIO)
}

/// Outcome of the automatic `(ε_diff, m)` selection.
#[derive(Debug, Clone, PartialEq)]
pub struct DmapsSelection {
    pub eps_opt: f64,
    pub m_opt: usize,
    /// `(ε, m̂(ε))` for every grid point.
    pub table: Vec<(f64, Option<usize>)>,
}

/// Chooses `ε_diff` as the smallest grid value at which `m̂` reaches a value
/// held over `]ε, 1.5ε[`, and `m = m̂(ε_diff)`.
pub fn select_dmaps_hyperparams(data: &DMatrix<f64>, grid: &[f64]) -> Result<DmapsSelection> {
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidData("ε grid must be non-empty and increasing".into()));
    }
    let mut table = Vec::with_capacity(grid.len());
    for &eps in grid {
        let spectrum = dmaps_spectrum(data, eps)?;
        table.push((eps, m_hat(spectrum.as_slice())));
    }
    select_from_table(&table).map(|(eps_opt, m_opt)| DmapsSelection {
        eps_opt,
        m_opt,
        table,
    })
}

/// Applies the plateau rule to a precomputed `(ε, m̂)` table.
pub fn select_from_table(table: &[(f64, Option<usize>)]) -> Result<(f64, usize)> {
    let rank = |m: Option<usize>| m.unwrap_or(usize::MAX);
    if let Some(w) = table.windows(2).find(|w| rank(w[1].1) > rank(w[0].1)) {
        return Err(Error::Selection(format!(
            "m̂(ε) increases between ε = {} and ε = {}; set ε_diff and m manually",
            w[0].0, w[1].0
        )));
    }
    for (i, &(eps, m)) in table.iter().enumerate() {
        let Some(m) = m else { continue };
        if i > 0 && rank(table[i - 1].1) <= m {
            continue;
        }
        let upper = PLATEAU_FACTOR * eps;
        if table.last().is_none_or(|&(e, _)| e < upper) {
            break;
        }
        let held = table[i + 1..]
            .iter()
            .take_while(|&&(e, _)| e < upper)
            .all(|&(_, mm)| mm == Some(m));
        if held {
            return Ok((eps, m));
        }
    }
    Err(Error::Selection(
        "no plateau of m̂(ε) spanning a factor 1.5 was found on the grid; set ε_diff and m manually".into(),
    ))
}

/// Geometric grid around the median pairwise squared distance / 4.
pub fn default_eps_grid(data: &DMatrix<f64>) -> Vec<f64> {
    let n = data.ncols();
    let mut d2 = Vec::with_capacity(n * (n - 1) / 2);
    for j in 0..n {
        for i in 0..j {
            d2.push((data.column(i) - data.column(j)).norm_squared());
        }
    }
    d2.sort_by(f64::total_cmp);
    let base = if d2.is_empty() { 1.0 } else { (d2[d2.len() / 2] / 4.0).max(1e-12) };
    let ratio: f64 = 1.06;
    let lo = base * 1e-2;
    let steps = (1e4f64.ln() / ratio.ln()).ceil() as i32;
    (0..=steps).map(|k| lo * ratio.powi(k)).collect()
}
