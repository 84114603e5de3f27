//! Exchangeable-copy samplers for the tested columns.
//!
//! Two families: exact multivariate-normal copies built from a Haar frame in
//! the residual space, and graphical-model copies built by forward/reverse
//! Markov-chain sweeps of sufficient-statistic-preserving local updates
//! (Gaussian residual rotation or within-stratum permutation for discrete
//! data). Copies never see the response; per-copy randomness comes from
//! counter-based substreams so parallel and serial runs agree bit for bit.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::collections::BTreeMap;

use crate::data::{select_columns, DataMatrix};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{psd_sqrt, residual_projector_raw, sample_haar_frame, least_squares_raw};
use crate::rng::{substream, Domain};

/// Kind of local update applied during hub/reverse sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LocalUpdateKind {
    GaussianResidualRotation,
    DiscreteStratifiedPermutation,
}

/// The copies produced by a sampler run.
///
/// Each copy stores only the tested columns, ordered by `tested_indices`
/// (ascending); columns outside the tested set equal the originals by
/// construction. Graph samplers retain the intermediate hub matrix for
/// diagnostics.
#[derive(Debug, Clone)]
pub struct CopySet {
    pub copies: Vec<DMatrix<f64>>,
    pub tested_indices: Vec<usize>,
    pub hub: Option<DMatrix<f64>>,
    pub warnings: Vec<String>,
}

fn validate_tested(tested: &[usize], p: usize) -> Result<Vec<usize>> {
    if tested.is_empty() {
        return Err(Error::InvalidDimension("tested set is empty".into()));
    }
    let mut sorted = tested.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != tested.len() {
        return Err(Error::InvalidOrder("duplicate index in tested set".into()));
    }
    if let Some(&max) = sorted.last() {
        if max >= p {
            return Err(Error::InvalidDimension(format!(
                "tested index {max} out of range (p = {p})"
            )));
        }
    }
    Ok(sorted)
}

/// Exact multivariate-normal copies of the tested columns.
///
/// Each copy is `hat(X_T) + P_R^T U Q` where `hat` is the projection onto
/// the span of the conditioning columns, `U` is a fresh Haar frame on the
/// residual space, and `Q` reproduces the residual Gram matrix, so every
/// copy matches the observed `X_T^T X_S` and `X_T^T X_T` exactly.
///
/// With `augment_intercept`, a ones column joins the conditioning block so
/// the unknown mean is conditioned out.
pub fn mvn_crt_copies(
    x: &DataMatrix,
    tested: &[usize],
    conditioning: &[usize],
    m: usize,
    augment_intercept: bool,
    seed: u64,
) -> Result<CopySet> {
    let n = x.nrows();
    let p = x.ncols();
    let tested_sorted = validate_tested(tested, p)?;

    let mut covered = vec![false; p];
    for &j in &tested_sorted {
        covered[j] = true;
    }
    for &j in conditioning {
        if j >= p {
            return Err(Error::InvalidDimension(format!(
                "conditioning index {j} out of range (p = {p})"
            )));
        }
        if covered[j] && tested_sorted.binary_search(&j).is_ok() {
            return Err(Error::InvalidOrder(format!(
                "index {j} appears in both tested and conditioning sets"
            )));
        }
        covered[j] = true;
    }
    if covered.iter().any(|c| !c) {
        return Err(Error::InvalidDimension(
            "tested and conditioning sets must partition the columns".into(),
        ));
    }

    let xs = x.select_columns(conditioning)?;
    let (xs_aug, names_aug) = if augment_intercept {
        let mut m_aug = DMatrix::from_element(n, xs.ncols() + 1, 1.0);
        m_aug.view_mut((0, 1), (n, xs.ncols())).copy_from(&xs);
        let mut names = vec!["(intercept)".to_string()];
        names.extend(conditioning.iter().map(|&j| x.name_of(j).to_string()));
        (m_aug, names)
    } else {
        let names = conditioning
            .iter()
            .map(|&j| x.name_of(j).to_string())
            .collect();
        (xs, names)
    };

    let s = xs_aug.ncols();
    if n <= s {
        return Err(Error::InsufficientSample { n, s });
    }
    let proj = residual_projector_raw(&xs_aug, Some(&names_aug))?;

    if m == 0 {
        return Ok(CopySet {
            copies: Vec::new(),
            tested_indices: tested_sorted,
            hub: None,
            warnings: Vec::new(),
        });
    }

    let x_t = x.select_columns(&tested_sorted)?;
    let t = x_t.ncols();
    let resid_dim = n - s;
    let pr_xt = proj.project(&x_t);
    let hat_xt = &x_t - proj.lift(&pr_xt);
    let (q, r) = if resid_dim > t {
        (psd_sqrt(&(pr_xt.transpose() * &pr_xt))?, t)
    } else {
        (pr_xt, resid_dim)
    };

    let copies: Result<Vec<DMatrix<f64>>> = (0..m)
        .into_par_iter()
        .map(|j| {
            let mut rng = substream(seed, Domain::MvnCopy, j as u64);
            let u = sample_haar_frame(&mut rng, resid_dim, r)?;
            Ok(&hat_xt + proj.lift(&(u.columns() * &q)))
        })
        .collect();

    Ok(CopySet {
        copies: copies?,
        tested_indices: tested_sorted,
        hub: None,
        warnings: Vec::new(),
    })
}

/// One Gaussian local update: replace the residual of column `i` on
/// `[1_n, X_{N_i}]` with a freshly drawn residual rescaled to the same norm.
/// Both the fitted part and the column norm are preserved; when
/// `n <= |N_i| + 1` the update degenerates to the identity.
pub fn residual_rotation_update<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    i: usize,
    neighbors: &[usize],
    rng: &mut R,
) -> Result<DVector<f64>> {
    let n = x.nrows();
    let xi: DVector<f64> = x.column(i).into_owned();
    if n <= neighbors.len() + 1 {
        return Ok(xi);
    }
    let mut design = DMatrix::from_element(n, neighbors.len() + 1, 1.0);
    for (c, &j) in neighbors.iter().enumerate() {
        design.set_column(c + 1, &x.column(j));
    }
    let fit = least_squares_raw(&design, &xi, None)?;
    let obs_norm = fit.residual.norm();

    let attempts = 10;
    for _ in 0..attempts {
        let e = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let fresh = least_squares_raw(&design, &e, None)?;
        let fresh_norm = fresh.residual.norm();
        if fresh_norm > 1e-14 * e.norm() {
            return Ok(&fit.fitted + fresh.residual * (obs_norm / fresh_norm));
        }
    }
    Err(Error::DegenerateResidual { attempts })
}

/// One discrete local update: partition rows by the exact configuration of
/// the neighbor columns and permute the entries of column `i` uniformly
/// within each stratum. Per-stratum value counts are preserved exactly.
pub fn discrete_permutation_update<R: Rng + ?Sized>(
    x: &DMatrix<f64>,
    i: usize,
    neighbors: &[usize],
    rng: &mut R,
) -> Result<DVector<f64>> {
    let n = x.nrows();
    for &j in std::iter::once(&i).chain(neighbors) {
        for r in 0..n {
            let v = x[(r, j)];
            if !v.is_finite() || v.fract() != 0.0 {
                return Err(Error::TypeError(format!(
                    "column {} must be integer-coded for the discrete update (row {r} is {v})",
                    j + 1
                )));
            }
        }
    }
    let mut strata: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
    for r in 0..n {
        let key: Vec<i64> = neighbors.iter().map(|&j| x[(r, j)] as i64).collect();
        strata.entry(key).or_default().push(r);
    }
    let mut col: DVector<f64> = x.column(i).into_owned();
    for rows in strata.values() {
        if rows.len() < 2 {
            continue;
        }
        let mut values: Vec<f64> = rows.iter().map(|&r| col[r]).collect();
        values.shuffle(rng);
        for (&r, v) in rows.iter().zip(values) {
            col[r] = v;
        }
    }
    Ok(col)
}

/// Fraction of strata that are fixed points of the within-stratum
/// permutation (singleton or constant-valued), averaged over tested nodes.
fn fixed_strata_fraction(x: &DMatrix<f64>, graph: &Graph, t_order: &[usize]) -> f64 {
    let n = x.nrows();
    let mut total = 0usize;
    let mut fixed = 0usize;
    for &i in t_order {
        let mut strata: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
        for r in 0..n {
            let key: Vec<i64> = graph
                .neighbors(i)
                .iter()
                .map(|&j| x[(r, j)] as i64)
                .collect();
            strata.entry(key).or_default().push(r);
        }
        for rows in strata.values() {
            total += 1;
            let first = x[(rows[0], i)];
            if rows.len() < 2 || rows.iter().all(|&r| x[(r, i)] == first) {
                fixed += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        fixed as f64 / total as f64
    }
}

fn apply_sweep<R: Rng + ?Sized>(
    work: &mut DMatrix<f64>,
    graph: &Graph,
    order: &[usize],
    kind: LocalUpdateKind,
    rng: &mut R,
) -> Result<()> {
    for &i in order {
        let col = match kind {
            LocalUpdateKind::GaussianResidualRotation => {
                residual_rotation_update(work, i, graph.neighbors(i), rng)?
            }
            LocalUpdateKind::DiscreteStratifiedPermutation => {
                discrete_permutation_update(work, i, graph.neighbors(i), rng)?
            }
        };
        work.set_column(i, &col);
    }
    Ok(())
}

/// Graphical-model copies via hub and reverse sweeps.
///
/// The hub is built from `x` by `l` forward sweeps along `t_order`; each of
/// the `m` copies starts independently from the hub and applies `l` reverse
/// sweeps. Together with a sufficient-statistic-preserving local update this
/// makes the observed tested columns and all copies conditionally
/// exchangeable given the untouched columns.
pub fn hub_sweep_copies(
    x: &DataMatrix,
    graph: &Graph,
    t_order: &[usize],
    m: usize,
    l: usize,
    kind: LocalUpdateKind,
    seed: u64,
) -> Result<CopySet> {
    let p = x.ncols();
    if graph.node_count() != p {
        return Err(Error::InvalidDimension(format!(
            "graph has {} nodes for {} columns",
            graph.node_count(),
            p
        )));
    }
    if l == 0 {
        return Err(Error::InvalidDimension("sweep count must be >= 1".into()));
    }
    {
        let mut seen = t_order.to_vec();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != t_order.len() {
            return Err(Error::InvalidOrder("duplicate index in t_order".into()));
        }
    }
    let tested_sorted = validate_tested(t_order, p)?;

    let mut warnings = Vec::new();
    match kind {
        LocalUpdateKind::GaussianResidualRotation => {
            let degenerate = t_order
                .iter()
                .filter(|&&i| x.nrows() <= graph.degree(i) + 1)
                .count();
            if degenerate == t_order.len() {
                warnings.push(
                    "degenerate-copies: every local update is the identity (n too small for all tested neighborhoods)"
                        .to_string(),
                );
            } else if degenerate > 0 {
                warnings.push(format!(
                    "{degenerate} of {} tested nodes have identity updates (n too small)",
                    t_order.len()
                ));
            }
        }
        LocalUpdateKind::DiscreteStratifiedPermutation => {
            let frac = fixed_strata_fraction(x.values(), graph, t_order);
            warnings.push(format!(
                "discrete update: {:.3} of strata are fixed on the observed data",
                frac
            ));
            if frac == 1.0 {
                warnings.push(
                    "degenerate-copies: every stratum is fixed, copies equal the observed data"
                        .to_string(),
                );
            }
        }
    }

    let mut hub = x.values().clone();
    let mut hub_rng = substream(seed, Domain::HubSweep, 0);
    for _ in 0..l {
        apply_sweep(&mut hub, graph, t_order, kind, &mut hub_rng)?;
    }

    let reversed: Vec<usize> = t_order.iter().rev().copied().collect();
    let copies: Result<Vec<DMatrix<f64>>> = (0..m)
        .into_par_iter()
        .map(|mi| {
            let mut rng = substream(seed, Domain::ReverseSweep, mi as u64);
            let mut work = hub.clone();
            for _ in 0..l {
                apply_sweep(&mut work, graph, &reversed, kind, &mut rng)?;
            }
            Ok(select_columns(&work, &tested_sorted))
        })
        .collect();

    Ok(CopySet {
        copies: copies?,
        tested_indices: tested_sorted,
        hub: Some(hub),
        warnings,
    })
}
