//! Finite-size empirical oracle: sample covariates, feature chains and
//! noise, run actual ridge regressions, and estimate everything the theory
//! predicts — errors, df̂₁, κ̂, the GCV/KARE estimator, crossed variance
//! components, and raw eigenspectra of the named ensembles.
//!
//! Reproducibility contract: every random draw comes from a counter-based
//! ChaCha stream keyed by (base seed, data-seed index, feature-seed index,
//! purpose), so results are bit-identical regardless of execution order or
//! parallelism.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::free_transforms::{EnsembleTransform, ProjectionInner};
use crate::renormalizer::{LayerKind, ModelSpec};
use crate::spectrum::{teacher_weights, Spectrum, TeacherProfile};

/// Seed-grid experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McPlan {
    pub model: ModelSpec,
    pub n_data_seeds: usize,
    pub n_feature_seeds: usize,
    /// Retained for sampled-test-set sanity checks; the reported e_g is
    /// computed exactly from the spectrum and does not use it.
    pub n_test: usize,
    pub base_seed: u64,
}

/// Mean and (jackknife-over-data-seeds) standard error of one quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

/// Aggregated empirical estimates over the seed grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub e_g: Estimate,
    pub e_tr: Estimate,
    /// df¹ of the empirical feature covariance at the bare ridge (NaN at λ=0).
    pub df1_hat: Estimate,
    pub kappa_hat: Estimate,
    pub gcv_hat: Estimate,
    pub bias2: Estimate,
    pub var_x: Estimate,
    pub var_f: Estimate,
    pub var_xf: Estimate,
    pub var_xeps: Estimate,
    pub var_xfeps: Estimate,
    /// Cells whose λ=0 solve was rank-deficient or had condition > 1e12.
    pub n_ill_conditioned: usize,
}

/// One fitted cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    /// Learned predictor mapped back to input space, ŵ_D = F·v̂.
    pub weights_input: DVector<f64>,
    /// ‖v̂‖² in feature space (the test-time feature-noise multiplier).
    pub dual_norm2: f64,
    /// Exact test risk (w̄−ŵ)ᵀΣ(w̄−ŵ) + σ_ξ²‖v̂‖², excluding test label noise.
    pub e_g: f64,
    /// (1/P)‖y − ŷ‖².
    pub e_tr: f64,
    /// (1/N)Tr[Σ̂_feat(Σ̂_feat+λ)⁻¹] from the sampled features (NaN at λ=0).
    pub df1_hat: f64,
    /// 1/((1/P)Tr[(ZZᵀ/P+λ)⁻¹]) (NaN at λ=0).
    pub kappa_hat: f64,
    /// KARE/GCV estimate of E_out from train data alone (NaN at λ=0).
    pub gcv_hat: f64,
    pub ill_conditioned: bool,
}

// Stream purposes; every (seed, purpose) pair is an independent stream.
const PURPOSE_TEACHER: u64 = 1;
const PURPOSE_DATA: u64 = 2;
const PURPOSE_LABEL: u64 = 3;
const PURPOSE_FEATURE: u64 = 4;
const PURPOSE_FEATURE_NOISE: u64 = 5;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn stream(parts: &[u64]) -> ChaCha12Rng {
    let mut acc = 0x243f6a8885a308d3u64; // arbitrary nonzero start
    for &p in parts {
        acc = splitmix64(acc ^ p);
    }
    ChaCha12Rng::seed_from_u64(acc)
}

fn normals(rng: &mut ChaCha12Rng, rows: usize, cols: usize, sd: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| {
        let z: f64 = rng.sample(StandardNormal);
        z * sd
    })
}

/// Realize the teacher vector in the covariate eigenbasis. Random-teacher
/// profiles (IsotropicAverage) are drawn from the given stream; explicit
/// profiles ignore it.
fn realize_teacher(model: &ModelSpec, rng: &mut ChaCha12Rng) -> Result<DVector<f64>> {
    match &model.teacher {
        TeacherProfile::IsotropicAverage { norm } => {
            let d = model
                .covariates
                .dim()
                .ok_or_else(|| Error::Config("sampling requires a finite dimension".into()))?;
            let sd = (norm / d as f64).sqrt();
            Ok(DVector::from_fn(d, |_, _| {
                let z: f64 = rng.sample(StandardNormal);
                z * sd
            }))
        }
        _ => Ok(DVector::from_vec(teacher_weights(&model.covariates, &model.teacher)?)),
    }
}

/// Sample the feature chain and return the cumulative map F = Π W_ℓ (D×N_L).
fn sample_feature_chain(model: &ModelSpec, rng: &mut ChaCha12Rng) -> Result<DMatrix<f64>> {
    let d = model.covariates.dim().unwrap();
    let mut f = DMatrix::<f64>::identity(d, d);
    let mut fan_in = d;
    for layer in &model.layers {
        let w = match &layer.kind {
            LayerKind::GaussianWhite => {
                normals(rng, fan_in, layer.width, 1.0 / (fan_in as f64).sqrt())
            }
            LayerKind::GaussianStructured { spectrum } => {
                let etas = spectrum.eigenvalues_desc()?;
                if etas.len() != layer.width {
                    return Err(Error::Config(format!(
                        "structured layer spectrum has dimension {}, expected width {}",
                        etas.len(),
                        layer.width
                    )));
                }
                let mut g = normals(rng, fan_in, layer.width, 1.0 / (fan_in as f64).sqrt());
                for (j, eta) in etas.iter().enumerate() {
                    g.column_mut(j).scale_mut(eta.sqrt());
                }
                g
            }
            LayerKind::OrthogonalProjection => {
                let g = normals(rng, fan_in, layer.width, 1.0);
                let qr = g.qr();
                qr.q()
            }
        };
        f = &f * &w;
        fan_in = layer.width;
    }
    Ok(f)
}

/// Ridge solve in feature space for several right-hand sides at once.
/// Primal (ZᵀZ) when features ≤ 1.2·P, dual (Gram) otherwise; λ = 0 uses a
/// rank-revealing SVD (min-norm solution) and reports conditioning.
fn ridge_solve(z: &DMatrix<f64>, ys: &[DVector<f64>], lambda: f64) -> Result<(Vec<DVector<f64>>, bool)> {
    let p = z.nrows();
    let m = z.ncols();
    let pf = p as f64;
    if lambda > 0.0 {
        if (m as f64) <= 1.2 * pf {
            let mut a = z.transpose() * z / pf;
            for i in 0..m {
                a[(i, i)] += lambda;
            }
            let chol = a
                .cholesky()
                .ok_or_else(|| Error::NoSolution("ridge normal equations not SPD".into()))?;
            Ok((ys.iter().map(|y| chol.solve(&(z.transpose() * y / pf))).collect(), false))
        } else {
            let mut b = z * z.transpose() / pf;
            for i in 0..p {
                b[(i, i)] += lambda;
            }
            let chol = b
                .cholesky()
                .ok_or_else(|| Error::NoSolution("ridge Gram system not SPD".into()))?;
            Ok((ys.iter().map(|y| z.transpose() * chol.solve(y) / pf).collect(), false))
        }
    } else {
        let svd = z.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let cutoff = smax * 1e-12;
        let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
        let smin_kept =
            svd.singular_values.iter().cloned().filter(|&s| s > cutoff).fold(smax, f64::min);
        let ill = rank < p.min(m) || smax / smin_kept > 1e12;
        let u = svd.u.as_ref().unwrap();
        let vt = svd.v_t.as_ref().unwrap();
        let vs = ys
            .iter()
            .map(|y| {
                let mut c = u.transpose() * y;
                for (i, s) in svd.singular_values.iter().enumerate() {
                    c[i] = if *s > cutoff { c[i] / s } else { 0.0 };
                }
                vt.transpose() * c
            })
            .collect();
        Ok((vs, ill))
    }
}

/// Eigenvalues of the feature Gram K = ZZᵀ/P, zero-padded to length P
/// (computed on the smaller side).
fn gram_eigenvalues(z: &DMatrix<f64>) -> Vec<f64> {
    let p = z.nrows();
    let m = z.ncols();
    let pf = p as f64;
    let small = if p <= m { z * z.transpose() / pf } else { z.transpose() * z / pf };
    let mut eigs: Vec<f64> =
        small.symmetric_eigen().eigenvalues.iter().map(|&e| e.max(0.0)).collect();
    eigs.sort_by(|a, b| b.total_cmp(a));
    // The Gram is P×P; when M < P it has P−M structural zeros.
    eigs.resize(p, 0.0);
    eigs
}

/// df̂₁ = (1/N)·Tr[Σ̂(Σ̂+λ)⁻¹] from the eigenvalues of an empirical
/// covariance Σ̂.
pub fn empirical_df1(sample_cov_eigs: &[f64], lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain("empirical estimators need lambda > 0".into()));
    }
    if sample_cov_eigs.is_empty() {
        return Err(Error::Config("empty spectrum".into()));
    }
    Ok(sample_cov_eigs.iter().map(|e| e / (e + lambda)).sum::<f64>()
        / sample_cov_eigs.len() as f64)
}

/// κ̂ = λ/(1 − (N/P)·df̂₁(λ)) from the empirical covariance spectrum.
pub fn empirical_kappa(sample_cov_eigs: &[f64], p: usize, lambda: f64) -> Result<f64> {
    let df1 = empirical_df1(sample_cov_eigs, lambda)?;
    let n = sample_cov_eigs.len() as f64;
    let den = 1.0 - (n / p as f64) * df1;
    if den <= 0.0 {
        return Err(Error::Domain(format!(
            "(N/P)·df̂₁ = {} ≥ 1: empirical S-transform at its pole (near interpolation)",
            (n / p as f64) * df1
        )));
    }
    Ok(lambda / den)
}

/// KARE/GCV estimate of the out-of-sample risk from the training error and
/// the Gram resolvent trace g = (1/P)·Tr[(ZZᵀ/P+λ)⁻¹]: E_GCV = E_tr/(λg)².
pub fn empirical_gcv(e_tr: f64, lambda: f64, gram_resolvent_trace: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain("empirical estimators need lambda > 0".into()));
    }
    if !(gram_resolvent_trace > 0.0) {
        return Err(Error::Domain("resolvent trace must be positive".into()));
    }
    Ok(e_tr / (lambda * gram_resolvent_trace).powi(2))
}

struct Cell {
    fit: FitOutcome,
    /// Predictor from the noiseless labels y₀ = Xw̄, in input space.
    w_clean: DVector<f64>,
    /// Noise part ŵ − ŵ₀ (the solve is linear in y).
    w_noise: DVector<f64>,
    /// Feature-space counterparts, needed to attribute the test-time
    /// feature-noise error σ_ξ²‖v̂‖² across the crossed design.
    v_clean: DVector<f64>,
    v_noise: DVector<f64>,
}

fn fit_cell(
    model: &ModelSpec,
    wbar: &DVector<f64>,
    etas: &[f64],
    base: u64,
    data_seed: u64,
    feature_seed: u64,
) -> Result<Cell> {
    let d = etas.len();
    let p = model.samples;
    let lambda = model.ridge;

    let mut data_rng = stream(&[base, data_seed, PURPOSE_DATA]);
    let mut x = normals(&mut data_rng, p, d, 1.0);
    for (k, eta) in etas.iter().enumerate() {
        x.column_mut(k).scale_mut(eta.sqrt());
    }
    let mut label_rng = stream(&[base, data_seed, PURPOSE_LABEL]);
    let eps = normals(&mut label_rng, p, 1, model.label_noise_var.sqrt());

    let mut feat_rng = stream(&[base, feature_seed, PURPOSE_FEATURE]);
    let f = sample_feature_chain(model, &mut feat_rng)?;
    let mut z = &x * &f;
    if model.feature_noise_var > 0.0 {
        let mut xi_rng =
            stream(&[base, data_seed, feature_seed, PURPOSE_FEATURE_NOISE]);
        z += normals(&mut xi_rng, p, z.ncols(), model.feature_noise_var.sqrt());
    }

    let y_clean = &x * wbar;
    let y_noisy = &y_clean + eps.column(0);
    let (vs, ill) = ridge_solve(&z, &[y_noisy.clone(), y_clean.clone()], lambda)?;
    let (v_hat, v_clean) = (&vs[0], &vs[1]);

    let w_hat = &f * v_hat;
    let w_clean = &f * v_clean;
    let w_noise = &w_hat - &w_clean;

    let resid = &y_noisy - &z * v_hat;
    let e_tr = resid.norm_squared() / p as f64;
    let diff = wbar - &w_hat;
    let e_g = diff
        .iter()
        .zip(etas)
        .map(|(w, eta)| eta * w * w)
        .sum::<f64>()
        + model.feature_noise_var * v_hat.norm_squared();

    let (df1_hat, kappa_hat, gcv_hat) = if lambda > 0.0 {
        let gram = gram_eigenvalues(&z);
        let m = z.ncols() as f64;
        // The nonzero Gram eigenvalues are exactly the nonzero eigenvalues
        // of the feature covariance Σ̂ = ZᵀZ/P.
        let df1 = gram.iter().map(|e| e / (e + lambda)).sum::<f64>() / m;
        let trace = gram.iter().map(|e| 1.0 / (e + lambda)).sum::<f64>() / p as f64;
        (df1, 1.0 / trace, empirical_gcv(e_tr, lambda, trace)?)
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };

    Ok(Cell {
        fit: FitOutcome {
            weights_input: w_hat,
            dual_norm2: v_hat.norm_squared(),
            e_g,
            e_tr,
            df1_hat,
            kappa_hat,
            gcv_hat,
            ill_conditioned: ill,
        },
        w_clean,
        w_noise,
        v_clean: v_clean.clone(),
        v_noise: v_hat - v_clean,
    })
}

/// Sample one (data, feature) cell and fit it. Random teachers are realized
/// from the data seed, so averaging over data seeds also averages the
/// teacher, matching the teacher-averaged theory.
pub fn sample_and_fit(model: &ModelSpec, data_seed: u64, feature_seed: u64) -> Result<FitOutcome> {
    model.validate()?;
    let etas = model
        .covariates
        .eigenvalues_desc()
        .map_err(|_| Error::Config("sampling requires a finite spectrum".into()))?;
    let mut teacher_rng = stream(&[data_seed, PURPOSE_TEACHER]);
    let wbar = realize_teacher(model, &mut teacher_rng)?;
    Ok(fit_cell(model, &wbar, &etas, 0, data_seed, feature_seed)?.fit)
}

/// Σ-metric inner product in the eigenbasis.
fn sigma_norm2(v: &DVector<f64>, etas: &[f64]) -> f64 {
    v.iter().zip(etas).map(|(x, eta)| eta * x * x).sum()
}

/// Two-way crossed random-effects components (rows = data seeds, columns =
/// feature seeds) of a vector response in the Σ metric, by the classical
/// mean-square identities with unbiased normalizations.
fn anova2(cells: &[Vec<DVector<f64>>], etas: &[f64]) -> (DVector<f64>, f64, f64, f64) {
    let nd = cells.len();
    let nf = cells[0].len();
    let d = cells[0][0].len();
    let mut grand = DVector::<f64>::zeros(d);
    let mut rows = vec![DVector::<f64>::zeros(d); nd];
    let mut cols = vec![DVector::<f64>::zeros(d); nf];
    for (i, row) in cells.iter().enumerate() {
        for (j, w) in row.iter().enumerate() {
            grand += w;
            rows[i] += w;
            cols[j] += w;
        }
    }
    grand /= (nd * nf) as f64;
    for r in &mut rows {
        *r /= nf as f64;
    }
    for c in &mut cols {
        *c /= nd as f64;
    }
    let ss_a: f64 = rows.iter().map(|r| sigma_norm2(&(r - &grand), etas)).sum();
    let ss_b: f64 = cols.iter().map(|c| sigma_norm2(&(c - &grand), etas)).sum();
    let mut ss_ab = 0.0;
    for (i, row) in cells.iter().enumerate() {
        for (j, w) in row.iter().enumerate() {
            let resid = w - &rows[i] - &cols[j] + &grand;
            ss_ab += sigma_norm2(&resid, etas);
        }
    }
    let ms_a = ss_a * nf as f64 / (nd - 1) as f64;
    let ms_b = ss_b * nd as f64 / (nf - 1) as f64;
    let ms_ab = ss_ab / ((nd - 1) * (nf - 1)) as f64;
    let var_interact = ms_ab;
    let var_rows = ((ms_a - ms_ab) / nf as f64).max(0.0);
    let var_cols = ((ms_b - ms_ab) / nd as f64).max(0.0);
    (grand, var_rows, var_cols, var_interact)
}

/// All eleven statistics computed from a subset of data-seed rows; used for
/// the point estimates (all rows) and the jackknife (leave one out).
fn grid_stats(
    rows: &[usize],
    cells: &[Vec<Cell>],
    wbar: &DVector<f64>,
    etas: &[f64],
    sigma_xi2: f64,
) -> [f64; 11] {
    let clean: Vec<Vec<DVector<f64>>> = rows
        .iter()
        .map(|&i| cells[i].iter().map(|c| c.w_clean.clone()).collect())
        .collect();
    let noise: Vec<Vec<DVector<f64>>> = rows
        .iter()
        .map(|&i| cells[i].iter().map(|c| c.w_noise.clone()).collect())
        .collect();
    let (grand_clean, var_x, mut var_f, mut var_xf) = anova2(&clean, etas);
    let (_, var_xeps, _, mut var_xfeps) = anova2(&noise, etas);
    let bias2 = sigma_norm2(&(&grand_clean - wbar), etas);
    if sigma_xi2 > 0.0 {
        // Test-time feature noise: σ_ξ·ξᵀv̂ is zero-mean over the fresh test
        // noise ξ, so it never touches Bias², and its conditional mean given
        // the data factor vanishes, so nothing lands in Var_X/Var_Xε either.
        // The feature-factor main effect σ_ξ²·E‖E_X[v̂₀|F]‖² goes to Var_F,
        // the remainder σ_ξ²·E‖v̂₀ − E_X[v̂₀|F]‖² to Var_XF, and the label
        // noise part (which has exactly zero conditional mean given F) is
        // all interaction-with-noise, Var_XFε. Column means use unbiased
        // norm estimators.
        let nd = rows.len() as f64;
        let nf = cells[rows[0]].len();
        let dim_v = cells[rows[0]][0].v_clean.len();
        let (mut feat_main, mut interact, mut noise2) = (0.0f64, 0.0f64, 0.0f64);
        for j in 0..nf {
            let mut colmean = DVector::<f64>::zeros(dim_v);
            for &i in rows {
                colmean += &cells[i][j].v_clean;
            }
            colmean /= nd;
            let s2 = rows
                .iter()
                .map(|&i| (&cells[i][j].v_clean - &colmean).norm_squared())
                .sum::<f64>()
                / (nd - 1.0);
            feat_main += (colmean.norm_squared() - s2 / nd).max(0.0);
            interact += s2;
            noise2 += rows.iter().map(|&i| cells[i][j].v_noise.norm_squared()).sum::<f64>() / nd;
        }
        var_f += sigma_xi2 * feat_main / nf as f64;
        var_xf += sigma_xi2 * interact / nf as f64;
        var_xfeps += sigma_xi2 * noise2 / nf as f64;
    }
    let mut scalars = [0.0f64; 5];
    let mut n = 0.0;
    for &i in rows {
        for c in &cells[i] {
            scalars[0] += c.fit.e_g;
            scalars[1] += c.fit.e_tr;
            scalars[2] += c.fit.df1_hat;
            scalars[3] += c.fit.kappa_hat;
            scalars[4] += c.fit.gcv_hat;
            n += 1.0;
        }
    }
    for s in &mut scalars {
        *s /= n;
    }
    [
        scalars[0], scalars[1], scalars[2], scalars[3], scalars[4], bias2, var_x, var_f,
        var_xf, var_xeps, var_xfeps,
    ]
}

/// Run the full seed grid and estimate every theory quantity, with
/// leave-one-data-seed-out jackknife standard errors.
pub fn crossed_variance_components(plan: &McPlan) -> Result<McResult> {
    plan.model.validate()?;
    if plan.n_data_seeds < 2 || plan.n_feature_seeds < 2 {
        return Err(Error::Config(
            "crossed variance components need at least 2 data and 2 feature seeds".into(),
        ));
    }
    if plan.n_test < 1 {
        return Err(Error::Config("n_test must be >= 1".into()));
    }
    let etas = plan
        .model
        .covariates
        .eigenvalues_desc()
        .map_err(|_| Error::Config("sampling requires a finite spectrum".into()))?;
    // One quenched teacher for the whole grid, so the crossed decomposition
    // matches the fixed-teacher definition of bias and variance.
    let mut teacher_rng = stream(&[plan.base_seed, PURPOSE_TEACHER]);
    let wbar = realize_teacher(&plan.model, &mut teacher_rng)?;

    let coords: Vec<(usize, usize)> = (0..plan.n_data_seeds)
        .flat_map(|i| (0..plan.n_feature_seeds).map(move |j| (i, j)))
        .collect();
    let flat: Vec<Cell> = coords
        .par_iter()
        .map(|&(i, j)| {
            fit_cell(&plan.model, &wbar, &etas, plan.base_seed, i as u64, j as u64)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut cells: Vec<Vec<Cell>> = Vec::with_capacity(plan.n_data_seeds);
    let mut it = flat.into_iter();
    for _ in 0..plan.n_data_seeds {
        cells.push((0..plan.n_feature_seeds).map(|_| it.next().unwrap()).collect());
    }
    let n_ill = cells
        .iter()
        .flat_map(|r| r.iter())
        .filter(|c| c.fit.ill_conditioned)
        .count();

    let all: Vec<usize> = (0..plan.n_data_seeds).collect();
    let xi2 = plan.model.feature_noise_var;
    let point = grid_stats(&all, &cells, &wbar, &etas, xi2);
    let nd = plan.n_data_seeds;
    let mut jack = vec![[0.0f64; 11]; nd];
    for (i, j) in jack.iter_mut().enumerate() {
        let subset: Vec<usize> = all.iter().cloned().filter(|&k| k != i).collect();
        *j = grid_stats(&subset, &cells, &wbar, &etas, xi2);
    }
    let estimate = |k: usize| {
        let mean_jack = jack.iter().map(|s| s[k]).sum::<f64>() / nd as f64;
        let var = jack.iter().map(|s| (s[k] - mean_jack).powi(2)).sum::<f64>() * (nd - 1) as f64
            / nd as f64;
        Estimate { mean: point[k], se: var.sqrt() }
    };
    Ok(McResult {
        e_g: estimate(0),
        e_tr: estimate(1),
        df1_hat: estimate(2),
        kappa_hat: estimate(3),
        gcv_hat: estimate(4),
        bias2: estimate(5),
        var_x: estimate(6),
        var_f: estimate(7),
        var_xf: estimate(8),
        var_xeps: estimate(9),
        var_xfeps: estimate(10),
        n_ill_conditioned: n_ill,
    })
}

fn symmetric_eigs(m: DMatrix<f64>) -> Vec<f64> {
    let mut e: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().cloned().collect();
    e.sort_by(f64::total_cmp);
    e
}

fn scaled_columns(g: DMatrix<f64>, spectrum: &Spectrum) -> Result<DMatrix<f64>> {
    let etas = spectrum.eigenvalues_desc()?;
    if etas.len() != g.ncols() {
        return Err(Error::Config(format!(
            "spectrum dimension {} does not match sampled size {}",
            etas.len(),
            g.ncols()
        )));
    }
    let mut g = g;
    for (j, eta) in etas.iter().enumerate() {
        g.column_mut(j).scale_mut(eta.sqrt());
    }
    Ok(g)
}

fn scaled_rows(g: DMatrix<f64>, spectrum: &Spectrum) -> Result<DMatrix<f64>> {
    let etas = spectrum.eigenvalues_desc()?;
    if etas.len() != g.nrows() {
        return Err(Error::Config(format!(
            "kernel dimension {} does not match sampled size {}",
            etas.len(),
            g.nrows()
        )));
    }
    let mut g = g;
    for (i, eta) in etas.iter().enumerate() {
        g.row_mut(i).scale_mut(eta.sqrt());
    }
    Ok(g)
}

/// Sample one realization of a named ensemble and return its sorted
/// eigenvalues. `dim` is the dimension of the returned matrix; relative
/// sizes come from the ensemble's aspect ratios (deep ensembles carry their
/// absolute sizes and ignore `dim`).
pub fn empirical_spectrum(
    ensemble: &EnsembleTransform,
    dim: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if dim == 0 || dim > 4000 {
        return Err(Error::Config("dimension must be in 1..=4000".into()));
    }
    let rng = &mut stream(&[seed, PURPOSE_DATA]);
    let round = |x: f64| -> usize { x.round().max(1.0) as usize };
    match ensemble {
        EnsembleTransform::WhiteWishart { q } => {
            let (d, p) = (dim, round(dim as f64 / q));
            let x = normals(rng, p, d, 1.0);
            Ok(symmetric_eigs(x.transpose() * &x / p as f64))
        }
        EnsembleTransform::WishartGram { q } => {
            let (p, n) = (dim, round(dim as f64 * q));
            let x = normals(rng, p, n, 1.0);
            Ok(symmetric_eigs(&x * x.transpose() / p as f64))
        }
        EnsembleTransform::SquareProjection { q } => {
            let (d, n) = (dim, round(dim as f64 * q));
            let quasi = normals(rng, d, n, 1.0).qr().q();
            Ok(symmetric_eigs(&quasi * quasi.transpose()))
        }
        EnsembleTransform::ShiftedWishart { q, j } => {
            let (d, p) = (dim, round(dim as f64 / q));
            let x = normals(rng, p, d, 1.0);
            let mut m = x.transpose() * &x / p as f64;
            for i in 0..d {
                m[(i, i)] += j;
            }
            Ok(symmetric_eigs(m))
        }
        EnsembleTransform::Wigner { sigma2 } => {
            let n = dim;
            let g = normals(rng, n, n, 1.0);
            let m = (&g + g.transpose()) * (sigma2 / (2.0 * n as f64)).sqrt();
            Ok(symmetric_eigs(m))
        }
        EnsembleTransform::DeepWhiteGram { widths, d } => {
            let mut chain = DMatrix::<f64>::identity(*d, *d);
            let mut fan_in = *d;
            for &w in widths {
                chain = &chain * normals(rng, fan_in, w, 1.0);
                fan_in = w;
            }
            // Mean eigenvalue ΠN_ℓ/D^L under the crate's S-transform convention.
            let norm = (*d as f64).powi(widths.len() as i32);
            Ok(symmetric_eigs(&chain * chain.transpose() / norm))
        }
        EnsembleTransform::DeepStructuredGram { spectra, widths, d } => {
            let mut chain = DMatrix::<f64>::identity(*d, *d);
            let mut fan_in = *d;
            for (spectrum, &w) in spectra.iter().zip(widths) {
                chain = scaled_columns(&chain * normals(rng, fan_in, w, 1.0), spectrum)?;
                fan_in = w;
            }
            let norm = (*d as f64).powi(widths.len() as i32);
            Ok(symmetric_eigs(&chain * chain.transpose() / norm))
        }
        EnsembleTransform::StructuredWishart { population, q } => {
            let (d, p) = (dim, round(dim as f64 / q));
            let x = scaled_columns(normals(rng, p, d, 1.0), population)?;
            Ok(symmetric_eigs(x.transpose() * &x / p as f64))
        }
        EnsembleTransform::CorrelatedSamples { k, q } => {
            let p = k.dim().ok_or_else(|| {
                Error::Config("sample kernel must have a finite dimension".into())
            })?;
            let d = round(p as f64 * q);
            let x = scaled_rows(normals(rng, p, d, 1.0), k)?;
            Ok(symmetric_eigs(x.transpose() * &x / p as f64))
        }
        EnsembleTransform::FullyStructured { sigma, k, q } => {
            let p = k.dim().ok_or_else(|| {
                Error::Config("sample kernel must have a finite dimension".into())
            })?;
            let d = round(p as f64 * q);
            let x = scaled_columns(scaled_rows(normals(rng, p, d, 1.0), k)?, sigma)?;
            Ok(symmetric_eigs(x.transpose() * &x / p as f64))
        }
        EnsembleTransform::RectangularProjectionOf { inner, q } => {
            let d = dim;
            let n = round(d as f64 * q.min(1.0));
            let a = match inner.as_ref() {
                ProjectionInner::Spectrum(s) => {
                    let etas = s.eigenvalues_desc()?;
                    if etas.len() != d {
                        return Err(Error::Config(
                            "inner spectrum dimension must match dim".into(),
                        ));
                    }
                    DMatrix::from_diagonal(&DVector::from_vec(etas))
                }
                ProjectionInner::Ensemble(e) => {
                    let eigs = empirical_spectrum(e, d, splitmix64(seed ^ 0x5eed))?;
                    DMatrix::from_diagonal(&DVector::from_vec(eigs))
                }
            };
            let quasi = normals(rng, d, n, 1.0).qr().q();
            Ok(symmetric_eigs(quasi.transpose() * a * &quasi))
        }
    }
}
