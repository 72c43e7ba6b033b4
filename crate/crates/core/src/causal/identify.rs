//! Structural mask recovery from observed-latent rollouts.
//!
//! The primary estimator runs a conditional-independence test per candidate
//! edge: partial correlation with a Fisher z transform, each variable
//! residualized on the remaining same-equation regressors. A relaxed variant
//! estimates edges by l1-penalized regression and thresholding, which is what
//! the edge-minimality penalty plugs into. All statistics run in f64.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::envs::{LatentRollout, StructuralMasks};
use crate::numerics::Real;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct IdentifyConfig {
    /// Family-wise significance level; Bonferroni-split across every test.
    pub alpha: f64,
    /// Diagonal jitter for the residualizing solves.
    pub ridge: f64,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        IdentifyConfig { alpha: 0.01, ridge: 1e-8 }
    }
}

/// Estimated masks plus the per-entry p-values that produced them. Grouped
/// entries (action dummies, observation rows) report their smallest p.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct IdentifiedStructure {
    pub masks: StructuralMasks,
    pub p_gg: Vec<Vec<f64>>,
    pub p_ag: Vec<f64>,
    pub p_rg: Vec<f64>,
    pub p_go: Vec<f64>,
    pub p_gr: Vec<f64>,
    pub p_ar: f64,
    /// Bonferroni denominator.
    pub tests: usize,
    pub alpha_adjusted: f64,
    pub transitions: usize,
}

// ── Pooled design ──────────────────────────────────────────────────────────

struct Pooled {
    d: usize,
    obs_dim: usize,
    n: usize,
    prev: Vec<Vec<f64>>,
    next: Vec<Vec<f64>>,
    /// Indicator columns for actions `1..action_count`.
    dummies: Vec<Vec<f64>>,
    rprev: Vec<f64>,
    reward: Vec<f64>,
    obs: Vec<Vec<f64>>,
}

fn assemble(rollouts: &[LatentRollout], action_count: usize) -> Result<Pooled> {
    if rollouts.is_empty() {
        return Err(Error::Parameter("no rollouts given".into()));
    }
    if action_count < 2 {
        return Err(Error::Parameter("need at least two actions".into()));
    }
    let d = rollouts[0].states.first().map(Vec::len).unwrap_or(0);
    if d == 0 {
        return Err(Error::Parameter("rollout states are empty".into()));
    }
    let obs_dim = rollouts[0].observations.first().map(Vec::len).unwrap_or(0);
    let mut p = Pooled {
        d,
        obs_dim,
        n: 0,
        prev: vec![Vec::new(); d],
        next: vec![Vec::new(); d],
        dummies: vec![Vec::new(); action_count - 1],
        rprev: Vec::new(),
        reward: Vec::new(),
        obs: vec![Vec::new(); obs_dim],
    };
    for (ri, r) in rollouts.iter().enumerate() {
        let steps = r.actions.len();
        let consistent = r.states.len() == steps + 1
            && r.rewards.len() == steps
            && r.rewards_prev.len() == steps
            && r.observations.len() == steps
            && r.states.iter().all(|s| s.len() == d)
            && r.observations.iter().all(|o| o.len() == obs_dim);
        if !consistent {
            return Err(Error::Parameter(format!("rollout {ri} has inconsistent lengths")));
        }
        for s in 0..steps {
            if r.actions[s] >= action_count {
                return Err(Error::Parameter(format!(
                    "rollout {ri} uses action {} of {action_count}",
                    r.actions[s]
                )));
            }
            for i in 0..d {
                p.prev[i].push(r.states[s][i] as f64);
                p.next[i].push(r.states[s + 1][i] as f64);
            }
            for (c, col) in p.dummies.iter_mut().enumerate() {
                col.push(f64::from(r.actions[s] == c + 1));
            }
            p.rprev.push(r.rewards_prev[s] as f64);
            p.reward.push(r.rewards[s] as f64);
            for k in 0..obs_dim {
                p.obs[k].push(r.observations[s][k] as f64);
            }
            p.n += 1;
        }
    }
    Ok(p)
}

// ── Partial-correlation testing ────────────────────────────────────────────

/// Zero-mean unit-variance copy, or None for a (numerically) constant column.
fn standardize(col: &[f64]) -> Option<Vec<f64>> {
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var <= 1e-18 {
        return None;
    }
    let s = var.sqrt();
    Some(col.iter().map(|v| (v - mean) / s).collect())
}

/// Least-squares residual of `y` on `[controls, intercept]`, ridge-stabilized.
fn residualize(y: &[f64], controls: &[Vec<f64>], ridge: f64) -> Vec<f64> {
    let n = y.len();
    let k = controls.len() + 1;
    let col = |j: usize, row: usize| if j < controls.len() { controls[j][row] } else { 1.0 };
    let mut xtx = DMatrix::<f64>::zeros(k, k);
    let mut xty = DVector::<f64>::zeros(k);
    for a in 0..k {
        for b in a..k {
            let dot: f64 = (0..n).map(|r| col(a, r) * col(b, r)).sum();
            xtx[(a, b)] = dot;
            xtx[(b, a)] = dot;
        }
        xty[a] = (0..n).map(|r| col(a, r) * y[r]).sum();
    }
    let mut jitter = ridge.max(1e-12);
    let beta = loop {
        let mut m = xtx.clone();
        for a in 0..k {
            m[(a, a)] += jitter * (1.0 + xtx[(a, a)]);
        }
        if let Some(ch) = m.cholesky() {
            break ch.solve(&xty);
        }
        jitter *= 100.0;
        // Diagonal dominance makes failure impossible before this bound.
        assert!(jitter < 1e6, "residualizing solve failed to stabilize");
    };
    (0..n)
        .map(|r| y[r] - (0..k).map(|j| col(j, r) * beta[j]).sum::<f64>())
        .collect()
}

/// Two-sided p-value for partial correlation of `y` and `x` given `controls`,
/// Fisher z with n - |controls| - 3 degrees of freedom. Degenerate inputs
/// (constant or fully explained columns) report independence.
fn partial_corr_p(y: &[f64], x: &[f64], controls: &[&[f64]], ridge: f64) -> f64 {
    let n = y.len();
    let (Some(sy), Some(sx)) = (standardize(y), standardize(x)) else {
        return 1.0;
    };
    let kept: Vec<Vec<f64>> = controls.iter().filter_map(|c| standardize(c)).collect();
    let k = kept.len();
    if n < k + 5 {
        return 1.0;
    }
    let ry = residualize(&sy, &kept, ridge);
    let rx = residualize(&sx, &kept, ridge);
    let vy: f64 = ry.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let vx: f64 = rx.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if vy <= 1e-10 || vx <= 1e-10 {
        return 1.0;
    }
    let dot: f64 = rx.iter().zip(&ry).map(|(a, b)| a * b).sum();
    let rho = (dot / ((vx * vy).sqrt() * n as f64)).clamp(-1.0 + 1e-12, 1.0 - 1e-12);
    let dof = (n - k - 3) as f64;
    let z = rho.atanh() * dof.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    2.0 * (1.0 - normal.cdf(z.abs()))
}

// ── Mask estimation ────────────────────────────────────────────────────────

/// Estimate all structural masks by per-edge conditional-independence tests.
/// Requires the latent states to be observed (the rollouts carry them), the
/// MDP regime the identifiability result covers.
pub fn identify_structure(
    rollouts: &[LatentRollout],
    action_count: usize,
    cfg: &IdentifyConfig,
) -> Result<IdentifiedStructure> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha {} outside (0, 1)", cfg.alpha)));
    }
    if !(cfg.ridge >= 0.0) {
        return Err(Error::Parameter("ridge must be nonnegative".into()));
    }
    let p = assemble(rollouts, action_count)?;
    let (d, na) = (p.d, action_count - 1);
    let required = 30 + 10 * (d + action_count);
    if p.n < required {
        return Err(Error::Statistics(format!(
            "{} transitions, need at least {required} for {d} dims and {action_count} actions",
            p.n
        )));
    }
    let tests = d * d + d * na + d + d + na + p.obs_dim * d;
    let alpha_adj = cfg.alpha / tests as f64;

    // Transition targets: next_i on [prev, action dummies, previous reward].
    let mut p_gg = vec![vec![1.0f64; d]; d];
    let mut p_ag = vec![1.0f64; d];
    let mut p_rg = vec![1.0f64; d];
    for i in 0..d {
        let y = &p.next[i];
        for j in 0..d {
            let mut ctl: Vec<&[f64]> =
                (0..d).filter(|&m| m != j).map(|m| p.prev[m].as_slice()).collect();
            ctl.extend(p.dummies.iter().map(Vec::as_slice));
            ctl.push(&p.rprev);
            p_gg[i][j] = partial_corr_p(y, &p.prev[j], &ctl, cfg.ridge);
        }
        for c in 0..na {
            let mut ctl: Vec<&[f64]> = p.prev.iter().map(Vec::as_slice).collect();
            ctl.extend((0..na).filter(|&m| m != c).map(|m| p.dummies[m].as_slice()));
            ctl.push(&p.rprev);
            let pv = partial_corr_p(y, &p.dummies[c], &ctl, cfg.ridge);
            p_ag[i] = p_ag[i].min(pv);
        }
        let mut ctl: Vec<&[f64]> = p.prev.iter().map(Vec::as_slice).collect();
        ctl.extend(p.dummies.iter().map(Vec::as_slice));
        p_rg[i] = partial_corr_p(y, &p.rprev, &ctl, cfg.ridge);
    }

    // Reward target: reward on [state it was emitted from, action dummies].
    let mut p_gr = vec![1.0f64; d];
    let mut p_ar = 1.0f64;
    for i in 0..d {
        let mut ctl: Vec<&[f64]> =
            (0..d).filter(|&m| m != i).map(|m| p.prev[m].as_slice()).collect();
        ctl.extend(p.dummies.iter().map(Vec::as_slice));
        p_gr[i] = partial_corr_p(&p.reward, &p.prev[i], &ctl, cfg.ridge);
    }
    for c in 0..na {
        let mut ctl: Vec<&[f64]> = p.prev.iter().map(Vec::as_slice).collect();
        ctl.extend((0..na).filter(|&m| m != c).map(|m| p.dummies[m].as_slice()));
        let pv = partial_corr_p(&p.reward, &p.dummies[c], &ctl, cfg.ridge);
        p_ar = p_ar.min(pv);
    }

    // Observation target: each obs row on the state it reveals.
    let mut p_go = vec![1.0f64; d];
    for j in 0..d {
        let ctl: Vec<&[f64]> =
            (0..d).filter(|&m| m != j).map(|m| p.next[m].as_slice()).collect();
        for k in 0..p.obs_dim {
            let pv = partial_corr_p(&p.obs[k], &p.next[j], &ctl, cfg.ridge);
            p_go[j] = p_go[j].min(pv);
        }
    }

    let bit = |pv: f64| u8::from(pv < alpha_adj);
    let masks = StructuralMasks {
        c_gg: p_gg.iter().map(|row| row.iter().map(|&pv| bit(pv)).collect()).collect(),
        c_ag: p_ag.iter().map(|&pv| bit(pv)).collect(),
        c_rg: p_rg.iter().map(|&pv| bit(pv)).collect(),
        c_go: p_go.iter().map(|&pv| bit(pv)).collect(),
        c_gr: p_gr.iter().map(|&pv| bit(pv)).collect(),
        c_ar: bit(p_ar),
    };
    Ok(IdentifiedStructure {
        masks,
        p_gg,
        p_ag,
        p_rg,
        p_go,
        p_gr,
        p_ar,
        tests,
        alpha_adjusted: alpha_adj,
        transitions: p.n,
    })
}

/// Micro-averaged F1 of estimated against true mask entries, both mask sets
/// flattened in the same order. Returns 1.0 when both are entirely empty.
pub fn mask_f1(est: &StructuralMasks, truth: &StructuralMasks) -> Result<Real> {
    est.validate_shape()?;
    truth.validate_shape()?;
    if est.dims() != truth.dims() {
        return Err(Error::Parameter(format!(
            "estimated masks have {} dims, truth has {}",
            est.dims(),
            truth.dims()
        )));
    }
    let flat = |m: &StructuralMasks| -> Vec<u8> {
        m.c_gg
            .iter()
            .flatten()
            .chain(&m.c_ag)
            .chain(&m.c_rg)
            .chain(&m.c_go)
            .chain(&m.c_gr)
            .chain(std::iter::once(&m.c_ar))
            .copied()
            .collect()
    };
    let (e, t) = (flat(est), flat(truth));
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (a, b) in e.iter().zip(&t) {
        match (a, b) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            _ => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    Ok(if denom == 0 { 1.0 } else { 2.0 * tp as Real / denom as Real })
}

// ── Relaxed (regression) variant and the sparsity penalty ──────────────────

#[derive(Debug, Clone, Copy)]
pub struct RelaxedOptions {
    /// l1 weight on the standardized regression coefficients.
    pub lambda: f64,
    /// Edge iff the standardized coefficient magnitude exceeds this.
    pub threshold: f64,
}

/// Coordinate-descent lasso on standardized columns; coefficients are on the
/// standardized scale and constant columns get exactly zero.
fn lasso(y: &[f64], cols: &[&[f64]], lambda: f64) -> Vec<f64> {
    let n = y.len();
    let Some(sy) = standardize(y) else {
        return vec![0.0; cols.len()];
    };
    let std_cols: Vec<Option<Vec<f64>>> = cols.iter().map(|c| standardize(c)).collect();
    let mut w = vec![0.0; cols.len()];
    let mut res = sy.clone();
    for _ in 0..500 {
        let mut max_delta = 0.0f64;
        for (j, sc) in std_cols.iter().enumerate() {
            let Some(xj) = sc else { continue };
            // rho = (1/n) x_j . (res + x_j w_j); unit-variance columns make
            // the curvature term exactly 1.
            let rho = xj.iter().zip(&res).map(|(a, b)| a * b).sum::<f64>() / n as f64 + w[j];
            let next = rho.signum() * (rho.abs() - lambda).max(0.0);
            let delta = next - w[j];
            if delta != 0.0 {
                for (r, xv) in res.iter_mut().zip(xj) {
                    *r -= delta * xv;
                }
                w[j] = next;
                max_delta = max_delta.max(delta.abs());
            }
        }
        if max_delta < 1e-9 {
            break;
        }
    }
    w
}

/// Estimate masks by thresholded (optionally l1-penalized) regression instead
/// of hypothesis tests. With `lambda = 0` this is plain least squares; the
/// sparsity penalty shrinks borderline coefficients and thereby suppresses
/// false-positive edges.
pub fn identify_relaxed(
    rollouts: &[LatentRollout],
    action_count: usize,
    opts: &RelaxedOptions,
) -> Result<StructuralMasks> {
    if !(opts.lambda >= 0.0) {
        return Err(Error::Parameter("lambda must be nonnegative".into()));
    }
    if !(opts.threshold > 0.0) {
        return Err(Error::Parameter("threshold must be positive".into()));
    }
    let p = assemble(rollouts, action_count)?;
    let (d, na) = (p.d, action_count - 1);
    let required = 30 + 10 * (d + action_count);
    if p.n < required {
        return Err(Error::Statistics(format!(
            "{} transitions, need at least {required} for {d} dims and {action_count} actions",
            p.n
        )));
    }
    let hit = |w: f64| u8::from(w.abs() > opts.threshold);

    let mut c_gg = vec![vec![0u8; d]; d];
    let mut c_ag = vec![0u8; d];
    let mut c_rg = vec![0u8; d];
    for i in 0..d {
        let mut cols: Vec<&[f64]> = p.prev.iter().map(Vec::as_slice).collect();
        cols.extend(p.dummies.iter().map(Vec::as_slice));
        cols.push(&p.rprev);
        let w = lasso(&p.next[i], &cols, opts.lambda);
        for j in 0..d {
            c_gg[i][j] = hit(w[j]);
        }
        c_ag[i] = u8::from((0..na).any(|c| hit(w[d + c]) == 1));
        c_rg[i] = hit(w[d + na]);
    }

    let mut cols: Vec<&[f64]> = p.prev.iter().map(Vec::as_slice).collect();
    cols.extend(p.dummies.iter().map(Vec::as_slice));
    let w = lasso(&p.reward, &cols, opts.lambda);
    let c_gr: Vec<u8> = (0..d).map(|i| hit(w[i])).collect();
    let c_ar = u8::from((0..na).any(|c| hit(w[d + c]) == 1));

    let mut c_go = vec![0u8; d];
    let cols: Vec<&[f64]> = p.next.iter().map(Vec::as_slice).collect();
    for k in 0..p.obs_dim {
        let w = lasso(&p.obs[k], &cols, opts.lambda);
        for j in 0..d {
            if hit(w[j]) == 1 {
                c_go[j] = 1;
            }
        }
    }
    Ok(StructuralMasks { c_gg, c_ag, c_rg, c_go, c_gr, c_ar })
}

/// Edge-minimality penalty: `lambda` times the summed l1 norm of every value
/// group (mask tensors, relaxed logits, parameters). Minimized, so sparser
/// structure scores lower.
pub fn reg_penalty(groups: &[&[Real]], lambda: Real) -> Result<Real> {
    if !(lambda >= 0.0) {
        return Err(Error::Parameter(format!("lambda {lambda} must be nonnegative and finite")));
    }
    Ok(lambda * groups.iter().flat_map(|g| g.iter()).map(|v| v.abs()).sum::<Real>())
}

/// All mask entries flattened to reals, in the canonical family order, for
/// feeding an exact mask set into the penalty.
pub fn mask_values(masks: &StructuralMasks) -> Vec<Real> {
    masks
        .c_gg
        .iter()
        .flatten()
        .chain(&masks.c_ag)
        .chain(&masks.c_rg)
        .chain(&masks.c_go)
        .chain(&masks.c_gr)
        .chain(std::iter::once(&masks.c_ar))
        .map(|&b| b as Real)
        .collect()
}
