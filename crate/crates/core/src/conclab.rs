//! Monte Carlo verification of the concentration statements behind the
//! subspace RIP: per-lemma trial runners, failure rates with Wilson
//! intervals, exponential-decay fits and the Gram-Schmidt intermediates
//! `αₖ`, `bₖ`, `λ̂ₖ`, `βₖ`.
//!
//! Every trial is a pure function of `(config, n, trial_index)`: its random
//! stream is keyed by `derive_path(master_seed, [n, trial_index])`. Trials
//! may run on any number of threads; aggregation walks them in index order,
//! so reports are identical for every thread count.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimator::{projected_affinity_estimate, projected_distance_estimate};
use crate::linalg::{
    dot, extreme_singular_values, matvec, norm, normalize_columns, t_matvec, Matrix,
};
use crate::rng::{derive_path, derive_seed, gaussian_matrix, gaussian_vector, CounterRng};
use crate::sketch::{apply, gaussian_operator, sketch_pair, SketchOperator, SketchedPair};
use crate::subspace::{
    generate_pair_with_angles, generate_random_subspace, principal_angles, principal_bases, PrincipalBases,
    Subspace,
};

/// Grid points need this many failures to enter a decay fit.
pub const MIN_FAILURES_FOR_FIT: usize = 5;
/// Two-sided 95% standard normal quantile.
pub const WILSON_Z: f64 = 1.959_963_984_540_054;
/// Slack (`d1 − aff²`) at or below this is treated as zero.
pub const ZERO_SLACK: f64 = 1e-12;
const FIXED_STREAM: u64 = u64::MAX;

/// The statement a sweep checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LemmaId {
    /// Extreme singular values of a Gaussian matrix against `√rows ± √cols ± t`.
    Lemma5,
    /// `|‖a‖² − 1| > ε` for a standard Gaussian vector.
    Lemma6,
    /// `|‖Vᵀa‖² − d/n| > ε` for a fixed orthonormal `V`.
    Cor2,
    /// `s²_min(Ā) < 1 − ε` or `s²_max(Ā) > 1 + ε` for column-normalized `Ā`.
    Cor3,
    /// `‖V₂ᵀa₁‖² > ε` for `u₁ ⟂ U₂`.
    Lemma7,
    /// `‖V₂ᵀā₁‖² > ε` for `u₁ ⟂ U₂`.
    Cor4,
    /// Line against subspace: `|aff_Y² − oaff²| > (1 − λ²)ε`.
    Lemma4,
    /// `|aff_Y² − oaff²| > (d1 − aff_X²)ε`.
    Thm2,
    /// `|D_Y² − oD²| > (D_X² − (d2 − d1)/2)ε`.
    Cor1,
    /// Some pairwise ratio `D_Y²/D_X²` outside `(1 − ε, 1 + ε)` among `L` subspaces.
    Thm1,
    /// `|‖V₂ᵀv₁ₖ‖² − ‖V₂ᵀā₁ₖ‖²| > (1 − λₖ²)ε` for some `k`.
    Lemma8,
    /// `1 − βₖ² > (1 − λₖ²)(1 + ε)` for some `k ≥ 2`.
    Lemma9,
    /// `⟨ā⊥₁ₖ, b⊥ₖ⟩² > ε` for some `k ≥ 2`.
    Lemma10,
}

impl LemmaId {
    pub const ALL: [LemmaId; 13] = [
        LemmaId::Lemma5,
        LemmaId::Lemma6,
        LemmaId::Cor2,
        LemmaId::Cor3,
        LemmaId::Lemma7,
        LemmaId::Cor4,
        LemmaId::Lemma4,
        LemmaId::Thm2,
        LemmaId::Cor1,
        LemmaId::Thm1,
        LemmaId::Lemma8,
        LemmaId::Lemma9,
        LemmaId::Lemma10,
    ];

    pub fn id(self) -> &'static str {
        match self {
            LemmaId::Lemma5 => "lemma5",
            LemmaId::Lemma6 => "lemma6",
            LemmaId::Cor2 => "cor2",
            LemmaId::Cor3 => "cor3",
            LemmaId::Lemma7 => "lemma7",
            LemmaId::Cor4 => "cor4",
            LemmaId::Lemma4 => "lemma4",
            LemmaId::Thm2 => "thm2",
            LemmaId::Cor1 => "cor1",
            LemmaId::Thm1 => "thm1",
            LemmaId::Lemma8 => "lemma8",
            LemmaId::Lemma9 => "lemma9",
            LemmaId::Lemma10 => "lemma10",
        }
    }

    fn needs_sketch(self) -> bool {
        !matches!(self, LemmaId::Lemma5 | LemmaId::Lemma6 | LemmaId::Cor2 | LemmaId::Cor3)
    }
}

impl fmt::Display for LemmaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for LemmaId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LemmaId::ALL.into_iter().find(|l| l.id() == s).ok_or_else(|| {
            let ids: Vec<_> = LemmaId::ALL.iter().map(|l| l.id()).collect();
            invalid(format!("unknown lemma '{s}'; valid ids: {}", ids.join(", ")))
        })
    }
}

/// How trial pairs are drawn.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Spectrum {
    /// Fresh random orientation each trial, principal cosines fixed.
    Prescribed { cosines: Vec<f64> },
    /// Two independent Haar-random subspaces each trial.
    Haar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub ambient: usize,
    pub n_grid: Vec<usize>,
    pub d1: usize,
    pub d2: usize,
    pub spectrum: Spectrum,
    pub l_count: usize,
    pub epsilon: f64,
    pub trials: usize,
    pub master_seed: u64,
    pub lemma: LemmaId,
    /// Offset `t` for the singular value tail probe.
    #[serde(default)]
    pub tail_offset: f64,
}

impl ExperimentConfig {
    fn validate_basic(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid(format!("epsilon must lie in (0, 1), got {}", self.epsilon)));
        }
        if self.n_grid.is_empty() {
            return Err(invalid("n grid is empty"));
        }
        if self.d1 == 0 || self.d1 > self.d2 {
            return Err(invalid(format!("need 1 <= d1 <= d2, got d1 = {}, d2 = {}", self.d1, self.d2)));
        }
        if let Some(&n) = self.n_grid.iter().find(|&&n| n <= self.d2) {
            return Err(invalid(format!("every n must exceed d2 = {}, got {n}", self.d2)));
        }
        if self.lemma.needs_sketch() {
            if let Some(&n) = self.n_grid.iter().find(|&&n| n >= self.ambient) {
                return Err(invalid(format!("every n must be below the ambient dimension {}, got {n}", self.ambient)));
            }
        }
        if !(self.tail_offset >= 0.0) {
            return Err(invalid("tail offset must be non-negative"));
        }
        Ok(())
    }

    /// Checks that the parameters make sense for `self.lemma`.
    pub fn validate(&self) -> Result<()> {
        self.validate_basic()?;
        let lemma = self.lemma;
        let fail = |why: &str| Err(invalid(format!("{lemma}: {why}")));
        if let Spectrum::Prescribed { cosines } = &self.spectrum {
            if cosines.len() != self.d1 {
                return fail(&format!("{} cosines given for d1 = {}", cosines.len(), self.d1));
            }
            if cosines.iter().any(|c| !(0.0..=1.0).contains(c)) || cosines.windows(2).any(|w| w[0] < w[1]) {
                return fail("cosines must be non-increasing values in [0, 1]");
            }
        }
        let pair_fits = match self.spectrum {
            Spectrum::Prescribed { .. } => self.d1 + self.d2 <= self.ambient,
            Spectrum::Haar => self.d2 <= self.ambient,
        };
        match lemma {
            LemmaId::Lemma5 | LemmaId::Lemma6 | LemmaId::Cor2 | LemmaId::Cor3 => Ok(()),
            LemmaId::Lemma7 | LemmaId::Cor4 => {
                if self.d2 + 1 > self.ambient {
                    return fail("need d2 + 1 <= ambient to place u1 orthogonal to U2");
                }
                Ok(())
            }
            LemmaId::Lemma4 if self.d1 != 1 => fail("the line case needs d1 = 1"),
            LemmaId::Lemma9 | LemmaId::Lemma10 if self.d1 < 2 => {
                fail("the Gram-Schmidt intermediates need d1 >= 2")
            }
            LemmaId::Thm1 => {
                if self.l_count < 2 {
                    return fail("set RIP needs L >= 2");
                }
                Ok(())
            }
            _ if !pair_fits => fail("pair does not fit in the ambient dimension"),
            _ => Ok(()),
        }
    }
}

/// Stream key of one trial.
pub fn trial_seed(master: u64, n: usize, trial_index: usize) -> u64 {
    derive_path(master, &[n as u64, trial_index as u64])
}

/// Measurements from one sketched pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub n: usize,
    pub aff_x_sq: f64,
    pub aff_y_sq: f64,
    pub oaff_sq: f64,
    pub d_x_sq: f64,
    pub d_y_sq: f64,
    pub od_sq: f64,
    /// `|aff_Y² − oaff²| / (d1 − aff_X²)`, or 0 when the slack is zero.
    pub normalized_deviation: f64,
    pub violated: bool,
    pub degenerate: bool,
    /// Slack `d1 − aff_X²` was zero; the trial carries no information.
    pub zero_slack: bool,
    /// For `d1 = 1`: gap between the measured `aff_Y²` and
    /// `1 − (1 − λ²)(‖a₀‖² − ‖Vᵀa₀‖²)/‖a‖²`.
    pub line_identity_residual: Option<f64>,
}

impl TrialRecord {
    fn degenerate(n: usize, trial_index: usize) -> Self {
        TrialRecord {
            trial_index,
            n,
            aff_x_sq: f64::NAN,
            aff_y_sq: f64::NAN,
            oaff_sq: f64::NAN,
            d_x_sq: f64::NAN,
            d_y_sq: f64::NAN,
            od_sq: f64::NAN,
            normalized_deviation: f64::NAN,
            violated: false,
            degenerate: true,
            zero_slack: false,
            line_identity_residual: None,
        }
    }

    fn counts(&self) -> bool {
        !self.degenerate && !self.zero_slack
    }
}

fn build_pair(config: &ExperimentConfig, seed: u64) -> Result<(Subspace, Subspace, PrincipalBases)> {
    match &config.spectrum {
        Spectrum::Prescribed { cosines } => generate_pair_with_angles(config.ambient, cosines, config.d2, seed),
        Spectrum::Haar => {
            let x1 = generate_random_subspace(config.ambient, config.d1, derive_seed(seed, 0))?;
            let x2 = generate_random_subspace(config.ambient, config.d2, derive_seed(seed, 1))?;
            let pb = principal_bases(&x1, &x2)?;
            Ok((x1, x2, pb))
        }
    }
}

/// Pair, operator and sketch for one trial; `None` on rank collapse.
fn sketched_trial(
    config: &ExperimentConfig,
    n: usize,
    trial_index: usize,
) -> Result<Option<(Subspace, Subspace, PrincipalBases, SketchOperator, SketchedPair)>> {
    let seed = trial_seed(config.master_seed, n, trial_index);
    let (x1, x2, pb) = build_pair(config, derive_seed(seed, 0))?;
    let op = gaussian_operator(n, config.ambient, derive_seed(seed, 1))?;
    match sketch_pair(&op, &pb) {
        Ok(sp) => Ok(Some((x1, x2, pb, op, sp))),
        Err(Error::DegenerateSketch { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Sketches one pair and compares the measured post-sketch affinity and
/// distance with their closed-form estimates.
pub fn run_pair_trial(config: &ExperimentConfig, n: usize, trial_index: usize) -> Result<TrialRecord> {
    let Some((x1, x2, pb, op, sp)) = sketched_trial(config, n, trial_index)? else {
        return Ok(TrialRecord::degenerate(n, trial_index));
    };
    let (d1, d2) = (config.d1, config.d2);
    let gx = principal_angles(&x1, &x2)?;
    let gy = principal_angles(&sp.y1, &sp.y2)?;
    let aff_x_sq = gx.affinity_sq.clamp(0.0, d1 as f64);
    let oaff_sq = projected_affinity_estimate(aff_x_sq, d1, d2, n)?;
    let d_x_sq = (d1 + d2) as f64 / 2.0 - aff_x_sq;
    let od_sq = projected_distance_estimate(d_x_sq, d1, d2, n)?;
    let slack = d1 as f64 - aff_x_sq;
    let zero_slack = slack <= ZERO_SLACK;
    let normalized_deviation = if zero_slack { 0.0 } else { (gy.affinity_sq - oaff_sq).abs() / slack };
    let line_identity_residual = (d1 == 1).then(|| line_case_residual(&op, &pb, &sp, gy.affinity_sq));
    Ok(TrialRecord {
        trial_index,
        n,
        aff_x_sq,
        aff_y_sq: gy.affinity_sq,
        oaff_sq,
        d_x_sq,
        d_y_sq: gy.distance_sq,
        od_sq,
        normalized_deviation,
        violated: !zero_slack && normalized_deviation > config.epsilon,
        degenerate: false,
        zero_slack,
        line_identity_residual,
    })
}

/// `|aff_Y² − (1 − (1 − λ²)(‖a₀‖² − ‖Vᵀa₀‖²)/‖a‖²)|` for a line `u = λu₁ + √(1−λ²)u₀`.
fn line_case_residual(op: &SketchOperator, pb: &PrincipalBases, sp: &SketchedPair, aff_y_sq: f64) -> f64 {
    let lambda = pb.lambda[0];
    let a = sp.a1.column(0);
    let Some(u0) = &pb.u0 else {
        // λ = 1: the line lies in X₂ and the identity reads aff_Y² = 1.
        return (aff_y_sq - 1.0).abs();
    };
    let a0 = op.multiply_vec(&u0.column(0));
    let proj = t_matvec(&sp.v2, &a0);
    let predicted = 1.0 - (1.0 - lambda * lambda) * (dot(&a0, &a0) - dot(&proj, &proj)) / dot(&a, &a);
    (aff_y_sq - predicted).abs()
}

/// One pairwise distance ratio in a set-RIP trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRatio {
    pub i: usize,
    pub j: usize,
    pub d_x_sq: f64,
    pub d_y_sq: f64,
    /// `D_Y²/D_X²`, absent when `D_X² = 0`.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetTrialRecord {
    pub trial_index: usize,
    pub n: usize,
    pub ratios: Vec<PairRatio>,
    /// Every defined ratio lies strictly inside `(1 − ε, 1 + ε)`.
    pub all_within: bool,
    pub degenerate: bool,
}

impl SetTrialRecord {
    pub fn excluded_pairs(&self) -> usize {
        self.ratios.iter().filter(|r| r.ratio.is_none()).count()
    }
}

/// Dimension of subspace `i` in a set trial: alternates `d2, d1, d2, …`.
pub fn set_member_dim(config: &ExperimentConfig, i: usize) -> usize {
    if i % 2 == 0 {
        config.d2
    } else {
        config.d1
    }
}

/// Sketches `L` Haar-random subspaces with one shared operator and records
/// all `L(L−1)/2` distance ratios.
pub fn run_set_trial(config: &ExperimentConfig, n: usize, trial_index: usize) -> Result<SetTrialRecord> {
    if config.l_count < 2 {
        return Err(invalid("set trials need L >= 2"));
    }
    let seed = trial_seed(config.master_seed, n, trial_index);
    let xs = (0..config.l_count)
        .map(|i| generate_random_subspace(config.ambient, set_member_dim(config, i), derive_path(seed, &[0, i as u64])))
        .collect::<Result<Vec<_>>>()?;
    let op = gaussian_operator(n, config.ambient, derive_seed(seed, 1))?;
    let mut ys = Vec::with_capacity(xs.len());
    for x in &xs {
        match apply(&op, x) {
            Ok(y) => ys.push(y),
            Err(Error::DegenerateSketch { .. }) => {
                return Ok(SetTrialRecord { trial_index, n, ratios: vec![], all_within: false, degenerate: true })
            }
            Err(e) => return Err(e),
        }
    }
    let mut ratios = Vec::with_capacity(xs.len() * (xs.len() - 1) / 2);
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            let d_x_sq = principal_angles(&xs[i], &xs[j])?.distance_sq;
            let d_y_sq = principal_angles(&ys[i], &ys[j])?.distance_sq;
            let ratio = (d_x_sq > ZERO_SLACK).then(|| d_y_sq / d_x_sq);
            ratios.push(PairRatio { i, j, d_x_sq, d_y_sq, ratio });
        }
    }
    let eps = config.epsilon;
    let all_within = ratios.iter().filter_map(|r| r.ratio).all(|r| r > 1.0 - eps && r < 1.0 + eps);
    Ok(SetTrialRecord { trial_index, n, ratios, all_within, degenerate: false })
}

/// Scalars from the Gram-Schmidt step that produces `v₁ₖ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProofIntermediates {
    /// 1-based column index.
    pub k: usize,
    /// `‖V₁,₁:ₖ₋₁ᵀ ā₁ₖ‖`.
    pub alpha_k: f64,
    /// `‖V₂ᵀ bₖ‖`.
    pub beta_k: f64,
    /// `‖V₂ᵀ ā₁ₖ‖`.
    pub lambda_hat_k: f64,
    /// `⟨ā⊥₁ₖ, b⊥ₖ⟩`.
    pub cross_inner: f64,
    /// `|(1 − αₖ²)‖P_{Y₂⊥} v₁ₖ‖² − (1 − λ̂ₖ² + αₖ²(1 − βₖ²) − 2αₖ√(1 − λ̂ₖ²)√(1 − βₖ²)⟨ā⊥₁ₖ, b⊥ₖ⟩)|`
    pub identity_residual: f64,
}

/// Component of `x` orthogonal to the columns of the orthonormal `v`.
fn perp(v: &Matrix, x: &[f64]) -> Vec<f64> {
    let c = t_matvec(v, x);
    let p = matvec(v, &c);
    x.iter().zip(p).map(|(a, b)| a - b).collect()
}

fn unit(mut x: Vec<f64>) -> Option<Vec<f64>> {
    let n = norm(&x);
    if n == 0.0 {
        return None;
    }
    x.iter_mut().for_each(|v| *v /= n);
    Some(x)
}

/// Intermediates for column `k` (1-based, `2 ≤ k ≤ d1`) of the sketched `X₁`.
pub fn proof_intermediates(pair: &SketchedPair, k: usize) -> Result<ProofIntermediates> {
    let d1 = pair.v1.cols();
    if k < 2 || k > d1 {
        return Err(invalid(format!("k must satisfy 2 <= k <= d1 = {d1}, got {k}")));
    }
    let abar = pair.abar1.column(k - 1);
    let prefix = pair.v1.column_range(0, k - 1)?;
    let coeffs = t_matvec(&prefix, &abar);
    let alpha = norm(&coeffs);
    if alpha >= 1.0 - 1e-10 || alpha == 0.0 {
        return Err(Error::DegenerateGeometry(format!(
            "alpha_{k} = {alpha}: column {k} has no well-defined split against its prefix"
        )));
    }
    let b: Vec<f64> = matvec(&prefix, &coeffs).into_iter().map(|x| x / alpha).collect();

    let v2 = &pair.v2;
    let lambda_hat = norm(&t_matvec(v2, &abar));
    let beta = norm(&t_matvec(v2, &b));
    let (abar_perp, b_perp) = match (unit(perp(v2, &abar)), unit(perp(v2, &b))) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::DegenerateGeometry(format!(
                "column {k} or its prefix direction lies inside Y2"
            )))
        }
    };
    let cross = dot(&abar_perp, &b_perp);

    let v1k = pair.v1.column(k - 1);
    let v_perp = perp(v2, &v1k);
    let lhs = (1.0 - alpha * alpha) * dot(&v_perp, &v_perp);
    let s_lambda = (1.0 - lambda_hat * lambda_hat).max(0.0).sqrt();
    let s_beta = (1.0 - beta * beta).max(0.0).sqrt();
    let rhs = s_lambda * s_lambda + alpha * alpha * s_beta * s_beta - 2.0 * alpha * s_lambda * s_beta * cross;
    Ok(ProofIntermediates {
        k,
        alpha_k: alpha,
        beta_k: beta,
        lambda_hat_k: lambda_hat,
        cross_inner: cross,
        identity_residual: (lhs - rhs).abs(),
    })
}

/// Empirical tail rates of the extreme singular values of a unit-variance
/// Gaussian `rows×cols` matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailProbe {
    pub t: f64,
    pub n_rows: usize,
    pub n_cols: usize,
    /// Fraction with `s_max ≥ √rows + √cols + t`.
    pub exceed_max_rate: f64,
    /// Fraction with `s_min ≤ √rows − √cols − t`.
    pub exceed_min_rate: f64,
}

fn tail_events(rows: usize, cols: usize, t: f64, seed: u64) -> Result<(bool, bool)> {
    let a = gaussian_matrix(rows, cols, 1.0, &mut CounterRng::new(seed));
    let (smin, smax) = extreme_singular_values(&a)?;
    let (r, c) = ((rows as f64).sqrt(), (cols as f64).sqrt());
    Ok((smax >= r + c + t, smin <= r - c - t))
}

pub fn tail_probe(rows: usize, cols: usize, t: f64, trials: usize, seed: u64) -> Result<TailProbe> {
    if rows == 0 || cols == 0 || trials == 0 {
        return Err(invalid("tail probe needs positive shape and trial count"));
    }
    let events = (0..trials)
        .into_par_iter()
        .map(|i| tail_events(rows, cols, t, derive_seed(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;
    let count = |f: fn(&(bool, bool)) -> bool| events.iter().filter(|e| f(e)).count() as f64 / trials as f64;
    Ok(TailProbe {
        t,
        n_rows: rows,
        n_cols: cols,
        exceed_max_rate: count(|e| e.0),
        exceed_min_rate: count(|e| e.1),
    })
}

/// Result of one trial of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Held,
    Violated,
    /// Rank collapse or another measure-zero event; counted but not rated.
    Degenerate,
    /// The statement's slack is zero for this draw.
    Excluded,
}

impl From<bool> for Outcome {
    fn from(violated: bool) -> Self {
        if violated {
            Outcome::Violated
        } else {
            Outcome::Held
        }
    }
}

fn any_k(ks: impl Iterator<Item = Result<Option<bool>>>) -> Result<Outcome> {
    let mut seen = false;
    for r in ks {
        match r {
            Ok(Some(true)) => return Ok(Outcome::Violated),
            Ok(Some(false)) => seen = true,
            Ok(None) => {}
            Err(Error::DegenerateGeometry(_)) => return Ok(Outcome::Degenerate),
            Err(e) => return Err(e),
        }
    }
    Ok(if seen { Outcome::Held } else { Outcome::Excluded })
}

/// Runs one trial of `config.lemma`.
pub fn run_trial(config: &ExperimentConfig, n: usize, trial_index: usize) -> Result<Outcome> {
    let eps = config.epsilon;
    let seed = trial_seed(config.master_seed, n, trial_index);
    let scale = 1.0 / (n as f64).sqrt();
    match config.lemma {
        LemmaId::Lemma5 => {
            let (hi, lo) = tail_events(n, config.d2, config.tail_offset, seed)?;
            Ok((hi || lo).into())
        }
        LemmaId::Lemma6 => {
            let a = gaussian_vector(n, scale, &mut CounterRng::new(derive_seed(seed, 0)));
            Ok(((dot(&a, &a) - 1.0).abs() > eps).into())
        }
        LemmaId::Cor2 => {
            let v = generate_random_subspace(n, config.d2, derive_path(config.master_seed, &[n as u64, FIXED_STREAM]))?;
            let a = gaussian_vector(n, scale, &mut CounterRng::new(derive_seed(seed, 0)));
            let p = t_matvec(v.basis(), &a);
            Ok(((dot(&p, &p) - config.d2 as f64 / n as f64).abs() > eps).into())
        }
        LemmaId::Cor3 => {
            let a = gaussian_matrix(n, config.d2, scale, &mut CounterRng::new(derive_seed(seed, 0)));
            let abar = normalize_columns(&a)?;
            let (smin, smax) = extreme_singular_values(&abar)?;
            Ok((smin * smin < 1.0 - eps || smax * smax > 1.0 + eps).into())
        }
        LemmaId::Lemma7 | LemmaId::Cor4 => {
            let (_, _, pb) = generate_pair_with_angles(config.ambient, &[0.0], config.d2, derive_seed(seed, 0))?;
            let op = gaussian_operator(n, config.ambient, derive_seed(seed, 1))?;
            let sp = match sketch_pair(&op, &pb) {
                Ok(sp) => sp,
                Err(Error::DegenerateSketch { .. }) => return Ok(Outcome::Degenerate),
                Err(e) => return Err(e),
            };
            let a = if config.lemma == LemmaId::Lemma7 { sp.a1.column(0) } else { sp.abar1.column(0) };
            let p = t_matvec(&sp.v2, &a);
            Ok((dot(&p, &p) > eps).into())
        }
        LemmaId::Lemma4 | LemmaId::Thm2 => {
            let r = run_pair_trial(config, n, trial_index)?;
            Ok(if r.degenerate {
                Outcome::Degenerate
            } else if r.zero_slack {
                Outcome::Excluded
            } else {
                r.violated.into()
            })
        }
        LemmaId::Cor1 => {
            let r = run_pair_trial(config, n, trial_index)?;
            if r.degenerate {
                return Ok(Outcome::Degenerate);
            }
            let slack = r.d_x_sq - (config.d2 - config.d1) as f64 / 2.0;
            if slack <= ZERO_SLACK {
                return Ok(Outcome::Excluded);
            }
            Ok(((r.d_y_sq - r.od_sq).abs() > slack * eps).into())
        }
        LemmaId::Thm1 => {
            let r = run_set_trial(config, n, trial_index)?;
            Ok(if r.degenerate {
                Outcome::Degenerate
            } else if r.excluded_pairs() == r.ratios.len() {
                Outcome::Excluded
            } else {
                (!r.all_within).into()
            })
        }
        LemmaId::Lemma8 | LemmaId::Lemma9 | LemmaId::Lemma10 => {
            let Some((_, _, pb, _, sp)) = sketched_trial(config, n, trial_index)? else {
                return Ok(Outcome::Degenerate);
            };
            let lemma = config.lemma;
            let first = if lemma == LemmaId::Lemma8 { 1 } else { 2 };
            any_k((first..=config.d1).map(|k| {
                let lambda = pb.lambda[k - 1];
                let gap = 1.0 - lambda * lambda;
                match lemma {
                    LemmaId::Lemma8 => {
                        if gap <= ZERO_SLACK {
                            return Ok(None);
                        }
                        let pv = t_matvec(&sp.v2, &sp.v1.column(k - 1));
                        let pa = t_matvec(&sp.v2, &sp.abar1.column(k - 1));
                        Ok(Some((dot(&pv, &pv) - dot(&pa, &pa)).abs() > gap * eps))
                    }
                    LemmaId::Lemma9 => {
                        let pi = proof_intermediates(&sp, k)?;
                        Ok(Some(1.0 - pi.beta_k * pi.beta_k > gap * (1.0 + eps)))
                    }
                    _ => {
                        let pi = proof_intermediates(&sp, k)?;
                        Ok(Some(pi.cross_inner * pi.cross_inner > eps))
                    }
                }
            }))
        }
    }
}

/// Aggregated outcomes at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportCell {
    pub n: usize,
    /// Trials entering the rate (not degenerate, not excluded).
    pub valid: usize,
    pub failures: usize,
    pub degenerate: usize,
    #[serde(default)]
    pub excluded: usize,
    pub p_hat: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

impl ReportCell {
    pub fn from_counts(n: usize, valid: usize, failures: usize, degenerate: usize) -> Self {
        let (p_hat, wilson_lo, wilson_hi) = if valid == 0 {
            (0.0, 0.0, 1.0)
        } else {
            let (lo, hi) = wilson_interval(failures, valid);
            (failures as f64 / valid as f64, lo, hi)
        };
        ReportCell { n, valid, failures, degenerate, excluded: 0, p_hat, wilson_lo, wilson_hi }
    }

    fn from_outcomes(n: usize, outcomes: &[Outcome]) -> Self {
        let count = |o: Outcome| outcomes.iter().filter(|&&x| x == o).count();
        let failures = count(Outcome::Violated);
        let mut cell = Self::from_counts(n, failures + count(Outcome::Held), failures, count(Outcome::Degenerate));
        cell.excluded = count(Outcome::Excluded);
        cell
    }
}

/// Least-squares line through `(n, ln p̂)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationReport {
    pub config: ExperimentConfig,
    pub cells: Vec<ReportCell>,
    pub fit: Option<DecayFit>,
}

impl ConcentrationReport {
    /// Assembles a report and attaches a decay fit when one is possible.
    pub fn new(config: ExperimentConfig, cells: Vec<ReportCell>) -> Self {
        let mut report = ConcentrationReport { config, cells, fit: None };
        report.fit = fit_decay(&report).ok();
        report
    }

    pub fn cell(&self, n: usize) -> Option<&ReportCell> {
        self.cells.iter().find(|c| c.n == n)
    }
}

/// Wilson score interval at 95% for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize) -> (f64, f64) {
    assert!(n > 0 && k <= n);
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = WILSON_Z / denom * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = if k == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Violation rate of the affinity bound at `epsilon` over pair-trial records.
pub fn failure_rate(records: &[TrialRecord], epsilon: f64) -> Result<(f64, f64, f64)> {
    let valid: Vec<_> = records.iter().filter(|r| r.counts()).collect();
    if valid.is_empty() {
        return Err(invalid("no non-degenerate records"));
    }
    let k = valid.iter().filter(|r| r.normalized_deviation > epsilon).count();
    let (lo, hi) = wilson_interval(k, valid.len());
    Ok((k as f64 / valid.len() as f64, lo, hi))
}

/// Ordinary least squares of `ln p̂` on `n` over cells with at least
/// [`MIN_FAILURES_FOR_FIT`] failures.
pub fn fit_decay(report: &ConcentrationReport) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = report
        .cells
        .iter()
        .filter(|c| c.failures >= MIN_FAILURES_FOR_FIT && c.p_hat > 0.0)
        .map(|c| (c.n as f64, c.p_hat.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(invalid(format!(
            "decay fit needs >= 2 grid points with >= {MIN_FAILURES_FOR_FIT} failures, found {}",
            pts.len()
        )));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("decay fit needs distinct n values"));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if ss_tot <= f64::EPSILON * my.abs().max(1.0) { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(DecayFit { slope, intercept, r2, points: pts.len() })
}

/// Execution knobs that never affect results.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    /// Worker cap; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

/// Runs `trials` trials at every grid point and aggregates in index order.
pub fn sweep(config: &ExperimentConfig) -> Result<ConcentrationReport> {
    sweep_with(config, RunOptions::default())
}

pub fn sweep_with(config: &ExperimentConfig, options: RunOptions) -> Result<ConcentrationReport> {
    config.validate_basic()?;
    let run = || -> Result<Vec<ReportCell>> {
        config
            .n_grid
            .iter()
            .map(|&n| {
                let outcomes = (0..config.trials)
                    .into_par_iter()
                    .map(|i| run_trial(config, n, i))
                    .collect::<Result<Vec<_>>>()?;
                Ok(ReportCell::from_outcomes(n, &outcomes))
            })
            .collect()
    };
    let cells = match options.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| invalid(format!("thread pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    Ok(ConcentrationReport::new(config.clone(), cells))
}

/// Validates `config` against its lemma, then sweeps it.
pub fn verify_lemma(config: &ExperimentConfig) -> Result<ConcentrationReport> {
    verify_lemma_with(config, RunOptions::default())
}

pub fn verify_lemma_with(config: &ExperimentConfig, options: RunOptions) -> Result<ConcentrationReport> {
    config.validate()?;
    sweep_with(config, options)
}
