//! Seeded synthetic-population generators with analytic ground truth.
//!
//! The hypercube family draws controls uniformly from `[0,5]^p` and treated
//! units from the shifted cube `∏[η_j, η_j+5]`, with a linear outcome
//! `Y = β₀ + βX + T(γ₀ + γX) + ε`. The ATT reported in the ground truth is
//! analytic; two conventions exist because the effect can vary with `X`:
//! over the common support `∏[η_j, 5]` (where matching identifies the
//! effect, mean of `X_j` is `(η_j+5)/2`) or over the full treated cube
//! (mean `η_j + 2.5`). The builtin scenario table uses the common-support
//! convention; the memo variant uses the full-treated one.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Normal, StandardNormal};

use crate::model::{GroundTruth, Sample};
use crate::{Error, Result};

/// Which treated subpopulation the analytic ATT averages the per-unit
/// effect over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SupportConvention {
    /// Mean over the common support `∏[η_j, 5]`: `E[X_j] = (η_j+5)/2`.
    #[default]
    CommonSupport,
    /// Mean over the full treated cube `∏[η_j, η_j+5]`: `E[X_j] = η_j+2.5`.
    FullTreated,
}

/// Generative description of a hypercube scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub p: usize,
    /// Treated-cube offset per coordinate, each in `[0, 5]`.
    pub eta: Vec<f64>,
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub gamma0: f64,
    pub gamma: Vec<f64>,
    /// Outcome noise standard deviation.
    pub sigma: f64,
    pub n_control: usize,
    pub n_treated: usize,
    pub att_convention: SupportConvention,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.eta.len() != self.p {
            return Err(Error::DimensionMismatch { expected: self.p, actual: self.eta.len() });
        }
        if self.beta.len() != self.p {
            return Err(Error::DimensionMismatch { expected: self.p, actual: self.beta.len() });
        }
        if self.gamma.len() != self.p {
            return Err(Error::DimensionMismatch { expected: self.p, actual: self.gamma.len() });
        }
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::NonFinite("sigma"));
        }
        let finite = self
            .eta
            .iter()
            .chain(self.beta.iter())
            .chain(self.gamma.iter())
            .all(|v| v.is_finite());
        if !finite || !self.beta0.is_finite() || !self.gamma0.is_finite() {
            return Err(Error::NonFinite("scenario coefficients"));
        }
        if self.eta.iter().any(|&e| !(0.0..=5.0).contains(&e)) {
            return Err(Error::NonFinite("eta outside [0, 5]"));
        }
        Ok(())
    }

    /// The analytic ATT under this spec's support convention.
    pub fn analytic_att(&self) -> f64 {
        let mean = |eta: f64| match self.att_convention {
            SupportConvention::CommonSupport => (eta + 5.0) / 2.0,
            SupportConvention::FullTreated => eta + 2.5,
        };
        self.gamma0 + self.gamma.iter().zip(&self.eta).map(|(&g, &e)| g * mean(e)).sum::<f64>()
    }
}

/// Fraction of the treated cube inside the common support:
/// `∏_j (5 − η_j)/5`.
pub fn common_support_fraction(spec: &ScenarioSpec) -> f64 {
    spec.eta.iter().map(|&e| (5.0 - e) / 5.0).product()
}

/// Draws a hypercube scenario: controls first (`0..n_control`), then treated
/// units, with independent Gaussian outcome noise. Ground truth carries the
/// analytic ATT and the per-unit effects `γ₀ + γX_i`.
pub fn gen_king_nielson(spec: &ScenarioSpec, seed: u64) -> Result<(Sample, GroundTruth)> {
    spec.validate()?;
    let mut rng = crate::seeds::rng(seed, &[0x6b6e]);
    let n = spec.n_control + spec.n_treated;
    let mut cov = DMatrix::zeros(n, spec.p);
    for r in 0..n {
        let treated = r >= spec.n_control;
        for c in 0..spec.p {
            let offset = if treated { spec.eta[c] } else { 0.0 };
            cov[(r, c)] = rng.random_range(0.0..5.0) + offset;
        }
    }
    let treatment: Vec<f64> = (0..n).map(|r| f64::from(r >= spec.n_control)).collect();
    let outcome_model = OutcomeModel {
        beta0: spec.beta0,
        beta: spec.beta.clone(),
        gamma0: spec.gamma0,
        gamma: spec.gamma.clone(),
        sigma: spec.sigma,
    };
    let (sample, _) = finish_linear_outcome(cov, treatment, &outcome_model, &mut rng)?;
    let effects: Vec<f64> = (0..n)
        .map(|r| {
            spec.gamma0
                + (0..spec.p).map(|c| spec.gamma[c] * sample.covariates()[(r, c)]).sum::<f64>()
        })
        .collect();
    let truth = GroundTruth::new(spec.analytic_att(), Some(effects))?;
    Ok((sample, truth))
}

fn table_scenario(
    p: usize,
    eta: Vec<f64>,
    beta: Vec<f64>,
    gamma0: f64,
    gamma: Vec<f64>,
) -> ScenarioSpec {
    ScenarioSpec {
        p,
        eta,
        beta0: 0.0,
        beta,
        gamma0,
        gamma,
        sigma: 1.0,
        n_control: 100,
        n_treated: 100,
        att_convention: SupportConvention::CommonSupport,
    }
}

fn padded(mut head: Vec<f64>, p: usize) -> Vec<f64> {
    head.resize(p, 0.0);
    head
}

/// The nine builtin scenarios. All have σ=1, 100 controls, 100 treated, and
/// ATT = 2 under the common-support convention.
pub fn builtin_scenarios() -> Vec<ScenarioSpec> {
    let ones = |p: usize| vec![1.0; p];
    vec![
        table_scenario(2, ones(2), vec![1.0, 1.0], 2.0, vec![0.0, 0.0]),
        table_scenario(10, padded(ones(2), 10), padded(vec![1.0, 1.0], 10), 2.0, vec![0.0; 10]),
        table_scenario(2, ones(2), vec![2.0, 0.2], 2.0, vec![0.0, 0.0]),
        table_scenario(2, ones(2), vec![1.0, 1.0], -1.0, vec![1.0, 0.0]),
        table_scenario(
            10,
            padded(ones(2), 10),
            padded(vec![1.0, 1.0], 10),
            -1.0,
            padded(vec![1.0], 10),
        ),
        table_scenario(2, ones(2), vec![2.0, 0.2], -1.0, vec![1.0, 0.0]),
        table_scenario(5, ones(5), padded(vec![1.0, 1.0], 5), 2.0, vec![0.0; 5]),
        table_scenario(10, ones(10), padded(vec![1.0, 1.0], 10), 2.0, vec![0.0; 10]),
        table_scenario(15, ones(15), padded(vec![1.0, 1.0], 15), 2.0, vec![0.0; 15]),
    ]
}

/// Builtin scenario by 1-based table index.
pub fn builtin_scenario(id: usize) -> Result<ScenarioSpec> {
    if !(1..=9).contains(&id) {
        return Err(Error::UnknownScenario(id));
    }
    Ok(builtin_scenarios().swap_remove(id - 1))
}

/// The troubleshooting-memo variant: `Y = X1 + X2 + T(−3.5 + X1) + ε` with
/// the treated cube shifted by `(eta, 0)`. Its ATT is stated over the full
/// treated population, `η − 1`.
pub fn memo_scenario(eta: f64) -> ScenarioSpec {
    ScenarioSpec {
        att_convention: SupportConvention::FullTreated,
        ..table_scenario(2, vec![eta, 0.0], vec![1.0, 1.0], -3.5, vec![1.0, 0.0])
    }
}

/// The binary strong-confounding example: `X ~ Bernoulli(0.25)`, treatment
/// and outcome both follow 0.95/0.05 conditionals on `X`, outcome
/// independent of treatment. True effect 0.
pub fn gen_confounding_binary(n: usize, seed: u64) -> Result<(Sample, GroundTruth)> {
    assert!(n >= 10, "confounding example needs n >= 10");
    let mut rng = crate::seeds::rng(seed, &[0xc0f]);
    let mut x = Vec::with_capacity(n);
    let mut t = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let xi = rng.random_bool(0.25);
        let prob = if xi { 0.95 } else { 0.05 };
        x.push(f64::from(xi));
        t.push(f64::from(rng.random_bool(prob)));
        y.push(f64::from(rng.random_bool(prob)));
    }
    let sample = Sample::new(DMatrix::from_column_slice(n, 1, &x), t, y, None)?;
    let truth = GroundTruth::new(0.0, Some(vec![0.0; n]))?;
    Ok((sample, truth))
}

/// Outcome model for generators whose covariate law is fixed (Hainmueller).
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeModel {
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub gamma0: f64,
    pub gamma: Vec<f64>,
    pub sigma: f64,
}

impl Default for OutcomeModel {
    /// `Y = X1 + X2 + 2T + ε`, σ = 1.
    fn default() -> Self {
        OutcomeModel {
            beta0: 0.0,
            beta: vec![1.0, 1.0, 0.0, 0.0, 0.0, 0.0],
            gamma0: 2.0,
            gamma: vec![0.0; 6],
            sigma: 1.0,
        }
    }
}

/// Covariance of the three jointly normal Hainmueller covariates.
fn hainmueller_sigma() -> DMatrix<f64> {
    DMatrix::from_row_slice(3, 3, &[2.0, 1.0, -1.0, 1.0, 1.0, -0.5, -1.0, -0.5, 1.0])
}

/// Mixed continuous/binary six-covariate design: `(X1,X2,X3)` jointly normal
/// with variances `(2,1,1)` and covariances `(1,−1,−0.5)`; `X4 ~ U[−3,3]`;
/// `X5 ~ χ²(1)`; `X6 ~ Bernoulli(0.5)`. Treatment is the latent-index rule
/// `T = 1{X1 + 2X2 − 2X3 − X4 − 0.5X5 + X6 + ε > 0}` with standard-logistic
/// `ε`. The ground-truth ATT is the mean per-unit effect over the realized
/// treated units (exactly `γ₀` for a constant effect).
pub fn gen_hainmueller(
    n: usize,
    seed: u64,
    outcome: &OutcomeModel,
) -> Result<(Sample, GroundTruth)> {
    assert!(n >= 10, "generator needs n >= 10");
    if outcome.beta.len() != 6 || outcome.gamma.len() != 6 {
        return Err(Error::DimensionMismatch {
            expected: 6,
            actual: outcome.beta.len().max(outcome.gamma.len()),
        });
    }
    let factor = psd_factor(&hainmueller_sigma())?;
    let mut rng = crate::seeds::rng(seed, &[0x6861]);
    let chi = ChiSquared::new(1.0).expect("valid dof");
    let mut cov = DMatrix::zeros(n, 6);
    let mut treatment = Vec::with_capacity(n);
    for r in 0..n {
        let z = DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
        let normal_part = &factor * z;
        for c in 0..3 {
            cov[(r, c)] = normal_part[c];
        }
        cov[(r, 3)] = rng.random_range(-3.0..3.0);
        cov[(r, 4)] = chi.sample(&mut rng);
        cov[(r, 5)] = f64::from(rng.random_bool(0.5));
        let index = cov[(r, 0)] + 2.0 * cov[(r, 1)] - 2.0 * cov[(r, 2)]
            - cov[(r, 3)]
            - 0.5 * cov[(r, 4)]
            + cov[(r, 5)]
            + standard_logistic(&mut rng);
        treatment.push(f64::from(index > 0.0));
    }
    finish_linear_outcome(cov, treatment, outcome, &mut rng)
}

/// Gaussian covariates with a latent-index logistic treatment rule and a
/// constant treatment effect: `X ~ N(0, Σ)`,
/// `T = 1{α₀ + Xα + w > 0}` with standard-logistic `w`, and
/// `Y = Xβ + τT + ε`, `ε ~ N(0,1)`. ATT is exactly `τ`.
pub fn gen_gaussian_latent(
    sigma: &DMatrix<f64>,
    beta: &[f64],
    alpha: &[f64],
    alpha0: f64,
    tau: f64,
    n: usize,
    seed: u64,
) -> Result<(Sample, GroundTruth)> {
    let p = sigma.nrows();
    if beta.len() != p {
        return Err(Error::DimensionMismatch { expected: p, actual: beta.len() });
    }
    if alpha.len() != p {
        return Err(Error::DimensionMismatch { expected: p, actual: alpha.len() });
    }
    let factor = psd_factor(sigma)?;
    let mut rng = crate::seeds::rng(seed, &[0x6c61]);
    let mut cov = DMatrix::zeros(n, p);
    let mut treatment = Vec::with_capacity(n);
    for r in 0..n {
        let z = DVector::from_fn(p, |_, _| StandardNormal.sample(&mut rng));
        let x = &factor * z;
        let mut index = alpha0;
        for c in 0..p {
            cov[(r, c)] = x[c];
            index += alpha[c] * x[c];
        }
        treatment.push(f64::from(index + standard_logistic(&mut rng) > 0.0));
    }
    let outcome = OutcomeModel {
        beta0: 0.0,
        beta: beta.to_vec(),
        gamma0: tau,
        gamma: vec![0.0; p],
        sigma: 1.0,
    };
    let (sample, _) = finish_linear_outcome(cov, treatment, &outcome, &mut rng)?;
    let n_units = sample.n_units();
    let truth = GroundTruth::new(tau, Some(vec![tau; n_units]))?;
    Ok((sample, truth))
}

fn finish_linear_outcome(
    cov: DMatrix<f64>,
    treatment: Vec<f64>,
    model: &OutcomeModel,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<(Sample, GroundTruth)> {
    let n = cov.nrows();
    let noise = Normal::new(0.0, model.sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut outcome = Vec::with_capacity(n);
    let mut effects = Vec::with_capacity(n);
    for r in 0..n {
        let x = cov.row(r);
        let base: f64 =
            model.beta0 + x.iter().zip(&model.beta).map(|(&xi, &b)| xi * b).sum::<f64>();
        let effect: f64 =
            model.gamma0 + x.iter().zip(&model.gamma).map(|(&xi, &g)| xi * g).sum::<f64>();
        let eps = if model.sigma > 0.0 { noise.sample(rng) } else { 0.0 };
        outcome.push(base + treatment[r] * effect + eps);
        effects.push(effect);
    }
    let att = {
        let treated: Vec<f64> = effects
            .iter()
            .zip(&treatment)
            .filter(|(_, &t)| t == 1.0)
            .map(|(&e, _)| e)
            .collect();
        if treated.is_empty() {
            model.gamma0
        } else {
            treated.iter().sum::<f64>() / treated.len() as f64
        }
    };
    let sample = Sample::new(cov, treatment, outcome, None)?;
    let truth = GroundTruth::new(att, Some(effects))?;
    Ok((sample, truth))
}

fn standard_logistic(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    (u / (1.0 - u)).ln()
}

/// A factor `F` with `FFᵀ = Σ` for symmetric PSD `Σ`, by eigendecomposition.
/// Errors when an eigenvalue is significantly negative.
fn psd_factor(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = sigma.nrows();
    if sigma.ncols() != p {
        return Err(Error::DimensionMismatch { expected: p, actual: sigma.ncols() });
    }
    let symmetrized = (sigma + sigma.transpose()) * 0.5;
    let eigen = symmetrized.symmetric_eigen();
    let lambda_max = eigen.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let mut factor = eigen.eigenvectors;
    for c in 0..p {
        let lambda = eigen.eigenvalues[c];
        if lambda < -1e-10 * lambda_max.max(1.0) {
            return Err(Error::CovarianceNotPsd(lambda));
        }
        factor.column_mut(c).scale_mut(lambda.max(0.0).sqrt());
    }
    Ok(factor)
}
