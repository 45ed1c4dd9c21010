use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::{Error, Result};
use crate::linalg;
use crate::models::{self, Dataset, Model, ParamVector};
use crate::rng;

/// Draws used by every empirical `R²` and `σ²` estimate.
pub const R2_DRAWS: usize = 10_000;

/// One draw of `(F̂_k, Â_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseDraw {
    pub f_hat: DVector<f64>,
    pub a_hat: DMatrix<f64>,
}

/// Constants of the variance control: `E‖F̂‖² ≤ σ²`, `E[ÂᵀÂ] ⪯ R² A`,
/// `λ ≤ eig(A) ≤ λ_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NoiseConstants {
    pub sigma2: f64,
    pub r2: f64,
    pub lambda: f64,
    pub lambda_max: f64,
}

/// A noisy drift and metric pair driving `v ← v + γF̂ − γÂv`.
pub trait NoiseSpec {
    fn name(&self) -> &'static str;
    fn dim(&self) -> usize;
    fn draw(&self, theta: &ParamVector, rng: &mut dyn RngCore) -> Result<NoiseDraw>;
    /// `F(θ) = E F̂`.
    fn mean_drift(&self, theta: &ParamVector) -> Result<DVector<f64>>;
    /// `A(θ) = E Â`.
    fn mean_matrix(&self, theta: &ParamVector) -> Result<DMatrix<f64>>;

    /// Empirical `E‖F̂‖²`.
    fn sigma2_at(&self, theta: &ParamVector, n_draws: usize, rng: &mut dyn RngCore) -> Result<f64> {
        let mut acc = 0.0;
        for _ in 0..n_draws {
            acc += self.draw(theta, rng)?.f_hat.norm_squared();
        }
        Ok(acc / n_draws as f64)
    }

    /// Smallest `ρ` with empirical `E[ÂᵀÂ] ⪯ ρ A(θ)`.
    fn r2_at(&self, theta: &ParamVector, n_draws: usize, rng: &mut dyn RngCore) -> Result<f64> {
        let d = self.dim();
        let mut acc = DMatrix::zeros(d, d);
        for _ in 0..n_draws {
            let a = self.draw(theta, rng)?.a_hat;
            acc += a.transpose() * &a;
        }
        linalg::max_generalized_eigenvalue(
            &linalg::symmetrize(&(acc / n_draws as f64)),
            &self.mean_matrix(theta)?,
        )
    }
}

/// `F̂ ≡ f`, `Â ≡ Id`: `σ² = ‖f‖²`, `λ = R² = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityNoise {
    pub f: DVector<f64>,
}

impl NoiseSpec for IdentityNoise {
    fn name(&self) -> &'static str {
        "identity"
    }

    fn dim(&self) -> usize {
        self.f.len()
    }

    fn draw(&self, _theta: &ParamVector, _rng: &mut dyn RngCore) -> Result<NoiseDraw> {
        Ok(NoiseDraw {
            f_hat: self.f.clone(),
            a_hat: DMatrix::identity(self.dim(), self.dim()),
        })
    }

    fn mean_drift(&self, _theta: &ParamVector) -> Result<DVector<f64>> {
        Ok(self.f.clone())
    }

    fn mean_matrix(&self, _theta: &ParamVector) -> Result<DMatrix<f64>> {
        Ok(DMatrix::identity(self.dim(), self.dim()))
    }
}

/// Deterministic `Â = diag(eigenvalues)` and `F̂ = scale·e_min` along the
/// smallest eigenvalue, where the velocity bound is tight up to its factor 4.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalProbe {
    pub eigenvalues: DVector<f64>,
    pub scale: f64,
}

impl DirectionalProbe {
    pub fn new(eigenvalues: DVector<f64>, scale: f64) -> Result<Self> {
        if eigenvalues.is_empty() || eigenvalues.iter().any(|e| !(*e > 0.0)) {
            return Err(Error::InvalidParameter(
                "probe eigenvalues must be positive".into(),
            ));
        }
        Ok(Self { eigenvalues, scale })
    }

    fn direction(&self) -> DVector<f64> {
        let imin = self.eigenvalues.argmin().0;
        DVector::from_fn(self.eigenvalues.len(), |i, _| {
            if i == imin {
                self.scale
            } else {
                0.0
            }
        })
    }
}

impl NoiseSpec for DirectionalProbe {
    fn name(&self) -> &'static str {
        "directional_probe"
    }

    fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    fn draw(&self, _theta: &ParamVector, _rng: &mut dyn RngCore) -> Result<NoiseDraw> {
        Ok(NoiseDraw {
            f_hat: self.direction(),
            a_hat: DMatrix::from_diagonal(&self.eigenvalues),
        })
    }

    fn mean_drift(&self, _theta: &ParamVector) -> Result<DVector<f64>> {
        Ok(self.direction())
    }

    fn mean_matrix(&self, _theta: &ParamVector) -> Result<DMatrix<f64>> {
        Ok(DMatrix::from_diagonal(&self.eigenvalues))
    }
}

/// Fisher noise of a model: `F̂ = g(θ)` on a drawn data point and
/// `Â = g̃g̃ᵀ`, so `F = E g` and `A = J`.
pub struct FisherNoise<'a, M: ?Sized> {
    pub model: &'a M,
    pub dataset: &'a Dataset,
}

impl<'a, M: Model + ?Sized> FisherNoise<'a, M> {
    pub fn new(model: &'a M, dataset: &'a Dataset) -> Self {
        Self { model, dataset }
    }

    fn gradients(
        &self,
        theta: &ParamVector,
        rng: &mut dyn RngCore,
    ) -> Result<(DVector<f64>, DVector<f64>)> {
        let s = self.dataset.draw(rng);
        let g = self.model.grad_log_loss(theta, &s.x, s.y)?;
        let y_tilde = self.model.sample_output(theta, &s.x, rng)?;
        let g_tilde = self.model.grad_log_loss(theta, &s.x, y_tilde)?;
        Ok((g, g_tilde))
    }
}

impl<M: Model + ?Sized> NoiseSpec for FisherNoise<'_, M> {
    fn name(&self) -> &'static str {
        "fisher"
    }

    fn dim(&self) -> usize {
        self.model.param_dim()
    }

    fn draw(&self, theta: &ParamVector, rng: &mut dyn RngCore) -> Result<NoiseDraw> {
        let (g, g_tilde) = self.gradients(theta, rng)?;
        Ok(NoiseDraw {
            f_hat: g,
            a_hat: linalg::outer(&g_tilde),
        })
    }

    fn mean_drift(&self, theta: &ParamVector) -> Result<DVector<f64>> {
        models::expected_gradient(self.model, theta, self.dataset)
    }

    fn mean_matrix(&self, theta: &ParamVector) -> Result<DMatrix<f64>> {
        Ok(self.model.exact_fisher(theta, self.dataset)?.into_inner())
    }

    /// `(g̃g̃ᵀ)ᵀ(g̃g̃ᵀ) = ‖g̃‖² g̃g̃ᵀ`.
    fn r2_at(&self, theta: &ParamVector, n_draws: usize, rng: &mut dyn RngCore) -> Result<f64> {
        let d = self.dim();
        let mut acc = DMatrix::zeros(d, d);
        for _ in 0..n_draws {
            let (_, g_tilde) = self.gradients(theta, rng)?;
            acc.ger(g_tilde.norm_squared(), &g_tilde, &g_tilde, 1.0);
        }
        linalg::max_generalized_eigenvalue(&(acc / n_draws as f64), &self.mean_matrix(theta)?)
    }
}

/// The noise TANGO feeds the velocity:
/// `Â = (1−δt) g̃g̃ᵀ + (δt/γ) Id`, `A = (1−δt) J + (δt/γ) Id`.
pub struct TangoNoise<'a, M: ?Sized> {
    pub fisher: FisherNoise<'a, M>,
    pub gamma: f64,
    pub delta_t: f64,
}

impl<'a, M: Model + ?Sized> TangoNoise<'a, M> {
    pub fn new(model: &'a M, dataset: &'a Dataset, gamma: f64, delta_t: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidParameter("gamma must be positive".into()));
        }
        if !(0.0..=1.0).contains(&delta_t) {
            return Err(Error::InvalidSchedule("delta_t must lie in [0, 1]".into()));
        }
        Ok(Self {
            fisher: FisherNoise::new(model, dataset),
            gamma,
            delta_t,
        })
    }

    fn shift(&self, m: DMatrix<f64>) -> DMatrix<f64> {
        let d = m.nrows();
        m * (1.0 - self.delta_t) + DMatrix::identity(d, d) * (self.delta_t / self.gamma)
    }
}

impl<M: Model + ?Sized> NoiseSpec for TangoNoise<'_, M> {
    fn name(&self) -> &'static str {
        "tango"
    }

    fn dim(&self) -> usize {
        self.fisher.dim()
    }

    fn draw(&self, theta: &ParamVector, rng: &mut dyn RngCore) -> Result<NoiseDraw> {
        let d = self.fisher.draw(theta, rng)?;
        Ok(NoiseDraw {
            f_hat: d.f_hat,
            a_hat: self.shift(d.a_hat),
        })
    }

    fn mean_drift(&self, theta: &ParamVector) -> Result<DVector<f64>> {
        self.fisher.mean_drift(theta)
    }

    fn mean_matrix(&self, theta: &ParamVector) -> Result<DMatrix<f64>> {
        Ok(self.shift(self.fisher.mean_matrix(theta)?))
    }

    fn sigma2_at(&self, theta: &ParamVector, n_draws: usize, rng: &mut dyn RngCore) -> Result<f64> {
        self.fisher.sigma2_at(theta, n_draws, rng)
    }

    /// `max(R²_{g̃g̃ᵀ}, 1/γ)`.
    fn r2_at(&self, theta: &ParamVector, n_draws: usize, rng: &mut dyn RngCore) -> Result<f64> {
        Ok(self
            .fisher
            .r2_at(theta, n_draws, rng)?
            .max(1.0 / self.gamma))
    }
}

/// Constants as sup (`σ²`, `R²`, `λ_max`) and inf (`λ`) over `thetas`, each
/// estimated from `n_draws` draws.
pub fn estimate_constants(
    noise: &dyn NoiseSpec,
    thetas: &[ParamVector],
    n_draws: usize,
    seed: u64,
) -> Result<NoiseConstants> {
    if thetas.is_empty() || n_draws == 0 {
        return Err(Error::InvalidParameter(
            "constants need at least one point and one draw".into(),
        ));
    }
    let mut r = rng::stream(seed, rng::AUX_STREAM);
    let mut c = NoiseConstants {
        sigma2: 0.0,
        r2: 0.0,
        lambda: f64::INFINITY,
        lambda_max: 0.0,
    };
    for theta in thetas {
        let a = noise.mean_matrix(theta)?;
        let eigs = linalg::symmetric_eigenvalues(&linalg::symmetrize(&a));
        c.lambda = c.lambda.min(eigs[0]);
        c.lambda_max = c.lambda_max.max(eigs[eigs.len() - 1]);
        c.sigma2 = c.sigma2.max(noise.sigma2_at(theta, n_draws, &mut r)?);
        c.r2 = c.r2.max(noise.r2_at(theta, n_draws, &mut r)?);
    }
    if !(c.lambda > 0.0) {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: c.lambda,
        });
    }
    Ok(c)
}

/// `count + 1` evenly spaced parameters (including `θ₀`) from one run of
/// the noisy iteration.
pub fn pilot_checkpoints(
    noise: &dyn NoiseSpec,
    theta0: &ParamVector,
    gamma: f64,
    delta_t: f64,
    n_steps: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<ParamVector>> {
    let every = (n_steps / count.max(1)).max(1);
    let mut r = rng::stream(seed, rng::DATA_STREAM);
    let mut out = vec![theta0.clone()];
    let mut theta = theta0.clone();
    let mut v = DVector::zeros(theta0.len());
    for k in 1..=n_steps {
        let d = noise.draw(&theta, &mut r)?;
        v = &v + (d.f_hat - d.a_hat * &v) * gamma;
        theta -= &v * delta_t;
        if !linalg::all_finite(&theta) {
            return Err(Error::Diverged { step: k });
        }
        if k % every == 0 {
            out.push(theta.clone());
        }
    }
    Ok(out)
}
