//! Agent open-loop models.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// `ẋ = Ax + Bu`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if !a.is_square() || a.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "state matrix must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "input matrix must be {}xp with p >= 1, got {}x{}",
                a.nrows(),
                b.nrows(),
                b.ncols()
            )));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// `A·x + B·u`.
    pub fn drift(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dims(x, u)?;
        Ok(&self.a * x + &self.b * u)
    }

    fn check_dims(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<()> {
        if x.len() != self.state_dim() || u.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "expected x in R^{} and u in R^{}, got R^{} and R^{}",
                self.state_dim(),
                self.input_dim(),
                x.len(),
                u.len()
            )));
        }
        Ok(())
    }
}

/// Scalar function applied component-wise in a [`Nonlinearity::Terms`] map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarFn {
    Sin,
    Tanh,
    Identity,
}

impl ScalarFn {
    fn eval(self, v: f64) -> f64 {
        match self {
            ScalarFn::Sin => v.sin(),
            ScalarFn::Tanh => v.tanh(),
            ScalarFn::Identity => v,
        }
    }
}

/// One additive term `f[output] += coeff · func(x[input])`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarTerm {
    pub output: usize,
    pub input: usize,
    pub coeff: f64,
    pub func: ScalarFn,
}

type MapFn = dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync;

/// The nonlinear map `f: Rⁿ → Rᵐ`.
#[derive(Clone)]
pub enum Nonlinearity {
    /// Sum of scalar terms; serializable in scenario files.
    Terms { output_dim: usize, terms: Vec<ScalarTerm> },
    /// Arbitrary pure function.
    Custom { output_dim: usize, map: Arc<MapFn> },
}

impl fmt::Debug for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nonlinearity::Terms { output_dim, terms } => {
                f.debug_struct("Terms").field("output_dim", output_dim).field("terms", terms).finish()
            }
            Nonlinearity::Custom { output_dim, .. } => {
                f.debug_struct("Custom").field("output_dim", output_dim).finish_non_exhaustive()
            }
        }
    }
}

impl Nonlinearity {
    pub fn custom<F>(output_dim: usize, map: F) -> Self
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Nonlinearity::Custom { output_dim, map: Arc::new(map) }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Nonlinearity::Terms { output_dim, .. } | Nonlinearity::Custom { output_dim, .. } => *output_dim,
        }
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let out = match self {
            Nonlinearity::Terms { output_dim, terms } => {
                let mut out = DVector::zeros(*output_dim);
                for t in terms {
                    let xi = *x
                        .get(t.input)
                        .ok_or_else(|| Error::Dimension(format!("term reads x[{}] of R^{}", t.input, x.len())))?;
                    let slot = out
                        .get_mut(t.output)
                        .ok_or_else(|| Error::Dimension(format!("term writes f[{}] of R^{output_dim}", t.output)))?;
                    *slot += t.coeff * t.func.eval(xi);
                }
                out
            }
            Nonlinearity::Custom { output_dim, map } => {
                let out = map(x);
                if out.len() != *output_dim {
                    return Err(Error::Numerical(format!(
                        "nonlinearity returned R^{} instead of R^{output_dim}",
                        out.len()
                    )));
                }
                out
            }
        };
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("nonlinearity produced a non-finite value".into()));
        }
        Ok(out)
    }
}

/// `ẋ = Ax + D₁f(x) + Bu` with `f` Lipschitz with constant `gamma`.
#[derive(Debug, Clone)]
pub struct NonlinearModel {
    linear: LinearModel,
    d1: DMatrix<f64>,
    f: Nonlinearity,
    gamma: f64,
}

impl NonlinearModel {
    pub fn new(linear: LinearModel, d1: DMatrix<f64>, f: Nonlinearity, gamma: f64) -> Result<Self> {
        if d1.nrows() != linear.state_dim() || d1.ncols() != f.output_dim() {
            return Err(Error::Dimension(format!(
                "D1 must be {}x{}, got {}x{}",
                linear.state_dim(),
                f.output_dim(),
                d1.nrows(),
                d1.ncols()
            )));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Argument(format!("Lipschitz constant must be positive, got {gamma}")));
        }
        Ok(Self { linear, d1, f, gamma })
    }

    pub fn linear(&self) -> &LinearModel {
        &self.linear
    }

    pub fn d1(&self) -> &DMatrix<f64> {
        &self.d1
    }

    pub fn nonlinearity(&self) -> &Nonlinearity {
        &self.f
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `A·x + D₁·f(x) + B·u`.
    pub fn drift(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        let mut dx = self.linear.drift(x, u)?;
        let fx = self.f.eval(x)?;
        dx.gemv(1.0, &self.d1, &fx, 1.0);
        Ok(dx)
    }

    /// Spot-checks the declared Lipschitz constant on random pairs drawn
    /// uniformly from the ball of the given radius.
    pub fn check_lipschitz(&self, n_samples: usize, radius: f64, seed: u64) -> Result<LipschitzReport> {
        if n_samples == 0 || !(radius > 0.0) {
            return Err(Error::Argument("need n_samples >= 1 and radius > 0".into()));
        }
        let n = self.linear.state_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut max_ratio = 0.0f64;
        for _ in 0..n_samples {
            let x = sample_ball(&mut rng, n, radius);
            let y = sample_ball(&mut rng, n, radius);
            let dist = (&x - &y).norm();
            if dist == 0.0 {
                continue;
            }
            let ratio = (self.f.eval(&x)? - self.f.eval(&y)?).norm() / dist;
            max_ratio = max_ratio.max(ratio);
        }
        Ok(LipschitzReport { max_ratio, pass: max_ratio <= self.gamma * (1.0 + 1e-9) })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzReport {
    pub max_ratio: f64,
    pub pass: bool,
}

fn sample_ball(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> DVector<f64> {
    loop {
        let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 0.0 {
            let r = radius * rng.random::<f64>().powf(1.0 / n as f64);
            return g * (r / norm);
        }
    }
}

/// Either kind of agent model.
#[derive(Debug, Clone)]
pub enum AgentModel {
    Linear(LinearModel),
    Nonlinear(NonlinearModel),
}

impl AgentModel {
    pub fn linear_part(&self) -> &LinearModel {
        match self {
            AgentModel::Linear(m) => m,
            AgentModel::Nonlinear(m) => m.linear(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.linear_part().state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.linear_part().input_dim()
    }

    pub fn drift(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            AgentModel::Linear(m) => m.drift(x, u),
            AgentModel::Nonlinear(m) => m.drift(x, u),
        }
    }
}

impl From<LinearModel> for AgentModel {
    fn from(m: LinearModel) -> Self {
        AgentModel::Linear(m)
    }
}

impl From<NonlinearModel> for AgentModel {
    fn from(m: NonlinearModel) -> Self {
        AgentModel::Nonlinear(m)
    }
}

/// Lipschitz constant of the manipulator's gravity term.
pub const MANIPULATOR_GAMMA: f64 = 0.333;

/// Single-link manipulator with a revolute joint driven by a DC motor.
///
/// State is (link angle, link rate, rotor angle, rotor rate); the gravity
/// term `−0.333·sin(x₃)` enters the fourth equation.
pub fn manipulator_model() -> NonlinearModel {
    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(4, 4, &[
        0.0,    1.0,   0.0,   0.0,
        -48.6, -1.25,  48.6,  0.0,
        0.0,    0.0,   0.0,   10.0,
        1.95,   0.0,  -1.95,  0.0,
    ]);
    let b = DMatrix::from_column_slice(4, 1, &[0.0, 21.6, 0.0, 0.0]);
    let f = Nonlinearity::Terms {
        output_dim: 4,
        terms: vec![ScalarTerm { output: 3, input: 2, coeff: -MANIPULATOR_GAMMA, func: ScalarFn::Sin }],
    };
    let linear = LinearModel::new(a, b).expect("manipulator matrices are consistent");
    NonlinearModel::new(linear, DMatrix::identity(4, 4), f, MANIPULATOR_GAMMA).expect("manipulator model is consistent")
}
