//! Lorenz-96 dynamics and a fixed-step RK4 integrator.
//!
//! The tendency is the canonical form
//!
//! ```text
//! dx_j/dt = (x_{j+1} - x_{j-2}) x_{j-1} - x_j + F
//! ```
//!
//! with cyclic indices. The integrator advances states on a uniform grid; the
//! same step is used for the truth and every ensemble member.

use crate::error::{Error, Result};

/// Smallest dimension for which the cyclic stencil `j-2, j-1, j+1` is distinct.
pub const MIN_DIMENSION: usize = 4;

/// Forcing used in every experiment.
pub const DEFAULT_FORCING: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < MIN_DIMENSION {
            return Err(Error::InvalidDimension(format!(
                "Lorenz-96 state needs at least {MIN_DIMENSION} components, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("state contains non-finite values".into()));
        }
        Ok(Self(values))
    }

    /// The constant state `F` with `perturbation` added to the first component.
    pub fn perturbed_fixed_point(dim: usize, forcing: f64, perturbation: f64) -> Result<Self> {
        let mut values = vec![forcing; dim];
        if let Some(first) = values.first_mut() {
            *first += perturbation;
        }
        Self::new(values)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for StateVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<StateVector>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<StateVector>) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::InvalidParameter(format!(
                "trajectory has {} times but {} states",
                times.len(),
                states.len()
            )));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("trajectory times must be strictly increasing".into()));
        }
        Ok(Self { times, states })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, StateVector::dim)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[StateVector] {
        &self.states
    }

    pub fn state(&self, index: usize) -> &StateVector {
        &self.states[index]
    }

    /// The sub-trajectory starting at `start` (inclusive).
    pub fn tail_from(&self, start: usize) -> Trajectory {
        Trajectory {
            times: self.times[start..].to_vec(),
            states: self.states[start..].to_vec(),
        }
    }
}

/// Cyclic Lorenz-96 system with constant forcing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lorenz96 {
    pub forcing: f64,
}

impl Default for Lorenz96 {
    fn default() -> Self {
        Self {
            forcing: DEFAULT_FORCING,
        }
    }
}

impl Lorenz96 {
    pub fn new(forcing: f64) -> Result<Self> {
        if !forcing.is_finite() {
            return Err(Error::InvalidParameter("forcing must be finite".into()));
        }
        Ok(Self { forcing })
    }

    /// Writes the tendency of `x` into `out`. Both slices must have the same length >= 4.
    pub fn tendency_into(&self, x: &[f64], out: &mut [f64]) {
        let d = x.len();
        debug_assert!(d >= MIN_DIMENSION && out.len() == d);
        for j in 0..d {
            let xp1 = x[(j + 1) % d];
            let xm1 = x[(j + d - 1) % d];
            let xm2 = x[(j + d - 2) % d];
            out[j] = (xp1 - xm2) * xm1 - x[j] + self.forcing;
        }
    }

    pub fn tendency(&self, state: &[f64]) -> Result<Vec<f64>> {
        check_dim(state.len())?;
        let mut out = vec![0.0; state.len()];
        self.tendency_into(state, &mut out);
        Ok(out)
    }

    /// Advances `x` in place by one classical RK4 step.
    ///
    /// Returns `false` if the result is not finite; `x` then holds the non-finite values.
    pub fn rk4_in_place(&self, x: &mut [f64], dt: f64, work: &mut Rk4Workspace) -> bool {
        let d = x.len();
        work.resize(d);
        let Rk4Workspace { k1, k2, k3, k4, tmp } = work;

        self.tendency_into(x, k1);
        for i in 0..d {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        self.tendency_into(tmp, k2);
        for i in 0..d {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        self.tendency_into(tmp, k3);
        for i in 0..d {
            tmp[i] = x[i] + dt * k3[i];
        }
        self.tendency_into(tmp, k4);

        let mut finite = true;
        for i in 0..d {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            finite &= x[i].is_finite();
        }
        finite
    }

    /// One RK4 step of size `dt` from `state`.
    pub fn integrate_step(&self, state: &StateVector, dt: f64) -> Result<StateVector> {
        check_dt(dt)?;
        let mut x = state.as_slice().to_vec();
        let mut work = Rk4Workspace::default();
        if !self.rk4_in_place(&mut x, dt, &mut work) {
            return Err(Error::IntegrationDiverged { step: 0 });
        }
        Ok(StateVector(x))
    }

    /// Integrates `n_steps` RK4 steps from `x0`, keeping every state.
    ///
    /// Time is measured from `x0`, which sits at `t = 0`.
    pub fn generate_truth(&self, x0: &StateVector, dt: f64, n_steps: usize) -> Result<Trajectory> {
        check_dt(dt)?;
        if n_steps == 0 {
            return Err(Error::InvalidParameter("n_steps must be at least 1".into()));
        }
        let mut times = Vec::with_capacity(n_steps + 1);
        let mut states = Vec::with_capacity(n_steps + 1);
        times.push(0.0);
        states.push(x0.clone());

        let mut x = x0.as_slice().to_vec();
        let mut work = Rk4Workspace::default();
        for step in 1..=n_steps {
            if !self.rk4_in_place(&mut x, dt, &mut work) {
                return Err(Error::IntegrationDiverged { step });
            }
            times.push(step as f64 * dt);
            states.push(StateVector(x.clone()));
        }
        Ok(Trajectory { times, states })
    }
}

/// Scratch buffers reused across RK4 steps.
#[derive(Debug, Default, Clone)]
pub struct Rk4Workspace {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4Workspace {
    fn resize(&mut self, d: usize) {
        for buf in [&mut self.k1, &mut self.k2, &mut self.k3, &mut self.k4, &mut self.tmp] {
            buf.resize(d, 0.0);
        }
    }
}

fn check_dim(d: usize) -> Result<()> {
    if d < MIN_DIMENSION {
        return Err(Error::InvalidDimension(format!(
            "Lorenz-96 state needs at least {MIN_DIMENSION} components, got {d}"
        )));
    }
    Ok(())
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
    }
    Ok(())
}
