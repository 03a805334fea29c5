use std::io::{BufRead, BufReader, Read, Write};

use nalgebra::{DMatrix, DMatrixView, DVector, DVectorView};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// A sampled state sequence `x_0, ..., x_{N-1}` with uniform sampling
/// interval. The prediction-error machinery views it through the two
/// `n x (N-1)` matrices `X0` (all but the last state) and `X1` (all but the
/// first), so that column `k` of `X1` is the successor of column `k` of `X0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    states: DMatrix<f64>,
    dt: f64,
}

impl Trajectory {
    pub fn from_states(states: DMatrix<f64>, dt: f64) -> Result<Self> {
        if states.ncols() < 2 {
            return Err(Error::InvalidConfig(format!(
                "trajectory needs at least 2 samples, got {}",
                states.ncols()
            )));
        }
        if !(dt > 0.0) {
            return Err(Error::InvalidConfig(format!("dt must be positive, got {dt}")));
        }
        if states.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("trajectory contains non-finite states".into()));
        }
        Ok(Self { states, dt })
    }

    /// State dimension `n`.
    pub fn state_dim(&self) -> usize {
        self.states.nrows()
    }

    /// Sample count `N`.
    pub fn num_samples(&self) -> usize {
        self.states.ncols()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn states(&self) -> &DMatrix<f64> {
        &self.states
    }

    pub fn initial_state(&self) -> DVectorView<'_, f64> {
        self.states.column(0)
    }

    /// States `x_0 .. x_{N-2}` as columns.
    pub fn x0_matrix(&self) -> DMatrixView<'_, f64> {
        self.states.columns(0, self.num_samples() - 1)
    }

    /// States `x_1 .. x_{N-1}` as columns.
    pub fn x1_matrix(&self) -> DMatrixView<'_, f64> {
        self.states.columns(1, self.num_samples() - 1)
    }

    /// Writes `t,x1,..,xn` rows, one per sample.
    pub fn to_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        let n = self.state_dim();
        write!(w, "t")?;
        for i in 1..=n {
            write!(w, ",x{i}")?;
        }
        writeln!(w)?;
        for k in 0..self.num_samples() {
            write!(w, "{}", k as f64 * self.dt)?;
            for i in 0..n {
                write!(w, ",{}", self.states[(i, k)])?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads back the format written by [`Trajectory::to_csv`]. The sampling
    /// interval is recovered from the time column and must be uniform.
    pub fn from_csv(r: impl Read) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut times = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| Error::Io {
                path: "<csv>".into(),
                source,
            })?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if idx == 0 {
                if !line.starts_with('t') {
                    return Err(Error::Numeric("trajectory CSV missing header".into()));
                }
                continue;
            }
            let mut fields = line.split(',');
            let t: f64 = fields
                .next()
                .ok_or_else(|| Error::Numeric("empty CSV row".into()))?
                .parse()
                .map_err(|e| Error::Numeric(format!("bad time field: {e}")))?;
            let vals: std::result::Result<Vec<f64>, _> = fields.map(str::parse).collect();
            let vals = vals.map_err(|e| Error::Numeric(format!("bad state field: {e}")))?;
            times.push(t);
            rows.push(vals);
        }
        if rows.len() < 2 {
            return Err(Error::Numeric("trajectory CSV has fewer than 2 samples".into()));
        }
        let n = rows[0].len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Numeric("ragged trajectory CSV".into()));
        }
        let dt = times[1] - times[0];
        for k in 1..times.len() {
            let expected = times[0] + k as f64 * dt;
            if (times[k] - expected).abs() > 1e-9 * (1.0 + expected.abs()) {
                return Err(Error::Numeric("non-uniform sampling times in CSV".into()));
            }
        }
        let states = DMatrix::from_fn(n, rows.len(), |i, k| rows[k][i]);
        Trajectory::from_states(states, dt)
    }
}

/// Propagates `x_{k+1} = exp(A dt) x_k` for `num_samples` states starting
/// from `x0`. This is the exact discretization of the continuous-time system,
/// used as the data-generating truth.
pub fn simulate_true(
    a: &DMatrix<f64>,
    x0: &DVector<f64>,
    dt: f64,
    num_samples: usize,
) -> Result<Trajectory> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.nrows() != x0.len() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: x0.len(),
            context: "initial state",
        });
    }
    let step = (a * dt).exp();
    propagate(&step, x0, dt, num_samples)
}

/// Propagates the forward-Euler model `x_{k+1} = (I + dt A) x_k`. Data built
/// this way is interpolated exactly by the prediction-error objective at the
/// generating system.
pub fn simulate_euler(
    a: &DMatrix<f64>,
    x0: &DVector<f64>,
    dt: f64,
    num_samples: usize,
) -> Result<Trajectory> {
    let n = a.nrows();
    let step = DMatrix::identity(n, n) + a * dt;
    propagate(&step, x0, dt, num_samples)
}

fn propagate(
    step: &DMatrix<f64>,
    x0: &DVector<f64>,
    dt: f64,
    num_samples: usize,
) -> Result<Trajectory> {
    if num_samples < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 samples, got {num_samples}"
        )));
    }
    let n = x0.len();
    let mut states = DMatrix::zeros(n, num_samples);
    states.set_column(0, x0);
    for k in 1..num_samples {
        let next = step * states.column(k - 1);
        states.set_column(k, &next);
    }
    Trajectory::from_states(states, dt)
}

/// Adds i.i.d. Gaussian noise to every state entry. The noise variance is
/// `signal_power / 10^(snr_db / 10)` with the signal power taken as the mean
/// squared entry over the whole trajectory. `None` disables noise entirely.
pub fn add_noise(traj: &Trajectory, snr_db: Option<f64>, rng: &mut impl Rng) -> Trajectory {
    let Some(snr_db) = snr_db else {
        return traj.clone();
    };
    let num_entries = (traj.states.nrows() * traj.states.ncols()) as f64;
    let signal_power = traj.states.iter().map(|v| v * v).sum::<f64>() / num_entries;
    let sigma = (signal_power / 10f64.powf(snr_db / 10.0)).sqrt();
    let normal = Normal::new(0.0, sigma).expect("finite noise std");
    let states = traj.states.map(|v| v + normal.sample(rng));
    Trajectory {
        states,
        dt: traj.dt,
    }
}

/// Divides every entry by the Euclidean norm of the initial state.
pub fn scale_trajectory(traj: &Trajectory) -> Result<Trajectory> {
    let norm = traj.initial_state().norm();
    if norm == 0.0 {
        return Err(Error::Numeric(
            "cannot scale trajectory with zero initial state".into(),
        ));
    }
    Ok(Trajectory {
        states: &traj.states / norm,
        dt: traj.dt,
    })
}
