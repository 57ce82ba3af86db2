//! Server-side aggregation.

use nalgebra::{DMatrix, DVector};

use crate::design::{DesignProblem, Mode};
use crate::error::{Error, Result};
use crate::linalg::{self, sym_pinv};

/// A global estimate and its potential matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModel {
    pub theta: DVector<f64>,
    pub v: DMatrix<f64>,
}

/// Broadcast content: per-arm models (entries for inactive arms are `None`)
/// or one pooled model for every arm.
#[derive(Debug, Clone, PartialEq)]
pub enum Models {
    PerArm(Vec<Option<GlobalModel>>),
    Pooled(GlobalModel),
}

impl Models {
    pub fn for_arm(&self, a: usize) -> Option<&GlobalModel> {
        match self {
            Models::PerArm(v) => v.get(a).and_then(Option::as_ref),
            Models::Pooled(m) => Some(m),
        }
    }
}

/// One local estimate sent to the server.
#[derive(Debug, Clone, PartialEq)]
pub struct Upload {
    pub client: usize,
    pub arm: usize,
    pub estimate: DVector<f64>,
    pub pulls: u64,
}

#[derive(Debug, Clone)]
pub struct ServerState {
    mode: Mode,
    dim: usize,
    num_arms: usize,
    /// Unit directions recorded at initialisation, `directions[i][a]`.
    directions: Vec<Vec<DVector<f64>>>,
}

impl ServerState {
    /// `directions[i][a]` must be unit vectors in the span of `x_ia`.
    pub fn new(mode: Mode, dim: usize, num_arms: usize, directions: Vec<Vec<DVector<f64>>>) -> Result<Self> {
        for (i, row) in directions.iter().enumerate() {
            if row.len() != num_arms || row.iter().any(|e| e.len() != dim) {
                return Err(Error::InvalidInput(format!("client {i}: direction table has the wrong shape")));
            }
        }
        Ok(ServerState {
            mode,
            dim,
            num_arms,
            directions,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn direction(&self, i: usize, a: usize) -> &DVector<f64> {
        &self.directions[i][a]
    }

    /// Design problem over the reported active sets.
    pub fn design_problem(&self, active_sets: &[Vec<usize>]) -> Result<DesignProblem> {
        let dirs = active_sets
            .iter()
            .enumerate()
            .map(|(i, set)| set.iter().map(|&a| self.directions[i][a].clone()).collect())
            .collect();
        DesignProblem::new(self.mode, self.dim, self.num_arms, active_sets.to_vec(), dirs)
    }

    /// Weighted aggregation of local estimates:
    /// `V_a = (sum f t t' / |t|^2)+` and `theta_a = V_a sum f t` per arm, or
    /// the pooled `V = (sum_a V_a+)+` and `theta = V sum f t` in shared mode.
    ///
    /// `required` lists arms that must receive at least one upload. A zero
    /// estimate contributes its recorded direction to the potential.
    pub fn aggregate(&self, uploads: &[Upload], required: &[usize]) -> Result<Models> {
        let d = self.dim;
        let mut gram = vec![DMatrix::zeros(d, d); self.num_arms];
        let mut moment = vec![DVector::zeros(d); self.num_arms];
        let mut seen = vec![false; self.num_arms];
        for u in uploads {
            if u.arm >= self.num_arms || u.client >= self.directions.len() {
                return Err(Error::Protocol(format!(
                    "upload for client {}, arm {} is out of range",
                    u.client, u.arm
                )));
            }
            if u.pulls == 0 {
                return Err(Error::Protocol(format!(
                    "client {} uploaded arm {} without pulling it",
                    u.client, u.arm
                )));
            }
            let f = u.pulls as f64;
            let dir = linalg::normalized(&u.estimate).unwrap_or_else(|| self.directions[u.client][u.arm].clone());
            gram[u.arm].ger(f, &dir, &dir, 1.0);
            moment[u.arm].axpy(f, &u.estimate, 1.0);
            seen[u.arm] = true;
        }
        if let Some(&a) = required.iter().find(|&&a| !seen[a]) {
            return Err(Error::Protocol(format!("no uploads for active arm {a}")));
        }
        Ok(match self.mode {
            Mode::Disjoint => {
                let mut models = vec![None; self.num_arms];
                for a in 0..self.num_arms {
                    if seen[a] {
                        let v = sym_pinv(&gram[a], None);
                        let theta = &v * &moment[a];
                        models[a] = Some(GlobalModel { theta, v });
                    }
                }
                Models::PerArm(models)
            }
            Mode::Shared => {
                let total = gram.iter().fold(DMatrix::zeros(d, d), |acc, g| acc + g);
                let m = moment.iter().fold(DVector::zeros(d), |acc, x| acc + x);
                let v = sym_pinv(&total, None);
                let theta = &v * m;
                Models::Pooled(GlobalModel { theta, v })
            }
        })
    }
}

/// Pooled raw least squares for the full-information baseline: the server
/// sees every feature vector and every reward.
#[derive(Debug, Clone)]
pub struct RawPool {
    gram: Vec<DMatrix<f64>>,
    moment: Vec<DVector<f64>>,
}

impl RawPool {
    pub fn new(dim: usize, num_arms: usize) -> Self {
        RawPool {
            gram: vec![DMatrix::zeros(dim, dim); num_arms],
            moment: vec![DVector::zeros(dim); num_arms],
        }
    }

    /// Adds `pulls` observations of `x` whose rewards sum to `reward_sum`.
    pub fn observe(&mut self, arm: usize, x: &DVector<f64>, pulls: u64, reward_sum: f64) {
        self.gram[arm].ger(pulls as f64, x, x, 1.0);
        self.moment[arm].axpy(reward_sum, x, 1.0);
    }

    /// `W_a = (sum x x')+`, `theta_a = W_a sum x y` for the listed arms.
    pub fn models(&self, arms: &[usize]) -> Models {
        let mut out = vec![None; self.gram.len()];
        for &a in arms {
            let v = sym_pinv(&self.gram[a], None);
            let theta = &v * &self.moment[a];
            out[a] = Some(GlobalModel { theta, v });
        }
        Models::PerArm(out)
    }
}
