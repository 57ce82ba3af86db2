//! JSON problem files for the standalone solver.
//!
//! ```json
//! {"mode": "disjoint", "d": 2, "K": 2,
//!  "clients": [{"arms": [0, 1], "directions": [[1, 0], [0, 1]]}]}
//! ```

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{DesignProblem, Mode};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemFile {
    mode: Mode,
    d: usize,
    #[serde(rename = "K")]
    k: usize,
    clients: Vec<ClientEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClientEntry {
    arms: Vec<usize>,
    directions: Vec<Vec<f64>>,
}

pub fn parse_problem(text: &str) -> Result<DesignProblem> {
    let file: ProblemFile =
        serde_json::from_str(text).map_err(|e| Error::load("problem", e.to_string()))?;
    if file.d == 0 {
        return Err(Error::load("d", "must be positive"));
    }
    if file.k == 0 {
        return Err(Error::load("K", "must be positive"));
    }
    if file.clients.is_empty() {
        return Err(Error::load("clients", "must be nonempty"));
    }
    let mut sets = Vec::with_capacity(file.clients.len());
    let mut dirs = Vec::with_capacity(file.clients.len());
    for (i, c) in file.clients.into_iter().enumerate() {
        if c.arms.len() != c.directions.len() {
            return Err(Error::load(
                format!("clients[{i}].directions"),
                format!("{} rows for {} arms", c.directions.len(), c.arms.len()),
            ));
        }
        let mut vs = Vec::with_capacity(c.directions.len());
        for (k, row) in c.directions.into_iter().enumerate() {
            if row.len() != file.d {
                return Err(Error::load(
                    format!("clients[{i}].directions[{k}]"),
                    format!("length {} but d = {}", row.len(), file.d),
                ));
            }
            vs.push(DVector::from_vec(row));
        }
        sets.push(c.arms);
        dirs.push(vs);
    }
    DesignProblem::new(file.mode, file.d, file.k, sets, dirs).map_err(|e| match e {
        Error::InvalidInput(msg) => Error::load("clients", msg),
        other => other,
    })
}

pub fn load_problem(path: impl AsRef<Path>) -> Result<DesignProblem> {
    parse_problem(&std::fs::read_to_string(path)?)
}

/// Serialises a problem with its (normalised) directions.
pub fn problem_to_json(problem: &DesignProblem) -> String {
    let file = ProblemFile {
        mode: problem.mode(),
        d: problem.dim(),
        k: problem.num_arms(),
        clients: (0..problem.num_clients())
            .map(|i| ClientEntry {
                arms: problem.arms(i).to_vec(),
                directions: (0..problem.arms(i).len())
                    .map(|k| problem.direction(i, k).iter().copied().collect())
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("problem serialises")
}
