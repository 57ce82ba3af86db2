//! Phase-length schedules.
//!
//! A run spends `K` rounds on initialisation, then phase `p` takes
//! `f^p + K` rounds. `H` is the first phase count whose rounds reach the
//! horizon; the last phase is cut at `T`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScheduleKind {
    /// `f^1 = K - 1`, then `f^p = K`.
    Uniform,
    /// `f^p = c * n^p`.
    Exponential { c: u64, n: u64 },
    /// Lengths from the recursion `S_p - S_{p-1} + K = 2 sqrt(T S_{p-1})`.
    Greedy,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleKind::Uniform => f.write_str("uniform"),
            ScheduleKind::Exponential { c, n } => write!(f, "exp:{c},{n}"),
            ScheduleKind::Greedy => f.write_str("greedy"),
        }
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    /// Accepts `uniform`, `greedy` and `exp:c,n`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => return Ok(ScheduleKind::Uniform),
            "greedy" => return Ok(ScheduleKind::Greedy),
            _ => {}
        }
        let bad = || Error::InvalidConfig(format!("unknown schedule `{s}` (expected uniform, greedy or exp:c,n)"));
        let rest = s.strip_prefix("exp:").ok_or_else(bad)?;
        let (c, n) = rest.split_once(',').ok_or_else(bad)?;
        let c: u64 = c.trim().parse().map_err(|_| bad())?;
        let n: u64 = n.trim().parse().map_err(|_| bad())?;
        if c == 0 || n < 2 {
            return Err(Error::InvalidConfig(format!(
                "exponential schedule needs c >= 1 and n >= 2, got c = {c}, n = {n}"
            )));
        }
        Ok(ScheduleKind::Exponential { c, n })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PhaseSchedule {
    pub kind: ScheduleKind,
    /// `f^1 .. f^H`.
    lengths: Vec<u64>,
}

impl PhaseSchedule {
    pub fn num_phases(&self) -> usize {
        self.lengths.len()
    }

    pub fn lengths(&self) -> &[u64] {
        &self.lengths
    }

    /// `f^p` for `p >= 1`, with `f^0 = 1` standing for the single
    /// initialisation pull.
    pub fn f(&self, p: usize) -> u64 {
        if p == 0 {
            1
        } else {
            self.lengths[p - 1]
        }
    }
}

/// Builds the schedule for horizon `t` and `k` arms.
pub fn phase_lengths(kind: ScheduleKind, t: u64, k: u64) -> Result<PhaseSchedule> {
    if k == 0 {
        return Err(Error::InvalidConfig("need at least one arm".into()));
    }
    if t < k.saturating_mul(2) {
        return Err(Error::InvalidConfig(format!("horizon {t} is shorter than 2K = {}", k.saturating_mul(2))));
    }
    let lengths = match kind {
        ScheduleKind::Uniform => {
            if k < 2 {
                return Err(Error::InvalidConfig("uniform schedule needs K >= 2 (f^1 = K - 1)".into()));
            }
            fill_to_horizon(t, k, |p| if p == 1 { k - 1 } else { k })
        }
        ScheduleKind::Exponential { c, n } => {
            if c == 0 || n < 2 {
                return Err(Error::InvalidConfig("exponential schedule needs c >= 1 and n >= 2".into()));
            }
            fill_to_horizon(t, k, |p| {
                let pow = n.checked_pow(p as u32).unwrap_or(u64::MAX);
                c.saturating_mul(pow)
            })
        }
        ScheduleKind::Greedy => greedy(t, k)?,
    };
    Ok(PhaseSchedule { kind, lengths })
}

fn fill_to_horizon(t: u64, k: u64, f: impl Fn(usize) -> u64) -> Vec<u64> {
    let mut used = k;
    let mut lengths = Vec::new();
    let mut p = 1;
    while used < t {
        let fp = f(p);
        lengths.push(fp);
        used = used.saturating_add(fp).saturating_add(k);
        p += 1;
    }
    lengths
}

fn greedy(t: u64, k: u64) -> Result<Vec<u64>> {
    let tf = t as f64;
    let kf = k as f64;
    if kf > tf.sqrt() {
        return Err(Error::InvalidConfig(format!("greedy schedule needs K <= sqrt(T), got K = {k}, T = {t}")));
    }
    let mut s_tilde = vec![1.0_f64];
    loop {
        let prev = *s_tilde.last().unwrap();
        let next = prev - kf + 2.0 * (tf * prev).sqrt();
        s_tilde.push(next);
        let h = s_tilde.len() - 1;
        if next + (h as f64) * kf >= tf {
            break;
        }
    }
    let h = s_tilde.len() - 1;
    let mut s: Vec<u64> = s_tilde.iter().map(|x| x.ceil() as u64).collect();
    s[h] = t - h as u64 * k;
    Ok((1..=h).map(|p| s[p].saturating_sub(s[p - 1]).max(1)).collect())
}
