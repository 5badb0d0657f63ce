//! QUBO and Ising problem types with two solvers: exhaustive enumeration as
//! the oracle for small instances, and restart-based single-flip Metropolis
//! annealing as the workhorse.
//!
//! A QUBO minimizes `offset + sum Q[i][j] x_i x_j` over binary `x`, with `Q`
//! stored upper-triangular (diagonal entries are the linear terms since
//! `x^2 = x`). The equivalent Ising form uses spins `s_i = 2 x_i - 1` and the
//! sign convention `E = offset - sum J_ij s_i s_j - sum h_i s_i`.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Exhaustive enumeration refuses instances larger than this.
pub const EXACT_LIMIT: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub enum QuboError {
    /// Assignment length does not match the problem's variable count.
    DimensionMismatch { expected: usize, actual: usize },
    /// A coefficient refers to a variable index `>= n`.
    IndexOutOfRange { index: usize, n: usize },
    /// A coefficient is NaN or infinite.
    NonFiniteCoefficient { i: usize, j: usize },
    /// `solve_exact` called with more than [`EXACT_LIMIT`] variables.
    TooManyVariables { n: usize, limit: usize },
    /// An annealing parameter is out of range.
    InvalidAnnealConfig(&'static str),
}

impl fmt::Display for QuboError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QuboError::DimensionMismatch { expected, actual } => {
                write!(f, "assignment has {actual} bits, problem has {expected} variables")
            }
            QuboError::IndexOutOfRange { index, n } => {
                write!(f, "variable index {index} out of range for {n} variables")
            }
            QuboError::NonFiniteCoefficient { i, j } => {
                write!(f, "coefficient at ({i}, {j}) is not finite")
            }
            QuboError::TooManyVariables { n, limit } => {
                write!(f, "exact solve limited to {limit} variables, got {n}")
            }
            QuboError::InvalidAnnealConfig(msg) => write!(f, "invalid anneal config: {msg}"),
        }
    }
}

impl core::error::Error for QuboError {}

/// Upper-triangular QUBO over `n` binary variables.
#[derive(Debug, Clone, PartialEq)]
pub struct QuboProblem {
    n: usize,
    coeffs: BTreeMap<(usize, usize), f64>,
    offset: f64,
}

impl QuboProblem {
    pub fn new(n: usize) -> Self {
        QuboProblem { n, coeffs: BTreeMap::new(), offset: 0.0 }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn add_offset(&mut self, value: f64) {
        self.offset += value;
    }

    /// Accumulates `value` onto the coefficient of `x_i x_j`. Index order is
    /// normalized so the stored key always has `i <= j`.
    pub fn add(&mut self, i: usize, j: usize, value: f64) -> Result<(), QuboError> {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        if b >= self.n {
            return Err(QuboError::IndexOutOfRange { index: b, n: self.n });
        }
        if !value.is_finite() {
            return Err(QuboError::NonFiniteCoefficient { i: a, j: b });
        }
        *self.coeffs.entry((a, b)).or_insert(0.0) += value;
        Ok(())
    }

    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        let key = if i <= j { (i, j) } else { (j, i) };
        self.coeffs.get(&key).copied().unwrap_or(0.0)
    }

    /// Coefficients in ascending key order.
    pub fn coeffs(&self) -> impl Iterator<Item = (&(usize, usize), &f64)> {
        self.coeffs.iter()
    }

    /// Energy of an assignment: `offset + sum coeffs[(i,j)] x_i x_j`, summed
    /// in ascending key order so results are bit-reproducible.
    pub fn energy(&self, x: &Assignment) -> Result<f64, QuboError> {
        if x.len() != self.n {
            return Err(QuboError::DimensionMismatch { expected: self.n, actual: x.len() });
        }
        let mut total = self.offset;
        for (&(i, j), &w) in &self.coeffs {
            if x.get(i) && x.get(j) {
                total += w;
            }
        }
        Ok(total)
    }
}

/// Ising model over `n` spins: `E = offset - sum J_ij s_i s_j - sum h_i s_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct IsingProblem {
    n: usize,
    h: Vec<f64>,
    couplings: BTreeMap<(usize, usize), f64>,
    offset: f64,
}

impl IsingProblem {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn field(&self, i: usize) -> f64 {
        self.h[i]
    }

    pub fn fields(&self) -> &[f64] {
        &self.h
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        let key = if i < j { (i, j) } else { (j, i) };
        self.couplings.get(&key).copied().unwrap_or(0.0)
    }

    pub fn couplings(&self) -> impl Iterator<Item = (&(usize, usize), &f64)> {
        self.couplings.iter()
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Energy under the bit-to-spin view `0 -> -1`, `1 -> +1`.
    pub fn energy(&self, x: &Assignment) -> Result<f64, QuboError> {
        if x.len() != self.n {
            return Err(QuboError::DimensionMismatch { expected: self.n, actual: x.len() });
        }
        let mut total = self.offset;
        for (&(i, j), &jij) in &self.couplings {
            total -= jij * x.spin(i) * x.spin(j);
        }
        for (i, &hi) in self.h.iter().enumerate() {
            total -= hi * x.spin(i);
        }
        Ok(total)
    }
}

/// A binary assignment. Ordered by the integer value of the bit vector with
/// bit `i` weighing `2^i`, so that among equal-energy one-hot assignments the
/// lowest set index sorts first; both solvers break ties by this order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Assignment {
    bits: Vec<bool>,
}

impl PartialOrd for Assignment {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Assignment {
    fn cmp(&self, other: &Self) -> core::cmp::Ordering {
        self.bits.iter().rev().cmp(other.bits.iter().rev())
    }
}

impl Assignment {
    pub fn new(bits: Vec<bool>) -> Self {
        Assignment { bits }
    }

    pub fn zeros(n: usize) -> Self {
        Assignment { bits: vec![false; n] }
    }

    /// The assignment whose bit `i` is bit `i` of `index`; enumerating
    /// indices in order enumerates assignments in the tie-break order.
    pub fn from_index(n: usize, index: u64) -> Self {
        let bits = (0..n).map(|i| (index >> i) & 1 == 1).collect();
        Assignment { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Spin view: `false -> -1.0`, `true -> +1.0`.
    pub fn spin(&self, i: usize) -> f64 {
        if self.bits[i] {
            1.0
        } else {
            -1.0
        }
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i)
    }
}

impl fmt::Display for Assignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            write!(f, "{}", if b { '1' } else { '0' })?;
        }
        Ok(())
    }
}

/// Parameters of the restart-based Metropolis annealer.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealConfig {
    /// Independent restarts; the best result across reads is returned.
    pub num_reads: u32,
    /// Metropolis sweeps per read (one proposed flip per variable per sweep).
    pub sweeps: u32,
    /// Initial inverse temperature of the geometric schedule.
    pub beta_start: f64,
    /// Final inverse temperature of the geometric schedule.
    pub beta_end: f64,
    /// Seed; read `r` draws from stream `r` of the ChaCha keyed by it.
    pub seed: u64,
}

impl Default for AnnealConfig {
    fn default() -> Self {
        AnnealConfig { num_reads: 20, sweeps: 500, beta_start: 0.1, beta_end: 10.0, seed: 0 }
    }
}

impl AnnealConfig {
    pub fn validate(&self) -> Result<(), QuboError> {
        if self.num_reads < 1 {
            return Err(QuboError::InvalidAnnealConfig("num_reads must be >= 1"));
        }
        if self.sweeps < 1 {
            return Err(QuboError::InvalidAnnealConfig("sweeps must be >= 1"));
        }
        if !(self.beta_start > 0.0) || !self.beta_start.is_finite() {
            return Err(QuboError::InvalidAnnealConfig("beta_start must be positive"));
        }
        if !(self.beta_end > self.beta_start) || !self.beta_end.is_finite() {
            return Err(QuboError::InvalidAnnealConfig("beta_end must exceed beta_start"));
        }
        Ok(())
    }
}

/// Maps a QUBO to the equivalent Ising model under `x_i = (1 + s_i) / 2`;
/// energies agree exactly (up to rounding of the substitution) on every
/// assignment.
pub fn qubo_to_ising(problem: &QuboProblem) -> IsingProblem {
    let n = problem.n;
    let mut h = vec![0.0; n];
    let mut couplings: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut offset = problem.offset;
    for (&(i, j), &w) in &problem.coeffs {
        if i == j {
            // w x = (w/2) s + w/2
            h[i] -= w / 2.0;
            offset += w / 2.0;
        } else {
            // w x_i x_j = (w/4)(1 + s_i + s_j + s_i s_j)
            *couplings.entry((i, j)).or_insert(0.0) -= w / 4.0;
            h[i] -= w / 4.0;
            h[j] -= w / 4.0;
            offset += w / 4.0;
        }
    }
    couplings.retain(|_, v| *v != 0.0);
    IsingProblem { n, h, couplings, offset }
}

/// Minimum-energy assignment by full enumeration; ties go to the first
/// assignment in the [`Assignment`] order, i.e. the lowest set indices.
pub fn solve_exact(problem: &QuboProblem) -> Result<Assignment, QuboError> {
    if problem.n > EXACT_LIMIT {
        return Err(QuboError::TooManyVariables { n: problem.n, limit: EXACT_LIMIT });
    }
    let n = problem.n;
    let terms: Vec<(usize, usize, f64)> =
        problem.coeffs.iter().map(|(&(i, j), &w)| (i, j, w)).collect();
    let mut best_index = 0u64;
    let mut best_energy = f64::INFINITY;
    // Counter order is exactly the tie-break order, so a strict improvement
    // test keeps the first of any tie.
    for index in 0..(1u64 << n) {
        let mut energy = problem.offset;
        for &(i, j, w) in &terms {
            if (index >> i) & 1 == 1 && (index >> j) & 1 == 1 {
                energy += w;
            }
        }
        if energy < best_energy {
            best_energy = energy;
            best_index = index;
        }
    }
    Ok(Assignment::from_index(n, best_index))
}

/// Simulated annealing: `num_reads` independent single-flip Metropolis runs
/// over a geometric inverse-temperature schedule. Deterministic for a fixed
/// seed; ties across reads resolve by the [`Assignment`] order.
pub fn solve_anneal(problem: &QuboProblem, config: &AnnealConfig) -> Result<Assignment, QuboError> {
    config.validate()?;
    let n = problem.n;
    if n == 0 {
        return Ok(Assignment::zeros(0));
    }

    // Adjacency form for O(degree) flip deltas.
    let mut linear = vec![0.0; n];
    let mut neighbors: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (&(i, j), &w) in &problem.coeffs {
        if i == j {
            linear[i] += w;
        } else {
            neighbors[i].push((j, w));
            neighbors[j].push((i, w));
        }
    }

    let sweeps = config.sweeps as usize;
    let beta_ratio = config.beta_end / config.beta_start;
    let mut betas = Vec::with_capacity(sweeps);
    for k in 0..sweeps {
        let frac = if sweeps > 1 { k as f64 / (sweeps - 1) as f64 } else { 1.0 };
        betas.push(config.beta_start * libm::exp(frac * libm::log(beta_ratio)));
    }

    let mut best: Option<(f64, Assignment)> = None;
    for read in 0..config.num_reads {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(read as u64);

        let mut state: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        let mut energy = {
            let mut e = problem.offset;
            for (&(i, j), &w) in &problem.coeffs {
                if state[i] && state[j] {
                    e += w;
                }
            }
            e
        };
        let mut read_best = state.clone();
        let mut read_best_energy = energy;

        for &beta in &betas {
            for k in 0..n {
                let sign = if state[k] { -1.0 } else { 1.0 };
                let mut field = linear[k];
                for &(j, w) in &neighbors[k] {
                    if state[j] {
                        field += w;
                    }
                }
                let delta = sign * field;
                if delta <= 0.0 || rng.random::<f64>() < libm::exp(-beta * delta) {
                    state[k] = !state[k];
                    energy += delta;
                    if energy < read_best_energy {
                        read_best_energy = energy;
                        read_best.copy_from_slice(&state);
                    }
                }
            }
        }

        let candidate = Assignment::new(read_best);
        // Recompute from scratch: the incremental energy accumulates rounding
        // over many sweeps and cross-read ties must compare exactly.
        let candidate_energy = problem.energy(&candidate)?;
        let replace = match &best {
            None => true,
            Some((e, a)) => {
                candidate_energy < *e || (candidate_energy == *e && candidate < *a)
            }
        };
        if replace {
            best = Some((candidate_energy, candidate));
        }
    }
    Ok(best.expect("num_reads >= 1").1)
}
