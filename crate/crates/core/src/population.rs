//! Generative population models and the sampling oracle.
//!
//! A population is a finite mixture of cells, each pairing a probability mass
//! with a private type, a linear privacy-cost value `v`, and a correlation
//! leak `κ`. The joint cell distribution expresses any relationship between
//! types and costs — perfectly correlated (a distinct `v` per type) through
//! fully independent (identical `v` marginal for every type) — without the
//! mechanism ever reading those fields.
//!
//! The survey query is a table `Q: type → [0, 1]`; the target statistic is
//! its population expectation. Sampling happens through a
//! [`PopulationOracle`], either i.i.d. from the mixture (the default; fresh
//! individuals are assumed plentiful) or uniformly without replacement from a
//! finite materialized pool.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{Agent, CostCurve, DecisionStrategy};
use crate::rng::SimRng;

const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PopulationError {
    #[error("invalid population model: {0}")]
    InvalidModel(String),
    /// Finite pools never return the same individual twice; drawing past the
    /// pool size fails.
    #[error("population pool exhausted after {pool_size} draws")]
    Exhausted { pool_size: usize },
}

/// Index of a private type within its [`TypeUniverse`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TypeId(pub usize);

/// The finite ordered set of private types together with the query table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeUniverse {
    names: Vec<String>,
    query: Vec<f64>,
}

impl TypeUniverse {
    /// Builds a universe from `(name, Q(name))` pairs. Every query value must
    /// lie in `[0, 1]`.
    pub fn new(entries: Vec<(String, f64)>) -> Result<Self, PopulationError> {
        if entries.is_empty() {
            return Err(PopulationError::InvalidModel(
                "type universe must be non-empty".into(),
            ));
        }
        let mut names = Vec::with_capacity(entries.len());
        let mut query = Vec::with_capacity(entries.len());
        for (name, q) in entries {
            if names.contains(&name) {
                return Err(PopulationError::InvalidModel(format!(
                    "duplicate type name {name:?}"
                )));
            }
            if !(q.is_finite() && (0.0..=1.0).contains(&q)) {
                return Err(PopulationError::InvalidModel(format!(
                    "query value for type {name:?} must lie in [0, 1], got {q}"
                )));
            }
            names.push(name);
            query.push(q);
        }
        Ok(Self { names, query })
    }

    /// Two-type universe with `Q(positive) = 1`, `Q(negative) = 0`.
    pub fn binary() -> Self {
        Self::new(vec![("positive".into(), 1.0), ("negative".into(), 0.0)])
            .expect("static universe is valid")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn query_value(&self, id: TypeId) -> f64 {
        self.query[id.0]
    }

    pub fn name_of(&self, id: TypeId) -> &str {
        &self.names[id.0]
    }

    pub fn id_of(&self, name: &str) -> Option<TypeId> {
        self.names.iter().position(|n| n == name).map(TypeId)
    }
}

/// One mixture component: mass, type, linear cost value, leak.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub mass: f64,
    pub type_id: TypeId,
    pub value: f64,
    pub kappa: f64,
}

/// How the oracle produces individuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SamplingMode {
    /// Each draw is an independent sample from the cell mixture.
    InfiniteIid,
    /// A pool of `size` individuals is materialized up front; draws are
    /// uniform without replacement.
    FinitePool { size: usize },
}

/// Immutable population description shared by trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationModel {
    universe: TypeUniverse,
    cells: Vec<Cell>,
    mode: SamplingMode,
    strategy: DecisionStrategy,
    cumulative: Vec<f64>,
}

impl PopulationModel {
    pub fn new(
        universe: TypeUniverse,
        cells: Vec<Cell>,
        mode: SamplingMode,
    ) -> Result<Self, PopulationError> {
        if cells.is_empty() {
            return Err(PopulationError::InvalidModel(
                "population needs at least one cell".into(),
            ));
        }
        let mut total = 0.0;
        for (i, cell) in cells.iter().enumerate() {
            if cell.type_id.0 >= universe.len() {
                return Err(PopulationError::InvalidModel(format!(
                    "cell {i} references unknown type index {}",
                    cell.type_id.0
                )));
            }
            if !(cell.mass.is_finite() && (0.0..=1.0).contains(&cell.mass)) {
                return Err(PopulationError::InvalidModel(format!(
                    "cell {i} mass must lie in [0, 1], got {}",
                    cell.mass
                )));
            }
            if !(cell.value.is_finite() && cell.value >= 0.0) {
                return Err(PopulationError::InvalidModel(format!(
                    "cell {i} value must be non-negative and finite, got {}",
                    cell.value
                )));
            }
            if !(cell.kappa.is_finite() && (0.0..=1.0).contains(&cell.kappa)) {
                return Err(PopulationError::InvalidModel(format!(
                    "cell {i} kappa must lie in [0, 1], got {}",
                    cell.kappa
                )));
            }
            total += cell.mass;
        }
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(PopulationError::InvalidModel(format!(
                "cell masses must sum to 1 (within {MASS_TOLERANCE}), got {total}"
            )));
        }
        if let SamplingMode::FinitePool { size } = mode {
            if size == 0 {
                return Err(PopulationError::InvalidModel(
                    "finite pool size must be positive".into(),
                ));
            }
        }
        let mut cumulative = Vec::with_capacity(cells.len());
        let mut acc = 0.0;
        for cell in &cells {
            acc += cell.mass;
            cumulative.push(acc);
        }
        // Guard the binary search against rounding at the top end.
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Ok(Self {
            universe,
            cells,
            mode,
            strategy: DecisionStrategy::default(),
            cumulative,
        })
    }

    /// Every agent in a single-value population shares one `(v, κ)`.
    pub fn single_value(
        universe: TypeUniverse,
        type_masses: &[(TypeId, f64)],
        value: f64,
        kappa: f64,
    ) -> Result<Self, PopulationError> {
        let cells = type_masses
            .iter()
            .map(|&(type_id, mass)| Cell {
                mass,
                type_id,
                value,
                kappa,
            })
            .collect();
        Self::new(universe, cells, SamplingMode::InfiniteIid)
    }

    /// Replaces the default decision strategy handed to sampled agents.
    pub fn with_strategy(mut self, strategy: DecisionStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_mode(mut self, mode: SamplingMode) -> Result<Self, PopulationError> {
        if let SamplingMode::FinitePool { size } = mode {
            if size == 0 {
                return Err(PopulationError::InvalidModel(
                    "finite pool size must be positive".into(),
                ));
            }
        }
        self.mode = mode;
        Ok(self)
    }

    pub fn universe(&self) -> &TypeUniverse {
        &self.universe
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn strategy(&self) -> DecisionStrategy {
        self.strategy
    }

    /// Exact population statistic `a = Σ mass·Q(type)`.
    pub fn true_statistic(&self) -> f64 {
        self.cells
            .iter()
            .map(|c| c.mass * self.universe.query_value(c.type_id))
            .sum()
    }

    /// `v(alpha)`: the smallest cost value whose CDF mass is at least
    /// `1 - alpha`. The cheapest uniform offer priced for `v(alpha)` is
    /// refused by at most an `alpha` fraction of the population.
    pub fn value_quantile(&self, alpha: f64) -> f64 {
        assert!(
            alpha > 0.0 && alpha < 1.0,
            "quantile level must lie in (0, 1), got {alpha}"
        );
        let mut by_value: Vec<(f64, f64)> = self.cells.iter().map(|c| (c.value, c.mass)).collect();
        by_value.sort_by(|a, b| a.0.total_cmp(&b.0));
        let needed = 1.0 - alpha;
        let mut acc = 0.0;
        for (value, mass) in &by_value {
            acc += mass;
            if acc + MASS_TOLERANCE >= needed {
                return *value;
            }
        }
        by_value.last().expect("validated non-empty").0
    }

    fn sample_cell(&self, rng: &mut SimRng) -> &Cell {
        let u = rng.unit();
        let idx = self.cumulative.partition_point(|&c| c <= u);
        &self.cells[idx.min(self.cells.len() - 1)]
    }

    fn agent_from_cell(&self, cell: &Cell) -> Agent {
        Agent {
            type_id: cell.type_id,
            cost: CostCurve::Linear { rate: cell.value },
            kappa: cell.kappa,
            strategy: self.strategy,
        }
    }
}

/// One sampled individual together with its oracle-assigned identifier.
///
/// Identifiers are draw indices in infinite mode and pool indices in finite
/// mode; they name individuals in transcripts without revealing anything the
/// transcript does not already carry.
#[derive(Debug, Clone, PartialEq)]
pub struct Draw {
    pub id: u64,
    pub agent: Agent,
}

enum OracleState {
    Infinite {
        draws: u64,
    },
    Finite {
        pool: Vec<Agent>,
        remaining: Vec<usize>,
    },
}

/// Stateful sampling handle over a [`PopulationModel`].
///
/// Confine each oracle to a single trial; independent trials each build their
/// own from the trial's stream.
pub struct PopulationOracle<'a> {
    model: &'a PopulationModel,
    state: OracleState,
}

impl<'a> PopulationOracle<'a> {
    /// In finite-pool mode the pool is materialized here, consuming `rng`.
    pub fn new(model: &'a PopulationModel, rng: &mut SimRng) -> Self {
        let state = match model.mode() {
            SamplingMode::InfiniteIid => OracleState::Infinite { draws: 0 },
            SamplingMode::FinitePool { size } => {
                let pool = (0..size)
                    .map(|_| model.agent_from_cell(model.sample_cell(rng)))
                    .collect();
                OracleState::Finite {
                    pool,
                    remaining: (0..size).collect(),
                }
            }
        };
        Self { model, state }
    }

    pub fn model(&self) -> &PopulationModel {
        self.model
    }

    /// Number of individuals still available, if bounded.
    pub fn remaining(&self) -> Option<usize> {
        match &self.state {
            OracleState::Infinite { .. } => None,
            OracleState::Finite { remaining, .. } => Some(remaining.len()),
        }
    }

    /// Draws the next individual.
    pub fn sample(&mut self, rng: &mut SimRng) -> Result<Draw, PopulationError> {
        match &mut self.state {
            OracleState::Infinite { draws } => {
                let id = *draws;
                *draws += 1;
                let agent = self.model.agent_from_cell(self.model.sample_cell(rng));
                Ok(Draw { id, agent })
            }
            OracleState::Finite { pool, remaining } => {
                if remaining.is_empty() {
                    return Err(PopulationError::Exhausted {
                        pool_size: pool.len(),
                    });
                }
                let slot = rng.index(remaining.len());
                let idx = remaining.swap_remove(slot);
                Ok(Draw {
                    id: idx as u64,
                    agent: pool[idx].clone(),
                })
            }
        }
    }

    /// [`Self::sample`] without the identifier.
    pub fn sample_agent(&mut self, rng: &mut SimRng) -> Result<Agent, PopulationError> {
        self.sample(rng).map(|d| d.agent)
    }
}
