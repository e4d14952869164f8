//! Client availability models.
//!
//! A participation model decides which clients are active each round:
//! everyone (static), independent per-round coin flips with an optionally
//! time-varying rate (timed-random), a two-state Markov chain per client
//! (joins and leaves are sticky), or an exact recorded trace (programmed).

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numkit::Rng;
use crate::{Error, Result};

/// Default two-state transition matrix: rows are the current state
/// (0 = inactive, 1 = active), columns the next state. Symmetric with
/// stickiness 0.8, so the long-run activity rate is 1/2.
pub const DEFAULT_MARKOV_MATRIX: [[f64; 2]; 2] = [[0.8, 0.2], [0.2, 0.8]];

/// Activation probability over time for the timed-random model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Same probability every round.
    Constant(f64),
    /// Step schedule: `(from_round, p)` entries, ascending, first at 0.
    Piecewise(Vec<(usize, f64)>),
}

impl Schedule {
    pub fn probability(&self, t: usize) -> f64 {
        match self {
            Schedule::Constant(p) => *p,
            Schedule::Piecewise(steps) => steps
                .iter()
                .take_while(|(from, _)| *from <= t)
                .last()
                .map(|(_, p)| *p)
                .unwrap_or(0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check_p = |p: f64| {
            if !(0.0..=1.0).contains(&p) {
                Err(Error::Config(format!("probability {p} outside [0, 1]")))
            } else {
                Ok(())
            }
        };
        match self {
            Schedule::Constant(p) => check_p(*p),
            Schedule::Piecewise(steps) => {
                if steps.is_empty() {
                    return Err(Error::Config("empty piecewise schedule".into()));
                }
                if steps[0].0 != 0 {
                    return Err(Error::Config("piecewise schedule must start at round 0".into()));
                }
                for w in steps.windows(2) {
                    if w[1].0 <= w[0].0 {
                        return Err(Error::Config(
                            "piecewise schedule rounds must be strictly ascending".into(),
                        ));
                    }
                }
                steps.iter().try_for_each(|(_, p)| check_p(*p))
            }
        }
    }
}

/// Initial state distribution for the Markov model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkovInit {
    /// Draw each client's first state from the stationary distribution.
    Stationary,
    /// Everyone starts active.
    AllActive,
}

/// Recorded activity: one boolean row per round.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticipationTrace {
    num_clients: usize,
    rows: Vec<Vec<bool>>,
}

impl ParticipationTrace {
    pub fn new(num_clients: usize, rows: Vec<Vec<bool>>) -> Result<Self> {
        if num_clients == 0 {
            return Err(Error::Config("trace needs at least one client".into()));
        }
        if let Some(bad) = rows.iter().position(|r| r.len() != num_clients) {
            return Err(Error::shape(
                format!("trace row {bad}"),
                format!("{num_clients} entries"),
                format!("{}", rows[bad].len()),
            ));
        }
        Ok(ParticipationTrace { num_clients, rows })
    }

    pub fn from_active_sets(num_clients: usize, sets: &[Vec<usize>]) -> Result<Self> {
        let mut rows = Vec::with_capacity(sets.len());
        for set in sets {
            let mut row = vec![false; num_clients];
            for &i in set {
                if i >= num_clients {
                    return Err(Error::InvalidArgument(format!(
                        "client id {i} out of range for {num_clients} clients"
                    )));
                }
                row[i] = true;
            }
            rows.push(row);
        }
        ParticipationTrace::new(num_clients, rows)
    }

    pub fn num_clients(&self) -> usize {
        self.num_clients
    }

    pub fn rounds(&self) -> usize {
        self.rows.len()
    }

    pub fn active_set(&self, t: usize) -> Result<Vec<usize>> {
        let row = self.rows.get(t).ok_or(Error::TraceExhausted {
            round: t,
            rounds: self.rows.len(),
        })?;
        Ok(row
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(i, _)| i)
            .collect())
    }

    /// CSV with a `# clients=N rounds=R` header and one 0/1 row per round.
    pub fn to_csv_string(&self) -> String {
        let mut out = format!("# clients={} rounds={}\n", self.num_clients, self.rows.len());
        for row in &self.rows {
            let cells: Vec<&str> = row.iter().map(|&a| if a { "1" } else { "0" }).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty trace file".into(),
        })?;
        let parse_header = || -> Option<(usize, usize)> {
            let rest = header.strip_prefix("# clients=")?;
            let (clients, rest) = rest.split_once(" rounds=")?;
            Some((clients.parse().ok()?, rest.trim().parse().ok()?))
        };
        let (num_clients, rounds) = parse_header().ok_or(Error::Parse {
            line: 1,
            message: format!("bad trace header '{header}'"),
        })?;
        let mut rows = Vec::with_capacity(rounds);
        for (idx, line) in lines {
            if line.is_empty() {
                continue;
            }
            let mut row = Vec::with_capacity(num_clients);
            for cell in line.split(',') {
                match cell.trim() {
                    "0" => row.push(false),
                    "1" => row.push(true),
                    other => {
                        return Err(Error::Parse {
                            line: idx + 1,
                            message: format!("expected 0 or 1, got '{other}'"),
                        })
                    }
                }
            }
            if row.len() != num_clients {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {num_clients} cells, got {}", row.len()),
                });
            }
            rows.push(row);
        }
        if rows.len() != rounds {
            return Err(Error::Parse {
                line: text.lines().count(),
                message: format!("header says {rounds} rounds, found {}", rows.len()),
            });
        }
        ParticipationTrace::new(num_clients, rows)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv_string())
            .map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        ParticipationTrace::from_csv_str(&text)
    }
}

/// Which clients show up each round.
#[derive(Clone, Debug, PartialEq)]
pub enum ParticipationModel {
    /// Every client, every round.
    Static,
    /// Independent Bernoulli(p(t)) per client per round.
    TimedRandom { schedule: Schedule },
    /// Per-client two-state chain; state persists across rounds.
    Markovian {
        matrix: [[f64; 2]; 2],
        init: MarkovInit,
    },
    /// Replays a recorded trace verbatim.
    Programmed { trace: ParticipationTrace },
}

impl fmt::Display for ParticipationModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParticipationModel::Static => "static",
            ParticipationModel::TimedRandom { .. } => "timed_random",
            ParticipationModel::Markovian { .. } => "markovian",
            ParticipationModel::Programmed { .. } => "programmed",
        })
    }
}

fn validate_matrix(matrix: &[[f64; 2]; 2]) -> Result<()> {
    for (s, row) in matrix.iter().enumerate() {
        if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config(format!(
                "markov row {s} has entries outside [0, 1]"
            )));
        }
        if (row[0] + row[1] - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "markov row {s} sums to {}, expected 1",
                row[0] + row[1]
            )));
        }
    }
    Ok(())
}

impl ParticipationModel {
    pub fn validate(&self, num_clients: usize) -> Result<()> {
        if num_clients == 0 {
            return Err(Error::Config("num_clients must be positive".into()));
        }
        match self {
            ParticipationModel::Static => Ok(()),
            ParticipationModel::TimedRandom { schedule } => schedule.validate(),
            ParticipationModel::Markovian { matrix, .. } => validate_matrix(matrix),
            ParticipationModel::Programmed { trace } => {
                if trace.num_clients() != num_clients {
                    return Err(Error::Config(format!(
                        "trace covers {} clients, run uses {num_clients}",
                        trace.num_clients()
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Stationary distribution of a two-state chain, with degeneracy flags.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StationaryDistribution {
    pub inactive: f64,
    pub active: f64,
    /// Both states absorbing: every distribution is stationary; the
    /// uniform one is reported.
    pub degenerate: bool,
    /// Deterministic flip-flop: the unique stationary distribution exists
    /// but the chain never mixes to it.
    pub periodic: bool,
}

/// Solves `pi P = pi` in closed form for the 2x2 row-stochastic `matrix`.
pub fn stationary_distribution(matrix: &[[f64; 2]; 2]) -> Result<StationaryDistribution> {
    validate_matrix(matrix)?;
    let p01 = matrix[0][1];
    let p10 = matrix[1][0];
    if p01 + p10 == 0.0 {
        return Ok(StationaryDistribution {
            inactive: 0.5,
            active: 0.5,
            degenerate: true,
            periodic: false,
        });
    }
    let active = p01 / (p01 + p10);
    Ok(StationaryDistribution {
        inactive: 1.0 - active,
        active,
        degenerate: false,
        periodic: p01 == 1.0 && p10 == 1.0,
    })
}

/// Mutable per-run participation state (Markov chain positions).
#[derive(Clone, Debug, Default)]
pub struct ParticipationState {
    markov: Option<Vec<bool>>,
    next_round: usize,
}

impl ParticipationState {
    pub fn new() -> Self {
        ParticipationState::default()
    }
}

/// Samples the active set for round `t`, ascending client ids.
///
/// Markovian sampling must be called with consecutive `t` starting at 0
/// because the chain state evolves by exactly one step per round; the other
/// models are memoryless and accept any `t`.
pub fn sample_round(
    model: &ParticipationModel,
    num_clients: usize,
    t: usize,
    state: &mut ParticipationState,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    match model {
        ParticipationModel::Static => Ok((0..num_clients).collect()),
        ParticipationModel::TimedRandom { schedule } => {
            let p = schedule.probability(t);
            Ok((0..num_clients).filter(|_| rng.bernoulli(p)).collect())
        }
        ParticipationModel::Markovian { matrix, init } => {
            if t != state.next_round {
                return Err(Error::InvalidArgument(format!(
                    "markov sampling must be sequential: got round {t}, expected {}",
                    state.next_round
                )));
            }
            let states = match state.markov.as_mut() {
                None => {
                    let initial = match init {
                        MarkovInit::AllActive => vec![true; num_clients],
                        MarkovInit::Stationary => {
                            let pi = stationary_distribution(matrix)?;
                            (0..num_clients).map(|_| rng.bernoulli(pi.active)).collect()
                        }
                    };
                    state.markov = Some(initial);
                    state.markov.as_mut().expect("just set")
                }
                Some(states) => {
                    if states.len() != num_clients {
                        return Err(Error::shape(
                            "markov state",
                            format!("{num_clients} clients"),
                            format!("{}", states.len()),
                        ));
                    }
                    for s in states.iter_mut() {
                        let stay_active = if *s { matrix[1][1] } else { matrix[0][1] };
                        *s = rng.bernoulli(stay_active);
                    }
                    states
                }
            };
            state.next_round = t + 1;
            Ok(states
                .iter()
                .enumerate()
                .filter(|(_, &a)| a)
                .map(|(i, _)| i)
                .collect())
        }
        ParticipationModel::Programmed { trace } => {
            if trace.num_clients() != num_clients {
                return Err(Error::Config(format!(
                    "trace covers {} clients, run uses {num_clients}",
                    trace.num_clients()
                )));
            }
            trace.active_set(t)
        }
    }
}
