//! State spaces and Q-functions.
//!
//! A [`QModel`] is a finite state space plus a sparse set of transitions
//! `(from, to, rate profile)` with `from ≠ to`.  The total rate out of a
//! state, `q(x,t)`, is the sum of its outgoing profiles plus an optional
//! per-state kill profile; a model with no kill mass is conservative.  The
//! diagonal of the intensity kernel is implicit: `q(x,t,{x}) = −q(x,t)`.
//!
//! Per-state total rates are precomputed as merged piecewise-affine curves,
//! so `q(x,t)`, its integral `∫_u^t q(x,s) ds`, and its exact supremum over
//! all times (the stability bound) are closed-form.  Rates are bounded by
//! construction, so every finite state set is q-bounded.

use crate::profile::{PiecewiseAffine, TimeProfile};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QModelError {
    #[error("state space must contain at least one state")]
    EmptySpace,
    #[error("state index {index} out of range (model has {total} states)")]
    InvalidState { index: usize, total: usize },
    #[error("transition {from}->{to}: self loops are implicit and may not be specified")]
    SelfLoop { from: usize, to: usize },
    #[error("duplicate transition {from}->{to}")]
    DuplicateTransition { from: usize, to: usize },
    #[error("the cemetery state must be absorbing (offending transition {from}->{to})")]
    CemeteryOutflow { from: usize, to: usize },
    #[error("kill rate declared on the cemetery or an invalid state {state}")]
    InvalidKillState { state: usize },
    #[error("duplicate kill profile for state {state}")]
    DuplicateKill { state: usize },
    #[error("time interval out of order: u = {u} > t = {t}")]
    IntervalOutOfOrder { u: f64, t: f64 },
    #[error("state {state} is absorbing at t = {t}: the jump distribution is undefined")]
    AbsorbingState { state: usize, t: f64 },
    #[error("q-bound of the empty state set is undefined")]
    EmptyStateSet,
}

/// Finite state space, optionally extended by one absorbing cemetery state.
///
/// Ordinary states are indexed `0..n_states`; the cemetery, when present, is
/// the last index `n_states`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    n_states: usize,
    has_cemetery: bool,
}

impl StateSpace {
    pub fn new(n_states: usize) -> Result<Self, QModelError> {
        if n_states == 0 {
            return Err(QModelError::EmptySpace);
        }
        Ok(Self {
            n_states,
            has_cemetery: false,
        })
    }

    pub fn with_cemetery(n_states: usize) -> Result<Self, QModelError> {
        let mut s = Self::new(n_states)?;
        s.has_cemetery = true;
        Ok(s)
    }

    /// Number of ordinary states.
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn has_cemetery(&self) -> bool {
        self.has_cemetery
    }

    /// Total number of states including the cemetery.
    pub fn total(&self) -> usize {
        self.n_states + usize::from(self.has_cemetery)
    }

    pub fn cemetery(&self) -> Option<usize> {
        self.has_cemetery.then_some(self.n_states)
    }

    pub fn is_cemetery(&self, x: usize) -> bool {
        self.has_cemetery && x == self.n_states
    }
}

/// What the cemetery index stands for in a given model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CemeteryRole {
    /// Receives paths after an accumulation of infinitely many jumps
    /// (here: mass leaving a truncated state set).
    Explosion,
    /// Receives the kill mass of a non-conservative model after completion.
    Kill,
}

/// One off-diagonal intensity entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub from: usize,
    pub to: usize,
    pub profile: TimeProfile,
}

/// Conditional jump law of a state at a fixed time: probabilities over the
/// sparse targets, plus the kill mass of a non-conservative model.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpLaw {
    pub targets: Vec<(usize, f64)>,
    pub kill: f64,
}

impl JumpLaw {
    pub fn total(&self) -> f64 {
        self.targets.iter().map(|&(_, p)| p).sum::<f64>() + self.kill
    }
}

/// A stable Q-function on a finite (possibly cemetery-extended) state space.
#[derive(Debug, Clone, PartialEq)]
pub struct QModel {
    space: StateSpace,
    transitions: Vec<Transition>,
    kill: Vec<Option<TimeProfile>>,
    cemetery_role: Option<CemeteryRole>,
    conservative: bool,
    total_rate: Vec<PiecewiseAffine>,
    stable_bound: Vec<f64>,
    out_index: Vec<Vec<usize>>,
    breakpoints: Vec<f64>,
}

impl QModel {
    pub fn new(
        space: StateSpace,
        transitions: Vec<Transition>,
        kill: Vec<(usize, TimeProfile)>,
    ) -> Result<Self, QModelError> {
        let total = space.total();
        let mut seen = std::collections::HashSet::new();
        for tr in &transitions {
            if tr.from >= total {
                return Err(QModelError::InvalidState {
                    index: tr.from,
                    total,
                });
            }
            if tr.to >= total {
                return Err(QModelError::InvalidState { index: tr.to, total });
            }
            if tr.from == tr.to {
                return Err(QModelError::SelfLoop {
                    from: tr.from,
                    to: tr.to,
                });
            }
            if space.is_cemetery(tr.from) && !tr.profile.is_zero() {
                return Err(QModelError::CemeteryOutflow {
                    from: tr.from,
                    to: tr.to,
                });
            }
            if !seen.insert((tr.from, tr.to)) {
                return Err(QModelError::DuplicateTransition {
                    from: tr.from,
                    to: tr.to,
                });
            }
        }
        let mut kill_profiles: Vec<Option<TimeProfile>> = vec![None; space.n_states()];
        for (state, profile) in kill {
            if state >= space.n_states() {
                return Err(QModelError::InvalidKillState { state });
            }
            if kill_profiles[state].is_some() {
                return Err(QModelError::DuplicateKill { state });
            }
            kill_profiles[state] = Some(profile);
        }
        let conservative = kill_profiles
            .iter()
            .all(|k| k.as_ref().map_or(true, TimeProfile::is_zero));

        let mut out_index = vec![Vec::new(); total];
        for (i, tr) in transitions.iter().enumerate() {
            out_index[tr.from].push(i);
        }
        let mut total_rate = Vec::with_capacity(total);
        let mut stable_bound = Vec::with_capacity(total);
        for x in 0..total {
            let curves = out_index[x]
                .iter()
                .map(|&i| transitions[i].profile.curve())
                .chain(
                    kill_profiles
                        .get(x)
                        .and_then(|k| k.as_ref())
                        .map(TimeProfile::curve),
                );
            let curve = PiecewiseAffine::sum(curves);
            stable_bound.push(curve.sup());
            total_rate.push(curve);
        }
        let mut breakpoints: Vec<f64> = total_rate
            .iter()
            .flat_map(|c| c.breakpoints().iter().copied())
            .collect();
        breakpoints.sort_by(|a, b| a.partial_cmp(b).unwrap());
        breakpoints.dedup();

        let cemetery_role = space.cemetery().map(|_| CemeteryRole::Explosion);
        Ok(Self {
            space,
            transitions,
            kill: kill_profiles,
            cemetery_role,
            conservative,
            total_rate,
            stable_bound,
            out_index,
            breakpoints,
        })
    }

    pub fn with_cemetery_role(mut self, role: CemeteryRole) -> Self {
        if self.space.has_cemetery() {
            self.cemetery_role = Some(role);
        }
        self
    }

    pub fn space(&self) -> StateSpace {
        self.space
    }

    pub fn n_total(&self) -> usize {
        self.space.total()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn outgoing(&self, x: usize) -> impl Iterator<Item = &Transition> {
        self.out_index[x].iter().map(|&i| &self.transitions[i])
    }

    /// Indices into `transitions()` of the entries leaving `x`.
    pub(crate) fn transition_indices_from(&self, x: usize) -> &[usize] {
        &self.out_index[x]
    }

    pub fn kill_profile(&self, x: usize) -> Option<&TimeProfile> {
        self.kill.get(x).and_then(|k| k.as_ref())
    }

    pub fn is_conservative(&self) -> bool {
        self.conservative
    }

    pub fn cemetery_role(&self) -> Option<CemeteryRole> {
        self.cemetery_role
    }

    fn check_state(&self, x: usize) -> Result<(), QModelError> {
        if x >= self.n_total() {
            return Err(QModelError::InvalidState {
                index: x,
                total: self.n_total(),
            });
        }
        Ok(())
    }

    /// Total rate `q(x,t)` out of state `x`; zero for the cemetery.
    pub fn total_rate(&self, x: usize, t: f64) -> Result<f64, QModelError> {
        self.check_state(x)?;
        Ok(self.total_rate[x].value(t))
    }

    /// Exact `∫_u^t q(x,s) ds`.
    pub fn cumulative_rate(&self, x: usize, u: f64, t: f64) -> Result<f64, QModelError> {
        self.check_state(x)?;
        if u > t {
            return Err(QModelError::IntervalOutOfOrder { u, t });
        }
        Ok(self.total_rate[x].integral(u, t))
    }

    pub(crate) fn total_rate_curve(&self, x: usize) -> &PiecewiseAffine {
        &self.total_rate[x]
    }

    /// Normalized distribution of the jump destination out of `x` at time
    /// `t`, using right-continuous profile values.  Fails on absorbing
    /// states, whose holding time is infinite.
    pub fn jump_distribution(&self, x: usize, t: f64) -> Result<JumpLaw, QModelError> {
        self.check_state(x)?;
        let total = self.total_rate[x].value(t);
        if total <= 0.0 {
            return Err(QModelError::AbsorbingState { state: x, t });
        }
        let mut targets = Vec::with_capacity(self.out_index[x].len());
        for tr in self.outgoing(x) {
            let r = tr.profile.value(t);
            if r > 0.0 {
                targets.push((tr.to, r / total));
            }
        }
        let kill = self
            .kill_profile(x)
            .map_or(0.0, |k| k.value(t) / total);
        Ok(JumpLaw { targets, kill })
    }

    /// Conservative completion: kill mass becomes explicit transitions into
    /// the cemetery.  Conservative models come back unchanged.
    pub fn make_conservative(&self) -> QModel {
        if self.conservative {
            return self.clone();
        }
        let space = if self.space.has_cemetery() {
            self.space
        } else {
            StateSpace::with_cemetery(self.space.n_states()).expect("nonempty space")
        };
        let cemetery = space.cemetery().expect("cemetery present");
        let mut transitions = self.transitions.clone();
        for (state, profile) in self.kill.iter().enumerate() {
            if let Some(p) = profile {
                if !p.is_zero() {
                    transitions.push(Transition {
                        from: state,
                        to: cemetery,
                        profile: p.clone(),
                    });
                }
            }
        }
        QModel::new(space, transitions, Vec::new())
            .expect("completion of a valid model is valid")
            .with_cemetery_role(CemeteryRole::Kill)
    }

    /// `sup_{x ∈ B, t} q(x,t)` over a nonempty state set.
    pub fn q_bound(&self, states: &[usize]) -> Result<f64, QModelError> {
        if states.is_empty() {
            return Err(QModelError::EmptyStateSet);
        }
        let mut bound = 0.0f64;
        for &x in states {
            self.check_state(x)?;
            bound = bound.max(self.stable_bound[x]);
        }
        Ok(bound)
    }

    /// Global stability bound `sup_{x,t} q(x,t)`.
    pub fn q_bound_all(&self) -> f64 {
        self.stable_bound.iter().copied().fold(0.0, f64::max)
    }

    pub fn stable_bound(&self, x: usize) -> Result<f64, QModelError> {
        self.check_state(x)?;
        Ok(self.stable_bound[x])
    }

    /// All profile breakpoints of the model, sorted.
    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Breakpoints strictly inside `]u, t[`.
    pub fn breakpoints_within(&self, u: f64, t: f64) -> Vec<f64> {
        self.breakpoints
            .iter()
            .copied()
            .filter(|&b| b > u && b < t)
            .collect()
    }

    /// `∫_a^b q(x, s, B ∖ {x}) ds` for a state set given as a membership
    /// mask over all state indices.  Exact per-profile integration.
    pub fn jump_intensity_integral(&self, x: usize, member: &[bool], a: f64, b: f64) -> f64 {
        debug_assert_eq!(member.len(), self.n_total());
        let mut total = 0.0;
        for tr in self.outgoing(x) {
            if member[tr.to] {
                total += tr.profile.integral(a, b);
            }
        }
        total
    }

    /// Frozen affine rate coefficients valid on `[a, b]`, which must lie
    /// between adjacent breakpoints.  Lets integrators evaluate the active
    /// piece at segment endpoints without picking up the neighbour piece.
    pub(crate) fn segment_rates(&self, a: f64, b: f64) -> SegmentRates {
        let entries = self
            .transitions
            .iter()
            .map(|tr| {
                let (v, s) = tr.profile.affine_on(a, b);
                (tr.from, tr.to, v, s)
            })
            .collect();
        let total = (0..self.n_total())
            .map(|x| self.total_rate[x].affine_on(a, b))
            .collect();
        SegmentRates {
            anchor: a,
            entries,
            total,
        }
    }
}

/// Per-segment affine view of all rates, anchored at the segment start.
#[derive(Debug, Clone)]
pub(crate) struct SegmentRates {
    pub anchor: f64,
    /// `(from, to, value_at_anchor, slope)` per transition.
    pub entries: Vec<(usize, usize, f64, f64)>,
    /// `(value_at_anchor, slope)` of the total rate `q(x,·)` per state.
    pub total: Vec<(f64, f64)>,
}

impl SegmentRates {
    #[inline]
    pub fn entry_rate(&self, idx: usize, t: f64) -> f64 {
        let (_, _, v, s) = self.entries[idx];
        v + s * (t - self.anchor)
    }

    #[inline]
    pub fn total_rate(&self, x: usize, t: f64) -> f64 {
        let (v, s) = self.total[x];
        v + s * (t - self.anchor)
    }
}
