//! Kleinberg burst detection over event inter-arrival gaps.
//!
//! Weekly counts are expanded to evenly spaced event times inside each week,
//! the gaps between consecutive events are fed to the infinite-state
//! automaton (truncated to a finite number of states), and the optimal state
//! path is mapped back to one burst level per week. Level 1 means no burst.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::CountSeries;

#[derive(Debug, Error, PartialEq)]
pub enum BurstError {
    #[error("insufficient events for gap model: need at least 2, got {0}")]
    InsufficientEvents(u64),
    #[error("gap {index} is not positive ({value})")]
    NonPositiveGap { index: usize, value: f64 },
    #[error("empty gap sequence")]
    Empty,
    #[error("invalid Kleinberg configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KleinbergConfig {
    /// Rate ratio between adjacent states.
    pub s: f64,
    /// Transition cost coefficient.
    pub gamma: f64,
    pub max_states: usize,
}

impl Default for KleinbergConfig {
    fn default() -> Self {
        Self {
            s: 2.0,
            gamma: 1.0,
            max_states: 25,
        }
    }
}

impl KleinbergConfig {
    pub fn validate(&self) -> Result<(), BurstError> {
        if !(self.s > 1.0) || !self.s.is_finite() {
            return Err(BurstError::InvalidConfig(format!("s must exceed 1, got {}", self.s)));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(BurstError::InvalidConfig(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if self.max_states < 2 {
            return Err(BurstError::InvalidConfig(format!(
                "max_states must be at least 2, got {}",
                self.max_states
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapSequence {
    pub offsets: Vec<f64>,
    pub gaps: Vec<f64>,
    /// 1-based week in which each gap terminates.
    pub week_of_gap: Vec<usize>,
}

impl GapSequence {
    /// Wrap raw gaps with no week mapping (all gaps attributed to week 1).
    pub fn from_gaps(gaps: Vec<f64>) -> Self {
        let mut offsets = Vec::with_capacity(gaps.len() + 1);
        let mut t = 0.0;
        offsets.push(t);
        for g in &gaps {
            t += g;
            offsets.push(t);
        }
        let week_of_gap = vec![1; gaps.len()];
        Self {
            offsets,
            gaps,
            week_of_gap,
        }
    }
}

/// Spread each week's events evenly at `w - 1 + (j - 0.5) / c`, `j = 1..=c`.
pub fn expand_to_offsets(series: &CountSeries) -> Result<GapSequence, BurstError> {
    let total = series.total();
    if total < 2 {
        return Err(BurstError::InsufficientEvents(total));
    }
    let mut offsets = Vec::with_capacity(total as usize);
    let mut week_of_event = Vec::with_capacity(total as usize);
    for (w, &c) in series.week_indices().zip(series.counts()) {
        let base = (w - 1) as f64;
        for j in 1..=c {
            offsets.push(base + (j as f64 - 0.5) / c as f64);
            week_of_event.push(w);
        }
    }
    let gaps: Vec<f64> = offsets.windows(2).map(|p| p[1] - p[0]).collect();
    let week_of_gap = week_of_event[1..].to_vec();
    Ok(GapSequence {
        offsets,
        gaps,
        week_of_gap,
    })
}

fn check_gaps(gaps: &[f64]) -> Result<(), BurstError> {
    if gaps.is_empty() {
        return Err(BurstError::Empty);
    }
    for (index, &value) in gaps.iter().enumerate() {
        if !(value > 0.0) || !value.is_finite() {
            return Err(BurstError::NonPositiveGap { index, value });
        }
    }
    Ok(())
}

/// Cost model of the truncated automaton for one gap sequence.
#[derive(Debug, Clone)]
pub struct BurstCostModel {
    rates: Vec<f64>,
    ln_rates: Vec<f64>,
    transition_unit: f64,
}

impl BurstCostModel {
    pub fn new(gaps: &[f64], config: &KleinbergConfig) -> Result<Self, BurstError> {
        config.validate()?;
        check_gaps(gaps)?;
        let n = gaps.len() as f64;
        let total: f64 = gaps.iter().sum();
        let min_gap = gaps.iter().copied().fold(f64::INFINITY, f64::min);
        let log_s = config.s.ln();
        let k_raw = (1.0 + total.ln() / log_s + (1.0 / min_gap).ln() / log_s).ceil();
        let k = if k_raw.is_finite() && k_raw >= 1.0 {
            (k_raw as usize).min(config.max_states)
        } else {
            1
        };
        let base = n / total;
        let rates: Vec<f64> = (0..k).map(|i| base * config.s.powi(i as i32)).collect();
        let ln_rates = rates.iter().map(|r| r.ln()).collect();
        Ok(Self {
            rates,
            ln_rates,
            transition_unit: config.gamma * n.ln(),
        })
    }

    pub fn n_states(&self) -> usize {
        self.rates.len()
    }

    pub fn emission(&self, state: usize, gap: f64) -> f64 {
        -self.ln_rates[state] + self.rates[state] * gap
    }

    pub fn transition(&self, from: usize, to: usize) -> f64 {
        if to > from {
            self.transition_unit * (to - from) as f64
        } else {
            0.0
        }
    }

    /// Total cost of a state path, starting from state 0 before the first gap.
    pub fn path_cost(&self, gaps: &[f64], path: &[usize]) -> f64 {
        let mut prev = 0;
        let mut cost = 0.0;
        for (&g, &s) in gaps.iter().zip(path) {
            cost += self.transition(prev, s) + self.emission(s, g);
            prev = s;
        }
        cost
    }
}

/// Minimum-cost state path (0-based states), ties toward the lower state.
pub fn kleinberg_states(gaps: &[f64], config: &KleinbergConfig) -> Result<Vec<usize>, BurstError> {
    let model = BurstCostModel::new(gaps, config)?;
    Ok(viterbi(&model, gaps))
}

fn viterbi(model: &BurstCostModel, gaps: &[f64]) -> Vec<usize> {
    let k = model.n_states();
    let n = gaps.len();
    let mut back = vec![0u8; n * k];
    let mut cost: Vec<f64> = (0..k)
        .map(|j| model.transition(0, j) + model.emission(j, gaps[0]))
        .collect();
    let mut next = vec![0.0; k];
    for (t, &g) in gaps.iter().enumerate().skip(1) {
        for j in 0..k {
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for (i, &c) in cost.iter().enumerate() {
                let v = c + model.transition(i, j);
                if v < best {
                    best = v;
                    arg = i;
                }
            }
            next[j] = best + model.emission(j, g);
            back[t * k + j] = arg as u8;
        }
        std::mem::swap(&mut cost, &mut next);
    }
    let mut state = 0;
    let mut best = f64::INFINITY;
    for (j, &c) in cost.iter().enumerate() {
        if c < best {
            best = c;
            state = j;
        }
    }
    let mut path = vec![0; n];
    for t in (0..n).rev() {
        path[t] = state;
        state = back[t * k + state] as usize;
    }
    path
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstInterval {
    pub level: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BurstAnnotation {
    /// Level per week (index 0 is week 1); 1 means no burst.
    pub week_levels: Vec<usize>,
    pub intervals: Vec<BurstInterval>,
    pub state_sequence: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct WeekLevel {
    week: usize,
    level: usize,
}

#[derive(Serialize, Deserialize)]
struct AnnotationJson {
    weeks: Vec<WeekLevel>,
    intervals: Vec<BurstInterval>,
}

impl BurstAnnotation {
    /// Build from per-week levels alone (no state path).
    pub fn from_levels(week_levels: Vec<usize>) -> Self {
        let intervals = extract_intervals(&week_levels);
        Self {
            week_levels,
            intervals,
            state_sequence: Vec::new(),
        }
    }

    pub fn max_level(&self) -> usize {
        self.week_levels.iter().copied().max().unwrap_or(1)
    }

    pub fn burst_weeks(&self) -> usize {
        self.week_levels.iter().filter(|&&l| l >= 2).count()
    }

    pub fn weeks_at_level(&self, level: usize) -> usize {
        self.week_levels.iter().filter(|&&l| l == level).count()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let doc = AnnotationJson {
            weeks: self
                .week_levels
                .iter()
                .enumerate()
                .map(|(i, &level)| WeekLevel {
                    week: i + 1,
                    level,
                })
                .collect(),
            intervals: self.intervals.clone(),
        };
        serde_json::to_value(doc).expect("annotation serializes")
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, serde_json::Error> {
        let doc: AnnotationJson = serde_json::from_value(value.clone())?;
        let mut levels = vec![1; doc.weeks.len()];
        for w in doc.weeks {
            if let Some(slot) = w.week.checked_sub(1).and_then(|i| levels.get_mut(i)) {
                *slot = w.level;
            }
        }
        Ok(Self {
            week_levels: levels,
            intervals: doc.intervals,
            state_sequence: Vec::new(),
        })
    }
}

/// Maximal runs of weeks with level ≥ L, for every L ≥ 2.
fn extract_intervals(levels: &[usize]) -> Vec<BurstInterval> {
    let max = levels.iter().copied().max().unwrap_or(1);
    let mut out = Vec::new();
    for level in 2..=max {
        let mut start = None;
        for (i, &l) in levels.iter().enumerate() {
            match (l >= level, start) {
                (true, None) => start = Some(i + 1),
                (false, Some(s)) => {
                    out.push(BurstInterval { level, start: s, end: i });
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            out.push(BurstInterval {
                level,
                start: s,
                end: levels.len(),
            });
        }
    }
    out.sort_by_key(|iv| (iv.start, iv.level));
    out
}

pub fn annotate_bursts(
    series: &CountSeries,
    config: &KleinbergConfig,
) -> Result<BurstAnnotation, BurstError> {
    let gaps = expand_to_offsets(series)?;
    let states = kleinberg_states(&gaps.gaps, config)?;
    let mut levels = vec![1usize; series.len()];
    for (&week, &state) in gaps.week_of_gap.iter().zip(&states) {
        let slot = &mut levels[week - 1];
        *slot = (*slot).max(state + 1);
    }
    let intervals = extract_intervals(&levels);
    Ok(BurstAnnotation {
        week_levels: levels,
        intervals,
        state_sequence: states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Exhaustive minimum over all `k^n` paths.
    fn brute_force(model: &BurstCostModel, gaps: &[f64]) -> (f64, Vec<usize>) {
        let k = model.n_states();
        let n = gaps.len();
        let mut path = vec![0usize; n];
        let mut best = (f64::INFINITY, path.clone());
        loop {
            let c = model.path_cost(gaps, &path);
            if c < best.0 {
                best = (c, path.clone());
            }
            // odometer increment, last position fastest
            let mut i = n;
            loop {
                if i == 0 {
                    return best;
                }
                i -= 1;
                path[i] += 1;
                if path[i] < k {
                    break;
                }
                path[i] = 0;
            }
        }
    }

    #[test]
    fn expansion_examples() {
        let g = expand_to_offsets(&CountSeries::new(vec![2], "")).unwrap();
        assert_eq!(g.offsets, vec![0.25, 0.75]);
        assert_eq!(g.gaps, vec![0.5]);

        let g = expand_to_offsets(&CountSeries::new(vec![1, 0, 1], "")).unwrap();
        assert_eq!(g.offsets, vec![0.5, 2.5]);
        assert_eq!(g.gaps, vec![2.0]);
        assert_eq!(g.week_of_gap, vec![3]);

        let g = expand_to_offsets(&CountSeries::new(vec![1, 10], "")).unwrap();
        assert_eq!(g.offsets.len(), 11);
        assert!((g.gaps[0] - 0.55).abs() < 1e-12);
        for gap in &g.gaps[1..] {
            assert!((gap - 0.1).abs() < 1e-12);
        }

        assert_eq!(
            expand_to_offsets(&CountSeries::new(vec![0, 1, 0], "")).unwrap_err(),
            BurstError::InsufficientEvents(1)
        );
    }

    #[test]
    fn equal_gaps_stay_in_base_state() {
        let gaps = vec![0.2; 200];
        let path = kleinberg_states(&gaps, &KleinbergConfig::default()).unwrap();
        assert!(path.iter().all(|&s| s == 0));
    }

    #[test]
    fn rejects_bad_input() {
        let cfg = KleinbergConfig::default();
        assert!(matches!(
            kleinberg_states(&[1.0, 0.0], &cfg),
            Err(BurstError::NonPositiveGap { index: 1, .. })
        ));
        let bad = KleinbergConfig { s: 1.0, ..cfg };
        assert!(kleinberg_states(&[1.0], &bad).is_err());
        let bad = KleinbergConfig { gamma: 0.0, ..cfg };
        assert!(kleinberg_states(&[1.0], &bad).is_err());
        let bad = KleinbergConfig { max_states: 1, ..cfg };
        assert!(kleinberg_states(&[1.0], &bad).is_err());
    }

    #[test]
    fn state_cap_formula() {
        // T = 8, min gap = 0.5, s = 2: 1 + 3 + 1 = 5 states
        let gaps = vec![0.5, 1.5, 2.0, 4.0];
        let model = BurstCostModel::new(&gaps, &KleinbergConfig::default()).unwrap();
        assert_eq!(model.n_states(), 5);
        let capped = KleinbergConfig {
            max_states: 3,
            ..Default::default()
        };
        assert_eq!(BurstCostModel::new(&gaps, &capped).unwrap().n_states(), 3);
    }

    #[test]
    fn dp_matches_exhaustive_on_eight_gaps() {
        let cfg = KleinbergConfig {
            max_states: 3,
            ..Default::default()
        };
        let gaps = [0.9, 0.05, 0.04, 0.07, 1.3, 0.8, 0.02, 0.03];
        let model = BurstCostModel::new(&gaps, &cfg).unwrap();
        assert_eq!(model.n_states(), 3);
        let path = kleinberg_states(&gaps, &cfg).unwrap();
        let (cost, best) = brute_force(&model, &gaps);
        assert_eq!(model.path_cost(&gaps, &path), cost);
        assert_eq!(path, best);
    }

    #[test]
    fn constant_series_has_no_bursts() {
        let ann = annotate_bursts(&CountSeries::new(vec![5; 50], ""), &Default::default()).unwrap();
        assert!(ann.week_levels.iter().all(|&l| l == 1));
        assert!(ann.intervals.is_empty());
    }

    #[test]
    fn spike_is_flagged() {
        let mut counts = vec![1u64; 20];
        counts.extend([40; 5]);
        counts.extend([1; 20]);
        let series = CountSeries::new(counts, "");
        let ann = annotate_bursts(&series, &Default::default()).unwrap();
        for w in 0..45 {
            if (20..25).contains(&w) {
                assert!(ann.week_levels[w] >= 2, "week {} level {}", w + 1, ann.week_levels[w]);
            } else {
                assert_eq!(ann.week_levels[w], 1, "week {}", w + 1);
            }
        }
        // the DP path is optimal on the induced gaps: no single-state change improves it
        let gaps = expand_to_offsets(&series).unwrap();
        let model = BurstCostModel::new(&gaps.gaps, &Default::default()).unwrap();
        let base = model.path_cost(&gaps.gaps, &ann.state_sequence);
        let mut probe = ann.state_sequence.clone();
        for t in 0..probe.len() {
            let orig = probe[t];
            for s in 0..model.n_states() {
                probe[t] = s;
                assert!(model.path_cost(&gaps.gaps, &probe) >= base - 1e-9);
            }
            probe[t] = orig;
        }
    }

    #[test]
    fn intervals_and_json() {
        let ann = BurstAnnotation::from_levels(vec![1, 2, 3, 3, 2, 1, 2]);
        assert_eq!(
            ann.intervals,
            vec![
                BurstInterval { level: 2, start: 2, end: 5 },
                BurstInterval { level: 3, start: 3, end: 4 },
                BurstInterval { level: 2, start: 7, end: 7 },
            ]
        );
        let json = ann.to_json();
        assert_eq!(json["weeks"][2], serde_json::json!({"week": 3, "level": 3}));
        assert_eq!(json["intervals"][0], serde_json::json!({"level": 2, "start": 2, "end": 5}));
        let back = BurstAnnotation::from_json(&json).unwrap();
        assert_eq!(back.week_levels, ann.week_levels);
    }

    proptest! {
        #[test]
        fn dp_equals_exhaustive(gaps in proptest::collection::vec(0.01f64..3.0, 1..=8)) {
            let cfg = KleinbergConfig { max_states: 3, ..Default::default() };
            let model = BurstCostModel::new(&gaps, &cfg).unwrap();
            let path = kleinberg_states(&gaps, &cfg).unwrap();
            let (cost, best) = brute_force(&model, &gaps);
            prop_assert_eq!(model.path_cost(&gaps, &path), cost);
            prop_assert_eq!(path, best);
        }

        #[test]
        fn time_scale_invariant(
            gaps in proptest::collection::vec(0.01f64..3.0, 2..60),
            c in prop_oneof![Just(0.5), Just(2.0), Just(3.7), Just(10.0)],
        ) {
            let cfg = KleinbergConfig::default();
            let a = kleinberg_states(&gaps, &cfg).unwrap();
            let scaled: Vec<f64> = gaps.iter().map(|g| g * c).collect();
            let b = kleinberg_states(&scaled, &cfg).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn nesting_holds(counts in proptest::collection::vec(0u64..60, 5..80)) {
            let series = CountSeries::new(counts, "");
            prop_assume!(series.total() >= 2);
            let ann = annotate_bursts(&series, &Default::default()).unwrap();
            for (i, &l) in ann.week_levels.iter().enumerate() {
                prop_assert!(l >= 1);
                if l >= 3 {
                    let week = i + 1;
                    let inside = ann.intervals.iter().any(|iv| {
                        iv.level == l - 1 && iv.start <= week && week <= iv.end
                    });
                    prop_assert!(inside, "week {} at level {} not nested", week, l);
                }
            }
        }
    }

    // Not a theorem: a large gamma can bridge two bursts across a lull. The
    // property is checked on spike-shaped inputs.
    #[test]
    fn burst_weeks_monotone_in_gamma() {
        let mut inputs = Vec::new();
        let mut a = vec![3u64; 30];
        a.extend([30, 45, 60, 45]);
        a.extend(vec![3; 30]);
        inputs.push(a);
        let mut b = vec![10u64; 40];
        b[12] = 80;
        b[25] = 50;
        b[26] = 70;
        inputs.push(b);
        inputs.push((0..80u64).map(|t| 5 + (t % 17 == 0) as u64 * 60).collect());
        for counts in inputs {
            let series = CountSeries::new(counts, "");
            let mut prev = usize::MAX;
            for gamma in [0.5, 1.0, 2.0, 4.0] {
                let cfg = KleinbergConfig { gamma, ..Default::default() };
                let weeks = annotate_bursts(&series, &cfg).unwrap().burst_weeks();
                assert!(weeks <= prev, "gamma {gamma} gives {weeks} > {prev}");
                prev = weeks;
            }
        }
    }
}
