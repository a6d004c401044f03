//! Autoregressive two-state HMM over cluster symbols.
//!
//! Hidden states are independent across windows given their per-window
//! priors `θ_t` (Death) and `1 − θ_t` (Survival); the observation `x_t`
//! depends on `x_{t−1}` and the current state. The joint probability of
//! one (state path, symbol path) pair is
//! `θ_{s_1}·φ(x_1|s_1) · Π_{t≥2} θ_{s_t}·φ(x_t|x_{t−1},s_t)`,
//! and the risk score is the share of joint mass on paths that visit Death.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::ObservationSequence;
use crate::survival::HiddenState;

/// Longest sequence scored by exhaustive path enumeration.
pub const MAX_ENUMERATION_WINDOWS: usize = 16;

/// `initial[l][s] = φ(x_1 = l+1 | s)`,
/// `transition[l][k][s] = φ(x_t = l+1 | x_{t−1} = k+1, s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionModel {
    pub k: usize,
    pub alpha: f64,
    pub initial: Vec<[f64; 2]>,
    pub transition: Vec<Vec<[f64; 2]>>,
}

impl EmissionModel {
    /// Laplace-smoothed counts. Transition counts are pooled over all
    /// windows `t ≥ 2`.
    pub fn estimate(
        sequences: &[ObservationSequence],
        states: &[Vec<HiddenState>],
        k: usize,
        alpha: f64,
    ) -> Result<Self> {
        if sequences.is_empty() {
            return Err(Error::InsufficientData("no training sequences".into()));
        }
        if sequences.len() != states.len() {
            return Err(Error::Dimension("sequences and state labels differ in count".into()));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("smoothing must be positive, got {alpha}")));
        }
        if k == 0 {
            return Err(Error::Config("k must be positive".into()));
        }
        let mut init_counts = vec![[0.0f64; 2]; k];
        let mut trans_counts = vec![vec![[0.0f64; 2]; k]; k];
        for (x, s) in sequences.iter().zip(states) {
            if x.len() != s.len() || x.is_empty() {
                return Err(Error::Dimension("sequence and labels must align and be non-empty".into()));
            }
            let idx = x
                .0
                .iter()
                .map(|&l| symbol_index(l, k))
                .collect::<Result<Vec<_>>>()?;
            init_counts[idx[0]][s[0].index()] += 1.0;
            for t in 1..idx.len() {
                trans_counts[idx[t]][idx[t - 1]][s[t].index()] += 1.0;
            }
        }
        let kf = k as f64;
        let mut initial = vec![[0.0; 2]; k];
        for s in 0..2 {
            let total: f64 = init_counts.iter().map(|c| c[s]).sum();
            for l in 0..k {
                initial[l][s] = (init_counts[l][s] + alpha) / (total + alpha * kf);
            }
        }
        let mut transition = vec![vec![[0.0; 2]; k]; k];
        for prev in 0..k {
            for s in 0..2 {
                let total: f64 = (0..k).map(|l| trans_counts[l][prev][s]).sum();
                for l in 0..k {
                    transition[l][prev][s] = (trans_counts[l][prev][s] + alpha) / (total + alpha * kf);
                }
            }
        }
        Ok(EmissionModel {
            k,
            alpha,
            initial,
            transition,
        })
    }

    /// Emissions that ignore the hidden state, for tests and baselines.
    pub fn state_independent(initial: Vec<f64>, transition: Vec<Vec<f64>>) -> Self {
        let k = initial.len();
        EmissionModel {
            k,
            alpha: 0.0,
            initial: initial.iter().map(|&p| [p, p]).collect(),
            transition: transition
                .iter()
                .map(|row| row.iter().map(|&p| [p, p]).collect())
                .collect(),
        }
    }

    /// `φ(x_t | x_{t−1}, s)`; `prev = None` for the first window.
    pub fn emission(&self, prev: Option<u32>, current: u32, state: HiddenState) -> Result<f64> {
        let l = symbol_index(current, self.k)?;
        Ok(match prev {
            None => self.initial[l][state.index()],
            Some(p) => self.transition[l][symbol_index(p, self.k)?][state.index()],
        })
    }
}

fn symbol_index(label: u32, k: usize) -> Result<usize> {
    if label == 0 || label as usize > k {
        return Err(Error::Range(format!("symbol {label} outside 1..={k}")));
    }
    Ok(label as usize - 1)
}

fn check_inputs(priors: &[f64], x: &ObservationSequence) -> Result<()> {
    if priors.len() != x.len() {
        return Err(Error::Dimension(format!(
            "{} priors for a sequence of length {}",
            priors.len(),
            x.len()
        )));
    }
    if x.is_empty() {
        return Err(Error::Dimension("empty sequence".into()));
    }
    if let Some(p) = priors.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Range(format!("prior {p} outside [0,1]")));
    }
    Ok(())
}

fn state_prior(death_prior: f64, state: HiddenState) -> f64 {
    match state {
        HiddenState::Death => death_prior,
        HiddenState::Survival => 1.0 - death_prior,
    }
}

/// `log(θ_{s_t}·φ(x_t | x_{t−1}, s_t))` for every window and both states.
fn log_factors(
    priors: &[f64],
    emissions: &EmissionModel,
    x: &ObservationSequence,
) -> Result<Vec<[f64; 2]>> {
    let mut out = Vec::with_capacity(x.len());
    for (t, (&theta, &symbol)) in priors.iter().zip(&x.0).enumerate() {
        let prev = (t > 0).then(|| x.0[t - 1]);
        let mut f = [0.0; 2];
        for s in HiddenState::ALL {
            f[s.index()] = state_prior(theta, s).ln() + emissions.emission(prev, symbol, s)?.ln();
        }
        out.push(f);
    }
    Ok(out)
}

/// `log Ψ` of one state path.
pub fn log_joint_probability(
    priors: &[f64],
    emissions: &EmissionModel,
    x: &ObservationSequence,
    states: &[HiddenState],
) -> Result<f64> {
    check_inputs(priors, x)?;
    if states.len() != x.len() {
        return Err(Error::Dimension("state path and sequence differ in length".into()));
    }
    let factors = log_factors(priors, emissions, x)?;
    Ok(factors.iter().zip(states).map(|(f, s)| f[s.index()]).sum())
}

/// `Ψ` of one state path, evaluated in log space.
pub fn sequence_joint_probability(
    priors: &[f64],
    emissions: &EmissionModel,
    x: &ObservationSequence,
    states: &[HiddenState],
) -> Result<f64> {
    log_joint_probability(priors, emissions, x, states).map(f64::exp)
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Joint mass split between paths that visit Death and the all-Survival path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassSplit {
    pub log_death: f64,
    pub log_survival: f64,
}

impl MassSplit {
    pub fn log_total(&self) -> f64 {
        log_add(self.log_death, self.log_survival)
    }

    /// `ΣΨ_Death / (ΣΨ_Death + ΣΨ_Survival)`.
    pub fn eta(&self) -> f64 {
        if self.log_death == f64::NEG_INFINITY {
            return 0.0;
        }
        if self.log_survival == f64::NEG_INFINITY {
            return 1.0;
        }
        1.0 / (1.0 + (self.log_survival - self.log_death).exp())
    }
}

/// Sums `Ψ` over all `2^T` state paths.
pub fn enumerate_mass(
    priors: &[f64],
    emissions: &EmissionModel,
    x: &ObservationSequence,
) -> Result<MassSplit> {
    check_inputs(priors, x)?;
    let t_len = x.len();
    if t_len > MAX_ENUMERATION_WINDOWS {
        return Err(Error::Range(format!(
            "enumeration is limited to {MAX_ENUMERATION_WINDOWS} windows, got {t_len}"
        )));
    }
    let factors = log_factors(priors, emissions, x)?;
    let mut log_death = f64::NEG_INFINITY;
    let log_survival: f64 = factors.iter().map(|f| f[0]).sum();
    // Bit t of `path` set means Death at window t; path 0 is all-Survival.
    for path in 1u32..(1u32 << t_len) {
        let lp: f64 = factors
            .iter()
            .enumerate()
            .map(|(t, f)| f[((path >> t) & 1) as usize])
            .sum();
        log_death = log_add(log_death, lp);
    }
    Ok(MassSplit {
        log_death,
        log_survival,
    })
}

/// Forward recursion over two accumulators: total mass of all prefixes and
/// mass of the all-Survival prefix. Because states do not condition on the
/// previous state, the total factorizes as `Π_t Σ_s θ_{s,t}·φ(x_t|x_{t−1},s)`.
pub fn forward_mass(
    priors: &[f64],
    emissions: &EmissionModel,
    x: &ObservationSequence,
) -> Result<MassSplit> {
    check_inputs(priors, x)?;
    let factors = log_factors(priors, emissions, x)?;
    let mut log_total = 0.0;
    let mut log_survival = 0.0;
    for f in &factors {
        log_total += log_add(f[0], f[1]);
        log_survival += f[0];
    }
    let gap = log_survival - log_total;
    let log_death = if gap >= 0.0 {
        f64::NEG_INFINITY
    } else {
        log_total + (-gap.exp_m1()).ln()
    };
    Ok(MassSplit {
        log_death,
        log_survival,
    })
}

/// `log Π_t Σ_s θ_{s,t}·φ(x_t|x_{t−1},s)`.
pub fn log_total_factorized(
    priors: &[f64],
    emissions: &EmissionModel,
    x: &ObservationSequence,
) -> Result<f64> {
    check_inputs(priors, x)?;
    Ok(log_factors(priors, emissions, x)?
        .iter()
        .map(|f| log_add(f[0], f[1]))
        .sum())
}

/// Risk score `η`: enumeration up to [`MAX_ENUMERATION_WINDOWS`], forward
/// recursion beyond.
pub fn risk_score(priors: &[f64], emissions: &EmissionModel, x: &ObservationSequence) -> Result<f64> {
    let split = if x.len() <= MAX_ENUMERATION_WINDOWS {
        enumerate_mass(priors, emissions, x)?
    } else {
        forward_mass(priors, emissions, x)?
    };
    Ok(split.eta())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskScore {
    pub patient_id: String,
    pub eta: f64,
    pub priors: Vec<f64>,
    pub sequence: ObservationSequence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveGroup {
    Death,
    Survival,
}

impl CurveGroup {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveGroup::Death => "death",
            CurveGroup::Survival => "survival",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub group: CurveGroup,
    pub target_day: u32,
    pub mean_survival: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

/// Per-patient survival probability `1 − η_D` by day.
pub fn survival_probabilities(etas: &BTreeMap<u32, f64>) -> BTreeMap<u32, f64> {
    etas.iter().map(|(&d, &e)| (d, 1.0 - e)).collect()
}

/// Mean survival curve per outcome group with a normal-approximation 95%
/// interval of the mean, clamped to [0, 1]. Groups with no patients are
/// left out.
pub fn survival_curves(patients: &[(CurveGroup, BTreeMap<u32, f64>)]) -> Vec<CurvePoint> {
    let mut out = Vec::new();
    for group in [CurveGroup::Death, CurveGroup::Survival] {
        let members: Vec<&BTreeMap<u32, f64>> = patients
            .iter()
            .filter(|(g, _)| *g == group)
            .map(|(_, e)| e)
            .collect();
        if members.is_empty() {
            log::warn!("no patients in the {} group; band omitted", group.as_str());
            continue;
        }
        let days: Vec<u32> = members[0].keys().copied().collect();
        for day in days {
            let values: Vec<f64> = members
                .iter()
                .filter_map(|m| m.get(&day).map(|eta| 1.0 - eta))
                .collect();
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let sd = if values.len() > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            let half = 1.959_963_984_540_054 * sd / n.sqrt();
            out.push(CurvePoint {
                group,
                target_day: day,
                mean_survival: mean,
                ci_low: (mean - half).clamp(0.0, 1.0),
                ci_high: (mean + half).clamp(0.0, 1.0),
                n: values.len(),
            });
        }
    }
    out
}

pub fn write_predictions_csv<W: Write>(writer: W, rows: &[(String, u32, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["patient_id", "target_day", "eta"])?;
    for (id, day, eta) in rows {
        w.write_record([id.as_str(), &day.to_string(), &eta.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_curves_csv<W: Write>(writer: W, points: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["group", "target_day", "mean_survival", "ci_low", "ci_high"])?;
    for p in points {
        w.write_record([
            p.group.as_str(),
            &p.target_day.to_string(),
            &p.mean_survival.to_string(),
            &p.ci_low.to_string(),
            &p.ci_high.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use HiddenState::{Death, Survival};

    fn seq(v: &[u32]) -> ObservationSequence {
        ObservationSequence(v.to_vec())
    }

    fn uniform(k: usize) -> EmissionModel {
        EmissionModel::state_independent(vec![1.0 / k as f64; k], vec![vec![1.0 / k as f64; k]; k])
    }

    #[test]
    fn smoothing_by_hand() {
        let em = EmissionModel::estimate(&[seq(&[1, 2])], &[vec![Survival, Survival]], 3, 1.0).unwrap();
        assert_eq!(em.transition[1][0][0], 0.5);
        // Unseen context: uniform.
        for l in 0..3 {
            assert!((em.transition[l][2][1] - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn conditionals_sum_to_one() {
        let em = EmissionModel::estimate(
            &[seq(&[1, 2, 2]), seq(&[3, 1, 2]), seq(&[2, 2, 1])],
            &[vec![Survival, Death, Death], vec![Death, Survival, Survival], vec![Survival; 3]],
            3,
            0.5,
        )
        .unwrap();
        for s in 0..2 {
            let init: f64 = (0..3).map(|l| em.initial[l][s]).sum();
            assert!((init - 1.0).abs() < 1e-12);
            for prev in 0..3 {
                let row: f64 = (0..3).map(|l| em.transition[l][prev][s]).sum();
                assert!((row - 1.0).abs() < 1e-12);
            }
        }
        assert!(em.initial.iter().flatten().all(|&p| p > 0.0));
    }

    #[test]
    fn estimate_rejects_empty_and_bad_symbols() {
        assert!(EmissionModel::estimate(&[], &[], 2, 1.0).is_err());
        assert!(EmissionModel::estimate(&[seq(&[3])], &[vec![Death]], 2, 1.0).is_err());
        assert!(EmissionModel::estimate(&[seq(&[1])], &[vec![Death]], 2, 0.0).is_err());
    }

    #[test]
    fn single_window_joint() {
        let em = uniform(2);
        let psi = sequence_joint_probability(&[0.3], &em, &seq(&[2]), &[Death]).unwrap();
        assert!((psi - 0.3 * 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_window_joint_by_hand() {
        let em = uniform(2);
        let psi = sequence_joint_probability(&[0.2, 0.3], &em, &seq(&[1, 2]), &[Survival, Death]).unwrap();
        assert!((psi - 0.06).abs() < 1e-15);
        assert!(sequence_joint_probability(&[0.2], &em, &seq(&[1, 2]), &[Survival, Death]).is_err());
    }

    #[test]
    fn zero_death_prior_gives_zero_risk() {
        let em = uniform(3);
        assert_eq!(risk_score(&[0.0, 0.0, 0.0], &em, &seq(&[1, 2, 3])).unwrap(), 0.0);
        assert_eq!(forward_mass(&[0.0, 0.0], &em, &seq(&[1, 2])).unwrap().eta(), 0.0);
    }

    #[test]
    fn state_independent_emissions_reduce_to_prior_union() {
        let em = EmissionModel::state_independent(
            vec![0.2, 0.8],
            vec![vec![0.6, 0.3], vec![0.4, 0.7]],
        );
        let priors = [0.1, 0.25, 0.4];
        let expected = 1.0 - priors.iter().map(|p| 1.0 - p).product::<f64>();
        let eta = risk_score(&priors, &em, &seq(&[2, 1, 1])).unwrap();
        assert!((eta - expected).abs() < 1e-14);
    }

    #[test]
    fn hand_table_matches_four_path_sum() {
        // K = 2, state-dependent emissions.
        let em = EmissionModel {
            k: 2,
            alpha: 1.0,
            initial: vec![[0.7, 0.4], [0.3, 0.6]],
            transition: vec![vec![[0.9, 0.2], [0.5, 0.1]], vec![[0.1, 0.8], [0.5, 0.9]]],
        };
        let theta = [0.2, 0.3];
        let x = seq(&[2, 1]);
        // Ψ(s1, s2) = θ(s1) φ(x1=2|s1) θ(s2) φ(x2=1|x1=2,s2)
        let p = |s1: usize, s2: usize| {
            let th = |t: usize, s: usize| if s == 1 { theta[t] } else { 1.0 - theta[t] };
            th(0, s1) * em.initial[1][s1] * th(1, s2) * em.transition[0][1][s2]
        };
        let death = p(0, 1) + p(1, 0) + p(1, 1);
        let expected = death / (death + p(0, 0));
        assert!((risk_score(&theta, &em, &x).unwrap() - expected).abs() < 1e-15);
        assert!((forward_mass(&theta, &em, &x).unwrap().eta() - expected).abs() < 1e-15);
    }

    #[test]
    fn log_space_survives_long_tiny_sequences() {
        let k = 2;
        let tiny = 1e-300;
        let em = EmissionModel::state_independent(vec![tiny, 1.0 - tiny], vec![vec![tiny, 1.0 - tiny]; k]);
        let priors = vec![tiny; 64];
        let x = seq(&[1; 64]);
        let lp = log_joint_probability(&priors, &em, &x, &[Death; 64]).unwrap();
        assert!(lp.is_finite());
        let split = forward_mass(&priors, &em, &x).unwrap();
        assert!(split.log_total().is_finite());
        assert!((0.0..=1.0).contains(&split.eta()));
    }

    #[test]
    fn curves_complement_and_single_member() {
        let etas: BTreeMap<u32, f64> = [(2, 0.1), (3, 0.2), (4, 0.3), (5, 0.4)].into_iter().collect();
        let surv: Vec<f64> = survival_probabilities(&etas).values().copied().collect();
        for (a, b) in surv.iter().zip([0.9, 0.8, 0.7, 0.6]) {
            assert!((a - b).abs() < 1e-15);
        }
        let points = survival_curves(&[(CurveGroup::Death, etas.clone())]);
        assert_eq!(points.len(), 4);
        for p in &points {
            assert_eq!(p.ci_low, p.mean_survival);
            assert_eq!(p.ci_high, p.mean_survival);
        }
        assert!((points[0].mean_survival - 0.9).abs() < 1e-15);
    }

    #[test]
    fn csv_writers() {
        let mut buf = Vec::new();
        write_predictions_csv(&mut buf, &[("p1".into(), 2, 0.25)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "patient_id,target_day,eta\np1,2,0.25\n");
        let mut buf = Vec::new();
        write_predictions_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "patient_id,target_day,eta\n");
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, EmissionModel, ObservationSequence)> {
        (1usize..=5, 1usize..=8).prop_flat_map(|(k, t)| {
            (
                prop::collection::vec(0.0f64..1.0, t),
                prop::collection::vec(0.01f64..1.0, k * 2),
                prop::collection::vec(0.01f64..1.0, k * k * 2),
                prop::collection::vec(1u32..=k as u32, t),
            )
                .prop_map(move |(priors, init, trans, x)| {
                    let mut initial = vec![[0.0; 2]; k];
                    let mut transition = vec![vec![[0.0; 2]; k]; k];
                    for s in 0..2 {
                        let z: f64 = (0..k).map(|l| init[l * 2 + s]).sum();
                        for l in 0..k {
                            initial[l][s] = init[l * 2 + s] / z;
                        }
                        for prev in 0..k {
                            let z: f64 = (0..k).map(|l| trans[(l * k + prev) * 2 + s]).sum();
                            for l in 0..k {
                                transition[l][prev][s] = trans[(l * k + prev) * 2 + s] / z;
                            }
                        }
                    }
                    (priors, EmissionModel { k, alpha: 1.0, initial, transition }, ObservationSequence(x))
                })
        })
    }

    proptest! {
        #[test]
        fn enumeration_and_forward_agree((priors, em, x) in instance()) {
            let a = enumerate_mass(&priors, &em, &x).unwrap();
            let b = forward_mass(&priors, &em, &x).unwrap();
            prop_assert!((a.eta() - b.eta()).abs() <= 1e-12);
            let fact = log_total_factorized(&priors, &em, &x).unwrap();
            prop_assert!((a.log_total().exp() / fact.exp() - 1.0).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&a.eta()));
        }

        #[test]
        fn eta_monotone_in_priors_when_emissions_ignore_state(
            (priors, em, x) in instance(), bump in 0.0f64..1.0, at in 0usize..8
        ) {
            let em = EmissionModel {
                initial: em.initial.iter().map(|p| [p[0], p[0]]).collect(),
                transition: em.transition.iter().map(|r| r.iter().map(|p| [p[0], p[0]]).collect()).collect(),
                ..em
            };
            let at = at % priors.len();
            let mut raised = priors.clone();
            raised[at] = priors[at] + (1.0 - priors[at]) * bump;
            prop_assert!(risk_score(&raised, &em, &x).unwrap() >= risk_score(&priors, &em, &x).unwrap() - 1e-15);
        }

        #[test]
        fn joint_probability_is_a_probability((priors, em, x) in instance(), bits in 0u32..256) {
            let states: Vec<HiddenState> = (0..x.len()).map(|t| if (bits >> t) & 1 == 1 { Death } else { Survival }).collect();
            let psi = sequence_joint_probability(&priors, &em, &x, &states).unwrap();
            prop_assert!((0.0..=1.0).contains(&psi));
        }
    }
}
