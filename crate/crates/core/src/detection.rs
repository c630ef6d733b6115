//! Detection-extended behaviors `p(a, d | x)`, coincidence postselection and
//! the conditional detection efficiency.
//!
//! Each party's local event is either the null event (no particle registered,
//! or the merged "other" class after coarse graining) or a pair of a
//! registered count `d ∈ 1..=max_count` and an outcome. Local event `0` is the
//! null event and `1 + (d - 1)·|A_k| + a` encodes `(d, a)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::scenario::{
    check_table_shape, mixed_radix_digits, mixed_radix_index, no_signaling_gap, validate_rows,
    Behavior, BellScenario, NoSignalingReport, SettingVector, Violation,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LocalEvent {
    /// Registered particle count; `0` is the null event.
    pub count: usize,
    /// Outcome index, absent for the null event.
    pub outcome: Option<usize>,
}

impl LocalEvent {
    pub const NULL: LocalEvent = LocalEvent {
        count: 0,
        outcome: None,
    };

    pub fn detected(count: usize, outcome: usize) -> Self {
        Self {
            count,
            outcome: Some(outcome),
        }
    }
}

/// Number of local events for an alphabet of size `n` and counts up to `max_count`.
pub fn local_event_count(alphabet: usize, max_count: usize) -> usize {
    1 + max_count * alphabet
}

pub fn encode_event(e: LocalEvent, alphabet: usize) -> usize {
    match e.outcome {
        None => 0,
        Some(a) => 1 + (e.count - 1) * alphabet + a,
    }
}

pub fn decode_event(idx: usize, alphabet: usize) -> LocalEvent {
    if idx == 0 {
        LocalEvent::NULL
    } else {
        LocalEvent::detected(1 + (idx - 1) / alphabet, (idx - 1) % alphabet)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DetectionBehavior<T: Real = f64> {
    scenario: BellScenario,
    max_count: usize,
    /// True after [`DetectionBehavior::coarse_grain`]: the null event then
    /// stands for every count other than one.
    coarse: bool,
    table: Vec<Vec<T>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionalEfficiency<T> {
    pub eta_c: T,
    /// Zero-based party attaining the minimum.
    pub party: usize,
    pub setting: SettingVector,
}

impl<T: Real> DetectionBehavior<T> {
    pub fn new(scenario: BellScenario, max_count: usize, table: Vec<Vec<T>>) -> Result<Self> {
        if max_count == 0 {
            return Err(Error::InvalidScenario(
                "max_count must be at least 1".into(),
            ));
        }
        let cols = Self::columns(&scenario, max_count);
        check_table_shape(&scenario, &table, cols)?;
        Ok(Self {
            scenario,
            max_count,
            coarse: false,
            table,
        })
    }

    fn columns(scenario: &BellScenario, max_count: usize) -> usize {
        scenario
            .outcomes()
            .iter()
            .map(|a| local_event_count(a.len(), max_count))
            .product()
    }

    pub fn from_fn(
        scenario: BellScenario,
        max_count: usize,
        mut f: impl FnMut(&SettingVector, &[LocalEvent]) -> T,
    ) -> Result<Self> {
        let sizes = Self::sizes_for(&scenario, max_count);
        let alph = scenario.alphabet_sizes();
        let cols: usize = sizes.iter().product();
        let table = (0..scenario.num_joint_settings())
            .map(|xi| {
                let x = scenario.setting_vector(xi);
                (0..cols)
                    .map(|ci| {
                        let events: Vec<LocalEvent> = mixed_radix_digits(ci, &sizes)
                            .iter()
                            .zip(&alph)
                            .map(|(&e, &n)| decode_event(e, n))
                            .collect();
                        f(&x, &events)
                    })
                    .collect()
            })
            .collect();
        Self::new(scenario, max_count, table)
    }

    /// Embeds a behavior as the sure event "every party registers one particle".
    pub fn from_behavior(b: &Behavior<T>) -> Self {
        let s = b.scenario().clone();
        let alph = s.alphabet_sizes();
        let sizes = Self::sizes_for(&s, 1);
        let cols: usize = sizes.iter().product();
        let table = b
            .table()
            .iter()
            .map(|row| {
                let mut out = vec![T::zero(); cols];
                for (ai, &p) in row.iter().enumerate() {
                    let a = mixed_radix_digits(ai, &alph);
                    let ev: Vec<usize> = a
                        .iter()
                        .zip(&alph)
                        .map(|(&o, &n)| encode_event(LocalEvent::detected(1, o), n))
                        .collect();
                    out[mixed_radix_index(&ev, &sizes)] = p;
                }
                out
            })
            .collect();
        Self {
            scenario: s,
            max_count: 1,
            coarse: false,
            table,
        }
    }

    fn sizes_for(scenario: &BellScenario, max_count: usize) -> Vec<usize> {
        scenario
            .outcomes()
            .iter()
            .map(|a| local_event_count(a.len(), max_count))
            .collect()
    }

    pub fn scenario(&self) -> &BellScenario {
        &self.scenario
    }

    pub fn max_count(&self) -> usize {
        self.max_count
    }

    pub fn is_coarse(&self) -> bool {
        self.coarse
    }

    pub fn table(&self) -> &[Vec<T>] {
        &self.table
    }

    /// Per-party local event counts.
    pub fn local_sizes(&self) -> Vec<usize> {
        Self::sizes_for(&self.scenario, self.max_count)
    }

    pub fn events(&self, column: usize) -> Vec<LocalEvent> {
        let alph = self.scenario.alphabet_sizes();
        mixed_radix_digits(column, &self.local_sizes())
            .iter()
            .zip(&alph)
            .map(|(&e, &n)| decode_event(e, n))
            .collect()
    }

    pub fn column(&self, events: &[LocalEvent]) -> usize {
        let alph = self.scenario.alphabet_sizes();
        let digits: Vec<usize> = events
            .iter()
            .zip(&alph)
            .map(|(&e, &n)| encode_event(e, n))
            .collect();
        mixed_radix_index(&digits, &self.local_sizes())
    }

    pub fn validate(&self) -> Vec<Violation<T>> {
        let sizes = self.local_sizes();
        validate_rows(&self.scenario, &self.table, |ci| {
            mixed_radix_digits(ci, &sizes)
        })
    }

    pub fn check_no_signaling(&self, tol: T) -> NoSignalingReport<T> {
        let worst = no_signaling_gap(self.scenario.settings(), &self.local_sizes(), &self.table);
        NoSignalingReport {
            no_signaling: worst <= tol,
            worst_violation: worst,
        }
    }

    fn sum_where(&self, xi: usize, pred: impl Fn(&[LocalEvent]) -> bool) -> T {
        self.table[xi]
            .iter()
            .enumerate()
            .filter(|(ci, _)| pred(&self.events(*ci)))
            .map(|(_, &p)| p)
            .sum()
    }

    /// `p(d = all-single | x)`.
    pub fn coincidence_probability(&self, x: &SettingVector) -> Result<T> {
        let xi = self.scenario.setting_index(x)?;
        Ok(self.sum_where(xi, |ev| ev.iter().all(|e| e.count == 1)))
    }

    /// Probability that every party except `party` registers a single particle.
    pub fn coincidence_probability_excluding(&self, x: &SettingVector, party: usize) -> Result<T> {
        let xi = self.scenario.setting_index(x)?;
        Ok(self.sum_where(xi, |ev| {
            ev.iter()
                .enumerate()
                .all(|(j, e)| j == party || e.count == 1)
        }))
    }

    /// Keeps count one as "single" and merges every other count into the
    /// null ("other") event.
    pub fn coarse_grain(&self) -> Self {
        let alph = self.scenario.alphabet_sizes();
        let fine = self.local_sizes();
        let coarse_sizes = Self::sizes_for(&self.scenario, 1);
        let cols: usize = coarse_sizes.iter().product();
        let table = self
            .table
            .iter()
            .map(|row| {
                let mut out = vec![T::zero(); cols];
                for (ci, &p) in row.iter().enumerate() {
                    let digits: Vec<usize> = mixed_radix_digits(ci, &fine)
                        .iter()
                        .zip(&alph)
                        .map(|(&e, &n)| {
                            let ev = decode_event(e, n);
                            if ev.count == 1 {
                                e
                            } else {
                                0
                            }
                        })
                        .collect();
                    let k = mixed_radix_index(&digits, &coarse_sizes);
                    out[k] = out[k] + p;
                }
                out
            })
            .collect();
        Self {
            scenario: self.scenario.clone(),
            max_count: 1,
            coarse: true,
            table,
        }
    }

    /// `p(a | d = all-single, x)`.
    pub fn postselect_coincidence(&self) -> Result<Behavior<T>> {
        let s = &self.scenario;
        let alph = s.alphabet_sizes();
        let mut table = Vec::with_capacity(s.num_joint_settings());
        for xi in 0..s.num_joint_settings() {
            let mut row = vec![T::zero(); s.num_joint_outcomes()];
            for (ci, &p) in self.table[xi].iter().enumerate() {
                let ev = self.events(ci);
                if ev.iter().all(|e| e.count == 1) {
                    let a: Vec<usize> = ev.iter().map(|e| e.outcome.expect("detected")).collect();
                    let ai = mixed_radix_index(&a, &alph);
                    row[ai] = row[ai] + p;
                }
            }
            let norm: T = row.iter().copied().sum();
            if norm <= T::zero() {
                return Err(Error::DegeneratePostselection {
                    setting: s.setting_vector(xi).0,
                });
            }
            row.iter_mut().for_each(|p| *p = *p / norm);
            table.push(row);
        }
        Behavior::new(s.clone(), table)
    }

    /// `η_c = min_{k,x} p(d|x) / p(d∖d_k|x)` with the minimizing party and setting.
    pub fn conditional_efficiency(&self) -> Result<ConditionalEfficiency<T>> {
        let s = &self.scenario;
        let mut best: Option<ConditionalEfficiency<T>> = None;
        for xi in 0..s.num_joint_settings() {
            let x = s.setting_vector(xi);
            let num = self.coincidence_probability(&x)?;
            for k in 0..s.num_parties() {
                let den = self.coincidence_probability_excluding(&x, k)?;
                if den <= T::zero() {
                    return Err(Error::DegenerateScenario(format!(
                        "no coincidence among the parties other than {} at setting {:?}",
                        k + 1,
                        x.0
                    )));
                }
                let r = num / den;
                if best.as_ref().map_or(true, |b| r < b.eta_c) {
                    best = Some(ConditionalEfficiency {
                        eta_c: r,
                        party: k,
                        setting: x.clone(),
                    });
                }
            }
        }
        Ok(best.expect("at least one party and setting"))
    }
}

/// Response of one detector station.
///
/// Every arriving particle independently survives transmission with
/// `eta_tra`. A single surviving particle is registered with `eta_det`. Two
/// surviving particles register as one count with `eta_1of2`, as two counts
/// with `min(eta_det², 1 - eta_1of2)`, and as nothing otherwise. On-off
/// detectors report any nonzero count as one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DetectorModel<T: Real = f64> {
    pub eta_det: T,
    pub eta_tra: T,
    pub eta_1of2: T,
    pub number_resolving: bool,
}

fn check_rate<T: Real>(name: &'static str, v: T) -> Result<()> {
    if v >= T::zero() && v <= T::one() {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name,
            value: v.as_f64(),
            range: "[0, 1]",
        })
    }
}

impl<T: Real> DetectorModel<T> {
    pub fn new(eta_det: T, eta_tra: T, eta_1of2: T, number_resolving: bool) -> Result<Self> {
        check_rate("eta_det", eta_det)?;
        check_rate("eta_tra", eta_tra)?;
        check_rate("eta_1of2", eta_1of2)?;
        Ok(Self {
            eta_det,
            eta_tra,
            eta_1of2,
            number_resolving,
        })
    }

    pub fn ideal() -> Self {
        Self {
            eta_det: T::one(),
            eta_tra: T::one(),
            eta_1of2: T::zero(),
            number_resolving: true,
        }
    }

    /// Number-resolving detector whose two-particle response follows from
    /// independent single-particle detection: `eta_1of2 = 2η(1 - η)`.
    pub fn independent(eta_det: T, eta_tra: T) -> Result<Self> {
        let two = T::lit(2.0);
        Self::new(eta_det, eta_tra, two * eta_det * (T::one() - eta_det), true)
    }

    /// On-off detector with independent single-particle detection.
    pub fn on_off(eta_det: T, eta_tra: T) -> Result<Self> {
        let two = T::lit(2.0);
        Self::new(
            eta_det,
            eta_tra,
            two * eta_det * (T::one() - eta_det),
            false,
        )
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(
            self.eta_det,
            self.eta_tra,
            self.eta_1of2,
            self.number_resolving,
        )
        .map(|_| ())
    }

    /// Registered-count distribution `[p0, p1, p2]` for particles that reach
    /// the detector after transmission.
    pub fn detect_surviving(&self, surviving: usize) -> Option<[T; 3]> {
        let (z, o) = (T::zero(), T::one());
        let mut p = match surviving {
            0 => [o, z, z],
            1 => [o - self.eta_det, self.eta_det, z],
            2 => {
                let one = self.eta_1of2;
                let two = (self.eta_det * self.eta_det).min(o - one);
                [o - one - two, one, two]
            }
            _ => return None,
        };
        if !self.number_resolving {
            p[1] = p[1] + p[2];
            p[2] = z;
        }
        Some(p)
    }

    /// Registered-count distribution `[p0, p1, p2]` for `arrived` particles
    /// sent towards the station.
    pub fn response(&self, arrived: usize, party: usize) -> Result<[T; 3]> {
        if arrived > 2 {
            return Err(Error::UnsupportedMultiplicity {
                party,
                count: arrived,
            });
        }
        let t = self.eta_tra;
        let l = T::one() - t;
        let surv: Vec<T> = match arrived {
            0 => vec![T::one()],
            1 => vec![l, t],
            _ => vec![l * l, T::lit(2.0) * t * l, t * t],
        };
        let mut out = [T::zero(); 3];
        for (m, &pm) in surv.iter().enumerate() {
            let d = self.detect_surviving(m).expect("at most two");
            for i in 0..3 {
                out[i] = out[i] + pm * d[i];
            }
        }
        Ok(out)
    }

    /// Probability of registering exactly one count when two particles
    /// survive transmission (includes the merged two-count branch for on-off
    /// detectors).
    pub fn effective_eta_1of2(&self) -> T {
        self.detect_surviving(2).expect("two particles")[1]
    }
}

/// Exact distribution over how many particles are sent to each party.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Allocation<T: Real = f64> {
    entries: Vec<(Vec<usize>, T)>,
    total: usize,
}

impl<T: Real> Allocation<T> {
    pub fn new(entries: Vec<(Vec<usize>, T)>) -> Result<Self> {
        let first = entries
            .first()
            .ok_or_else(|| Error::Precondition("allocation has no entries".into()))?;
        let n = first.0.len();
        let total: usize = first.0.iter().sum();
        for (counts, p) in &entries {
            if counts.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "allocation count vector",
                    expected: n,
                    found: counts.len(),
                });
            }
            if counts.iter().sum::<usize>() != total {
                return Err(Error::Precondition(
                    "allocation does not conserve particle number".into(),
                ));
            }
            check_rate("allocation probability", *p)?;
        }
        let mass: T = entries.iter().map(|e| e.1).sum();
        if (mass - T::one()).abs() > T::prob_tol() {
            return Err(Error::Precondition(format!(
                "allocation mass {mass} differs from one"
            )));
        }
        Ok(Self { entries, total })
    }

    /// One particle sent to each of `parties` parties.
    pub fn one_per_party(parties: usize) -> Self {
        Self {
            entries: vec![(vec![1; parties], T::one())],
            total: parties,
        }
    }

    pub fn entries(&self) -> &[(Vec<usize>, T)] {
        &self.entries
    }

    pub fn num_parties(&self) -> usize {
        self.entries[0].0.len()
    }

    /// Number of distributed particles `N_T`.
    pub fn total(&self) -> usize {
        self.total
    }
}

/// Composes an allocation with per-party detector responses. Outcomes of the
/// parties that register a count follow the matching marginal of `behavior`,
/// so detection is independent of the settings.
pub fn apply_detector_model<T: Real>(
    allocation: &Allocation<T>,
    detectors: &[DetectorModel<T>],
    behavior: &Behavior<T>,
) -> Result<DetectionBehavior<T>> {
    let s = behavior.scenario().clone();
    let n = s.num_parties();
    if allocation.num_parties() != n || detectors.len() != n {
        return Err(Error::DimensionMismatch {
            what: "parties in allocation/detectors",
            expected: n,
            found: if detectors.len() != n {
                detectors.len()
            } else {
                allocation.num_parties()
            },
        });
    }
    for d in detectors {
        d.validate()?;
    }
    let max_count = if allocation.total() >= 2 { 2 } else { 1 };
    let alph = s.alphabet_sizes();
    let sizes: Vec<usize> = alph
        .iter()
        .map(|&a| local_event_count(a, max_count))
        .collect();
    let cols: usize = sizes.iter().product();

    // Registered-count distribution over joint count vectors in {0,1,2}^N.
    let three = vec![3usize; n];
    let mut counts = vec![T::zero(); 3usize.pow(n as u32)];
    for (arr, q) in allocation.entries() {
        let per: Vec<[T; 3]> = arr
            .iter()
            .enumerate()
            .map(|(k, &m)| detectors[k].response(m, k))
            .collect::<Result<_>>()?;
        for (ci, c) in counts.iter_mut().enumerate() {
            let d = mixed_radix_digits(ci, &three);
            let w = d
                .iter()
                .enumerate()
                .fold(*q, |acc, (k, &dk)| acc * per[k][dk]);
            *c = *c + w;
        }
    }

    let mut table = vec![vec![T::zero(); cols]; s.num_joint_settings()];
    for (xi, row) in table.iter_mut().enumerate() {
        let x = s.setting_vector(xi);
        for (ci, &w) in counts.iter().enumerate() {
            if w == T::zero() {
                continue;
            }
            let d = mixed_radix_digits(ci, &three);
            let keep: Vec<usize> = (0..n).filter(|&k| d[k] > 0).collect();
            let kept_alph: Vec<usize> = keep.iter().map(|&k| alph[k]).collect();
            let marg = behavior.marginal_at(&x, &keep)?;
            for (mi, &pm) in marg.iter().enumerate() {
                let sub = mixed_radix_digits(mi, &kept_alph);
                let mut digits = vec![0usize; n];
                for (j, &k) in keep.iter().enumerate() {
                    digits[k] = encode_event(LocalEvent::detected(d[k], sub[j]), alph[k]);
                }
                let col = mixed_radix_index(&digits, &sizes);
                row[col] = row[col] + w * pm;
            }
        }
    }
    DetectionBehavior::new(s, max_count, table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_party() -> BellScenario {
        BellScenario::dichotomic(2, 2).unwrap()
    }

    fn correlated(s: BellScenario) -> Behavior<f64> {
        Behavior::from_fn(s, |x, a| {
            let same = if x.0 == vec![1, 1] { 0.1 } else { 0.45 };
            if a.0[0] == a.0[1] {
                same
            } else {
                0.5 - same
            }
        })
    }

    #[test]
    fn event_codec_roundtrip() {
        for idx in 0..local_event_count(2, 3) {
            assert_eq!(encode_event(decode_event(idx, 2), 2), idx);
        }
    }

    #[test]
    fn coarse_grain_keeps_all_single_events() {
        let s = BellScenario::dichotomic(3, 1).unwrap();
        let db = DetectionBehavior::<f64>::from_fn(s, 1, |_, ev| {
            if ev.iter().all(|e| *e == LocalEvent::detected(1, 0)) {
                1.0
            } else {
                0.0
            }
        })
        .unwrap();
        let cg = db.coarse_grain();
        assert!(cg.is_coarse());
        assert_eq!(cg.table(), db.table());
    }

    #[test]
    fn coarse_grain_merges_zero_and_double() {
        let s = BellScenario::dichotomic(2, 1).unwrap();
        let db =
            DetectionBehavior::<f64>::from_fn(s, 2, |_, ev| match (ev[0].count, ev[1].count) {
                (0, 2) if ev[1].outcome == Some(0) => 0.5,
                (2, 0) if ev[0].outcome == Some(1) => 0.5,
                _ => 0.0,
            })
            .unwrap();
        let cg = db.coarse_grain();
        let other = cg.column(&[LocalEvent::NULL, LocalEvent::NULL]);
        assert!((cg.table()[0][other] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn postselection_of_sure_event_is_identity() {
        let b = correlated(two_party());
        let db = DetectionBehavior::from_behavior(&b);
        assert!(db.validate().is_empty());
        let back = db.postselect_coincidence().unwrap();
        assert_eq!(back.max_abs_diff(&b).unwrap(), 0.0);
        assert_eq!(db.conditional_efficiency().unwrap().eta_c, 1.0);
    }

    #[test]
    fn setting_independent_losses_are_harmless() {
        let b = correlated(two_party());
        let dm = DetectorModel::new(0.7, 0.8, 0.0, true).unwrap();
        let db = apply_detector_model(&Allocation::one_per_party(2), &[dm, dm], &b).unwrap();
        assert!(db.validate().is_empty());
        let back = db.postselect_coincidence().unwrap();
        assert!(back.max_abs_diff(&b).unwrap() < 1e-15);
    }

    #[test]
    fn zero_coincidence_names_setting() {
        let s = two_party();
        let db = DetectionBehavior::<f64>::from_fn(s, 1, |x, ev| {
            let lost = x.0 == vec![1, 0];
            match (lost, ev[0].count, ev[1].count) {
                (true, 0, 0) => 1.0,
                (false, 1, 1) => 0.25,
                _ => 0.0,
            }
        })
        .unwrap();
        match db.postselect_coincidence() {
            Err(Error::DegeneratePostselection { setting }) => assert_eq!(setting, vec![1, 0]),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            db.conditional_efficiency(),
            Err(Error::DegenerateScenario(_))
        ));
    }

    #[test]
    fn standard_scenario_eta_c_is_product_efficiency() {
        let b = Behavior::<f64>::uniform(BellScenario::dichotomic(3, 2).unwrap());
        for &(det, tra) in &[(0.9, 1.0), (0.75, 1.0), (0.8, 0.9)] {
            let dm = DetectorModel::new(det, tra, 0.0, true).unwrap();
            let db = apply_detector_model(&Allocation::one_per_party(3), &[dm; 3], &b).unwrap();
            let eff = db.conditional_efficiency().unwrap();
            assert!((eff.eta_c - det * tra).abs() < 1e-14);
        }
    }

    #[test]
    fn total_transmission_loss_puts_mass_on_null() {
        let b = Behavior::<f64>::uniform(two_party());
        let dm = DetectorModel::new(1.0, 0.0, 0.0, true).unwrap();
        let db = apply_detector_model(&Allocation::one_per_party(2), &[dm, dm], &b).unwrap();
        let null = db.column(&[LocalEvent::NULL, LocalEvent::NULL]);
        for row in db.table() {
            assert_eq!(row[null], 1.0);
        }
    }

    #[test]
    fn detector_rates_are_checked() {
        assert!(DetectorModel::new(1.2, 1.0, 0.0, true).is_err());
        assert!(DetectorModel::new(0.5, -0.1, 0.0, true).is_err());
    }

    #[test]
    fn three_particles_at_one_detector_are_rejected() {
        let dm = DetectorModel::<f64>::ideal();
        assert!(matches!(
            dm.response(3, 1),
            Err(Error::UnsupportedMultiplicity { party: 1, count: 3 })
        ));
    }

    #[test]
    fn two_particle_response() {
        let dm = DetectorModel::<f64>::independent(0.9, 1.0).unwrap();
        let r = dm.response(2, 0).unwrap();
        assert!((r[1] - 0.18).abs() < 1e-15);
        assert!((r[2] - 0.81).abs() < 1e-15);
        assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let oo = DetectorModel::<f64>::on_off(0.9, 1.0).unwrap();
        assert!((oo.effective_eta_1of2() - 0.99).abs() < 1e-15);
        assert_eq!(oo.response(2, 0).unwrap()[2], 0.0);
    }
}
