//! Bell-scenario index types and conditional probability tables.
//!
//! Tables are dense. A behavior stores one row per joint setting and one
//! column per joint outcome. Both joint indices are mixed-radix with the
//! first party's digit varying fastest, and rows are ordered by joint setting
//! so the setting index varies slowest in the flattened table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// The `{-1, +1}` alphabet used by correlator-type inequalities.
pub const DICHOTOMIC: [i32; 2] = [-1, 1];

pub(crate) fn mixed_radix_index(digits: &[usize], radices: &[usize]) -> usize {
    let mut idx = 0;
    let mut stride = 1;
    for (d, r) in digits.iter().zip(radices) {
        idx += d * stride;
        stride *= r;
    }
    idx
}

pub(crate) fn mixed_radix_digits(mut idx: usize, radices: &[usize]) -> Vec<usize> {
    radices
        .iter()
        .map(|&r| {
            let d = idx % r;
            idx /= r;
            d
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "ScenarioRecord", into = "ScenarioRecord")]
pub struct BellScenario {
    settings: Vec<usize>,
    outcomes: Vec<Vec<i32>>,
}

#[derive(Serialize, Deserialize)]
struct ScenarioRecord {
    parties: usize,
    settings: Vec<usize>,
    outcomes: Vec<Vec<i32>>,
}

impl TryFrom<ScenarioRecord> for BellScenario {
    type Error = Error;

    fn try_from(r: ScenarioRecord) -> Result<Self> {
        if r.parties != r.settings.len() {
            return Err(Error::DimensionMismatch {
                what: "scenario settings",
                expected: r.parties,
                found: r.settings.len(),
            });
        }
        BellScenario::new(r.settings, r.outcomes)
    }
}

impl From<BellScenario> for ScenarioRecord {
    fn from(s: BellScenario) -> Self {
        ScenarioRecord {
            parties: s.num_parties(),
            settings: s.settings,
            outcomes: s.outcomes,
        }
    }
}

impl BellScenario {
    pub fn new(settings: Vec<usize>, outcomes: Vec<Vec<i32>>) -> Result<Self> {
        if settings.is_empty() {
            return Err(Error::InvalidScenario(
                "at least one party is required".into(),
            ));
        }
        if settings.len() != outcomes.len() {
            return Err(Error::DimensionMismatch {
                what: "scenario outcome alphabets",
                expected: settings.len(),
                found: outcomes.len(),
            });
        }
        if let Some(k) = settings.iter().position(|&m| m == 0) {
            return Err(Error::InvalidScenario(format!(
                "party {} has no settings",
                k + 1
            )));
        }
        for (k, alphabet) in outcomes.iter().enumerate() {
            if alphabet.is_empty() {
                return Err(Error::InvalidScenario(format!(
                    "party {} has an empty outcome alphabet",
                    k + 1
                )));
            }
            let mut sorted = alphabet.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != alphabet.len() {
                return Err(Error::InvalidScenario(format!(
                    "party {} has repeated outcome labels",
                    k + 1
                )));
            }
        }
        Ok(Self { settings, outcomes })
    }

    /// `parties` parties, each with `settings` settings and outcomes `{-1, +1}`.
    pub fn dichotomic(parties: usize, settings: usize) -> Result<Self> {
        Self::new(vec![settings; parties], vec![DICHOTOMIC.to_vec(); parties])
    }

    /// Outcomes `{-1, +1}` with per-party setting counts.
    pub fn dichotomic_with(settings: Vec<usize>) -> Result<Self> {
        let n = settings.len();
        Self::new(settings, vec![DICHOTOMIC.to_vec(); n])
    }

    pub fn num_parties(&self) -> usize {
        self.settings.len()
    }

    pub fn settings(&self) -> &[usize] {
        &self.settings
    }

    pub fn outcomes(&self) -> &[Vec<i32>] {
        &self.outcomes
    }

    pub fn alphabet_sizes(&self) -> Vec<usize> {
        self.outcomes.iter().map(Vec::len).collect()
    }

    /// `Σ_k M_k`.
    pub fn total_settings(&self) -> usize {
        self.settings.iter().sum()
    }

    pub fn num_joint_settings(&self) -> usize {
        self.settings.iter().product()
    }

    pub fn num_joint_outcomes(&self) -> usize {
        self.outcomes.iter().map(Vec::len).product()
    }

    pub fn is_dichotomic(&self) -> bool {
        self.outcomes.iter().all(|a| {
            let mut s = a.clone();
            s.sort_unstable();
            s == DICHOTOMIC
        })
    }

    pub fn setting_index(&self, x: &SettingVector) -> Result<usize> {
        self.check_setting(x)?;
        Ok(mixed_radix_index(&x.0, &self.settings))
    }

    pub fn setting_vector(&self, idx: usize) -> SettingVector {
        SettingVector(mixed_radix_digits(idx, &self.settings))
    }

    pub fn outcome_index(&self, a: &OutcomeVector) -> Result<usize> {
        if a.0.len() != self.num_parties() {
            return Err(Error::DimensionMismatch {
                what: "outcome vector",
                expected: self.num_parties(),
                found: a.0.len(),
            });
        }
        for (k, (&ak, alph)) in a.0.iter().zip(&self.outcomes).enumerate() {
            if ak >= alph.len() {
                return Err(Error::InvalidScenario(format!(
                    "outcome index {ak} out of range for party {}",
                    k + 1
                )));
            }
        }
        Ok(mixed_radix_index(&a.0, &self.alphabet_sizes()))
    }

    pub fn outcome_vector(&self, idx: usize) -> OutcomeVector {
        OutcomeVector(mixed_radix_digits(idx, &self.alphabet_sizes()))
    }

    /// Outcome labels for a joint outcome index.
    pub fn outcome_values(&self, idx: usize) -> Vec<i32> {
        self.outcome_vector(idx)
            .0
            .iter()
            .zip(&self.outcomes)
            .map(|(&i, alph)| alph[i])
            .collect()
    }

    pub fn joint_settings(&self) -> impl Iterator<Item = SettingVector> + '_ {
        (0..self.num_joint_settings()).map(move |i| self.setting_vector(i))
    }

    pub fn check_setting(&self, x: &SettingVector) -> Result<()> {
        if x.0.len() != self.num_parties() {
            return Err(Error::DimensionMismatch {
                what: "setting vector",
                expected: self.num_parties(),
                found: x.0.len(),
            });
        }
        for (k, (&xk, &m)) in x.0.iter().zip(&self.settings).enumerate() {
            if xk >= m {
                return Err(Error::InvalidScenario(format!(
                    "setting {xk} out of range for party {} ({m} settings)",
                    k + 1
                )));
            }
        }
        Ok(())
    }
}

/// Per-party setting indices, zero based.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SettingVector(pub Vec<usize>);

/// Per-party indices into the outcome alphabets, zero based.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OutcomeVector(pub Vec<usize>);

impl From<Vec<usize>> for SettingVector {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

impl From<Vec<usize>> for OutcomeVector {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation<T> {
    Negative {
        setting: Vec<usize>,
        outcome: Vec<usize>,
        value: T,
    },
    Normalization {
        setting: Vec<usize>,
        sum: T,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoSignalingReport<T> {
    pub no_signaling: bool,
    pub worst_violation: T,
}

/// Conditional probability table `p(a|x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BehaviorRecord<T>", bound = "T: Real")]
pub struct Behavior<T: Real = f64> {
    scenario: BellScenario,
    table: Vec<Vec<T>>,
}

#[derive(Deserialize)]
#[serde(bound = "T: Real")]
struct BehaviorRecord<T: Real> {
    scenario: BellScenario,
    table: Vec<Vec<T>>,
}

impl<T: Real> TryFrom<BehaviorRecord<T>> for Behavior<T> {
    type Error = Error;

    fn try_from(r: BehaviorRecord<T>) -> Result<Self> {
        Behavior::new(r.scenario, r.table)
    }
}

impl<T: Real> Behavior<T> {
    /// Wraps a table after checking its shape; probabilistic validity is
    /// reported separately by [`Behavior::validate`].
    pub fn new(scenario: BellScenario, table: Vec<Vec<T>>) -> Result<Self> {
        check_table_shape(&scenario, &table, scenario.num_joint_outcomes())?;
        Ok(Self { scenario, table })
    }

    pub fn from_fn(
        scenario: BellScenario,
        mut f: impl FnMut(&SettingVector, &OutcomeVector) -> T,
    ) -> Self {
        let table = (0..scenario.num_joint_settings())
            .map(|xi| {
                let x = scenario.setting_vector(xi);
                (0..scenario.num_joint_outcomes())
                    .map(|ai| f(&x, &scenario.outcome_vector(ai)))
                    .collect()
            })
            .collect();
        Self { scenario, table }
    }

    pub fn uniform(scenario: BellScenario) -> Self {
        let p = T::one() / T::from_count(scenario.num_joint_outcomes());
        Self::from_fn(scenario, |_, _| p)
    }

    /// Product behavior `Π_k q_k(a_k|x_k)` from per-party tables indexed
    /// `[party][setting][outcome]`.
    pub fn product(scenario: BellScenario, local: &[Vec<Vec<T>>]) -> Result<Self> {
        if local.len() != scenario.num_parties() {
            return Err(Error::DimensionMismatch {
                what: "local tables",
                expected: scenario.num_parties(),
                found: local.len(),
            });
        }
        for (k, tab) in local.iter().enumerate() {
            if tab.len() != scenario.settings()[k] {
                return Err(Error::DimensionMismatch {
                    what: "local table settings",
                    expected: scenario.settings()[k],
                    found: tab.len(),
                });
            }
            let na = scenario.outcomes()[k].len();
            if let Some(row) = tab.iter().find(|r| r.len() != na) {
                return Err(Error::DimensionMismatch {
                    what: "local table outcomes",
                    expected: na,
                    found: row.len(),
                });
            }
        }
        Ok(Self::from_fn(scenario, |x, a| {
            local
                .iter()
                .enumerate()
                .fold(T::one(), |acc, (k, tab)| acc * tab[x.0[k]][a.0[k]])
        }))
    }

    /// Deterministic behavior: party `k` answers `response[k][x_k]` (an
    /// outcome index).
    pub fn deterministic(scenario: BellScenario, response: &[Vec<usize>]) -> Result<Self> {
        let local: Vec<Vec<Vec<T>>> = response
            .iter()
            .enumerate()
            .map(|(k, r)| {
                let na = scenario.outcomes().get(k).map_or(0, Vec::len);
                r.iter()
                    .map(|&a| {
                        (0..na)
                            .map(|i| if i == a { T::one() } else { T::zero() })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Self::product(scenario, &local)
    }

    pub fn scenario(&self) -> &BellScenario {
        &self.scenario
    }

    pub fn table(&self) -> &[Vec<T>] {
        &self.table
    }

    pub fn into_table(self) -> Vec<Vec<T>> {
        self.table
    }

    pub fn prob(&self, x: &SettingVector, a: &OutcomeVector) -> Result<T> {
        let xi = self.scenario.setting_index(x)?;
        let ai = self.scenario.outcome_index(a)?;
        Ok(self.table[xi][ai])
    }

    pub fn row(&self, x: &SettingVector) -> Result<&[T]> {
        Ok(&self.table[self.scenario.setting_index(x)?])
    }

    /// Lists violated nonnegativity and normalization constraints.
    pub fn validate(&self) -> Vec<Violation<T>> {
        validate_rows(&self.scenario, &self.table, |ai| {
            self.scenario.outcome_vector(ai).0
        })
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }

    /// Operational no-signaling: for every party `k` the marginal of the other
    /// parties must not depend on `x_k`.
    pub fn check_no_signaling(&self, tol: T) -> NoSignalingReport<T> {
        let worst = no_signaling_gap(
            &self.scenario.settings,
            &self.scenario.alphabet_sizes(),
            &self.table,
        );
        NoSignalingReport {
            no_signaling: worst <= tol,
            worst_violation: worst,
        }
    }

    /// `Σ_a (Π_k a_k) p(a|x)` for dichotomic scenarios.
    pub fn full_correlator(&self, x: &SettingVector) -> Result<T> {
        let all: Vec<usize> = (0..self.scenario.num_parties()).collect();
        self.parity_moment(x, &all)
    }

    /// `Σ_a (Π_{k ∈ parties} a_k) p(a|x)` for dichotomic scenarios.
    pub fn parity_moment(&self, x: &SettingVector, parties: &[usize]) -> Result<T> {
        if !self.scenario.is_dichotomic() {
            return Err(Error::Unsupported(
                "correlators require {-1, +1} outcome alphabets".into(),
            ));
        }
        let row = self.row(x)?;
        let mut acc = T::zero();
        for (ai, &p) in row.iter().enumerate() {
            let vals = self.scenario.outcome_values(ai);
            let sign: i32 = parties.iter().map(|&k| vals[k]).product();
            acc = acc + T::from_i32(sign).expect("sign") * p;
        }
        Ok(acc)
    }

    /// Joint outcome distribution of the parties in `keep` (ascending) at the
    /// full joint setting `x`.
    pub fn marginal_at(&self, x: &SettingVector, keep: &[usize]) -> Result<Vec<T>> {
        let row = self.row(x)?;
        let sizes = self.scenario.alphabet_sizes();
        let kept: Vec<usize> = keep.iter().map(|&k| sizes[k]).collect();
        let mut out = vec![T::zero(); kept.iter().product()];
        for (ai, &p) in row.iter().enumerate() {
            let a = mixed_radix_digits(ai, &sizes);
            let sub: Vec<usize> = keep.iter().map(|&k| a[k]).collect();
            let si = mixed_radix_index(&sub, &kept);
            out[si] = out[si] + p;
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        if self.scenario != other.scenario {
            return Err(Error::ScenarioMismatch(
                "behaviors over different scenarios".into(),
            ));
        }
        Ok(self
            .table
            .iter()
            .flatten()
            .zip(other.table.iter().flatten())
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs())))
    }
}

pub(crate) fn check_table_shape<T>(
    scenario: &BellScenario,
    table: &[Vec<T>],
    columns: usize,
) -> Result<()> {
    if table.len() != scenario.num_joint_settings() {
        return Err(Error::DimensionMismatch {
            what: "table rows (joint settings)",
            expected: scenario.num_joint_settings(),
            found: table.len(),
        });
    }
    if let Some(row) = table.iter().find(|r| r.len() != columns) {
        return Err(Error::DimensionMismatch {
            what: "table columns (joint outcomes)",
            expected: columns,
            found: row.len(),
        });
    }
    Ok(())
}

pub(crate) fn validate_rows<T: Real>(
    scenario: &BellScenario,
    table: &[Vec<T>],
    label: impl Fn(usize) -> Vec<usize>,
) -> Vec<Violation<T>> {
    let tol = T::prob_tol();
    let mut out = Vec::new();
    for (xi, row) in table.iter().enumerate() {
        let setting = scenario.setting_vector(xi).0;
        for (ai, &p) in row.iter().enumerate() {
            if p < T::zero() || p.is_nan() {
                out.push(Violation::Negative {
                    setting: setting.clone(),
                    outcome: label(ai),
                    value: p,
                });
            }
        }
        let sum: T = row.iter().copied().sum();
        if (sum - T::one()).abs() > tol || sum.is_nan() {
            out.push(Violation::Normalization { setting, sum });
        }
    }
    out
}

/// Largest discrepancy between marginals of the remaining parties when a
/// single party's setting changes. `sizes` are the per-party local event
/// counts of the table columns.
pub(crate) fn no_signaling_gap<T: Real>(
    settings: &[usize],
    sizes: &[usize],
    table: &[Vec<T>],
) -> T {
    let n = settings.len();
    let mut worst = T::zero();
    for k in 0..n {
        let rest_sizes: Vec<usize> = (0..n).filter(|&j| j != k).map(|j| sizes[j]).collect();
        let rest_len: usize = rest_sizes.iter().product();
        let marginal = |xi: usize| -> Vec<T> {
            let mut m = vec![T::zero(); rest_len];
            for (ci, &p) in table[xi].iter().enumerate() {
                let mut c = mixed_radix_digits(ci, sizes);
                c.remove(k);
                let ri = mixed_radix_index(&c, &rest_sizes);
                m[ri] = m[ri] + p;
            }
            m
        };
        for xi in 0..table.len() {
            let x = mixed_radix_digits(xi, settings);
            if x[k] == 0 {
                continue;
            }
            let mut base = x.clone();
            base[k] = 0;
            let m0 = marginal(mixed_radix_index(&base, settings));
            let m1 = marginal(xi);
            for (a, b) in m0.iter().zip(&m1) {
                worst = worst.max((*a - *b).abs());
            }
        }
    }
    worst
}
