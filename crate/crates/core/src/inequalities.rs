//! Linear Bell functionals `Σ c_{a,x} p(a|x) ≤ I`, the named catalog, and the
//! constants `C` and `C_opt` that enter the sharpened bounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::scenario::{Behavior, BellScenario, SettingVector};

const BUILTIN_CATALOG: &str = include_str!("../data/catalog.json");

/// Which hidden-variable class the classical bound refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelClass {
    /// Fully local hidden variables.
    Lhv,
    /// Hybrid local-nonlocal hidden variables (genuine multipartite nonlocality).
    Hlnhv,
}

impl std::fmt::Display for ModelClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelClass::Lhv => "lhv",
            ModelClass::Hlnhv => "hlnhv",
        })
    }
}

impl std::str::FromStr for ModelClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lhv" => Ok(ModelClass::Lhv),
            "hlnhv" => Ok(ModelClass::Hlnhv),
            other => Err(Error::InvalidFunctional(format!(
                "unknown model class `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BellFunctional<T: Real = f64> {
    name: String,
    scenario: BellScenario,
    /// `c[x][a]` in the scenario's table order.
    coefficients: Vec<Vec<T>>,
    classical_bound: T,
    model_class: ModelClass,
    quantum_value: Option<T>,
}

impl<T: Real> BellFunctional<T> {
    pub fn new(
        name: impl Into<String>,
        scenario: BellScenario,
        coefficients: Vec<Vec<T>>,
        classical_bound: T,
        model_class: ModelClass,
        quantum_value: Option<T>,
    ) -> Result<Self> {
        crate::scenario::check_table_shape(
            &scenario,
            &coefficients,
            scenario.num_joint_outcomes(),
        )?;
        let f = Self {
            name: name.into(),
            scenario,
            coefficients,
            classical_bound,
            model_class,
            quantum_value,
        };
        let c = f.constant_c();
        if c < classical_bound {
            return Err(Error::InvalidFunctional(format!(
                "classical bound {classical_bound} exceeds C = {c}"
            )));
        }
        Ok(f)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn scenario(&self) -> &BellScenario {
        &self.scenario
    }

    pub fn coefficients(&self) -> &[Vec<T>] {
        &self.coefficients
    }

    pub fn classical_bound(&self) -> T {
        self.classical_bound
    }

    pub fn model_class(&self) -> ModelClass {
        self.model_class
    }

    pub fn quantum_value(&self) -> Option<T> {
        self.quantum_value
    }

    pub fn num_parties(&self) -> usize {
        self.scenario.num_parties()
    }

    pub fn evaluate(&self, b: &Behavior<T>) -> Result<T> {
        if b.scenario() != &self.scenario {
            return Err(Error::ScenarioMismatch(format!(
                "functional `{}` and behavior are defined on different scenarios",
                self.name
            )));
        }
        Ok(self
            .coefficients
            .iter()
            .zip(b.table())
            .map(|(c, p)| c.iter().zip(p).map(|(&c, &p)| c * p).sum::<T>())
            .sum())
    }

    /// `max_a |c_{a,x}|` for every joint setting, in table order.
    pub fn setting_weights(&self) -> Vec<T> {
        self.coefficients
            .iter()
            .map(|row| row.iter().fold(T::zero(), |m, c| m.max(c.abs())))
            .collect()
    }

    /// `C = Σ_x max_a |c_{a,x}|`.
    pub fn constant_c(&self) -> T {
        self.setting_weights().into_iter().sum()
    }

    /// `C_opt = min_y Σ_x max_a |c_{a,x}| D(x, y) / N` and the first minimizing
    /// reference setting `y` in table order.
    pub fn constant_c_opt(&self) -> (T, SettingVector) {
        let w = self.setting_weights();
        let n = T::from_count(self.num_parties());
        let mut best: Option<(T, SettingVector)> = None;
        for y in self.scenario.joint_settings() {
            let total: T = self
                .scenario
                .joint_settings()
                .zip(&w)
                .map(|(x, &wx)| wx * T::from_count(hamming(&x.0, &y.0)))
                .sum();
            let v = total / n;
            if best.as_ref().map_or(true, |(b, _)| v < *b) {
                best = Some((v, y));
            }
        }
        best.expect("nonempty setting space")
    }
}

fn hamming(x: &[usize], y: &[usize]) -> usize {
    x.iter().zip(y).filter(|(a, b)| a != b).count()
}

/// Number of parties whose settings differ (Hamming distance). Counting
/// agreements instead would not reproduce the `C_opt` values of CHSH and
/// Svetlichny.
pub fn setting_distance(x: &SettingVector, y: &SettingVector) -> Result<usize> {
    if x.0.len() != y.0.len() {
        return Err(Error::DimensionMismatch {
            what: "setting vectors",
            expected: x.0.len(),
            found: y.0.len(),
        });
    }
    Ok(hamming(&x.0, &y.0))
}

/// Functional of the form `Σ_x c̃_x ⟨Π_k A_k⟩_x` on a dichotomic scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CorrelatorFunctional<T: Real = f64> {
    pub scenario: BellScenario,
    pub coefficients: Vec<T>,
}

impl<T: Real> CorrelatorFunctional<T> {
    pub fn new(scenario: BellScenario, coefficients: Vec<T>) -> Result<Self> {
        if !scenario.is_dichotomic() {
            return Err(Error::Unsupported(
                "correlator functionals need {-1, +1} outcomes".into(),
            ));
        }
        if coefficients.len() != scenario.num_joint_settings() {
            return Err(Error::DimensionMismatch {
                what: "correlator coefficients",
                expected: scenario.num_joint_settings(),
                found: coefficients.len(),
            });
        }
        Ok(Self {
            scenario,
            coefficients,
        })
    }

    /// Full table `c_{a,x} = (Π_k a_k) c̃_x`.
    pub fn expand_coefficients(&self) -> Vec<Vec<T>> {
        let s = &self.scenario;
        self.coefficients
            .iter()
            .map(|&ct| {
                (0..s.num_joint_outcomes())
                    .map(|ai| {
                        let sign: i32 = s.outcome_values(ai).iter().product();
                        ct * T::from_i32(sign).expect("sign")
                    })
                    .collect()
            })
            .collect()
    }

    pub fn into_functional(
        self,
        name: impl Into<String>,
        classical_bound: T,
        model_class: ModelClass,
        quantum_value: Option<T>,
    ) -> Result<BellFunctional<T>> {
        let coeffs = self.expand_coefficients();
        BellFunctional::new(
            name,
            self.scenario,
            coeffs,
            classical_bound,
            model_class,
            quantum_value,
        )
    }
}

/// One catalog entry as stored on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CatalogRecord<T: Real = f64> {
    pub name: String,
    pub parties: usize,
    pub settings: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcomes: Option<Vec<Vec<i32>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correlator_coeffs: Option<Vec<T>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_coeffs: Option<Vec<Vec<T>>>,
    pub classical_bound: T,
    pub model_class: ModelClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantum_value: Option<T>,
}

impl<T: Real> CatalogRecord<T> {
    pub fn to_functional(&self) -> Result<BellFunctional<T>> {
        if self.settings.len() != self.parties {
            return Err(Error::DimensionMismatch {
                what: "catalog settings",
                expected: self.parties,
                found: self.settings.len(),
            });
        }
        let outcomes = self
            .outcomes
            .clone()
            .unwrap_or_else(|| vec![crate::scenario::DICHOTOMIC.to_vec(); self.parties]);
        let scenario = BellScenario::new(self.settings.clone(), outcomes)?;
        match (&self.correlator_coeffs, &self.full_coeffs) {
            (Some(c), None) => CorrelatorFunctional::new(scenario, c.clone())?.into_functional(
                self.name.clone(),
                self.classical_bound,
                self.model_class,
                self.quantum_value,
            ),
            (None, Some(c)) => BellFunctional::new(
                self.name.clone(),
                scenario,
                c.clone(),
                self.classical_bound,
                self.model_class,
                self.quantum_value,
            ),
            _ => Err(Error::InvalidFunctional(format!(
                "record `{}` needs exactly one of correlator_coeffs and full_coeffs",
                self.name
            ))),
        }
    }
}

/// Named inequalities loaded from JSON records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent, bound = "T: Real")]
pub struct Catalog<T: Real = f64> {
    records: Vec<CatalogRecord<T>>,
}

impl<T: Real> Catalog<T> {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_CATALOG).expect("builtin catalog parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let records: Vec<CatalogRecord<T>> = serde_json::from_str(text)?;
        for r in &records {
            r.to_functional()?;
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[CatalogRecord<T>] {
        &self.records
    }

    pub fn register(&mut self, record: CatalogRecord<T>) -> Result<()> {
        record.to_functional()?;
        self.records
            .retain(|r| !(r.name == record.name && r.parties == record.parties));
        self.records.push(record);
        Ok(())
    }

    /// Looks up `name` for `parties` parties. Mermin inequalities for odd
    /// party counts without a stored record are generated.
    pub fn get(&self, name: &str, parties: usize) -> Result<BellFunctional<T>> {
        let key = name.to_ascii_lowercase();
        if let Some(r) = self
            .records
            .iter()
            .find(|r| r.name == key && r.parties == parties)
        {
            return r.to_functional();
        }
        if key == "mermin" {
            return mermin(parties);
        }
        if self.records.iter().any(|r| r.name == key) {
            Err(Error::InvalidPartyCount { name: key, parties })
        } else {
            Err(Error::UnknownInequality(name.to_string()))
        }
    }
}

/// Looks up a named inequality in the builtin catalog.
pub fn catalog<T: Real>(name: &str, parties: usize) -> Result<BellFunctional<T>> {
    Catalog::builtin().get(name, parties)
}

/// Correlator coefficients of `Im Π_k (A_k^{(1)} + i A_k^{(2)})`: a term with
/// `j` second settings carries `(-1)^{(j-1)/2}` for odd `j` and vanishes for
/// even `j`.
pub fn mermin_correlator_coeffs(parties: usize) -> Vec<i32> {
    (0..1usize << parties)
        .map(|xi| {
            let j = xi.count_ones() as usize;
            if j % 2 == 0 {
                0
            } else if (j / 2) % 2 == 0 {
                1
            } else {
                -1
            }
        })
        .collect()
}

/// N-partite Mermin inequality for odd `N ≥ 3` with `C = 2^{N-1}`,
/// `I = 2^{(N-1)/2}` and quantum value `2^{N-1}`.
pub fn mermin<T: Real>(parties: usize) -> Result<BellFunctional<T>> {
    if parties < 3 || parties % 2 == 0 {
        return Err(Error::InvalidPartyCount {
            name: "mermin".into(),
            parties,
        });
    }
    let scenario = BellScenario::dichotomic(parties, 2)?;
    let coeffs = mermin_correlator_coeffs(parties)
        .into_iter()
        .map(|c| T::from_i32(c).expect("small int"))
        .collect();
    let two = T::lit(2.0);
    CorrelatorFunctional::new(scenario, coeffs)?.into_functional(
        "mermin",
        two.powi(((parties - 1) / 2) as i32),
        ModelClass::Lhv,
        Some(two.powi((parties - 1) as i32)),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sqrt2() -> f64 {
        std::f64::consts::SQRT_2
    }

    #[test]
    fn catalog_constants() {
        let chsh = catalog::<f64>("chsh", 2).unwrap();
        assert_eq!(chsh.classical_bound(), 2.0);
        assert_eq!(chsh.constant_c(), 4.0);
        assert_eq!(chsh.quantum_value(), Some(2.0 * sqrt2()));

        let m3 = catalog::<f64>("mermin", 3).unwrap();
        assert_eq!(m3.classical_bound(), 2.0);
        assert_eq!(m3.constant_c(), 4.0);
        assert_eq!(m3.quantum_value(), Some(4.0));

        let sv = catalog::<f64>("svetlichny", 3).unwrap();
        assert_eq!(sv.classical_bound(), 4.0);
        assert_eq!(sv.constant_c(), 8.0);
        assert_eq!(sv.quantum_value(), Some(4.0 * sqrt2()));
        assert_eq!(sv.model_class(), ModelClass::Hlnhv);
    }

    #[test]
    fn stored_mermin_matches_generator() {
        let stored = catalog::<f64>("mermin", 3).unwrap();
        let generated = mermin::<f64>(3).unwrap();
        assert_eq!(stored.coefficients(), generated.coefficients());
    }

    #[test]
    fn mermin_family_constants() {
        for n in [3usize, 5, 7] {
            let m = mermin::<f64>(n).unwrap();
            assert_eq!(m.constant_c(), 2f64.powi(n as i32 - 1));
            assert_eq!(m.classical_bound(), 2f64.powi((n as i32 - 1) / 2));
        }
    }

    #[test]
    fn catalog_rejects_bad_requests() {
        assert!(matches!(
            catalog::<f64>("chsh", 3),
            Err(Error::InvalidPartyCount { .. })
        ));
        assert!(matches!(
            catalog::<f64>("mermin", 4),
            Err(Error::InvalidPartyCount { .. })
        ));
        assert!(matches!(
            catalog::<f64>("svetlichny", 4),
            Err(Error::InvalidPartyCount { .. })
        ));
        assert!(matches!(
            catalog::<f64>("bogus", 2),
            Err(Error::UnknownInequality(_))
        ));
    }

    #[test]
    fn c_opt_values() {
        let (c, _) = catalog::<f64>("svetlichny", 3).unwrap().constant_c_opt();
        assert_eq!(c, 4.0);
        let (c, _) = catalog::<f64>("chsh", 2).unwrap().constant_c_opt();
        assert_eq!(c, 2.0);
        let (c, _) = catalog::<f64>("mermin", 3).unwrap().constant_c_opt();
        assert_eq!(c, 2.0);
    }

    #[test]
    fn chsh_on_uniform_is_zero() {
        let chsh = catalog::<f64>("chsh", 2).unwrap();
        let u = Behavior::uniform(chsh.scenario().clone());
        assert_eq!(chsh.evaluate(&u).unwrap(), 0.0);
    }

    #[test]
    fn evaluate_checks_scenario() {
        let chsh = catalog::<f64>("chsh", 2).unwrap();
        let u = Behavior::uniform(BellScenario::dichotomic(3, 2).unwrap());
        assert!(matches!(chsh.evaluate(&u), Err(Error::ScenarioMismatch(_))));
    }

    #[test]
    fn distance_examples() {
        let x = SettingVector(vec![0, 1, 0]);
        assert_eq!(setting_distance(&x, &x).unwrap(), 0);
        assert_eq!(
            setting_distance(&x, &SettingVector(vec![1, 0, 1])).unwrap(),
            3
        );
        assert!(setting_distance(&x, &SettingVector(vec![0, 1])).is_err());
    }

    #[test]
    fn svetlichny_mean_distance_is_four() {
        let s = BellScenario::dichotomic(3, 2).unwrap();
        let best = s
            .joint_settings()
            .map(|y| {
                s.joint_settings()
                    .map(|x| setting_distance(&x, &y).unwrap())
                    .sum::<usize>() as f64
                    / 3.0
            })
            .fold(f64::INFINITY, f64::min);
        assert_eq!(best, 4.0);
    }

    #[test]
    fn bound_above_c_is_rejected() {
        let s = BellScenario::dichotomic(2, 2).unwrap();
        let f = CorrelatorFunctional::new(s, vec![1.0, 1.0, 1.0, -1.0])
            .unwrap()
            .into_functional("too-big", 5.0, ModelClass::Lhv, None);
        assert!(matches!(f, Err(Error::InvalidFunctional(_))));
    }

    #[test]
    fn record_needs_one_coefficient_form() {
        let text =
            r#"[{"name":"x","parties":1,"settings":[1],"classical_bound":0,"model_class":"lhv"}]"#;
        assert!(Catalog::<f64>::from_json(text).is_err());
    }

    #[test]
    fn registered_record_is_retrievable() {
        let mut cat = Catalog::<f64>::builtin();
        cat.register(CatalogRecord {
            name: "chsh3lift".into(),
            parties: 3,
            settings: vec![2, 2, 1],
            outcomes: None,
            correlator_coeffs: None,
            full_coeffs: Some(vec![vec![0.0; 8]; 4]),
            classical_bound: 0.0,
            model_class: ModelClass::Lhv,
            quantum_value: None,
        })
        .unwrap();
        assert_eq!(cat.get("chsh3lift", 3).unwrap().constant_c(), 0.0);
    }
}
