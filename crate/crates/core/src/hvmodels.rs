//! Finite hidden-variable models with detection and numerical checks of the
//! statements that lead to the sharpened bounds.
//!
//! A model is a finite mixture `Σ_λ p_λ p(a, d | x, λ)`. Each component is
//! either a product over groups of parties (all singletons for LHV models, a
//! bipartition into no-signaling groups for HLNHV models) or an arbitrary
//! joint table.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classical_bounds::{enumerate_ns_vertices, lhv_bound};
use crate::detection::{decode_event, local_event_count, DetectionBehavior, LocalEvent};
use crate::error::{Error, Result};
use crate::inequalities::{catalog, setting_distance, BellFunctional, ModelClass};
use crate::scenario::{
    mixed_radix_digits, mixed_radix_index, no_signaling_gap, Behavior, BellScenario, SettingVector,
};
use crate::sharpening::{excess_settings, sharpened_bound_hlnhv, sharpened_bound_lhv};

const TABLE_TOL: f64 = 1e-12;

/// Response table of a group of parties, `table[x_G][e_G]` with the group's
/// settings and local events in mixed radix (first listed party fastest).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupTable {
    pub parties: Vec<usize>,
    pub table: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Component {
    /// Product of group tables; the groups partition the parties.
    Factorized { groups: Vec<GroupTable> },
    /// Arbitrary table `p(a, d | x, λ)` in [`DetectionBehavior`] layout.
    Joint { table: Vec<Vec<f64>> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lhv,
    Hlnhv,
    General,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HiddenVariableModel {
    scenario: BellScenario,
    max_count: usize,
    weights: Vec<f64>,
    components: Vec<Component>,
}

fn check_rows(rows: &[Vec<f64>], cols: usize, what: &'static str) -> Result<()> {
    for row in rows {
        if row.len() != cols {
            return Err(Error::DimensionMismatch {
                what,
                expected: cols,
                found: row.len(),
            });
        }
        if row.iter().any(|&p| !(p >= -TABLE_TOL)) {
            return Err(Error::Precondition(format!("{what} has a negative entry")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(Error::Precondition(format!("{what} row sums to {s}")));
        }
    }
    Ok(())
}

impl HiddenVariableModel {
    pub fn new(
        scenario: BellScenario,
        max_count: usize,
        weights: Vec<f64>,
        components: Vec<Component>,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::DimensionMismatch {
                what: "weights vs components",
                expected: components.len(),
                found: weights.len(),
            });
        }
        if weights.iter().any(|&w| !(w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-10
        {
            return Err(Error::Precondition(
                "weights must be a probability distribution".into(),
            ));
        }
        if max_count == 0 {
            return Err(Error::InvalidScenario(
                "max_count must be at least 1".into(),
            ));
        }
        let m = Self {
            scenario,
            max_count,
            weights,
            components,
        };
        let n = m.scenario.num_parties();
        for c in &m.components {
            match c {
                Component::Factorized { groups } => {
                    let mut seen = vec![false; n];
                    for g in groups {
                        for &k in &g.parties {
                            if k >= n || seen[k] {
                                return Err(Error::Precondition(
                                    "groups must partition the parties".into(),
                                ));
                            }
                            seen[k] = true;
                        }
                        let (settings, sizes) = m.group_shape(&g.parties);
                        if g.table.len() != settings.iter().product::<usize>() {
                            return Err(Error::DimensionMismatch {
                                what: "group table rows",
                                expected: settings.iter().product(),
                                found: g.table.len(),
                            });
                        }
                        check_rows(&g.table, sizes.iter().product(), "group table")?;
                    }
                    if seen.iter().any(|s| !s) {
                        return Err(Error::Precondition(
                            "groups must partition the parties".into(),
                        ));
                    }
                }
                Component::Joint { table } => {
                    if table.len() != m.scenario.num_joint_settings() {
                        return Err(Error::DimensionMismatch {
                            what: "joint table rows",
                            expected: m.scenario.num_joint_settings(),
                            found: table.len(),
                        });
                    }
                    check_rows(table, m.local_sizes().iter().product(), "joint table")?;
                }
            }
        }
        Ok(m)
    }

    pub fn scenario(&self) -> &BellScenario {
        &self.scenario
    }

    pub fn max_count(&self) -> usize {
        self.max_count
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn local_sizes(&self) -> Vec<usize> {
        self.scenario
            .alphabet_sizes()
            .iter()
            .map(|&a| local_event_count(a, self.max_count))
            .collect()
    }

    fn group_shape(&self, parties: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let sizes = self.local_sizes();
        (
            parties
                .iter()
                .map(|&k| self.scenario.settings()[k])
                .collect(),
            parties.iter().map(|&k| sizes[k]).collect(),
        )
    }

    pub fn kind(&self) -> ModelKind {
        let mut lhv = true;
        let mut hlnhv = true;
        for c in &self.components {
            match c {
                Component::Factorized { groups } => {
                    if groups.iter().any(|g| g.parties.len() > 1) {
                        lhv = false;
                    }
                    if groups.len() < 2 {
                        hlnhv = false;
                    }
                    for g in groups {
                        let (settings, sizes) = self.group_shape(&g.parties);
                        if no_signaling_gap(&settings, &sizes, &g.table) > TABLE_TOL {
                            hlnhv = false;
                        }
                    }
                }
                Component::Joint { .. } => {
                    lhv = false;
                    hlnhv = false;
                }
            }
        }
        if lhv {
            ModelKind::Lhv
        } else if hlnhv {
            ModelKind::Hlnhv
        } else {
            ModelKind::General
        }
    }

    fn component_table(&self, c: &Component) -> Vec<Vec<f64>> {
        match c {
            Component::Joint { table } => table.clone(),
            Component::Factorized { groups } => {
                let sizes = self.local_sizes();
                let cols: usize = sizes.iter().product();
                let shapes: Vec<_> = groups
                    .iter()
                    .map(|g| self.group_shape(&g.parties))
                    .collect();
                (0..self.scenario.num_joint_settings())
                    .map(|xi| {
                        let x = self.scenario.setting_vector(xi).0;
                        let rows: Vec<&Vec<f64>> = groups
                            .iter()
                            .zip(&shapes)
                            .map(|(g, (gs, _))| {
                                let gx: Vec<usize> = g.parties.iter().map(|&k| x[k]).collect();
                                &g.table[mixed_radix_index(&gx, gs)]
                            })
                            .collect();
                        (0..cols)
                            .map(|ci| {
                                let e = mixed_radix_digits(ci, &sizes);
                                groups
                                    .iter()
                                    .zip(&shapes)
                                    .zip(&rows)
                                    .map(|((g, (_, gz)), row)| {
                                        let ge: Vec<usize> =
                                            g.parties.iter().map(|&k| e[k]).collect();
                                        row[mixed_radix_index(&ge, gz)]
                                    })
                                    .product()
                            })
                            .collect()
                    })
                    .collect()
            }
        }
    }

    /// `p(a, d | x, λ)` for component `lambda`.
    pub fn component_behavior(&self, lambda: usize) -> Result<DetectionBehavior<f64>> {
        DetectionBehavior::new(
            self.scenario.clone(),
            self.max_count,
            self.component_table(&self.components[lambda]),
        )
    }

    pub fn component_behaviors(&self) -> Result<Vec<DetectionBehavior<f64>>> {
        (0..self.components.len())
            .map(|l| self.component_behavior(l))
            .collect()
    }

    /// `p(a, d | x) = Σ_λ p_λ p(a, d | x, λ)`.
    pub fn to_detection_behavior(&self) -> Result<DetectionBehavior<f64>> {
        let sizes = self.local_sizes();
        let cols: usize = sizes.iter().product();
        let mut table = vec![vec![0.0; cols]; self.scenario.num_joint_settings()];
        for (w, c) in self.weights.iter().zip(&self.components) {
            for (row, crow) in table.iter_mut().zip(self.component_table(c)) {
                for (p, q) in row.iter_mut().zip(crow) {
                    *p += w * q;
                }
            }
        }
        DetectionBehavior::new(self.scenario.clone(), self.max_count, table)
    }

    /// `p(d_k = 1 | x_k, λ)` for an LHV component.
    fn single_detection(&self, lambda: usize, party: usize, xk: usize) -> Result<f64> {
        let Component::Factorized { groups } = &self.components[lambda] else {
            return Err(Error::Precondition(
                "single-party detection needs a factorized component".into(),
            ));
        };
        let g = groups
            .iter()
            .find(|g| g.parties == [party])
            .ok_or_else(|| {
                Error::Precondition(format!("party {party} is not a singleton group"))
            })?;
        let alph = self.scenario.alphabet_sizes()[party];
        Ok(g.table[xk]
            .iter()
            .enumerate()
            .filter(|(e, _)| decode_event(*e, alph).count == 1)
            .map(|(_, p)| p)
            .sum())
    }
}

/// `model_to_detection_behavior` as a free function.
pub fn model_to_detection_behavior(m: &HiddenVariableModel) -> Result<DetectionBehavior<f64>> {
    m.to_detection_behavior()
}

/// SplitMix64 step used to derive independent per-trial seeds.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Normalized exponentials of uniforms (a flat Dirichlet sample).
fn dirichlet(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Outcome distribution: a deterministic outcome half of the time, otherwise
/// a flat Dirichlet sample.
fn outcome_distribution(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    if rng.gen_bool(0.5) {
        let mut v = vec![0.0; n];
        v[rng.gen_range(0..n)] = 1.0;
        v
    } else {
        dirichlet(rng, n)
    }
}

/// Loss scale of a random model, `0.3 u^3`: most models lose little, which
/// keeps their sharpened bounds informative.
fn loss_scale(rng: &mut ChaCha8Rng) -> f64 {
    0.3 * rng.gen::<f64>().powi(3)
}

/// Single-party table over `{null, (1, a)}` from a loss probability and an
/// outcome distribution.
fn single_events(loss: f64, outcomes: &[f64]) -> Vec<f64> {
    std::iter::once(loss)
        .chain(outcomes.iter().map(|p| (1.0 - loss) * p))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RandomKind {
    /// Product responses with setting-dependent losses.
    Lhv,
    /// One local party times a no-signaling pair with setting-dependent losses.
    Hlnhv,
    /// Product responses whose detection probability ignores the setting.
    FairSampling,
}

/// Seeded random model with at most one registered particle per party.
///
/// HLNHV pair tables are mixtures of no-signaling vertices followed by local,
/// setting-dependent loss; they need three parties with two settings and two
/// outcomes each.
pub fn random_model(
    scenario: &BellScenario,
    kind: RandomKind,
    support: usize,
    seed: u64,
) -> Result<HiddenVariableModel> {
    if support == 0 {
        return Err(Error::Precondition("support must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = scenario.num_parties();
    let alph = scenario.alphabet_sizes();
    let scale = loss_scale(&mut rng);
    let weights = dirichlet(&mut rng, support);
    let local = |rng: &mut ChaCha8Rng, k: usize, fair: bool| -> GroupTable {
        let fixed = scale * rng.gen::<f64>();
        let table = (0..scenario.settings()[k])
            .map(|_| {
                let loss = if fair {
                    fixed
                } else {
                    scale * rng.gen::<f64>()
                };
                single_events(loss, &outcome_distribution(rng, alph[k]))
            })
            .collect();
        GroupTable {
            parties: vec![k],
            table,
        }
    };
    let components = match kind {
        RandomKind::Lhv | RandomKind::FairSampling => (0..support)
            .map(|_| Component::Factorized {
                groups: (0..n)
                    .map(|k| local(&mut rng, k, kind == RandomKind::FairSampling))
                    .collect(),
            })
            .collect(),
        RandomKind::Hlnhv => {
            if n != 3 || scenario.settings() != [2, 2, 2] || alph != [2, 2, 2] {
                return Err(Error::Unsupported(
                    "random HLNHV models need three parties with two settings and two outcomes"
                        .into(),
                ));
            }
            let vertices = enumerate_ns_vertices();
            (0..support)
                .map(|_| {
                    let single = rng.gen_range(0..3);
                    let pair: Vec<usize> = (0..3).filter(|&k| k != single).collect();
                    let mix = dirichlet(&mut rng, 3);
                    let picks: Vec<&Behavior<f64>> = (0..3)
                        .map(|_| &vertices[rng.gen_range(0..vertices.len())].behavior)
                        .collect();
                    let loss: Vec<Vec<Vec<f64>>> = (0..2)
                        .map(|_| {
                            (0..2)
                                .map(|_| (0..2).map(|_| scale * rng.gen::<f64>()).collect())
                                .collect()
                        })
                        .collect();
                    Component::Factorized {
                        groups: vec![
                            local(&mut rng, single, false),
                            pair_table(pair, &mix, &picks, &loss),
                        ],
                    }
                })
                .collect()
        }
    };
    HiddenVariableModel::new(scenario.clone(), 1, weights, components)
}

/// Mixture of two-party boxes post-processed by local loss
/// `loss[j][x_j][a_j]`: party `j` reports null with that probability and its
/// outcome otherwise.
fn pair_table(
    parties: Vec<usize>,
    mix: &[f64],
    boxes: &[&Behavior<f64>],
    loss: &[Vec<Vec<f64>>],
) -> GroupTable {
    let table = (0..4)
        .map(|xi| {
            let x = [xi % 2, xi / 2];
            let mut row = vec![0.0; 9];
            for (w, b) in mix.iter().zip(boxes) {
                for ai in 0..4 {
                    let a = [ai % 2, ai / 2];
                    let p = w * b.table()[xi][ai];
                    for (e0, p0) in [
                        (0, loss[0][x[0]][a[0]]),
                        (1 + a[0], 1.0 - loss[0][x[0]][a[0]]),
                    ] {
                        for (e1, p1) in [
                            (0, loss[1][x[1]][a[1]]),
                            (1 + a[1], 1.0 - loss[1][x[1]][a[1]]),
                        ] {
                            row[e0 + 3 * e1] += p * p0 * p1;
                        }
                    }
                }
            }
            row
        })
        .collect();
    GroupTable { parties, table }
}

/// Quantities from the LHV derivation of the sharpened bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LhvChainDiagnostics {
    /// `p^prod_λ = Π_k Π_{x_k} p(d_k | x_k, λ)`.
    pub p_prod_lambda: Vec<f64>,
    pub p_prod: f64,
    /// `q^(MN)_λ = p_λ p^prod_λ / p^prod` (zeros when `p^prod = 0`).
    pub q_mn: Vec<f64>,
    /// `δ = min_x p^prod / p(d|x)`.
    pub delta: f64,
    pub eta_c: f64,
    pub postselected_value: f64,
    /// Functional evaluated on the setting-independent mixture `q^(MN)`.
    pub q_value: f64,
    /// `C + (I - C) δ`.
    pub delta_bound: f64,
    /// `1 - ((1 - η_c)/η_c)(Σ M_k - N)`.
    pub delta_lower: f64,
    pub sharpened_bound: f64,
    /// Smallest slack over the checked inequalities.
    pub margin: f64,
    pub holds: bool,
}

fn check_lhv_model(m: &HiddenVariableModel) -> Result<()> {
    if m.kind() != ModelKind::Lhv {
        return Err(Error::Precondition("model is not an LHV model".into()));
    }
    Ok(())
}

fn coincidences(db: &DetectionBehavior<f64>) -> Result<Vec<f64>> {
    db.scenario()
        .joint_settings()
        .map(|x| {
            let p = db.coincidence_probability(&x)?;
            if p <= 0.0 {
                return Err(Error::DegeneratePostselection { setting: x.0 });
            }
            Ok(p)
        })
        .collect()
}

/// `p(a | d, x, λ)` for every component, with the uniform distribution where
/// `p(d | x, λ) = 0`.
fn postselected_components(comps: &[DetectionBehavior<f64>]) -> Vec<Vec<Vec<f64>>> {
    comps
        .iter()
        .map(|c| {
            let s = c.scenario();
            let alph = s.alphabet_sizes();
            let na = s.num_joint_outcomes();
            (0..s.num_joint_settings())
                .map(|xi| {
                    let mut row = vec![0.0; na];
                    for (ci, &p) in c.table()[xi].iter().enumerate() {
                        let ev = c.events(ci);
                        if ev.iter().all(|e| e.count == 1) {
                            let a: Vec<usize> =
                                ev.iter().map(|e| e.outcome.expect("detected")).collect();
                            row[mixed_radix_index(&a, &alph)] += p;
                        }
                    }
                    let s: f64 = row.iter().sum();
                    if s > 0.0 {
                        row.iter_mut().for_each(|p| *p /= s);
                    } else {
                        row.iter_mut().for_each(|p| *p = 1.0 / na as f64);
                    }
                    row
                })
                .collect()
        })
        .collect()
}

fn mixture(scenario: &BellScenario, q: &[f64], rows: &[Vec<Vec<f64>>]) -> Result<Behavior<f64>> {
    let mut table = vec![vec![0.0; scenario.num_joint_outcomes()]; scenario.num_joint_settings()];
    for (w, comp) in q.iter().zip(rows) {
        for (row, crow) in table.iter_mut().zip(comp) {
            for (p, c) in row.iter_mut().zip(crow) {
                *p += w * c;
            }
        }
    }
    Behavior::new(scenario.clone(), table)
}

const CHECK_TOL: f64 = 1e-9;

pub fn lhv_chain_diagnostics(
    m: &HiddenVariableModel,
    f: &BellFunctional<f64>,
) -> Result<LhvChainDiagnostics> {
    check_lhv_model(m)?;
    if f.scenario() != m.scenario() {
        return Err(Error::ScenarioMismatch(
            "functional and model scenarios differ".into(),
        ));
    }
    let s = m.scenario();
    let db = m.to_detection_behavior()?;
    let pd = coincidences(&db)?;
    let p_prod_lambda: Vec<f64> = (0..m.components.len())
        .map(|l| {
            let mut prod = 1.0;
            for k in 0..s.num_parties() {
                for xk in 0..s.settings()[k] {
                    prod *= m.single_detection(l, k, xk)?;
                }
            }
            Ok(prod)
        })
        .collect::<Result<_>>()?;
    let p_prod: f64 = m
        .weights
        .iter()
        .zip(&p_prod_lambda)
        .map(|(w, p)| w * p)
        .sum();
    let q_mn: Vec<f64> = if p_prod > 0.0 {
        m.weights
            .iter()
            .zip(&p_prod_lambda)
            .map(|(w, p)| w * p / p_prod)
            .collect()
    } else {
        vec![0.0; m.weights.len()]
    };
    let delta = pd.iter().map(|&p| p_prod / p).fold(f64::INFINITY, f64::min);
    let eta_c = db.conditional_efficiency()?.eta_c;
    let postselected_value = f.evaluate(&db.postselect_coincidence()?)?;
    let comps = postselected_components(&m.component_behaviors()?);
    let q_value = if p_prod > 0.0 {
        f.evaluate(&mixture(s, &q_mn, &comps)?)?
    } else {
        f64::NEG_INFINITY
    };
    let c = f.constant_c();
    let i = f.classical_bound();
    let delta_bound = c + (i - c) * delta;
    let delta_lower = 1.0 - (1.0 - eta_c) / eta_c * excess_settings(f) as f64;
    let sharpened_bound = sharpened_bound_lhv(f, eta_c)?;
    let margin = [
        delta_bound - postselected_value,
        delta - delta_lower,
        sharpened_bound - postselected_value,
        i - q_value,
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    Ok(LhvChainDiagnostics {
        p_prod_lambda,
        p_prod,
        q_mn,
        delta,
        eta_c,
        postselected_value,
        q_value,
        delta_bound,
        delta_lower,
        sharpened_bound,
        margin,
        holds: margin >= -CHECK_TOL,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SettingDistanceCheck {
    pub setting: Vec<usize>,
    pub distance: usize,
    /// `Σ_λ p_λ |p(d|x,λ)/p(d|x) - p(d|y,λ)/p(d|y)|`.
    pub lhs: f64,
    /// `4 D(x, y)(1 - η_c)/η_c`.
    pub rhs: f64,
}

/// Quantities from the HLNHV derivation of the sharpened bound for one
/// reference setting `y`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HlnhvChainDiagnostics {
    pub reference: Vec<usize>,
    /// `q^(GMN)_λ = p_λ p(d|y,λ)/p(d|y)`.
    pub q_gmn: Vec<f64>,
    pub eta_c: f64,
    pub per_setting: Vec<SettingDistanceCheck>,
    pub postselected_value: f64,
    pub q_value: f64,
    /// `I + 4 ((1 - η_c)/η_c) Σ_x max_a |c_{a,x}| D(x, y)`.
    pub reference_bound: f64,
    /// Bound with `C_opt`.
    pub sharpened_bound: f64,
    pub margin: f64,
    pub holds: bool,
}

pub fn hlnhv_chain_diagnostics(
    m: &HiddenVariableModel,
    f: &BellFunctional<f64>,
    y: &SettingVector,
) -> Result<HlnhvChainDiagnostics> {
    HlnhvPrecomputed::new(m, f)?.diagnostics(m, f, y)
}

/// [`hlnhv_chain_diagnostics`] for every reference setting.
pub fn hlnhv_chain_all(
    m: &HiddenVariableModel,
    f: &BellFunctional<f64>,
) -> Result<Vec<HlnhvChainDiagnostics>> {
    let pre = HlnhvPrecomputed::new(m, f)?;
    f.scenario()
        .joint_settings()
        .map(|y| pre.diagnostics(m, f, &y))
        .collect()
}

/// Setting-independent pieces shared by all reference settings.
struct HlnhvPrecomputed {
    pd: Vec<f64>,
    pdl: Vec<Vec<f64>>,
    post: Vec<Vec<Vec<f64>>>,
    eta_c: f64,
    postselected_value: f64,
}

impl HlnhvPrecomputed {
    fn new(m: &HiddenVariableModel, f: &BellFunctional<f64>) -> Result<Self> {
        if m.kind() == ModelKind::General {
            return Err(Error::Precondition("model is not an HLNHV model".into()));
        }
        if f.model_class() != ModelClass::Hlnhv {
            return Err(Error::Precondition(format!(
                "{} does not bound HLNHV models",
                f.name()
            )));
        }
        if f.scenario() != m.scenario() {
            return Err(Error::ScenarioMismatch(
                "functional and model scenarios differ".into(),
            ));
        }
        let s = m.scenario();
        let db = m.to_detection_behavior()?;
        let pd = coincidences(&db)?;
        let comps = m.component_behaviors()?;
        let pdl = comps
            .iter()
            .map(|c| {
                s.joint_settings()
                    .map(|x| c.coincidence_probability(&x))
                    .collect()
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            pd,
            pdl,
            post: postselected_components(&comps),
            eta_c: db.conditional_efficiency()?.eta_c,
            postselected_value: f.evaluate(&db.postselect_coincidence()?)?,
        })
    }

    fn diagnostics(
        &self,
        m: &HiddenVariableModel,
        f: &BellFunctional<f64>,
        y: &SettingVector,
    ) -> Result<HlnhvChainDiagnostics> {
        let s = m.scenario();
        let yi = s.setting_index(y)?;
        let (pd, pdl, eta_c) = (&self.pd, &self.pdl, self.eta_c);
        let q_gmn: Vec<f64> = m
            .weights
            .iter()
            .zip(pdl)
            .map(|(w, p)| w * p[yi] / pd[yi])
            .collect();
        let r = (1.0 - eta_c) / eta_c;
        let weights = f.setting_weights();
        let mut per_setting = Vec::new();
        let mut weighted = 0.0;
        for (xi, x) in s.joint_settings().enumerate() {
            let d = setting_distance(&x, y)?;
            let lhs: f64 = m
                .weights
                .iter()
                .zip(pdl)
                .map(|(w, p)| w * (p[xi] / pd[xi] - p[yi] / pd[yi]).abs())
                .sum();
            weighted += weights[xi] * d as f64;
            per_setting.push(SettingDistanceCheck {
                setting: x.0,
                distance: d,
                lhs,
                rhs: 4.0 * d as f64 * r,
            });
        }
        let postselected_value = self.postselected_value;
        let q_value = f.evaluate(&mixture(s, &q_gmn, &self.post)?)?;
        let i = f.classical_bound();
        let reference_bound = i + 4.0 * r * weighted;
        let sharpened_bound = sharpened_bound_hlnhv(f, eta_c, true)?;
        // The x = y term is 0 ≤ 0 and carries no information.
        let margin = per_setting
            .iter()
            .filter(|c| c.distance > 0)
            .map(|c| c.rhs - c.lhs)
            .chain([
                reference_bound - postselected_value,
                sharpened_bound - postselected_value,
                i - q_value,
            ])
            .fold(f64::INFINITY, f64::min);
        let holds = margin >= -CHECK_TOL && per_setting.iter().all(|c| c.lhs <= c.rhs + CHECK_TOL);
        Ok(HlnhvChainDiagnostics {
            reference: y.0.clone(),
            q_gmn,
            eta_c,
            per_setting,
            postselected_value,
            q_value,
            reference_bound,
            sharpened_bound,
            margin,
            holds,
        })
    }
}

/// `Π p_i - (Σ p_i - L + 1)`, nonnegative for `p_i ∈ [0, 1]`.
pub fn product_bound_slack(ps: &[f64]) -> f64 {
    let prod: f64 = ps.iter().product();
    let sum: f64 = ps.iter().sum();
    prod - (sum - ps.len() as f64 + 1.0)
}

/// Largest deviation between a factorized component's postselected behavior
/// and the product of its groups' postselected behaviors, over settings with
/// nonzero coincidence probability.
pub fn factorization_gap(m: &HiddenVariableModel) -> Result<f64> {
    let s = m.scenario();
    let alph = s.alphabet_sizes();
    let comps = m.component_behaviors()?;
    let mut worst: f64 = 0.0;
    for (c, db) in m.components.iter().zip(&comps) {
        let Component::Factorized { groups } = c else {
            continue;
        };
        let joint = postselected_components(std::slice::from_ref(db)).remove(0);
        for (xi, x) in s.joint_settings().enumerate() {
            if db.coincidence_probability(&x)? <= 0.0 {
                continue;
            }
            let group_rows: Vec<Vec<f64>> = groups
                .iter()
                .map(|g| {
                    let (gs, gz) = m.group_shape(&g.parties);
                    let gx: Vec<usize> = g.parties.iter().map(|&k| x.0[k]).collect();
                    let row = &g.table[mixed_radix_index(&gx, &gs)];
                    let galph: Vec<usize> = g.parties.iter().map(|&k| alph[k]).collect();
                    let mut out = vec![0.0; galph.iter().product()];
                    for (e, &p) in row.iter().enumerate() {
                        let ev: Vec<LocalEvent> = mixed_radix_digits(e, &gz)
                            .iter()
                            .zip(&galph)
                            .map(|(&d, &a)| decode_event(d, a))
                            .collect();
                        if ev.iter().all(|e| e.count == 1) {
                            let a: Vec<usize> =
                                ev.iter().map(|e| e.outcome.expect("detected")).collect();
                            out[mixed_radix_index(&a, &galph)] += p;
                        }
                    }
                    let tot: f64 = out.iter().sum();
                    out.iter_mut().for_each(|p| *p /= tot);
                    out
                })
                .collect();
            for (ai, &p) in joint[xi].iter().enumerate() {
                let a = mixed_radix_digits(ai, &alph);
                let prod: f64 = groups
                    .iter()
                    .zip(&group_rows)
                    .map(|(g, row)| {
                        let ga: Vec<usize> = g.parties.iter().map(|&k| a[k]).collect();
                        let galph: Vec<usize> = g.parties.iter().map(|&k| alph[k]).collect();
                        row[mixed_radix_index(&ga, &galph)]
                    })
                    .product();
                worst = worst.max((p - prod).abs());
            }
        }
    }
    Ok(worst)
}

/// Largest change of the posterior `p(λ | d, x)` over settings `x`.
pub fn posterior_deviation(m: &HiddenVariableModel) -> Result<f64> {
    let s = m.scenario();
    let comps = m.component_behaviors()?;
    let posts: Vec<Vec<f64>> = s
        .joint_settings()
        .map(|x| {
            let joint: Vec<f64> = m
                .weights
                .iter()
                .zip(&comps)
                .map(|(w, c)| Ok(w * c.coincidence_probability(&x)?))
                .collect::<Result<_>>()?;
            let tot: f64 = joint.iter().sum();
            if tot <= 0.0 {
                return Err(Error::DegeneratePostselection { setting: x.0 });
            }
            Ok(joint.into_iter().map(|p| p / tot).collect())
        })
        .collect::<Result<_>>()?;
    Ok(posts
        .iter()
        .flat_map(|p| p.iter().zip(&posts[0]).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConservationReport {
    pub total_particles: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub independent: bool,
    /// Worst no-signaling violation over the components.
    pub no_signaling_worst: f64,
}

fn conserves(events: &[LocalEvent], total: usize) -> bool {
    events.iter().map(|e| e.count).sum::<usize>() == total
}

/// Checks that the posterior of λ given a coincidence does not depend on
/// the settings for a model whose components only emit count vectors with
/// `Σ_k d_k = N_T`.
pub fn conservation_posterior_check(
    m: &HiddenVariableModel,
    total_particles: usize,
    tol: f64,
) -> Result<ConservationReport> {
    let comps = m.component_behaviors()?;
    let mut ns: f64 = 0.0;
    for c in &comps {
        for row in c.table() {
            for (ci, &p) in row.iter().enumerate() {
                if p > TABLE_TOL && !conserves(&c.events(ci), total_particles) {
                    return Err(Error::Precondition(format!(
                        "component emits {:?} which does not carry {total_particles} particles",
                        c.events(ci).iter().map(|e| e.count).collect::<Vec<_>>()
                    )));
                }
            }
        }
        ns = ns.max(c.check_no_signaling(0.0).worst_violation);
    }
    let max_deviation = posterior_deviation(m)?;
    Ok(ConservationReport {
        total_particles,
        max_deviation,
        tolerance: tol,
        independent: max_deviation <= tol,
        no_signaling_worst: ns,
    })
}

fn conserving_columns(sizes: &[usize], alph: &[usize], total: usize) -> Vec<bool> {
    (0..sizes.iter().product())
        .map(|ci| {
            let ev: Vec<LocalEvent> = mixed_radix_digits(ci, sizes)
                .iter()
                .zip(alph)
                .map(|(&e, &a)| decode_event(e, a))
                .collect();
            conserves(&ev, total)
        })
        .collect()
}

/// Conserving no-signaling model: per λ an allocation of `total_particles`
/// that ignores the settings, with local outcome tables
/// `p(a_k | x_k, d_k, λ)`.
pub fn random_conserving_model(
    scenario: &BellScenario,
    total_particles: usize,
    max_count: usize,
    support: usize,
    seed: u64,
) -> Result<HiddenVariableModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = scenario.num_parties();
    let alph = scenario.alphabet_sizes();
    let sizes: Vec<usize> = alph
        .iter()
        .map(|&a| local_event_count(a, max_count))
        .collect();
    let counts: Vec<Vec<usize>> = (0..(max_count + 1).pow(n as u32))
        .map(|i| mixed_radix_digits(i, &vec![max_count + 1; n]))
        .filter(|d| d.iter().sum::<usize>() == total_particles)
        .collect();
    if counts.is_empty() {
        return Err(Error::Precondition(
            "no count vector carries the requested particle number".into(),
        ));
    }
    let weights = dirichlet(&mut rng, support);
    let components = (0..support)
        .map(|_| {
            let alloc = dirichlet(&mut rng, counts.len());
            // out[k][x_k][d_k - 1] is an outcome distribution.
            let out: Vec<Vec<Vec<Vec<f64>>>> = (0..n)
                .map(|k| {
                    (0..scenario.settings()[k])
                        .map(|_| {
                            (0..max_count)
                                .map(|_| outcome_distribution(&mut rng, alph[k]))
                                .collect()
                        })
                        .collect()
                })
                .collect();
            let table = scenario
                .joint_settings()
                .map(|x| {
                    let mut row = vec![0.0; sizes.iter().product()];
                    for (ci, p) in row.iter_mut().enumerate() {
                        let e = mixed_radix_digits(ci, &sizes);
                        let ev: Vec<LocalEvent> = e
                            .iter()
                            .zip(&alph)
                            .map(|(&e, &a)| decode_event(e, a))
                            .collect();
                        let d: Vec<usize> = ev.iter().map(|e| e.count).collect();
                        let Some(j) = counts.iter().position(|c| *c == d) else {
                            continue;
                        };
                        *p = alloc[j]
                            * ev.iter()
                                .enumerate()
                                .map(|(k, e)| match e.outcome {
                                    None => 1.0,
                                    Some(a) => out[k][x.0[k]][e.count - 1][a],
                                })
                                .product::<f64>();
                    }
                    row
                })
                .collect();
            Component::Joint { table }
        })
        .collect();
    HiddenVariableModel::new(scenario.clone(), max_count, weights, components)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProjectionStats {
    pub iterations: usize,
    pub no_signaling_gap: f64,
    pub converged: bool,
}

/// Projects a random table supported on conserving columns onto the
/// no-signaling equalities, alternating with clipping and renormalization,
/// until the no-signaling gap falls below `tol`.
pub fn project_conserving_table(
    scenario: &BellScenario,
    total_particles: usize,
    max_count: usize,
    rng: &mut ChaCha8Rng,
    tol: f64,
    max_iterations: usize,
) -> (Vec<Vec<f64>>, ProjectionStats) {
    let n = scenario.num_parties();
    let alph = scenario.alphabet_sizes();
    let sizes: Vec<usize> = alph
        .iter()
        .map(|&a| local_event_count(a, max_count))
        .collect();
    let support = conserving_columns(&sizes, &alph, total_particles);
    let settings = scenario.settings().to_vec();
    let nx = scenario.num_joint_settings();
    let mut table: Vec<Vec<f64>> = (0..nx)
        .map(|_| {
            let mut row: Vec<f64> = support
                .iter()
                .map(|&s| {
                    if s {
                        -(1.0 - rng.gen::<f64>()).ln()
                    } else {
                        0.0
                    }
                })
                .collect();
            let t: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= t);
            row
        })
        .collect();
    let mut gap = no_signaling_gap(&settings, &sizes, &table);
    let mut it = 0;
    while gap > tol && it < max_iterations {
        it += 1;
        for k in 0..n {
            let mut rest_x = settings.clone();
            rest_x[k] = 1;
            let mut rest_e = sizes.clone();
            rest_e[k] = 1;
            for rxi in 0..rest_x.iter().product::<usize>() {
                for rei in 0..rest_e.iter().product::<usize>() {
                    let mut x = mixed_radix_digits(rxi, &rest_x);
                    let mut e = mixed_radix_digits(rei, &rest_e);
                    let cols: Vec<usize> = (0..sizes[k])
                        .filter_map(|ek| {
                            e[k] = ek;
                            let c = mixed_radix_index(&e, &sizes);
                            support[c].then_some(c)
                        })
                        .collect();
                    if cols.is_empty() {
                        continue;
                    }
                    let rows: Vec<usize> = (0..settings[k])
                        .map(|xk| {
                            x[k] = xk;
                            mixed_radix_index(&x, &settings)
                        })
                        .collect();
                    let marg: Vec<f64> = rows
                        .iter()
                        .map(|&r| cols.iter().map(|&c| table[r][c]).sum())
                        .collect();
                    let avg = marg.iter().sum::<f64>() / marg.len() as f64;
                    for (&r, m) in rows.iter().zip(&marg) {
                        let d = (avg - m) / cols.len() as f64;
                        for &c in &cols {
                            table[r][c] += d;
                        }
                    }
                }
            }
        }
        for row in table.iter_mut() {
            row.iter_mut().for_each(|p| *p = p.max(0.0));
            let t: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= t);
        }
        gap = no_signaling_gap(&settings, &sizes, &table);
    }
    (
        table,
        ProjectionStats {
            iterations: it,
            no_signaling_gap: gap,
            converged: gap <= tol,
        },
    )
}

/// Conserving model whose components come from [`project_conserving_table`].
pub fn projected_conserving_model(
    scenario: &BellScenario,
    total_particles: usize,
    max_count: usize,
    support: usize,
    seed: u64,
) -> Result<(HiddenVariableModel, Vec<ProjectionStats>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = dirichlet(&mut rng, support);
    let mut stats = Vec::new();
    let components = (0..support)
        .map(|_| {
            let (table, st) = project_conserving_table(
                scenario,
                total_particles,
                max_count,
                &mut rng,
                1e-10,
                20_000,
            );
            stats.push(st);
            Component::Joint { table }
        })
        .collect();
    Ok((
        HiddenVariableModel::new(scenario.clone(), max_count, weights, components)?,
        stats,
    ))
}

/// Result of the detection-loophole search.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LoopholeResult {
    pub found: bool,
    pub target: f64,
    pub postselected_value: f64,
    pub eta_c: f64,
    pub sharpened_bound: f64,
    pub satisfies_sharpened_bound: bool,
    pub iterations: usize,
    pub seed: u64,
    pub model: HiddenVariableModel,
}

fn loophole_objective(m: &HiddenVariableModel, f: &BellFunctional<f64>) -> f64 {
    m.to_detection_behavior()
        .and_then(|db| db.postselect_coincidence())
        .and_then(|b| f.evaluate(&b))
        .unwrap_or(f64::NEG_INFINITY)
}

/// Randomized hill climb over LHV models with setting-dependent detection,
/// maximizing the postselected value of `f`. A mutation mixes one response
/// table (or the weights) with a fresh flat Dirichlet sample; improvements
/// are kept. The budget is split into restarts of equal length.
pub fn loophole_search(
    f: &BellFunctional<f64>,
    target: f64,
    seed: u64,
    iterations: usize,
    support: usize,
) -> Result<LoopholeResult> {
    let s = f.scenario().clone();
    let n = s.num_parties();
    let restarts = (iterations / 5_000).max(1);
    let per = iterations / restarts;
    let runs: Vec<(f64, HiddenVariableModel)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, r as u64));
            let mut model =
                random_model(&s, RandomKind::Lhv, support, rng.gen()).expect("valid scenario");
            let mut best = loophole_objective(&model, f);
            for _ in 0..per {
                let mut cand = model.clone();
                let eps = rng.gen_range(0.0..0.5);
                let l = rng.gen_range(0..support);
                if rng.gen_bool(0.1) {
                    let d = dirichlet(&mut rng, support);
                    cand.weights
                        .iter_mut()
                        .zip(d)
                        .for_each(|(w, d)| *w = (1.0 - eps) * *w + eps * d);
                } else {
                    let k = rng.gen_range(0..n);
                    let xk = rng.gen_range(0..s.settings()[k]);
                    let Component::Factorized { groups } = &mut cand.components[l] else {
                        unreachable!("LHV models are factorized")
                    };
                    let row = &mut groups[k].table[xk];
                    let d = if rng.gen_bool(0.5) {
                        let mut v = vec![0.0; row.len()];
                        v[rng.gen_range(0..row.len())] = 1.0;
                        v
                    } else {
                        dirichlet(&mut rng, row.len())
                    };
                    row.iter_mut()
                        .zip(d)
                        .for_each(|(p, d)| *p = (1.0 - eps) * *p + eps * d);
                }
                let v = loophole_objective(&cand, f);
                if v > best {
                    best = v;
                    model = cand;
                }
            }
            (best, model)
        })
        .collect();
    let (value, model) = runs
        .into_iter()
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .expect("at least one restart");
    let db = model.to_detection_behavior()?;
    let eta_c = db.conditional_efficiency()?.eta_c;
    let sharpened_bound = sharpened_bound_lhv(f, eta_c)?;
    Ok(LoopholeResult {
        found: value > target,
        target,
        postselected_value: value,
        eta_c,
        sharpened_bound,
        satisfies_sharpened_bound: value <= sharpened_bound + CHECK_TOL,
        iterations: per * restarts,
        seed,
        model,
    })
}

/// Aggregate of a randomized property check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteReport {
    pub check: String,
    pub trials: usize,
    pub seed: u64,
    pub passed: bool,
    pub failures: usize,
    pub worst_margin: f64,
    pub worst_trial: usize,
    /// Trials whose bound was below the algebraic maximum `C`.
    pub informative: usize,
}

fn summarize(check: &str, seed: u64, results: Vec<(f64, bool)>) -> SuiteReport {
    let trials = results.len();
    let failures = results.iter().filter(|r| r.0 < -CHECK_TOL).count();
    let (worst_trial, worst_margin) = results
        .iter()
        .enumerate()
        .map(|(i, r)| (i, r.0))
        .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
    SuiteReport {
        check: check.to_string(),
        trials,
        seed,
        passed: failures == 0,
        failures,
        worst_margin,
        worst_trial,
        informative: results.iter().filter(|r| r.1).count(),
    }
}

/// Support sizes cycle through 1..=8 so that near-deterministic models are
/// covered as well as broad mixtures.
fn suite_support(trial: usize) -> usize {
    1 + trial % 8
}

/// Random LHV models with loss checked against the LHV chain of bounds,
/// alternating between CHSH and three-party Mermin.
pub fn verify_lhv_sharpening(trials: usize, seed: u64) -> Result<SuiteReport> {
    let fs = [catalog::<f64>("chsh", 2)?, catalog::<f64>("mermin", 3)?];
    let results = (0..trials)
        .into_par_iter()
        .map(|t| {
            let f = &fs[t % 2];
            let m = random_model(
                f.scenario(),
                RandomKind::Lhv,
                suite_support(t),
                derive_seed(seed, t as u64),
            )?;
            let d = lhv_chain_diagnostics(&m, f)?;
            Ok((d.margin, d.sharpened_bound < f.constant_c()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize("lhv-sharpening", seed, results))
}

/// Random HLNHV models checked against the HLNHV chain of bounds for the
/// Svetlichny functional and every reference setting.
pub fn verify_hlnhv_sharpening(trials: usize, seed: u64) -> Result<SuiteReport> {
    let f = catalog::<f64>("svetlichny", 3)?;
    let results = (0..trials)
        .into_par_iter()
        .map(|t| {
            let m = random_model(
                f.scenario(),
                RandomKind::Hlnhv,
                suite_support(t),
                derive_seed(seed, t as u64),
            )?;
            let mut margin = f64::INFINITY;
            let mut informative = false;
            for d in hlnhv_chain_all(&m, &f)? {
                margin = margin.min(d.margin);
                informative |= d.sharpened_bound < f.constant_c();
            }
            Ok((margin, informative))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize("hlnhv-sharpening", seed, results))
}

/// Random fair-sampling models: the postselected value never exceeds the
/// exact LHV bound.
pub fn verify_fair_sampling(trials: usize, seed: u64) -> Result<SuiteReport> {
    let fs = [
        catalog::<f64>("chsh", 2)?,
        catalog::<f64>("mermin", 3)?,
        catalog::<f64>("svetlichny", 3)?,
    ];
    let bounds: Vec<f64> = fs
        .iter()
        .map(|f| lhv_bound(f).map(|b| b.value))
        .collect::<Result<_>>()?;
    let results = (0..trials)
        .into_par_iter()
        .map(|t| {
            let f = &fs[t % 3];
            let m = random_model(
                f.scenario(),
                RandomKind::FairSampling,
                suite_support(t),
                derive_seed(seed, t as u64),
            )?;
            let v = f.evaluate(&m.to_detection_behavior()?.postselect_coincidence()?)?;
            Ok((bounds[t % 3] - v, true))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize("fair-sampling", seed, results))
}

/// Conserving no-signaling models from both generators: the posterior of λ
/// given a coincidence is setting independent.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConservationSuite {
    pub trials: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub passed: bool,
    pub max_deviation_structured: f64,
    pub max_deviation_projected: f64,
    /// Projected components whose no-signaling gap reached `1e-10`.
    pub projected_converged: usize,
    pub projected_components: usize,
}

pub fn verify_conservation(trials: usize, seed: u64, tol: f64) -> Result<ConservationSuite> {
    let scenarios = [
        BellScenario::dichotomic(2, 2)?,
        BellScenario::dichotomic(3, 2)?,
    ];
    let out = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = &scenarios[t % 2];
            let n = s.num_parties();
            let a = random_conserving_model(s, n, 2, 4, derive_seed(seed, 2 * t as u64))?;
            let da = conservation_posterior_check(&a, n, tol)?.max_deviation;
            let (b, stats) =
                projected_conserving_model(s, n, 2, 3, derive_seed(seed, 2 * t as u64 + 1))?;
            let db = conservation_posterior_check(&b, n, tol)?.max_deviation;
            let conv = stats.iter().filter(|s| s.converged).count();
            Ok((da, db, conv, stats.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let max_a = out.iter().map(|o| o.0).fold(0.0, f64::max);
    let max_b = out.iter().map(|o| o.1).fold(0.0, f64::max);
    Ok(ConservationSuite {
        trials,
        seed,
        tolerance: tol,
        passed: max_a <= tol && max_b <= tol,
        max_deviation_structured: max_a,
        max_deviation_projected: max_b,
        projected_converged: out.iter().map(|o| o.2).sum(),
        projected_components: out.iter().map(|o| o.3).sum(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chsh() -> BellFunctional<f64> {
        catalog("chsh", 2).unwrap()
    }

    #[test]
    fn deterministic_single_component() {
        let s = BellScenario::dichotomic(2, 2).unwrap();
        let groups = vec![
            GroupTable {
                parties: vec![0],
                table: vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            },
            GroupTable {
                parties: vec![1],
                table: vec![vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]],
            },
        ];
        let m = HiddenVariableModel::new(
            s.clone(),
            1,
            vec![1.0],
            vec![Component::Factorized { groups }],
        )
        .unwrap();
        assert_eq!(m.kind(), ModelKind::Lhv);
        let b = m
            .to_detection_behavior()
            .unwrap()
            .postselect_coincidence()
            .unwrap();
        let want = Behavior::<f64>::deterministic(s, &[vec![0, 1], vec![1, 1]]).unwrap();
        assert_eq!(b.max_abs_diff(&want).unwrap(), 0.0);
    }

    #[test]
    fn mixture_matches_direct_summation() {
        let s = BellScenario::dichotomic(2, 2).unwrap();
        let m = random_model(&s, RandomKind::Lhv, 3, 11).unwrap();
        let db = m.to_detection_behavior().unwrap();
        for x in s.joint_settings() {
            let xi = s.setting_index(&x).unwrap();
            for ci in 0..9 {
                let (e0, e1) = (ci % 3, ci / 3);
                let mut want = 0.0;
                for (l, w) in m.weights().iter().enumerate() {
                    let Component::Factorized { groups } = &m.components()[l] else {
                        panic!()
                    };
                    want += w * groups[0].table[x.0[0]][e0] * groups[1].table[x.0[1]][e1];
                }
                assert!((db.table()[xi][ci] - want).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn random_models_are_reproducible() {
        let s = BellScenario::dichotomic(3, 2).unwrap();
        for kind in [RandomKind::Lhv, RandomKind::Hlnhv, RandomKind::FairSampling] {
            let a = random_model(&s, kind, 5, 99).unwrap();
            let b = random_model(&s, kind, 5, 99).unwrap();
            assert_eq!(a, b);
        }
        assert_eq!(
            random_model(&s, RandomKind::Hlnhv, 5, 1).unwrap().kind(),
            ModelKind::Hlnhv
        );
        assert!(random_model(
            &BellScenario::dichotomic(2, 2).unwrap(),
            RandomKind::Hlnhv,
            2,
            1
        )
        .is_err());
    }

    #[test]
    fn hlnhv_pairs_do_not_signal() {
        let s = BellScenario::dichotomic(3, 2).unwrap();
        for seed in 0..50 {
            let m = random_model(&s, RandomKind::Hlnhv, 4, seed).unwrap();
            for c in m.components() {
                let Component::Factorized { groups } = c else {
                    panic!()
                };
                for g in groups {
                    let (gs, gz) = m.group_shape(&g.parties);
                    assert!(no_signaling_gap(&gs, &gz, &g.table) < 1e-12);
                }
            }
            assert!(
                m.to_detection_behavior()
                    .unwrap()
                    .check_no_signaling(1e-12)
                    .no_signaling
            );
        }
    }

    #[test]
    fn random_lhv_behaviors_respect_enumerated_bound() {
        let f = chsh();
        let bound = lhv_bound(&f).unwrap().value;
        for seed in 0..10_000u64 {
            let m = random_model(f.scenario(), RandomKind::Lhv, 4, seed).unwrap();
            let db = m.to_detection_behavior().unwrap();
            // Before postselection, with the null event scored as outcome +1.
            let s = f.scenario();
            let b = Behavior::from_fn(s.clone(), |x, a| {
                let xi = s.setting_index(x).unwrap();
                (0..9)
                    .filter(|&ci| {
                        let ev = db.events(ci);
                        ev.iter()
                            .zip(&a.0)
                            .all(|(e, &ak)| e.outcome.unwrap_or(1) == ak)
                    })
                    .map(|ci| db.table()[xi][ci])
                    .sum()
            });
            assert!(f.evaluate(&b).unwrap() <= bound + 1e-9);
        }
    }

    #[test]
    fn ideal_model_has_unit_delta() {
        let s = BellScenario::dichotomic(2, 2).unwrap();
        let mut m = random_model(&s, RandomKind::Lhv, 3, 5).unwrap();
        for c in m.components.iter_mut() {
            let Component::Factorized { groups } = c else {
                panic!()
            };
            for g in groups {
                for row in g.table.iter_mut() {
                    let t = row[1] + row[2];
                    *row = vec![0.0, row[1] / t, row[2] / t];
                }
            }
        }
        let d = lhv_chain_diagnostics(&m, &chsh()).unwrap();
        assert!((d.delta - 1.0).abs() < 1e-15);
        assert!((d.delta_bound - 2.0).abs() < 1e-15);
        assert!((d.sharpened_bound - 2.0).abs() < 1e-15);
        assert!(d.holds);
    }

    #[test]
    fn setting_dependent_loss_lowers_delta() {
        let s = BellScenario::dichotomic(2, 2).unwrap();
        let groups = vec![
            GroupTable {
                parties: vec![0],
                table: vec![vec![0.0, 1.0, 0.0], vec![0.5, 0.5, 0.0]],
            },
            GroupTable {
                parties: vec![1],
                table: vec![vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]],
            },
        ];
        let m = HiddenVariableModel::new(s, 1, vec![1.0], vec![Component::Factorized { groups }])
            .unwrap();
        let d = lhv_chain_diagnostics(&m, &chsh()).unwrap();
        assert!(d.delta < 1.0);
        assert!(d.holds, "{d:?}");
    }

    #[test]
    fn single_component_hlnhv_has_zero_distance_terms() {
        let f: BellFunctional<f64> = catalog("svetlichny", 3).unwrap();
        let m = random_model(f.scenario(), RandomKind::Hlnhv, 1, 3).unwrap();
        for y in f.scenario().joint_settings() {
            let d = hlnhv_chain_diagnostics(&m, &f, &y).unwrap();
            assert!(d.per_setting.iter().all(|c| c.lhs < 1e-15));
            assert!(d.holds);
        }
    }

    #[test]
    fn product_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100_000 {
            let l = rng.gen_range(1..8);
            let ps: Vec<f64> = (0..l).map(|_| rng.gen()).collect();
            assert!(product_bound_slack(&ps) >= -1e-15);
        }
        assert_eq!(product_bound_slack(&[1.0, 1.0]), 0.0);
    }

    #[test]
    fn postselected_components_factorize() {
        let s = BellScenario::dichotomic(3, 2).unwrap();
        for seed in 0..20 {
            let m = random_model(&s, RandomKind::Hlnhv, 4, seed).unwrap();
            assert!(factorization_gap(&m).unwrap() < 1e-12);
        }
    }

    #[test]
    fn conserving_models_have_setting_free_posteriors() {
        for n in [2usize, 3] {
            let s = BellScenario::dichotomic(n, 2).unwrap();
            for seed in 0..10 {
                let m = random_conserving_model(&s, n, 2, 4, seed).unwrap();
                let r = conservation_posterior_check(&m, n, 1e-8).unwrap();
                assert!(r.independent, "{r:?}");
                assert!(r.no_signaling_worst < 1e-12);
            }
        }
    }

    #[test]
    fn projected_models_converge() {
        let s = BellScenario::dichotomic(2, 2).unwrap();
        let (m, stats) = projected_conserving_model(&s, 2, 2, 3, 4).unwrap();
        assert!(stats.iter().all(|s| s.converged), "{stats:?}");
        let r = conservation_posterior_check(&m, 2, 1e-8).unwrap();
        assert!(r.independent, "{r:?}");
    }

    #[test]
    fn signaling_allocation_breaks_independence() {
        // Conserving but signaling: party 2 receives both particles when party 1 picks setting 1.
        let s = BellScenario::dichotomic(2, 2).unwrap();
        let sizes = [5usize, 5];
        let col = |e0: usize, e1: usize| mixed_radix_index(&[e0, e1], &sizes);
        let mut sig = vec![vec![0.0; 25]; 4];
        let mut flat = vec![vec![0.0; 25]; 4];
        for xi in 0..4 {
            let x1 = xi % 2;
            if x1 == 0 {
                sig[xi][col(1, 1)] = 1.0;
            } else {
                sig[xi][col(0, 3)] = 1.0;
            }
            flat[xi][col(1, 1)] = 1.0;
        }
        let m = HiddenVariableModel::new(
            s,
            2,
            vec![0.5, 0.5],
            vec![
                Component::Joint { table: sig },
                Component::Joint { table: flat },
            ],
        )
        .unwrap();
        let r = conservation_posterior_check(&m, 2, 1e-8).unwrap();
        assert!(!r.independent);
        assert!(r.no_signaling_worst > 0.5);
    }

    #[test]
    fn non_conserving_model_is_rejected() {
        let s = BellScenario::dichotomic(2, 2).unwrap();
        let m = random_model(&s, RandomKind::Lhv, 2, 0).unwrap();
        assert!(matches!(
            conservation_posterior_check(&m, 2, 1e-8),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn loophole_target_c_is_never_reached() {
        let f = chsh();
        let r = loophole_search(&f, 4.0, 1, 2_000, 4).unwrap();
        assert!(!r.found);
        assert!(r.satisfies_sharpened_bound);
    }
}
