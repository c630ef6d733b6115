//! State-vector evaluation of dichotomic qubit measurements and a
//! derivative-free search over measurement angles.
//!
//! Qubit `k` belongs to party `k` and is bit `k` of the basis index, matching
//! the party-1-fastest outcome order of [`Behavior`]. Outcome index 0 is the
//! `-1` eigenvalue, index 1 the `+1` eigenvalue.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_8, PI};

use crate::error::{Error, Result};
use crate::inequalities::BellFunctional;
use crate::scenario::{Behavior, BellScenario};

pub const MAX_QUBITS: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PureState {
    qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl PureState {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        let len = amplitudes.len();
        if len < 2 || !len.is_power_of_two() || len > 1 << MAX_QUBITS {
            return Err(Error::DimensionMismatch {
                what: "state vector length (power of two, at most 2^12)",
                expected: len.next_power_of_two().clamp(2, 1 << MAX_QUBITS),
                found: len,
            });
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::Precondition(format!(
                "state has squared norm {norm}"
            )));
        }
        Ok(Self {
            qubits: len.trailing_zeros() as usize,
            amplitudes,
        })
    }

    pub fn qubits(&self) -> usize {
        self.qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }
}

/// `(|0…0⟩ + |1…1⟩)/√2`.
pub fn ghz_state(parties: usize) -> Result<PureState> {
    if !(1..=MAX_QUBITS).contains(&parties) {
        return Err(Error::OutOfRange {
            name: "parties",
            value: parties as f64,
            range: "[1, 12]",
        });
    }
    let mut amps = vec![Complex64::new(0.0, 0.0); 1 << parties];
    amps[0] = Complex64::new(FRAC_1_SQRT_2, 0.0);
    amps[(1 << parties) - 1] = Complex64::new(FRAC_1_SQRT_2, 0.0);
    PureState::new(amps)
}

/// Observable `n·σ` with `n = (sin θ cos φ, sin θ sin φ, cos θ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bloch {
    pub theta: f64,
    pub phi: f64,
}

impl Bloch {
    pub fn new(theta: f64, phi: f64) -> Self {
        Self { theta, phi }
    }

    /// Measurement in the equatorial plane, `cos φ X + sin φ Y`.
    pub fn equatorial(phi: f64) -> Self {
        Self {
            theta: FRAC_PI_2,
            phi,
        }
    }

    /// Rows are the conjugated eigenvectors for outcome `-1` and `+1`.
    fn bra_matrix(&self) -> [[Complex64; 2]; 2] {
        let (s, c) = (self.theta / 2.0).sin_cos();
        let e = Complex64::from_polar(1.0, self.phi);
        let plus = [Complex64::new(c, 0.0), e * s];
        let minus = [Complex64::new(s, 0.0), -e * c];
        [
            [minus[0].conj(), minus[1].conj()],
            [plus[0].conj(), plus[1].conj()],
        ]
    }
}

/// `angles[k][x_k]` is party `k`'s observable for setting `x_k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MeasurementSettings {
    pub angles: Vec<Vec<Bloch>>,
}

impl MeasurementSettings {
    pub fn new(angles: Vec<Vec<Bloch>>) -> Result<Self> {
        if angles.is_empty() || angles.iter().any(Vec::is_empty) {
            return Err(Error::InvalidScenario(
                "every party needs at least one setting".into(),
            ));
        }
        if angles
            .iter()
            .flatten()
            .any(|b| !b.theta.is_finite() || !b.phi.is_finite())
        {
            return Err(Error::Precondition("non-finite measurement angle".into()));
        }
        Ok(Self { angles })
    }

    /// Equatorial measurements with the given azimuths.
    pub fn equatorial(phis: &[Vec<f64>]) -> Result<Self> {
        Self::new(
            phis.iter()
                .map(|p| p.iter().map(|&phi| Bloch::equatorial(phi)).collect())
                .collect(),
        )
    }

    /// Every party measures at azimuths `α` and `α + π/2`.
    pub fn equatorial_pair(parties: usize, alpha: f64) -> Result<Self> {
        Self::equatorial(&vec![vec![alpha, alpha + FRAC_PI_2]; parties])
    }

    pub fn scenario(&self) -> Result<BellScenario> {
        BellScenario::dichotomic_with(self.angles.iter().map(Vec::len).collect())
    }

    fn flatten(&self) -> Vec<f64> {
        self.angles
            .iter()
            .flatten()
            .flat_map(|b| [b.theta, b.phi])
            .collect()
    }

    fn from_flat(shape: &[usize], v: &[f64]) -> Self {
        let mut it = v.chunks(2);
        let angles = shape
            .iter()
            .map(|&m| {
                (0..m)
                    .map(|_| {
                        let c = it.next().expect("shape matches");
                        Bloch::new(c[0], c[1])
                    })
                    .collect()
            })
            .collect();
        Self { angles }
    }
}

/// Settings known to reach the quantum value of CHSH on GHZ(2).
pub fn chsh_optimal_settings() -> MeasurementSettings {
    MeasurementSettings::equatorial(&[vec![0.0, FRAC_PI_2], vec![-PI / 4.0, PI / 4.0]])
        .expect("valid")
}

/// Settings known to reach `2^{N-1}` for the N-party Mermin functional on GHZ(N).
pub fn mermin_optimal_settings(parties: usize) -> Result<MeasurementSettings> {
    MeasurementSettings::equatorial_pair(parties, -PI / (2.0 * parties as f64))
}

/// Settings known to reach `4√2` for the Svetlichny functional on GHZ(3).
pub fn svetlichny_optimal_settings() -> MeasurementSettings {
    MeasurementSettings::equatorial_pair(3, -PI / 4.0).expect("valid")
}

fn apply_single(amps: &mut [Complex64], qubit: usize, u: &[[Complex64; 2]; 2]) {
    let bit = 1usize << qubit;
    for i in 0..amps.len() {
        if i & bit == 0 {
            let (a0, a1) = (amps[i], amps[i | bit]);
            amps[i] = u[0][0] * a0 + u[0][1] * a1;
            amps[i | bit] = u[1][0] * a0 + u[1][1] * a1;
        }
    }
}

/// Born-rule behavior `p(a|x) = |⟨a_x|ψ⟩|²`.
pub fn quantum_behavior(
    state: &PureState,
    settings: &MeasurementSettings,
) -> Result<Behavior<f64>> {
    let n = settings.angles.len();
    if n != state.qubits {
        return Err(Error::DimensionMismatch {
            what: "parties vs qubits",
            expected: state.qubits,
            found: n,
        });
    }
    let scenario = settings.scenario()?;
    let bras: Vec<Vec<[[Complex64; 2]; 2]>> = settings
        .angles
        .iter()
        .map(|row| row.iter().map(Bloch::bra_matrix).collect())
        .collect();
    let table = scenario
        .joint_settings()
        .map(|x| {
            let mut amps = state.amplitudes.clone();
            for (k, &xk) in x.0.iter().enumerate() {
                apply_single(&mut amps, k, &bras[k][xk]);
            }
            amps.iter().map(|a| a.norm_sqr()).collect()
        })
        .collect();
    Behavior::new(scenario, table)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimizerConfig {
    pub restarts: usize,
    pub seed: u64,
    pub initial_step: f64,
    pub halvings: u32,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            restarts: 32,
            seed: 0,
            initial_step: FRAC_PI_8,
            halvings: 12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Optimized {
    pub value: f64,
    pub settings: MeasurementSettings,
    pub best_restart: usize,
    pub evaluations: u64,
    pub restarts: usize,
    pub seed: u64,
}

/// Coordinate search over the angles, halving the step whenever a full sweep
/// fails to improve.
fn coordinate_search(
    objective: &dyn Fn(&[f64]) -> f64,
    mut x: Vec<f64>,
    initial_step: f64,
    halvings: u32,
) -> (f64, Vec<f64>, u64) {
    let mut best = objective(&x);
    let mut evals = 1;
    let mut step = initial_step;
    let mut halved = 0;
    while halved <= halvings {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let old = x[i];
                x[i] = old + dir * step;
                let v = objective(&x);
                evals += 1;
                if v > best {
                    best = v;
                    improved = true;
                    break;
                }
                x[i] = old;
            }
        }
        if !improved {
            step /= 2.0;
            halved += 1;
        }
    }
    (best, x, evals)
}

/// Maximizes `f` over measurement angles from seeded random starts. Restart
/// `r` draws its start from ChaCha stream `r` of the seed; ties go to the
/// lowest restart index.
pub fn optimize_settings(
    f: &BellFunctional<f64>,
    state: &PureState,
    cfg: &OptimizerConfig,
) -> Result<Optimized> {
    optimize_with_starts(f, state, cfg, None)
}

/// As [`optimize_settings`], with restart 0 started from `initial`.
pub fn optimize_settings_from(
    f: &BellFunctional<f64>,
    state: &PureState,
    cfg: &OptimizerConfig,
    initial: &MeasurementSettings,
) -> Result<Optimized> {
    optimize_with_starts(f, state, cfg, Some(initial))
}

fn optimize_with_starts(
    f: &BellFunctional<f64>,
    state: &PureState,
    cfg: &OptimizerConfig,
    initial: Option<&MeasurementSettings>,
) -> Result<Optimized> {
    let s = f.scenario();
    if !s.is_dichotomic() {
        return Err(Error::Unsupported(
            "quantum search needs dichotomic outcomes".into(),
        ));
    }
    if s.num_parties() != state.qubits {
        return Err(Error::DimensionMismatch {
            what: "parties vs qubits",
            expected: state.qubits,
            found: s.num_parties(),
        });
    }
    if cfg.restarts == 0 {
        return Err(Error::Precondition(
            "at least one restart is required".into(),
        ));
    }
    let shape = s.settings().to_vec();
    if let Some(init) = initial {
        if init.angles.iter().map(Vec::len).collect::<Vec<_>>() != shape {
            return Err(Error::ScenarioMismatch("initial settings shape".into()));
        }
    }
    let dims = 2 * shape.iter().sum::<usize>();
    let objective = |v: &[f64]| {
        let m = MeasurementSettings::from_flat(&shape, v);
        quantum_behavior(state, &m)
            .and_then(|b| f.evaluate(&b))
            .unwrap_or(f64::NEG_INFINITY)
    };
    let runs: Vec<(f64, Vec<f64>, u64, usize)> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| {
            let start = match (r, initial) {
                (0, Some(init)) => init.flatten(),
                _ => {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(r as u64);
                    (0..dims)
                        .map(|i| {
                            if i % 2 == 0 {
                                rng.gen_range(0.0..PI)
                            } else {
                                rng.gen_range(0.0..2.0 * PI)
                            }
                        })
                        .collect()
                }
            };
            let (v, x, e) = coordinate_search(&objective, start, cfg.initial_step, cfg.halvings);
            (v, x, e, r)
        })
        .collect();
    let evaluations = runs.iter().map(|r| r.2).sum();
    let (value, x, _, best_restart) = runs
        .into_iter()
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .expect("at least one restart");
    Ok(Optimized {
        value,
        settings: MeasurementSettings::from_flat(&shape, &x),
        best_restart,
        evaluations,
        restarts: cfg.restarts,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inequalities::catalog;
    use crate::scenario::{OutcomeVector, SettingVector};

    #[test]
    fn ghz_amplitudes() {
        let g = ghz_state(2).unwrap();
        let a = g.amplitudes();
        assert_eq!(a[0].re, FRAC_1_SQRT_2);
        assert_eq!(a[3].re, FRAC_1_SQRT_2);
        assert_eq!(a[1].norm(), 0.0);
        for n in 1..=12 {
            let g = ghz_state(n).unwrap();
            let norm: f64 = g.amplitudes().iter().map(|a| a.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-15);
        }
        assert!(ghz_state(0).is_err());
        assert!(ghz_state(13).is_err());
    }

    #[test]
    fn z_measurements_on_ghz() {
        let g = ghz_state(3).unwrap();
        let m = MeasurementSettings::new(vec![vec![Bloch::new(0.0, 0.3)]; 3]).unwrap();
        let b = quantum_behavior(&g, &m).unwrap();
        let x = SettingVector(vec![0, 0, 0]);
        for ai in 0..8 {
            let p = b
                .prob(&x, &OutcomeVector(b.scenario().outcome_vector(ai).0))
                .unwrap();
            let want = if ai == 0 || ai == 7 { 0.5 } else { 0.0 };
            assert!((p - want).abs() < 1e-15, "{ai}: {p}");
        }
    }

    #[test]
    fn known_settings_reach_quantum_values() {
        let s2 = std::f64::consts::SQRT_2;
        let chsh = catalog::<f64>("chsh", 2).unwrap();
        let b = quantum_behavior(&ghz_state(2).unwrap(), &chsh_optimal_settings()).unwrap();
        assert!((chsh.evaluate(&b).unwrap() - 2.0 * s2).abs() < 1e-12);
        let m = catalog::<f64>("mermin", 3).unwrap();
        let b =
            quantum_behavior(&ghz_state(3).unwrap(), &mermin_optimal_settings(3).unwrap()).unwrap();
        assert!((m.evaluate(&b).unwrap() - 4.0).abs() < 1e-12);
        let sv = catalog::<f64>("svetlichny", 3).unwrap();
        let b = quantum_behavior(&ghz_state(3).unwrap(), &svetlichny_optimal_settings()).unwrap();
        assert!((sv.evaluate(&b).unwrap() - 4.0 * s2).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let m = MeasurementSettings::equatorial(&[vec![0.0], vec![0.0]]).unwrap();
        assert!(quantum_behavior(&ghz_state(3).unwrap(), &m).is_err());
        let chsh = catalog::<f64>("chsh", 2).unwrap();
        assert!(
            optimize_settings(&chsh, &ghz_state(3).unwrap(), &OptimizerConfig::default()).is_err()
        );
    }
}
