//! Ring of `N` single-particle sources. Source `S_j` sits between parties
//! `j-1` and `j` (cyclically) and sends its particle to either neighbor with
//! probability 1/2, so every party receives zero, one or two particles.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{Allocation, DetectorModel};
use crate::error::{Error, Result};
use crate::inequalities::{catalog, ModelClass};
use crate::scalar::Real;
use crate::sharpening::{bisect_decreasing, threshold_eta_c};

/// Largest ring for which the allocation distribution is enumerated.
pub const MAX_RING: usize = 20;

fn check_parties(parties: usize) -> Result<()> {
    if (2..=MAX_RING).contains(&parties) {
        Ok(())
    } else {
        Err(Error::InvalidPartyCount {
            name: "yurke-stoler".into(),
            parties,
        })
    }
}

/// Counts received by each party when source `j` goes right iff bit `j` of
/// `config` is set. Party indices are 0-based; source `j` feeds parties
/// `j-1 (mod N)` (left) and `j` (right).
pub fn ring_counts(parties: usize, config: u64) -> Vec<usize> {
    let mut d = vec![0; parties];
    for j in 0..parties {
        if config >> j & 1 == 1 {
            d[j] += 1;
        } else {
            d[(j + parties - 1) % parties] += 1;
        }
    }
    d
}

/// Exact distribution of count vectors over the `2^N` equally likely source
/// configurations.
pub fn allocation_distribution<T: Real>(parties: usize) -> Result<Allocation<T>> {
    check_parties(parties)?;
    let mut tally: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for config in 0..1u64 << parties {
        *tally.entry(ring_counts(parties, config)).or_default() += 1;
    }
    let total = T::from_count(1 << parties);
    Allocation::new(
        tally
            .into_iter()
            .map(|(d, c)| (d, T::from_count(c) / total))
            .collect(),
    )
}

/// Probability that every party receives exactly one particle, `2/2^N`.
pub fn p_coin<T: Real>(parties: usize) -> Result<T> {
    check_parties(parties)?;
    Ok(T::lit(2.0) / T::lit(2.0).powi(parties as i32))
}

/// Probability that party `double` receives two particles, party `empty`
/// none, and every other party one. Every such pattern with
/// `double != empty` is produced by exactly one configuration.
pub fn p_pattern<T: Real>(parties: usize, double: usize, empty: usize) -> Result<T> {
    check_parties(parties)?;
    if double >= parties || empty >= parties {
        return Err(Error::OutOfRange {
            name: "party",
            value: double.max(empty) as f64,
            range: "[0, N)",
        });
    }
    if double == empty {
        return Ok(T::zero());
    }
    Ok(T::one() / T::lit(2.0).powi(parties as i32))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct YsConfig<T: Real = f64> {
    pub parties: usize,
    pub detectors: Vec<DetectorModel<T>>,
}

impl<T: Real> YsConfig<T> {
    pub fn new(parties: usize, detectors: Vec<DetectorModel<T>>) -> Result<Self> {
        check_parties(parties)?;
        if detectors.len() != parties {
            return Err(Error::DimensionMismatch {
                what: "detectors",
                expected: parties,
                found: detectors.len(),
            });
        }
        for d in &detectors {
            d.validate()?;
        }
        Ok(Self { parties, detectors })
    }

    pub fn homogeneous(parties: usize, detector: DetectorModel<T>) -> Result<Self> {
        Self::new(parties, vec![detector; parties])
    }

    pub fn is_homogeneous(&self) -> bool {
        self.detectors.windows(2).all(|w| w[0] == w[1])
    }
}

/// Closed-form conditional efficiency of the ring,
/// `2 η_det η_tra / (2 + (N-1)[η_tra η_{1|2}/η_det + 2(1 - η_tra)])`, where
/// `η_{1|2}` is the probability of registering exactly one count when two
/// particles survive transmission.
pub fn eta_c_analytic<T: Real>(cfg: &YsConfig<T>) -> Result<T> {
    if !cfg.is_homogeneous() {
        return Err(Error::Unsupported(
            "the closed form requires identical detectors".into(),
        ));
    }
    let d = cfg.detectors[0];
    if d.eta_det <= T::zero() {
        return Err(Error::OutOfRange {
            name: "eta_det",
            value: d.eta_det.as_f64(),
            range: "(0, 1]",
        });
    }
    let two = T::lit(2.0);
    let t = d.eta_tra;
    let n1 = T::from_count(cfg.parties - 1);
    let denom = two + n1 * (t * d.effective_eta_1of2() / d.eta_det + two * (T::one() - t));
    Ok(two * d.eta_det * t / denom)
}

/// Monte Carlo estimate of the conditional efficiency.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonteCarloEstimate {
    pub estimate: f64,
    /// Binomial standard error of the minimizing ratio.
    pub std_error: f64,
    pub party: usize,
    pub samples: u64,
    pub coincidences: u64,
    pub shards: usize,
    pub seed: u64,
}

pub const DEFAULT_SHARDS: usize = 64;

fn sample_register(rng: &mut ChaCha8Rng, det: &DetectorModel<f64>, arrived: usize) -> usize {
    let surviving = (0..arrived)
        .filter(|_| rng.gen::<f64>() < det.eta_tra)
        .count();
    let p = det
        .detect_surviving(surviving)
        .expect("ring parties receive at most two particles");
    let u = rng.gen::<f64>();
    if u < p[0] {
        0
    } else if u < p[0] + p[1] {
        1
    } else {
        2
    }
}

/// Simulates source choices, transmission losses and detector responses.
/// Shard `i` draws from the ChaCha stream `i` of `seed`; results depend only
/// on `(samples, seed, shards)`.
pub fn eta_c_monte_carlo(
    cfg: &YsConfig<f64>,
    samples: u64,
    seed: u64,
    shards: usize,
) -> Result<MonteCarloEstimate> {
    if samples == 0 || shards == 0 {
        return Err(Error::Precondition(
            "samples and shards must be positive".into(),
        ));
    }
    let n = cfg.parties;
    let per = samples / shards as u64;
    let extra = samples % shards as u64;
    let tallies: Vec<(u64, Vec<u64>)> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(shard as u64);
            let count = per + u64::from((shard as u64) < extra);
            let mut all = 0u64;
            let mut but = vec![0u64; n];
            let mut reg = vec![0usize; n];
            for _ in 0..count {
                let config: u64 = rng.gen::<u64>() & ((1u64 << n) - 1);
                let arrived = ring_counts(n, config);
                for k in 0..n {
                    reg[k] = sample_register(&mut rng, &cfg.detectors[k], arrived[k]);
                }
                let misses: Vec<usize> = (0..n).filter(|&k| reg[k] != 1).collect();
                match misses.len() {
                    0 => {
                        all += 1;
                        for b in but.iter_mut() {
                            *b += 1;
                        }
                    }
                    1 => but[misses[0]] += 1,
                    _ => {}
                }
            }
            (all, but)
        })
        .collect();
    let mut all = 0u64;
    let mut but = vec![0u64; n];
    for (a, b) in tallies {
        all += a;
        for k in 0..n {
            but[k] += b[k];
        }
    }
    let mut best: Option<(f64, usize)> = None;
    for (k, &b) in but.iter().enumerate() {
        if b == 0 {
            continue;
        }
        let r = all as f64 / b as f64;
        if best.map_or(true, |(v, _)| r < v) {
            best = Some((r, k));
        }
    }
    let (estimate, party) = best
        .ok_or_else(|| Error::DegenerateScenario("no event with N-1 single detections".into()))?;
    let std_error = (estimate * (1.0 - estimate) / but[party] as f64).sqrt();
    Ok(MonteCarloEstimate {
        estimate,
        std_error,
        party,
        samples,
        coincidences: all,
        shards,
        seed,
    })
}

/// How a detector's two-particle response scales with `η_det`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "eta_1of2")]
pub enum DetectionFamily<T> {
    /// Number resolving, `η_{1|2} = 2 η_det (1 - η_det)`.
    Independent,
    /// On-off, two surviving particles each detected independently.
    OnOff,
    /// Number resolving with a fixed `η_{1|2}`.
    Fixed(T),
}

/// One-parameter family of homogeneous ring configurations indexed by `η_det`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct YsFamily<T: Real = f64> {
    pub parties: usize,
    pub eta_tra: T,
    pub detection: DetectionFamily<T>,
}

impl<T: Real> YsFamily<T> {
    pub fn independent(parties: usize) -> Self {
        Self {
            parties,
            eta_tra: T::one(),
            detection: DetectionFamily::Independent,
        }
    }

    pub fn config(&self, eta_det: T) -> Result<YsConfig<T>> {
        let det = match self.detection {
            DetectionFamily::Independent => DetectorModel::independent(eta_det, self.eta_tra)?,
            DetectionFamily::OnOff => DetectorModel::on_off(eta_det, self.eta_tra)?,
            DetectionFamily::Fixed(e) => DetectorModel::new(eta_det, self.eta_tra, e, true)?,
        };
        YsConfig::homogeneous(self.parties, det)
    }

    pub fn eta_c(&self, eta_det: T) -> Result<T> {
        eta_c_analytic(&self.config(eta_det)?)
    }
}

/// Detector efficiency at which the ring reaches `eta_c_star`, by bisection.
pub fn threshold_eta_det<T: Real>(family: &YsFamily<T>, eta_c_star: T) -> Result<T> {
    let best = family.eta_c(T::one())?;
    if best < eta_c_star {
        return Err(Error::NoSolution(format!(
            "eta_c reaches only {best} at eta_det = 1, below the required {eta_c_star}"
        )));
    }
    bisect_decreasing(|eta| Ok(eta_c_star - family.eta_c(eta)?))
}

/// One row of the threshold table.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct ThresholdRow<T: Real = f64> {
    pub inequality: String,
    pub parties: usize,
    pub model_class: ModelClass,
    pub eta_c_star: T,
    pub eta_det_star_ys: T,
}

/// Threshold conditional efficiencies of CHSH, three-party Mermin and
/// Svetlichny, and the matching ring detector efficiencies for perfect
/// transmission and independent detection.
pub fn threshold_table<T: Real>() -> Result<Vec<ThresholdRow<T>>> {
    [("chsh", 2), ("mermin", 3), ("svetlichny", 3)]
        .into_iter()
        .map(|(name, n)| {
            let f = catalog::<T>(name, n)?;
            let q = f
                .quantum_value()
                .ok_or_else(|| Error::Precondition(format!("{name} has no quantum value")))?;
            let class = f.model_class();
            let t = threshold_eta_c(&f, q, class, true)?;
            let eta_det = threshold_eta_det(&YsFamily::independent(n), t.eta_c_star)?;
            Ok(ThresholdRow {
                inequality: name.to_string(),
                parties: n,
                model_class: class,
                eta_c_star: t.eta_c_star,
                eta_det_star_ys: eta_det,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::apply_detector_model;
    use crate::scenario::{Behavior, BellScenario};

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn ring_allocation() {
        for n in 2..=8 {
            let a = allocation_distribution::<f64>(n).unwrap();
            let mass: f64 = a.entries().iter().map(|e| e.1).sum();
            assert_eq!(mass, 1.0);
            assert!(a
                .entries()
                .iter()
                .all(|(d, _)| d.iter().sum::<usize>() == n));
            let coin = a
                .entries()
                .iter()
                .find(|(d, _)| d.iter().all(|&c| c == 1))
                .unwrap()
                .1;
            assert_eq!(coin, p_coin::<f64>(n).unwrap());
            for m in 0..n {
                for k in 0..n {
                    if m == k {
                        continue;
                    }
                    let mut pat = vec![1; n];
                    pat[m] = 2;
                    pat[k] = 0;
                    let p = a
                        .entries()
                        .iter()
                        .find(|(d, _)| *d == pat)
                        .map_or(0.0, |e| e.1);
                    assert_eq!(p, p_pattern::<f64>(n, m, k).unwrap());
                }
            }
        }
        assert_eq!(p_coin::<f64>(3).unwrap(), 0.25);
        assert_eq!(p_coin::<f64>(2).unwrap(), 0.5);
    }

    #[test]
    fn analytic_special_cases() {
        let ideal = YsConfig::homogeneous(3, DetectorModel::<f64>::ideal()).unwrap();
        assert_eq!(eta_c_analytic(&ideal).unwrap(), 1.0);
        for eta in [0.5, 0.8, 0.95, 1.0] {
            let c =
                YsConfig::homogeneous(3, DetectorModel::independent(eta, 1.0).unwrap()).unwrap();
            close(eta_c_analytic(&c).unwrap(), eta / (3.0 - 2.0 * eta), 1e-15);
            let c =
                YsConfig::homogeneous(2, DetectorModel::independent(eta, 1.0).unwrap()).unwrap();
            close(eta_c_analytic(&c).unwrap(), eta / (2.0 - eta), 1e-15);
        }
        let on_off =
            YsConfig::homogeneous(2, DetectorModel::<f64>::on_off(1.0, 1.0).unwrap()).unwrap();
        close(eta_c_analytic(&on_off).unwrap(), 2.0 / 3.0, 1e-15);
        let dead =
            YsConfig::homogeneous(2, DetectorModel::<f64>::independent(0.0, 1.0).unwrap()).unwrap();
        assert!(eta_c_analytic(&dead).is_err());
    }

    #[test]
    fn analytic_matches_exact_postselection() {
        // Independent oracle: compose the exact allocation with the detector
        // response and postselect.
        for n in [2usize, 3, 4] {
            let alloc = allocation_distribution::<f64>(n).unwrap();
            let b = Behavior::<f64>::uniform(BellScenario::dichotomic(n, 2).unwrap());
            for (det, tra) in [(0.9, 1.0), (0.7, 0.9), (1.0, 0.8), (0.95, 0.98)] {
                for d in [
                    DetectorModel::independent(det, tra).unwrap(),
                    DetectorModel::on_off(det, tra).unwrap(),
                    DetectorModel::new(det, tra, 0.3, true).unwrap(),
                ] {
                    let cfg = YsConfig::homogeneous(n, d).unwrap();
                    let db = apply_detector_model(&alloc, &cfg.detectors, &b).unwrap();
                    let exact = db.conditional_efficiency().unwrap().eta_c;
                    close(eta_c_analytic(&cfg).unwrap(), exact, 1e-12);
                }
            }
        }
    }

    #[test]
    fn monte_carlo_ideal_is_exact() {
        let cfg = YsConfig::homogeneous(3, DetectorModel::<f64>::ideal()).unwrap();
        let mc = eta_c_monte_carlo(&cfg, 100_000, 1, 8).unwrap();
        assert_eq!(mc.estimate, 1.0);
        assert_eq!(mc.std_error, 0.0);
    }

    #[test]
    fn monte_carlo_is_reproducible_and_close() {
        let cfg = YsConfig::homogeneous(3, DetectorModel::independent(0.95, 1.0).unwrap()).unwrap();
        let a = eta_c_monte_carlo(&cfg, 200_000, 42, 16).unwrap();
        let b = eta_c_monte_carlo(&cfg, 200_000, 42, 16).unwrap();
        assert_eq!(a, b);
        let exact = eta_c_analytic(&cfg).unwrap();
        assert!((a.estimate - exact).abs() < (4.0 * a.std_error).max(1e-3));
    }

    #[test]
    fn detector_thresholds() {
        let t = threshold_eta_det(&YsFamily::independent(2), 2.0 * (SQRT2 - 1.0)).unwrap();
        close(t, 4.0 / (3.0 + SQRT2), 1e-12);
        let t = threshold_eta_det(&YsFamily::independent(3), 0.75).unwrap();
        close(t, 0.9, 1e-12);
        let t = threshold_eta_det(&YsFamily::independent(3), 12.0 / (11.0 + SQRT2)).unwrap();
        close(t, 36.0 / (35.0 + SQRT2), 1e-12);
    }

    #[test]
    fn on_off_cannot_reach_chsh() {
        let fam = YsFamily {
            parties: 2,
            eta_tra: 1.0,
            detection: DetectionFamily::OnOff,
        };
        let e = threshold_eta_det(&fam, 2.0 * (SQRT2 - 1.0)).unwrap_err();
        assert!(e.is_no_solution());
    }

    #[test]
    fn table() {
        let rows = threshold_table::<f64>().unwrap();
        let want = [
            (2.0 * (SQRT2 - 1.0), 4.0 / (3.0 + SQRT2)),
            (0.75, 0.9),
            (12.0 / (11.0 + SQRT2), 36.0 / (35.0 + SQRT2)),
        ];
        for (r, (c, d)) in rows.iter().zip(want) {
            close(r.eta_c_star, c, 1e-12);
            close(r.eta_det_star_ys, d, 1e-12);
        }
    }
}
