//! Classical bounds by exhaustive enumeration.
//!
//! The LHV bound of a linear functional is attained on a deterministic
//! strategy. For three parties the HLNHV bound is attained on a product of a
//! deterministic single-party strategy and an extreme point of the bipartite
//! no-signaling polytope shared by the other two parties.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::inequalities::BellFunctional;
use crate::scalar::Real;
use crate::scenario::{mixed_radix_digits, Behavior, BellScenario};

/// Largest strategy space [`lhv_bound`] will enumerate.
pub const MAX_STRATEGIES: u128 = 10_000_000;

/// Per-party response maps `x_k -> a_k` (outcome indices).
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DeterministicStrategy {
    pub responses: Vec<Vec<usize>>,
}

impl DeterministicStrategy {
    /// Decodes the `index`-th joint strategy. Party 1's response to its first
    /// setting is the fastest digit.
    pub fn from_index(scenario: &BellScenario, mut index: u128) -> Self {
        let responses = scenario
            .settings()
            .iter()
            .zip(scenario.alphabet_sizes())
            .map(|(&m, na)| {
                (0..m)
                    .map(|_| {
                        let d = (index % na as u128) as usize;
                        index /= na as u128;
                        d
                    })
                    .collect()
            })
            .collect();
        Self { responses }
    }

    pub fn behavior<T: Real>(&self, scenario: &BellScenario) -> Result<Behavior<T>> {
        Behavior::deterministic(scenario.clone(), &self.responses)
    }
}

pub fn strategy_count(scenario: &BellScenario) -> u128 {
    scenario
        .settings()
        .iter()
        .zip(scenario.alphabet_sizes())
        .fold(1u128, |acc, (&m, na)| {
            acc.saturating_mul((na as u128).saturating_pow(m as u32))
        })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LhvBound<T> {
    pub value: T,
    pub strategy: DeterministicStrategy,
    pub strategies_checked: u128,
}

fn strategy_value<T: Real>(f: &BellFunctional<T>, strategy: &DeterministicStrategy) -> T {
    let s = f.scenario();
    let alph = s.alphabet_sizes();
    f.coefficients()
        .iter()
        .enumerate()
        .map(|(xi, row)| {
            let x = mixed_radix_digits(xi, s.settings());
            let mut ai = 0;
            let mut stride = 1;
            for (k, &xk) in x.iter().enumerate() {
                ai += strategy.responses[k][xk] * stride;
                stride *= alph[k];
            }
            row[ai]
        })
        .sum()
}

/// Exact maximum of the functional over deterministic local strategies.
/// Ties resolve to the lowest strategy index.
pub fn lhv_bound<T: Real>(f: &BellFunctional<T>) -> Result<LhvBound<T>> {
    let s = f.scenario();
    let count = strategy_count(s);
    if count > MAX_STRATEGIES {
        return Err(Error::SearchSpaceTooLarge { cardinality: count });
    }
    let (value, index) = (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let strat = DeterministicStrategy::from_index(s, i as u128);
            (strategy_value(f, &strat), i)
        })
        .reduce_with(better)
        .expect("at least one strategy");
    Ok(LhvBound {
        value,
        strategy: DeterministicStrategy::from_index(s, index as u128),
        strategies_checked: count,
    })
}

fn better<T: Real>(a: (T, u64), b: (T, u64)) -> (T, u64) {
    if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

/// Extreme point of the two-party, two-setting, two-outcome no-signaling polytope.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NsVertex {
    pub behavior: Behavior<f64>,
    pub deterministic: bool,
}

/// Rank of an integer matrix by fraction-free elimination.
fn integer_rank(mut m: Vec<Vec<i128>>) -> usize {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    let mut prev = 1i128;
    for col in 0..cols {
        let Some(piv) = (rank..rows).find(|&r| m[r][col] != 0) else {
            continue;
        };
        m.swap(rank, piv);
        for r in rank + 1..rows {
            for c in col + 1..cols {
                m[r][c] = (m[rank][col] * m[r][c] - m[r][col] * m[rank][c]) / prev;
            }
            m[r][col] = 0;
        }
        prev = m[rank][col];
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

/// Equality constraints (normalization and no-signaling) of the 2-2-2
/// polytope over the 16 entries `p[4·x + a]`, with `x = x1 + 2·x2` and
/// `a = a1 + 2·a2`.
fn ns_equalities() -> Vec<Vec<i128>> {
    let var = |x1: usize, x2: usize, a1: usize, a2: usize| 4 * (x1 + 2 * x2) + a1 + 2 * a2;
    let mut rows = Vec::new();
    for x in 0..4 {
        let mut r = vec![0i128; 16];
        for a in 0..4 {
            r[4 * x + a] = 1;
        }
        rows.push(r);
    }
    for x1 in 0..2 {
        for a1 in 0..2 {
            let mut r = vec![0i128; 16];
            for a2 in 0..2 {
                r[var(x1, 0, a1, a2)] += 1;
                r[var(x1, 1, a1, a2)] -= 1;
            }
            rows.push(r);
        }
    }
    for x2 in 0..2 {
        for a2 in 0..2 {
            let mut r = vec![0i128; 16];
            for a1 in 0..2 {
                r[var(0, x2, a1, a2)] += 1;
                r[var(1, x2, a1, a2)] -= 1;
            }
            rows.push(r);
        }
    }
    rows
}

/// Enumerates the 2-2-2 no-signaling polytope's vertices from candidates with
/// entries in `{0, 1/2, 1}`. A candidate is kept when it satisfies the
/// equalities exactly and its active constraints have full rank.
pub fn enumerate_ns_vertices() -> Vec<NsVertex> {
    // Distributions over four outcomes with entries in {0, 1/2, 1}, in units of 1/2.
    let mut blocks: Vec<[i128; 4]> = Vec::new();
    for i in 0..4 {
        let mut b = [0; 4];
        b[i] = 2;
        blocks.push(b);
    }
    for i in 0..4 {
        for j in i + 1..4 {
            let mut b = [0; 4];
            b[i] = 1;
            b[j] = 1;
            blocks.push(b);
        }
    }
    let eq = ns_equalities();
    let scenario = BellScenario::dichotomic(2, 2).expect("valid");
    let mut out = Vec::new();
    let nb = blocks.len();
    for code in 0..nb.pow(4) {
        let mut p = [0i128; 16];
        let mut c = code;
        for x in 0..4 {
            p[4 * x..4 * x + 4].copy_from_slice(&blocks[c % nb]);
            c /= nb;
        }
        // Normalization holds by construction; rows 4.. are the no-signaling equalities.
        if eq[4..]
            .iter()
            .any(|r| r.iter().zip(&p).map(|(a, b)| a * b).sum::<i128>() != 0)
        {
            continue;
        }
        let mut active = eq.clone();
        for (v, &pv) in p.iter().enumerate() {
            if pv == 0 {
                let mut r = vec![0i128; 16];
                r[v] = 1;
                active.push(r);
            }
        }
        if integer_rank(active) < 16 {
            continue;
        }
        let table = (0..4)
            .map(|x| (0..4).map(|a| p[4 * x + a] as f64 / 2.0).collect())
            .collect();
        out.push(NsVertex {
            behavior: Behavior::new(scenario.clone(), table).expect("shape"),
            deterministic: p.iter().all(|&v| v == 0 || v == 2),
        });
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HlnhvWitness {
    /// Zero-based party that factorizes from the pair.
    pub single_party: usize,
    pub pair: (usize, usize),
    /// Outcome index answered by the single party for each of its settings.
    pub single_response: Vec<usize>,
    /// Index into [`enumerate_ns_vertices`].
    pub vertex: usize,
    pub vertex_deterministic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HlnhvBound<T> {
    pub value: T,
    pub witness: HlnhvWitness,
}

/// Behavior of `single` answering deterministically while the pair shares the
/// two-party `vertex` table.
pub fn bipartition_product<T: Real>(
    scenario: &BellScenario,
    single: usize,
    response: &[usize],
    vertex: &Behavior<f64>,
) -> Behavior<T> {
    let (i, j) = pair_of(single);
    Behavior::from_fn(scenario.clone(), |x, a| {
        if a.0[single] != response[x.0[single]] {
            return T::zero();
        }
        let xi = x.0[i] + 2 * x.0[j];
        let ai = a.0[i] + 2 * a.0[j];
        T::lit(vertex.table()[xi][ai])
    })
}

fn pair_of(single: usize) -> (usize, usize) {
    match single {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}

/// Exact HLNHV bound for three parties with two settings and two outcomes each.
pub fn hlnhv_bound<T: Real>(f: &BellFunctional<T>) -> Result<HlnhvBound<T>> {
    let s = f.scenario();
    if s.num_parties() != 3 {
        return Err(Error::Unsupported(format!(
            "exact HLNHV bounds are only computed for three parties (got {}); register a literature bound in the catalog",
            s.num_parties()
        )));
    }
    if s.settings().iter().any(|&m| m != 2) || s.alphabet_sizes().iter().any(|&n| n != 2) {
        return Err(Error::Unsupported(
            "HLNHV enumeration needs two settings and two outcomes per party".into(),
        ));
    }
    let vertices = enumerate_ns_vertices();
    let mut best: Option<HlnhvBound<T>> = None;
    for single in 0..3 {
        for r in 0..4usize {
            let response = vec![r & 1, r >> 1];
            for (vi, v) in vertices.iter().enumerate() {
                let b = bipartition_product::<T>(s, single, &response, &v.behavior);
                let value = f.evaluate(&b)?;
                if best.as_ref().map_or(true, |h| value > h.value) {
                    best = Some(HlnhvBound {
                        value,
                        witness: HlnhvWitness {
                            single_party: single,
                            pair: pair_of(single),
                            single_response: response.clone(),
                            vertex: vi,
                            vertex_deterministic: v.deterministic,
                        },
                    });
                }
            }
        }
    }
    Ok(best.expect("nonempty search"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inequalities::{catalog, BellFunctional, ModelClass};

    #[test]
    fn vertex_census() {
        let v = enumerate_ns_vertices();
        assert_eq!(v.len(), 24);
        assert_eq!(v.iter().filter(|v| v.deterministic).count(), 16);
        for vert in &v {
            assert!(vert.behavior.is_valid());
            let ns = vert.behavior.check_no_signaling(0.0);
            assert!(ns.no_signaling);
        }
    }

    #[test]
    fn nonlocal_vertices_reach_algebraic_chsh_maximum() {
        // The eight relabelings of CHSH: the minus sign on any of the four terms,
        // and an overall sign.
        let s = BellScenario::dichotomic(2, 2).unwrap();
        let variants: Vec<BellFunctional<f64>> = (0..4)
            .map(|minus| {
                let c = (0..4)
                    .map(|x| if x == minus { -1.0 } else { 1.0 })
                    .collect();
                crate::inequalities::CorrelatorFunctional::new(s.clone(), c)
                    .unwrap()
                    .into_functional("chsh-variant", 2.0, ModelClass::Lhv, None)
                    .unwrap()
            })
            .collect();
        let chsh = catalog::<f64>("chsh", 2).unwrap();
        let mut standard_hits = 0;
        for v in enumerate_ns_vertices().iter().filter(|v| !v.deterministic) {
            let best = variants
                .iter()
                .map(|f| f.evaluate(&v.behavior).unwrap().abs())
                .fold(0.0, f64::max);
            assert_eq!(best, 4.0);
            if chsh.evaluate(&v.behavior).unwrap().abs() == 4.0 {
                standard_hits += 1;
            }
        }
        assert_eq!(standard_hits, 2);
    }

    #[test]
    fn integer_rank_small_cases() {
        assert_eq!(integer_rank(vec![vec![1, 2], vec![2, 4]]), 1);
        assert_eq!(integer_rank(vec![vec![0, 1], vec![1, 0]]), 2);
        assert_eq!(integer_rank(ns_equalities()), 8);
    }

    #[test]
    fn lhv_bounds_of_catalog() {
        assert_eq!(
            lhv_bound(&catalog::<f64>("chsh", 2).unwrap())
                .unwrap()
                .value,
            2.0
        );
        assert_eq!(
            lhv_bound(&catalog::<f64>("mermin", 3).unwrap())
                .unwrap()
                .value,
            2.0
        );
        let sv = lhv_bound(&catalog::<f64>("svetlichny", 3).unwrap()).unwrap();
        assert_eq!(sv.value, 4.0);
        assert_eq!(sv.strategies_checked, 64);
    }

    #[test]
    fn lhv_witness_attains_the_bound() {
        let f = catalog::<f64>("mermin", 3).unwrap();
        let b = lhv_bound(&f).unwrap();
        let beh = b.strategy.behavior(f.scenario()).unwrap();
        assert_eq!(f.evaluate(&beh).unwrap(), b.value);
    }

    #[test]
    fn mermin_five_and_seven_by_enumeration() {
        assert_eq!(
            lhv_bound(&catalog::<f64>("mermin", 5).unwrap())
                .unwrap()
                .value,
            4.0
        );
        assert_eq!(
            lhv_bound(&catalog::<f64>("mermin", 7).unwrap())
                .unwrap()
                .value,
            8.0
        );
    }

    #[test]
    fn oversized_search_is_refused() {
        let s = BellScenario::dichotomic(6, 5).unwrap();
        let f = BellFunctional::new(
            "big",
            s.clone(),
            vec![vec![0.0; s.num_joint_outcomes()]; s.num_joint_settings()],
            0.0,
            ModelClass::Lhv,
            None,
        )
        .unwrap();
        assert!(
            matches!(lhv_bound(&f), Err(Error::SearchSpaceTooLarge { cardinality }) if cardinality == 1u128 << 30)
        );
    }

    #[test]
    fn hlnhv_bounds() {
        let sv = hlnhv_bound(&catalog::<f64>("svetlichny", 3).unwrap()).unwrap();
        assert_eq!(sv.value, 4.0);
        let m = hlnhv_bound(&catalog::<f64>("mermin", 3).unwrap()).unwrap();
        assert_eq!(m.value, 4.0);
        assert!(!m.witness.vertex_deterministic);
    }

    #[test]
    fn hlnhv_rejects_other_shapes() {
        assert!(matches!(
            hlnhv_bound(&catalog::<f64>("chsh", 2).unwrap()),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(
            hlnhv_bound(&catalog::<f64>("mermin", 5).unwrap()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn bound_ordering_for_three_party_functionals() {
        for name in ["mermin", "svetlichny"] {
            let f = catalog::<f64>(name, 3).unwrap();
            let l = lhv_bound(&f).unwrap().value;
            let h = hlnhv_bound(&f).unwrap().value;
            assert!(l <= h && h <= f.constant_c());
        }
    }
}
