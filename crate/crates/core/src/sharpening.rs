//! Sharpened bounds for coincidence-postselected statistics and the threshold
//! conditional efficiencies at which they meet a quantum value.
//!
//! With `K = Σ_k M_k - N` and `r = (1 - η_c)/η_c`:
//!
//! * LHV: `C + (I - C)(1 - r K)`
//! * HLNHV: `I + 4 C̃ N r` with `C̃` either `C` or `C_opt`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inequalities::{mermin, BellFunctional, ModelClass};
use crate::scalar::Real;

fn check_eta<T: Real>(eta_c: T) -> Result<()> {
    if eta_c > T::zero() && eta_c <= T::one() {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            name: "eta_c",
            value: eta_c.as_f64(),
            range: "(0, 1]",
        })
    }
}

/// `Σ_k M_k - N`.
pub fn excess_settings<T: Real>(f: &BellFunctional<T>) -> usize {
    let s = f.scenario();
    s.total_settings() - s.num_parties()
}

fn loss_ratio<T: Real>(eta_c: T) -> T {
    (T::one() - eta_c) / eta_c
}

pub fn sharpened_bound_lhv<T: Real>(f: &BellFunctional<T>, eta_c: T) -> Result<T> {
    check_eta(eta_c)?;
    let c = f.constant_c();
    let i = f.classical_bound();
    let k = T::from_count(excess_settings(f));
    Ok(c + (i - c) * (T::one() - loss_ratio(eta_c) * k))
}

/// The constant `C̃` entering the HLNHV bound.
pub fn hlnhv_constant<T: Real>(f: &BellFunctional<T>, use_c_opt: bool) -> T {
    if use_c_opt {
        f.constant_c_opt().0
    } else {
        f.constant_c()
    }
}

pub fn sharpened_bound_hlnhv<T: Real>(
    f: &BellFunctional<T>,
    eta_c: T,
    use_c_opt: bool,
) -> Result<T> {
    check_eta(eta_c)?;
    let n = T::from_count(f.num_parties());
    let ct = hlnhv_constant(f, use_c_opt);
    Ok(f.classical_bound() + T::lit(4.0) * ct * n * loss_ratio(eta_c))
}

/// Sharpened bound of `f` at a given conditional efficiency.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct SharpenedBound<T: Real = f64> {
    pub inequality: String,
    pub eta_c: T,
    pub model_class: ModelClass,
    pub use_c_opt: bool,
    pub bound: T,
    /// The bound is at least the algebraic maximum `C` and excludes nothing.
    pub vacuous: bool,
}

pub fn sharpen<T: Real>(
    f: &BellFunctional<T>,
    eta_c: T,
    model_class: ModelClass,
    use_c_opt: bool,
) -> Result<SharpenedBound<T>> {
    let bound = match model_class {
        ModelClass::Lhv => sharpened_bound_lhv(f, eta_c)?,
        ModelClass::Hlnhv => sharpened_bound_hlnhv(f, eta_c, use_c_opt)?,
    };
    Ok(SharpenedBound {
        inequality: f.name().to_string(),
        eta_c,
        model_class,
        use_c_opt: use_c_opt && model_class == ModelClass::Hlnhv,
        bound,
        vacuous: bound >= f.constant_c(),
    })
}

/// Threshold conditional efficiency together with the bisection cross-check.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "T: Real")]
pub struct Threshold<T: Real = f64> {
    pub inequality: String,
    pub model_class: ModelClass,
    pub use_c_opt: bool,
    pub quantum_value: T,
    pub eta_c_star: T,
    pub eta_c_bisection: T,
}

/// Solves `sharpened_bound(η_c) = I_Q` in closed form and by bisection.
pub fn threshold_eta_c<T: Real>(
    f: &BellFunctional<T>,
    quantum_value: T,
    model_class: ModelClass,
    use_c_opt: bool,
) -> Result<Threshold<T>> {
    let i = f.classical_bound();
    let c = f.constant_c();
    if quantum_value <= i {
        return Err(Error::NoThreshold(format!(
            "{} is never violated: I_Q = {quantum_value} ≤ I = {i}",
            f.name()
        )));
    }
    if quantum_value > c {
        return Err(Error::OutOfRange {
            name: "quantum_value",
            value: quantum_value.as_f64(),
            range: "(I, C]",
        });
    }
    let denom = match model_class {
        ModelClass::Lhv => (c - i) * T::from_count(excess_settings(f)),
        ModelClass::Hlnhv => {
            T::lit(4.0) * hlnhv_constant(f, use_c_opt) * T::from_count(f.num_parties())
        }
    };
    if denom <= T::zero() {
        return Err(Error::NoThreshold(format!(
            "the sharpened bound of {} does not depend on eta_c",
            f.name()
        )));
    }
    let t = (quantum_value - i) / denom;
    let eta_c_star = T::one() / (T::one() + t);
    let bound = |eta: T| match model_class {
        ModelClass::Lhv => sharpened_bound_lhv(f, eta),
        ModelClass::Hlnhv => sharpened_bound_hlnhv(f, eta, use_c_opt),
    };
    let eta_c_bisection = bisect_decreasing(|eta| Ok(bound(eta)? - quantum_value))?;
    Ok(Threshold {
        inequality: f.name().to_string(),
        model_class,
        use_c_opt: use_c_opt && model_class == ModelClass::Hlnhv,
        quantum_value,
        eta_c_star,
        eta_c_bisection,
    })
}

/// Root in `(0, 1]` of a function that is decreasing, nonpositive at 1 and
/// positive somewhere below.
pub(crate) fn bisect_decreasing<T: Real>(g: impl Fn(T) -> Result<T>) -> Result<T> {
    let half = T::lit(0.5);
    let mut hi = T::one();
    if g(hi)? > T::zero() {
        return Err(Error::NoSolution("no sign change on (0, 1]".into()));
    }
    let mut lo = half;
    let mut tries = 0;
    while g(lo)? <= T::zero() {
        hi = lo;
        lo = lo * half;
        tries += 1;
        if tries > 200 {
            return Err(Error::NoSolution("no sign change on (0, 1]".into()));
        }
    }
    for _ in 0..200 {
        let mid = half * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= T::root_tol() * T::lit(1e-3) {
            break;
        }
        if g(mid)? > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(half * (lo + hi))
}

/// `N/(N+1)` for the odd-`N` Mermin family, obtained from the LHV threshold
/// with `I_Q = C`.
pub fn mermin_family_threshold<T: Real>(parties: usize) -> Result<T> {
    let m = mermin::<T>(parties)?;
    let q = m.quantum_value().expect("mermin carries its quantum value");
    Ok(threshold_eta_c(&m, q, ModelClass::Lhv, false)?.eta_c_star)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inequalities::catalog;

    const SQRT2: f64 = std::f64::consts::SQRT_2;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn bounds_at_unit_efficiency_are_classical() {
        for (name, n) in [("chsh", 2), ("mermin", 3), ("svetlichny", 3)] {
            let f = catalog::<f64>(name, n).unwrap();
            assert_eq!(sharpened_bound_lhv(&f, 1.0).unwrap(), f.classical_bound());
            assert_eq!(
                sharpened_bound_hlnhv(&f, 1.0, true).unwrap(),
                f.classical_bound()
            );
            assert_eq!(
                sharpened_bound_hlnhv(&f, 1.0, false).unwrap(),
                f.classical_bound()
            );
        }
    }

    #[test]
    fn bounds_meet_quantum_values() {
        let chsh = catalog::<f64>("chsh", 2).unwrap();
        close(
            sharpened_bound_lhv(&chsh, 2.0 * (SQRT2 - 1.0)).unwrap(),
            2.0 * SQRT2,
            1e-12,
        );
        close(
            sharpened_bound_hlnhv(&chsh, 8.0 / (7.0 + SQRT2), true).unwrap(),
            2.0 * SQRT2,
            1e-12,
        );
        let m = catalog::<f64>("mermin", 3).unwrap();
        close(sharpened_bound_lhv(&m, 0.75).unwrap(), 4.0, 1e-12);
        let sv = catalog::<f64>("svetlichny", 3).unwrap();
        close(
            sharpened_bound_hlnhv(&sv, 12.0 / (11.0 + SQRT2), true).unwrap(),
            4.0 * SQRT2,
            1e-12,
        );
    }

    #[test]
    fn eta_out_of_range() {
        let chsh = catalog::<f64>("chsh", 2).unwrap();
        for eta in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                sharpened_bound_lhv(&chsh, eta),
                Err(Error::OutOfRange { .. })
            ));
            assert!(sharpened_bound_hlnhv(&chsh, eta, true).is_err());
        }
    }

    #[test]
    fn thresholds() {
        let chsh = catalog::<f64>("chsh", 2).unwrap();
        let t = threshold_eta_c(&chsh, 2.0 * SQRT2, ModelClass::Lhv, false).unwrap();
        close(t.eta_c_star, 2.0 * (SQRT2 - 1.0), 1e-15);
        close(t.eta_c_bisection, t.eta_c_star, 1e-12);

        let m = catalog::<f64>("mermin", 3).unwrap();
        let t = threshold_eta_c(&m, 4.0, ModelClass::Lhv, false).unwrap();
        close(t.eta_c_star, 0.75, 1e-15);
        close(t.eta_c_bisection, 0.75, 1e-12);

        let sv = catalog::<f64>("svetlichny", 3).unwrap();
        let t = threshold_eta_c(&sv, 4.0 * SQRT2, ModelClass::Hlnhv, true).unwrap();
        close(t.eta_c_star, 12.0 / (11.0 + SQRT2), 1e-15);
        close(t.eta_c_bisection, t.eta_c_star, 1e-12);

        let t = threshold_eta_c(&chsh, 2.0 * SQRT2, ModelClass::Hlnhv, true).unwrap();
        close(t.eta_c_star, 8.0 / (7.0 + SQRT2), 1e-15);
    }

    #[test]
    fn no_threshold_without_violation() {
        let chsh = catalog::<f64>("chsh", 2).unwrap();
        let e = threshold_eta_c(&chsh, 2.0, ModelClass::Lhv, false).unwrap_err();
        assert!(e.is_no_solution());
        assert!(threshold_eta_c(&chsh, 4.5, ModelClass::Lhv, false).is_err());
    }

    #[test]
    fn mermin_family() {
        for n in [3usize, 5, 7] {
            close(
                mermin_family_threshold::<f64>(n).unwrap(),
                n as f64 / (n as f64 + 1.0),
                1e-14,
            );
        }
        assert!(mermin_family_threshold::<f64>(4).is_err());
    }

    #[test]
    fn vacuous_flag() {
        let chsh = catalog::<f64>("chsh", 2).unwrap();
        let b = sharpen(&chsh, 0.5, ModelClass::Lhv, false).unwrap();
        assert!(b.bound > 4.0 && b.vacuous);
        let b = sharpen(&chsh, 0.95, ModelClass::Lhv, false).unwrap();
        assert!(!b.vacuous);
    }

    #[test]
    fn single_precision_thresholds() {
        let chsh = catalog::<f32>("chsh", 2).unwrap();
        let t = threshold_eta_c(
            &chsh,
            2.0 * std::f32::consts::SQRT_2,
            ModelClass::Lhv,
            false,
        )
        .unwrap();
        assert!((t.eta_c_star - 2.0 * (std::f32::consts::SQRT_2 - 1.0)).abs() < 1e-6);
        assert!((t.eta_c_bisection - t.eta_c_star).abs() < 1e-5);
    }
}
