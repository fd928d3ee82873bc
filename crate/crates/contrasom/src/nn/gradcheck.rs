//! Central finite-difference gradient verification, used by unit tests and
//! the acceptance suite.

use std::collections::BTreeMap;

use ndarray::ArrayD;

use super::params::ParamStore;

/// Compares analytic gradients against central finite differences over every
/// element of every named parameter. `f` evaluates the scalar objective from
/// a parameter store. Relative error uses a small absolute floor so that
/// near-zero gradients do not blow up the ratio.
pub fn check_against_finite_differences(
    store: &ParamStore,
    analytic: &BTreeMap<String, ArrayD<f64>>,
    mut f: impl FnMut(&ParamStore) -> f64,
    rel_tol: f64,
) -> Result<(), String> {
    let mut work = store.clone();
    let names: Vec<String> = store.names().cloned().collect();
    for name in &names {
        let n = store.get(name).len();
        for flat in 0..n {
            let orig = *store.get(name).iter().nth(flat).unwrap();
            let h = 1e-5 * orig.abs().max(1.0);

            *work.get_mut(name).iter_mut().nth(flat).unwrap() = orig + h;
            let plus = f(&work);
            *work.get_mut(name).iter_mut().nth(flat).unwrap() = orig - h;
            let minus = f(&work);
            *work.get_mut(name).iter_mut().nth(flat).unwrap() = orig;

            let fd = (plus - minus) / (2.0 * h);
            let an = analytic
                .get(name)
                .map(|g| *g.iter().nth(flat).unwrap())
                .unwrap_or(0.0);
            let denom = fd.abs().max(an.abs()).max(1e-6);
            let rel = (fd - an).abs() / denom;
            if rel > rel_tol {
                return Err(format!(
                    "{name}[{flat}]: finite difference {fd:.3e} vs analytic {an:.3e} (rel {rel:.3e})"
                ));
            }
        }
    }
    Ok(())
}
