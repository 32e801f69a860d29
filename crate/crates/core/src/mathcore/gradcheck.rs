use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;

use super::params::{ParamId, ParamStore};
use super::tape::{NodeId, Tape};
use crate::error::Result;
use crate::Rng;

/// Which coordinates [`check_gradients`] perturbs.
#[derive(Clone, Copy, Debug)]
pub enum Selection {
    All,
    /// At most `per_param` coordinates of every parameter, chosen with `seed`.
    Sample {
        per_param: usize,
        seed: u64,
    },
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Parameter, coordinate, analytic and numeric value at the worst coordinate.
    pub worst: Option<(String, usize, f64, f64)>,
    /// Coordinates where the step crossed a kink (a ReLU switching, say):
    /// the one-sided slopes disagree and the analytic value matches one of
    /// them. They are left out of `max_rel_error`.
    pub kinks: Vec<(String, usize)>,
}

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is zero are compared absolutely at this scale.
pub const REL_ERROR_FLOOR: f64 = 1e-5;

/// Relative gap between one-sided slopes that marks a kink. Smooth losses
/// give a gap of about `h |f''| / |f'|`.
pub const KINK_SLOPE_GAP: f64 = 1e-2;
const ONE_SIDED_TOL: f64 = 1e-3;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares tape gradients of `loss` against central differences with step `h`.
///
/// `loss` must be a pure function of the store: it is evaluated once for the
/// analytic gradient and twice per checked coordinate.
pub fn check_gradients<F>(store: &mut ParamStore, h: f64, selection: Selection, mut loss: F) -> Result<GradCheckReport>
where
    F: FnMut(&ParamStore, &mut Tape) -> Result<NodeId>,
{
    let mut tape = Tape::new();
    let root = loss(store, &mut tape)?;
    let base = tape.value(root).item();
    let grads = tape.backward(root)?;
    let ids: Vec<ParamId> = store.ids().collect();
    let mut report = GradCheckReport::default();

    let mut eval = |store: &ParamStore| -> Result<f64> {
        let mut t = Tape::new();
        let r = loss(store, &mut t)?;
        Ok(t.value(r).item())
    };

    for id in ids {
        let analytic = grads.dense(store, id);
        let coords: Vec<usize> = match selection {
            Selection::All => (0..analytic.len()).collect(),
            Selection::Sample { per_param, seed } => {
                let mut rng = Rng::seed_from_u64(seed ^ (id.index() as u64).wrapping_mul(0x9e37_79b9));
                let k = per_param.min(analytic.len());
                let mut v = sample(&mut rng, analytic.len(), k).into_vec();
                v.sort_unstable();
                v
            }
        };
        for c in coords {
            let orig = store.get(id).values()[c];
            store.get_mut(id).values_mut()[c] = orig + h;
            let plus = eval(store)?;
            store.get_mut(id).values_mut()[c] = orig - h;
            let minus = eval(store)?;
            store.get_mut(id).values_mut()[c] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let err = rel_error(analytic[c], numeric);
            report.checked += 1;
            let (fwd, bwd) = ((plus - base) / h, (base - minus) / h);
            let kink = rel_error(fwd, bwd) > KINK_SLOPE_GAP
                && (rel_error(analytic[c], fwd) < ONE_SIDED_TOL || rel_error(analytic[c], bwd) < ONE_SIDED_TOL);
            if kink {
                report.kinks.push((store.name(id).to_string(), c));
                continue;
            }
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                if err >= report.max_rel_error {
                    report.worst = Some((store.name(id).to_string(), c, analytic[c], numeric));
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathcore::Tensor;
    use alloc::vec;

    #[test]
    fn kinks_are_reported_not_scored() {
        let mut store = ParamStore::new();
        let id = store.add("p", Tensor::vector(vec![3e-6, 0.5, -0.2])).unwrap();
        let report = check_gradients(&mut store, 1e-5, Selection::All, |s, tape| {
            let p = tape.param(s, id);
            let sq = tape.hadamard(p, p)?;
            let r = tape.relu(p)?;
            let both = tape.add(sq, r)?;
            tape.sum_all(both)
        })
        .unwrap();
        assert_eq!(report.checked, 3);
        assert_eq!(report.kinks, vec![("p".to_string(), 0)]);
        assert!(report.max_rel_error < 1e-8, "{report:?}");
    }

    #[test]
    fn floor_applies_near_zero() {
        assert_eq!(rel_error(1.0, 1.0), 0.0);
        assert!((rel_error(0.0, 1e-9) - 1e-4).abs() < 1e-18);
        assert!((rel_error(2.0, 1.0) - 0.5).abs() < 1e-15);
    }
}
