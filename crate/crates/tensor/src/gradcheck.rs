//! Central finite-difference gradient oracle.

use crate::error::Result;
use crate::params::ParamStore;
use crate::tape::{Tape, Var};

/// Worst-case comparison between analytic and numerical gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub checked: usize,
}

/// Relative error `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares the tape gradient of the scalar `loss` against central
/// differences with step `h` for every entry of every parameter in `store`.
/// `loss` must build the scalar from scratch on the tape it is given.
pub fn check_gradients<F>(store: &ParamStore, h: f64, floor: f64, loss: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape<'_>) -> Result<Var>,
{
    let analytic = {
        let mut tape = Tape::new(store);
        let out = loss(&mut tape)?;
        tape.backward_scalar(out)?
    };
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(s);
        let out = loss(&mut tape)?;
        Ok(tape.scalar(out))
    };
    let mut work = store.clone();
    let mut report = GradCheck { max_rel_error: 0.0, worst_param: String::new(), checked: 0 };
    let names: Vec<String> = store.names().map(str::to_string).collect();
    for name in names {
        let n = store.get(&name).map_or(0, |t| t.len());
        for k in 0..n {
            let orig = store.get(&name).expect("param").data()[k];
            work.get_mut(&name).expect("param").data_mut()[k] = orig + h;
            let up = eval(&work)?;
            work.get_mut(&name).expect("param").data_mut()[k] = orig - h;
            let down = eval(&work)?;
            work.get_mut(&name).expect("param").data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.get(&name).map_or(0.0, |g| g.data()[k]);
            let err = relative_error(a, numeric, floor);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_param = format!("{name}[{k}]");
            }
        }
    }
    Ok(report)
}
