use crate::error::{NumError, Result};
use crate::params::Parameters;
use crate::tape::{Tape, Var};

/// Denominator floor for the relative error, so that near-zero gradients
/// are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub max_abs_err: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub tol: f64,
    pub params: Vec<ParamCheck>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.max_rel_err <= self.tol)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

fn loss_value<M, F>(model: &M, loss_fn: &F) -> Result<f64>
where
    M: Parameters,
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let root = loss_fn(&mut tape, &vars)?;
    let v = tape.value(root);
    if v.len() != 1 {
        return Err(NumError::contract("gradcheck loss must be a scalar"));
    }
    Ok(v.data()[0])
}

fn same_bits(a: f64, b: f64) -> Result<()> {
    if a.to_bits() != b.to_bits() {
        return Err(NumError::NonDeterministic {
            first: a,
            second: b,
        });
    }
    Ok(())
}

/// Compares tape gradients of every trainable tensor against central
/// differences `(f(x+h) - f(x-h)) / 2h`.
///
/// The relative error of one element is `|a - n| / max(|a|, |n|, 1e-6)`.
/// The model is restored exactly; its gradient buffers are not touched.
pub fn gradcheck<M, F>(model: &mut M, loss_fn: F, h: f64, tol: f64) -> Result<GradcheckReport>
where
    M: Parameters,
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(NumError::contract("gradcheck step must be positive"));
    }
    if model.params().iter().any(|(_, t)| !t.is_finite()) {
        return Err(NumError::NonFinite { op: "gradcheck" });
    }

    let mut tape = Tape::new();
    let vars = model.bind(&mut tape);
    let root = loss_fn(&mut tape, &vars)?;
    let base = tape.value(root).data()[0];
    let analytic: Vec<Option<Vec<f64>>> = if tape.is_tracked(root) {
        tape.backward(root)?;
        vars.iter().map(|v| tape.grad(*v).map(<[f64]>::to_vec)).collect()
    } else {
        model.params().iter().map(|(_, t)| Some(vec![0.0; t.len()])).collect()
    };
    same_bits(base, loss_value(model, &loss_fn)?)?;

    let specs: Vec<(String, bool, usize)> = model
        .params()
        .iter()
        .map(|(n, t)| (n.clone(), t.requires_grad(), t.len()))
        .collect();

    let mut report = GradcheckReport {
        tol,
        params: Vec::new(),
    };
    for (k, (name, trainable, len)) in specs.into_iter().enumerate() {
        if !trainable {
            continue;
        }
        let grads = analytic[k].clone().unwrap_or_else(|| vec![0.0; len]);
        let mut check = ParamCheck {
            name,
            max_rel_err: 0.0,
            max_abs_err: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..len {
            let orig = model.params()[k].1.data()[i];
            let probe = |x: f64, model: &mut M| -> Result<f64> {
                model.params_mut()[k].1.data_mut()[i] = x;
                loss_value(model, &loss_fn)
            };
            let plus = probe(orig + h, model);
            let minus = probe(orig - h, model);
            model.params_mut()[k].1.data_mut()[i] = orig;
            let numeric = (plus? - minus?) / (2.0 * h);
            let a = grads[i];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
            check.max_abs_err = check.max_abs_err.max(abs);
            if rel > check.max_rel_err || i == 0 {
                check.max_rel_err = check.max_rel_err.max(rel);
                check.worst_index = i;
                check.analytic = a;
                check.numeric = numeric;
            }
        }
        same_bits(base, loss_value(model, &loss_fn)?)?;
        report.params.push(check);
    }
    Ok(report)
}
