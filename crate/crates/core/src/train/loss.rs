use numcore::{Tape, Tensor, Var};

use crate::error::{Error, Result};

/// Mean squared error over every horizon step and node. With equal counts
/// per step this equals the mean over steps of the per-step mean.
pub fn mse_loss(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    if tape.shape(pred) != tape.shape(target) {
        return Err(Error::shape(
            "mse target",
            format!("{:?}", tape.shape(pred)),
            format!("{:?}", tape.shape(target)),
        ));
    }
    let diff = tape.sub(pred, target)?;
    let sq = tape.mul(diff, diff)?;
    Ok(tape.mean(sq)?)
}

/// Value-only [`mse_loss`].
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let p = tape.constant(pred.clone());
    let t = tape.constant(target.clone());
    let l = mse_loss(&mut tape, p, t)?;
    Ok(tape.value(l).data()[0])
}
