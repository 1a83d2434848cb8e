use super::{NnError, Scalar};

/// Predictions are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before the log.
pub const BCE_CLAMP: f64 = 1e-7;

fn check_one_hot<T: Scalar>(target: &[T]) -> Result<(), NnError> {
    let mut ones = 0;
    for &t in target {
        if t == T::one() {
            ones += 1;
        } else if t != T::zero() {
            return Err(NnError::NotOneHot);
        }
    }
    if ones == 1 {
        Ok(())
    } else {
        Err(NnError::NotOneHot)
    }
}

/// Loss of one prediction vector, plus its gradient scaled by `scale`
/// (accumulated into `grad`). Clamped elements get zero gradient.
pub(super) fn bce_accumulate<T: Scalar>(pred: &[T], hot: usize, scale: T, grad: &mut [T]) -> T {
    let lo = T::from_f64(BCE_CLAMP);
    let hi = T::one() - lo;
    let n = T::from_f64(pred.len() as f64);
    let mut total = T::zero();
    for (i, (&p, g)) in pred.iter().zip(grad.iter_mut()).enumerate() {
        let pc = p.max(lo).min(hi);
        let clamped = pc != p;
        if i == hot {
            total -= pc.ln();
            if !clamped {
                *g += -scale / (n * pc);
            }
        } else {
            total -= (T::one() - pc).ln();
            if !clamped {
                *g += scale / (n * (T::one() - pc));
            }
        }
    }
    total / n
}

/// Mean over classes of `-(t ln p + (1 - t) ln(1 - p))` and its gradient
/// with respect to `pred`.
pub fn bce_loss<T: Scalar>(pred: &[T], target: &[T]) -> Result<(T, Vec<T>), NnError> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(NnError::Shape(format!("{} predictions for {} targets", pred.len(), target.len())));
    }
    check_one_hot(target)?;
    let hot = target.iter().position(|&t| t == T::one()).unwrap_or(0);
    let mut grad = vec![T::zero(); pred.len()];
    let loss = bce_accumulate(pred, hot, T::one(), &mut grad);
    Ok((loss, grad))
}

/// Mean of [`bce_loss`] over a batch of `targets.len()` row-major prediction
/// vectors, with the gradient of that mean.
pub fn bce_loss_batch<T: Scalar>(preds: &[T], targets: &[usize], n_classes: usize) -> Result<(T, Vec<T>), NnError> {
    if targets.is_empty() || preds.len() != targets.len() * n_classes {
        return Err(NnError::Shape(format!("{} predictions for {} targets", preds.len(), targets.len())));
    }
    if targets.iter().any(|&t| t >= n_classes) {
        return Err(NnError::NotOneHot);
    }
    let b = T::from_f64(targets.len() as f64);
    let scale = T::one() / b;
    let mut grad = vec![T::zero(); preds.len()];
    let mut total = T::zero();
    for (i, &t) in targets.iter().enumerate() {
        let r = i * n_classes..(i + 1) * n_classes;
        total += bce_accumulate(&preds[r.clone()], t, scale, &mut grad[r]);
    }
    Ok((total / b, grad))
}
