//! Composite segmentation loss: SoftIoU + Dice + Focal, summed unweighted.
//! Targets are binary {0,1}; logits are raw (sigmoid applied internally,
//! focal through log-sigmoid for stability).

use samamba_tensor::{Element, Tensor};

use crate::Result;

/// Smoothing term guarding empty masks.
pub const LOSS_EPS: f64 = 1e-6;
pub const FOCAL_GAMMA: f64 = 2.0;
pub const FOCAL_ALPHA: f64 = 0.25;

/// 1 - (sum p*t + eps) / (sum p + sum t - sum p*t + eps), p = sigmoid(logits).
pub fn soft_iou_loss<E: Element>(logits: &Tensor<E>, target: &Tensor<E>) -> Result<Tensor<E>> {
    let eps = E::from_f64(LOSS_EPS);
    let p = logits.sigmoid()?;
    let inter = p.mul(target)?.sum_all()?;
    let union = p.sum_all()?.add(&target.sum_all()?)?.sub(&inter)?;
    let ratio = inter.add_scalar(eps)?.div(&union.add_scalar(eps)?)?;
    Ok(ratio.neg()?.add_scalar(E::one())?)
}

/// 1 - (2 sum p*t + eps) / (sum p + sum t + eps).
pub fn dice_loss<E: Element>(logits: &Tensor<E>, target: &Tensor<E>) -> Result<Tensor<E>> {
    let eps = E::from_f64(LOSS_EPS);
    let p = logits.sigmoid()?;
    let inter = p.mul(target)?.sum_all()?.mul_scalar(E::from_f64(2.0))?;
    let denom = p.sum_all()?.add(&target.sum_all()?)?;
    let ratio = inter.add_scalar(eps)?.div(&denom.add_scalar(eps)?)?;
    Ok(ratio.neg()?.add_scalar(E::one())?)
}

/// Mean over pixels of -alpha_t (1 - p_t)^gamma log p_t, computed through
/// log-sigmoid so saturated logits stay finite.
pub fn focal_loss<E: Element>(
    logits: &Tensor<E>,
    target: &Tensor<E>,
    gamma: f64,
    alpha: f64,
) -> Result<Tensor<E>> {
    let one = E::one();
    let p = logits.sigmoid()?;
    // p_t = t*p + (1-t)*(1-p)
    let pt = target
        .mul(&p)?
        .add(&target.neg()?.add_scalar(one)?.mul(&p.neg()?.add_scalar(one)?)?)?;
    // log p_t = t*logsig(z) + (1-t)*logsig(-z)
    let log_pt = target.mul(&logits.log_sigmoid()?)?.add(
        &target
            .neg()?
            .add_scalar(one)?
            .mul(&logits.neg()?.log_sigmoid()?)?,
    )?;
    // alpha_t = t*alpha + (1-t)*(1-alpha)
    let alpha_t = target
        .mul_scalar(E::from_f64(alpha))?
        .add(&target.neg()?.add_scalar(one)?.mul_scalar(E::from_f64(1.0 - alpha))?)?;
    let focus = pt.neg()?.add_scalar(one)?.pow_scalar(E::from_f64(gamma))?;
    let per_pixel = alpha_t.mul(&focus)?.mul(&log_pt)?.neg()?;
    per_pixel.mean_all().map_err(Into::into)
}

/// Unweighted sum of the three terms.
pub fn total_loss<E: Element>(logits: &Tensor<E>, target: &Tensor<E>) -> Result<Tensor<E>> {
    let s = soft_iou_loss(logits, target)?;
    let d = dice_loss(logits, target)?;
    let f = focal_loss(logits, target, FOCAL_GAMMA, FOCAL_ALPHA)?;
    Ok(s.add(&d)?.add(&f)?)
}
