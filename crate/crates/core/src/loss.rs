//! Segmentation and boundary losses. All reductions accumulate in f64
//! in a fixed pixel order.

use crate::error::{config, shape, Error, Result};
use crate::labels::{BoundaryMap, LabelMap};
use crate::network::ForwardOutputs;
use crate::tensor::Tensor;

/// Smoothing term of the dice loss.
pub const DICE_EPS: f64 = 1.0;

/// Weights of the auxiliary segmentation loss (`aux`) and the boundary loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub aux: f64,
    pub boundary: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { aux: 0.2, boundary: 0.1 }
    }
}

impl LossWeights {
    pub fn new(aux: f64, boundary: f64) -> Result<Self> {
        let w = Self { aux, boundary };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.aux >= 0.0 && self.boundary >= 0.0) || !self.aux.is_finite() || !self.boundary.is_finite() {
            return Err(config(format!(
                "loss weights must be finite and non-negative, got {} and {}",
                self.aux, self.boundary
            )));
        }
        Ok(())
    }
}

/// Every component of the total loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub seg: f64,
    pub aux: f64,
    pub bce: f64,
    pub dice: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// `bce + dice`.
    pub fn boundary(&self) -> f64 {
        self.bce + self.dice
    }
}

fn check_batch(logits: &Tensor, n: usize, h: usize, w: usize, what: &str) -> Result<()> {
    let d = logits.dims();
    if d.n != n || d.h != h || d.w != w {
        return Err(shape(format!("{what}: logits {d} do not match {n} maps of {h}x{w}")));
    }
    Ok(())
}

fn batch_hw<'a>(mut dims: impl Iterator<Item = (usize, usize)> + 'a) -> Result<(usize, usize)> {
    let first = dims.next().ok_or_else(|| shape("empty batch"))?;
    if dims.any(|d| d != first) {
        return Err(shape("maps in a batch differ in size"));
    }
    Ok(first)
}

/// Mean of `-log softmax(logits)[label]` over non-ignored pixels.
pub fn cross_entropy(logits: &Tensor, labels: &[LabelMap]) -> Result<f64> {
    let (h, w) = batch_hw(labels.iter().map(|l| (l.height(), l.width())))?;
    check_batch(logits, labels.len(), h, w, "cross entropy")?;
    let k = logits.dims().c;
    for l in labels {
        l.validate(k)?;
    }
    let mut sum = 0.0f64;
    let mut count = 0usize;
    let mut column = vec![0.0f64; k];
    for (n, l) in labels.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                let t = l.get(y, x);
                if l.is_ignored(t) {
                    continue;
                }
                for (c, v) in column.iter_mut().enumerate() {
                    *v = logits.at(n, c, y, x) as f64;
                }
                let m = column.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = column.iter().map(|v| (v - m).exp()).sum::<f64>().ln() + m;
                sum += lse - column[t as usize];
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Undefined("every pixel is ignored; cross entropy has no mean".into()));
    }
    Ok(sum / count as f64)
}

fn check_boundary(logits: &Tensor, gt: &[BoundaryMap], what: &str) -> Result<(usize, usize)> {
    let (h, w) = batch_hw(gt.iter().map(|g| (g.height(), g.width())))?;
    check_batch(logits, gt.len(), h, w, what)?;
    if logits.dims().c != 1 {
        return Err(shape(format!("{what}: boundary logits need one channel, got {}", logits.dims().c)));
    }
    Ok((h, w))
}

/// Mean binary cross entropy between `logistic(logits)` and `gt`.
///
/// Uses `max(x, 0) − x·g + ln(1 + e^(−|x|))`. Because `g` is binary the
/// first two terms reduce to `max(x, 0)` or `max(−x, 0)`.
pub fn bce_loss(logits: &Tensor, gt: &[BoundaryMap]) -> Result<f64> {
    check_boundary(logits, gt, "bce")?;
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for (n, g) in gt.iter().enumerate() {
        for (&x, &t) in logits.plane(n, 0).iter().zip(g.data()) {
            let x = x as f64;
            let linear = if t == 1 { (-x).max(0.0) } else { x.max(0.0) };
            sum += linear + (-x.abs()).exp().ln_1p();
            count += 1;
        }
    }
    Ok(sum / count as f64)
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `1 − (2Σpg + ε) / (Σp² + Σg² + ε)` per item, averaged over the batch.
pub fn dice_loss(logits: &Tensor, gt: &[BoundaryMap]) -> Result<f64> {
    check_boundary(logits, gt, "dice")?;
    let mut total = 0.0f64;
    for (n, g) in gt.iter().enumerate() {
        let (mut inter, mut pp, mut gg) = (0.0f64, 0.0f64, 0.0f64);
        for (&x, &t) in logits.plane(n, 0).iter().zip(g.data()) {
            let p = logistic(x as f64);
            let t = t as f64;
            inter += p * t;
            pp += p * p;
            gg += t * t;
        }
        total += 1.0 - (2.0 * inter + DICE_EPS) / (pp + gg + DICE_EPS);
    }
    Ok(total / gt.len() as f64)
}

/// `seg + λ_aux·aux + λ_boundary·(bce + dice)`.
pub fn total_loss(
    outputs: &ForwardOutputs,
    labels: &[LabelMap],
    boundary: &[BoundaryMap],
    weights: LossWeights,
) -> Result<LossBreakdown> {
    weights.validate()?;
    let seg = cross_entropy(&outputs.seg_logits, labels)?;
    let aux = cross_entropy(&outputs.aux_seg_logits, labels)?;
    let bce = bce_loss(&outputs.boundary_logits, boundary)?;
    let dice = dice_loss(&outputs.boundary_logits, boundary)?;
    let total = seg + weights.aux * aux + weights.boundary * (bce + dice);
    Ok(LossBreakdown { seg, aux, bce, dice, total })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_logits_give_log_k() {
        let logits = Tensor::zeros([1, 19, 2, 3]);
        let labels = LabelMap::from_fn(2, 3, None, |y, x| (y * 3 + x) as u16);
        let l = cross_entropy(&logits, &[labels]).unwrap();
        assert!((l - 19f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn fully_ignored_is_undefined() {
        let labels = LabelMap::uniform(2, 2, 255);
        let err = cross_entropy(&Tensor::zeros([1, 3, 2, 2]), &[labels]).unwrap_err();
        assert!(matches!(err, Error::Undefined(_)));
    }

    #[test]
    fn out_of_range_label_rejected() {
        let labels = LabelMap::uniform(1, 1, 3);
        assert!(cross_entropy(&Tensor::zeros([1, 3, 1, 1]), &[labels]).is_err());
    }

    #[test]
    fn zero_logits_bce_is_ln2() {
        let g = BoundaryMap::from_fn(3, 3, |y, x| (x + y) % 2 == 0);
        let l = bce_loss(&Tensor::zeros([1, 1, 3, 3]), &[g]).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dice_all_miss() {
        let g = BoundaryMap::from_fn(10, 10, |_, _| true);
        let l = dice_loss(&Tensor::full([1, 1, 10, 10], -40.0), &[g]).unwrap();
        assert!((l - (1.0 - 1.0 / 101.0)).abs() < 1e-9);
    }

    #[test]
    fn weights_must_be_non_negative() {
        assert!(LossWeights::new(-0.1, 0.1).is_err());
        assert!(LossWeights::new(0.0, f64::NAN).is_err());
        assert_eq!(LossWeights::default(), LossWeights::new(0.2, 0.1).unwrap());
    }
}
