//! Pixel-level evaluation: dataset-aggregated IoU, per-sample-averaged nIoU,
//! and per-image F1, all from integer pixel counts at threshold 0.5.
//!
//! Per-sample conventions (the definitions are silent on these): an
//! empty-target/empty-prediction sample scores 1 for nIoU and F1 (correct
//! rejection); any other zero denominator scores 0.

use samamba_tensor::{Element, Tensor};

/// Per-sample pixel counts: true positives, target pixels, predicted pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleCounts {
    pub tp: u64,
    pub t: u64,
    pub p: u64,
}

impl SampleCounts {
    pub fn from_masks(pred: &[u8], target: &[u8]) -> Self {
        debug_assert_eq!(pred.len(), target.len());
        let mut counts = SampleCounts { tp: 0, t: 0, p: 0 };
        for (&pv, &tv) in pred.iter().zip(target) {
            let pv = pv != 0;
            let tv = tv != 0;
            counts.p += pv as u64;
            counts.t += tv as u64;
            counts.tp += (pv && tv) as u64;
        }
        counts
    }

    pub fn iou(&self) -> f64 {
        let denom = self.t + self.p - self.tp;
        if denom == 0 {
            1.0 // both masks empty
        } else {
            self.tp as f64 / denom as f64
        }
    }

    pub fn f1(&self) -> f64 {
        if self.t + self.p == 0 {
            1.0
        } else {
            2.0 * self.tp as f64 / (self.t + self.p) as f64
        }
    }
}

/// Accumulates per-sample counts; merge is associative and order-independent
/// for the aggregate metrics.
#[derive(Debug, Default, Clone)]
pub struct EvalAccumulator {
    samples: Vec<SampleCounts>,
}

impl EvalAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, counts: SampleCounts) {
        debug_assert!(counts.tp <= counts.t.min(counts.p));
        self.samples.push(counts);
    }

    pub fn push_masks(&mut self, pred: &[u8], target: &[u8]) {
        self.push(SampleCounts::from_masks(pred, target));
    }

    pub fn merge(&mut self, other: &EvalAccumulator) {
        self.samples.extend_from_slice(&other.samples);
    }

    pub fn n_samples(&self) -> usize {
        self.samples.len()
    }

    /// Dataset-aggregated IoU: sum TP / sum (T + P - TP).
    pub fn dataset_iou(&self) -> f64 {
        let tp: u64 = self.samples.iter().map(|s| s.tp).sum();
        let denom: u64 = self.samples.iter().map(|s| s.t + s.p - s.tp).sum();
        if denom == 0 {
            log::warn!("dataset_iou: all masks empty, IoU defined as 1");
            1.0
        } else {
            tp as f64 / denom as f64
        }
    }

    /// Mean of per-sample IoU.
    pub fn niou(&self) -> f64 {
        if self.samples.is_empty() {
            return 1.0;
        }
        self.samples.iter().map(SampleCounts::iou).sum::<f64>() / self.samples.len() as f64
    }

    /// Mean of per-sample F1 (harmonic mean of precision and recall).
    pub fn f1(&self) -> f64 {
        if self.samples.is_empty() {
            return 1.0;
        }
        self.samples.iter().map(SampleCounts::f1).sum::<f64>() / self.samples.len() as f64
    }

    /// Delimited text table.
    pub fn report_table(&self) -> String {
        format!(
            "metric\tvalue\niou\t{:.6}\nniou\t{:.6}\nf1\t{:.6}\nn_samples\t{}\n",
            self.dataset_iou(),
            self.niou(),
            self.f1(),
            self.n_samples()
        )
    }

    /// Machine-readable key/value lines.
    pub fn report_kv(&self) -> String {
        format!(
            "iou = {:.17e}\nniou = {:.17e}\nf1 = {:.17e}\nn_samples = {}\n",
            self.dataset_iou(),
            self.niou(),
            self.f1(),
            self.n_samples()
        )
    }
}

/// Threshold 0.5 on sigmoid probabilities, i.e. logit > 0.
pub fn binarize_logits<E: Element>(logits: &Tensor<E>) -> Vec<u8> {
    logits
        .data()
        .iter()
        .map(|&z| (z > E::zero()) as u8)
        .collect()
}
