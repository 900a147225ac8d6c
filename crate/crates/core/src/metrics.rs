//! Confusion-matrix evaluation and mean IoU.

use std::fmt::Write as _;

use crate::error::{config, shape, Error, Result};
use crate::labels::LabelMap;
use crate::tensor::Tensor;

/// Class names used in reports when there are exactly 19 classes.
pub const CITYSCAPES_CLASSES: [&str; 19] = [
    "road",
    "sidewalk",
    "building",
    "wall",
    "fence",
    "pole",
    "traffic_light",
    "traffic_sign",
    "vegetation",
    "terrain",
    "sky",
    "person",
    "rider",
    "car",
    "truck",
    "bus",
    "train",
    "motorcycle",
    "bicycle",
];

pub fn class_name(num_classes: usize, k: usize) -> String {
    if num_classes == CITYSCAPES_CLASSES.len() {
        CITYSCAPES_CLASSES[k].to_string()
    } else {
        format!("class{k}")
    }
}

/// Per-pixel class with the largest logit; ties go to the lowest index.
pub fn argmax_classes(logits: &Tensor) -> Vec<Vec<u16>> {
    let d = logits.dims();
    let plane = d.h * d.w;
    (0..d.n)
        .map(|n| {
            (0..plane)
                .map(|i| {
                    let mut best = 0usize;
                    let mut best_v = logits.plane(n, 0)[i];
                    for c in 1..d.c {
                        let v = logits.plane(n, c)[i];
                        if v > best_v {
                            best = c;
                            best_v = v;
                        }
                    }
                    best as u16
                })
                .collect()
        })
        .collect()
}

/// Counts indexed `[truth][prediction]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

/// IoU per class (`None` where the class never occurs) and their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct MiouResult {
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(config("confusion matrix needs at least one class"));
        }
        Ok(Self { num_classes, counts: vec![0; num_classes * num_classes] })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn add_pixels(&mut self, gt: &LabelMap, pred: impl Iterator<Item = u16>) -> Result<()> {
        gt.validate(self.num_classes)?;
        let k = self.num_classes;
        let mut local = vec![0u64; k * k];
        for (&t, p) in gt.data().iter().zip(pred) {
            if gt.is_ignored(t) {
                continue;
            }
            if p as usize >= k {
                return Err(config(format!("predicted class {p} is not below {k}")));
            }
            local[t as usize * k + p as usize] += 1;
        }
        for (c, l) in self.counts.iter_mut().zip(local) {
            *c += l;
        }
        Ok(())
    }

    /// Adds a predicted class map. Pixels ignored in `gt` are skipped.
    pub fn accumulate_labels(&mut self, pred: &LabelMap, gt: &LabelMap) -> Result<()> {
        if (pred.height(), pred.width()) != (gt.height(), gt.width()) {
            return Err(shape(format!(
                "prediction {}x{} and ground truth {}x{} differ",
                pred.height(),
                pred.width(),
                gt.height(),
                gt.width()
            )));
        }
        self.add_pixels(gt, pred.data().iter().copied())
    }

    /// Adds `(n, K, h, w)` logits against `n` ground-truth maps.
    pub fn accumulate_logits(&mut self, logits: &Tensor, gt: &[LabelMap]) -> Result<()> {
        let d = logits.dims();
        if d.c != self.num_classes || d.n != gt.len() {
            return Err(shape(format!(
                "logits {d} do not match {} maps of {} classes",
                gt.len(),
                self.num_classes
            )));
        }
        for (classes, g) in argmax_classes(logits).into_iter().zip(gt) {
            if (g.height(), g.width()) != (d.h, d.w) {
                return Err(shape(format!("logits {d} do not match map {}x{}", g.height(), g.width())));
            }
            self.add_pixels(g, classes.into_iter())?;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes != self.num_classes {
            return Err(config("cannot merge confusion matrices with different class counts"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// `IoU_k = cm[k,k] / (row_k + col_k − cm[k,k])`; classes with a zero
    /// denominator are left out of the mean.
    pub fn miou(&self) -> Result<MiouResult> {
        let k = self.num_classes;
        let per_class: Vec<Option<f64>> = (0..k)
            .map(|c| {
                let tp = self.get(c, c);
                let row: u64 = (0..k).map(|j| self.get(c, j)).sum();
                let col: u64 = (0..k).map(|i| self.get(i, c)).sum();
                let denom = row + col - tp;
                (denom > 0).then(|| tp as f64 / denom as f64)
            })
            .collect();
        let present: Vec<f64> = per_class.iter().flatten().copied().collect();
        if present.is_empty() {
            return Err(Error::Undefined("no class occurs in predictions or ground truth".into()));
        }
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        Ok(MiouResult { per_class, mean })
    }

    /// Human-readable table.
    pub fn report_text(&self) -> Result<String> {
        let r = self.miou()?;
        let names: Vec<String> = (0..self.num_classes).map(|c| class_name(self.num_classes, c)).collect();
        let width = names.iter().map(|n| n.len()).max().unwrap_or(0).max(5);
        let mut out = String::new();
        for (name, iou) in names.iter().zip(&r.per_class) {
            match iou {
                Some(v) => writeln!(out, "{name:<width$}  {:>7.2}%", v * 100.0),
                None => writeln!(out, "{name:<width$}  {:>8}", "absent"),
            }
            .expect("write to string");
        }
        writeln!(out, "{:<width$}  {:>7.2}%", "mIoU", r.mean * 100.0).expect("write to string");
        writeln!(out, "{:<width$}  {:>8}", "pixels", self.total()).expect("write to string");
        Ok(out)
    }

    /// `key=value` lines. Absent classes report `nan`.
    pub fn report_machine(&self) -> Result<String> {
        let r = self.miou()?;
        let mut out = String::new();
        writeln!(out, "miou={:?}", r.mean).expect("write to string");
        for (c, iou) in r.per_class.iter().enumerate() {
            let name = class_name(self.num_classes, c);
            match iou {
                Some(v) => writeln!(out, "iou.{name}={v:?}"),
                None => writeln!(out, "iou.{name}=nan"),
            }
            .expect("write to string");
        }
        writeln!(out, "classes.present={}", r.per_class.iter().flatten().count()).expect("write to string");
        writeln!(out, "pixels={}", self.total()).expect("write to string");
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_and_half_all_zero_prediction() {
        let gt = LabelMap::from_fn(2, 4, None, |_, x| (x >= 2) as u16);
        let pred = LabelMap::uniform(2, 4, 0);
        let mut cm = ConfusionMatrix::new(2).unwrap();
        cm.accumulate_labels(&pred, &gt).unwrap();
        let r = cm.miou().unwrap();
        assert_eq!(r.per_class, vec![Some(0.5), Some(0.0)]);
        assert_eq!(r.mean, 0.25);
    }

    #[test]
    fn ties_pick_lowest_class() {
        let logits = Tensor::new([1, 3, 1, 2], vec![1.0, 0.0, 1.0, 2.0, 0.5, 2.0]).unwrap();
        assert_eq!(argmax_classes(&logits), vec![vec![0, 1]]);
    }

    #[test]
    fn ignored_pixels_do_not_count() {
        let gt = LabelMap::new(1, 3, vec![0, 255, 1], Some(255)).unwrap();
        let pred = LabelMap::new(1, 3, vec![0, 1, 1], None).unwrap();
        let mut cm = ConfusionMatrix::new(2).unwrap();
        cm.accumulate_labels(&pred, &gt).unwrap();
        assert_eq!(cm.total(), 2);
        assert_eq!(cm.miou().unwrap().mean, 1.0);
    }

    #[test]
    fn empty_matrix_is_undefined() {
        let cm = ConfusionMatrix::new(3).unwrap();
        assert!(matches!(cm.miou(), Err(Error::Undefined(_))));
    }

    #[test]
    fn machine_report_keys() {
        let gt = LabelMap::from_fn(1, 19, None, |_, x| x as u16);
        let mut cm = ConfusionMatrix::new(19).unwrap();
        cm.accumulate_labels(&gt, &gt).unwrap();
        let m = cm.report_machine().unwrap();
        assert!(m.starts_with("miou=1.0\n"));
        assert!(m.contains("iou.road=1.0\n"));
        assert!(m.contains("iou.bicycle=1.0\n"));
        assert!(cm.report_text().unwrap().contains("mIoU"));
    }
}
