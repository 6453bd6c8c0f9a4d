//! CSV and JSON serialization for epoch and metrics reports.

use std::fmt::Write as _;

use serde::Serialize;

use sednet_core::metrics::MetricsReport;
use sednet_core::trainer::EpochReport;

pub fn epochs_csv(reports: &[EpochReport]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,dice_ntc,dice_ed,dice_et,lr\n");
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.epoch, r.train_loss, r.val_loss, r.val_dice[0], r.val_dice[1], r.val_dice[2], r.lr
        )
        .expect("string write");
    }
    out
}

pub fn metrics_csv(split: &str, report: &MetricsReport) -> String {
    let mut out = String::from("split,class,dice,hausdorff,n_slices,n_hd_undefined\n");
    for c in &report.classes {
        let hd = c.hausdorff.map_or(String::new(), |v| v.to_string());
        writeln!(
            out,
            "{split},{},{},{hd},{},{}",
            c.class, c.dice, c.n_slices, c.n_hd_undefined
        )
        .expect("string write");
    }
    out
}

#[derive(Serialize)]
struct SplitMetrics<'a> {
    split: &'a str,
    #[serde(flatten)]
    report: &'a MetricsReport,
}

pub fn metrics_json(split: &str, report: &MetricsReport) -> serde_json::Result<String> {
    serde_json::to_string_pretty(&SplitMetrics { split, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use sednet_core::metrics::ClassMetrics;

    #[test]
    fn epoch_rows_are_stable_text() {
        let reports = vec![EpochReport {
            epoch: 1,
            train_loss: 0.5,
            val_loss: 0.25,
            val_dice: [0.5, 0.625, 0.75],
            lr: 3e-4,
        }];
        let csv = epochs_csv(&reports);
        assert_eq!(
            csv,
            "epoch,train_loss,val_loss,dice_ntc,dice_ed,dice_et,lr\n1,0.5,0.25,0.5,0.625,0.75,0.0003\n"
        );
    }

    #[test]
    fn undefined_hausdorff_is_an_empty_field() {
        let report = MetricsReport {
            classes: vec![ClassMetrics {
                class: "ntc".into(),
                dice: 0.5,
                hausdorff: None,
                n_slices: 4,
                n_hd_undefined: 4,
            }],
        };
        let csv = metrics_csv("val", &report);
        assert!(csv.contains("val,ntc,0.5,,4,4\n"), "{csv}");
    }
}
