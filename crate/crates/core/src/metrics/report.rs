use super::{ConfusionMatrix, MetricsReport};
use crate::error::Result;

pub const METRICS_HEADER: [&str; 11] = [
    "model",
    "task",
    "precision",
    "recall",
    "f1",
    "accuracy",
    "precision_3dp",
    "recall_3dp",
    "f1_3dp",
    "accuracy_3dp",
    "averaging",
];

/// Round half-up to 3 decimal places.
pub fn round3(x: f64) -> f64 {
    (x * 1000.0 + 0.5).floor() / 1000.0
}

fn display(x: f64) -> String {
    format!("{:.3}", round3(x))
}

/// Metrics CSV: one `macro` row, a `positive:<class>` row when a positive
/// class is given, then one `class:<name>` row per class. Values appear at
/// full precision followed by their 3-decimal display form.
pub fn metrics_csv(
    model: &str,
    task: &str,
    report: &MetricsReport,
    positive: Option<usize>,
) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_HEADER)?;
    let mut row = |values: [f64; 4], averaging: String| -> Result<()> {
        let mut rec = vec![model.to_string(), task.to_string()];
        rec.extend(values.iter().map(|v| v.to_string()));
        rec.extend(values.iter().map(|&v| display(v)));
        rec.push(averaging);
        w.write_record(rec)?;
        Ok(())
    };
    row(
        [report.precision, report.recall, report.f_measure, report.accuracy],
        "macro".into(),
    )?;
    if let Some(c) = positive.and_then(|p| report.per_class.get(p)) {
        row(
            [c.precision, c.recall, c.f_measure, report.accuracy],
            format!("positive:{}", c.class),
        )?;
    }
    for c in &report.per_class {
        row(
            [c.precision, c.recall, c.f_measure, c.accuracy],
            format!("class:{}", c.class),
        )?;
    }
    finish(w)
}

/// First row: an empty corner cell then the predicted class names; each
/// following row: the true class name then its counts.
pub fn confusion_csv(cm: &ConfusionMatrix) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec![String::new()];
    header.extend(cm.classes().iter().cloned());
    w.write_record(&header)?;
    for (t, name) in cm.classes().iter().enumerate() {
        let mut rec = vec![name.clone()];
        rec.extend(cm.row(t).iter().map(u64::to_string));
        w.write_record(&rec)?;
    }
    finish(w)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w
        .into_inner()
        .map_err(|e| crate::error::Error::Input(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::classification_metrics;

    fn cm() -> ConfusionMatrix {
        ConfusionMatrix::from_counts(
            vec![vec![8, 2], vec![1, 9]],
            vec!["covid".into(), "non_covid".into()],
        )
        .unwrap()
    }

    #[test]
    fn rounding() {
        assert_eq!(round3(0.8899), 0.89);
        assert_eq!(round3(0.9115), 0.912);
        assert_eq!(display(0.88988), "0.890");
        assert_eq!(display(1.0), "1.000");
    }

    #[test]
    fn confusion_layout() {
        let text = confusion_csv(&cm()).unwrap();
        assert_eq!(text, ",covid,non_covid\ncovid,8,2\nnon_covid,1,9\n");
    }

    #[test]
    fn metrics_layout() {
        let report = classification_metrics(&cm()).unwrap();
        let text = metrics_csv("vgg16", "binary", &report, Some(0)).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], METRICS_HEADER.join(","));
        assert!(lines[0].starts_with("model,task,precision,recall,f1,accuracy"));
        assert_eq!(lines.len(), 5);
        assert!(lines[1].ends_with(",macro"));
        assert!(lines[2].starts_with("vgg16,binary,0.8888888888888888,0.8,"));
        assert!(
            lines[2].ends_with("0.889,0.800,0.842,0.850,positive:covid"),
            "{}",
            lines[2]
        );
        assert!(lines[4].ends_with("class:non_covid"));
    }
}
