use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{DivisionId, Outcome};
use crate::error::{Error, Result};

/// Accuracy in percent per true class and overall. A class with no examples
/// has no accuracy.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub win: Option<f64>,
    pub draw: Option<f64>,
    pub lose: Option<f64>,
    /// Correct over all examples.
    pub avg: Option<f64>,
    /// Examples per true class, `[win, draw, lose]`.
    pub support: [usize; 3],
    pub correct: [usize; 3],
}

impl ClassAccuracy {
    fn from_counts(correct: [usize; 3], support: [usize; 3]) -> Self {
        let pct = |c: usize, n: usize| (n > 0).then(|| 100.0 * c as f64 / n as f64);
        ClassAccuracy {
            win: pct(correct[0], support[0]),
            draw: pct(correct[1], support[1]),
            lose: pct(correct[2], support[2]),
            avg: pct(correct.iter().sum(), support.iter().sum()),
            support,
            correct,
        }
    }

    pub fn examples(&self) -> usize {
        self.support.iter().sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub divisions: BTreeMap<DivisionId, ClassAccuracy>,
    pub total: ClassAccuracy,
}

pub fn per_class_accuracy(predictions: &[Outcome], labels: &[Outcome], divisions: &[DivisionId]) -> Result<AccuracyReport> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if divisions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: divisions.len(),
            right: labels.len(),
        });
    }
    let mut per: BTreeMap<DivisionId, ([usize; 3], [usize; 3])> = BTreeMap::new();
    let mut total = ([0usize; 3], [0usize; 3]);
    for ((p, l), d) in predictions.iter().zip(labels).zip(divisions) {
        let k = l.table_index();
        let entry = per.entry(d.clone()).or_default();
        entry.1[k] += 1;
        total.1[k] += 1;
        if p == l {
            entry.0[k] += 1;
            total.0[k] += 1;
        }
    }
    Ok(AccuracyReport {
        divisions: per
            .into_iter()
            .map(|(d, (c, s))| (d, ClassAccuracy::from_counts(c, s)))
            .collect(),
        total: ClassAccuracy::from_counts(total.0, total.1),
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.2}"))
}

impl AccuracyReport {
    /// Plain-text table: one row per division and a total row.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>8} {:>8} {:>8} {:>8} {:>6}", "Division", "Win", "Draw", "Lose", "Avg", "N");
        let mut row = |name: &str, a: &ClassAccuracy| {
            let _ = writeln!(
                out,
                "{:<10} {:>8} {:>8} {:>8} {:>8} {:>6}",
                name,
                cell(a.win),
                cell(a.draw),
                cell(a.lose),
                cell(a.avg),
                a.examples()
            );
        };
        for (d, a) in &self.divisions {
            row(&d.0, a);
        }
        row("Total", &self.total);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let labels = [Outcome::Win, Outcome::Draw, Outcome::Lose];
        let divs = vec![DivisionId::from("A"); 3];
        let r = per_class_accuracy(&labels, &labels, &divs).unwrap();
        assert_eq!(r.total.win, Some(100.0));
        assert_eq!(r.total.draw, Some(100.0));
        assert_eq!(r.total.lose, Some(100.0));
        assert_eq!(r.total.avg, Some(100.0));
    }

    #[test]
    fn length_mismatch() {
        let divs = vec![DivisionId::from("A")];
        assert!(matches!(
            per_class_accuracy(&[Outcome::Win], &[], &divs),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn renders_reference_row() {
        let mut r = AccuracyReport::default();
        r.total = ClassAccuracy {
            win: Some(57.96),
            draw: Some(24.53),
            lose: Some(68.25),
            avg: Some(52.19),
            support: [177, 80, 132],
            correct: [0; 3],
        };
        let text = r.render();
        let total = text.lines().last().unwrap();
        assert_eq!(
            total.split_whitespace().collect::<Vec<_>>(),
            ["Total", "57.96", "24.53", "68.25", "52.19", "389"]
        );
    }
}
