use std::fmt::Write;

use super::EnsembleError;
use crate::data::Label;
use crate::util::round2;

/// Confusion counts with ABNORMAL as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn add(&mut self, truth: Label, pred: Label) {
        match (truth, pred) {
            (Label::Abnormal, Label::Abnormal) => self.tp += 1,
            (Label::Normal, Label::Normal) => self.tn += 1,
            (Label::Normal, Label::Abnormal) => self.fp += 1,
            (Label::Abnormal, Label::Normal) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Percentages, unrounded. Fields that need both classes are `None` when
/// one class is absent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub confusion: Confusion,
    pub accuracy: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub macc: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

pub const CSV_HEADER: &str = "classifier,features,acc,sens,spec,macc";

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{:.2}", round2(x))).unwrap_or_else(|| "NA".into())
}

impl EvalReport {
    pub fn from_confusion(c: Confusion) -> Result<Self, EnsembleError> {
        let total = c.total();
        if total == 0 {
            return Err(EnsembleError::Config("cannot evaluate an empty prediction list".into()));
        }
        let sensitivity = ratio(c.tp, c.tp + c.fn_);
        let specificity = ratio(c.tn, c.tn + c.fp);
        let macc = sensitivity.zip(specificity).map(|(s, p)| (s + p) / 2.0);
        if macc.is_none() {
            log::warn!("only one class present; sensitivity, specificity and MAcc are undefined where a class is missing");
        }
        Ok(EvalReport { confusion: c, accuracy: 100.0 * (c.tp + c.tn) as f64 / total as f64, sensitivity, specificity, macc })
    }

    pub fn csv_row(&self, classifier: &str, features: &str) -> String {
        format!(
            "{classifier},{features},{},{},{},{}",
            cell(Some(self.accuracy)),
            cell(self.sensitivity),
            cell(self.specificity),
            cell(self.macc)
        )
    }

    pub fn to_csv(&self, classifier: &str, features: &str) -> String {
        format!("{CSV_HEADER}\n{}\n", self.csv_row(classifier, features))
    }

    pub fn to_text(&self, classifier: &str, features: &str) -> String {
        let undefined = |v: Option<f64>, why: &str| match v {
            Some(x) => format!("{:.2} %", round2(x)),
            None => format!("undefined ({why})"),
        };
        let c = &self.confusion;
        let mut s = String::new();
        let _ = writeln!(s, "classifier   {classifier}");
        let _ = writeln!(s, "features     {features}");
        let _ = writeln!(s, "beats        {}", c.total());
        let _ = writeln!(s, "accuracy     {:.2} %", round2(self.accuracy));
        let _ = writeln!(s, "sensitivity  {}", undefined(self.sensitivity, "no abnormal beats"));
        let _ = writeln!(s, "specificity  {}", undefined(self.specificity, "no normal beats"));
        let _ = writeln!(s, "macc         {}", undefined(self.macc, "needs both classes"));
        let _ = writeln!(s);
        let _ = writeln!(s, "confusion (positive = abnormal)");
        let _ = writeln!(s, "                 pred abnormal  pred normal");
        let _ = writeln!(s, "true abnormal    {:>13}  {:>11}", c.tp, c.fn_);
        let _ = writeln!(s, "true normal      {:>13}  {:>11}", c.fp, c.tn);
        s
    }

    pub fn confusion_csv(&self) -> String {
        let c = &self.confusion;
        format!("tp,tn,fp,fn\n{},{},{},{}\n", c.tp, c.tn, c.fp, c.fn_)
    }
}

/// Folds `(truth, prediction)` pairs into a report.
pub fn evaluate(predictions: &[(Label, Label)]) -> Result<EvalReport, EnsembleError> {
    let mut c = Confusion::default();
    for &(t, p) in predictions {
        c.add(t, p);
    }
    EvalReport::from_confusion(c)
}
