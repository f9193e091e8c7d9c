//! Per-run certificates: each lemma conclusion is recorded with its required
//! bound, the measured value, and the verdict.

use serde::Serialize;
use serde_json::Value;

#[derive(Clone, Debug, Serialize)]
pub struct ConclusionCheck {
    pub name: String,
    pub required: f64,
    pub measured: f64,
    /// ">" means measured must exceed required, "<" the reverse.
    pub cmp: String,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DeformationCertificate {
    pub lemma: String,
    pub conclusions: Vec<ConclusionCheck>,
    pub params: Value,
    pub retries: usize,
    pub samples: usize,
    pub notes: Vec<String>,
}

impl DeformationCertificate {
    pub fn new(lemma: &str, params: Value) -> Self {
        DeformationCertificate {
            lemma: lemma.to_string(),
            conclusions: vec![],
            params,
            retries: 0,
            samples: 0,
            notes: vec![],
        }
    }

    pub fn require_above(&mut self, name: &str, measured: f64, required: f64) -> bool {
        let pass = measured > required;
        self.conclusions.push(ConclusionCheck {
            name: name.to_string(),
            required,
            measured,
            cmp: ">".to_string(),
            pass,
        });
        pass
    }

    pub fn require_below(&mut self, name: &str, measured: f64, required: f64) -> bool {
        let pass = measured < required;
        self.conclusions.push(ConclusionCheck {
            name: name.to_string(),
            required,
            measured,
            cmp: "<".to_string(),
            pass,
        });
        pass
    }

    pub fn require_true(&mut self, name: &str, ok: bool) -> bool {
        self.conclusions.push(ConclusionCheck {
            name: name.to_string(),
            required: 1.0,
            measured: if ok { 1.0 } else { 0.0 },
            cmp: ">".to_string(),
            pass: ok,
        });
        ok
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    pub fn all_pass(&self) -> bool {
        self.conclusions.iter().all(|c| c.pass)
    }

    pub fn find(&self, name: &str) -> Option<&ConclusionCheck> {
        self.conclusions.iter().find(|c| c.name == name)
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).unwrap_or(Value::Null)
    }
}
