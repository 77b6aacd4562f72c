use serde::{Deserialize, Serialize};

/// A tolerance together with where its value comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub name: String,
    pub value: f64,
    pub provenance: String,
}

impl Tolerance {
    pub fn new(name: &str, value: f64, provenance: &str) -> Self {
        Self {
            name: name.into(),
            value,
            provenance: provenance.into(),
        }
    }
}

/// Replay data embedded in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub kind: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub path_range: [u64; 2],
    pub n_paths: u64,
    pub dt: f64,
    pub modes: Vec<usize>,
    pub tolerances: Vec<Tolerance>,
}

impl ReportHeader {
    pub fn to_text(&self) -> String {
        let mut rows = vec![
            vec!["report".to_string(), self.kind.clone()],
            vec!["config_hash".into(), self.config_hash.clone()],
            vec!["master_seed".into(), self.master_seed.to_string()],
            vec![
                "paths".into(),
                format!("[{}, {}) n={}", self.path_range[0], self.path_range[1], self.n_paths),
            ],
            vec!["dt".into(), format!("{:e}", self.dt)],
            vec!["modes".into(), format!("{:?}", self.modes)],
        ];
        for t in &self.tolerances {
            rows.push(vec![format!("tol.{}", t.name), format!("{:e} ({})", t.value, t.provenance)]);
        }
        render_table(&rows)
    }
}

/// Left-aligned columns separated by two spaces.
pub fn render_table(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<width$}", width = widths[c]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

pub(crate) fn verdict(pass: bool) -> String {
    if pass { "PASS" } else { "FAIL" }.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_alignment() {
        let t = render_table(&[vec!["a".into(), "bb".into()], vec!["ccc".into(), "d".into()]]);
        assert_eq!(t, "a    bb\nccc  d\n");
    }
}
