use std::collections::BTreeMap;
use std::path::Path;

use robcred::GroupSample;

use crate::CliError;

/// One row of the claims file.
#[derive(Debug, Clone, PartialEq)]
pub struct ClaimsRecord {
    pub group: String,
    pub loss: f64,
}

fn data(msg: String) -> CliError {
    CliError::Data(msg)
}

/// Reads `group_col` and `loss_col` from a headed, comma-separated file.
pub fn read_records(path: &Path, group_col: &str, loss_col: &str) -> Result<Vec<ClaimsRecord>, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| data(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| data(format!("{}: {e}", path.display())))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| data(format!("{}: no column named `{name}`", path.display())))
    };
    let (gi, li) = (column(group_col)?, column(loss_col)?);

    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| data(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(0, |p| p.line());
        let group = rec.get(gi).unwrap_or("").to_string();
        if group.is_empty() {
            return Err(data(format!("{}: line {line}: empty group label", path.display())));
        }
        let raw = rec.get(li).unwrap_or("");
        let loss: f64 = raw
            .parse()
            .map_err(|_| data(format!("{}: line {line}: loss `{raw}` is not a number", path.display())))?;
        if !(loss > 0.0 && loss.is_finite()) {
            return Err(data(format!("{}: line {line}: loss must be positive, got {raw}", path.display())));
        }
        out.push(ClaimsRecord { group, loss });
    }
    Ok(out)
}

/// Groups records by label, in label order.
pub fn into_groups(records: Vec<ClaimsRecord>) -> Result<Vec<GroupSample>, CliError> {
    let mut by: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in records {
        by.entry(r.group).or_default().push(r.loss);
    }
    if by.len() < 2 {
        return Err(data(format!("need at least 2 groups, found {}", by.len())));
    }
    by.into_iter()
        .map(|(id, xs)| GroupSample::new(id, xs).map_err(CliError::from))
        .collect()
}
