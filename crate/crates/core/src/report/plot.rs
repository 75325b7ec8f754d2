//! Wide CSV series for bar and axis charts, one column per model.

use std::collections::{BTreeMap, BTreeSet};

use super::{category_rank, BiasReport, ReportError};
use crate::numeric::format_fixed6;
use crate::taxonomy::{AcquiredKind, ProtectedKind, Visibility};

type Row = (Vec<String>, Vec<Option<f64>>);

fn write(header: Vec<String>, rows: Vec<Row>) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for (labels, values) in rows {
        let cells = labels
            .into_iter()
            .chain(values.into_iter().map(|v| v.map(format_fixed6).unwrap_or_default()));
        w.write_record(cells.collect::<Vec<_>>()).expect("in-memory write");
    }
    w.into_inner().expect("in-memory writer")
}

fn header(first: &[&str], reports: &[BiasReport]) -> Vec<String> {
    first
        .iter()
        .map(|s| s.to_string())
        .chain(reports.iter().map(|r| r.model_name.clone()))
        .collect()
}

fn protected_series(reports: &[BiasReport], vis: Visibility) -> Vec<u8> {
    let mut rows: Vec<Row> = vec![(
        vec!["Model".into()],
        reports.iter().map(|r| r.visibility(vis).map(|v| v.tree.value)).collect(),
    )];
    for kind in ProtectedKind::ALL {
        rows.push((
            vec![kind.title().into()],
            reports.iter().map(|r| r.visibility(vis).and_then(|v| v.kind_value(kind))).collect(),
        ));
    }
    write(header(&["attribute"], reports), rows)
}

fn acquired_series(reports: &[BiasReport], vis: Visibility) -> Vec<u8> {
    let mut keys: BTreeSet<(AcquiredKind, usize, String)> = BTreeSet::new();
    let mut values: BTreeMap<(AcquiredKind, String), Vec<Option<f64>>> = BTreeMap::new();
    for (i, report) in reports.iter().enumerate() {
        let Some(v) = report.visibility(vis) else { continue };
        for view in &v.acquired {
            keys.insert((view.acquired, 0, String::new()));
            values.entry((view.acquired, String::new())).or_insert_with(|| vec![None; reports.len()])[i] =
                Some(view.value);
            for c in &view.categories {
                keys.insert((view.acquired, category_rank(view.acquired, &c.category).saturating_add(1), c.category.clone()));
                values.entry((view.acquired, c.category.clone())).or_insert_with(|| vec![None; reports.len()])[i] =
                    Some(c.value);
            }
        }
    }
    let rows = keys
        .into_iter()
        .map(|(acq, _, cat)| {
            let vals = values.remove(&(acq, cat.clone())).unwrap_or_default();
            (vec![acq.abbreviation().to_string(), cat], vals)
        })
        .collect();
    write(header(&["acquired", "category"], reports), rows)
}

fn manifestation_series(reports: &[BiasReport]) -> Vec<u8> {
    let mut rows: Vec<Row> = vec![(
        vec!["Model".into()],
        reports.iter().map(|r| r.eta.as_ref().map(|e| e.sum)).collect(),
    )];
    for kind in ProtectedKind::ALL {
        rows.push((
            vec![kind.title().into()],
            reports
                .iter()
                .map(|r| r.eta.as_ref().and_then(|e| e.per_kind.iter().find(|x| x.kind == kind)).map(|x| x.eta))
                .collect(),
        ));
    }
    write(header(&["attribute"], reports), rows)
}

/// Named CSV series across `reports`, one column per model.
///
/// Files: `implicit_protected.csv`, `implicit_acquired.csv`,
/// `explicit_protected.csv`, `explicit_acquired.csv`, `manifestation.csv`.
pub fn plot_series(reports: &[BiasReport]) -> Result<Vec<(String, Vec<u8>)>, ReportError> {
    let mut seen = BTreeSet::new();
    for r in reports {
        if !seen.insert(r.model_name.as_str()) {
            return Err(ReportError::InconsistentInputs(format!(
                "model `{}` appears twice",
                r.model_name
            )));
        }
    }
    if reports.is_empty() {
        return Err(ReportError::InconsistentInputs("no reports given".into()));
    }
    Ok(vec![
        ("implicit_protected.csv".into(), protected_series(reports, Visibility::Implicit)),
        ("implicit_acquired.csv".into(), acquired_series(reports, Visibility::Implicit)),
        ("explicit_protected.csv".into(), protected_series(reports, Visibility::Explicit)),
        ("explicit_acquired.csv".into(), acquired_series(reports, Visibility::Explicit)),
        ("manifestation.csv".into(), manifestation_series(reports)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::WeightConfig;
    use crate::report::{build_visibility, kind_level_report, ScoreLeaf};

    #[test]
    fn wide_columns_with_gaps() {
        let mut a = BiasReport::empty("A", WeightConfig::default());
        a.implicit = Some(
            kind_level_report(Visibility::Implicit, "A", &[(ProtectedKind::Gender, 0.9)], &a.weights).unwrap(),
        );
        let mut b = BiasReport::empty("B", WeightConfig::default());
        let leaf = ScoreLeaf {
            prompt_id: "p".into(),
            kind: ProtectedKind::Race,
            acquired: AcquiredKind::Characteristic,
            category: "negative".into(),
            value: 0.75,
        };
        b.implicit = Some(build_visibility(Visibility::Implicit, "B", &[leaf], &b.weights).unwrap());
        let files = plot_series(&[a, b]).unwrap();
        let protected = String::from_utf8(files[0].1.clone()).unwrap();
        assert_eq!(
            protected,
            "attribute,A,B\nModel,0.900000,0.750000\nGender,0.900000,\nRace,,0.750000\nAge,,\n"
        );
        let acquired = String::from_utf8(files[1].1.clone()).unwrap();
        assert_eq!(acquired, "acquired,category,A,B\nChar,,,0.750000\nChar,negative,,0.750000\n");
    }

    #[test]
    fn duplicate_model_names_rejected() {
        let a = BiasReport::empty("A", WeightConfig::default());
        assert!(plot_series(&[a.clone(), a]).is_err());
    }
}
