//! Sectioned CSV: each table starts with a `table,<name>` marker row, then a
//! header row, then data rows. Tables are separated by a blank line.

use std::collections::BTreeMap;

use super::{
    AcquiredView, BiasReport, CategoryValue, EtaEntry, EtaReport, HallucinationTotals, ReportError, ScoreNode,
    SkippedPrompt, VisibilityReport,
};
use crate::manifestation::SignRule;
use crate::metrics::WeightConfig;
use crate::numeric::{format_exact, format_fixed6};
use crate::taxonomy::{AcquiredKind, ProtectedKind, Visibility};

const MARKER: &str = "table";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvTable {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push<S: Into<String>>(&mut self, row: impl IntoIterator<Item = S>) {
        self.rows.push(row.into_iter().map(Into::into).collect());
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CsvDocument {
    pub tables: Vec<CsvTable>,
}

impl CsvDocument {
    pub fn table(&self, name: &str) -> Option<&CsvTable> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (i, table) in self.tables.iter().enumerate() {
            if i > 0 {
                out.push(b'\n');
            }
            let mut w = csv::WriterBuilder::new()
                .flexible(true)
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            let write = |w: &mut csv::Writer<Vec<u8>>| -> csv::Result<()> {
                w.write_record([MARKER, table.name.as_str()])?;
                w.write_record(&table.header)?;
                for row in &table.rows {
                    w.write_record(row)?;
                }
                w.flush()?;
                Ok(())
            };
            write(&mut w).expect("writing to memory cannot fail");
            out.extend(w.into_inner().expect("in-memory writer"));
        }
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, ReportError> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(bytes);
        let mut tables: Vec<CsvTable> = Vec::new();
        let mut awaiting_header = false;
        for result in reader.records() {
            let record = result.map_err(|e| ReportError::MalformedCsv(e.to_string()))?;
            let fields: Vec<String> = record.iter().map(str::to_string).collect();
            if fields.len() == 2 && fields[0] == MARKER {
                if awaiting_header {
                    return Err(ReportError::MalformedCsv(format!(
                        "table `{}` has no header",
                        tables.last().map_or("", |t| t.name.as_str())
                    )));
                }
                tables.push(CsvTable {
                    name: fields[1].clone(),
                    header: Vec::new(),
                    rows: Vec::new(),
                });
                awaiting_header = true;
                continue;
            }
            let Some(table) = tables.last_mut() else {
                return Err(ReportError::MalformedCsv("data before the first table marker".into()));
            };
            if awaiting_header {
                table.header = fields;
                awaiting_header = false;
            } else {
                if fields.len() != table.header.len() {
                    return Err(ReportError::MalformedCsv(format!(
                        "table `{}`: row has {} fields, header has {}",
                        table.name,
                        fields.len(),
                        table.header.len()
                    )));
                }
                table.rows.push(fields);
            }
        }
        if awaiting_header {
            return Err(ReportError::MalformedCsv("last table has no header".into()));
        }
        Ok(Self { tables })
    }
}

fn bad(msg: impl Into<String>) -> ReportError {
    ReportError::MalformedCsv(msg.into())
}

fn number(s: &str) -> Result<f64, ReportError> {
    s.parse::<f64>().map_err(|_| bad(format!("`{s}` is not a number")))
}

fn count(s: &str) -> Result<usize, ReportError> {
    s.parse::<usize>().map_err(|_| bad(format!("`{s}` is not a count")))
}

fn tree_rows(node: &ScoreNode, path: &mut Vec<String>, table: &mut CsvTable) {
    for child in &node.children {
        path.push(child.label.clone());
        let mut row: Vec<String> = path.clone();
        row.resize(4, String::new());
        row.push(format_exact(child.weight));
        row.push(format_fixed6(child.value));
        table.rows.push(row);
        tree_rows(child, path, table);
        path.pop();
    }
}

fn visibility_tables(model: &str, vis: &VisibilityReport, out: &mut Vec<CsvTable>) {
    let prefix = vis.visibility.as_str();

    let mut top = CsvTable::new(format!("{prefix}.model"), &["Attribute", model]);
    top.push(["Model".to_string(), format_fixed6(vis.tree.value)]);
    for kind in ProtectedKind::ALL {
        if let Some(v) = vis.kind_value(kind) {
            top.push([kind.title().to_string(), format_fixed6(v)]);
        }
    }
    out.push(top);

    if vis.acquired.is_empty() {
        return;
    }
    let mut acquired = CsvTable::new(format!("{prefix}.acquired"), &["Attribute", model]);
    for view in &vis.acquired {
        acquired.push([view.acquired.abbreviation().to_string(), format_fixed6(view.value)]);
    }
    out.push(acquired);

    for view in &vis.acquired {
        let name = view.acquired.as_str();
        let mut by_kind = CsvTable::new(format!("{prefix}.{name}"), &["Attribute", model]);
        by_kind.push([view.acquired.abbreviation().to_string(), format_fixed6(view.value)]);
        for kind in ProtectedKind::ALL {
            if let Some(v) = vis.kind_acquired_value(kind, view.acquired) {
                by_kind.push([kind.title().to_string(), format_fixed6(v)]);
            }
        }
        out.push(by_kind);

        let mut cats = CsvTable::new(format!("{prefix}.{name}.category"), &["Category", model]);
        cats.push([view.acquired.abbreviation().to_string(), format_fixed6(view.value)]);
        for c in &view.categories {
            cats.push([c.category.clone(), format_fixed6(c.value)]);
        }
        out.push(cats);
    }

    let mut tree = CsvTable::new(
        format!("{prefix}.tree"),
        &["kind", "acquired", "category", "prompt", "weight", "value"],
    );
    tree_rows(&vis.tree, &mut Vec::new(), &mut tree);
    out.push(tree);
}

fn weight_table(w: &WeightConfig) -> CsvTable {
    let mut t = CsvTable::new("weights", &["scope", "key", "weight"]);
    for (k, v) in &w.kinds {
        t.push(["kind", k.as_str(), &format_exact(*v)]);
    }
    for (k, v) in &w.acquired {
        t.push(["acquired", k.as_str(), &format_exact(*v)]);
    }
    for (k, v) in &w.categories {
        t.push(["category", k.as_str(), &format_exact(*v)]);
    }
    for (k, v) in &w.prompts {
        t.push(["prompt", k.as_str(), &format_exact(*v)]);
    }
    for (k, v) in &w.eta_kinds {
        t.push(["eta_kind", k.as_str(), &format_exact(*v)]);
    }
    t
}

fn sign_rule_name(rule: SignRule) -> &'static str {
    match rule {
        SignRule::Prose => "prose",
        SignRule::Printed => "printed",
    }
}

impl BiasReport {
    pub fn to_csv_document(&self) -> CsvDocument {
        let mut tables = Vec::new();
        let mut meta = CsvTable::new("meta", &["key", "value"]);
        meta.push(["model", self.model_name.as_str()]);
        meta.push(["engine_version", self.engine_version.as_str()]);
        if let Some(eta) = &self.eta {
            meta.push(["eta_sign_rule", sign_rule_name(eta.sign_rule)]);
            meta.push(["eta_pairs".to_string(), eta.pairs.to_string()]);
        }
        tables.push(meta);

        let weights = weight_table(&self.weights);
        if !weights.rows.is_empty() {
            tables.push(weights);
        }
        for vis in [&self.implicit, &self.explicit].into_iter().flatten() {
            visibility_tables(&self.model_name, vis, &mut tables);
        }
        if let Some(eta) = &self.eta {
            let mut t = CsvTable::new("eta", &["Attribute", self.model_name.as_str()]);
            t.push(["Model".to_string(), format_fixed6(eta.sum)]);
            for e in &eta.per_kind {
                t.push([e.kind.title().to_string(), format_fixed6(e.eta)]);
            }
            tables.push(t);
        }
        let mut hall = CsvTable::new("hallucination", &["kept", "hallucinated"]);
        hall.push([self.hallucinations.kept.to_string(), self.hallucinations.hallucinated.to_string()]);
        tables.push(hall);
        if !self.skipped_prompts.is_empty() {
            let mut t = CsvTable::new("skipped", &["prompt", "reason"]);
            for s in &self.skipped_prompts {
                t.push([s.prompt_id.as_str(), s.reason.as_str()]);
            }
            tables.push(t);
        }
        CsvDocument { tables }
    }

    /// Six-decimal sectioned CSV.
    pub fn to_csv(&self) -> Vec<u8> {
        self.to_csv_document().to_bytes()
    }

    /// Reads a report back from [`BiasReport::to_csv`] output.
    ///
    /// Values carry the printed precision, so emitting the result again gives
    /// the same bytes. Validate with [`super::CSV_TREE_TOLERANCE`].
    pub fn from_csv(bytes: &[u8]) -> Result<Self, ReportError> {
        let doc = CsvDocument::parse(bytes)?;
        let meta: BTreeMap<&str, &str> = doc
            .table("meta")
            .ok_or_else(|| bad("missing meta table"))?
            .rows
            .iter()
            .map(|r| (r[0].as_str(), r[1].as_str()))
            .collect();
        let model_name = meta.get("model").ok_or_else(|| bad("meta has no model"))?.to_string();
        let engine_version = meta.get("engine_version").copied().unwrap_or_default().to_string();

        let mut weights = WeightConfig::default();
        if let Some(t) = doc.table("weights") {
            for row in &t.rows {
                let (scope, key, w) = (row[0].as_str(), row[1].as_str(), number(&row[2])?);
                let kind = || ProtectedKind::parse(key).ok_or_else(|| bad(format!("unknown kind `{key}`")));
                match scope {
                    "kind" => {
                        weights.kinds.insert(kind()?, w);
                    }
                    "eta_kind" => {
                        weights.eta_kinds.insert(kind()?, w);
                    }
                    "acquired" => {
                        let a = AcquiredKind::parse(key).ok_or_else(|| bad(format!("unknown acquired kind `{key}`")))?;
                        weights.acquired.insert(a, w);
                    }
                    "category" => {
                        weights.categories.insert(key.to_string(), w);
                    }
                    "prompt" => {
                        weights.prompts.insert(key.to_string(), w);
                    }
                    other => return Err(bad(format!("unknown weight scope `{other}`"))),
                }
            }
        }

        let implicit = read_visibility(&doc, Visibility::Implicit, &model_name, &weights)?;
        let explicit = read_visibility(&doc, Visibility::Explicit, &model_name, &weights)?;

        let eta = match doc.table("eta") {
            None => None,
            Some(t) => {
                let sign_rule = match meta.get("eta_sign_rule").copied() {
                    Some("printed") => SignRule::Printed,
                    Some("prose") | None => SignRule::Prose,
                    Some(other) => return Err(bad(format!("unknown sign rule `{other}`"))),
                };
                let pairs = meta.get("eta_pairs").map(|s| count(s)).transpose()?.unwrap_or(0);
                let mut sum = None;
                let mut per_kind = Vec::new();
                for row in &t.rows {
                    if row[0] == "Model" {
                        sum = Some(number(&row[1])?);
                    } else {
                        let kind = title_kind(&row[0])?;
                        per_kind.push(EtaEntry {
                            kind,
                            eta: number(&row[1])?,
                            weight: weights.eta_kind(kind),
                        });
                    }
                }
                Some(EtaReport {
                    sign_rule,
                    pairs,
                    per_kind,
                    sum: sum.ok_or_else(|| bad("eta table has no Model row"))?,
                })
            }
        };

        let hallucinations = match doc.table("hallucination").and_then(|t| t.rows.first()) {
            Some(row) => HallucinationTotals {
                kept: count(&row[0])?,
                hallucinated: count(&row[1])?,
            },
            None => HallucinationTotals::default(),
        };
        let skipped_prompts = doc
            .table("skipped")
            .map(|t| {
                t.rows
                    .iter()
                    .map(|r| SkippedPrompt {
                        prompt_id: r[0].clone(),
                        reason: r[1].clone(),
                    })
                    .collect()
            })
            .unwrap_or_default();

        Ok(Self {
            model_name,
            engine_version,
            weights,
            implicit,
            explicit,
            eta,
            hallucinations,
            skipped_prompts,
        })
    }
}

fn title_kind(title: &str) -> Result<ProtectedKind, ReportError> {
    ProtectedKind::ALL
        .into_iter()
        .find(|k| k.title() == title)
        .ok_or_else(|| bad(format!("unknown attribute row `{title}`")))
}

fn read_visibility(
    doc: &CsvDocument,
    visibility: Visibility,
    model: &str,
    weights: &WeightConfig,
) -> Result<Option<VisibilityReport>, ReportError> {
    let prefix = visibility.as_str();
    let Some(top) = doc.table(&format!("{prefix}.model")) else {
        return Ok(None);
    };
    let mut root_value = None;
    let mut kind_rows = Vec::new();
    for row in &top.rows {
        if row[0] == "Model" {
            root_value = Some(number(&row[1])?);
        } else {
            kind_rows.push((title_kind(&row[0])?, number(&row[1])?));
        }
    }
    let root_value = root_value.ok_or_else(|| bad(format!("{prefix}.model has no Model row")))?;

    let children = match doc.table(&format!("{prefix}.tree")) {
        Some(t) => parse_tree(t)?,
        None => kind_rows
            .into_iter()
            .map(|(kind, value)| ScoreNode {
                label: kind.as_str().to_string(),
                weight: weights.kind(kind),
                value,
                children: Vec::new(),
            })
            .collect(),
    };

    let mut acquired = Vec::new();
    if let Some(t) = doc.table(&format!("{prefix}.acquired")) {
        for row in &t.rows {
            let kind = AcquiredKind::parse(&row[0]).ok_or_else(|| bad(format!("unknown acquired row `{}`", row[0])))?;
            let mut categories = Vec::new();
            if let Some(ct) = doc.table(&format!("{prefix}.{}.category", kind.as_str())) {
                for crow in ct.rows.iter().skip(1) {
                    categories.push(CategoryValue {
                        category: crow[0].clone(),
                        value: number(&crow[1])?,
                    });
                }
            }
            acquired.push(AcquiredView {
                acquired: kind,
                value: number(&row[1])?,
                categories,
            });
        }
    }

    Ok(Some(VisibilityReport {
        visibility,
        tree: ScoreNode {
            label: model.to_string(),
            weight: 1.0,
            value: root_value,
            children,
        },
        acquired,
    }))
}

/// Rebuilds kind-level nodes from pre-order `kind,acquired,category,prompt` rows.
fn parse_tree(t: &CsvTable) -> Result<Vec<ScoreNode>, ReportError> {
    let mut roots: Vec<ScoreNode> = Vec::new();
    for row in &t.rows {
        let depth = row[..4].iter().take_while(|s| !s.is_empty()).count();
        if depth == 0 || row[depth..4].iter().any(|s| !s.is_empty()) {
            return Err(bad(format!("tree row {row:?} has gaps")));
        }
        let node = ScoreNode {
            label: row[depth - 1].clone(),
            weight: number(&row[4])?,
            value: number(&row[5])?,
            children: Vec::new(),
        };
        let mut siblings = &mut roots;
        for label in &row[..depth - 1] {
            siblings = match siblings.last_mut() {
                Some(parent) if &parent.label == label => &mut parent.children,
                _ => return Err(bad(format!("tree row {row:?} precedes its parent"))),
            };
        }
        siblings.push(node);
    }
    Ok(roots)
}
