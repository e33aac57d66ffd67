use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;

use super::{io_err, BenchError};

const COLUMNS: [&str; 7] = ["dataset", "subject", "sequence", "method", "region_map", "gt", "pred"];

/// Source label id to canonical region id, for ground truth and prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMapping {
    pub path: PathBuf,
    pub gt: BTreeMap<u32, u32>,
    pub pred: BTreeMap<u32, u32>,
    /// Canonical ids evaluated for cases using this mapping (the codomain of
    /// `gt`), ascending.
    pub regions: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    /// 1-based line in the manifest.
    pub line: u64,
    pub dataset: String,
    pub subject: String,
    pub sequence: String,
    pub method: String,
    pub gt: PathBuf,
    pub pred: PathBuf,
    pub mapping: Arc<RegionMapping>,
}

impl Case {
    pub fn key(&self) -> String {
        format!("{}/{}/{}/{}", self.dataset, self.subject, self.sequence, self.method)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvaluationPlan {
    pub cases: Vec<Case>,
    /// Canonical region names; canonical id `i + 1` is `vocabulary[i]`.
    pub vocabulary: Vec<String>,
}

impl EvaluationPlan {
    pub fn region_name(&self, id: u32) -> &str {
        &self.vocabulary[id as usize - 1]
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MappingFile {
    gt: BTreeMap<String, String>,
    pred: BTreeMap<String, String>,
}

fn parse_side(path: &Path, side: &str, raw: &BTreeMap<String, String>) -> Result<BTreeMap<u32, String>, BenchError> {
    raw.iter()
        .map(|(k, v)| {
            let id = k.trim().parse::<u32>().map_err(|_| BenchError::Mapping {
                path: path.to_path_buf(),
                message: format!("[{side}] key {k:?} is not a label id"),
            })?;
            if id == 0 {
                return Err(BenchError::Mapping {
                    path: path.to_path_buf(),
                    message: format!("[{side}] maps background label 0"),
                });
            }
            Ok((id, v.clone()))
        })
        .collect()
}

struct RawMapping {
    gt: BTreeMap<u32, String>,
    pred: BTreeMap<u32, String>,
}

fn read_mapping(path: &Path) -> Result<RawMapping, BenchError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let file: MappingFile = toml::from_str(&text).map_err(|e| BenchError::Mapping {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let gt = parse_side(path, "gt", &file.gt)?;
    let pred = parse_side(path, "pred", &file.pred)?;
    let gt_regions: BTreeSet<&String> = gt.values().collect();
    let pred_regions: BTreeSet<&String> = pred.values().collect();
    if let Some(missing) = gt_regions.difference(&pred_regions).next() {
        return Err(BenchError::Mapping {
            path: path.to_path_buf(),
            message: format!("region {missing:?} has no [pred] source label"),
        });
    }
    Ok(RawMapping { gt, pred })
}

/// Reads a manifest CSV. Relative paths resolve against the manifest's
/// directory.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<EvaluationPlan, BenchError> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    let manifest_err = |line: u64, message: String| BenchError::Manifest {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| BenchError::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let headers = reader.headers().map_err(|e| manifest_err(1, e.to_string()))?.clone();
    let mut col = [0usize; 7];
    for (i, name) in COLUMNS.iter().enumerate() {
        col[i] = headers
            .iter()
            .position(|h| h.trim() == *name)
            .ok_or_else(|| manifest_err(1, format!("missing column {name:?}")))?;
    }

    struct Row {
        line: u64,
        fields: [String; 4],
        map: PathBuf,
        gt: PathBuf,
        pred: PathBuf,
    }
    let mut rows = Vec::new();
    let mut seen: HashMap<[String; 4], u64> = HashMap::new();
    let mut raw_maps: BTreeMap<PathBuf, RawMapping> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            manifest_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let get = |i: usize| record.get(col[i]).unwrap_or("").trim().to_string();
        let fields = [get(0), get(1), get(2), get(3)];
        for (name, v) in COLUMNS.iter().zip(fields.iter()) {
            if v.is_empty() {
                return Err(manifest_err(line, format!("empty {name}")));
            }
        }
        if let Some(first) = seen.insert(fields.clone(), line) {
            return Err(manifest_err(
                line,
                format!("duplicate case {} (first on line {first})", fields.join("/")),
            ));
        }
        let resolve = |s: String| -> PathBuf {
            let p = PathBuf::from(s);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        let (map, gt, pred) = (resolve(get(4)), resolve(get(5)), resolve(get(6)));
        if !raw_maps.contains_key(&map) {
            let m = read_mapping(&map).map_err(|e| manifest_err(line, e.to_string()))?;
            raw_maps.insert(map.clone(), m);
        }
        rows.push(Row { line, fields, map, gt, pred });
    }

    let vocabulary: Vec<String> = raw_maps
        .values()
        .flat_map(|m| m.gt.values().chain(m.pred.values()))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let id_of = |name: &String| vocabulary.binary_search(name).expect("in vocabulary") as u32 + 1;
    let mappings: BTreeMap<PathBuf, Arc<RegionMapping>> = raw_maps
        .into_iter()
        .map(|(p, m)| {
            let gt: BTreeMap<u32, u32> = m.gt.iter().map(|(&k, v)| (k, id_of(v))).collect();
            let pred = m.pred.iter().map(|(&k, v)| (k, id_of(v))).collect();
            let regions = gt.values().copied().collect::<BTreeSet<_>>().into_iter().collect();
            let mapping = RegionMapping {
                path: p.clone(),
                gt,
                pred,
                regions,
            };
            (p, Arc::new(mapping))
        })
        .collect();
    let cases = rows
        .into_iter()
        .map(|r| {
            let [dataset, subject, sequence, method] = r.fields;
            Case {
                line: r.line,
                dataset,
                subject,
                sequence,
                method,
                gt: r.gt,
                pred: r.pred,
                mapping: mappings[&r.map].clone(),
            }
        })
        .collect();
    Ok(EvaluationPlan { cases, vocabulary })
}
