//! NVD JSON 1.1 feed ingestion.

mod cpe;

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::sync::LazyLock;

use flate2::read::GzDecoder;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use cpe::{CpeEntry, CpePart};

use crate::error::{Error, Result};

static CVE_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^CVE-(\d{4})-\d{4,}$").unwrap());
static CWE_ID: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^CWE-\d+$").unwrap());

const REJECT_MARKER: &str = "** REJECT **";

/// One vulnerability entry with the metadata the pipeline consumes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CveRecord {
    pub cve_id: String,
    pub description: String,
    pub cwe_ids: Vec<String>,
    pub cpes: Vec<CpeEntry>,
    pub year: u16,
}

impl CveRecord {
    /// Checks the record invariants: well-formed id, matching year and a
    /// non-empty description.
    pub fn is_valid(&self) -> bool {
        match cve_year(&self.cve_id) {
            Some(year) => year == self.year && !self.description.trim().is_empty(),
            None => false,
        }
    }
}

/// Year component of a `CVE-YYYY-NNNN` identifier.
pub fn cve_year(cve_id: &str) -> Option<u16> {
    CVE_ID
        .captures(cve_id)
        .and_then(|c| c.get(1))
        .and_then(|m| m.as_str().parse().ok())
}

/// Items that did not become records, by reason.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReport {
    pub missing_id: usize,
    pub malformed_id: usize,
    pub rejected: usize,
    pub no_english_description: usize,
    pub bad_cpe: usize,
}

impl SkipReport {
    pub fn total_items(&self) -> usize {
        self.missing_id + self.malformed_id + self.rejected + self.no_english_description
    }

    pub fn merge(&mut self, other: &SkipReport) {
        self.missing_id += other.missing_id;
        self.malformed_id += other.malformed_id;
        self.rejected += other.rejected;
        self.no_english_description += other.no_english_description;
        self.bad_cpe += other.bad_cpe;
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedFeed {
    pub records: Vec<CveRecord>,
    pub skipped: SkipReport,
}

/// Adapter point for feed schemas other than NVD JSON 1.1.
pub trait FeedSchema {
    fn parse(&self, bytes: &[u8]) -> Result<ParsedFeed>;
}

/// The legacy yearly NVD feed (`CVE_Items` at the top level).
#[derive(Debug, Clone, Copy, Default)]
pub struct NvdJson11;

impl FeedSchema for NvdJson11 {
    fn parse(&self, bytes: &[u8]) -> Result<ParsedFeed> {
        parse_feed(bytes)
    }
}

/// Parses an NVD JSON 1.1 feed document.
pub fn parse_feed(bytes: &[u8]) -> Result<ParsedFeed> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| json_error(bytes, &e))?;
    let items = doc
        .get("CVE_Items")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::FeedJson {
            offset: 0,
            message: "top-level `CVE_Items` array not found".into(),
        })?;

    let mut parsed = ParsedFeed::default();
    for item in items {
        if let Some(record) = parse_item(item, &mut parsed.skipped) {
            parsed.records.push(record);
        }
    }
    Ok(parsed)
}

fn json_error(bytes: &[u8], err: &serde_json::Error) -> Error {
    Error::FeedJson {
        offset: byte_offset(bytes, err.line(), err.column()),
        message: err.to_string(),
    }
}

/// Converts serde_json's 1-based line/column into a byte offset.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start = if line == 1 {
        0
    } else {
        bytes
            .iter()
            .enumerate()
            .filter(|(_, b)| **b == b'\n')
            .nth(line - 2)
            .map_or(bytes.len(), |(i, _)| i + 1)
    };
    (line_start + column.saturating_sub(1)).min(bytes.len())
}

fn parse_item(item: &Value, skipped: &mut SkipReport) -> Option<CveRecord> {
    let Some(cve_id) = item
        .pointer("/cve/CVE_data_meta/ID")
        .and_then(Value::as_str)
    else {
        skipped.missing_id += 1;
        return None;
    };
    let Some(year) = cve_year(cve_id) else {
        skipped.malformed_id += 1;
        return None;
    };
    let description = match english_description(item) {
        Some(d) if d.starts_with(REJECT_MARKER) => {
            skipped.rejected += 1;
            return None;
        }
        Some(d) if !d.trim().is_empty() => d.to_string(),
        _ => {
            skipped.no_english_description += 1;
            return None;
        }
    };

    let mut cpes = Vec::new();
    if let Some(nodes) = item.pointer("/configurations/nodes").and_then(Value::as_array) {
        for node in nodes {
            collect_cpes(node, &mut cpes, skipped);
        }
    }

    Some(CveRecord {
        cve_id: cve_id.to_string(),
        description,
        cwe_ids: cwe_ids(item),
        cpes,
        year,
    })
}

fn english_description(item: &Value) -> Option<&str> {
    item.pointer("/cve/description/description_data")?
        .as_array()?
        .iter()
        .find(|d| d.get("lang").and_then(Value::as_str) == Some("en"))?
        .get("value")?
        .as_str()
}

fn cwe_ids(item: &Value) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    let Some(problem_types) = item
        .pointer("/cve/problemtype/problemtype_data")
        .and_then(Value::as_array)
    else {
        return out;
    };
    for pt in problem_types {
        let Some(descs) = pt.get("description").and_then(Value::as_array) else {
            continue;
        };
        for d in descs {
            if let Some(value) = d.get("value").and_then(Value::as_str) {
                // NVD-CWE-Other / NVD-CWE-noinfo are placeholders, not weakness classes.
                if CWE_ID.is_match(value) && !out.iter().any(|c| c == value) {
                    out.push(value.to_string());
                }
            }
        }
    }
    out
}

fn collect_cpes(node: &Value, out: &mut Vec<CpeEntry>, skipped: &mut SkipReport) {
    if let Some(matches) = node.get("cpe_match").and_then(Value::as_array) {
        for m in matches {
            let Some(uri) = m.get("cpe23Uri").and_then(Value::as_str) else {
                continue;
            };
            match CpeEntry::parse(uri) {
                Ok(cpe) => out.push(cpe),
                Err(_) => skipped.bad_cpe += 1,
            }
        }
    }
    if let Some(children) = node.get("children").and_then(Value::as_array) {
        for child in children {
            collect_cpes(child, out, skipped);
        }
    }
}

/// Reads a feed file, transparently gunzipping when the gzip magic is present.
/// Serializes records as an NVD JSON 1.1 feed, the inverse of [`parse_feed`]
/// for the fields a record keeps.
pub fn to_feed_json(records: &[CveRecord]) -> Value {
    let items: Vec<Value> = records
        .iter()
        .map(|r| {
            let cwes: Vec<Value> = r
                .cwe_ids
                .iter()
                .map(|c| serde_json::json!({ "lang": "en", "value": c }))
                .collect();
            let matches: Vec<Value> = r
                .cpes
                .iter()
                .map(|c| serde_json::json!({ "vulnerable": true, "cpe23Uri": c.to_uri(), "cpe_name": [] }))
                .collect();
            serde_json::json!({
                "cve": {
                    "data_type": "CVE",
                    "data_format": "MITRE",
                    "data_version": "4.0",
                    "CVE_data_meta": { "ID": r.cve_id, "ASSIGNER": "cve@mitre.org" },
                    "problemtype": { "problemtype_data": [ { "description": cwes } ] },
                    "references": { "reference_data": [] },
                    "description": { "description_data": [ { "lang": "en", "value": r.description } ] }
                },
                "configurations": {
                    "CVE_data_version": "4.0",
                    "nodes": [ { "operator": "OR", "children": [], "cpe_match": matches } ]
                },
                "impact": {}
            })
        })
        .collect();
    serde_json::json!({
        "CVE_data_type": "CVE",
        "CVE_data_format": "MITRE",
        "CVE_data_version": "4.0",
        "CVE_data_numberOfCVEs": records.len().to_string(),
        "CVE_Items": items
    })
}

pub fn read_feed_file(path: &Path) -> Result<ParsedFeed> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut bytes = Vec::new();
        GzDecoder::new(raw.as_slice()).read_to_end(&mut bytes)?;
        parse_feed(&bytes)
    } else {
        parse_feed(&raw)
    }
}

/// Optional post-filter on ingested records. Both flags off keeps everything.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecordFilter {
    pub require_cpe: bool,
    pub require_cwe: bool,
}

impl RecordFilter {
    pub fn keep(&self, record: &CveRecord) -> bool {
        (!self.require_cpe || !record.cpes.is_empty())
            && (!self.require_cwe || !record.cwe_ids.is_empty())
    }
}

pub fn write_ndjson<W: Write>(mut out: W, records: &[CveRecord]) -> Result<()> {
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_ndjson<R: Read>(input: R) -> Result<Vec<CveRecord>> {
    let mut records = Vec::new();
    for (i, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: CveRecord = serde_json::from_str(&line)
            .map_err(|e| Error::format(i + 1, format!("bad record: {e}")))?;
        records.push(record);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn item(id: &str, desc: &str, cwes: &[&str], nodes: Value) -> Value {
        json!({
            "cve": {
                "CVE_data_meta": { "ID": id },
                "problemtype": { "problemtype_data": [ { "description":
                    cwes.iter().map(|c| json!({"lang": "en", "value": c})).collect::<Vec<_>>() } ] },
                "description": { "description_data": [ { "lang": "en", "value": desc } ] }
            },
            "configurations": { "CVE_data_version": "4.0", "nodes": nodes }
        })
    }

    fn feed(items: Vec<Value>) -> Vec<u8> {
        serde_json::to_vec(&json!({
            "CVE_data_type": "CVE", "CVE_data_format": "MITRE", "CVE_data_version": "4.0",
            "CVE_Items": items
        }))
        .unwrap()
    }

    #[test]
    fn minimal_feed_yields_one_record() {
        let nodes = json!([{ "operator": "OR", "children": [], "cpe_match": [
            { "vulnerable": true, "cpe23Uri": "cpe:2.3:a:limesurvey:limesurvey:5.4.15:*:*:*:*:*:*:*" }
        ]}]);
        let bytes = feed(vec![item(
            "CVE-2022-0001",
            "Limesurvey 5.4.15 allows XSS.",
            &["CWE-79"],
            nodes,
        )]);
        let parsed = parse_feed(&bytes).unwrap();
        assert_eq!(parsed.records.len(), 1);
        let r = &parsed.records[0];
        assert_eq!(r.cve_id, "CVE-2022-0001");
        assert_eq!(r.year, 2022);
        assert_eq!(r.cwe_ids, vec!["CWE-79"]);
        assert_eq!(
            r.cpes,
            vec![CpeEntry::new(CpePart::Application, "limesurvey", "limesurvey", "5.4.15")]
        );
        assert_eq!(parsed.skipped, SkipReport::default());
    }

    #[test]
    fn rejected_items_are_dropped_and_counted() {
        let bytes = feed(vec![item(
            "CVE-2022-0002",
            "** REJECT ** DO NOT USE THIS CANDIDATE NUMBER.",
            &[],
            json!([]),
        )]);
        let parsed = parse_feed(&bytes).unwrap();
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.skipped.rejected, 1);
    }

    #[test]
    fn missing_id_is_skipped_not_fatal() {
        let mut broken = item("CVE-2022-0003", "text", &[], json!([]));
        broken["cve"]["CVE_data_meta"] = json!({});
        let good = item("CVE-2022-0004", "text", &[], json!([]));
        let parsed = parse_feed(&feed(vec![broken, good])).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.skipped.missing_id, 1);
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let bytes = b"{\n  \"CVE_Items\": [\n    {\"cve\": }\n  ]\n}";
        match parse_feed(bytes) {
            Err(Error::FeedJson { offset, .. }) => {
                assert_eq!(bytes[offset], b'}');
                assert_eq!(offset, 31);
            }
            other => panic!("expected FeedJson error, got {other:?}"),
        }
    }

    #[test]
    fn first_english_description_and_nested_cpes() {
        let mut it = item(
            "CVE-2019-12345",
            "unused",
            &["NVD-CWE-Other", "CWE-20", "CWE-20"],
            json!([{ "operator": "AND", "cpe_match": [], "children": [
                { "operator": "OR", "cpe_match": [
                    { "cpe23Uri": "cpe:2.3:a:red_hat:jboss:7.1:*:*:*:*:*:*:*" } ] },
                { "operator": "OR", "cpe_match": [
                    { "cpe23Uri": "cpe:2.3:o:linux:linux_kernel:-:*:*:*:*:*:*:*" } ],
                  "children": [ { "cpe_match": [
                    { "cpe23Uri": "cpe:2.3:h:cisco:asa_5505:*:*:*:*:*:*:*:*" } ] } ] }
            ]}]),
        );
        it["cve"]["description"]["description_data"] = json!([
            { "lang": "es", "value": "texto" },
            { "lang": "en", "value": "first english" },
            { "lang": "en", "value": "second english" }
        ]);
        let parsed = parse_feed(&feed(vec![it])).unwrap();
        let r = &parsed.records[0];
        assert_eq!(r.description, "first english");
        assert_eq!(r.cwe_ids, vec!["CWE-20"]);
        let products: Vec<_> = r.cpes.iter().map(|c| c.product.as_str()).collect();
        assert_eq!(products, ["jboss", "linux_kernel", "asa_5505"]);
    }

    #[test]
    fn non_english_only_is_skipped() {
        let mut it = item("CVE-2020-1111", "x", &[], json!([]));
        it["cve"]["description"]["description_data"] = json!([{ "lang": "fr", "value": "texte" }]);
        let parsed = parse_feed(&feed(vec![it])).unwrap();
        assert!(parsed.records.is_empty());
        assert_eq!(parsed.skipped.no_english_description, 1);
    }

    #[test]
    fn gzip_feeds_are_detected() {
        use flate2::write::GzEncoder;
        let bytes = feed(vec![item("CVE-2021-0001", "x y", &[], json!([]))]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nvdcve-1.1-2021.json.gz");
        let mut enc = GzEncoder::new(fs::File::create(&path).unwrap(), Default::default());
        enc.write_all(&bytes).unwrap();
        enc.finish().unwrap();
        assert_eq!(read_feed_file(&path).unwrap().records.len(), 1);
    }

    #[test]
    fn ndjson_uses_spec_field_names() {
        let record = CveRecord {
            cve_id: "CVE-2022-0001".into(),
            description: "d".into(),
            cwe_ids: vec!["CWE-79".into()],
            cpes: vec![CpeEntry::new(CpePart::Os, "v", "p", "*")],
            year: 2022,
        };
        let mut buf = Vec::new();
        write_ndjson(&mut buf, std::slice::from_ref(&record)).unwrap();
        let line = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(
            line,
            "{\"cve_id\":\"CVE-2022-0001\",\"description\":\"d\",\"cwe_ids\":[\"CWE-79\"],\
             \"cpes\":[{\"part\":\"os\",\"vendor\":\"v\",\"product\":\"p\",\"version\":\"*\"}],\"year\":2022}\n"
        );
        assert_eq!(read_ndjson(buf.as_slice()).unwrap(), vec![record]);
    }

    #[test]
    fn filter_flags() {
        let r = CveRecord {
            cve_id: "CVE-2022-0001".into(),
            description: "d".into(),
            cwe_ids: vec![],
            cpes: vec![],
            year: 2022,
        };
        assert!(RecordFilter::default().keep(&r));
        assert!(!RecordFilter { require_cpe: true, require_cwe: false }.keep(&r));
        assert!(!RecordFilter { require_cpe: false, require_cwe: true }.keep(&r));
    }

    #[test]
    fn feed_writer_round_trips() {
        let records = vec![CveRecord {
            cve_id: "CVE-2021-12345".into(),
            description: "Foo: bar \"quoted\" 1.2.3".into(),
            cwe_ids: vec!["CWE-79".into(), "CWE-89".into()],
            cpes: vec![CpeEntry::new(CpePart::Application, "acme", "foo\\:bar", "1.2.3")],
            year: 2021,
        }];
        let bytes = serde_json::to_vec(&to_feed_json(&records)).unwrap();
        let parsed = parse_feed(&bytes).unwrap();
        assert_eq!(parsed.records, records);
        assert_eq!(parsed.skipped.total_items(), 0);
    }
}
