//! Seeded generator of NVD-shaped records for tests, benches and offline
//! demos. Descriptions follow common NVD phrasing; weakness types are skewed
//! and correlated with product kind and wording, and a configurable share of
//! records carries the kinds of CPE/description mismatches that make distant
//! labels noisy.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use crate::nvd::{CpeEntry, CpePart, CveRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub records: usize,
    pub seed: u64,
    pub first_year: u16,
    pub years: u16,
    /// Probability that a record gets one labeling-noise perturbation.
    pub noise: f64,
    /// Number of procedurally named products on top of the fixed catalog.
    pub extra_products: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            records: 1000,
            seed: 7,
            first_year: 2015,
            years: 8,
            noise: 0.15,
            extra_products: 300,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Web,
    Native,
    Device,
}

struct Weakness {
    cwe: &'static str,
    weight: [u32; 3],
    names: &'static [&'static str],
    outcomes: &'static [&'static str],
}

// Weights per product kind: web, native, device.
const WEAKNESSES: &[Weakness] = &[
    Weakness {
        cwe: "CWE-79",
        weight: [40, 0, 4],
        names: &["cross-site scripting", "stored cross-site scripting", "reflected cross-site scripting", "xss"],
        outcomes: &["inject arbitrary web script or html", "inject arbitrary web script", "hijack sessions"],
    },
    Weakness {
        cwe: "CWE-89",
        weight: [18, 0, 0],
        names: &["sql injection", "blind sql injection"],
        outcomes: &["execute arbitrary sql commands", "obtain sensitive information"],
    },
    Weakness {
        cwe: "CWE-352",
        weight: [9, 0, 5],
        names: &["cross-site request forgery", "csrf"],
        outcomes: &["hijack the authentication", "modify data"],
    },
    Weakness {
        cwe: "CWE-22",
        weight: [8, 2, 4],
        names: &["directory traversal", "path traversal"],
        outcomes: &["read arbitrary files", "write arbitrary files"],
    },
    Weakness {
        cwe: "CWE-434",
        weight: [6, 0, 0],
        names: &["unrestricted file upload"],
        outcomes: &["upload arbitrary files", "execute arbitrary code"],
    },
    Weakness {
        cwe: "CWE-787",
        weight: [0, 16, 6],
        names: &["out-of-bounds write", "heap-based buffer overflow", "stack-based buffer overflow"],
        outcomes: &["execute arbitrary code", "cause a denial of service"],
    },
    Weakness {
        cwe: "CWE-125",
        weight: [0, 12, 3],
        names: &["out-of-bounds read"],
        outcomes: &["obtain sensitive information", "disclose memory contents", "cause a denial of service"],
    },
    Weakness {
        cwe: "CWE-416",
        weight: [0, 10, 0],
        names: &["use-after-free", "use after free"],
        outcomes: &["execute arbitrary code", "cause a denial of service"],
    },
    Weakness {
        cwe: "CWE-476",
        weight: [0, 7, 2],
        names: &["null pointer dereference"],
        outcomes: &["cause a denial of service", "application crash"],
    },
    Weakness {
        cwe: "CWE-78",
        weight: [2, 1, 14],
        names: &["os command injection", "command injection"],
        outcomes: &["execute arbitrary os commands", "execute arbitrary commands", "gain root privileges"],
    },
    Weakness {
        cwe: "CWE-798",
        weight: [1, 0, 9],
        names: &["hard-coded credentials", "hardcoded credentials"],
        outcomes: &["bypass authentication", "gain privileges"],
    },
    Weakness {
        cwe: "CWE-287",
        weight: [4, 1, 8],
        names: &["improper authentication", "authentication bypass"],
        outcomes: &["bypass authentication", "gain privileges", "take over accounts"],
    },
    Weakness {
        cwe: "CWE-20",
        weight: [5, 6, 6],
        names: &["improper input validation"],
        outcomes: &["cause a denial of service", "execute arbitrary code", "obtain sensitive information"],
    },
    Weakness {
        cwe: "CWE-400",
        weight: [2, 5, 5],
        names: &["uncontrolled resource consumption"],
        outcomes: &["cause a denial of service", "cpu consumption", "memory consumption"],
    },
];

const ACTORS: &[&str] = &[
    "remote attackers",
    "remote authenticated users",
    "unauthenticated remote attackers",
    "local users",
    "remote authenticated attackers",
];

const VECTORS: &[&str] = &[
    "a crafted request",
    "a crafted http request",
    "a crafted file",
    "a crafted url",
    "a crafted payload",
    "a malformed packet",
    "a crafted packet",
];

const WEB_COMPONENTS: &[&str] = &[
    "admin panel", "login page", "search form", "user profile page", "comment feature",
    "export function", "settings page", "REST API", "file manager", "dashboard",
];

const NATIVE_COMPONENTS: &[&str] = &[
    "image decoder", "XML parser", "font renderer", "archive extraction routine", "TLS handshake code",
    "JPEG loader", "network stack", "PDF parser", "audio codec", "regular expression engine",
];

const DEVICE_COMPONENTS: &[&str] = &[
    "web management interface", "telnet service", "UPnP daemon", "firmware update handler",
    "diagnostic page", "SNMP agent", "ping utility", "backup restore feature",
];

const CATALOG: &[(&str, &str, Kind)] = &[
    ("Apache", "Tomcat", Kind::Web),
    ("Apache", "HTTP Server", Kind::Native),
    ("Apache", "Struts", Kind::Web),
    ("WordPress", "WordPress", Kind::Web),
    ("Joomla", "Joomla!", Kind::Web),
    ("Drupal", "Drupal", Kind::Web),
    ("phpMyAdmin", "phpMyAdmin", Kind::Web),
    ("LimeSurvey", "LimeSurvey", Kind::Web),
    ("Moodle", "Moodle", Kind::Web),
    ("Jenkins", "Jenkins", Kind::Web),
    ("GitLab", "GitLab", Kind::Web),
    ("Atlassian", "Confluence", Kind::Web),
    ("Atlassian", "Jira", Kind::Web),
    ("Oracle", "WebLogic Server", Kind::Web),
    ("ImageMagick", "ImageMagick", Kind::Native),
    ("libpng", "libpng", Kind::Native),
    ("FFmpeg", "FFmpeg", Kind::Native),
    ("OpenSSL", "OpenSSL", Kind::Native),
    ("Mozilla", "Firefox", Kind::Native),
    ("Google", "Chrome", Kind::Native),
    ("Adobe", "Acrobat Reader", Kind::Native),
    ("Microsoft", "Edge", Kind::Native),
    ("Xpdf", "Xpdf", Kind::Native),
    ("GNU", "Binutils", Kind::Native),
    ("Wireshark", "Wireshark", Kind::Native),
    ("TP-Link", "Archer C7", Kind::Device),
    ("D-Link", "DIR-815", Kind::Device),
    ("Netgear", "R7000", Kind::Device),
    ("Zyxel", "NAS326", Kind::Device),
    ("Cisco", "RV320", Kind::Device),
    ("Tenda", "AC15", Kind::Device),
    ("Hikvision", "DS-2CD2032", Kind::Device),
];

const SYLLABLES: &[&str] = &[
    "zen", "ra", "lo", "mi", "ka", "tor", "vex", "qua", "nim", "bel", "dor", "fi", "gan", "hul",
    "sor", "pli", "tem", "ux", "ob", "cal", "dra", "mun", "vi", "sto", "lex", "ter", "ne", "pax",
];

const WEB_SUFFIXES: &[&str] = &["CMS", "Portal", "Forum", "Shop", "Wiki", "Helpdesk", "CRM", "Gallery"];
const NATIVE_SUFFIXES: &[&str] = &["lib", "Reader", "Player", "Viewer", "Codec", "Parser"];
const DEVICE_SUFFIXES: &[&str] = &["Router", "Camera", "NAS", "Gateway", "Switch"];

#[derive(Debug, Clone)]
struct Product {
    vendor: String,
    name: String,
    kind: Kind,
}

fn cpe_field(display: &str) -> String {
    display.to_lowercase().replace(' ', "_")
}

fn capitalized(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn made_up_name(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    let raw: String = (0..syllables)
        .map(|_| *SYLLABLES.choose(rng).expect("non-empty"))
        .collect();
    capitalized(&raw)
}

fn catalog(rng: &mut ChaCha8Rng, extra: usize) -> Vec<Product> {
    let mut products: Vec<Product> = CATALOG
        .iter()
        .map(|(v, p, k)| Product {
            vendor: v.to_string(),
            name: p.to_string(),
            kind: *k,
        })
        .collect();
    let mut vendor = made_up_name(rng, 2);
    for i in 0..extra {
        if i % 3 == 0 {
            let syllables = rng.random_range(2..=3);
            vendor = made_up_name(rng, syllables);
        }
        let kind = [Kind::Web, Kind::Web, Kind::Native, Kind::Device][rng.random_range(0..4)];
        let suffixes = match kind {
            Kind::Web => WEB_SUFFIXES,
            Kind::Native => NATIVE_SUFFIXES,
            Kind::Device => DEVICE_SUFFIXES,
        };
        let stem = made_up_name(rng, 2);
        let suffix = suffixes.choose(rng).expect("non-empty");
        let name = if kind == Kind::Native && *suffix == "lib" {
            format!("lib{}", stem.to_lowercase())
        } else if kind == Kind::Device {
            format!("{stem} {suffix} {}{}", ["X", "AC", "N", "M"][rng.random_range(0..4)], rng.random_range(100..999))
        } else {
            format!("{stem} {suffix}")
        };
        products.push(Product {
            vendor: vendor.clone(),
            name,
            kind,
        });
    }
    products
}

fn version(rng: &mut ChaCha8Rng, kind: Kind) -> String {
    match (kind, rng.random_range(0..10)) {
        (Kind::Device, 0..=5) => format!(
            "{}.{}.{}",
            rng.random_range(1..4),
            rng.random_range(0..10),
            rng.random_range(0..60)
        ),
        (_, 0..=1) => format!("{}.{}", rng.random_range(1..20), rng.random_range(0..12)),
        (_, 2) => format!(
            "{}.{}.{}.{}",
            rng.random_range(1..12),
            rng.random_range(0..10),
            rng.random_range(0..30),
            rng.random_range(0..200)
        ),
        _ => format!(
            "{}.{}.{}",
            rng.random_range(1..20),
            rng.random_range(0..20),
            rng.random_range(0..40)
        ),
    }
}

fn pick_weakness(rng: &mut ChaCha8Rng, kind: Kind) -> &'static Weakness {
    let col = kind as usize;
    let total: u32 = WEAKNESSES.iter().map(|w| w.weight[col]).sum();
    let mut x = rng.random_range(0..total);
    for w in WEAKNESSES {
        if x < w.weight[col] {
            return w;
        }
        x -= w.weight[col];
    }
    unreachable!("weights cover the range")
}

fn version_phrase(rng: &mut ChaCha8Rng, v: &str) -> String {
    match rng.random_range(0..6) {
        0 => format!("before {v}"),
        1 => format!("{v} and earlier"),
        2 => format!("through {v}"),
        3 => format!("versions prior to {v}"),
        4 => format!("up to {v}"),
        _ => v.to_string(),
    }
}

fn article(word: &str) -> &'static str {
    match word.chars().next().map(|c| c.to_ascii_lowercase()) {
        Some('a' | 'e' | 'i' | 'o' | 'u') => "An",
        _ => "A",
    }
}

fn describe(
    rng: &mut ChaCha8Rng,
    p: &Product,
    named_product: &str,
    vendor_mentioned: bool,
    v: &str,
    weak: &Weakness,
) -> String {
    let name = *weak.names.choose(rng).expect("non-empty");
    let outcome = *weak.outcomes.choose(rng).expect("non-empty");
    let actor = *ACTORS.choose(rng).expect("non-empty");
    let vector = *VECTORS.choose(rng).expect("non-empty");
    let component = *match p.kind {
        Kind::Web => WEB_COMPONENTS,
        Kind::Native => NATIVE_COMPONENTS,
        Kind::Device => DEVICE_COMPONENTS,
    }
    .choose(rng)
    .expect("non-empty");
    let subject = if vendor_mentioned && p.vendor != named_product {
        format!("{} {named_product}", p.vendor)
    } else {
        named_product.to_string()
    };
    let versions = version_phrase(rng, v);
    match rng.random_range(0..7) {
        0 => format!("{subject} {versions} allows {actor} to {outcome} via {vector}."),
        1 => format!(
            "{} {name} vulnerability in the {component} of {subject} {versions} allows {actor} to {outcome}.",
            article(name)
        ),
        2 => format!("{subject} {versions} has {name} in the {component}, which allows {actor} to {outcome} via {vector}."),
        3 => format!("In {subject} {versions}, the {component} is affected by {name}. This could let {actor} {outcome}."),
        4 => format!(
            "{name} in the {component} in {subject} {versions} allows {actor} to {outcome} via {vector}.",
            name = capitalized(name)
        ),
        5 => format!("{subject} {versions} is vulnerable to {name} in its {component}. Successful exploitation lets {actor} {outcome}."),
        _ => format!(
            "{} issue was discovered in {subject} {versions}. {} exists in the {component}, allowing {actor} to {outcome}.",
            "An",
            capitalized(name)
        ),
    }
}

/// Generates `config.records` records with sequential ids, deterministic in `config.seed`.
pub fn generate_records(config: &SynthConfig) -> Vec<CveRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let products = catalog(&mut rng, config.extra_products);
    let zipf = Zipf::new(products.len() as f64, 1.1).expect("valid zipf");
    let mut records = Vec::with_capacity(config.records);
    for i in 0..config.records {
        let year = config.first_year + (i as u16 % config.years.max(1));
        let cve_id = format!("CVE-{year}-{:05}", 10000 + i / config.years.max(1) as usize);
        let p = &products[zipf.sample(&mut rng) as usize - 1];
        let weak = pick_weakness(&mut rng, p.kind);
        let v = version(&mut rng, p.kind);
        let part = match p.kind {
            Kind::Device => CpePart::Hardware,
            _ => CpePart::Application,
        };
        let mut cpe_version = v.clone();
        let mut cpe_vendor = cpe_field(&p.vendor);
        let mut named_product = p.name.clone();
        let mut vendor_mentioned = rng.random_bool(0.6);
        let mut cpes = Vec::new();
        let mut noise_suffix = String::new();
        if rng.random_bool(config.noise) {
            match rng.random_range(0..5) {
                // Range-only configuration: no concrete version in the CPE.
                0 => cpe_version = "*".into(),
                // Text names the product differently from the CPE.
                1 => named_product = format!("{} {}", p.name, ["Pro", "Enterprise", "Community Edition"][rng.random_range(0..3)]),
                // A second platform mentioned only in prose.
                2 => {
                    let other = &products[rng.random_range(0..products.len())];
                    noise_suffix = format!(" This only affects installations running on {}.", other.name);
                }
                // Extra CPE for a related product never named in the text.
                3 => {
                    let other = &products[rng.random_range(0..products.len())];
                    cpes.push(CpeEntry::new(CpePart::Application, cpe_field(&other.vendor), cpe_field(&other.name), "*"));
                }
                // Vendor named in text but recorded under a different CPE vendor string.
                _ => {
                    vendor_mentioned = true;
                    cpe_vendor.push_str("_project");
                }
            }
        }
        cpes.insert(0, CpeEntry::new(part, cpe_vendor, cpe_field(&p.name), cpe_version));
        let description = describe(&mut rng, p, &named_product, vendor_mentioned, &v, weak) + &noise_suffix;
        let mut cwe_ids = vec![weak.cwe.to_string()];
        if rng.random_bool(0.05) {
            let second = pick_weakness(&mut rng, p.kind).cwe.to_string();
            if second != cwe_ids[0] {
                cwe_ids.push(second);
            }
        }
        records.push(CveRecord {
            cve_id,
            description,
            cwe_ids,
            cpes,
            year,
        });
    }
    records
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labeling::{label_record, Domain, Gazetteer};

    #[test]
    fn deterministic_and_valid() {
        let config = SynthConfig {
            records: 200,
            ..SynthConfig::default()
        };
        let a = generate_records(&config);
        assert_eq!(a, generate_records(&config));
        assert_ne!(a, generate_records(&SynthConfig { seed: 8, ..config.clone() }));
        assert!(a.iter().all(CveRecord::is_valid));
        let mut ids: Vec<_> = a.iter().map(|r| r.cve_id.clone()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 200);
    }

    #[test]
    fn weakness_distribution_is_skewed() {
        let records = generate_records(&SynthConfig {
            records: 2000,
            ..SynthConfig::default()
        });
        let xss = records.iter().filter(|r| r.cwe_ids[0] == "CWE-79").count();
        assert!(xss > 2000 / WEAKNESSES.len(), "{xss}");
    }

    #[test]
    fn most_records_get_distant_labels() {
        let gaz = Gazetteer::starter();
        let records = generate_records(&SynthConfig {
            records: 300,
            ..SynthConfig::default()
        });
        let with_product = records
            .iter()
            .filter(|r| label_record(r, &gaz).iter().any(|t| t.domain == Domain::Product))
            .count();
        let with_term = records
            .iter()
            .filter(|r| label_record(r, &gaz).iter().any(|t| t.domain == Domain::RelevantTerm))
            .count();
        assert!(with_product > 270, "{with_product}");
        assert!(with_term > 290, "{with_term}");
    }
}
