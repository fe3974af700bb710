//! Table-driven resource classification.
//!
//! Decision order: magic bytes of the first read buffer, then file
//! extension, then path segments, then [`ResourceClass::Other`]. Rule tables
//! use a plain-text format (see `rules.txt`) and can be extended from a file.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUILTIN_RULES: &str = include_str!("rules.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FontSubtype {
    TrueType,
    Type1,
    OpenType,
    Unknown,
}

impl FontSubtype {
    pub fn as_str(self) -> &'static str {
        match self {
            FontSubtype::TrueType => "truetype",
            FontSubtype::Type1 => "type1",
            FontSubtype::OpenType => "opentype",
            FontSubtype::Unknown => "unknown",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ResourceClass {
    Font(FontSubtype),
    SharedLibrary,
    Executable,
    /// Kind tag such as `image`, `audio`, `video` or `document`.
    MediaFile(String),
    Config,
    Directory,
    Other,
}

impl ResourceClass {
    pub fn is_font(&self) -> bool {
        matches!(self, ResourceClass::Font(_))
    }
}

impl fmt::Display for ResourceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResourceClass::Font(s) => write!(f, "font/{}", s.as_str()),
            ResourceClass::SharedLibrary => f.write_str("shared-library"),
            ResourceClass::Executable => f.write_str("executable"),
            ResourceClass::MediaFile(kind) => write!(f, "media/{kind}"),
            ResourceClass::Config => f.write_str("config"),
            ResourceClass::Directory => f.write_str("directory"),
            ResourceClass::Other => f.write_str("other"),
        }
    }
}

impl FromStr for ResourceClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "font/truetype" => ResourceClass::Font(FontSubtype::TrueType),
            "font/type1" => ResourceClass::Font(FontSubtype::Type1),
            "font/opentype" => ResourceClass::Font(FontSubtype::OpenType),
            "font/unknown" => ResourceClass::Font(FontSubtype::Unknown),
            "shared-library" => ResourceClass::SharedLibrary,
            "executable" => ResourceClass::Executable,
            "config" => ResourceClass::Config,
            "directory" => ResourceClass::Directory,
            "other" => ResourceClass::Other,
            _ => match s.strip_prefix("media/") {
                Some(kind)
                    if !kind.is_empty()
                        && kind.bytes().all(|b| b.is_ascii_lowercase() || b == b'-') =>
                {
                    ResourceClass::MediaFile(kind.to_string())
                }
                _ => return Err(format!("unknown resource class `{s}`")),
            },
        })
    }
}

impl Serialize for ResourceClass {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ResourceClass {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("rule line {line}: {reason}")]
pub struct RuleError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
struct ExtensionRule {
    ext: String,
    under: Option<String>,
    class: ResourceClass,
}

/// Facts from the replay that override content-based classification.
#[derive(Debug, Clone, Copy, Default)]
pub struct Hints {
    pub executed: bool,
    pub directory: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Classifier {
    magic: Vec<(Vec<u8>, ResourceClass)>,
    extensions: Vec<ExtensionRule>,
    segments: Vec<(String, ResourceClass)>,
}

impl Classifier {
    pub fn builtin() -> &'static Classifier {
        static BUILTIN: OnceLock<Classifier> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            Classifier::from_rules(BUILTIN_RULES).expect("built-in rules are valid")
        })
    }

    pub fn from_rules(text: &str) -> Result<Classifier, RuleError> {
        let mut c = Classifier::default();
        c.add_rules(text)?;
        Ok(c)
    }

    /// Builtin rules preceded by `text`, so user rules win.
    pub fn with_overrides(text: &str) -> Result<Classifier, RuleError> {
        let mut c = Classifier::from_rules(text)?;
        let builtin = Classifier::builtin();
        c.magic.extend(builtin.magic.iter().cloned());
        c.extensions.extend(builtin.extensions.iter().cloned());
        c.segments.extend(builtin.segments.iter().cloned());
        Ok(c)
    }

    pub fn add_rules(&mut self, text: &str) -> Result<(), RuleError> {
        for (idx, line) in text.lines().enumerate() {
            let err = |reason: String| RuleError {
                line: idx + 1,
                reason,
            };
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [kind, pattern, class] = fields[..] else {
                return Err(err(format!("expected 3 fields, got {}", fields.len())));
            };
            let class: ResourceClass = class.parse().map_err(err)?;
            match kind {
                "magic" => {
                    let bytes = if let Some(h) = pattern.strip_prefix("hex:") {
                        decode_hex(h).ok_or_else(|| err(format!("bad hex `{h}`")))?
                    } else if let Some(a) = pattern.strip_prefix("ascii:") {
                        a.as_bytes().to_vec()
                    } else {
                        return Err(err("magic pattern needs hex: or ascii: prefix".into()));
                    };
                    if bytes.is_empty() {
                        return Err(err("empty magic pattern".into()));
                    }
                    self.magic.push((bytes, class));
                }
                "extension" => {
                    let (ext, under) = match pattern.split_once('@') {
                        Some((e, u)) => (e, Some(u.to_ascii_lowercase())),
                        None => (pattern, None),
                    };
                    if !ext.starts_with('.') || ext.len() < 2 {
                        return Err(err(format!("extension `{ext}` must start with `.`")));
                    }
                    self.extensions.push(ExtensionRule {
                        ext: ext.to_ascii_lowercase(),
                        under,
                        class,
                    });
                }
                "segment" => self.segments.push((pattern.to_ascii_lowercase(), class)),
                other => return Err(err(format!("unknown rule kind `{other}`"))),
            }
        }
        Ok(())
    }

    pub fn classify(&self, path: &str, prefix: Option<&[u8]>) -> ResourceClass {
        self.classify_with(path, prefix, Hints::default())
    }

    pub fn classify_with(&self, path: &str, prefix: Option<&[u8]>, hints: Hints) -> ResourceClass {
        if hints.directory {
            return ResourceClass::Directory;
        }
        if hints.executed {
            return ResourceClass::Executable;
        }
        if let Some(prefix) = prefix {
            if let Some((_, class)) = self.magic.iter().find(|(m, _)| prefix.starts_with(m)) {
                return class.clone();
            }
        }
        let lower = path.to_ascii_lowercase();
        let name = versionless_name(&lower);
        if let Some(rule) = self.extensions.iter().find(|r| {
            name.ends_with(&r.ext)
                && name.len() > r.ext.len()
                && r.under.as_ref().is_none_or(|u| lower.contains(u.as_str()))
        }) {
            return rule.class.clone();
        }
        if let Some((_, class)) = self
            .segments
            .iter()
            .find(|(s, _)| lower.contains(s.as_str()))
        {
            return class.clone();
        }
        ResourceClass::Other
    }
}

/// File name with trailing numeric version components removed:
/// `libmagickcore.so.3.0` → `libmagickcore.so`.
fn versionless_name(lower_path: &str) -> &str {
    let mut name = lower_path.rsplit('/').next().unwrap_or(lower_path);
    while let Some((stem, last)) = name.rsplit_once('.') {
        if !last.is_empty() && last.bytes().all(|b| b.is_ascii_digit()) && !stem.is_empty() {
            name = stem;
        } else {
            break;
        }
    }
    name
}

fn decode_hex(s: &str) -> Option<Vec<u8>> {
    if !s.len().is_multiple_of(2) {
        return None;
    }
    (0..s.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(s.get(i..i + 2)?, 16).ok())
        .collect()
}

/// Classifies with the built-in tables.
pub fn classify(path: &str, prefix: Option<&[u8]>) -> ResourceClass {
    Classifier::builtin().classify(path, prefix)
}

/// The font subset of `paths`, lexicographically ordered.
pub fn fontset<'a>(
    paths: impl IntoIterator<Item = &'a String>,
    sniff: impl Fn(&str) -> Option<&'a [u8]>,
    classifier: &Classifier,
) -> Vec<(String, FontSubtype)> {
    let unique: BTreeSet<&String> = paths.into_iter().collect();
    unique
        .into_iter()
        .filter_map(|p| match classifier.classify(p, sniff(p)) {
            ResourceClass::Font(sub) => Some((p.clone(), sub)),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn paths_from_the_renderings() {
        assert_eq!(
            classify("/usr/share/fonts/type1/gsfonts/n019004l.pfb", None),
            ResourceClass::Font(FontSubtype::Type1)
        );
        assert_eq!(
            classify("/Library/Fonts/Microsoft/Arial Bold.ttf", None),
            ResourceClass::Font(FontSubtype::TrueType)
        );
        assert_eq!(
            classify("/usr/lib/libMagickCore.so.3", None),
            ResourceClass::SharedLibrary
        );
        assert_eq!(
            classify("/opt/Adobe/Reader9/Resource/Font/ZX______.PFB", None),
            ResourceClass::Font(FontSubtype::Type1)
        );
        assert_eq!(classify("/tmp/x.qqq", None), ResourceClass::Other);
        assert_eq!(classify("/etc/ld.so.cache", None), ResourceClass::Other);
        assert_eq!(
            classify("/etc/fonts/fonts.conf", None),
            ResourceClass::Config
        );
        assert_eq!(
            classify("/usr/share/fonts/X11/misc/fonts.alias", None),
            ResourceClass::Font(FontSubtype::Unknown)
        );
    }

    #[test]
    fn magic_beats_extension() {
        let mut pfb = vec![0x80, 0x01, 0x0c, 0x05, 0x00, 0x00];
        pfb.extend_from_slice(b"%!PS-AdobeFont-1.0: Nimbus");
        assert_eq!(
            classify("/var/cache/blob", Some(&pfb)),
            ResourceClass::Font(FontSubtype::Type1)
        );
        assert_eq!(
            classify("/x/font.dat", Some(b"\x00\x01\x00\x00\x00\x13")),
            ResourceClass::Font(FontSubtype::TrueType)
        );
        assert_eq!(
            classify("/x/a.ttf", Some(b"OTTO\x00\x0b")),
            ResourceClass::Font(FontSubtype::OpenType)
        );
        assert_eq!(
            classify("/usr/bin/gs", Some(b"\x7fELF\x02")),
            ResourceClass::SharedLibrary
        );
        assert_eq!(
            classify("/x/unknown.png", Some(b"zzzz")),
            ResourceClass::MediaFile("image".into())
        );
    }

    #[test]
    fn hints_take_precedence() {
        let c = Classifier::builtin();
        let exec = Hints {
            executed: true,
            directory: false,
        };
        assert_eq!(
            c.classify_with("/usr/bin/gs", Some(b"\x7fELF"), exec),
            ResourceClass::Executable
        );
        let dir = Hints {
            executed: false,
            directory: true,
        };
        assert_eq!(
            c.classify_with("/usr/share/fonts", None, dir),
            ResourceClass::Directory
        );
    }

    #[test]
    fn rule_file_errors_and_overrides() {
        assert!(Classifier::from_rules("magic hex:zz font/type1").is_err());
        assert!(Classifier::from_rules("extension pfb font/type1").is_err());
        assert!(Classifier::from_rules("wat .x other").is_err());
        let e = Classifier::from_rules("\n\nextension .x nonsense").unwrap_err();
        assert_eq!(e.line, 3);
        let c = Classifier::with_overrides("extension .qqq media/video # custom").unwrap();
        assert_eq!(
            c.classify("/tmp/x.qqq", None),
            ResourceClass::MediaFile("video".into())
        );
        assert_eq!(
            c.classify("/a/b.ttf", None),
            ResourceClass::Font(FontSubtype::TrueType)
        );
    }

    #[test]
    fn class_names_round_trip() {
        for s in [
            "font/truetype",
            "font/type1",
            "font/opentype",
            "font/unknown",
            "shared-library",
            "executable",
            "media/image",
            "config",
            "directory",
            "other",
        ] {
            assert_eq!(s.parse::<ResourceClass>().unwrap().to_string(), s);
        }
        assert!("media/".parse::<ResourceClass>().is_err());
    }

    #[test]
    fn gsfonts_fontset() {
        let mut paths: Vec<String> = ["n019004l", "n019003l", "n019023l", "n019024l", "n021003l"]
            .iter()
            .map(|n| format!("/usr/share/fonts/type1/gsfonts/{n}.pfb"))
            .collect();
        paths.push("/usr/lib/libMagickCore.so.3".into());
        let fonts = fontset(&paths, |_| None, Classifier::builtin());
        assert_eq!(fonts.len(), 5);
        assert!(fonts.iter().all(|(_, s)| *s == FontSubtype::Type1));
        assert!(fonts.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(fontset(&Vec::<String>::new(), |_| None, Classifier::builtin()).is_empty());
    }

    proptest! {
        #[test]
        fn fontset_is_pointwise(
            a in proptest::collection::vec("/[a-z]{1,4}/[a-zA-Z]{1,6}\\.(ttf|pfb|so|png|txt|otf)", 0..12),
            b in proptest::collection::vec("/[a-z]{1,4}/[a-zA-Z]{1,6}\\.(ttf|pfb|so|png|txt|otf)", 0..12),
        ) {
            let c = Classifier::builtin();
            let union: Vec<String> = a.iter().chain(b.iter()).cloned().collect();
            let mut merged = fontset(&a, |_| None, c);
            merged.extend(fontset(&b, |_| None, c));
            merged.sort();
            merged.dedup();
            prop_assert_eq!(fontset(&union, |_| None, c), merged);
        }

        #[test]
        fn classify_is_deterministic(path in "/[ -~]{0,40}", prefix in proptest::option::of(proptest::collection::vec(any::<u8>(), 0..16))) {
            let a = classify(&path, prefix.as_deref());
            let b = classify(&path, prefix.as_deref());
            prop_assert_eq!(a, b);
        }
    }
}
