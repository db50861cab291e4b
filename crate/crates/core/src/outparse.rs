//! Parsing of predictor output against the single-line JSON contract.
//!
//! Two shapes are accepted: a bare object mapping question ids to 1-based
//! options, or `{"predictions": {...}, "reasoning": {...}}`. Strict mode takes
//! nothing else. Lenient mode applies a fixed sequence of repairs, records
//! each one, and then validates with strict semantics.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, Deserialize, Deserializer, MapAccess, SeqAccess, Visitor};
use serde::{Serialize, Serializer};

/// Stable error taxonomy. `code()` strings are part of the public contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ErrorKind {
    NoExpectedQuestions,
    NoJsonFound,
    MalformedJson,
    NotAnObject,
    DuplicateKey,
    ExtraTopLevelKey,
    UnknownQid,
    MissingQid,
    NonIntegerOption,
    OutOfRangeOption,
    InvalidReasoning,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 11] = [
        ErrorKind::NoExpectedQuestions,
        ErrorKind::NoJsonFound,
        ErrorKind::MalformedJson,
        ErrorKind::NotAnObject,
        ErrorKind::DuplicateKey,
        ErrorKind::ExtraTopLevelKey,
        ErrorKind::UnknownQid,
        ErrorKind::MissingQid,
        ErrorKind::NonIntegerOption,
        ErrorKind::OutOfRangeOption,
        ErrorKind::InvalidReasoning,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ErrorKind::NoExpectedQuestions => "no_expected_questions",
            ErrorKind::NoJsonFound => "no_json_found",
            ErrorKind::MalformedJson => "malformed_json",
            ErrorKind::NotAnObject => "not_an_object",
            ErrorKind::DuplicateKey => "duplicate_key",
            ErrorKind::ExtraTopLevelKey => "extra_top_level_key",
            ErrorKind::UnknownQid => "unknown_qid",
            ErrorKind::MissingQid => "missing_qid",
            ErrorKind::NonIntegerOption => "non_integer_option",
            ErrorKind::OutOfRangeOption => "out_of_range_option",
            ErrorKind::InvalidReasoning => "invalid_reasoning",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl Serialize for ErrorKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{kind}: {detail}")]
pub struct ParseError {
    pub kind: ErrorKind,
    pub detail: String,
    /// The complete text that failed to parse.
    pub raw: String,
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum Repair {
    FenceStripped,
    PrefixDiscarded,
    SuffixDiscarded,
    MultipleObjects,
    NumericStringCoerced,
    QidCaseAlias,
}

impl Repair {
    pub fn code(self) -> &'static str {
        match self {
            Repair::FenceStripped => "fence_stripped",
            Repair::PrefixDiscarded => "prefix_discarded",
            Repair::SuffixDiscarded => "suffix_discarded",
            Repair::MultipleObjects => "multiple_objects",
            Repair::NumericStringCoerced => "numeric_string_coerced",
            Repair::QidCaseAlias => "qid_case_alias",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub predictions: BTreeMap<String, u32>,
    pub rationale: Option<BTreeMap<String, String>>,
    pub repairs: Vec<Repair>,
    pub raw: String,
}

/// Question id -> number of options.
pub type Expected = BTreeMap<String, u32>;

// A JSON tree that keeps duplicate keys and key order, which
// `serde_json::Value` silently collapses.
#[derive(Debug, Clone, PartialEq)]
enum Json {
    Null,
    Bool(bool),
    Num(serde_json::Number),
    Str(String),
    Arr(Vec<Json>),
    Obj(Vec<(String, Json)>),
}

impl<'de> Deserialize<'de> for Json {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Json;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("any JSON value")
            }
            fn visit_unit<E>(self) -> Result<Json, E> {
                Ok(Json::Null)
            }
            fn visit_bool<E>(self, v: bool) -> Result<Json, E> {
                Ok(Json::Bool(v))
            }
            fn visit_i64<E>(self, v: i64) -> Result<Json, E> {
                Ok(Json::Num(v.into()))
            }
            fn visit_u64<E>(self, v: u64) -> Result<Json, E> {
                Ok(Json::Num(v.into()))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Json, E> {
                serde_json::Number::from_f64(v)
                    .map(Json::Num)
                    .ok_or_else(|| E::custom("non-finite number"))
            }
            fn visit_str<E>(self, v: &str) -> Result<Json, E> {
                Ok(Json::Str(v.to_string()))
            }
            fn visit_string<E>(self, v: String) -> Result<Json, E> {
                Ok(Json::Str(v))
            }
            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Json, A::Error> {
                let mut out = Vec::new();
                while let Some(v) = seq.next_element()? {
                    out.push(v);
                }
                Ok(Json::Arr(out))
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Json, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Json>()? {
                    out.push((k, v));
                }
                Ok(Json::Obj(out))
            }
        }
        d.deserialize_any(V)
    }
}

impl Json {
    fn type_name(&self) -> &'static str {
        match self {
            Json::Null => "null",
            Json::Bool(_) => "boolean",
            Json::Num(_) => "number",
            Json::Str(_) => "string",
            Json::Arr(_) => "array",
            Json::Obj(_) => "object",
        }
    }
}

struct Ctx<'a> {
    raw: &'a str,
}

impl Ctx<'_> {
    fn err(&self, kind: ErrorKind, detail: impl Into<String>) -> ParseError {
        ParseError {
            kind,
            detail: detail.into(),
            raw: self.raw.to_string(),
        }
    }
}

fn parse_tree(ctx: &Ctx, text: &str) -> Result<Json, ParseError> {
    serde_json::from_str::<Json>(text).map_err(|e| ctx.err(ErrorKind::MalformedJson, e.to_string()))
}

fn check_unique(ctx: &Ctx, entries: &[(String, Json)], what: &str) -> Result<(), ParseError> {
    let mut seen = std::collections::BTreeSet::new();
    for (k, _) in entries {
        if !seen.insert(k.as_str()) {
            return Err(ctx.err(
                ErrorKind::DuplicateKey,
                format!("key {k:?} repeated in {what}"),
            ));
        }
    }
    Ok(())
}

/// Validate a parsed tree with strict semantics.
fn validate(
    ctx: &Ctx,
    tree: Json,
    expected: &Expected,
    repairs: Vec<Repair>,
) -> Result<PredictionSet, ParseError> {
    let Json::Obj(top) = tree else {
        return Err(ctx.err(
            ErrorKind::NotAnObject,
            format!("top level is a {}", tree.type_name()),
        ));
    };
    check_unique(ctx, &top, "top-level object")?;

    let wrapped =
        top.iter().any(|(k, _)| k == "predictions") && !expected.contains_key("predictions");
    let (pred_entries, rationale) = if wrapped {
        let mut preds = None;
        let mut reasoning = None;
        for (k, v) in top {
            match k.as_str() {
                "predictions" => preds = Some(v),
                "reasoning" => reasoning = Some(v),
                _ => {
                    return Err(ctx.err(
                        ErrorKind::ExtraTopLevelKey,
                        format!("unexpected top-level key {k:?}"),
                    ))
                }
            }
        }
        let preds = match preds {
            Some(Json::Obj(e)) => e,
            Some(other) => {
                return Err(ctx.err(
                    ErrorKind::NotAnObject,
                    format!("\"predictions\" is a {}", other.type_name()),
                ))
            }
            None => unreachable!("wrapped form has a predictions key"),
        };
        check_unique(ctx, &preds, "\"predictions\"")?;
        let rationale = match reasoning {
            None => None,
            Some(Json::Obj(e)) => {
                check_unique(ctx, &e, "\"reasoning\"")?;
                let mut map = BTreeMap::new();
                for (k, v) in e {
                    if !expected.contains_key(&k) {
                        return Err(ctx.err(
                            ErrorKind::InvalidReasoning,
                            format!("reasoning for unknown question {k:?}"),
                        ));
                    }
                    match v {
                        Json::Str(s) => {
                            map.insert(k, s);
                        }
                        other => {
                            return Err(ctx.err(
                                ErrorKind::InvalidReasoning,
                                format!("reasoning for {k:?} is a {}", other.type_name()),
                            ))
                        }
                    }
                }
                Some(map)
            }
            Some(other) => {
                return Err(ctx.err(
                    ErrorKind::InvalidReasoning,
                    format!("\"reasoning\" is a {}", other.type_name()),
                ))
            }
        };
        (preds, rationale)
    } else {
        (top, None)
    };

    let mut predictions = BTreeMap::new();
    for (qid, v) in pred_entries {
        let Some(&count) = expected.get(&qid) else {
            return Err(ctx.err(
                ErrorKind::UnknownQid,
                format!("unexpected question id {qid:?}"),
            ));
        };
        let option = match &v {
            Json::Num(n) => match (n.as_u64(), n.as_i64()) {
                (Some(o), _) => o,
                // negative integers are integers, just out of range
                (None, Some(o)) => {
                    return Err(ctx.err(
                        ErrorKind::OutOfRangeOption,
                        format!("{qid}: option {o} outside 1..={count}"),
                    ))
                }
                _ => {
                    return Err(ctx.err(
                        ErrorKind::NonIntegerOption,
                        format!("{qid}: option {n} is not an integer"),
                    ))
                }
            },
            other => {
                return Err(ctx.err(
                    ErrorKind::NonIntegerOption,
                    format!(
                        "{qid}: option is a {}, expected an integer",
                        other.type_name()
                    ),
                ))
            }
        };
        if option == 0 || option > u64::from(count) {
            return Err(ctx.err(
                ErrorKind::OutOfRangeOption,
                format!("{qid}: option {option} outside 1..={count}"),
            ));
        }
        predictions.insert(qid, option as u32);
    }
    let missing: Vec<&str> = expected
        .keys()
        .filter(|q| !predictions.contains_key(*q))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(ctx.err(
            ErrorKind::MissingQid,
            format!("no prediction for {}", missing.join(", ")),
        ));
    }
    Ok(PredictionSet {
        predictions,
        rationale,
        repairs,
        raw: ctx.raw.to_string(),
    })
}

pub fn parse_strict(text: &str, expected: &Expected) -> Result<PredictionSet, ParseError> {
    let ctx = Ctx { raw: text };
    if expected.is_empty() {
        return Err(ctx.err(
            ErrorKind::NoExpectedQuestions,
            "expected question set is empty",
        ));
    }
    let tree = parse_tree(&ctx, text)?;
    validate(&ctx, tree, expected, Vec::new())
}

/// Content of the first code fence, without the info string.
fn strip_fence(text: &str) -> Option<&str> {
    let open = text.find("```")?;
    let after = &text[open + 3..];
    let body_start = after.find('\n').map(|i| i + 1).unwrap_or(after.len());
    let body = &after[body_start..];
    Some(match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    })
}

/// Byte range of the first balanced `{...}` in `text`, string-aware.
fn first_object(text: &str) -> Option<(usize, usize)> {
    let bytes = text.as_bytes();
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_str {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some((start, i + 1));
                }
            }
            _ => {}
        }
    }
    None
}

fn coerce_numeric_strings(entries: &mut [(String, Json)]) -> bool {
    let mut changed = false;
    for (_, v) in entries.iter_mut() {
        if let Json::Str(s) = v {
            if let Ok(n) = s.trim().parse::<u64>() {
                *v = Json::Num(n.into());
                changed = true;
            }
        }
    }
    changed
}

fn alias_keys(entries: &mut [(String, Json)], expected: &Expected) -> bool {
    let mut changed = false;
    for (k, _) in entries.iter_mut() {
        if expected.contains_key(k.as_str()) {
            continue;
        }
        let mut hits = expected.keys().filter(|q| q.eq_ignore_ascii_case(k));
        if let (Some(hit), None) = (hits.next(), hits.next()) {
            *k = hit.clone();
            changed = true;
        }
    }
    changed
}

/// Strict parse first; on failure repair in a fixed order (fence strip,
/// first balanced object, numeric-string coercion, case-insensitive qid
/// aliases) and validate strictly. Every applied repair is recorded.
pub fn parse_lenient(text: &str, expected: &Expected) -> Result<PredictionSet, ParseError> {
    let strict_err = match parse_strict(text, expected) {
        Ok(set) => return Ok(set),
        Err(e) if e.kind == ErrorKind::NoExpectedQuestions => return Err(e),
        Err(e) => e,
    };
    let ctx = Ctx { raw: text };
    let mut repairs = Vec::new();
    let mut body = text;
    if let Some(inner) = strip_fence(body) {
        repairs.push(Repair::FenceStripped);
        body = inner;
    }
    let Some((start, end)) = first_object(body) else {
        let kind = if body.contains('{') {
            ErrorKind::MalformedJson
        } else {
            ErrorKind::NoJsonFound
        };
        return Err(ctx.err(
            kind,
            format!("no balanced JSON object (strict: {})", strict_err.detail),
        ));
    };
    if !body[..start].trim().is_empty() {
        repairs.push(Repair::PrefixDiscarded);
    }
    let rest = &body[end..];
    if !rest.trim().is_empty() {
        repairs.push(Repair::SuffixDiscarded);
        if first_object(rest).is_some() {
            repairs.push(Repair::MultipleObjects);
        }
    }
    let mut tree = parse_tree(&ctx, &body[start..end])?;

    if let Json::Obj(top) = &mut tree {
        let wrapped =
            top.iter().any(|(k, _)| k == "predictions") && !expected.contains_key("predictions");
        let mut coerced = false;
        let mut aliased = false;
        if wrapped {
            for (k, v) in top.iter_mut() {
                if let Json::Obj(inner) = v {
                    if k == "predictions" {
                        coerced |= coerce_numeric_strings(inner);
                    }
                    if k == "predictions" || k == "reasoning" {
                        aliased |= alias_keys(inner, expected);
                    }
                }
            }
        } else {
            coerced = coerce_numeric_strings(top);
            aliased = alias_keys(top, expected);
        }
        if coerced {
            repairs.push(Repair::NumericStringCoerced);
        }
        if aliased {
            repairs.push(Repair::QidCaseAlias);
        }
    }
    validate(&ctx, tree, expected, repairs)
}

/// Canonical single-line completion: keys in the given order, `", "` and
/// `": "` separators. With a rationale the two-key form is produced.
pub fn render_completion(
    predictions: &[(String, u32)],
    rationale: Option<&BTreeMap<String, String>>,
) -> String {
    let preds = predictions
        .iter()
        .map(|(q, o)| format!("{}: {o}", json_str(q)))
        .collect::<Vec<_>>()
        .join(", ");
    match rationale {
        None => format!("{{{preds}}}"),
        Some(r) => {
            let reasons = predictions
                .iter()
                .filter_map(|(q, _)| {
                    r.get(q)
                        .map(|t| format!("{}: {}", json_str(q), json_str(t)))
                })
                .collect::<Vec<_>>()
                .join(", ");
            format!("{{\"predictions\": {{{preds}}}, \"reasoning\": {{{reasons}}}}}")
        }
    }
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialize")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp(pairs: &[(&str, u32)]) -> Expected {
        pairs.iter().map(|(q, n)| (q.to_string(), *n)).collect()
    }

    fn kind(r: Result<PredictionSet, ParseError>) -> ErrorKind {
        r.unwrap_err().kind
    }

    #[test]
    fn bare_form() {
        let set = parse_strict(r#"{"Q4": 5, "Q5": 3}"#, &exp(&[("Q4", 5), ("Q5", 5)])).unwrap();
        assert_eq!(
            set.predictions,
            BTreeMap::from([("Q4".into(), 5), ("Q5".into(), 3)])
        );
        assert!(set.repairs.is_empty() && set.rationale.is_none());
    }

    #[test]
    fn wrapped_form() {
        let set = parse_strict(
            r#"{"predictions": {"Q4": 2}, "reasoning": {"Q4": "x"}}"#,
            &exp(&[("Q4", 5)]),
        )
        .unwrap();
        assert_eq!(set.predictions["Q4"], 2);
        assert_eq!(set.rationale.unwrap()["Q4"], "x");
    }

    #[test]
    fn strict_error_kinds() {
        let e = exp(&[("Q4", 5)]);
        assert_eq!(
            kind(parse_strict(r#"{"Q4": 9}"#, &e)),
            ErrorKind::OutOfRangeOption
        );
        assert_eq!(
            kind(parse_strict(r#"{"Q4": 0}"#, &e)),
            ErrorKind::OutOfRangeOption
        );
        assert_eq!(
            kind(parse_strict(r#"{"Q4": -1}"#, &e)),
            ErrorKind::OutOfRangeOption
        );
        assert_eq!(
            kind(parse_strict(r#"{"Q4": 2.5}"#, &e)),
            ErrorKind::NonIntegerOption
        );
        assert_eq!(
            kind(parse_strict(r#"{"Q4": "2"}"#, &e)),
            ErrorKind::NonIntegerOption
        );
        assert_eq!(
            kind(parse_strict(r#"{"Q4": 2, "Q9": 1}"#, &e)),
            ErrorKind::UnknownQid
        );
        assert_eq!(kind(parse_strict(r#"{}"#, &e)), ErrorKind::MissingQid);
        assert_eq!(
            kind(parse_strict(r#"{"Q4": 2, "Q4": 3}"#, &e)),
            ErrorKind::DuplicateKey
        );
        assert_eq!(kind(parse_strict(r#"[1]"#, &e)), ErrorKind::NotAnObject);
        assert_eq!(
            kind(parse_strict(r#"{"Q4": 2"#, &e)),
            ErrorKind::MalformedJson
        );
        assert_eq!(
            kind(parse_strict(
                r#"{"predictions": {"Q4": 2}, "extra": 1}"#,
                &e
            )),
            ErrorKind::ExtraTopLevelKey
        );
        assert_eq!(
            kind(parse_strict(
                r#"{"predictions": {"Q4": 2}, "reasoning": {"Q4": 1}}"#,
                &e
            )),
            ErrorKind::InvalidReasoning
        );
        assert_eq!(
            kind(parse_strict(r#"{"Q4": 2}"#, &Expected::new())),
            ErrorKind::NoExpectedQuestions
        );
    }

    #[test]
    fn error_carries_raw() {
        let err = parse_lenient("no json here", &exp(&[("Q4", 5)])).unwrap_err();
        assert_eq!(err.kind, ErrorKind::NoJsonFound);
        assert_eq!(err.raw, "no json here");
    }

    #[test]
    fn codes_are_distinct() {
        let codes: std::collections::BTreeSet<_> =
            ErrorKind::ALL.iter().map(|k| k.code()).collect();
        assert_eq!(codes.len(), ErrorKind::ALL.len());
    }

    #[test]
    fn lenient_repairs() {
        let e = exp(&[("Q4", 5)]);
        let set = parse_lenient("```json\n{\"Q4\": 5}\n```", &e).unwrap();
        assert_eq!(set.predictions["Q4"], 5);
        assert_eq!(set.repairs, vec![Repair::FenceStripped]);

        let set = parse_lenient("Sure! {\"Q4\": 5} hope this helps", &e).unwrap();
        assert_eq!(
            set.repairs,
            vec![Repair::PrefixDiscarded, Repair::SuffixDiscarded]
        );

        let set = parse_lenient("{\"q4\": \"5\"}", &e).unwrap();
        assert_eq!(set.predictions["Q4"], 5);
        assert_eq!(
            set.repairs,
            vec![Repair::NumericStringCoerced, Repair::QidCaseAlias]
        );

        let set = parse_lenient("{\"Q4\": 1} {\"Q4\": 2}", &e).unwrap();
        assert_eq!(set.predictions["Q4"], 1);
        assert_eq!(
            set.repairs,
            vec![Repair::SuffixDiscarded, Repair::MultipleObjects]
        );
    }

    #[test]
    fn lenient_braces_inside_strings() {
        let e = exp(&[("Q4", 5)]);
        let text = r#"note: {"predictions": {"Q4": 3}, "reasoning": {"Q4": "a } brace"}} end"#;
        let set = parse_lenient(text, &e).unwrap();
        assert_eq!(set.predictions["Q4"], 3);
        assert_eq!(set.rationale.unwrap()["Q4"], "a } brace");
    }

    #[test]
    fn lenient_still_validates() {
        let e = exp(&[("Q4", 5)]);
        assert_eq!(
            kind(parse_lenient("answer {\"Q4\": 7}", &e)),
            ErrorKind::OutOfRangeOption
        );
        assert_eq!(
            kind(parse_lenient("answer {\"Q4\": 7", &e)),
            ErrorKind::MalformedJson
        );
    }

    #[test]
    fn render_forms() {
        let preds = vec![("Q4".to_string(), 5), ("Q5".to_string(), 3)];
        assert_eq!(render_completion(&preds[..1], None), r#"{"Q4": 5}"#);
        let why = BTreeMap::from([("Q4".to_string(), "a \"quote\"".to_string())]);
        let text = render_completion(&preds, Some(&why));
        assert!(
            text.starts_with(r#"{"predictions": {"Q4": 5, "Q5": 3}, "reasoning": {"Q4": "#),
            "{text}"
        );
        let set = parse_strict(&text, &exp(&[("Q4", 5), ("Q5", 5)])).unwrap();
        assert_eq!(set.rationale.unwrap()["Q4"], "a \"quote\"");
    }
}
