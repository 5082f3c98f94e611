//! `key=value` overrides applied to the parsed document before decoding.

use serde_json::Value;

use crate::error::FieldError;
use crate::locate::{parse_path, Segment};

#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: String,
    pub value: Value,
}

impl Override {
    /// Parses `a.b[1]=value`. The value is read as JSON and falls back to a
    /// plain string, so `solver=shooting` needs no quotes.
    pub fn parse(raw: &str) -> Result<Self, FieldError> {
        let Some((path, value)) = raw.split_once('=') else {
            return Err(FieldError::new(
                raw,
                "override must have the form key=value",
            ));
        };
        let path = path.trim();
        if path.is_empty() {
            return Err(FieldError::new(raw, "override key is empty"));
        }
        let value = serde_json::from_str(value.trim())
            .unwrap_or_else(|_| Value::String(value.trim().to_string()));
        Ok(Self {
            path: path.to_string(),
            value,
        })
    }

    pub fn apply(&self, doc: &mut Value) -> Result<(), FieldError> {
        let segments = parse_path(&self.path);
        let Some((last, parents)) = segments.split_last() else {
            return Err(FieldError::new(&self.path, "override key is empty"));
        };
        let mut node = doc;
        for seg in parents {
            node = match (node, seg) {
                (Value::Object(map), Segment::Key(k)) => map
                    .entry(k.clone())
                    .or_insert_with(|| Value::Object(Default::default())),
                (Value::Array(items), Segment::Index(i)) => {
                    let len = items.len();
                    items.get_mut(*i).ok_or_else(|| {
                        FieldError::new(
                            &self.path,
                            format!("index {i} out of range (length {len})"),
                        )
                    })?
                }
                _ => return Err(self.mismatch(seg)),
            };
        }
        match (node, last) {
            (Value::Object(map), Segment::Key(k)) => {
                map.insert(k.clone(), self.value.clone());
            }
            (Value::Array(items), Segment::Index(i)) if *i < items.len() => {
                items[*i] = self.value.clone();
            }
            (Value::Array(items), Segment::Index(i)) if *i == items.len() => {
                items.push(self.value.clone());
            }
            (Value::Array(items), Segment::Index(i)) => {
                let len = items.len();
                return Err(FieldError::new(
                    &self.path,
                    format!("index {i} out of range (length {len})"),
                ));
            }
            _ => return Err(self.mismatch(last)),
        }
        Ok(())
    }

    fn mismatch(&self, seg: &Segment) -> FieldError {
        let what = match seg {
            Segment::Key(k) => format!("cannot set key `{k}` on a non-object"),
            Segment::Index(i) => format!("cannot index [{i}] into a non-array"),
        };
        FieldError::new(&self.path, what)
    }

    /// True when this override wrote `field` or one of its ancestors.
    pub fn covers(&self, field: &str) -> bool {
        let mine = parse_path(&self.path);
        let theirs = parse_path(field);
        theirs.len() >= mine.len() && theirs[..mine.len()] == mine[..]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn values_parse_as_json_or_string() {
        assert_eq!(Override::parse("horizon=12").unwrap().value, json!(12));
        assert_eq!(
            Override::parse("boundary.xf=[1, 0]").unwrap().value,
            json!([1, 0])
        );
        assert_eq!(
            Override::parse("solver=shooting").unwrap().value,
            json!("shooting")
        );
        assert!(Override::parse("horizon").is_err());
    }

    #[test]
    fn dotted_paths_create_objects_and_index_arrays() {
        let mut doc = json!({"banned_frequencies": [[1], [2]]});
        Override::parse("options.tolerance=1e-6")
            .unwrap()
            .apply(&mut doc)
            .unwrap();
        Override::parse("banned_frequencies.1=[3]")
            .unwrap()
            .apply(&mut doc)
            .unwrap();
        Override::parse("banned_frequencies[2]=[]")
            .unwrap()
            .apply(&mut doc)
            .unwrap();
        assert_eq!(
            doc,
            json!({"banned_frequencies": [[1], [3], []], "options": {"tolerance": 1e-6}})
        );
        assert!(Override::parse("banned_frequencies.5=[]")
            .unwrap()
            .apply(&mut doc)
            .is_err());
        assert!(Override::parse("options.tolerance.x=1")
            .unwrap()
            .apply(&mut doc)
            .is_err());
    }

    #[test]
    fn coverage_is_prefix_based() {
        let o = Override::parse("boundary.x0=[1]").unwrap();
        assert!(o.covers("boundary.x0[0]"));
        assert!(!o.covers("boundary.xf"));
    }
}
