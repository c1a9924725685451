//! JSON document helpers with path-aware schema errors.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tube::{Family, TubeSpec};

/// Parses a JSON document; type errors name the offending field path.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        Error::Schema {
            path,
            message: e.into_inner().to_string(),
        }
    })?;
    de.end().map_err(|e| Error::Schema {
        path: ".".into(),
        message: e.to_string(),
    })?;
    Ok(value)
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json(&std::fs::read_to_string(path)?)
}

/// Pretty JSON with a trailing newline.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

/// Parses and validates a tube spec document.
pub fn parse_spec(text: &str) -> Result<TubeSpec> {
    let spec: TubeSpec = parse_json(text).map_err(|e| refine_family_path(text, e))?;
    spec.validate()?;
    Ok(spec)
}

/// The family is flattened into the spec, which hides the field path of any
/// error inside `params`; re-deserializing just that part recovers it.
fn refine_family_path(text: &str, err: Error) -> Error {
    let Error::Schema { path, .. } = &err else {
        return err;
    };
    if path != "." {
        return err;
    }
    let Ok(serde_json::Value::Object(map)) = serde_json::from_str::<serde_json::Value>(text) else {
        return err;
    };
    let part: serde_json::Map<_, _> = map
        .into_iter()
        .filter(|(k, _)| k == "family" || k == "params")
        .collect();
    match serde_path_to_error::deserialize::<_, Family>(serde_json::Value::Object(part)) {
        Err(e) => Error::Schema {
            path: e.path().to_string(),
            message: e.into_inner().to_string(),
        },
        Ok(_) => err,
    }
}

pub fn load_spec(path: &Path) -> Result<TubeSpec> {
    parse_spec(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spharm::SphereDim;

    #[test]
    fn spec_round_trip_through_text() {
        let t = TubeSpec::default_family("ellipsoid", SphereDim::SPHERE).unwrap();
        let text = to_json_string(&t).unwrap();
        assert_eq!(parse_spec(&text).unwrap(), t);
    }

    #[test]
    fn schema_errors_name_the_path() {
        let text = r#"{"dim": 1, "family": "twisted", "params": {"semi_axes": [1, "x"], "omega": 0.5}, "z_range": [-1, 1]}"#;
        match parse_spec(text) {
            Err(Error::Schema { path, .. }) => assert!(path.contains("semi_axes"), "{path}"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_spec(r#"{"dim": 1, "fam"#),
            Err(Error::Schema { .. })
        ));
        let bad_dim = r#"{"dim": 3, "family": "twisted", "params": {"semi_axes": [1, 2], "omega": 0.5}, "z_range": [-1, 1]}"#;
        assert!(matches!(parse_spec(bad_dim), Err(Error::Schema { .. })));
    }

    #[test]
    fn invalid_parameters_are_reported_after_parsing() {
        let text = r#"{"dim": 1, "family": "cone", "params": {"semi_axes": [1, 1.2], "slope": 1, "apex": 0}, "z_range": [-0.5, 0.5]}"#;
        assert!(matches!(parse_spec(text), Err(Error::DegenerateSection(_))));
    }
}
