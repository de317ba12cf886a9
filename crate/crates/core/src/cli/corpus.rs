//! The tiny-world corpus shipped with the binary.

use std::path::Path;

use serde_json::Value;

use super::CliError;
use crate::experiments::TinyWorld;

/// `(file name, JSON)` for every shipped world.
pub const SHIPPED: &[(&str, &str)] = &[
    ("constant.json", include_str!("../../worlds/constant.json")),
    ("identity.json", include_str!("../../worlds/identity.json")),
    ("two_point_erm.json", include_str!("../../worlds/two_point_erm.json")),
    (
        "gibbs_three_points.json",
        include_str!("../../worlds/gibbs_three_points.json"),
    ),
    (
        "network_sum_relu.json",
        include_str!("../../worlds/network_sum_relu.json"),
    ),
    (
        "network_two_stage.json",
        include_str!("../../worlds/network_two_stage.json"),
    ),
];

pub fn shipped_worlds() -> Result<Vec<TinyWorld>, CliError> {
    SHIPPED
        .iter()
        .map(|(name, text)| {
            TinyWorld::from_json(text).map_err(|e| CliError::Runtime(format!("shipped world {name}: {e}")))
        })
        .collect()
}

/// Every `*.json` in `dir`, in file-name order.
pub fn read_dir(dir: &Path) -> Result<Vec<Value>, CliError> {
    let cfg = |e: std::io::Error| CliError::Config(format!("{}: {e}", dir.display()));
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(cfg)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(cfg)?;
    paths.retain(|p| p.extension().and_then(|e| e.to_str()) == Some("json"));
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Config(format!("{} holds no .json worlds", dir.display())));
    }
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(cfg)?;
            let mut v: Value =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            if let (Some(obj), Some(stem)) = (v.as_object_mut(), p.file_stem().and_then(|s| s.to_str())) {
                obj.entry("name").or_insert_with(|| stem.into());
            }
            Ok(v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{lemma4_soundness_check, tiny_world_exact};

    #[test]
    fn shipped_worlds_parse_and_hold() {
        let worlds = shipped_worlds().unwrap();
        assert_eq!(worlds.len(), SHIPPED.len());
        for w in &worlds {
            let s = lemma4_soundness_check(w).unwrap();
            assert!(s.holds, "{:?}: {s:?}", w.name);
        }
    }

    #[test]
    fn constant_world_is_zero() {
        let w = TinyWorld::from_json(SHIPPED[0].1).unwrap();
        let r = tiny_world_exact(&w).unwrap();
        assert_eq!(r.mi_s_w, 0.0);
        assert_eq!(r.exact_gap, 0.0);
    }
}
