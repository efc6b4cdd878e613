//! Scenarios shipped with the binary. Each can be named in place of a file.

pub const NAMES: &[&str] = &[
    "single_link_4flows",
    "step_in_out",
    "fig_maxmin",
    "granularity_sweep",
    "fat_tree_random",
];

pub fn get(name: &str) -> Option<&'static str> {
    Some(match name {
        "single_link_4flows" => include_str!("../scenarios/single_link_4flows.toml"),
        "step_in_out" => include_str!("../scenarios/step_in_out.toml"),
        "fig_maxmin" => include_str!("../scenarios/fig_maxmin.toml"),
        "granularity_sweep" => include_str!("../scenarios/granularity_sweep.toml"),
        "fat_tree_random" => include_str!("../scenarios/fat_tree_random.toml"),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{decode, parse_value, resolve};

    #[test]
    fn every_builtin_resolves() {
        for name in NAMES {
            let text = get(name).unwrap();
            let file = decode(parse_value(text).unwrap()).unwrap();
            assert_eq!(file.name, *name);
            resolve(&file).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        assert!(get("nope").is_none());
    }
}
