use super::ScenarioConfig;

const BUILTINS: &[(&str, &str)] = &[
    (
        "grid_gamma1",
        include_str!("../../scenarios/grid_gamma1.json"),
    ),
    (
        "grid_gamma3",
        include_str!("../../scenarios/grid_gamma3.json"),
    ),
    (
        "grid_gamma5",
        include_str!("../../scenarios/grid_gamma5.json"),
    ),
    ("two_level", include_str!("../../scenarios/two_level.json")),
    (
        "density_a1",
        include_str!("../../scenarios/density_a1.json"),
    ),
    (
        "density_a5",
        include_str!("../../scenarios/density_a5.json"),
    ),
    ("event_9x9", include_str!("../../scenarios/event_9x9.json")),
    (
        "roadblock_9x9",
        include_str!("../../scenarios/roadblock_9x9.json"),
    ),
    (
        "initial_location",
        include_str!("../../scenarios/initial_location.json"),
    ),
    (
        "us101_standin",
        include_str!("../../scenarios/us101_standin.json"),
    ),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(n, _)| *n)
}

/// A shipped scenario by name (with or without `.json`).
pub fn builtin(name: &str) -> Option<ScenarioConfig> {
    let name = name.strip_suffix(".json").unwrap_or(name);
    BUILTINS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| ScenarioConfig::from_json(text).expect("shipped scenarios are valid"))
}
