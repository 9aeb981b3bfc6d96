//! Experiment files shipped with the crate, selectable as `preset:NAME`.

/// `(name, description, toml)`.
pub const PRESETS: &[(&str, &str, &str)] = &[
    (
        "desk_stage1",
        "decoder pretraining at desk scale (2e5 sim steps)",
        include_str!("../../../../configs/desk_stage1.toml"),
    ),
    (
        "desk_stage2",
        "task learning at desk scale (2000 high-level steps)",
        include_str!("../../../../configs/desk_stage2.toml"),
    ),
    (
        "desk_baseline",
        "flat SAC with the desk-scale low-level budget (1e5 steps)",
        include_str!("../../../../configs/desk_baseline.toml"),
    ),
    (
        "oracle",
        "tabular decomposition oracle and critic fit",
        include_str!("../../../../configs/oracle.toml"),
    ),
    (
        "full_stage1",
        "decoder pretraining with the full-size defaults, 10 agents",
        include_str!("../../../../configs/full_stage1.toml"),
    ),
    (
        "full_stage2",
        "task learning with the full-size defaults, 10 agents",
        include_str!("../../../../configs/full_stage2.toml"),
    ),
];

pub fn get(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|p| p.0 == name).map(|p| p.2)
}
