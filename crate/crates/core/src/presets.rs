//! Named run configurations embedded in the crate.

use crate::config::RunConfig;
use crate::markov_flow::RoadNetwork;

const RUNS: [(&str, &str); 8] = [
    ("fig1", include_str!("../presets/fig1.json")),
    ("fig2", include_str!("../presets/fig2.json")),
    ("fig3", include_str!("../presets/fig3.json")),
    ("fig4", include_str!("../presets/fig4.json")),
    ("fig5", include_str!("../presets/fig5.json")),
    ("fig6", include_str!("../presets/fig6.json")),
    ("reliability15", include_str!("../presets/reliability15.json")),
    ("reliability35", include_str!("../presets/reliability35.json")),
];

const NETWORKS: [(&str, &str); 1] = [("diamond", include_str!("../presets/diamond.json"))];

/// Names accepted by [`preset`].
pub fn names() -> impl Iterator<Item = &'static str> {
    RUNS.iter().map(|(name, _)| *name)
}

/// Raw JSON of a run preset.
pub fn preset_json(name: &str) -> Option<&'static str> {
    RUNS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn preset(name: &str) -> Option<RunConfig> {
    preset_json(name).map(|text| RunConfig::from_json(text).expect("embedded presets parse"))
}

/// Road-network presets for the Markov model.
pub fn network_names() -> impl Iterator<Item = &'static str> {
    NETWORKS.iter().map(|(name, _)| *name)
}

pub fn network_preset_json(name: &str) -> Option<&'static str> {
    NETWORKS.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

pub fn network_preset(name: &str) -> Option<RoadNetwork> {
    network_preset_json(name).map(|text| RoadNetwork::from_json(text).expect("embedded networks parse"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_builds() {
        for name in names() {
            let cfg = preset(name).unwrap();
            assert_eq!(cfg.name.as_deref(), Some(name));
            cfg.build().unwrap();
        }
        for name in network_names() {
            network_preset(name).unwrap();
        }
        assert!(preset("fig7").is_none());
    }
}
