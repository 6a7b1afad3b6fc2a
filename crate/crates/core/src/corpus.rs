//! The bundled example corpus (`corpus/v1`).

macro_rules! corpus {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../corpus/v1/", $name)))),*]
    };
}

pub const VERSION: &str = "v1";

/// Every corpus file as `(path relative to the corpus root, contents)`.
pub const FILES: &[(&str, &str)] = corpus![
    "time_transitive.dpol",
    "replay.dpol",
    "replay_rx.dpol",
    "weak_replay.dpol",
    "direct_release.dpol",
    "whitelisting.dpol",
    "fig1_replay.dpol",
    "loop.dpol",
    "static_leak.dpol",
    "static_xor.dpol",
    "static_implicit.dpol",
    "static_upgrade.dpol",
    "static_loop_leak.dpol",
    "static_overwrite.dpol",
    "contexts/t_sanitiser.dpol",
    "contexts/t_hospital.dpol",
    "contexts/r_nsa.dpol",
    "contexts/r_creditcard.dpol",
    "contexts/wr_log.dpol",
    "contexts/wr_ezine.dpol",
    "contexts/d_app.dpol",
    "contexts/d_salary.dpol",
    "contexts/w_key.dpol",
    "contexts/w_report.dpol",
    "fig1.aut",
    "tsp.json",
    "abc.json",
    "abc_restricted.json",
    "wall.json",
    "wall_unrestricted.json",
    "monotone.json",
    "chinese-wall.inv",
    "monotone.inv",
    "table1.json",
];

/// Contents of a corpus file.
pub fn source(name: &str) -> Option<&'static str> {
    FILES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Every `.dpol` program in the corpus.
pub fn programs() -> impl Iterator<Item = (&'static str, &'static str)> {
    FILES.iter().copied().filter(|(n, _)| n.ends_with(".dpol"))
}

/// Two-level programs without policy changes.
pub fn static_programs() -> impl Iterator<Item = (&'static str, &'static str)> {
    programs().filter(|(n, _)| n.starts_with("static_"))
}
