use std::fs;
use std::path::Path;

use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use slitflight::pipeline::StageTimings;
use slitflight::ScenarioConfig;

/// SHA-256 of the canonical key=value rendering, which lists every parameter.
pub fn config_hash(config: &ScenarioConfig) -> String {
    let digest = Sha256::digest(config.to_kv_string().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub struct RunManifest<'a> {
    pub command: &'a str,
    pub config: &'a ScenarioConfig,
    pub seed: Option<u64>,
    pub timings: &'a StageTimings,
    pub outputs: Vec<String>,
    pub summary: Value,
}

impl RunManifest<'_> {
    fn to_json(&self) -> Value {
        json!({
            "command": self.command,
            "scenario": self.config.name,
            "seed": self.seed,
            "config_hash": config_hash(self.config),
            "tool_version": env!("CARGO_PKG_VERSION"),
            "timings_s": {
                "solve": self.timings.solve,
                "guidance": self.timings.guidance,
                "trajectories": self.timings.trajectories,
                "flux": self.timings.flux,
            },
            "outputs": self.outputs,
            "summary": self.summary,
        })
    }

    /// Writes `manifest.json` via a temporary file and a rename.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let tmp = dir.join("manifest.json.tmp");
        let text = serde_json::to_string_pretty(&self.to_json()).map_err(std::io::Error::other)?;
        fs::write(&tmp, text + "\n")?;
        fs::rename(&tmp, dir.join("manifest.json"))
    }
}
