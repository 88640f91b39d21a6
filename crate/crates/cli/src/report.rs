use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

/// Machine-readable record of one command run. Everything except `runtime`
/// is a pure function of the inputs and flags.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub command: String,
    pub parameters: BTreeMap<String, Value>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub counts: BTreeMap<String, u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub results: Option<Value>,
    pub runtime: Runtime,
}

#[derive(Debug, Serialize)]
pub struct Runtime {
    pub threads: usize,
    pub timings_ms: Vec<StageTiming>,
}

#[derive(Debug, Serialize)]
pub struct StageTiming {
    pub stage: String,
    pub ms: f64,
}

impl RunReport {
    pub fn new(command: &str) -> Self {
        RunReport {
            command: command.to_string(),
            parameters: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            counts: BTreeMap::new(),
            results: None,
            runtime: Runtime { threads: rayon::current_num_threads(), timings_ms: Vec::new() },
        }
    }

    pub fn param(&mut self, name: &str, value: impl Into<Value>) {
        self.parameters.insert(name.to_string(), value.into());
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.display().to_string());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn count(&mut self, name: &str, value: u64) {
        self.counts.insert(name.to_string(), value);
    }

    /// Runs `f` as a named stage and records its wall-clock time.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let started = Instant::now();
        let out = f();
        self.runtime.timings_ms.push(StageTiming {
            stage: name.to_string(),
            ms: started.elapsed().as_secs_f64() * 1000.0,
        });
        out
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}
