//! JSON-lines diagnostics on stderr.
//!
//! Machine-readable stderr keeps stdout silent and output directories pure:
//! every diagnostic is one JSON object per line. Training progress uses the
//! pinned `{step, loss, lr, wall_ms}` shape; everything else is tagged with
//! an `"event"` key.

use node_arch::StepRecord;
use serde_json::{json, Value};

/// Writes one `{"event": name, ...fields}` line to stderr.
pub fn event(name: &str, fields: Value) {
    let mut line = json!({ "event": name });
    if let (Some(into), Value::Object(map)) = (line.as_object_mut(), fields) {
        into.extend(map);
    }
    eprintln!("{line}");
}

/// Writes one training-step line to stderr.
pub fn step(record: StepRecord) {
    eprintln!(
        "{}",
        json!({
            "step": record.step,
            "loss": record.loss,
            "lr": record.lr,
            "wall_ms": record.wall_ms,
        })
    );
}
