//! The five subcommands and the artifact plumbing they share.

pub mod collect;
pub mod compare;
pub mod run;
pub mod search;
pub mod train;

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use high_mpc::mpc::{MpcSolution, MpcSolver};

use crate::config::RunConfig;
use crate::CliError;

/// Everything a command needs: the effective config (after flag
/// overrides) and the digest of the file it came from.
pub struct Context {
    pub config: RunConfig,
    pub config_sha256: String,
}

impl Context {
    /// The output directory, created on first use.
    pub fn out_dir(&self) -> Result<&Path, CliError> {
        let dir = self.config.output_dir.as_path();
        std::fs::create_dir_all(dir).map_err(|e| {
            CliError::runtime(format!("cannot create output directory {}: {e}", dir.display()))
        })?;
        Ok(dir)
    }

    pub fn write_text(&self, filename: &str, contents: &str) -> Result<PathBuf, CliError> {
        let path = self.out_dir()?.join(filename);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }

    /// Write `<command>.manifest.json`: experiment identity, config
    /// digest, seed, and whatever the command wants on record. Rerunning
    /// the command must reproduce this file exactly, so nothing
    /// time- or host-dependent belongs in `extra`.
    pub fn write_manifest(&self, command: &str, extra: Value) -> Result<PathBuf, CliError> {
        let mut manifest = json!({
            "experiment": self.config.name,
            "command": command,
            "config_sha256": self.config_sha256,
            "seed": self.config.seed,
            "workers": self.config.workers,
        });
        if let (Some(base), Some(add)) = (manifest.as_object_mut(), extra.as_object()) {
            for (k, v) in add {
                base.insert(k.clone(), v.clone());
            }
        }
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::runtime(format!("cannot encode manifest: {e}")))?;
        self.write_text(&format!("{command}.manifest.json"), &(text + "\n"))
    }

    pub fn solver(&self) -> Result<MpcSolver, CliError> {
        MpcSolver::new(self.config.mpc.clone())
            .map_err(|e| CliError::validation(format!("mpc: {e}")))
    }
}

/// An open-loop plan as CSV: one row per stage, the terminal state with
/// empty command fields. Columns match the episode logs where they
/// overlap.
pub fn plan_csv(solution: &MpcSolution, dt: f64) -> String {
    use std::fmt::Write;
    let mut out = String::from(
        "t,p_x,p_y,p_z,v_x,v_y,v_z,q_w,q_x,q_y,q_z,thrust,omega_x,omega_y,omega_z\n",
    );
    for (k, state) in solution.states.iter().enumerate() {
        write!(out, "{:.16e},", k as f64 * dt).expect("writing to a String cannot fail");
        for v in state.to_vector().iter() {
            write!(out, "{v:.16e},").unwrap();
        }
        match solution.commands.get(k) {
            Some(c) => {
                let v = c.to_vector();
                writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e}", v[0], v[1], v[2], v[3]).unwrap()
            }
            None => writeln!(out, ",,,").unwrap(),
        }
    }
    out
}
