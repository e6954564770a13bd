//! Tool runners: turn a [`JobSpec`] into an external-program invocation and a
//! verdict. The queue server core stays independent of any particular tool;
//! a runner is selected by name from the registry at config-validation time.

mod generic;
mod mock;

pub use generic::GenericCommandRunner;
pub use mock::MockRunner;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::model::JobSpec;

/// Runner settings from the server config (`runner.<key>=<value>` lines).
#[derive(Debug, Clone, Default)]
pub struct RunnerSettings {
    pairs: Vec<(String, String)>,
}

impl RunnerSettings {
    pub fn new(pairs: Vec<(String, String)>) -> Self {
        RunnerSettings { pairs }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

/// Fully substituted invocation: program + args, no `{…}` placeholders left.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvocationPlan {
    pub argv: Vec<String>,
    pub working_dir: PathBuf,
    pub timeout: Option<Duration>,
    pub env_additions: Vec<(String, String)>,
}

/// How the executed program ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecStatus {
    Exited(i32),
    Signaled(i32),
    /// Killed after exceeding the plan timeout.
    TimedOut,
}

#[derive(Debug, Clone)]
pub struct ExecRecord {
    pub status: ExecStatus,
    pub stdout_path: PathBuf,
    pub stderr_path: PathBuf,
    pub duration: Duration,
}

/// Where execute() must write the captured stdout/stderr.
#[derive(Debug, Clone)]
pub struct CaptureTarget {
    pub stdout_path: PathBuf,
    pub stderr_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Succeeded,
    Failed(String),
}

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("unresolved placeholder {{{0}}}")]
    UnresolvedPlaceholder(String),
    #[error("runner setting {0:?} is missing or invalid")]
    BadSetting(String),
    #[error("cannot spawn {program:?}: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("io error during execution: {0}")]
    Io(#[from] std::io::Error),
}

pub trait Runner: Send + Sync {
    fn name(&self) -> &'static str;

    /// Pure: no side effects, deterministic for a given (job, settings).
    fn plan(&self, job: &JobSpec, settings: &RunnerSettings) -> Result<InvocationPlan, RunnerError>;

    fn execute(
        &self,
        plan: &InvocationPlan,
        capture: &CaptureTarget,
    ) -> Result<ExecRecord, RunnerError>;

    fn check_result(
        &self,
        job: &JobSpec,
        record: &ExecRecord,
        settings: &RunnerSettings,
    ) -> Verdict;
}

/// Substitute `{name}` placeholders inside one argv token. Substitution is
/// token-level: the replacement value never re-splits the token, so paths
/// with spaces stay one argument.
pub fn substitute_token(token: &str, job: &JobSpec) -> Result<String, RunnerError> {
    let mut out = String::with_capacity(token.len());
    let mut rest = token;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let close = after
            .find('}')
            .ok_or_else(|| RunnerError::UnresolvedPlaceholder(after.to_string()))?;
        let name = &after[..close];
        let value = job
            .placeholder_value(name)
            .ok_or_else(|| RunnerError::UnresolvedPlaceholder(name.to_string()))?;
        out.push_str(&value);
        rest = &after[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

#[derive(Debug, Error)]
#[error("unknown runner {name:?}; available: {available}")]
pub struct UnknownRunner {
    pub name: String,
    pub available: String,
}

/// Startup-time registry keyed by runner name. Built-ins: `generic_command`
/// and `mock`.
pub struct RunnerRegistry {
    runners: BTreeMap<&'static str, Arc<dyn Runner>>,
}

impl RunnerRegistry {
    pub fn builtin() -> Self {
        let mut reg = RunnerRegistry {
            runners: BTreeMap::new(),
        };
        reg.register(Arc::new(GenericCommandRunner));
        reg.register(Arc::new(MockRunner));
        reg
    }

    pub fn register(&mut self, runner: Arc<dyn Runner>) {
        self.runners.insert(runner.name(), runner);
    }

    pub fn resolve(&self, name: &str) -> Result<Arc<dyn Runner>, UnknownRunner> {
        self.runners.get(name).cloned().ok_or_else(|| UnknownRunner {
            name: name.to_string(),
            available: self
                .runners
                .keys()
                .copied()
                .collect::<Vec<_>>()
                .join(", "),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn job() -> JobSpec {
        JobSpec {
            job_id: "j1".into(),
            tool: "mock".into(),
            source: "/data/my image.raw".into(),
            source_root: "/data".into(),
            output: "/out dir".into(),
            case_id: "c9".into(),
            evidence_name: "hdd".into(),
            requested_by: "inv".into(),
            created_utc: Utc.with_ymd_and_hms(2014, 7, 1, 8, 0, 0).unwrap(),
            seq: 0,
            params: vec![("depth".into(), "3".into())],
        }
    }

    #[test]
    fn substitute_keeps_spaces_in_one_token() {
        let got = substitute_token("{source}", &job()).unwrap();
        assert_eq!(got, "/data/my image.raw");
    }

    #[test]
    fn substitute_param_and_mixed_text() {
        let got = substitute_token("--depth={param.depth}", &job()).unwrap();
        assert_eq!(got, "--depth=3");
    }

    #[test]
    fn unknown_placeholder_errors() {
        let err = substitute_token("{param.missing}", &job()).unwrap_err();
        assert!(matches!(err, RunnerError::UnresolvedPlaceholder(_)));
    }

    #[test]
    fn registry_resolves_builtins() {
        let reg = RunnerRegistry::builtin();
        assert!(reg.resolve("mock").is_ok());
        assert!(reg.resolve("generic_command").is_ok());
        let Err(err) = reg.resolve("no_such") else {
            panic!("no_such must not resolve");
        };
        assert!(err.to_string().contains("generic_command"));
        assert!(err.to_string().contains("mock"));
    }
}
