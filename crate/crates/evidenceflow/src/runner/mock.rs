//! Deterministic test double used by the queue-server and pipeline tests.
//! Behavior is driven entirely by runner settings; execution touches only the
//! job output directory, the capture files and (if set) the execution log.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::time::{Duration, Instant};

use super::{
    CaptureTarget, ExecRecord, ExecStatus, InvocationPlan, Runner, RunnerError, RunnerSettings,
    Verdict,
};
use crate::model::JobSpec;

/// Settings:
///
/// - `behavior`: `succeed` (default), `fail`, or `hang`
/// - `sleep_ms`: simulated tool duration
/// - `create`: comma-separated filenames written into the job output
/// - `exit_code`: overrides the behavior default (0 for succeed, 2 for fail)
/// - `exec_log`: file receiving one `<job_id>` line per execution, appended
///   atomically (test instrumentation for exactly-once checks)
/// - `timeout_ms`: plan timeout; `hang` sleeps past it and reports a kill
pub struct MockRunner;

fn argv_get<'a>(plan: &'a InvocationPlan, key: &str) -> Option<&'a str> {
    let prefix = format!("{key}=");
    plan.argv
        .iter()
        .skip(1)
        .find_map(|t| t.strip_prefix(prefix.as_str()))
}

impl Runner for MockRunner {
    fn name(&self) -> &'static str {
        "mock"
    }

    fn plan(&self, job: &JobSpec, settings: &RunnerSettings) -> Result<InvocationPlan, RunnerError> {
        let behavior = settings.get("behavior").unwrap_or("succeed");
        if !matches!(behavior, "succeed" | "fail" | "hang") {
            return Err(RunnerError::BadSetting(format!("behavior={behavior}")));
        }
        let default_exit = if behavior == "fail" { "2" } else { "0" };
        let mut argv = vec![
            "mock".to_string(),
            format!("job_id={}", job.job_id),
            format!("behavior={behavior}"),
            format!("sleep_ms={}", settings.get("sleep_ms").unwrap_or("0")),
            format!("exit_code={}", settings.get("exit_code").unwrap_or(default_exit)),
        ];
        if let Some(create) = settings.get("create") {
            argv.push(format!("create={create}"));
        }
        if let Some(log) = settings.get("exec_log") {
            argv.push(format!("exec_log={log}"));
        }
        let timeout = match settings.get("timeout_ms") {
            Some(ms) => Some(Duration::from_millis(ms.parse().map_err(|_| {
                RunnerError::BadSetting(format!("timeout_ms={ms}"))
            })?)),
            None => None,
        };
        Ok(InvocationPlan {
            argv,
            working_dir: job.output.clone(),
            timeout,
            env_additions: vec![],
        })
    }

    fn execute(
        &self,
        plan: &InvocationPlan,
        capture: &CaptureTarget,
    ) -> Result<ExecRecord, RunnerError> {
        let started = Instant::now();
        let job_id = argv_get(plan, "job_id").unwrap_or("unknown");

        // Runner-entry log: appended before any simulated work so every
        // execution is visible exactly once. O_APPEND keeps short concurrent
        // writes whole.
        if let Some(log) = argv_get(plan, "exec_log") {
            let mut f = OpenOptions::new().create(true).append(true).open(log)?;
            // one write_all call so the whole line lands in a single append
            f.write_all(format!("{job_id}\n").as_bytes())?;
        }

        if let Some(ms) = argv_get(plan, "sleep_ms").and_then(|v| v.parse::<u64>().ok()) {
            if ms > 0 {
                std::thread::sleep(Duration::from_millis(ms));
            }
        }

        fs::create_dir_all(&plan.working_dir)?;
        if let Some(create) = argv_get(plan, "create") {
            for name in create.split(',').filter(|n| !n.is_empty()) {
                fs::write(plan.working_dir.join(name), format!("mock output for {job_id}\n"))?;
            }
        }

        fs::write(&capture.stdout_path, format!("mock stdout {job_id}\n"))?;
        fs::write(&capture.stderr_path, "")?;

        let status = match argv_get(plan, "behavior") {
            Some("hang") => {
                let limit = plan.timeout.unwrap_or(Duration::from_millis(100));
                std::thread::sleep(limit);
                ExecStatus::TimedOut
            }
            _ => {
                let code = argv_get(plan, "exit_code")
                    .and_then(|v| v.parse().ok())
                    .unwrap_or(0);
                ExecStatus::Exited(code)
            }
        };

        Ok(ExecRecord {
            status,
            stdout_path: capture.stdout_path.clone(),
            stderr_path: capture.stderr_path.clone(),
            duration: started.elapsed(),
        })
    }

    fn check_result(
        &self,
        _job: &JobSpec,
        record: &ExecRecord,
        _settings: &RunnerSettings,
    ) -> Verdict {
        match record.status {
            ExecStatus::Exited(0) => Verdict::Succeeded,
            ExecStatus::Exited(code) => Verdict::Failed(format!("mock exit code {code}")),
            ExecStatus::Signaled(sig) => Verdict::Failed(format!("killed by signal {sig}")),
            ExecStatus::TimedOut => Verdict::Failed("timeout exceeded".into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};
    use std::path::Path;

    fn job(output: &Path) -> JobSpec {
        JobSpec {
            job_id: "m1".into(),
            tool: "mock".into(),
            source: "/src/img.raw".into(),
            source_root: "/src".into(),
            output: output.to_path_buf(),
            case_id: "c1".into(),
            evidence_name: "e1".into(),
            requested_by: "inv".into(),
            created_utc: Utc.with_ymd_and_hms(2014, 7, 1, 8, 0, 0).unwrap(),
            seq: 0,
            params: vec![],
        }
    }

    fn settings(pairs: &[(&str, &str)]) -> RunnerSettings {
        RunnerSettings::new(
            pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        )
    }

    fn run(dir: &Path, pairs: &[(&str, &str)]) -> (ExecRecord, Verdict) {
        let j = job(&dir.join("out"));
        let s = settings(pairs);
        let plan = MockRunner.plan(&j, &s).unwrap();
        let cap = CaptureTarget {
            stdout_path: dir.join("j.stdout"),
            stderr_path: dir.join("j.stderr"),
        };
        let rec = MockRunner.execute(&plan, &cap).unwrap();
        let verdict = MockRunner.check_result(&j, &rec, &s);
        (rec, verdict)
    }

    #[test]
    fn succeed_creates_file() {
        let dir = tempfile::tempdir().unwrap();
        let (rec, verdict) = run(dir.path(), &[("create", "report.txt")]);
        assert_eq!(rec.status, ExecStatus::Exited(0));
        assert_eq!(verdict, Verdict::Succeeded);
        assert!(dir.path().join("out/report.txt").exists());
    }

    #[test]
    fn fail_exits_two() {
        let dir = tempfile::tempdir().unwrap();
        let (rec, verdict) = run(dir.path(), &[("behavior", "fail")]);
        assert_eq!(rec.status, ExecStatus::Exited(2));
        assert!(matches!(verdict, Verdict::Failed(_)));
    }

    #[test]
    fn hang_observes_timeout() {
        let dir = tempfile::tempdir().unwrap();
        let started = Instant::now();
        let (rec, verdict) = run(dir.path(), &[("behavior", "hang"), ("timeout_ms", "120")]);
        assert_eq!(rec.status, ExecStatus::TimedOut);
        assert!(matches!(verdict, Verdict::Failed(msg) if msg.contains("timeout")));
        let wall = started.elapsed();
        assert!(wall >= Duration::from_millis(120), "returned too early: {wall:?}");
        assert!(wall < Duration::from_secs(2));
    }

    #[test]
    fn exec_log_appends_job_id() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("exec.log");
        let (_, _) = run(dir.path(), &[("exec_log", log.to_str().unwrap())]);
        let (_, _) = run(dir.path(), &[("exec_log", log.to_str().unwrap())]);
        assert_eq!(fs::read_to_string(&log).unwrap(), "m1\nm1\n");
    }
}
