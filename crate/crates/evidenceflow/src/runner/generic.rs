//! Any command-line tool can be driven as a queue job: the invocation is a
//! whitespace-split `command_template` with `{…}` placeholders, the verdict
//! an exit-code set plus required-output checks.

use std::fs::{self, File};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use walkdir::WalkDir;

use super::{
    substitute_token, CaptureTarget, ExecRecord, ExecStatus, InvocationPlan, Runner, RunnerError,
    RunnerSettings, Verdict,
};
use crate::model::JobSpec;

/// Settings understood by this runner:
///
/// - `command_template` (required): whitespace-split tokens, placeholders
///   `{source}`, `{source_root}`, `{output}`, `{case_id}`, `{evidence_name}`,
///   `{job_id}`, `{param.<k>}`
/// - `timeout_secs`: kill the tool after this long (default: no timeout)
/// - `ok_exit_codes`: comma-separated, default `0`
/// - `required_outputs`: comma-separated paths relative to the job output,
///   placeholders allowed
/// - `min_output_files`: minimum file count under the job output
/// - `env.<NAME>`: extra environment variables
pub struct GenericCommandRunner;

const POLL_STEP: Duration = Duration::from_millis(20);

impl Runner for GenericCommandRunner {
    fn name(&self) -> &'static str {
        "generic_command"
    }

    fn plan(&self, job: &JobSpec, settings: &RunnerSettings) -> Result<InvocationPlan, RunnerError> {
        let template = settings
            .get("command_template")
            .ok_or_else(|| RunnerError::BadSetting("command_template".into()))?;
        let argv: Vec<String> = template
            .split_whitespace()
            .map(|tok| substitute_token(tok, job))
            .collect::<Result<_, _>>()?;
        if argv.is_empty() {
            return Err(RunnerError::BadSetting("command_template".into()));
        }
        let timeout = match settings.get("timeout_secs") {
            Some(v) => Some(Duration::from_secs_f64(v.parse().map_err(|_| {
                RunnerError::BadSetting(format!("timeout_secs={v}"))
            })?)),
            None => None,
        };
        let mut env_additions = Vec::new();
        for (k, v) in settings.iter() {
            if let Some(name) = k.strip_prefix("env.") {
                env_additions.push((name.to_string(), substitute_token(v, job)?));
            }
        }
        Ok(InvocationPlan {
            argv,
            working_dir: job.output.clone(),
            timeout,
            env_additions,
        })
    }

    fn execute(
        &self,
        plan: &InvocationPlan,
        capture: &CaptureTarget,
    ) -> Result<ExecRecord, RunnerError> {
        fs::create_dir_all(&plan.working_dir)?;
        let stdout = File::create(&capture.stdout_path)?;
        let stderr = File::create(&capture.stderr_path)?;
        let started = Instant::now();
        let mut child = Command::new(&plan.argv[0])
            .args(&plan.argv[1..])
            .current_dir(&plan.working_dir)
            .envs(plan.env_additions.iter().map(|(k, v)| (k, v)))
            .stdin(Stdio::null())
            .stdout(Stdio::from(stdout))
            .stderr(Stdio::from(stderr))
            .spawn()
            .map_err(|source| RunnerError::Spawn {
                program: plan.argv[0].clone(),
                source,
            })?;

        let status = loop {
            if let Some(status) = child.try_wait()? {
                break exec_status(status);
            }
            if let Some(limit) = plan.timeout {
                if started.elapsed() >= limit {
                    let _ = child.kill();
                    let _ = child.wait();
                    break ExecStatus::TimedOut;
                }
            }
            std::thread::sleep(POLL_STEP);
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
        job: &JobSpec,
        record: &ExecRecord,
        settings: &RunnerSettings,
    ) -> Verdict {
        let ok_codes: Vec<i32> = settings
            .get("ok_exit_codes")
            .unwrap_or("0")
            .split(',')
            .filter_map(|c| c.trim().parse().ok())
            .collect();
        match record.status {
            ExecStatus::Exited(code) if ok_codes.contains(&code) => {}
            ExecStatus::Exited(code) => {
                return Verdict::Failed(format!("exit code {code} not in {ok_codes:?}"))
            }
            ExecStatus::Signaled(sig) => return Verdict::Failed(format!("killed by signal {sig}")),
            ExecStatus::TimedOut => return Verdict::Failed("timeout exceeded".into()),
        }

        if let Some(required) = settings.get("required_outputs") {
            for entry in required.split(',') {
                let entry = entry.trim();
                if entry.is_empty() {
                    continue;
                }
                let rel = match substitute_token(entry, job) {
                    Ok(r) => r,
                    Err(e) => return Verdict::Failed(format!("bad required_outputs entry: {e}")),
                };
                let path = job.output.join(&rel);
                if !path.exists() {
                    return Verdict::Failed(format!("missing output {}", path.display()));
                }
            }
        }

        if let Some(min) = settings.get("min_output_files") {
            let min: usize = match min.parse() {
                Ok(n) => n,
                Err(_) => return Verdict::Failed(format!("bad min_output_files {min:?}")),
            };
            let count = count_files(&job.output);
            if count < min {
                return Verdict::Failed(format!(
                    "only {count} output files, expected at least {min}"
                ));
            }
        }

        Verdict::Succeeded
    }
}

fn exec_status(status: std::process::ExitStatus) -> ExecStatus {
    if let Some(code) = status.code() {
        return ExecStatus::Exited(code);
    }
    #[cfg(unix)]
    {
        use std::os::unix::process::ExitStatusExt;
        if let Some(sig) = status.signal() {
            return ExecStatus::Signaled(sig);
        }
    }
    ExecStatus::Signaled(-1)
}

fn count_files(root: &Path) -> usize {
    WalkDir::new(root)
        .into_iter()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_type().is_file())
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{TimeZone, Utc};

    fn job(output: &Path) -> JobSpec {
        JobSpec {
            job_id: "g1".into(),
            tool: "generic_command".into(),
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

    #[test]
    fn plan_substitutes_template() {
        let j = job(Path::new("/out"));
        let s = settings(&[("command_template", "tool -i {source} -o {output}")]);
        let plan = GenericCommandRunner.plan(&j, &s).unwrap();
        assert_eq!(plan.argv, vec!["tool", "-i", "/src/img.raw", "-o", "/out"]);
    }

    #[test]
    fn plan_is_pure() {
        let j = job(Path::new("/out"));
        let s = settings(&[("command_template", "tool {source}")]);
        assert_eq!(
            GenericCommandRunner.plan(&j, &s).unwrap(),
            GenericCommandRunner.plan(&j, &s).unwrap()
        );
    }

    #[test]
    fn plan_rejects_unknown_param_placeholder() {
        let j = job(Path::new("/out"));
        let s = settings(&[("command_template", "tool {param.depth}")]);
        assert!(matches!(
            GenericCommandRunner.plan(&j, &s),
            Err(RunnerError::UnresolvedPlaceholder(_))
        ));
    }

    fn fake_record(status: ExecStatus, dir: &Path) -> ExecRecord {
        ExecRecord {
            status,
            stdout_path: dir.join("x.stdout"),
            stderr_path: dir.join("x.stderr"),
            duration: Duration::from_millis(1),
        }
    }

    #[test]
    fn check_result_exit_and_required_output() {
        let dir = tempfile::tempdir().unwrap();
        let j = job(dir.path());
        fs::write(dir.path().join("report.txt"), "x").unwrap();
        let s = settings(&[("required_outputs", "report.txt")]);
        assert_eq!(
            GenericCommandRunner.check_result(&j, &fake_record(ExecStatus::Exited(0), dir.path()), &s),
            Verdict::Succeeded
        );
        let s2 = settings(&[("required_outputs", "missing.txt")]);
        assert!(matches!(
            GenericCommandRunner.check_result(&j, &fake_record(ExecStatus::Exited(0), dir.path()), &s2),
            Verdict::Failed(msg) if msg.contains("missing output")
        ));
    }

    #[test]
    fn check_result_custom_exit_code_set() {
        let dir = tempfile::tempdir().unwrap();
        let j = job(dir.path());
        let s = settings(&[("ok_exit_codes", "0,1")]);
        assert_eq!(
            GenericCommandRunner.check_result(&j, &fake_record(ExecStatus::Exited(1), dir.path()), &s),
            Verdict::Succeeded
        );
        assert!(matches!(
            GenericCommandRunner.check_result(&j, &fake_record(ExecStatus::Exited(2), dir.path()), &s),
            Verdict::Failed(_)
        ));
    }

    #[cfg(unix)]
    #[test]
    fn execute_captures_output_and_times_out() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let plan = InvocationPlan {
            argv: vec!["/bin/sh".into(), "-c".into(), "echo hi".into()],
            working_dir: out.clone(),
            timeout: None,
            env_additions: vec![],
        };
        let cap = CaptureTarget {
            stdout_path: dir.path().join("j.stdout"),
            stderr_path: dir.path().join("j.stderr"),
        };
        let rec = GenericCommandRunner.execute(&plan, &cap).unwrap();
        assert_eq!(rec.status, ExecStatus::Exited(0));
        assert_eq!(fs::read_to_string(&cap.stdout_path).unwrap(), "hi\n");

        // Timeout path: sleep longer than the limit.
        let plan = InvocationPlan {
            argv: vec!["/bin/sh".into(), "-c".into(), "sleep 5".into()],
            working_dir: out,
            timeout: Some(Duration::from_millis(150)),
            env_additions: vec![],
        };
        let started = Instant::now();
        let rec = GenericCommandRunner.execute(&plan, &cap).unwrap();
        assert_eq!(rec.status, ExecStatus::TimedOut);
        assert!(started.elapsed() < Duration::from_secs(3));
    }
}
