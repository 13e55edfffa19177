use std::fs::{self, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

use super::{io_err, ExecutionLog, HarnessError, LogClassifier, TestOutcome};
use crate::manifest::{BuildSpec, VulnEntry, Version};

/// Runs an entry's build command for one placed test.
pub trait TestExecutor: Send + Sync {
    fn execute(
        &self,
        workspace: &Path,
        entry: &VulnEntry,
        class_name: &str,
        version: Version,
    ) -> Result<ExecutionLog, HarnessError>;
}

/// Executes the build as a child process, directly or through a container
/// runtime when the entry names an image.
#[derive(Debug, Clone)]
pub struct ProcessExecutor {
    pub container_runtime: String,
}

impl Default for ProcessExecutor {
    fn default() -> Self {
        ProcessExecutor {
            container_runtime: "docker".into(),
        }
    }
}

fn drain<R: Read + Send + 'static>(pipe: Option<R>) -> thread::JoinHandle<String> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut p) = pipe {
            let _ = p.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

fn container_name(workspace: &Path, version: Version) -> String {
    use sha2::{Digest, Sha256};
    let digest = Sha256::digest(workspace.to_string_lossy().as_bytes());
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    format!("witgen-{hex}-{version}")
}

impl ProcessExecutor {
    fn command(&self, workspace: &Path, spec: &BuildSpec, argv: &[String], version: Version) -> Command {
        match &spec.container_image {
            None => {
                let mut cmd = Command::new(&argv[0]);
                cmd.args(&argv[1..]).current_dir(workspace.join(&spec.workdir)).envs(&spec.environment);
                cmd
            }
            Some(image) => {
                let mount = fs::canonicalize(workspace).unwrap_or_else(|_| workspace.to_path_buf());
                let mut cmd = Command::new(&self.container_runtime);
                cmd.args(["run", "--rm", "--name", &container_name(workspace, version)])
                    .arg("-v")
                    .arg(format!("{}:/workspace", mount.display()))
                    .arg("-w")
                    .arg(Path::new("/workspace").join(&spec.workdir));
                for (k, v) in &spec.environment {
                    cmd.arg("-e").arg(format!("{k}={v}"));
                }
                cmd.arg(image).args(argv);
                cmd
            }
        }
    }

    fn kill(&self, child: &mut Child, spec: &BuildSpec, workspace: &Path, version: Version) {
        #[cfg(unix)]
        {
            // the child leads its own process group (see `execute`)
            if let Ok(pgid) = i32::try_from(child.id()) {
                // SAFETY: plain syscall; pgid is a positive id of our own child.
                unsafe {
                    libc::killpg(pgid, libc::SIGKILL);
                }
            }
        }
        let _ = child.kill();
        if spec.container_image.is_some() {
            let _ = Command::new(&self.container_runtime)
                .args(["kill", &container_name(workspace, version)])
                .stdout(Stdio::null())
                .stderr(Stdio::null())
                .status();
        }
    }
}

impl TestExecutor for ProcessExecutor {
    fn execute(
        &self,
        workspace: &Path,
        entry: &VulnEntry,
        class_name: &str,
        version: Version,
    ) -> Result<ExecutionLog, HarnessError> {
        let spec = &entry.build_spec;
        let argv = spec.command_for(class_name);
        let mut cmd = self.command(workspace, spec, &argv, version);
        cmd.stdin(Stdio::null()).stdout(Stdio::piped()).stderr(Stdio::piped());
        #[cfg(unix)]
        {
            use std::os::unix::process::CommandExt;
            cmd.process_group(0);
        }
        let program = cmd.get_program().to_string_lossy().into_owned();
        let started = Instant::now();
        let mut child = cmd.spawn().map_err(|source| HarnessError::Spawn { program, source })?;
        let out = drain(child.stdout.take());
        let err = drain(child.stderr.take());

        let limit = Duration::from_secs(spec.timeout);
        let (status, timed_out) = match child.wait_timeout(limit).map_err(io_err(workspace))? {
            Some(status) => (Some(status), false),
            None => {
                log::warn!("{}: {version} run of {class_name} timed out after {}s", entry.id, spec.timeout);
                self.kill(&mut child, spec, workspace, version);
                (child.wait().ok(), true)
            }
        };
        let exit_code = if timed_out { -1 } else { status.and_then(|s| s.code()).unwrap_or(-1) };
        Ok(ExecutionLog {
            stdout: out.join().unwrap_or_default(),
            stderr: err.join().unwrap_or_default(),
            exit_code,
            duration_secs: started.elapsed().as_secs_f64(),
            version,
            timed_out,
        })
    }
}

/// Executes the placed test `class_name` and classifies the result with the
/// entry's marker set.
pub fn run_generated_test(
    executor: &dyn TestExecutor,
    workspace: &Path,
    entry: &VulnEntry,
    class_name: &str,
    version: Version,
) -> Result<(TestOutcome, ExecutionLog), HarnessError> {
    let classifier = match &entry.build_spec.log_markers {
        Some(m) => LogClassifier::new(m.clone())?,
        None => LogClassifier::default(),
    };
    let log = executor.execute(workspace, entry, class_name, version)?;
    Ok((classifier.classify(&log), log))
}

/// Exclusive claim on a workspace directory, held as a `<dir>.lock` file next
/// to it. Locks left by dead processes are taken over.
#[derive(Debug)]
pub struct WorkspaceLock {
    path: PathBuf,
}

fn holder_alive(lock: &Path) -> bool {
    let Ok(text) = fs::read_to_string(lock) else {
        return true;
    };
    let Ok(pid) = text.trim().parse::<u32>() else {
        return true;
    };
    if pid == std::process::id() {
        return true;
    }
    if cfg!(target_os = "linux") {
        Path::new("/proc").join(pid.to_string()).exists()
    } else {
        true
    }
}

impl WorkspaceLock {
    pub fn acquire(workspace: &Path) -> Result<Self, HarnessError> {
        let path = PathBuf::from(format!("{}.lock", workspace.display()));
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        for _ in 0..2 {
            match OpenOptions::new().write(true).create_new(true).open(&path) {
                Ok(mut f) => {
                    let _ = write!(f, "{}", std::process::id());
                    return Ok(WorkspaceLock { path });
                }
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    if holder_alive(&path) {
                        return Err(HarnessError::Locked(workspace.to_path_buf()));
                    }
                    log::warn!("removing stale lock {}", path.display());
                    let _ = fs::remove_file(&path);
                }
                Err(e) => return Err(io_err(&path)(e)),
            }
        }
        Err(HarnessError::Locked(workspace.to_path_buf()))
    }
}

impl Drop for WorkspaceLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
