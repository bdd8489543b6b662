//! Sandboxed python execution with a hard wall-clock limit.
//!
//! Each call owns an isolated child process: the interpreter runs in
//! isolated mode with a cleared environment, a fresh temp working
//! directory, source delivered over stdin, and a socket-import guard so
//! agent code cannot reach the network. On timeout the whole process
//! group is killed.

use std::io::{Read, Write};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use super::{ExecStatus, ExecutionResult};

const POLL_INTERVAL: Duration = Duration::from_millis(10);

/// Prefix prepended to agent source. Drops any preloaded socket module
/// and blocks re-importing it; everything network-shaped in the stdlib
/// sits on socket.
const SANDBOX_PREAMBLE: &str = r#"import sys as _g_sys, builtins as _g_builtins
for _g_m in [m for m in list(_g_sys.modules) if m == 'socket' or m.startswith('socket.')]:
    del _g_sys.modules[_g_m]
def _g_guard(name, *args, _orig=_g_builtins.__import__, **kwargs):
    if name == 'socket' or name.startswith('socket.'):
        raise ImportError('network access is disabled in the code sandbox')
    return _orig(name, *args, **kwargs)
_g_builtins.__import__ = _g_guard
del _g_sys, _g_builtins, _g_m, _g_guard
"#;

#[derive(Debug, Clone)]
pub struct CodeSandbox {
    interpreter: std::path::PathBuf,
}

impl Default for CodeSandbox {
    fn default() -> Self {
        Self { interpreter: resolve_python() }
    }
}

/// Resolves the interpreter via the parent PATH up front; the child runs
/// with a cleared environment where PATH lookup would fail.
fn resolve_python() -> std::path::PathBuf {
    if let Ok(path) = std::env::var("PATH") {
        for dir in std::env::split_paths(&path) {
            let candidate = dir.join("python3");
            if candidate.is_file() {
                return candidate;
            }
        }
    }
    std::path::PathBuf::from("/usr/bin/python3")
}

impl CodeSandbox {
    pub fn with_interpreter(path: impl Into<std::path::PathBuf>) -> Self {
        Self { interpreter: path.into() }
    }

    pub fn execute(&self, source: &str, limit: Duration) -> ExecutionResult {
        let start = Instant::now();
        if source.trim().is_empty() {
            return operator_failure("empty source", start.elapsed());
        }
        let workdir = match tempfile::tempdir() {
            Ok(d) => d,
            Err(e) => return operator_failure(&format!("failed to create work dir: {e}"), start.elapsed()),
        };

        let mut command = Command::new(&self.interpreter);
        command
            .args(["-I", "-u", "-"])
            .current_dir(workdir.path())
            .env_clear()
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        #[cfg(unix)]
        {
            use std::os::unix::process::CommandExt;
            command.process_group(0);
        }

        let mut child = match command.spawn() {
            Ok(c) => c,
            Err(e) => return operator_failure(&format!("failed to spawn sandbox: {e}"), start.elapsed()),
        };

        let program = format!("{SANDBOX_PREAMBLE}{source}");
        let mut stdin = child.stdin.take().expect("stdin was piped");
        let writer = std::thread::spawn(move || {
            let _ = stdin.write_all(program.as_bytes());
        });
        let stdout_reader = spawn_reader(child.stdout.take().expect("stdout was piped"));
        let stderr_reader = spawn_reader(child.stderr.take().expect("stderr was piped"));

        let status = wait_with_deadline(&mut child, start, limit);
        let _ = writer.join();
        let stdout = String::from_utf8_lossy(&stdout_reader.join().unwrap_or_default()).into_owned();
        let stderr = String::from_utf8_lossy(&stderr_reader.join().unwrap_or_default()).into_owned();
        let wall_time = start.elapsed();

        match status {
            WaitOutcome::Exited(code) if code == 0 => ExecutionResult {
                status: ExecStatus::Ok,
                stdout,
                stderr,
                wall_time,
                operator_error: false,
            },
            WaitOutcome::Exited(_) => ExecutionResult {
                status: ExecStatus::RuntimeError,
                stdout,
                stderr,
                wall_time,
                operator_error: false,
            },
            WaitOutcome::TimedOut => ExecutionResult {
                status: ExecStatus::Timeout,
                stdout,
                stderr,
                wall_time,
                operator_error: false,
            },
        }
    }
}

/// Runs source under the default sandbox. The limit is enforced per
/// call; the paper-style default of 60 s belongs to the run
/// configuration.
pub fn execute_code(source: &str, limit: Duration) -> ExecutionResult {
    CodeSandbox::default().execute(source, limit)
}

enum WaitOutcome {
    Exited(i32),
    TimedOut,
}

fn wait_with_deadline(child: &mut Child, start: Instant, limit: Duration) -> WaitOutcome {
    loop {
        match child.try_wait() {
            Ok(Some(status)) => return WaitOutcome::Exited(status.code().unwrap_or(-1)),
            Ok(None) => {
                if start.elapsed() >= limit {
                    kill_process_group(child);
                    let _ = child.wait();
                    return WaitOutcome::TimedOut;
                }
                std::thread::sleep(POLL_INTERVAL);
            }
            Err(_) => {
                kill_process_group(child);
                let _ = child.wait();
                return WaitOutcome::Exited(-1);
            }
        }
    }
}

/// Kills the child and anything it spawned.
fn kill_process_group(child: &mut Child) {
    #[cfg(unix)]
    {
        let pgid = child.id() as libc::pid_t;
        unsafe {
            libc::killpg(pgid, libc::SIGKILL);
        }
    }
    let _ = child.kill();
}

fn spawn_reader<R: Read + Send + 'static>(mut stream: R) -> std::thread::JoinHandle<Vec<u8>> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stream.read_to_end(&mut buf);
        buf
    })
}

fn operator_failure(message: &str, wall_time: Duration) -> ExecutionResult {
    ExecutionResult {
        status: ExecStatus::RuntimeError,
        stdout: String::new(),
        stderr: message.to_string(),
        wall_time,
        operator_error: true,
    }
}
