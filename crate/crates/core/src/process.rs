//! Subprocess execution with a wall-clock limit.

use std::io::{Read, Write};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct ProcessOutput {
    /// `None` when the process was killed or terminated by a signal.
    pub status: Option<i32>,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub timed_out: bool,
    pub elapsed: Duration,
}

impl ProcessOutput {
    pub fn stdout_text(&self) -> String {
        String::from_utf8_lossy(&self.stdout).into_owned()
    }

    pub fn stderr_text(&self) -> String {
        String::from_utf8_lossy(&self.stderr).into_owned()
    }

    /// stdout followed by stderr, byte for byte.
    pub fn combined(&self) -> Vec<u8> {
        let mut all = self.stdout.clone();
        all.extend_from_slice(&self.stderr);
        all
    }
}

fn drain<R: Read + Send + 'static>(mut reader: R) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = reader.read_to_end(&mut buf);
        buf
    })
}

static SPAWNED: AtomicUsize = AtomicUsize::new(0);

/// Number of child processes started by [`run`] so far in this process.
pub fn spawn_count() -> usize {
    SPAWNED.load(Ordering::SeqCst)
}

/// Runs `program`, feeding `stdin` if given, and kills it after `timeout`.
/// Fails only when the process cannot be started.
pub fn run(
    program: &Path,
    args: &[&str],
    cwd: Option<&Path>,
    stdin: Option<&[u8]>,
    timeout: Duration,
) -> std::io::Result<ProcessOutput> {
    run_inner(program, args, cwd, stdin, timeout, None)
}

/// Like [`run`] but stdout goes to a scratch file. Node-based tools can
/// exit before a large write to a pipe has drained; file writes are
/// synchronous, so nothing is lost.
pub fn run_stdout_to_file(
    program: &Path,
    args: &[&str],
    cwd: Option<&Path>,
    stdin: Option<&[u8]>,
    timeout: Duration,
) -> std::io::Result<ProcessOutput> {
    static SCRATCH: AtomicUsize = AtomicUsize::new(0);
    let path = std::env::temp_dir().join(format!(
        "scproof-{}-{}.out",
        std::process::id(),
        SCRATCH.fetch_add(1, Ordering::SeqCst)
    ));
    let file = std::fs::File::create(&path)?;
    let result = run_inner(program, args, cwd, stdin, timeout, Some(file)).and_then(|mut out| {
        out.stdout = std::fs::read(&path)?;
        Ok(out)
    });
    let _ = std::fs::remove_file(&path);
    result
}

fn run_inner(
    program: &Path,
    args: &[&str],
    cwd: Option<&Path>,
    stdin: Option<&[u8]>,
    timeout: Duration,
    stdout_file: Option<std::fs::File>,
) -> std::io::Result<ProcessOutput> {
    let mut cmd = Command::new(program);
    let to_file = stdout_file.is_some();
    cmd.args(args)
        .stdin(if stdin.is_some() { Stdio::piped() } else { Stdio::null() })
        .stdout(stdout_file.map_or_else(Stdio::piped, Stdio::from))
        .stderr(Stdio::piped());
    if let Some(dir) = cwd {
        cmd.current_dir(dir);
    }
    // Own process group, so a timeout also takes down grandchildren that
    // would otherwise keep the output pipes open.
    #[cfg(unix)]
    std::os::unix::process::CommandExt::process_group(&mut cmd, 0);
    log::debug!("spawning {} {}", program.display(), args.join(" "));
    let started = Instant::now();
    let mut child = cmd.spawn()?;
    SPAWNED.fetch_add(1, Ordering::SeqCst);

    let writer = match (stdin, child.stdin.take()) {
        (Some(bytes), Some(mut pipe)) => {
            let bytes = bytes.to_vec();
            Some(thread::spawn(move || {
                let _ = pipe.write_all(&bytes);
            }))
        }
        _ => None,
    };
    let out = (!to_file).then(|| drain(child.stdout.take().expect("piped stdout")));
    let err = drain(child.stderr.take().expect("piped stderr"));

    let mut timed_out = false;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status.code();
        }
        if started.elapsed() >= timeout {
            timed_out = true;
            #[cfg(unix)]
            // SAFETY: plain syscall on the group id we created at spawn.
            unsafe {
                libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
            }
            let _ = child.kill();
            let _ = child.wait();
            break None;
        }
        thread::sleep(Duration::from_millis(10));
    };
    if let Some(w) = writer {
        let _ = w.join();
    }
    Ok(ProcessOutput {
        status,
        stdout: out.map(|h| h.join().unwrap_or_default()).unwrap_or_default(),
        stderr: err.join().unwrap_or_default(),
        timed_out,
        elapsed: started.elapsed(),
    })
}

/// Looks `name` up on `PATH` unless it already contains a path separator.
pub fn locate(name: &Path) -> Option<std::path::PathBuf> {
    if name.components().count() > 1 {
        return name.is_file().then(|| name.to_path_buf());
    }
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path).map(|dir| dir.join(name)).find(|p| p.is_file())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn captures_streams_and_status() {
        let out = run(Path::new("sh"), &["-c", "echo out; echo err >&2; exit 3"], None, None, Duration::from_secs(5))
            .unwrap();
        assert_eq!(out.status, Some(3));
        assert_eq!(out.stdout_text(), "out\n");
        assert_eq!(out.stderr_text(), "err\n");
        assert_eq!(out.combined(), b"out\nerr\n");
        let out = run_stdout_to_file(
            Path::new("sh"),
            &["-c", "cat; echo err >&2"],
            None,
            Some(b"in\n"),
            Duration::from_secs(5),
        )
        .unwrap();
        assert_eq!((out.stdout_text().as_str(), out.stderr_text().as_str()), ("in\n", "err\n"));
    }

    #[test]
    fn kills_on_timeout() {
        let out =
            run(Path::new("sh"), &["-c", "echo started; sleep 5"], None, None, Duration::from_millis(200)).unwrap();
        assert!(out.timed_out);
        assert_eq!(out.status, None);
        assert!(out.elapsed < Duration::from_secs(4));
    }

    #[test]
    fn feeds_stdin() {
        let out = run(Path::new("cat"), &[], None, Some(b"hello"), Duration::from_secs(5)).unwrap();
        assert_eq!(out.stdout, b"hello");
    }
}
