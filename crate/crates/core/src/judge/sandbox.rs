//! One-shot process execution under resource limits.
//!
//! Each run gets its own process group, an empty environment, a private
//! working directory and rlimits on address space, CPU time and file size.
//! Network access is removed by entering a fresh network namespace when the
//! platform permits it; elsewhere this is best effort.

use std::io::{Read, Write};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::{ExecLimits, JudgeError};

const STDERR_KEEP: usize = 64 * 1024;
const POLL: Duration = Duration::from_millis(2);

#[derive(Debug)]
pub enum RunOutcome {
    Exited {
        status: ExitStatus,
        stdout: Vec<u8>,
        stderr: Vec<u8>,
        elapsed: Duration,
    },
    TimedOut {
        elapsed: Duration,
    },
    OutputLimit,
}

fn set_limit(resource: libc::__rlimit_resource_t, value: u64) {
    let lim = libc::rlimit {
        rlim_cur: value as libc::rlim_t,
        rlim_max: value as libc::rlim_t,
    };
    // SAFETY: plain syscall on a stack value.
    unsafe {
        libc::setrlimit(resource, &lim);
    }
}

fn kill_group(pid: u32) {
    // SAFETY: signalling our own child's process group.
    unsafe {
        libc::kill(-(pid as i32), libc::SIGKILL);
    }
}

pub fn run_limited(
    program: &Path,
    args: &[String],
    workdir: &Path,
    input: &[u8],
    limits: &ExecLimits,
) -> Result<RunOutcome, JudgeError> {
    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(workdir)
        .env_clear()
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);

    let memory = limits.memory;
    let cpu = limits.wall_time.as_secs() + 1;
    let fsize = limits.output_cap;
    // SAFETY: the closure only issues async-signal-safe syscalls.
    unsafe {
        cmd.pre_exec(move || {
            set_limit(libc::RLIMIT_AS, memory);
            set_limit(libc::RLIMIT_CPU, cpu);
            set_limit(libc::RLIMIT_FSIZE, fsize);
            set_limit(libc::RLIMIT_CORE, 0);
            if libc::unshare(libc::CLONE_NEWNET) != 0 {
                libc::unshare(libc::CLONE_NEWUSER | libc::CLONE_NEWNET);
            }
            Ok(())
        });
    }

    let start = Instant::now();
    let mut child = cmd
        .spawn()
        .map_err(|e| JudgeError::Sandbox(format!("failed to spawn {}: {e}", program.display())))?;
    let pid = child.id();

    let mut stdin = child.stdin.take().expect("stdin piped");
    let input = input.to_vec();
    let writer = thread::spawn(move || {
        // the program may exit without reading its input
        let _ = stdin.write_all(&input);
    });

    let overflow = Arc::new(AtomicBool::new(false));
    let mut stdout = child.stdout.take().expect("stdout piped");
    let cap = limits.output_cap as usize;
    let flag = Arc::clone(&overflow);
    let out_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let mut chunk = [0u8; 16 * 1024];
        loop {
            match stdout.read(&mut chunk) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    if buf.len() + n > cap {
                        flag.store(true, Ordering::SeqCst);
                        break;
                    }
                    buf.extend_from_slice(&chunk[..n]);
                }
            }
        }
        buf
    });

    let mut stderr = child.stderr.take().expect("stderr piped");
    let err_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let mut chunk = [0u8; 8 * 1024];
        loop {
            match stderr.read(&mut chunk) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = STDERR_KEEP.saturating_sub(buf.len());
                    buf.extend_from_slice(&chunk[..n.min(room)]);
                }
            }
        }
        buf
    });

    let finish = |child: &mut std::process::Child| {
        kill_group(pid);
        let _ = child.wait();
    };

    let status = loop {
        if overflow.load(Ordering::SeqCst) {
            finish(&mut child);
            let _ = (writer.join(), out_reader.join(), err_reader.join());
            return Ok(RunOutcome::OutputLimit);
        }
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) => {}
            Err(e) => {
                finish(&mut child);
                return Err(JudgeError::Sandbox(format!("wait failed: {e}")));
            }
        }
        let elapsed = start.elapsed();
        if elapsed >= limits.wall_time {
            finish(&mut child);
            let _ = (writer.join(), out_reader.join(), err_reader.join());
            return Ok(RunOutcome::TimedOut { elapsed });
        }
        thread::sleep(POLL.min(limits.wall_time - elapsed));
    };
    let elapsed = start.elapsed();
    // reap anything the program left behind holding our pipes
    kill_group(pid);
    let _ = writer.join();
    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();
    if overflow.load(Ordering::SeqCst) {
        return Ok(RunOutcome::OutputLimit);
    }
    Ok(RunOutcome::Exited {
        status,
        stdout,
        stderr,
        elapsed,
    })
}
