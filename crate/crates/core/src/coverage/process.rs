//! Adapter for an external target process speaking the line protocol:
//! statements on stdin, a status line on stdout, and a raw coverage map file
//! at `GTF_MAP_PATH` rewritten after each statement.

use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, ExitStatus, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::Duration;

use super::toy::END_OF_SEQUENCE;
use super::{
    read_map_file, CoverageMap, Crash, CrashKind, ExecStatus, StatementResult, TargetAdapter,
    TargetError,
};

pub const MAP_PATH_ENV: &str = "GTF_MAP_PATH";
pub const MAP_SIZE_ENV: &str = "GTF_MAP_SIZE";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

const SIGABRT: i32 = 6;

struct Live {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

pub struct ProcessTarget {
    program: String,
    args: Vec<String>,
    map_path: PathBuf,
    map_size: usize,
    timeout: Duration,
    live: Option<Live>,
}

impl ProcessTarget {
    /// `command` is split on whitespace into program and arguments.
    pub fn new(command: &str, map_path: PathBuf, map_size: usize) -> Result<Self, TargetError> {
        let mut words = command.split_whitespace().map(str::to_string);
        let program = words
            .next()
            .ok_or_else(|| TargetError::ProtocolError("empty target command".into()))?;
        Ok(ProcessTarget {
            program,
            args: words.collect(),
            map_path,
            map_size,
            timeout: DEFAULT_TIMEOUT,
            live: None,
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    fn spawn(&mut self) -> Result<&mut Live, TargetError> {
        if self.live.is_none() {
            let mut child = Command::new(&self.program)
                .args(&self.args)
                .env(MAP_PATH_ENV, &self.map_path)
                .env(MAP_SIZE_ENV, self.map_size.to_string())
                .stdin(Stdio::piped())
                .stdout(Stdio::piped())
                .stderr(Stdio::null())
                .spawn()?;
            let stdin = child.stdin.take().expect("piped stdin");
            let stdout = child.stdout.take().expect("piped stdout");
            let (tx, rx) = mpsc::channel();
            std::thread::spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    if tx.send(line).is_err() {
                        break;
                    }
                }
            });
            self.live = Some(Live {
                child,
                stdin,
                lines: rx,
            });
        }
        Ok(self.live.as_mut().expect("just spawned"))
    }

    /// Reap a dead child and describe how it went down.
    fn reap(&mut self) -> Result<Crash, TargetError> {
        let mut live = self.live.take().expect("live child");
        let status = live.child.wait()?;
        Ok(exit_to_crash(status))
    }

    fn kill(&mut self) {
        if let Some(mut live) = self.live.take() {
            let _ = live.child.kill();
            let _ = live.child.wait();
        }
    }
}

/// Signal number for deaths by signal; 256 + exit code for a plain exit
/// before the status line.
fn exit_to_crash(status: ExitStatus) -> Crash {
    #[cfg(unix)]
    {
        use std::os::unix::process::ExitStatusExt;
        if let Some(sig) = status.signal() {
            let kind = if sig == SIGABRT {
                CrashKind::Assertion
            } else {
                CrashKind::Crash
            };
            return Crash {
                kind,
                code: sig as u32,
            };
        }
    }
    Crash {
        kind: CrashKind::Crash,
        code: 256 + status.code().unwrap_or(0) as u32,
    }
}

impl TargetAdapter for ProcessTarget {
    fn map_size(&self) -> usize {
        self.map_size
    }

    fn run_statement(
        &mut self,
        statement: &str,
        map: &mut CoverageMap,
    ) -> Result<StatementResult, TargetError> {
        let timeout = self.timeout;
        let line = statement.replace(['\n', '\r'], " ");
        let live = self.spawn()?;
        let sent = writeln!(live.stdin, "{line}").and_then(|_| live.stdin.flush());
        let reply = match sent {
            Ok(()) => live.lines.recv_timeout(timeout),
            Err(_) => Err(RecvTimeoutError::Disconnected),
        };
        match reply {
            Ok(Ok(status)) => {
                let status = ExecStatus::from_wire(status.trim()).ok_or_else(|| {
                    TargetError::ProtocolError(format!("bad status line {status:?}"))
                })?;
                let m = read_map_file(&self.map_path, self.map_size)?;
                map.load(m.as_bytes())?;
                Ok(StatementResult::Done(status))
            }
            Ok(Err(e)) => {
                self.kill();
                Err(e.into())
            }
            Err(RecvTimeoutError::Disconnected) => {
                let crash = self.reap()?;
                if let Ok(m) = read_map_file(&self.map_path, self.map_size) {
                    map.load(m.as_bytes())?;
                }
                Ok(StatementResult::Crashed(crash))
            }
            Err(RecvTimeoutError::Timeout) => {
                self.kill();
                Err(TargetError::TargetUnresponsive(timeout))
            }
        }
    }

    fn reset(&mut self) -> Result<(), TargetError> {
        if let Some(live) = self.live.as_mut() {
            let ok = writeln!(live.stdin, "{END_OF_SEQUENCE}").and_then(|_| live.stdin.flush());
            if ok.is_err() {
                self.kill();
            }
        }
        Ok(())
    }
}

impl Drop for ProcessTarget {
    fn drop(&mut self) {
        self.kill();
    }
}
