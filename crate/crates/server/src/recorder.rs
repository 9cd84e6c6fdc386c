//! Background session-log writer for one room.
//!
//! The room hands records over a bounded channel so a slow disk never stalls
//! a tick. The writer thread flushes at least once a second even when idle.

use std::fs::File;
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, RecvTimeoutError, SyncSender, TrySendError};
use std::thread::JoinHandle;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use calmrelay_core::record::{LogHeader, Record, SessionWriter};

const QUEUE: usize = 1 << 16;

pub struct Recorder {
    tx: Option<SyncSender<Record>>,
    thread: Option<JoinHandle<()>>,
    path: PathBuf,
    dropped: u64,
}

impl Recorder {
    pub fn create(dir: &Path, header: &LogHeader) -> std::io::Result<Recorder> {
        std::fs::create_dir_all(dir)?;
        let stamp = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default().as_millis();
        let name: String = header
            .room
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        let path = dir.join(format!("{name}-{stamp}.jsonl"));
        let mut writer = SessionWriter::new(File::create(&path)?, header).map_err(std::io::Error::other)?;
        let (tx, rx) = mpsc::sync_channel::<Record>(QUEUE);
        let log_path = path.clone();
        let thread = std::thread::Builder::new().name("calmrelay-recorder".into()).spawn(move || loop {
            let result = match rx.recv_timeout(Duration::from_secs(1)) {
                Ok(record) => writer.append(&record),
                Err(RecvTimeoutError::Timeout) => writer.flush(),
                Err(RecvTimeoutError::Disconnected) => {
                    if let Err(e) = writer.flush() {
                        tracing::error!(path = %log_path.display(), "final flush failed: {e}");
                    }
                    return;
                }
            };
            if let Err(e) = result {
                tracing::error!(path = %log_path.display(), "session log write failed: {e}");
                return;
            }
        })?;
        Ok(Recorder {
            tx: Some(tx),
            thread: Some(thread),
            path,
            dropped: 0,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn log(&mut self, record: Record) {
        let Some(tx) = &self.tx else { return };
        match tx.try_send(record) {
            Ok(()) => {}
            Err(TrySendError::Full(_)) => {
                self.dropped += 1;
                if self.dropped == 1 {
                    tracing::warn!(path = %self.path.display(), "recorder is behind; log will not replay");
                }
            }
            Err(TrySendError::Disconnected(_)) => self.tx = None,
        }
    }
}

impl Drop for Recorder {
    fn drop(&mut self) {
        self.tx = None;
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
