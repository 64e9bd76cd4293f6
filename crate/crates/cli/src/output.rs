//! CSV output with locale-independent 17-significant-digit floats.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::CliError;

/// Round-trip exact text form of `v`.
pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

pub struct CsvOut {
    path: String,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvOut {
    pub fn create(path: &Path, header: &[String]) -> Result<Self, CliError> {
        let shown = path.display().to_string();
        let file = File::create(path).map_err(|e| CliError::io(&shown, e))?;
        let writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(BufWriter::new(file));
        let mut out = CsvOut { path: shown, writer };
        out.row(header)?;
        Ok(out)
    }

    pub fn row<S: AsRef<[u8]>>(&mut self, cells: &[S]) -> Result<(), CliError> {
        self.writer.write_record(cells).map_err(|e| CliError::io(&self.path, e))
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.writer.flush().map_err(|e| CliError::io(&self.path, e))
    }
}

pub fn create_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(&path.display().to_string(), e))
}

/// Worker count from `ODDPERT_WORKERS`; one when unset.
pub fn workers() -> Result<usize, CliError> {
    match std::env::var(crate::WORKERS_VAR) {
        Err(std::env::VarError::NotPresent) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(CliError::new(
                crate::error::ExitCode::Usage,
                format!("{} must be a positive integer, got {v:?}", crate::WORKERS_VAR),
            )),
        },
        Err(e) => Err(CliError::new(crate::error::ExitCode::Usage, format!("{}: {e}", crate::WORKERS_VAR))),
    }
}

/// Applies `f` to every item on `workers` threads; results keep input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let done = std::sync::Mutex::new(Vec::with_capacity(items.len()));
    std::thread::scope(|s| {
        for _ in 0..workers.min(items.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                done.lock().expect("worker panicked").push((i, r));
            });
        }
    });
    for (i, r) in done.into_inner().expect("worker panicked") {
        slots[i] = Some(r);
    }
    slots.into_iter().map(|r| r.expect("every item is processed")).collect()
}
