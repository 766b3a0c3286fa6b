use std::fs;
use std::io::Read;
use std::path::Path;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{parse_tsv, OcrError, OcrWord};
use crate::raster::io::write_pgm;
use crate::raster::Raster;

/// How to call an external OCR engine. `{input}` is replaced by the image
/// path and `{output}` by a scratch path; the engine may write TSV there
/// or to stdout. The command runs through `sh -c`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalEngineConfig {
    pub command_template: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

fn default_timeout() -> f64 {
    120.0
}

impl ExternalEngineConfig {
    pub fn new(command_template: impl Into<String>) -> Self {
        Self {
            command_template: command_template.into(),
            timeout_secs: default_timeout(),
        }
    }

    pub fn validate(&self) -> Result<(), OcrError> {
        for p in ["{input}", "{output}"] {
            if !self.command_template.contains(p) {
                return Err(OcrError::Config(format!("command template lacks the {p} placeholder")));
            }
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(OcrError::Config(format!("timeout {} must be positive", self.timeout_secs)));
        }
        Ok(())
    }
}

fn shell_quote(p: &Path) -> String {
    format!("'{}'", p.display().to_string().replace('\'', r"'\''"))
}

/// Runs the engine on an image file and parses its TSV.
pub fn run_external(cfg: &ExternalEngineConfig, page: &Path) -> Result<Vec<OcrWord>, OcrError> {
    cfg.validate()?;
    if !page.is_file() {
        return Err(OcrError::Io {
            path: page.display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "page file not found"),
        });
    }
    let scratch = tempfile::tempdir().map_err(|e| OcrError::Io {
        path: "temporary directory".into(),
        source: e,
    })?;
    let out_path = scratch.path().join("words.tsv");
    let command = cfg
        .command_template
        .replace("{input}", &shell_quote(page))
        .replace("{output}", &shell_quote(&out_path));

    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| OcrError::Spawn {
            command: command.clone(),
            source: e,
        })?;
    let drain = |mut r: Box<dyn Read + Send>| {
        thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = r.read_to_end(&mut buf);
            buf
        })
    };
    let stdout = drain(Box::new(child.stdout.take().expect("piped")));
    let stderr = drain(Box::new(child.stderr.take().expect("piped")));

    let deadline = Instant::now() + Duration::from_secs_f64(cfg.timeout_secs);
    let status = loop {
        match child.try_wait() {
            Ok(Some(s)) => break s,
            Ok(None) if Instant::now() >= deadline => {
                let _ = child.kill();
                let _ = child.wait();
                return Err(OcrError::Timeout(cfg.timeout_secs));
            }
            Ok(None) => thread::sleep(Duration::from_millis(10)),
            Err(e) => {
                return Err(OcrError::Spawn { command, source: e });
            }
        }
    };
    let stdout = stdout.join().unwrap_or_default();
    let stderr = stderr.join().unwrap_or_default();
    if !status.success() {
        return Err(OcrError::Exit {
            status: status.to_string(),
            stderr: String::from_utf8_lossy(&stderr).trim().to_string(),
        });
    }
    let body = match fs::read(&out_path) {
        Ok(b) if !b.is_empty() => b,
        _ => stdout,
    };
    parse_tsv(&String::from_utf8_lossy(&body))
}

/// Writes `page` to a scratch PGM and runs the engine on it.
pub fn run_external_on_raster(cfg: &ExternalEngineConfig, page: &Raster) -> Result<Vec<OcrWord>, OcrError> {
    let scratch = tempfile::tempdir().map_err(|e| OcrError::Io {
        path: "temporary directory".into(),
        source: e,
    })?;
    let p = scratch.path().join("page.pgm");
    write_pgm(&p, page)?;
    run_external(cfg, &p)
}

#[cfg(all(test, unix))]
mod tests {
    use super::*;
    use crate::raster::Rect;

    fn page() -> tempfile::NamedTempFile {
        let f = tempfile::NamedTempFile::new().unwrap();
        write_pgm(f.path(), &Raster::new(4, 4, 255)).unwrap();
        f
    }

    #[test]
    fn placeholders_required() {
        assert!(ExternalEngineConfig::new("cat {input}").validate().is_err());
        assert!(ExternalEngineConfig::new("x {input} {output}").validate().is_ok());
    }

    #[test]
    fn reads_stdout() {
        let cfg = ExternalEngineConfig::new("test -f {input} && printf '5\\t10\\t20\\t30\\t12\\t96\\tHELLO\\n' # {output}");
        let w = run_external(&cfg, page().path()).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].rect, Rect::new(10, 20, 40, 32).unwrap());
    }

    #[test]
    fn reads_output_file() {
        let cfg = ExternalEngineConfig::new("printf '5\\t1\\t2\\t3\\t4\\t50\\tok\\n' > {output}; echo junk # {input}");
        let w = run_external(&cfg, page().path()).unwrap();
        assert_eq!(w[0].text, "ok");
        assert_eq!(w[0].confidence, 0.5);
    }

    #[test]
    fn nonzero_exit() {
        let cfg = ExternalEngineConfig::new("echo nope >&2; exit 3 # {input} {output}");
        match run_external(&cfg, page().path()) {
            Err(OcrError::Exit { stderr, .. }) => assert_eq!(stderr, "nope"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn timeout_kills() {
        let cfg = ExternalEngineConfig {
            command_template: "sleep 5 # {input} {output}".into(),
            timeout_secs: 0.2,
        };
        let t = Instant::now();
        assert!(matches!(run_external(&cfg, page().path()), Err(OcrError::Timeout(_))));
        assert!(t.elapsed() < Duration::from_secs(4));
    }

    #[test]
    fn never_more_words_than_rows() {
        let cfg = ExternalEngineConfig::new("printf 'level\\n5\\t1\\t1\\t2\\t2\\t9\\ta\\n5\\t4\\t1\\t2\\t2\\t9\\t\\n' # {input} {output}");
        let w = run_external(&cfg, page().path()).unwrap();
        assert_eq!(w.len(), 1);
    }
}
