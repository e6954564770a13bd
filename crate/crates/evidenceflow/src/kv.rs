//! Line-oriented `key=value` text, the common format for job files,
//! configuration files and reports.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KvError {
    #[error("line {0}: not a key=value pair")]
    MalformedLine(usize),
    #[error("line {0}: empty key")]
    EmptyKey(usize),
}

/// Parsed line with its 1-based line number.
pub type KvLine = (usize, String, String);

/// Parse `key=value` lines. When `allow_comments` is set, blank lines and
/// lines starting with `#` are skipped (configuration files); job files are
/// parsed strictly.
pub fn parse(text: &str, allow_comments: bool) -> Result<Vec<KvLine>, KvError> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        if allow_comments {
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
        }
        let line = if allow_comments { raw.trim() } else { raw };
        match line.split_once('=') {
            Some((k, v)) => {
                let key = if allow_comments { k.trim() } else { k };
                if key.is_empty() {
                    return Err(KvError::EmptyKey(line_no));
                }
                let val = if allow_comments { v.trim() } else { v };
                out.push((line_no, key.to_string(), val.to_string()));
            }
            None => return Err(KvError::MalformedLine(line_no)),
        }
    }
    Ok(out)
}

/// Render pairs back to text, one `key=value` per line, trailing newline.
pub fn render<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> String {
    let mut s = String::new();
    for (k, v) in pairs {
        s.push_str(k);
        s.push('=');
        s.push_str(v);
        s.push('\n');
    }
    s
}
