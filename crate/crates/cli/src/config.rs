//! `--config FILE` support: the file's `key value` lines become flags placed
//! right after the subcommand, ahead of the command line's own flags.

use std::ffi::OsString;

const SUBCOMMANDS: [&str; 5] = ["gradcheck", "sweep", "track", "joint", "wav-info"];

/// Flags from a config file. Blank lines and `#` comments are skipped; a
/// bare key is a switch; `key = value` is accepted as well as `key value`.
pub fn parse(text: &str) -> Result<Vec<String>, String> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = match line.split_once(|c: char| c == '=' || c.is_whitespace()) {
            Some((k, v)) => (k.trim(), Some(v.trim().trim_start_matches('=').trim())),
            None => (line, None),
        };
        let key = key.trim_start_matches("--");
        if key.is_empty() || key == "config" {
            return Err(format!("config line {}: bad key in {raw:?}", n + 1));
        }
        out.push(format!("--{key}"));
        if let Some(v) = value.filter(|v| !v.is_empty()) {
            out.push(v.to_string());
        }
    }
    Ok(out)
}

/// Removes `--config FILE` from `args` and splices the file's flags in after
/// the subcommand. Later occurrences win, so command-line flags override.
pub fn expand(args: Vec<OsString>) -> Result<Vec<OsString>, String> {
    let mut rest = Vec::with_capacity(args.len());
    let mut path = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy().into_owned();
        if s == "--config" {
            path = Some(it.next().ok_or("--config needs a file")?);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(OsString::from(p));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else {
        return Ok(rest);
    };
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.to_string_lossy()))?;
    let extra = parse(&text)?;
    let at = rest
        .iter()
        .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        .map(|i| i + 1)
        .unwrap_or(rest.len());
    rest.splice(at..at, extra.into_iter().map(OsString::from));
    Ok(rest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn os(v: &[&str]) -> Vec<OsString> {
        v.iter().map(OsString::from).collect()
    }

    #[test]
    fn parses_lines() {
        let got = parse("# comment\nseed 7\n\nlr = 0.5\ncorrupt\n--iters 3 # trailing\n").unwrap();
        assert_eq!(got, vec!["--seed", "7", "--lr", "0.5", "--corrupt", "--iters", "3"]);
    }

    #[test]
    fn rejects_nested_config() {
        assert!(parse("config other.txt").is_err());
    }

    #[test]
    fn splices_after_subcommand() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        std::fs::write(&file, "seed 7\nlr 0.5\n").unwrap();
        let args = os(&["dstft", "--config", file.to_str().unwrap(), "track", "--lr", "2"]);
        let got = expand(args).unwrap();
        assert_eq!(got, os(&["dstft", "track", "--seed", "7", "--lr", "0.5", "--lr", "2"]));
    }

    #[test]
    fn missing_file_is_an_error() {
        assert!(expand(os(&["dstft", "track", "--config", "/nonexistent/x.cfg"])).is_err());
        assert!(expand(os(&["dstft", "track", "--config"])).is_err());
    }
}
