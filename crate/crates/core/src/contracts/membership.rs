use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

/// Handles approved to register. One handle per line; blank lines and
/// `#` comments are ignored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MembershipList {
    entries: BTreeSet<String>,
}

impl MembershipList {
    pub fn parse(text: &str) -> Self {
        MembershipList {
            entries: text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect(),
        }
    }

    /// A missing file is an empty list.
    pub fn load(path: impl AsRef<Path>) -> std::io::Result<Self> {
        match std::fs::read_to_string(path) {
            Ok(text) => Ok(Self::parse(&text)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e),
        }
    }

    /// Writes via a temporary file and rename so readers never see a
    /// half-written list.
    pub fn save(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            for entry in &self.entries {
                writeln!(f, "{entry}")?;
            }
            f.sync_all()?;
        }
        std::fs::rename(tmp, path)
    }

    pub fn contains(&self, handle: &str) -> bool {
        self.entries.contains(handle)
    }

    pub fn add(&mut self, handle: impl Into<String>) -> bool {
        self.entries.insert(handle.into())
    }

    pub fn remove(&mut self, handle: &str) -> bool {
        self.entries.remove(handle)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_skips_comments_and_blanks() {
        let list = MembershipList::parse("# certified\nalice@clinic.example\n\n  bob@clinic.example  \n");
        assert_eq!(list.len(), 2);
        assert!(list.contains("bob@clinic.example"));
        assert!(!list.contains("# certified"));
    }

    #[test]
    fn save_load_add_remove() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("members.txt");
        assert!(MembershipList::load(&path).unwrap().is_empty());
        let mut list = MembershipList::default();
        assert!(list.add("alice@clinic.example"));
        assert!(!list.add("alice@clinic.example"));
        list.add("+1 615 555 0100");
        list.save(&path).unwrap();
        let mut back = MembershipList::load(&path).unwrap();
        assert_eq!(back, list);
        assert!(back.remove("alice@clinic.example"));
        assert!(!back.contains("alice@clinic.example"));
    }
}
