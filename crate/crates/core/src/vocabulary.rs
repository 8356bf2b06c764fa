//! Controlled vocabulary registry: prefix table, CURIE expansion and
//! taxonomy membership over the shipped DPV term subset.
//!
//! The registry is loaded from a versioned data file rather than fetched
//! live, so validation results are reproducible offline. Both the registry
//! and the prefix table are immutable after load.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use thiserror::Error;

const REGISTRY_DATA: &str = include_str!("../data/registry.txt");

#[derive(Debug, Error, PartialEq)]
pub enum VocabularyError {
    #[error("unknown prefix '{0}'")]
    UnknownPrefix(String),
    #[error("malformed curie '{0}'")]
    MalformedCurie(String),
    #[error("unknown term '{0}'")]
    UnknownTerm(String),
    #[error("registry parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("two prefixes map to the same namespace '{0}'")]
    DuplicateNamespace(String),
    #[error("subtype cycle involving '{0}'")]
    SubtypeCycle(String),
}

/// Ordered map from prefix to namespace IRI.
#[derive(Debug, Clone, Default)]
pub struct PrefixTable {
    entries: Vec<(String, String)>,
}

impl PrefixTable {
    pub fn insert(&mut self, prefix: &str, namespace: &str) -> Result<(), VocabularyError> {
        if self.entries.iter().any(|(p, ns)| ns == namespace && p != prefix) {
            return Err(VocabularyError::DuplicateNamespace(namespace.to_owned()));
        }
        if let Some(entry) = self.entries.iter_mut().find(|(p, _)| p == prefix) {
            entry.1 = namespace.to_owned();
        } else {
            self.entries.push((prefix.to_owned(), namespace.to_owned()));
        }
        Ok(())
    }

    pub fn namespace(&self, prefix: &str) -> Option<&str> {
        self.entries.iter().find(|(p, _)| p == prefix).map(|(_, ns)| ns.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    /// Expand a CURIE to an absolute IRI. Absolute IRIs pass through.
    pub fn expand(&self, curie: &str) -> Result<String, VocabularyError> {
        if is_absolute_iri(curie) {
            return Ok(curie.to_owned());
        }
        let (prefix, local) = curie
            .split_once(':')
            .ok_or_else(|| VocabularyError::MalformedCurie(curie.to_owned()))?;
        if local.is_empty() || local.contains(':') {
            return Err(VocabularyError::MalformedCurie(curie.to_owned()));
        }
        let ns = self
            .namespace(prefix)
            .ok_or_else(|| VocabularyError::UnknownPrefix(prefix.to_owned()))?;
        Ok(format!("{ns}{local}"))
    }

    /// Compact an IRI using the longest matching registered namespace.
    /// IRIs under no registered namespace are returned unchanged.
    pub fn compact(&self, iri: &str) -> String {
        let mut best: Option<(&str, &str)> = None;
        for (prefix, ns) in &self.entries {
            if let Some(local) = iri.strip_prefix(ns.as_str()) {
                if local.is_empty() {
                    continue;
                }
                match best {
                    Some((_, best_ns)) if best_ns.len() >= ns.len() => {}
                    _ => best = Some((prefix, ns)),
                }
            }
        }
        match best {
            Some((prefix, ns)) => format!("{prefix}:{}", &iri[ns.len()..]),
            None => iri.to_owned(),
        }
    }
}

pub fn is_absolute_iri(value: &str) -> bool {
    value.contains("://") || value.starts_with("urn:") || value.starts_with("mailto:")
}

#[derive(Debug, Clone)]
pub struct TermEntry {
    pub curie: String,
    pub iri: String,
    /// IRI of the taxonomy root this term belongs to.
    pub taxonomy: String,
    /// IRIs of direct parents (subtype edges).
    pub parents: Vec<String>,
}

#[derive(Debug)]
pub struct Registry {
    prefixes: PrefixTable,
    terms: Vec<TermEntry>,
    by_iri: HashMap<String, usize>,
}

impl Registry {
    pub fn parse(text: &str) -> Result<Registry, VocabularyError> {
        let mut prefixes = PrefixTable::default();
        let mut terms: Vec<TermEntry> = Vec::new();
        let mut by_iri = HashMap::new();

        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| VocabularyError::Parse { line: idx + 1, message };
            if let Some(rest) = line.strip_prefix("@prefix ") {
                let mut parts = rest.split_whitespace();
                let prefix = parts.next().ok_or_else(|| err("missing prefix".into()))?;
                let ns = parts.next().ok_or_else(|| err("missing namespace".into()))?;
                prefixes.insert(prefix, ns)?;
                continue;
            }
            let mut parts = line.split_whitespace();
            let curie = parts.next().ok_or_else(|| err("missing curie".into()))?;
            let taxonomy = parts.next().ok_or_else(|| err("missing taxonomy root".into()))?;
            let parents_field = parts.next().ok_or_else(|| err("missing parent list".into()))?;
            let iri = prefixes.expand(curie)?;
            let taxonomy_iri = prefixes.expand(taxonomy)?;
            let parents = if parents_field == "-" {
                Vec::new()
            } else {
                parents_field
                    .split(',')
                    .map(|p| prefixes.expand(p))
                    .collect::<Result<Vec<_>, _>>()?
            };
            if by_iri.contains_key(&iri) {
                return Err(err(format!("duplicate term {curie}")));
            }
            by_iri.insert(iri.clone(), terms.len());
            terms.push(TermEntry { curie: curie.to_owned(), iri, taxonomy: taxonomy_iri, parents });
        }

        let registry = Registry { prefixes, terms, by_iri };
        registry.check_dag()?;
        Ok(registry)
    }

    /// The registry shipped with the crate.
    pub fn builtin() -> &'static Registry {
        static REGISTRY: OnceLock<Registry> = OnceLock::new();
        REGISTRY.get_or_init(|| Registry::parse(REGISTRY_DATA).expect("builtin registry is valid"))
    }

    pub fn prefixes(&self) -> &PrefixTable {
        &self.prefixes
    }

    pub fn terms(&self) -> &[TermEntry] {
        &self.terms
    }

    pub fn expand(&self, curie: &str) -> Result<String, VocabularyError> {
        self.prefixes.expand(curie)
    }

    pub fn compact(&self, iri: &str) -> String {
        self.prefixes.compact(iri)
    }

    /// Look up a term by expanded IRI or CURIE.
    pub fn term(&self, name: &str) -> Option<&TermEntry> {
        let iri = self.prefixes.expand(name).unwrap_or_else(|_| name.to_owned());
        self.by_iri.get(&iri).map(|&i| &self.terms[i])
    }

    pub fn contains(&self, name: &str) -> bool {
        self.term(name).is_some()
    }

    /// True iff `term` equals `root` or reaches it via parent edges.
    pub fn is_in_taxonomy(&self, term: &str, root: &str) -> Result<bool, VocabularyError> {
        let term = self
            .term(term)
            .ok_or_else(|| VocabularyError::UnknownTerm(term.to_owned()))?;
        let root = self
            .term(root)
            .ok_or_else(|| VocabularyError::UnknownTerm(root.to_owned()))?;
        let mut seen = HashSet::new();
        let mut stack = vec![term.iri.as_str()];
        while let Some(iri) = stack.pop() {
            if iri == root.iri {
                return Ok(true);
            }
            if !seen.insert(iri) {
                continue;
            }
            if let Some(&i) = self.by_iri.get(iri) {
                stack.extend(self.terms[i].parents.iter().map(|p| p.as_str()));
            }
        }
        Ok(false)
    }

    /// Verify the parent edges form a DAG (topological sort succeeds).
    pub fn check_dag(&self) -> Result<(), VocabularyError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            White,
            Grey,
            Black,
        }
        let mut marks = vec![Mark::White; self.terms.len()];

        fn visit(
            reg: &Registry,
            i: usize,
            marks: &mut [Mark],
        ) -> Result<(), VocabularyError> {
            match marks[i] {
                Mark::Black => return Ok(()),
                Mark::Grey => return Err(VocabularyError::SubtypeCycle(reg.terms[i].curie.clone())),
                Mark::White => {}
            }
            marks[i] = Mark::Grey;
            let parents = reg.terms[i].parents.clone();
            for parent in parents {
                if let Some(&j) = reg.by_iri.get(&parent) {
                    visit(reg, j, marks)?;
                }
            }
            marks[i] = Mark::Black;
            Ok(())
        }

        for i in 0..self.terms.len() {
            visit(self, i, &mut marks)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg() -> &'static Registry {
        Registry::builtin()
    }

    #[test]
    fn expand_known_curie() {
        assert_eq!(reg().expand("dpv:ConsentRecord").unwrap(), "https://w3id.org/dpv#ConsentRecord");
    }

    #[test]
    fn absolute_iri_passes_through() {
        assert_eq!(reg().expand("https://example.com/x").unwrap(), "https://example.com/x");
    }

    #[test]
    fn expand_errors() {
        assert_eq!(
            reg().expand("nope:Thing"),
            Err(VocabularyError::UnknownPrefix("nope".into()))
        );
        assert_eq!(reg().expand("no-separator"), Err(VocabularyError::MalformedCurie("no-separator".into())));
        assert_eq!(reg().expand("dpv:"), Err(VocabularyError::MalformedCurie("dpv:".into())));
    }

    #[test]
    fn compact_uses_longest_namespace() {
        assert_eq!(
            reg().compact("https://w3id.org/dpv/schema/dpv-27560#record"),
            "dpv-27560:record"
        );
        assert_eq!(reg().compact("https://nowhere.example/x"), "https://nowhere.example/x");
    }

    #[test]
    fn expand_compact_round_trip_over_registry() {
        for term in reg().terms() {
            assert_eq!(reg().expand(&reg().compact(&term.iri)).unwrap(), term.iri);
            assert_eq!(reg().compact(&reg().expand(&term.curie).unwrap()), term.curie);
        }
    }

    #[test]
    fn taxonomy_membership() {
        assert!(reg().is_in_taxonomy("dpv:ConsentGiven", "dpv:ConsentStatus").unwrap());
        assert!(reg().is_in_taxonomy("dpv:ConsentStatus", "dpv:ConsentStatus").unwrap());
        assert!(!reg().is_in_taxonomy("dpv:PaymentManagement", "dpv:ConsentStatus").unwrap());
        assert_eq!(
            reg().is_in_taxonomy("dpv:NoSuchTerm", "dpv:ConsentStatus"),
            Err(VocabularyError::UnknownTerm("dpv:NoSuchTerm".into()))
        );
    }

    #[test]
    fn gdpr_bases_are_consent_terms() {
        assert!(reg().is_in_taxonomy("eu-gdpr:A6-1-a", "dpv:Consent").unwrap());
        assert!(reg().is_in_taxonomy("eu-gdpr:A9-2-a", "dpv:Consent").unwrap());
        assert!(reg().is_in_taxonomy("dpv:ExpressedConsent", "dpv:Consent").unwrap());
        assert!(reg().is_in_taxonomy("dpv:ExplicitlyExpressedConsent", "dpv:Consent").unwrap());
    }

    #[test]
    fn registry_is_a_dag() {
        reg().check_dag().unwrap();
    }

    #[test]
    fn cycle_is_rejected() {
        let text = "@prefix x https://x.example/#\nx:A x:A x:B\nx:B x:A x:A\n";
        assert!(matches!(Registry::parse(text), Err(VocabularyError::SubtypeCycle(_))));
    }
}
