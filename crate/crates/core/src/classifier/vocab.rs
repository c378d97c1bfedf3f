use std::collections::BTreeSet;

use super::ClassifierError;

/// Product-type labels in sorted order; the position is the class index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocab {
    labels: Vec<String>,
}

impl LabelVocab {
    pub fn new<I, S>(labels: I) -> Result<Self, ClassifierError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect::<BTreeSet<_>>().into_iter().collect();
        if labels.len() < 2 {
            return Err(ClassifierError::TooFewClasses(labels.len()));
        }
        Ok(LabelVocab { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorted_and_deduplicated() {
        let v = LabelVocab::new(["Pasta", "Energy Drinks", "Pasta"]).unwrap();
        assert_eq!(v.labels(), ["Energy Drinks", "Pasta"]);
        assert_eq!(v.index_of("Pasta"), Some(1));
        assert_eq!(v.index_of("Pool Chemicals"), None);
    }

    #[test]
    fn needs_two_classes() {
        assert!(matches!(LabelVocab::new(["a", "a"]), Err(ClassifierError::TooFewClasses(1))));
    }
}
