use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use roxmltree::{Node, ParsingOptions};
use serde::{Deserialize, Serialize};

use super::tokenize::Tokenizer;
use super::xml::{preprocess_xml, xml_to_markdown};
use super::CorpusError;

/// Abstract plus results section of one trial report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialDocument {
    pub id: String,
    #[serde(default)]
    pub abstract_xml: String,
    #[serde(default)]
    pub results_xml: String,
    pub markdown: String,
    pub token_count: usize,
}

impl TrialDocument {
    /// Preprocesses both sections and renders them to markdown. A section
    /// whose markdown does not open with a heading gets one, so the two
    /// parts stay distinguishable.
    pub fn from_sections(
        id: &str,
        abstract_xml: &str,
        results_xml: &str,
        tokenizer: &dyn Tokenizer,
    ) -> Result<TrialDocument, CorpusError> {
        let mut parts = Vec::new();
        let mut compact = [String::new(), String::new()];
        for (slot, (name, raw)) in [("Abstract", abstract_xml), ("Results", results_xml)]
            .into_iter()
            .enumerate()
        {
            if raw.trim().is_empty() {
                continue;
            }
            let xml = preprocess_xml(raw)?;
            let md = xml_to_markdown(&xml)?;
            let md = md.trim_end();
            if md.starts_with('#') {
                parts.push(md.to_string());
            } else if md.is_empty() {
                parts.push(format!("# {name}"));
            } else {
                parts.push(format!("# {name}\n\n{md}"));
            }
            compact[slot] = xml;
        }
        let [abstract_xml, results_xml] = compact;
        let markdown = if parts.is_empty() {
            String::new()
        } else {
            parts.join("\n\n") + "\n"
        };
        Ok(TrialDocument {
            id: id.to_string(),
            token_count: tokenizer.count(&markdown),
            abstract_xml,
            results_xml,
            markdown,
        })
    }

    pub fn from_markdown(id: &str, markdown: &str, tokenizer: &dyn Tokenizer) -> TrialDocument {
        TrialDocument {
            id: id.to_string(),
            abstract_xml: String::new(),
            results_xml: String::new(),
            markdown: markdown.to_string(),
            token_count: tokenizer.count(markdown),
        }
    }

    /// Reads a whole article (or a `<document><abstract/><results/></document>`
    /// wrapper) and keeps the abstract and results sections.
    pub fn from_article_xml(id: &str, xml: &str, tokenizer: &dyn Tokenizer) -> Result<TrialDocument, CorpusError> {
        let (abstract_xml, results_xml) = extract_sections(xml)?;
        TrialDocument::from_sections(id, &abstract_xml, &results_xml, tokenizer)
    }
}

fn is_results(node: Node) -> bool {
    let name = node.tag_name().name();
    if name.eq_ignore_ascii_case("results") {
        return true;
    }
    if name != "sec" {
        return false;
    }
    if node
        .attribute("sec-type")
        .is_some_and(|t| t.to_ascii_lowercase().contains("results"))
    {
        return true;
    }
    node.children()
        .find(|c| c.has_tag_name("title"))
        .map(|t| {
            let text: String = t.descendants().filter_map(|d| d.text()).collect();
            text.trim().to_ascii_lowercase().starts_with("result")
        })
        .unwrap_or(false)
}

/// Raw XML of the abstract and the results section(s).
///
/// Results sections nested inside another results section are not repeated.
/// When neither part is found the whole document is returned as results.
pub fn extract_sections(xml: &str) -> Result<(String, String), CorpusError> {
    let opts = ParsingOptions {
        allow_dtd: true,
        ..ParsingOptions::default()
    };
    let doc = roxmltree::Document::parse_with_options(xml, opts).map_err(|e| CorpusError::Xml {
        line: e.pos().row,
        column: e.pos().col,
        message: e.to_string(),
    })?;
    let abstract_xml = doc
        .descendants()
        .find(|n| n.has_tag_name("abstract"))
        .map(|n| xml[n.range()].to_string())
        .unwrap_or_default();
    let results: Vec<&str> = doc
        .descendants()
        .filter(|n| n.is_element() && is_results(*n))
        .filter(|n| !n.ancestors().skip(1).any(is_results))
        .map(|n| &xml[n.range()])
        .collect();
    let results_xml = match results.len() {
        0 if abstract_xml.is_empty() => xml[doc.root_element().range()].to_string(),
        0 => String::new(),
        1 => results[0].to_string(),
        _ => format!("<results>{}</results>", results.concat()),
    };
    Ok((abstract_xml, results_xml))
}

/// Loads every `<id>.md` and `<id>.xml` in `dir`, keyed by id. Markdown wins
/// when both exist.
pub fn load_documents(dir: &Path, tokenizer: &dyn Tokenizer) -> Result<BTreeMap<String, TrialDocument>, CorpusError> {
    let entries = fs::read_dir(dir).map_err(|e| CorpusError::io(dir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();

    let mut docs = BTreeMap::new();
    for path in paths {
        let (Some(stem), Some(ext)) = (
            path.file_stem().and_then(|s| s.to_str()),
            path.extension().and_then(|s| s.to_str()),
        ) else {
            continue;
        };
        let text = || fs::read_to_string(&path).map_err(|e| CorpusError::io(&path, e));
        let doc = match ext.to_ascii_lowercase().as_str() {
            "md" => TrialDocument::from_markdown(stem, &text()?, tokenizer),
            "xml" if !docs.contains_key(stem) => {
                TrialDocument::from_article_xml(stem, &text()?, tokenizer).map_err(|e| CorpusError::Document {
                    path: path.clone(),
                    message: e.to_string(),
                })?
            }
            _ => continue,
        };
        docs.insert(stem.to_string(), doc);
    }
    Ok(docs)
}
