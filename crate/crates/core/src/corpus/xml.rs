//! XML minification, presentational-attribute stripping and markdown conversion.

use std::borrow::Cow;

use quick_xml::events::{BytesStart, Event};
use quick_xml::{Reader, Writer};
use roxmltree::{Node, NodeType, ParsingOptions};

use super::CorpusError;

/// Attributes removed by [`preprocess_xml`]. Anything not listed is kept.
///
/// Styling, alignment, sizing and rendering hints (`position`, `orientation`
/// are JATS float hints). Structural attributes such as `colspan`, `id`,
/// `sec-type` or `xlink:href` survive.
pub const PRESENTATIONAL_ATTRIBUTES: &[&str] = &[
    "style",
    "class",
    "align",
    "valign",
    "width",
    "height",
    "border",
    "cellpadding",
    "cellspacing",
    "frame",
    "rules",
    "bgcolor",
    "color",
    "face",
    "char",
    "charoff",
    "nowrap",
    "hspace",
    "vspace",
    "position",
    "orientation",
];

fn is_presentational(name: &[u8]) -> bool {
    PRESENTATIONAL_ATTRIBUTES
        .iter()
        .any(|a| a.as_bytes().eq_ignore_ascii_case(name))
}

fn parse_tree(xml: &str) -> Result<roxmltree::Document<'_>, CorpusError> {
    let opts = ParsingOptions {
        allow_dtd: true,
        ..ParsingOptions::default()
    };
    roxmltree::Document::parse_with_options(xml, opts).map_err(|e| {
        let pos = e.pos();
        CorpusError::Xml {
            line: pos.row,
            column: pos.col,
            message: e.to_string(),
        }
    })
}

/// Minifies XML and drops presentational attributes.
///
/// Whitespace-only text containing a line break or tab is formatting and is
/// removed; other text (including single spaces between inline elements) is
/// copied byte for byte, entity references untouched.
pub fn preprocess_xml(raw_xml: &str) -> Result<String, CorpusError> {
    parse_tree(raw_xml)?;

    let mut reader = Reader::from_str(raw_xml);
    reader.config_mut().check_end_names = false;
    let mut writer = Writer::new(Vec::with_capacity(raw_xml.len()));
    loop {
        let event = reader.read_event().map_err(|e| CorpusError::Xml {
            line: 0,
            column: reader.buffer_position() as u32,
            message: e.to_string(),
        })?;
        let out = match event {
            Event::Eof => break,
            Event::Start(e) => Event::Start(strip_attributes(&e)),
            Event::Empty(e) => Event::Empty(strip_attributes(&e)),
            Event::Text(t) => {
                let is_formatting = t.iter().all(|b| b.is_ascii_whitespace())
                    && t.iter().any(|&b| matches!(b, b'\n' | b'\r' | b'\t'));
                if is_formatting {
                    continue;
                }
                Event::Text(t)
            }
            other => other,
        };
        writer
            .write_event(out)
            .expect("writing to a Vec cannot fail");
    }
    Ok(String::from_utf8(writer.into_inner()).expect("input was UTF-8"))
}

fn strip_attributes(start: &BytesStart<'_>) -> BytesStart<'static> {
    let name = String::from_utf8_lossy(start.name().as_ref()).into_owned();
    let mut stripped = BytesStart::new(name);
    for attr in start.attributes().with_checks(false).flatten() {
        if is_presentational(attr.key.as_ref()) {
            continue;
        }
        let key = String::from_utf8_lossy(attr.key.as_ref()).into_owned();
        let raw = String::from_utf8_lossy(&attr.value);
        // Values are re-emitted between double quotes.
        let value: Cow<str> = if raw.contains('"') {
            Cow::Owned(raw.replace('"', "&quot;"))
        } else {
            raw
        };
        stripped.push_attribute(quick_xml::events::attributes::Attribute {
            key: quick_xml::name::QName(key.as_bytes()),
            value: Cow::Borrowed(value.as_bytes()),
        });
    }
    stripped
}

/// Elements rendered as their own markdown block.
const BLOCK_TAGS: &[&str] = &[
    "article", "front", "body", "back", "abstract", "trans-abstract", "sec", "section", "p",
    "title", "table-wrap", "table", "table-wrap-foot", "caption", "fig", "list", "list-item",
    "ul", "ol", "li", "disp-quote", "boxed-text", "statement", "fn-group", "fn", "def-list",
    "ack", "notes", "div", "h1", "h2", "h3", "h4", "h5", "h6", "results", "document",
];

/// Known tag name for `node`, or "" for anything unrecognized.
fn local(node: Node) -> &'static str {
    let name = node.tag_name().name();
    BLOCK_TAGS
        .iter()
        .chain(INLINE_TAGS)
        .find(|t| t.eq_ignore_ascii_case(name))
        .copied()
        .unwrap_or("")
}

const INLINE_TAGS: &[&str] = &["sup", "sub", "break", "br", "tr", "th", "td", "thead", "tbody", "tfoot"];

fn is_block(node: Node) -> bool {
    node.is_element()
        && node
            .descendants()
            .any(|d| d.is_element() && BLOCK_TAGS.contains(&local(d)))
}

struct Markdown {
    blocks: Vec<String>,
}

impl Markdown {
    fn push(&mut self, block: String) {
        let trimmed = block.trim();
        if !trimmed.is_empty() {
            self.blocks.push(trimmed.to_string());
        }
    }
}

/// Appends text, collapsing whitespace and keeping adjacent digit runs apart.
fn push_inline(buf: &mut String, text: &str) {
    for (i, word) in text.split_whitespace().enumerate() {
        let ws_before = i > 0 || text.starts_with(char::is_whitespace);
        let joins_digits = buf.ends_with(|c: char| c.is_ascii_digit())
            && word.starts_with(|c: char| c.is_ascii_digit());
        if (ws_before || joins_digits) && !buf.is_empty() && !buf.ends_with(' ') {
            buf.push(' ');
        }
        buf.push_str(word);
    }
    if text.ends_with(char::is_whitespace) && !buf.is_empty() && !buf.ends_with(' ') {
        buf.push(' ');
    }
}

fn inline_text(node: Node, buf: &mut String) {
    for child in node.children() {
        match child.node_type() {
            NodeType::Text => push_inline(buf, child.text().unwrap_or("")),
            NodeType::Element => inline_element(child, buf),
            _ => {}
        }
    }
}

fn inline_element(node: Node, buf: &mut String) {
    match local(node) {
        "sup" => {
            let mut inner = String::new();
            inline_text(node, &mut inner);
            let inner = inner.trim();
            if !inner.is_empty() {
                buf.push('^');
                buf.push_str(inner);
            }
        }
        "break" | "br" => push_inline(buf, " "),
        _ => inline_text(node, buf),
    }
}

fn heading_level(node: Node) -> usize {
    let secs = node
        .ancestors()
        .filter(|a| matches!(local(*a), "sec" | "section"))
        .count();
    secs.clamp(1, 6)
}

fn render_container(node: Node, out: &mut Markdown) {
    let mut buf = String::new();
    for child in node.children() {
        match child.node_type() {
            NodeType::Text => push_inline(&mut buf, child.text().unwrap_or("")),
            NodeType::Element if is_block(child) => {
                out.push(std::mem::take(&mut buf));
                render_block(child, out);
            }
            NodeType::Element => inline_element(child, &mut buf),
            _ => {}
        }
    }
    out.push(buf);
}

fn render_block(node: Node, out: &mut Markdown) {
    match local(node) {
        "title" | "h1" | "h2" | "h3" | "h4" | "h5" | "h6" => {
            let mut text = String::new();
            inline_text(node, &mut text);
            let text = text.trim();
            if text.is_empty() {
                return;
            }
            let parent = node.parent_element().map(local).unwrap_or("");
            if matches!(parent, "caption" | "fig" | "table-wrap" | "boxed-text" | "list") {
                out.push(text.to_string());
            } else {
                let level = match local(node) {
                    "title" => heading_level(node),
                    h => h[1..].parse().unwrap_or(1),
                };
                out.push(format!("{} {}", "#".repeat(level), text));
            }
        }
        "table" => render_table(node, out),
        "list" | "ul" | "ol" => {
            let items: Vec<String> = node
                .children()
                .filter(|c| matches!(local(*c), "list-item" | "li"))
                .map(|item| {
                    let mut text = String::new();
                    inline_text(item, &mut text);
                    format!("- {}", text.trim())
                })
                .collect();
            // Stray non-item content keeps its text.
            for other in node
                .children()
                .filter(|c| c.is_element() && !matches!(local(*c), "list-item" | "li"))
            {
                render_block_or_inline(other, out);
            }
            out.push(items.join("\n"));
        }
        _ => render_container(node, out),
    }
}

fn render_block_or_inline(node: Node, out: &mut Markdown) {
    if is_block(node) {
        render_block(node, out);
    } else {
        let mut text = String::new();
        inline_element(node, &mut text);
        out.push(text);
    }
}

fn cell_text(cell: Node) -> String {
    let mut text = String::new();
    inline_text(cell, &mut text);
    text.trim().replace('|', "\\|")
}

fn render_table(table: Node, out: &mut Markdown) {
    for caption in table.children().filter(|c| local(*c) == "caption") {
        render_block(caption, out);
    }
    let rows: Vec<(bool, Vec<String>)> = table
        .descendants()
        .filter(|d| local(*d) == "tr")
        .map(|tr| {
            let in_head = tr.parent_element().map(local) == Some("thead");
            let cells = tr
                .children()
                .filter(|c| matches!(local(*c), "td" | "th"))
                .map(cell_text)
                .collect();
            (in_head, cells)
        })
        .collect();
    if rows.is_empty() {
        return;
    }
    let columns = rows.iter().map(|(_, c)| c.len()).max().unwrap_or(0).max(1);
    let format_row = |cells: &[String]| {
        let mut line = String::from("|");
        for i in 0..columns {
            line.push(' ');
            line.push_str(cells.get(i).map(String::as_str).unwrap_or(""));
            line.push_str(" |");
        }
        line
    };

    let mut lines = Vec::with_capacity(rows.len() + 2);
    let data_start = if rows[0].0 {
        lines.push(format_row(&rows[0].1));
        1
    } else {
        lines.push(format_row(&[]));
        0
    };
    lines.push(format!("|{}", " --- |".repeat(columns)));
    for (_, cells) in &rows[data_start..] {
        lines.push(format_row(cells));
    }
    out.push(lines.join("\n"));
}

/// Converts (preprocessed) XML into markdown.
///
/// Section titles become `#` headings whose level is the number of enclosing
/// `sec` elements (at least 1). Tables become pipe tables: a `thead` row is
/// used as the header, otherwise an empty header row is emitted so every
/// source row stays a data row. Superscripts render as `^n`.
pub fn xml_to_markdown(compact_xml: &str) -> Result<String, CorpusError> {
    let doc = parse_tree(compact_xml)?;
    let mut out = Markdown { blocks: Vec::new() };
    let root = doc.root_element();
    render_block_or_inline(root, &mut out);
    if out.blocks.is_empty() {
        return Ok(String::new());
    }
    let mut md = out.blocks.join("\n\n");
    md.push('\n');
    Ok(md)
}
