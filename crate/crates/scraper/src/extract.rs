//! HTML to title, body text and publication date.
//!
//! Streaming over tokenizer output: no DOM is built. Body text comes from
//! `<p>` elements outside page furniture (navigation, headers, footers,
//! asides, forms) and outside archive toolbars; if a page has no
//! paragraphs, all visible body text is used instead.

use std::cell::RefCell;

use chrono::{DateTime, NaiveDate, Utc};
use html5ever::tendril::StrTendril;
use html5ever::tokenizer::states::RawKind;
use html5ever::tokenizer::{
    BufferQueue, CharacterTokens, CommentToken, EndTag, StartTag, Tag, TagToken, Token, TokenSink, TokenSinkResult,
    Tokenizer, TokenizerOpts,
};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Extracted {
    pub title: String,
    pub body: String,
    pub published_at: Option<DateTime<Utc>>,
}

/// Elements whose content is never text (also hides headings).
const HIDDEN: &[&str] = &["script", "style", "template", "svg", "noscript", "iframe", "object"];
/// Page furniture: skipped for body text, headings inside still count.
const FURNITURE: &[&str] = &["nav", "header", "footer", "aside", "form", "menu", "button", "select"];
/// Tags that end a run of text.
const BLOCKS: &[&str] = &[
    "p",
    "div",
    "section",
    "article",
    "main",
    "br",
    "li",
    "ul",
    "ol",
    "table",
    "tr",
    "td",
    "th",
    "h1",
    "h2",
    "h3",
    "h4",
    "h5",
    "h6",
    "blockquote",
    "pre",
    "figure",
    "figcaption",
    "dl",
    "dt",
    "dd",
    "hr",
    "body",
];
const VOID: &[&str] = &[
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "param", "source", "track", "wbr",
];

const TOOLBAR_BEGIN: &str = "BEGIN WAYBACK TOOLBAR INSERT";
const TOOLBAR_END: &str = "END WAYBACK TOOLBAR INSERT";

/// Open element being skipped, with the nesting depth of its own tag name.
#[derive(Debug)]
struct Skip {
    name: String,
    depth: usize,
}

#[derive(Debug, Default)]
struct State {
    hidden: Option<Skip>,
    furniture: Option<Skip>,
    toolbar_comment: bool,
    in_body: bool,
    in_title: bool,
    title_tag: String,
    og_title: Option<String>,
    h1: Option<String>,
    h1_open: Option<String>,
    published: Option<DateTime<Utc>>,
    in_p: bool,
    run: String,
    run_in_p: bool,
    paragraphs: Vec<String>,
    visible: Vec<String>,
}

impl State {
    fn skipping_all(&self) -> bool {
        self.hidden.is_some() || self.toolbar_comment
    }

    fn flush(&mut self) {
        let text = collapse(&self.run);
        self.run.clear();
        if !text.is_empty() {
            if self.run_in_p {
                self.paragraphs.push(text.clone());
            }
            self.visible.push(text);
        }
        self.run_in_p = self.in_p;
    }

    fn text(&mut self, s: &str) {
        if self.in_title {
            self.title_tag.push_str(s);
        }
        if self.skipping_all() {
            return;
        }
        if let Some(h) = self.h1_open.as_mut() {
            h.push_str(s);
        }
        if self.in_body && self.furniture.is_none() {
            if self.run.is_empty() {
                self.run_in_p = self.in_p;
            }
            self.run.push_str(s);
        }
    }

    fn start(&mut self, tag: &Tag) -> TokenSinkResult<()> {
        let name = tag.name.to_string();
        let void = tag.self_closing || VOID.contains(&name.as_str());
        for skip in [&mut self.hidden, &mut self.furniture].into_iter().flatten() {
            if skip.name == name && !void {
                skip.depth += 1;
            }
        }
        if BLOCKS.contains(&name.as_str()) {
            self.flush();
        }
        let attr = |key: &str| {
            tag.attrs
                .iter()
                .find(|a| &*a.name.local == key)
                .map(|a| a.value.to_string())
        };
        let is_toolbar = attr("id").is_some_and(|id| id.starts_with("wm-ipp") || id == "donato");
        if !void && self.hidden.is_none() && (HIDDEN.contains(&name.as_str()) || is_toolbar) {
            self.hidden = Some(Skip {
                name: name.clone(),
                depth: 1,
            });
        } else if !void && self.furniture.is_none() && FURNITURE.contains(&name.as_str()) {
            self.furniture = Some(Skip {
                name: name.clone(),
                depth: 1,
            });
        }
        match name.as_str() {
            "body" => self.in_body = true,
            "title" if self.hidden.is_none() => {
                self.in_title = true;
                return TokenSinkResult::RawData(RawKind::Rcdata);
            }
            "p" => {
                self.in_p = true;
                self.run_in_p = true;
            }
            "h1" if self.h1.is_none() && !self.skipping_all() => self.h1_open = Some(String::new()),
            "meta" => {
                let key = attr("property")
                    .or_else(|| attr("name"))
                    .unwrap_or_default()
                    .to_lowercase();
                if let Some(content) = attr("content") {
                    match key.as_str() {
                        "og:title" if self.og_title.is_none() => self.og_title = Some(collapse(&content)),
                        "article:published_time" | "date" | "pubdate" | "publishdate" | "dc.date" => {
                            self.published = self.published.or_else(|| parse_date(&content));
                        }
                        _ => {}
                    }
                }
            }
            "time" => {
                if let Some(dt) = attr("datetime") {
                    self.published = self.published.or_else(|| parse_date(&dt));
                }
            }
            _ => {}
        }
        match name.as_str() {
            "script" => TokenSinkResult::RawData(RawKind::ScriptData),
            "style" | "xmp" | "iframe" | "noembed" | "noframes" => TokenSinkResult::RawData(RawKind::Rawtext),
            "textarea" => TokenSinkResult::RawData(RawKind::Rcdata),
            _ => TokenSinkResult::Continue,
        }
    }

    fn end(&mut self, tag: &Tag) {
        let name = tag.name.to_string();
        if BLOCKS.contains(&name.as_str()) {
            self.flush();
        }
        match name.as_str() {
            "title" => self.in_title = false,
            "p" => {
                self.in_p = false;
                self.run_in_p = false;
            }
            "h1" => {
                if let Some(h) = self.h1_open.take() {
                    let h = collapse(&h);
                    if !h.is_empty() {
                        self.h1 = Some(h);
                    }
                }
            }
            _ => {}
        }
        for slot in [&mut self.hidden, &mut self.furniture] {
            if let Some(skip) = slot {
                if skip.name == name {
                    skip.depth -= 1;
                    if skip.depth == 0 {
                        *slot = None;
                    }
                }
            }
        }
    }

    fn comment(&mut self, text: &str) {
        if text.contains(TOOLBAR_BEGIN) {
            self.flush();
            self.toolbar_comment = true;
        } else if text.contains(TOOLBAR_END) {
            self.toolbar_comment = false;
        }
    }
}

struct Sink(RefCell<State>);

impl TokenSink for Sink {
    type Handle = ();

    fn process_token(&self, token: Token, _line: u64) -> TokenSinkResult<()> {
        let mut st = self.0.borrow_mut();
        match token {
            CharacterTokens(t) => st.text(&t),
            TagToken(tag) => match tag.kind {
                StartTag => return st.start(&tag),
                EndTag => st.end(&tag),
            },
            CommentToken(c) => st.comment(&c),
            _ => {}
        }
        TokenSinkResult::Continue
    }
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn parse_date(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    DateTime::parse_from_rfc3339(s)
        .map(|d| d.with_timezone(&Utc))
        .ok()
        .or_else(|| {
            NaiveDate::parse_from_str(s.get(..10)?, "%Y-%m-%d")
                .ok()
                .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc())
        })
}

pub fn extract(html: &str) -> Extracted {
    let sink = Sink(RefCell::new(State::default()));
    let tokenizer = Tokenizer::new(sink, TokenizerOpts::default());
    let input = BufferQueue::default();
    input.push_back(StrTendril::from_slice(html));
    while let html5ever::tokenizer::TokenizerResult::Script(()) = tokenizer.feed(&input) {}
    tokenizer.end();
    let mut st = tokenizer.sink.0.into_inner();
    st.flush();
    let title = st
        .og_title
        .filter(|t| !t.is_empty())
        .or(st.h1)
        .unwrap_or_else(|| collapse(&st.title_tag));
    let blocks = if st.paragraphs.is_empty() {
        st.visible
    } else {
        st.paragraphs
    };
    Extracted {
        title,
        body: blocks.join("\n"),
        published_at: st.published,
    }
}
