use std::collections::HashSet;
use std::path::Path;

use scraper::{ElementRef, Html, Selector};
use serde::{Deserialize, Serialize};
use url::Url;

use super::FetchError;

/// CSS selection rules for one engine's results page layout.
///
/// Stored as TOML next to the study config, one file per engine and layout
/// version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectorProfile {
    pub profile_id: String,
    #[serde(default = "default_version")]
    pub version: u32,
    /// One match per organic result.
    pub container: String,
    /// The result link, relative to the container.
    pub link: String,
    #[serde(default = "default_link_attr")]
    pub link_attr: String,
    /// Title element; the link text is used when absent.
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub snippet: Option<String>,
    /// Containers matching, or nested inside, any of these are dropped.
    #[serde(default)]
    pub exclude: Vec<String>,
    /// Fallback base for relative links when the page has no `<base href>`.
    #[serde(default)]
    pub base_url: Option<String>,
}

fn default_version() -> u32 {
    1
}

fn default_link_attr() -> String {
    "href".to_string()
}

impl SelectorProfile {
    pub fn load(path: &Path) -> Result<SelectorProfile, FetchError> {
        let text = std::fs::read_to_string(path).map_err(|source| FetchError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text)
            .map_err(|e| FetchError::Setup(format!("selector profile {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SerpItem {
    pub url: String,
    pub title: String,
    pub snippet: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedSerp {
    /// Organic results in document order.
    pub items: Vec<SerpItem>,
    /// Containers that had no usable link.
    pub skipped: usize,
    /// Containers dropped by exclusion rules.
    pub excluded: usize,
}

fn selector(profile: &SelectorProfile, css: &str) -> Result<Selector, FetchError> {
    Selector::parse(css).map_err(|e| {
        FetchError::Setup(format!(
            "selector profile {}: invalid selector {css:?}: {e}",
            profile.profile_id
        ))
    })
}

fn text_of(el: ElementRef<'_>) -> String {
    el.text().collect::<String>().trim().to_string()
}

/// Extracts organic `(url, title, snippet)` triples from a results page.
///
/// `page_url` resolves relative links when neither the page's `<base href>`
/// nor the profile's `base_url` is set.
pub fn parse_serp_html(
    page: &str,
    profile: &SelectorProfile,
    page_url: Option<&str>,
) -> Result<ParsedSerp, FetchError> {
    let container_sel = selector(profile, &profile.container)?;
    let link_sel = selector(profile, &profile.link)?;
    let title_sel = profile
        .title
        .as_deref()
        .map(|css| selector(profile, css))
        .transpose()?;
    let snippet_sel = profile
        .snippet
        .as_deref()
        .map(|css| selector(profile, css))
        .transpose()?;
    let exclude_sels = profile
        .exclude
        .iter()
        .map(|css| selector(profile, css))
        .collect::<Result<Vec<_>, _>>()?;

    let doc = Html::parse_document(page);
    let containers: Vec<ElementRef<'_>> = doc.select(&container_sel).collect();
    if containers.is_empty() {
        return Err(FetchError::ProfileMismatch {
            profile: profile.profile_id.clone(),
        });
    }

    let base_sel = Selector::parse("base[href]").expect("static selector");
    let base = doc
        .select(&base_sel)
        .next()
        .and_then(|b| b.value().attr("href"))
        .map(str::to_string)
        .or_else(|| profile.base_url.clone())
        .or_else(|| page_url.map(str::to_string))
        .and_then(|b| Url::parse(&b).ok());

    let excluded_ids: HashSet<_> = exclude_sels
        .iter()
        .flat_map(|s| doc.select(s).map(|e| e.id()))
        .collect();
    let container_ids: HashSet<_> = containers.iter().map(|c| c.id()).collect();

    let mut parsed = ParsedSerp::default();
    for container in containers {
        if container.ancestors().any(|a| container_ids.contains(&a.id())) {
            // nested inside another matched container
            continue;
        }
        let excluded = excluded_ids.contains(&container.id())
            || container.ancestors().any(|a| excluded_ids.contains(&a.id()));
        if excluded {
            parsed.excluded += 1;
            continue;
        }
        let Some(link) = container.select(&link_sel).next() else {
            parsed.skipped += 1;
            continue;
        };
        let href = link.value().attr(&profile.link_attr).unwrap_or("").trim();
        // absolute links are stored exactly as the page presents them
        let url = match Url::parse(href) {
            _ if href.is_empty() => None,
            Ok(_) => Some(href.to_string()),
            Err(url::ParseError::RelativeUrlWithoutBase) => base
                .as_ref()
                .and_then(|b| b.join(href).ok())
                .map(String::from),
            Err(_) => None,
        };
        let Some(url) = url else {
            parsed.skipped += 1;
            continue;
        };
        let title = match &title_sel {
            Some(sel) => container.select(sel).next().map(text_of).unwrap_or_default(),
            None => text_of(link),
        };
        let snippet = snippet_sel
            .as_ref()
            .and_then(|sel| container.select(sel).next())
            .map(text_of)
            .unwrap_or_default();
        parsed.items.push(SerpItem {
            url,
            title,
            snippet,
        });
    }
    Ok(parsed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> SelectorProfile {
        toml::from_str(
            r##"
profile_id = "test"
container = "div.g"
link = "h3.r > a"
title = "h3.r"
snippet = "span.st"
exclude = ["#tads", ".ad"]
"##,
        )
        .unwrap()
    }

    #[test]
    fn empty_document_is_a_profile_mismatch() {
        let err = parse_serp_html("", &profile(), None).unwrap_err();
        assert!(matches!(err, FetchError::ProfileMismatch { .. }));
        assert!(!err.is_retryable());
    }

    #[test]
    fn relative_links_resolve_against_base() {
        let page = r#"<html><head><base href="https://www.google.com/"></head><body>
            <div class="g"><h3 class="r"><a href="/url?q=https://a.example/">A</a></h3><span class="st">one</span></div>
            <div class="g"><h3 class="r"><a href="https://b.example/x">B</a></h3></div>
            <div class="g"><h3 class="r">no link</h3></div>
            </body></html>"#;
        let parsed = parse_serp_html(page, &profile(), None).unwrap();
        assert_eq!(parsed.items.len(), 2);
        assert_eq!(parsed.items[0].url, "https://www.google.com/url?q=https://a.example/");
        assert_eq!(parsed.items[0].snippet, "one");
        assert_eq!(parsed.items[1].url, "https://b.example/x");
        assert_eq!(parsed.items[1].snippet, "");
        assert_eq!(parsed.skipped, 1);
    }

    #[test]
    fn relative_link_without_any_base_is_skipped() {
        let page = r#"<div class="g"><h3 class="r"><a href="/x">X</a></h3></div>"#;
        let parsed = parse_serp_html(page, &profile(), None).unwrap();
        assert!(parsed.items.is_empty());
        assert_eq!(parsed.skipped, 1);
        let parsed = parse_serp_html(page, &profile(), Some("https://e.example/search")).unwrap();
        assert_eq!(parsed.items[0].url, "https://e.example/x");
    }

    #[test]
    fn exclusions_apply_to_container_and_ancestors() {
        let page = r#"<div id="tads"><div class="g"><h3 class="r"><a href="https://ad.example/">Ad</a></h3></div></div>
            <div class="g ad"><h3 class="r"><a href="https://ad2.example/">Ad</a></h3></div>
            <div class="g"><h3 class="r"><a href="https://organic.example/">Organic</a></h3></div>"#;
        let parsed = parse_serp_html(page, &profile(), None).unwrap();
        assert_eq!(parsed.excluded, 2);
        assert_eq!(parsed.items.len(), 1);
        assert_eq!(parsed.items[0].title, "Organic");
    }

    #[test]
    fn invalid_selector_is_a_setup_error() {
        let mut p = profile();
        p.container = "div[".into();
        assert!(matches!(
            parse_serp_html("<p></p>", &p, None),
            Err(FetchError::Setup(_))
        ));
    }
}
