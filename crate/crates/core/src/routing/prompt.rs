//! Training-free routing through an external instruction-following model.

use serde::{Deserialize, Serialize};

use super::{RouteSource, Router, RoutingDecision};
use crate::error::{Error, Result};
use crate::pathway::{pathway_parse, GranularityScheme, Pathway};
use crate::service::LineService;

pub const PROMPT_VERSION: &str = "v1";

const DEFAULT7_TEMPLATE: &str = include_str!("../../assets/route_prompt_default7.v1.txt");
const EXTENDED_TEMPLATE: &str = include_str!("../../assets/route_prompt_extended.v1.txt");
const DEFINITIONS: &str = include_str!("../../assets/category_definitions.v1.txt");

fn definition(name: &str) -> &'static str {
    DEFINITIONS
        .lines()
        .find(|l| l.split(':').next() == Some(name))
        .unwrap_or_else(|| panic!("no definition for category {name}"))
}

/// Renders the routing prompt for `query`; the category list and their
/// definitions follow the scheme.
pub fn render_prompt(query: &str, scheme: GranularityScheme) -> String {
    let names: Vec<String> = scheme.pathways().into_iter().map(Pathway::prompt_name).collect();
    let definitions = names
        .iter()
        .map(|n| format!("- {}", definition(n)))
        .collect::<Vec<_>>()
        .join("\n");
    let template = match scheme {
        GranularityScheme::Default7 => DEFAULT7_TEMPLATE,
        GranularityScheme::Extended => EXTENDED_TEMPLATE,
    };
    template
        .replace("{categories}", &names.join(", "))
        .replace("{definitions}", &definitions)
        .replacen("{query}", query, 1)
        .trim_end()
        .to_string()
}

#[derive(Serialize)]
struct RouteRequest<'a> {
    op: &'static str,
    prompt: &'a str,
    query: &'a str,
}

#[derive(Deserialize)]
struct RouteReply {
    label: String,
}

fn parse_reply(reply: &str, scheme: GranularityScheme) -> Result<RoutingDecision> {
    let parsed: RouteReply = serde_json::from_str(reply).map_err(|e| Error::MalformedReply(format!("{e}: {reply}")))?;
    let label = parsed.label.trim().trim_end_matches('.').trim();
    let pathways = pathway_parse(label, scheme)?;
    Ok(RoutingDecision::certain(pathways, RouteSource::Prompt))
}

/// Sends the rendered prompt to `client` and parses the returned label.
/// A malformed or unparseable reply is retried once; transport failures
/// are returned immediately.
pub fn route_prompt(client: &dyn LineService, query: &str, scheme: GranularityScheme) -> Result<RoutingDecision> {
    let prompt = render_prompt(query, scheme);
    let request = serde_json::to_string(&RouteRequest {
        op: "route",
        prompt: &prompt,
        query,
    })
    .map_err(|e| Error::json("route request", e))?;

    let mut last_err = None;
    for _ in 0..2 {
        let reply = client.call(&request)?;
        match parse_reply(&reply, scheme) {
            Ok(d) => return Ok(d),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("two attempts made"))
}

pub struct PromptRouter {
    client: Box<dyn LineService>,
    scheme: GranularityScheme,
}

impl PromptRouter {
    pub fn new(client: Box<dyn LineService>, scheme: GranularityScheme) -> Self {
        Self { client, scheme }
    }
}

impl Router for PromptRouter {
    fn route(&self, query: &str) -> Result<RoutingDecision> {
        route_prompt(self.client.as_ref(), query, self.scheme)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathway::{Granularity::*, PathwaySet};
    use crate::service::{tests::script, ExecService, FnService};
    use crate::synth::prompt_seed_examples;
    use std::sync::atomic::{AtomicUsize, Ordering};

    /// Answers with the gold label of the seed example matching the query.
    fn lookup_mock() -> FnService<impl Fn(&str) -> Result<String> + Send + Sync> {
        let seeds = prompt_seed_examples();
        FnService(move |req: &str| {
            let v: serde_json::Value = serde_json::from_str(req).unwrap();
            assert_eq!(v["op"], "route");
            let query = v["query"].as_str().unwrap();
            assert!(v["prompt"].as_str().unwrap().contains(query));
            let ex = seeds.iter().find(|e| e.query == query).expect("seed query");
            let label = ex.labels.iter().map(|p| p.prompt_name()).collect::<Vec<_>>().join("+");
            Ok(serde_json::json!({ "label": label }).to_string())
        })
    }

    #[test]
    fn default_prompt_renders_categories_and_query() {
        let p = render_prompt("Where is Tokyo?", GranularityScheme::Default7);
        assert!(p.starts_with(
            "Classify the following query into one or more categories from: [No, Paragraph, Document, Table, Image, Clip, Video]"
        ));
        assert!(p.contains("- Clip: The query targets a short, specific moment"));
        assert!(!p.contains("Passage:"));
        assert!(p.contains("\"Solve 12 × 8.\" → No"));
        assert!(p.ends_with("Classify the following query: Where is Tokyo?\nProvide only the category or categories combined with '+'."));
    }

    #[test]
    fn extended_prompt_lists_all_levels() {
        let p = render_prompt("q", GranularityScheme::Extended);
        assert!(p.contains(
            "[No, Paragraph, Passage, Section, Document, Table, Image, Clip, Sequence, Segment, Video]"
        ));
        assert!(p.contains("- Segment: The query targets a longer portion of a video (about 30 minutes)"));
        assert!(p.contains("\"Analyze how Argentina won the 2022 World Cup.\" → Video"));
    }

    #[test]
    fn query_text_is_not_template_expanded() {
        let p = render_prompt("{categories} {query}", GranularityScheme::Default7);
        assert!(p.contains("Classify the following query: {categories} {query}\n"));
    }

    #[test]
    fn routes_seed_examples() {
        let mock = lookup_mock();
        let d = route_prompt(&mock, "What is the capital of France?", GranularityScheme::Default7).unwrap();
        assert_eq!(d.pathways, PathwaySet::from([Pathway::None]));
        assert_eq!(d.source, RouteSource::Prompt);
        let d = route_prompt(
            &mock,
            "Describe the visual appearance and habitat of the blue whale.",
            GranularityScheme::Default7,
        )
        .unwrap();
        assert_eq!(d.pathways, PathwaySet::from([Pathway::Target(Paragraph), Pathway::Target(Image)]));
        assert_eq!(d.confidence(), 1.0);
    }

    #[test]
    fn malformed_reply_retried_once_then_error() {
        let calls = AtomicUsize::new(0);
        let banana = FnService(|_: &str| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok("{\"label\":\"Banana\"}".to_string())
        });
        let err = route_prompt(&banana, "q", GranularityScheme::Default7).unwrap_err();
        assert!(err.to_string().contains("unknown label"), "{err}");
        assert_eq!(calls.load(Ordering::SeqCst), 2);

        let calls = AtomicUsize::new(0);
        let flaky = FnService(|_: &str| {
            let n = calls.fetch_add(1, Ordering::SeqCst);
            Ok(if n == 0 { "not json".to_string() } else { "{\"label\":\"Table.\"}".to_string() })
        });
        let d = route_prompt(&flaky, "q", GranularityScheme::Default7).unwrap();
        assert_eq!(d.pathways, PathwaySet::from([Pathway::Target(Table)]));
    }

    #[test]
    fn transport_failure_is_not_retried() {
        let calls = AtomicUsize::new(0);
        let down = FnService(|_: &str| {
            calls.fetch_add(1, Ordering::SeqCst);
            Err(Error::Transport("connection refused".into()))
        });
        assert!(matches!(route_prompt(&down, "q", GranularityScheme::Default7), Err(Error::Transport(_))));
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn outcome_independent_of_framing() {
        let dir = tempfile::tempdir().unwrap();
        let path = script(
            dir.path(),
            "router.sh",
            "while IFS= read -r line; do sleep 0.05; echo '{\"label\":\"Paragraph+Clip\"}'; done",
        );
        let piped = ExecService::new(path.display().to_string(), vec![]);
        let inproc = FnService(|_: &str| Ok("{\"label\":\"Paragraph+Clip\"}".to_string()));
        let q = "Describe the moment of the moon landing and explain the mission details.";
        let a = route_prompt(&piped, q, GranularityScheme::Default7).unwrap();
        let b = route_prompt(&inproc, q, GranularityScheme::Default7).unwrap();
        assert_eq!(a, b);
    }
}
