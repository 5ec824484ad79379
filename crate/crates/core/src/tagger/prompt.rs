use crate::error::{Error, Result};

const QUERY_SLOT: &str = "{input prompt}";

/// Tagging prompt. `{input prompt}` is replaced by the query text.
pub const PROMPT_TEMPLATE: &str = r#"The capabilities of Language Models include the following:

- Reasoning: Ability to logically analyze information, draw conclusions, and make inferences.
- Comprehension (Applicable to queries involving long passage comprehension): Understanding and interpreting the meaning, context, and nuances of extended or complex long-context text, such as lengthy documents, multi-paragraph inputs, or intricate narratives.
- Instruction Following (Applicable to queries involving several constraints): Accurately adhering to explicit user-provided guidelines, constraints, or formatting requirements specified within the query.
- Agentic: Capacity related to agent-like behavior, such as actively formulating plans, strategically deciding steps, and autonomously identifying solutions or actions to achieve specific goals or complex tasks.
- Knowledge Retrieval: Accessing and presenting accurate factual information from pre-existing knowledge.
- Coding: Generating, interpreting, or debugging computer programs and scripts.
- In-context Learning: Learning from examples or context provided within the current interaction without additional training.
- Multilingual (Must rank it in top3 when queries involving languages other than English): Understanding, generating, or translating content accurately across multiple languages.
Given the Query below:

1. Identify and list the *LLM Capabilities* from the definitions above that are directly and significantly required to effectively address the query.
2. Identify and list the general *Knowledge Domains* (e.g., categories, subject areas) most pertinent to solving the problem presented in the query.
List the selected Capabilities first, ranked from most important to least important. Then, list the identified Knowledge Domains, also ranked from most important to least important. *Do not provide any justification or explanation* for your selections or rankings.

Example:
Query: "{Solve the following financial problem efficiently and clearly. Output the final answer as: boxed{answer}.
Where [answer] is just the final number or expression that solves the problem. Keep the answer to five decimal places if it is a number, and do not use percentages; keep the decimal format.
Problem: what is the net change in net revenue during 2016 for Entergy Mississippi, Inc.? the 2015 net revenue of amount (in millions) is 696.3; the 2016 net revenue of amount (in millions) is 705.4; Entergy Mississippi, Inc.}"
Capabilities: Reasoning, Knowledge retrieval
Knowledge: {
1. Financial
2. Math
3. Data Analysis
...
}
Query: {input prompt}"#;

/// Appended to the prompt when the first response could not be parsed.
pub const FORMAT_REMINDER: &str = "\n\nAnswer using exactly this format and nothing else:\nCapabilities: <comma-separated capabilities>\nKnowledge: {\n1. <domain>\n2. <domain>\n}";

pub fn render_prompt(query: &str) -> Result<String> {
    if query.trim().is_empty() {
        return Err(Error::InvalidQuery("query text is empty".into()));
    }
    Ok(PROMPT_TEMPLATE.replacen(QUERY_SLOT, query, 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slot_appears_once_at_the_end() {
        assert_eq!(PROMPT_TEMPLATE.matches(QUERY_SLOT).count(), 1);
        assert!(PROMPT_TEMPLATE.ends_with(QUERY_SLOT));
    }

    #[test]
    fn render_substitutes_query() {
        let p = render_prompt("What is 2+2?").unwrap();
        assert!(p.ends_with("Query: What is 2+2?"));
        assert!(!p.contains(QUERY_SLOT));
        assert_eq!(p, render_prompt("What is 2+2?").unwrap());
        assert!(matches!(render_prompt("  "), Err(Error::InvalidQuery(_))));
    }
}
