"""Prompt templates and placeholder rendering.

Template bodies are plain-text transcriptions of the reference prompts:
LaTeX line breaks are dropped, quotes and escaped braces are rendered as
ASCII, and trailing whitespace is stripped.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping

from .core import LabeledSample, SynthRecord, label_to_answer, serialize_response

PLACEHOLDER = re.compile(r"\[(DOCUMENT|CLAIM|EXPLANATION|Tested Sample|CONTEXT|SENTENCE|CoT|Explanation|Answer"
                         r"|Task Instruction|Explanation_Text)\]")


class MissingBinding(KeyError):
    def __init__(self, placeholder: str):
        super().__init__(placeholder)
        self.placeholder = placeholder

    def __str__(self):
        return f"no binding for placeholder [{self.placeholder}]"


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    body: str

    @property
    def placeholders(self) -> list[str]:
        seen: list[str] = []
        for m in PLACEHOLDER.finditer(self.body):
            if m.group(1) not in seen:
                seen.append(m.group(1))
        return seen


def render_prompt(template: PromptTemplate, bindings: Mapping[str, str]) -> str:
    for name in template.placeholders:
        if name not in bindings:
            raise MissingBinding(name)
    # single pass, so bound text containing marker-like strings is never rescanned
    return PLACEHOLDER.sub(lambda m: bindings[m.group(1)], template.body)


_INTRO = """Determine whether the provided claim is consistent with the corresponding document.

Consistency in this context implies that all information presented in the claim is substantiated by the document. If not, it should be considered inconsistent.

"""
_THINK = "- First, think step by step about whether all the information in the claim is fully supported by the document within <think> and </think> tags.\n\n"
_THEN_REASON = "- Then, please provide an easy-to-understand explanation for your answer within <reason> and </reason> tags.\n\n"
_FIRST_REASON = "- First, please provide an easy-to-understand explanation for your answer within <reason> and </reason> tags.\n\n"
_FINALLY = ("- Finally, assess the claim's consistency with the document by responding with either \"Yes\" or \"No\" "
            "and wrap your final answer in <answer> and </answer> tags.\n\n")
_DOC_CLAIM = "Document: [DOCUMENT]\n\nClaim: [CLAIM]"

DETECTION = PromptTemplate("detection", _INTRO + _THINK + _THEN_REASON + _FINALLY + _DOC_CLAIM)
SYNTHESIS = PromptTemplate("synthesis", _INTRO + _THINK + _THEN_REASON + _FINALLY + _DOC_CLAIM)
DETECTION_EXP_ONLY = PromptTemplate("detection_exp_only", _INTRO + _FIRST_REASON + _FINALLY + _DOC_CLAIM)
DETECTION_COT_ONLY = PromptTemplate("detection_cot_only", _INTRO + _THINK + _FINALLY + _DOC_CLAIM)

EXPLANATION_FILTER_WITHOUT = PromptTemplate(
    "explanation_filter_without",
    _INTRO + _THINK + _FINALLY + _DOC_CLAIM + "\n\n<think>[CoT]</think><answer>[Answer]</answer>",
)
EXPLANATION_FILTER_WITH = PromptTemplate(
    "explanation_filter_with",
    _INTRO + _THINK + _THEN_REASON + _FINALLY + _DOC_CLAIM
    + "\n\n<think>[CoT]</think><reason>[Explanation]</reason><answer>[Answer]</answer>",
)
DIVERSITY_PROBE = PromptTemplate("diversity_probe", EXPLANATION_FILTER_WITH.body)
DIVERSITY_PROBE_WITH_EXAMPLE = PromptTemplate(
    "diversity_probe_with_example",
    _INTRO + _THINK + _THEN_REASON + _FINALLY + _DOC_CLAIM
    + "\n\nExample: [Tested Sample]\n\n<think>[CoT]</think><reason>[Explanation]</reason><answer>[Answer]</answer>",
)

EXPLANATION_REWARD = PromptTemplate(
    "explanation_reward",
    _INTRO
    + "- First, please refer to the provided explanation to assist you to answer the question.\n\n"
    "- Then, please assess the claim's consistency with the document by responding with either \"Yes\" or \"No\". "
    "Please wrap your final answer in <answer> and </answer>.\n\n"
    + _DOC_CLAIM
    + "\n\nExplanation: [EXPLANATION]",
)
# Same prompt with the explanation line removed; the no-explanation side of
# the perplexity-mode reward.
EXPLANATION_REWARD_BARE = PromptTemplate(
    "explanation_reward_bare", EXPLANATION_REWARD.body.replace("\n\nExplanation: [EXPLANATION]", "")
)

JUDGE = PromptTemplate(
    "judge",
    """You are an evaluator. Another model was tasked with assessing whether a source document supports a given claim, and it successfully arrived at the correct determination based on the provided task instruction.
The model then generated an explanation for its conclusion.
Your role is to evaluate the quality of that explanation along the specified dimensions.

### Scoring Criteria:

1. Readability (1–5): The explanation should be written in a clear and well-structured manner that enables the reader to easily follow the reasoning behind the model’s conclusion. Beyond sentence fluency, focus on whether the explanation presents ideas in a logical sequence, avoids ambiguity, and makes it straightforward for the user to correctly understand why the model arrived at its prediction.

2. Helpfulness (1–5): The explanation should effectively guide the user to understand why the model arrived at its conclusion. Focus on whether the reasoning is clear and logically connected to the claim and document, enabling the user to act on, adapt, or reconsider the claim if needed.

3. Informativeness (1–5): The explanation should provide detailed, specific, and substantive information relevant to the claim and document. Focus on the richness and completeness of content, such as explicit evidence cited, nuanced reasoning, or contextual details that give a deeper understanding, even beyond what is strictly needed to justify the conclusion.

### Output Format (JSON only):

{

  "readability": <1-5>,

  "helpfulness": <1-5>,

  "informativeness": <1-5>

}

### Task Instruction (includes the claim and document):

[Task Instruction]

### Explanation to Evaluate:

[Explanation_Text]""",
)

DECONTEXTUALIZATION = PromptTemplate(
    "decontextualization",
    """You are provied with a context and a claim. Please first determine if the claim can stand alone whitout the conext. If not, provide a decontextualzied version of the claim that incorporates necessary information from the context to make it self-contained.
The revision should be as minimum as possible. Please respond with a JSON format: {"label": "yes"/"no", "decontext":
"NA"/decontextualized claim}.

Example 1:

Context: There are many reasons why poetry is important for children. Poetry can help children build confidence through memorizing and reciting poems. It can also provide an easy way for children to remember a lesson or value.

Claim: It can also provide an easy way for children to remember a lesson or value.

Answer: {"label": "no", "decontext": "Poetry can provide an easy way for children to remember a lesson or value."}


Example 2:
Context: Yes, ancient societies had concepts of rights. The concept of rights first appeared in the theory of natural law which existed in the state of nature. In this state, people enjoyed certain rights sanctioned by natural law.

Claim: In this state, people enjoyed certain rights sanctioned by natural law.

Answer: {"label": "no", "decontext": "In the state of nature, people enjoyed certain rights sanctioned by natural law"}

Example 3:

Context: The ancient Greeks had some concept of human rights, although there is no single word in classical Greek that captures the sense of "rights" as it is used in modern political thought. However, Greek customs and institutions provided protection to private property unique in the ancient world, instilling a strong sense of equality. The idea of human rights spread quickly from Babylon to Greece and eventually Rome, where the concept of "natural law" arose.

Claim: The idea of human rights spread quickly from Babylon to Greece and eventually Rome, where the concept of "natural law" arose.

Answer: {"label": "yes", "decontext": "NA"}

Your Turn:

Context: [CONTEXT]

Claim: [CLAIM]

Answer:""",
)

DECOMPOSITION = PromptTemplate(
    "decomposition",
    """Segment the following sentence into individual facts:

Sentence: Other title changes included Lord Steven Regal and The Nasty Boys winning the World Television Championship and the World Tag Team Championship respectively.

Facts:

- Lord Steven Regal won the World Television Championship.

- The Nasty Boys won the World Tag Team Championship.

Sentence: The parkway was opened in 2001 after just under a year of construction and almost two decades of community requests.

Facts:

- The parkway was opened in 2001.

- The parkway was opened after just under a year of construction.

- The parkway was opened after two decades of community requests.

Sentence: Touring began in Europe in April-June with guitarist Paul Gilbert as the opening act, followed by Australia and New Zealand in July, Mexico and South America in late July-August, and concluding in North America in October-November.

Facts:

- Touring began in Europe in April-June.

- The opening act of the tour was guitarist Paul Gilbert.

- The tour was in Australia and New Zealand in July.

- The tour was in Mexico and South America in late July-August.

- The tour was concluded in North America in October-November.

Sentence: In March 2018, the company partnered With Amazon Web Services (AWS) to offer Al-enabled conversational solutions to customers in India.

Facts:

- The company partnered with Amazon Web Services (AWS) in March 2018.

- The two companies partnered to offer Al-enabled conversational solutions to customers in India.

Sentence: The most significant of these is in Germany, which now has a Yazidi community of more than 200,000 living primarily in Hannover, Bielefeld, Celle, Bremen, Bad Oeynhausen, Pforzheim and Oldenburg.

Facts:

- The most significant of these is in Germany.

- Germany now has a Yazidi community of more than 200,000.

- Yazidi community in Germany lives primarily in Hannover, Bielefeld, Celle, Bremen, Bad Oeynhausen, Pforzheim and Oldenburg.

Sentence: A previous six-time winner of the Nations’ Cup, Sebastian Vettel became Champion of Champions for the first time, defeating Tom Kristensen, who made the final for the fourth time, 2-0.

Facts:

- Sebastian Vettel is a previous six-time winner of the Nations’ Cup.

- Sebastian Vettel became Champion of Champions for the first time, defeating Tom Kristensen, 2-0.

- Tom Kristensen made the final for the fourth time.

Sentence: [SENTENCE]

Facts:""",
)

TEMPLATES = {
    t.name: t
    for t in (
        DETECTION, SYNTHESIS, DETECTION_EXP_ONLY, DETECTION_COT_ONLY, EXPLANATION_FILTER_WITHOUT,
        EXPLANATION_FILTER_WITH, DIVERSITY_PROBE, DIVERSITY_PROBE_WITH_EXAMPLE, EXPLANATION_REWARD,
        EXPLANATION_REWARD_BARE, JUDGE, DECONTEXTUALIZATION, DECOMPOSITION,
    )
}

# Separator between a rendered instruction prompt and the model's response.
RESPONSE_SEP = "\n\n"

_DETECTION_BY_MODE = {
    "cot_exp_answer": DETECTION,
    "exp_answer": DETECTION_EXP_ONLY,
    "cot_answer": DETECTION_COT_ONLY,
}


def detection_prompt(sample: LabeledSample, mode: str = "cot_exp_answer") -> str:
    """The model input for detection; the response is generated right after it."""
    template = _DETECTION_BY_MODE[mode]
    return render_prompt(template, {"DOCUMENT": sample.doc, "CLAIM": sample.claim}) + RESPONSE_SEP


def split_at_answer(template: PromptTemplate, bindings: Mapping[str, str]) -> str:
    """Render everything before the `[Answer]` slot; the answer is scored as a continuation."""
    head, sep, _ = template.body.partition("[Answer]")
    if not sep:
        raise ValueError(f"template {template.name} has no [Answer] slot")
    return render_prompt(PromptTemplate(template.name, head), bindings)


def demonstration_text(record: SynthRecord) -> str:
    """In-context serialization of a sample: its detection prompt, a blank line, its tagged response."""
    s = record.sample
    return render_prompt(DETECTION, {"DOCUMENT": s.doc, "CLAIM": s.claim}) + RESPONSE_SEP + serialize_response(record.response)


def gold_answer(record: SynthRecord) -> str:
    return label_to_answer(record.sample.label)
